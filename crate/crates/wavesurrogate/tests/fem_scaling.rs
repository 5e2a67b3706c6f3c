//! Mesh-refinement scaling of the full-order model across a 30x gap.

use wavesurrogate::analytic::WaveProblem;
use wavesurrogate::fem::{assemble, fom_mse, solve_fom};

#[test]
fn coarse_to_fine_mse_ratio_follows_fourth_order_scaling() {
    // L2 convergence is O(h²), so the MSE ratio between 100 and 3000 nodes
    // is ≈ 30⁴ within a modest factor
    let p = WaveProblem::default();
    let coarse = {
        let d = assemble(100, 100, &p).unwrap();
        fom_mse(&solve_fom(&d, &p).unwrap(), &p)
    };
    let fine = {
        let d = assemble(3000, 3000, &p).unwrap();
        fom_mse(&solve_fom(&d, &p).unwrap(), &p)
    };
    let ratio = coarse / fine;
    let target = 30f64.powi(4);
    assert!(
        ratio >= target / 4.0 && ratio <= target * 4.0,
        "MSE(100)/MSE(3000) = {ratio:.3e}, expected within 4x of {target:.3e}"
    );
}
