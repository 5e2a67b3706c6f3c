//! Certified reduced-order models built from FOM snapshots.
//!
//! POD on the displacement snapshots gives the reduced basis; Galerkin
//! projection gives the reduced operators; the same implicit-midpoint stepper
//! as the FOM integrates the reduced system. The certificate ε(t) is the
//! exact L2(Ω_ξ) error of the ROM against the FOM (times an optional safety
//! factor), which is a genuine upper bound for the error against the
//! reference the artifact treats as exact.

mod svd;

use crate::analytic::{trapezoid_weights, GridFunction, WaveProblem};
use crate::fem::{FemDiscretization, SymTridiag};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RomError {
    #[error("requested {requested} modes but the snapshot matrix has numerical rank {rank}")]
    RankExceeded { requested: usize, rank: usize },
    #[error("snapshot grid is too small for POD: {0} interior nodes")]
    GridTooSmall(usize),
    #[error("grids do not match: {0}")]
    GridMismatch(&'static str),
    #[error("safety factor must be ≥ 1, got {0}")]
    InvalidSafety(f64),
    #[error("negative error bound ε({t}) = {value}")]
    NegativeEpsilon { t: f64, value: f64 },
}

/// POD-Galerkin reduced model of the wave FOM.
#[derive(Debug, Clone)]
pub struct RomModel {
    /// Reduced basis, `n_interior × n`, column-major, orthonormal columns.
    pub basis: Vec<f64>,
    pub n_interior: usize,
    /// Reduced size.
    pub n: usize,
    /// `VᵀMV`, row-major n×n.
    pub reduced_mass: Vec<f64>,
    /// `VᵀKV`, row-major n×n.
    pub reduced_stiffness: Vec<f64>,
    /// Leading computed POD spectrum (the entire spectrum when the snapshot
    /// matrix is small enough for the dense route).
    pub singular_values: Vec<f64>,
}

/// ROM solution on the full grid together with its per-time error bound.
#[derive(Debug, Clone)]
pub struct CertifiedSurrogate {
    pub rom_solution: GridFunction,
    /// ε(tᵢ) ≥ ‖u_FOM(tᵢ) − ũ(tᵢ)‖_{L2(Ω_ξ)} for every time level.
    pub epsilon: Vec<f64>,
}

impl CertifiedSurrogate {
    /// ε at an arbitrary time by linear interpolation between snapshot times
    /// (clamped at the ends).
    pub fn epsilon_at(&self, t: f64) -> f64 {
        let ts = &self.rom_solution.t_nodes;
        let n = ts.len();
        if t <= ts[0] {
            return self.epsilon[0];
        }
        if t >= ts[n - 1] {
            return self.epsilon[n - 1];
        }
        let mut lo = 0;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if ts[mid] <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let frac = (t - ts[lo]) / (ts[lo + 1] - ts[lo]);
        self.epsilon[lo] + frac * (self.epsilon[lo + 1] - self.epsilon[lo])
    }
}

/// POD basis of the interior-node snapshot matrix plus Galerkin-reduced
/// operators. The mesh (and with it M, K) is read off the snapshot grid.
pub fn pod_basis(snapshots: &GridFunction, n: usize) -> Result<RomModel, RomError> {
    let n_xi = snapshots.n_xi();
    let n_t = snapshots.n_t();
    if n_xi < 3 {
        return Err(RomError::GridTooSmall(n_xi.saturating_sub(2)));
    }
    let m = n_xi - 2;
    if n > m.min(n_t) {
        return Err(RomError::RankExceeded {
            requested: n,
            rank: m.min(n_t),
        });
    }

    // interior snapshot matrix, rows = interior nodes, columns = time levels
    let mut s = vec![0.0; m * n_t];
    for i in 0..n_t {
        let row = snapshots.row(i);
        for j in 0..m {
            s[j * n_t + i] = row[j + 1];
        }
    }
    let svd = svd::leading_left_svd(&s, m, n_t, n);
    let sigma = svd.sigma;
    let rank_tol = m.max(n_t) as f64 * f64::EPSILON * sigma[0].max(f64::MIN_POSITIVE);
    let rank = sigma.iter().take_while(|&&x| x > rank_tol).count();
    if n > rank {
        return Err(RomError::RankExceeded { requested: n, rank });
    }
    let basis = svd.u[..m * n].to_vec();

    // P1 operators from the snapshot mesh itself
    let h = (snapshots.xi_nodes[n_xi - 1] - snapshots.xi_nodes[0]) / (n_xi - 1) as f64;
    let mass = SymTridiag::constant(m, 2.0 * h / 3.0, h / 6.0);
    let stiffness = SymTridiag::constant(m, 2.0 / h, -1.0 / h);
    let reduced_mass = project_operator(&mass, &basis, m, n);
    let reduced_stiffness = project_operator(&stiffness, &basis, m, n);

    Ok(RomModel {
        basis,
        n_interior: m,
        n,
        reduced_mass,
        reduced_stiffness,
        singular_values: sigma,
    })
}

/// `Vᵀ A V` for tridiagonal A and column-major V.
fn project_operator(a: &SymTridiag, v: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut av = vec![0.0; m * n];
    for col in 0..n {
        a.mul_into(&v[col * m..(col + 1) * m], &mut av[col * m..(col + 1) * m]);
    }
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        let vr = &v[r * m..(r + 1) * m];
        for c in 0..n {
            let avc = &av[c * m..(c + 1) * m];
            out[r * n + c] = vr.iter().zip(avc).map(|(x, y)| x * y).sum();
        }
    }
    out
}

impl RomModel {
    /// Project an interior-node vector onto the reduced coordinates, `Vᵀx`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_interior);
        (0..self.n)
            .map(|col| {
                self.basis[col * self.n_interior..(col + 1) * self.n_interior]
                    .iter()
                    .zip(x)
                    .map(|(v, y)| v * y)
                    .sum()
            })
            .collect()
    }

    /// Lift reduced coordinates back to the interior nodes, `Vq`.
    pub fn lift_into(&self, q: &[f64], out: &mut [f64]) {
        assert_eq!(q.len(), self.n);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (col, &qc) in q.iter().enumerate() {
            let vcol = &self.basis[col * self.n_interior..(col + 1) * self.n_interior];
            for (o, &v) in out.iter_mut().zip(vcol) {
                *o += qc * v;
            }
        }
    }
}

/// Integrates the reduced system `(VᵀMV) q̈ + (VᵀKV) q = 0` with the same
/// midpoint scheme and Δt as the FOM and lifts `ũ = Vq` to the full grid
/// (boundary columns zero).
pub fn solve_rom(
    model: &RomModel,
    disc: &FemDiscretization,
    problem: &WaveProblem,
) -> GridFunction {
    assert_eq!(
        model.n_interior,
        disc.n_interior(),
        "ROM basis and discretization disagree on interior size"
    );
    let n = model.n;
    let dt = disc.dt;
    let c = dt * dt / 4.0;
    let mr = &model.reduced_mass;
    let kr = &model.reduced_stiffness;
    let a: Vec<f64> = (0..n * n).map(|i| mr[i] + c * kr[i]).collect();
    let chol = cholesky(&a, n).expect("reduced midpoint matrix is SPD by construction");

    let xi = disc.xi_nodes(problem);
    let u0: Vec<f64> = xi[1..disc.n_nodes - 1]
        .iter()
        .map(|&x| problem.initial_bump(x))
        .collect();
    let mut q = model.project(&u0);
    let mut p = vec![0.0; n];

    let n_xi = disc.n_nodes;
    let mut values = vec![0.0; disc.n_steps * n_xi];
    model.lift_into(&q, &mut values[1..n_xi - 1]);
    let mut rhs = vec![0.0; n];
    for k in 1..disc.n_steps {
        for r in 0..n {
            let mut acc = 0.0;
            for csub in 0..n {
                acc += (mr[r * n + csub] - c * kr[r * n + csub]) * p[csub]
                    - dt * kr[r * n + csub] * q[csub];
            }
            rhs[r] = acc;
        }
        let p_next = chol.solve(&rhs);
        for r in 0..n {
            q[r] += 0.5 * dt * (p[r] + p_next[r]);
        }
        p = p_next;
        let row = &mut values[k * n_xi + 1..k * n_xi + n_xi - 1];
        model.lift_into(&q, row);
    }
    GridFunction {
        t_nodes: disc.t_nodes(problem),
        xi_nodes: xi,
        values,
    }
}

/// Reduced discrete energy `½(q̇ᵀ Mr q̇ + qᵀ Kr q)`; midpoint conserves it.
pub fn reduced_energy(model: &RomModel, q: &[f64], p: &[f64]) -> f64 {
    let n = model.n;
    let quad = |a: &[f64], x: &[f64]| {
        let mut acc = 0.0;
        for r in 0..n {
            for c in 0..n {
                acc += x[r] * a[r * n + c] * x[c];
            }
        }
        acc
    };
    0.5 * (quad(&model.reduced_mass, p) + quad(&model.reduced_stiffness, q))
}

/// Per-time certificate `ε(tᵢ) = safety · ‖u_FOM(tᵢ) − ũ(tᵢ)‖_{L2(Ω_ξ)}`
/// (trapezoidal rule in ξ). With `safety = 1` the certificate is tight.
pub fn certify(
    rom_solution: GridFunction,
    fom_solution: &GridFunction,
    safety: f64,
) -> Result<CertifiedSurrogate, RomError> {
    if safety < 1.0 {
        return Err(RomError::InvalidSafety(safety));
    }
    if rom_solution.t_nodes != fom_solution.t_nodes {
        return Err(RomError::GridMismatch("time nodes differ"));
    }
    if rom_solution.xi_nodes != fom_solution.xi_nodes {
        return Err(RomError::GridMismatch("spatial nodes differ"));
    }
    let wx = trapezoid_weights(&rom_solution.xi_nodes);
    let n_xi = rom_solution.n_xi();
    let epsilon: Vec<f64> = (0..rom_solution.n_t())
        .map(|i| {
            let a = &rom_solution.values[i * n_xi..(i + 1) * n_xi];
            let b = &fom_solution.values[i * n_xi..(i + 1) * n_xi];
            let mut acc = 0.0;
            for j in 0..n_xi {
                let d = a[j] - b[j];
                acc += wx[j] * d * d;
            }
            safety * acc.sqrt()
        })
        .collect();
    Ok(CertifiedSurrogate {
        rom_solution,
        epsilon,
    })
}

/// Dense Cholesky factor of a small SPD matrix.
struct Cholesky {
    l: Vec<f64>,
    n: usize,
}

fn cholesky(a: &[f64], n: usize) -> Option<Cholesky> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a[i * n + j];
            for k in 0..j {
                acc -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if acc <= 0.0 {
                    return None;
                }
                l[i * n + i] = acc.sqrt();
            } else {
                l[i * n + j] = acc / l[j * n + j];
            }
        }
    }
    Some(Cholesky { l, n })
}

impl Cholesky {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.l[i * n + k] * x[k];
            }
            x[i] /= self.l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                x[i] -= self.l[k * n + i] * x[k];
            }
            x[i] /= self.l[i * n + i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble, solve_fom};

    fn small_fom(n_nodes: usize, n_steps: usize) -> (WaveProblem, FemDiscretization, GridFunction) {
        let p = WaveProblem::default();
        let d = assemble(n_nodes, n_steps, &p).unwrap();
        let g = solve_fom(&d, &p).unwrap();
        (p, d, g)
    }

    #[test]
    fn basis_columns_are_orthonormal() {
        let (_, _, g) = small_fom(60, 50);
        let model = pod_basis(&g, 8).unwrap();
        let m = model.n_interior;
        for a in 0..model.n {
            for b in 0..model.n {
                let dot: f64 = model.basis[a * m..(a + 1) * m]
                    .iter()
                    .zip(&model.basis[b * m..(b + 1) * m])
                    .map(|(x, y)| x * y)
                    .sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-10, "V'V[{a},{b}] = {dot}");
            }
        }
    }

    #[test]
    fn full_rank_basis_reproduces_snapshots() {
        let (_, _, g) = small_fom(40, 30);
        // numerical rank ≤ min(38, 30); take the full computed rank
        let probe = pod_basis(&g, 2).unwrap();
        let rank_tol =
            38.0_f64.max(30.0) * f64::EPSILON * probe.singular_values[0];
        let rank = probe
            .singular_values
            .iter()
            .take_while(|&&s| s > rank_tol)
            .count();
        let model = pod_basis(&g, rank).unwrap();
        let m = model.n_interior;
        let mut recon = vec![0.0; m];
        for i in 0..g.n_t() {
            let snap: Vec<f64> = g.row(i)[1..m + 1].to_vec();
            let q = model.project(&snap);
            model.lift_into(&q, &mut recon);
            let num: f64 = recon
                .iter()
                .zip(&snap)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let den: f64 = snap.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
            assert!(num / den < 1e-8, "snapshot {i}: rel residual {}", num / den);
        }
    }

    #[test]
    fn rank_one_field_has_collapsed_spectrum() {
        // constant-in-time profile: snapshot matrix is rank 1
        let t_nodes = crate::analytic::linspace(0.0, 2.0, 12);
        let xi_nodes = crate::analytic::linspace(-1.0, 1.0, 30);
        let profile: Vec<f64> = xi_nodes.iter().map(|&x| (1.0 - x * x) * x.cos()).collect();
        let mut values = Vec::new();
        for _ in 0..12 {
            values.extend_from_slice(&profile);
        }
        let g = GridFunction::new(t_nodes, xi_nodes, values).unwrap();
        let model = pod_basis(&g, 1).unwrap();
        assert!(model.singular_values[1] / model.singular_values[0] <= 1e-10);
    }

    #[test]
    fn eckart_young_projection_error_identity() {
        let (_, _, g) = small_fom(50, 40);
        let n = 6;
        let model = pod_basis(&g, n).unwrap();
        let m = model.n_interior;
        let mut recon = vec![0.0; m];
        let mut proj_err = 0.0;
        for i in 0..g.n_t() {
            let snap: Vec<f64> = g.row(i)[1..m + 1].to_vec();
            let q = model.project(&snap);
            model.lift_into(&q, &mut recon);
            proj_err += recon
                .iter()
                .zip(&snap)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        let tail: f64 = model.singular_values[n..].iter().map(|s| s * s).sum();
        assert!(
            (proj_err - tail).abs() <= 1e-8 * tail.max(1e-300),
            "projection error {proj_err} vs tail energy {tail}"
        );
    }

    #[test]
    fn rank_exceeded_reports_numerical_rank() {
        let t_nodes = crate::analytic::linspace(0.0, 2.0, 10);
        let xi_nodes = crate::analytic::linspace(-1.0, 1.0, 25);
        let profile: Vec<f64> = xi_nodes.iter().map(|&x| 1.0 - x * x).collect();
        let mut values = Vec::new();
        for i in 0..10 {
            values.extend(profile.iter().map(|v| v * (i as f64 + 1.0)));
        }
        let g = GridFunction::new(t_nodes, xi_nodes, values).unwrap();
        match pod_basis(&g, 5) {
            Err(RomError::RankExceeded { requested: 5, rank }) => assert_eq!(rank, 1),
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn reduced_operators_are_symmetric_and_definite() {
        let (_, _, g) = small_fom(80, 60);
        let model = pod_basis(&g, 6).unwrap();
        let n = model.n;
        for r in 0..n {
            for c in 0..n {
                assert!(
                    (model.reduced_mass[r * n + c] - model.reduced_mass[c * n + r]).abs() < 1e-12
                );
                assert!(
                    (model.reduced_stiffness[r * n + c] - model.reduced_stiffness[c * n + r])
                        .abs()
                        < 1e-12
                );
            }
        }
        assert!(cholesky(&model.reduced_mass, n).is_some());
    }

    #[test]
    fn full_rank_rom_matches_fom() {
        let (p, d, g) = small_fom(40, 50);
        let probe = pod_basis(&g, 2).unwrap();
        let rank_tol = 50.0 * f64::EPSILON * probe.singular_values[0];
        let rank = probe
            .singular_values
            .iter()
            .take_while(|&&s| s > rank_tol)
            .count();
        let model = pod_basis(&g, rank).unwrap();
        let rom = solve_rom(&model, &d, &p);
        let num = rom.mse_against(&g).sqrt();
        let den = g.mse_against(&zero_like(&g)).sqrt();
        assert!(num / den < 1e-6, "full-rank ROM deviates: rel {}", num / den);
    }

    fn zero_like(g: &GridFunction) -> GridFunction {
        GridFunction {
            t_nodes: g.t_nodes.clone(),
            xi_nodes: g.xi_nodes.clone(),
            values: vec![0.0; g.values.len()],
        }
    }

    #[test]
    fn rom_mse_monotone_and_certificate_valid_small() {
        let (p, d, g) = small_fom(201, 160);
        let mut prev = f64::INFINITY;
        for n in [2usize, 4, 8] {
            let model = pod_basis(&g, n).unwrap();
            let rom = solve_rom(&model, &d, &p);
            let mse = rom.mse_vs_exact(&p);
            assert!(mse < prev, "n={n}: {mse} not below {prev}");
            prev = mse;

            let cert = certify(rom, &g, 1.0).unwrap();
            // tight certificate: recompute the norm and require ε ≥ it
            let wx = trapezoid_weights(&g.xi_nodes);
            for i in 0..g.n_t() {
                let mut acc = 0.0;
                for j in 0..g.n_xi() {
                    let dd = cert.rom_solution.value(i, j) - g.value(i, j);
                    acc += wx[j] * dd * dd;
                }
                assert!(cert.epsilon[i] >= acc.sqrt() - 1e-300);
            }
        }
    }

    #[test]
    fn certificate_of_fom_against_itself_is_zero_and_safety_scales() {
        let (_, _, g) = small_fom(60, 40);
        let cert = certify(g.clone(), &g, 1.0).unwrap();
        assert!(cert.epsilon.iter().all(|&e| e == 0.0));

        let model = pod_basis(&g, 3).unwrap();
        let d = assemble_like(&g);
        let rom = solve_rom(&model, &d, &WaveProblem::default());
        let c1 = certify(rom.clone(), &g, 1.0).unwrap();
        let c2 = certify(rom, &g, 2.0).unwrap();
        for (a, b) in c1.epsilon.iter().zip(&c2.epsilon) {
            assert_eq!(2.0 * a, *b);
        }
    }

    fn assemble_like(g: &GridFunction) -> FemDiscretization {
        assemble(g.n_xi(), g.n_t(), &WaveProblem::default()).unwrap()
    }

    #[test]
    fn certificate_agrees_with_simpson_recomputation() {
        // independent quadrature cross-check of the L2 norms; the two rules
        // agree to O(h⁴) here because the squared error vanishes with its
        // derivative at the walls, so the mesh must not be too coarse
        let (p, d, g) = small_fom(801, 120);
        let model = pod_basis(&g, 5).unwrap();
        let rom = solve_rom(&model, &d, &p);
        let cert = certify(rom, &g, 1.0).unwrap();
        let n_xi = g.n_xi();
        let h = g.xi_nodes[1] - g.xi_nodes[0];
        for i in 0..g.n_t() {
            // composite Simpson over the even number of intervals
            let f = |j: usize| {
                let dd = cert.rom_solution.value(i, j) - g.value(i, j);
                dd * dd
            };
            let mut acc = f(0) + f(n_xi - 1);
            for j in 1..n_xi - 1 {
                acc += f(j) * if j % 2 == 1 { 4.0 } else { 2.0 };
            }
            let simpson = (acc * h / 3.0).sqrt();
            if simpson > 1e-9 {
                let rel = (cert.epsilon[i] - simpson).abs() / simpson;
                assert!(rel < 1e-6, "slice {i}: rel {rel}");
            }
        }
    }

    #[test]
    fn certify_rejects_mismatched_grids_and_bad_safety() {
        let (_, _, g) = small_fom(40, 30);
        let (_, _, g2) = small_fom(41, 30);
        assert!(matches!(
            certify(g2, &g, 1.0),
            Err(RomError::GridMismatch(_))
        ));
        assert!(matches!(
            certify(g.clone(), &g, 0.5),
            Err(RomError::InvalidSafety(_))
        ));
    }

    #[test]
    fn midpoint_conserves_reduced_energy() {
        let (p, d, g) = small_fom(120, 100);
        let model = pod_basis(&g, 6).unwrap();
        // integrate reduced system tracking energy directly
        let n = model.n;
        let dt = d.dt;
        let c = dt * dt / 4.0;
        let a: Vec<f64> = (0..n * n)
            .map(|i| model.reduced_mass[i] + c * model.reduced_stiffness[i])
            .collect();
        let chol = cholesky(&a, n).unwrap();
        let xi = d.xi_nodes(&p);
        let u0: Vec<f64> = xi[1..d.n_nodes - 1]
            .iter()
            .map(|&x| p.initial_bump(x))
            .collect();
        let mut q = model.project(&u0);
        let mut pp = vec![0.0; n];
        let e0 = reduced_energy(&model, &q, &pp);
        for _ in 1..d.n_steps {
            let mut rhs = vec![0.0; n];
            for r in 0..n {
                for cc in 0..n {
                    rhs[r] += (model.reduced_mass[r * n + cc]
                        - c * model.reduced_stiffness[r * n + cc])
                        * pp[cc]
                        - dt * model.reduced_stiffness[r * n + cc] * q[cc];
                }
            }
            let p_next = chol.solve(&rhs);
            for r in 0..n {
                q[r] += 0.5 * dt * (pp[r] + p_next[r]);
            }
            pp = p_next;
        }
        let e_end = reduced_energy(&model, &q, &pp);
        assert!(((e_end - e0) / e0).abs() < 1e-10);
    }

    #[test]
    fn epsilon_interpolation_is_linear_and_clamped() {
        let (_, _, g) = small_fom(40, 5);
        let mut cert = certify(g.clone(), &g, 1.0).unwrap();
        cert.epsilon = vec![1.0, 2.0, 4.0, 4.0, 0.0];
        let t = &cert.rom_solution.t_nodes;
        assert_eq!(cert.epsilon_at(t[0] - 1.0), 1.0);
        assert_eq!(cert.epsilon_at(t[4] + 1.0), 0.0);
        let mid = 0.5 * (t[0] + t[1]);
        assert!((cert.epsilon_at(mid) - 1.5).abs() < 1e-12);
    }
}
