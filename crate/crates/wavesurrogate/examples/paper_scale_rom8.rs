use std::time::Instant;
use wavesurrogate::analytic::WaveProblem;
use wavesurrogate::fem::{assemble, solve_fom};
use wavesurrogate::losses::{self, WeightScheme};
use wavesurrogate::rom::{certify, pod_basis, solve_rom};
use wavesurrogate::trainer::{run_repetitions, Experiment, RunConfig};

fn main() {
    let p = WaveProblem::default();
    let t0 = Instant::now();
    let disc = assemble(3000, 3000, &p).unwrap();
    let fom = solve_fom(&disc, &p).unwrap();
    let m4 = pod_basis(&fom, 4).unwrap();
    let mse4 = solve_rom(&m4, &disc, &p).mse_vs_exact(&p);
    let m8 = pod_basis(&fom, 8).unwrap();
    let rom8 = solve_rom(&m8, &disc, &p);
    let mse8 = rom8.mse_vs_exact(&p);
    println!("ROM4 {mse4:.4e}  ROM8 {mse8:.4e}  [{:.0}s]", t0.elapsed().as_secs_f64());
    let cert = certify(rom8, &fom, 1.0).unwrap();
    let cfg = RunConfig {
        epochs: 20_000,
        repetitions: 3,
        weighting: WeightScheme::Opt,
        log_stride: 100,
        ..RunConfig::paper_defaults(Experiment::RomData)
    };
    let grid = losses::surrogate_data_grid(&p, &cert, cfg.n_data_t, cfg.n_data_xi, false);
    let recs = run_repetitions(&cfg, &p, Some(&grid));
    for r in &recs {
        print!("seed {} trajectory:", r.seed);
        for row in r.rows.iter().filter(|row| row.epoch % 2000 == 0) {
            print!(" {}:{:.3e}", row.epoch, row.val_mse);
        }
        println!();
        let below4 = r.rows.iter().find(|row| row.val_mse < mse4).map(|row| row.epoch);
        let below8 = r.rows.iter().find(|row| row.val_mse < mse8).map(|row| row.epoch);
        println!(
            "seed {}: final {:.4e}, first below ROM4 at {:?}, first below ROM8 at {:?}",
            r.seed,
            r.final_val_mse().unwrap_or(f64::NAN),
            below4,
            below8
        );
    }
    println!("total [{:.0}s]", t0.elapsed().as_secs_f64());
}
