use std::time::Instant;
use wavesurrogate::analytic::WaveProblem;
use wavesurrogate::losses::{self, WeightScheme};
use wavesurrogate::trainer::{build_sets, train_single, Experiment, RunConfig};

fn main() {
    let p = WaveProblem::default();
    for (name, exp) in [("baseline", Experiment::Baseline), ("exact_data", Experiment::ExactData)] {
        let cfg = RunConfig {
            epochs: 20,
            repetitions: 1,
            weighting: WeightScheme::Opt,
            log_stride: 20,
            ..RunConfig::paper_defaults(exp)
        };
        let data = exp.uses_data().then(|| losses::exact_data_grid(&p, cfg.n_data_t, cfg.n_data_xi));
        let sets = build_sets(&cfg, &p, data.as_ref());
        let t0 = Instant::now();
        let rec = train_single(&cfg, &sets, &p);
        let dt = t0.elapsed().as_secs_f64();
        println!(
            "{name}: {} epochs in {:.2}s = {:.1} ms/epoch  (val {:.3e}) -> 2000 epochs ~ {:.0}s",
            cfg.epochs, dt, 1e3 * dt / cfg.epochs as f64,
            rec.rows.last().map(|r| r.val_mse).unwrap_or(f64::NAN),
            dt / cfg.epochs as f64 * 2000.0
        );
    }
}
