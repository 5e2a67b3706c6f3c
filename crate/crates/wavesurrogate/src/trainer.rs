//! Seeded training runs, the epoch loop, repetition sweeps, and aggregation.
//!
//! Full-batch ADAM over fixed collocation sets: the paper reports per-epoch
//! curves with fixed point sets, and full batch maximizes determinism. A run
//! is a pure function of (config, collocation sets); repetitions derive their
//! seeds as `seed + run_index` and may execute in parallel.

use crate::analytic::{linspace, trapezoid_weights, WaveProblem};
use crate::losses::{
    self, boundary_points, sample_interior, CollocationSets, DataGrid, DataLossMode, LossWeights,
    TermGradients, WeightScheme,
};
use crate::network::{self, AdamState, NetworkParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("cannot aggregate zero records")]
    EmptyAggregation,
    #[error("all {0} runs diverged")]
    AllDiverged(usize),
    #[error("records disagree on their logged epoch grids")]
    MismatchedEpochs,
}

/// Which experiment of §-style the run performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// BVP losses only (no data term).
    Baseline,
    /// Data term fed by the analytic solution.
    ExactData,
    /// Data term fed by ROM data, plain MSE.
    RomData,
    /// Data term fed by ROM data through the error-sensitive loss.
    RomDataEs,
}

impl Experiment {
    pub fn uses_data(&self) -> bool {
        !matches!(self, Experiment::Baseline)
    }

    pub fn data_mode(&self) -> DataLossMode {
        match self {
            Experiment::RomDataEs => DataLossMode::ErrorSensitive,
            _ => DataLossMode::Plain,
        }
    }
}

/// Everything one training run needs to be reproducible.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub weighting: WeightScheme,
    pub rom_size: usize,
    pub epochs: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub n_data_t: usize,
    pub n_data_xi: usize,
    pub validation_grid: usize,
    pub log_stride: usize,
    pub learning_rate: f64,
    pub lra_rate: f64,
    pub lra_every: usize,
    pub layer_sizes: Vec<usize>,
}

impl RunConfig {
    /// Paper-scale defaults for the given experiment (sampling counts follow
    /// the non-data-enriched / data-enriched table).
    pub fn paper_defaults(experiment: Experiment) -> Self {
        let enriched = experiment.uses_data();
        RunConfig {
            experiment,
            weighting: WeightScheme::Equal,
            rom_size: 12,
            epochs: 20_000,
            repetitions: 30,
            seed: 1,
            n_interior: if enriched { 15_000 } else { 30_000 },
            n_boundary: 3_000,
            n_data_t: if enriched { 150 } else { 0 },
            n_data_xi: if enriched { 100 } else { 0 },
            validation_grid: 256,
            log_stride: 10,
            learning_rate: 1e-3,
            lra_rate: 0.9,
            lra_every: 10,
            layer_sizes: network::DEFAULT_LAYER_SIZES.to_vec(),
        }
    }
}

/// One logged epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRow {
    pub epoch: usize,
    pub loss_data: f64,
    pub loss_interior: f64,
    pub loss_boundary: f64,
    pub loss_total: f64,
    pub lambda_data: f64,
    pub lambda_interior: f64,
    pub lambda_boundary: f64,
    pub val_mse: f64,
}

/// Per-epoch time series of one seeded run plus its final parameters.
#[derive(Debug, Clone)]
pub struct TrainRecord {
    pub seed: u64,
    pub rows: Vec<TrainRow>,
    pub diverged: bool,
    pub final_params: NetworkParams,
    pub final_adam: AdamState,
}

impl TrainRecord {
    pub fn final_val_mse(&self) -> Option<f64> {
        self.rows.last().map(|r| r.val_mse)
    }
}

const DIVERGENCE_THRESHOLD: f64 = 1e12;
const OPT_REFERENCE_GRID: usize = 256;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-stream seeds so the network draw does not depend on how many interior
/// points were sampled.
fn network_seed(run_seed: u64) -> u64 {
    splitmix64(run_seed ^ 0x6e65_7477_6f72_6b00)
}

fn interior_seed(run_seed: u64) -> u64 {
    splitmix64(run_seed ^ 0x696e_7465_7269_6f72)
}

/// Collocation sets for one run seed. The data grid (targets, ε) is shared
/// across repetitions; interior points are redrawn per run.
pub fn build_sets(
    config: &RunConfig,
    problem: &WaveProblem,
    data: Option<&DataGrid>,
) -> CollocationSets {
    let mut rng = ChaCha8Rng::seed_from_u64(interior_seed(config.seed));
    CollocationSets {
        interior: sample_interior(problem, config.n_interior, &mut rng),
        boundary: boundary_points(problem, config.n_boundary),
        data: data.cloned(),
    }
}

/// Initial weights per scheme; OPT is computed once from the exact solution
/// ("computed-once": the formula depends only on the reference, not on θ).
pub fn initial_weights(
    config: &RunConfig,
    problem: &WaveProblem,
    boundary: &[losses::BoundaryPoint],
) -> LossWeights {
    match config.weighting {
        WeightScheme::Equal => LossWeights::equal(),
        WeightScheme::Lra => LossWeights::lra_initial(),
        WeightScheme::Opt => {
            let reference = problem.sample_on_grid(OPT_REFERENCE_GRID, OPT_REFERENCE_GRID);
            let m = losses::characteristic_magnitudes(&reference, boundary);
            losses::opt_weights(m).expect("magnitudes are floored positive")
        }
    }
}

/// Full-batch ADAM training of a single seeded run. Deterministic given
/// (config, sets): identical inputs give bitwise-identical records.
pub fn train_single(
    config: &RunConfig,
    sets: &CollocationSets,
    problem: &WaveProblem,
) -> TrainRecord {
    let mode = config.experiment.data_mode();
    let mut params = network::init_with_sizes(network_seed(config.seed), &config.layer_sizes);
    let mut adam = AdamState::with_learning_rate(params.n_params(), config.learning_rate);
    let mut weights = initial_weights(config, problem, &sets.boundary);
    let mut rows = Vec::new();
    let mut diverged = false;

    for epoch in 1..=config.epochs {
        let (l_d, g_d) = match (config.experiment.uses_data(), sets.data.as_ref()) {
            (true, Some(grid)) if grid.n_points() > 0 => {
                let r = match mode {
                    DataLossMode::Plain => Ok(losses::data_loss_with_grad(&params, grid)),
                    DataLossMode::ErrorSensitive => {
                        losses::error_sensitive_data_loss_with_grad(&params, grid)
                    }
                };
                let (l, g) = r.expect("ε validated when the grid was built");
                (l, Some(g))
            }
            _ => (0.0, None),
        };
        let (l_i, g_i) = losses::interior_loss_with_grad(&params, &sets.interior);
        let (l_b, g_b) = losses::boundary_loss_with_grad(&params, &sets.boundary);

        if weights.scheme == WeightScheme::Lra && epoch % config.lra_every == 0 {
            losses::lra_update(
                &mut weights,
                &TermGradients {
                    data: g_d.as_deref(),
                    interior: &g_i,
                    boundary: &g_b,
                },
                config.lra_rate,
            );
        }

        let total = weights.data * l_d + weights.interior * l_i + weights.boundary * l_b;
        if !total.is_finite() || total > DIVERGENCE_THRESHOLD {
            diverged = true;
            break;
        }
        let mut grad = vec![0.0; params.n_params()];
        for i in 0..grad.len() {
            let mut acc = weights.interior * g_i[i] + weights.boundary * g_b[i];
            if let Some(gd) = &g_d {
                acc += weights.data * gd[i];
            }
            grad[i] = acc;
        }
        if network::adam_step(&mut adam, &mut params, &grad).is_err() {
            diverged = true;
            break;
        }

        if epoch % config.log_stride == 0 || epoch == config.epochs {
            let val_mse = validation_mse(&params, problem, config.validation_grid);
            rows.push(TrainRow {
                epoch,
                loss_data: l_d,
                loss_interior: l_i,
                loss_boundary: l_b,
                loss_total: total,
                lambda_data: weights.data,
                lambda_interior: weights.interior,
                lambda_boundary: weights.boundary,
                val_mse,
            });
        }
    }
    TrainRecord {
        seed: config.seed,
        rows,
        diverged,
        final_params: params,
        final_adam: adam,
    }
}

/// MSE of Φ against the analytic solution on an equidistant n×n validation
/// grid with trapezoidal weights, normalized by |Ω|.
pub fn validation_mse(params: &NetworkParams, problem: &WaveProblem, n_grid: usize) -> f64 {
    let t_nodes = linspace(problem.t_domain.0, problem.t_domain.1, n_grid);
    let xi_nodes = linspace(problem.xi_domain.0, problem.xi_domain.1, n_grid);
    let wt = trapezoid_weights(&t_nodes);
    let wx = trapezoid_weights(&xi_nodes);
    let layout = params.layout();
    let row_sums: Vec<f64> = t_nodes
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            use crate::network::engine::{self, BlockWorkspace, LANES};
            let mut ws = BlockWorkspace::new(&layout);
            let tb = [t; LANES];
            let mut acc = 0.0;
            for (bi, block) in xi_nodes.chunks(LANES).enumerate() {
                let start = bi * LANES;
                let mut xb = [xi_nodes[start]; LANES];
                xb[..block.len()].copy_from_slice(block);
                let jets = engine::forward_block(&params.theta, &layout, &mut ws, &tb, &xb, 1);
                for (l, &xi_l) in block.iter().enumerate() {
                    let d = jets[0][l] - problem.exact_solution(t, xi_l);
                    acc += wx[start + l] * d * d;
                }
            }
            wt[i] * acc
        })
        .collect();
    row_sums.iter().sum::<f64>() / problem.domain_area()
}

/// Independent repetitions with seeds `seed + k`, run in parallel; results
/// come back in run order.
pub fn run_repetitions(
    config: &RunConfig,
    problem: &WaveProblem,
    data: Option<&DataGrid>,
) -> Vec<TrainRecord> {
    (0..config.repetitions as u64)
        .into_par_iter()
        .map(|k| {
            let run_cfg = RunConfig {
                seed: config.seed + k,
                ..config.clone()
            };
            let sets = build_sets(&run_cfg, problem, data);
            train_single(&run_cfg, &sets, problem)
        })
        .collect()
}

/// Per-epoch aggregates of the validation MSE across runs.
#[derive(Debug, Clone)]
pub struct AggregateCurves {
    pub epochs: Vec<usize>,
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    pub geomean: Vec<f64>,
    pub n_diverged: usize,
}

/// Arithmetic mean (the paper's aggregate), median and geometric mean per
/// logged epoch. Diverged runs are excluded from the statistics but counted.
pub fn aggregate(records: &[TrainRecord]) -> Result<AggregateCurves, TrainerError> {
    if records.is_empty() {
        return Err(TrainerError::EmptyAggregation);
    }
    let live: Vec<&TrainRecord> = records.iter().filter(|r| !r.diverged).collect();
    let n_diverged = records.len() - live.len();
    if live.is_empty() {
        return Err(TrainerError::AllDiverged(records.len()));
    }
    let epochs: Vec<usize> = live[0].rows.iter().map(|r| r.epoch).collect();
    for r in &live {
        let got: Vec<usize> = r.rows.iter().map(|row| row.epoch).collect();
        if got != epochs {
            return Err(TrainerError::MismatchedEpochs);
        }
    }
    let mut mean = Vec::with_capacity(epochs.len());
    let mut median = Vec::with_capacity(epochs.len());
    let mut geomean = Vec::with_capacity(epochs.len());
    for i in 0..epochs.len() {
        let mut vals: Vec<f64> = live.iter().map(|r| r.rows[i].val_mse).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = vals.len();
        mean.push(vals.iter().sum::<f64>() / n as f64);
        median.push(if n % 2 == 1 {
            vals[n / 2]
        } else {
            0.5 * (vals[n / 2 - 1] + vals[n / 2])
        });
        geomean.push((vals.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).sum::<f64>() / n as f64).exp());
    }
    Ok(AggregateCurves {
        epochs,
        mean,
        median,
        geomean,
        n_diverged,
    })
}

/// Median of the final validation MSE across non-diverged runs.
pub fn median_final_val_mse(records: &[TrainRecord]) -> Option<f64> {
    let mut finals: Vec<f64> = records
        .iter()
        .filter(|r| !r.diverged)
        .filter_map(|r| r.final_val_mse())
        .collect();
    if finals.is_empty() {
        return None;
    }
    finals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = finals.len();
    Some(if n % 2 == 1 {
        finals[n / 2]
    } else {
        0.5 * (finals[n / 2 - 1] + finals[n / 2])
    })
}

/// CSV serialization of one record, 17 significant digits per value.
pub fn record_csv(record: &TrainRecord) -> String {
    let mut out = String::from(
        "epoch,loss_data,loss_interior,loss_boundary,loss_total,lambda_data,lambda_interior,lambda_boundary,val_mse\n",
    );
    for r in &record.rows {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.epoch,
            r.loss_data,
            r.loss_interior,
            r.loss_boundary,
            r.loss_total,
            r.lambda_data,
            r.lambda_interior,
            r.lambda_boundary,
            r.val_mse
        ));
    }
    out
}

/// CSV serialization of aggregate curves.
pub fn aggregate_csv(agg: &AggregateCurves) -> String {
    let mut out = String::from("epoch,mean,median,geomean,n_diverged\n");
    for i in 0..agg.epochs.len() {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{}\n",
            agg.epochs[i], agg.mean[i], agg.median[i], agg.geomean[i], agg.n_diverged
        ));
    }
    out
}
