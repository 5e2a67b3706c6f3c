//! Command-line pipeline: build the FOM, derive certified ROMs, run training
//! experiments, aggregate them, and emit figure-style SVG charts.

use clap::{Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use wavesurrogate::analytic::WaveProblem;
use wavesurrogate::config::{self, ConfigError, ExperimentConfig, ResolvedConfig};
use wavesurrogate::fem::{assemble, fom_mse, solve_fom_detailed};
use wavesurrogate::formats;
use wavesurrogate::losses::{self, WeightScheme};
use wavesurrogate::plot::{render_chart, Curve, RefLine};
use wavesurrogate::rom::{certify, pod_basis, solve_rom, CertifiedSurrogate};
use wavesurrogate::trainer::{
    aggregate, record_csv, run_repetitions, Experiment, TrainRecord,
};

#[derive(Parser)]
#[command(
    name = "wavesurrogate",
    about = "Physics-informed neural surrogates for the 1-D wave equation with error-certified ROM data enrichment",
    after_help = config::help_text()
)]
struct Cli {
    /// Path to a `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,
    /// Run `reproduce` at paper scale (30 repetitions, 20000 epochs).
    #[arg(long, global = true)]
    paper_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the full-order finite-element model and store its snapshots.
    #[command(after_help = config::help_text())]
    Fom {
        /// Store only every k-th time level.
        #[arg(long, default_value_t = 1)]
        snapshot_stride: usize,
    },
    /// Build a certified reduced-order model from the stored snapshots.
    #[command(after_help = config::help_text())]
    Rom {
        /// Reduced size; defaults to the configured rom_size.
        #[arg(long)]
        size: Option<usize>,
    },
    /// Run the configured training experiment over all repetitions.
    #[command(after_help = config::help_text())]
    Train,
    /// Plot aggregate curves (the mean column) with optional reference levels.
    #[command(after_help = config::help_text())]
    Plot {
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
        /// Horizontal reference level, LABEL=VALUE; repeatable.
        #[arg(long = "reference")]
        references: Vec<String>,
        /// Aggregate CSV files (one curve each).
        #[arg(required = true)]
        aggregates: Vec<PathBuf>,
    },
    /// Chain fom → rom → train → plot for one figure-style experiment set.
    #[command(after_help = config::help_text())]
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Figure {
    /// Non-data-enriched runs under all three weightings.
    Baseline,
    /// Exact-data-enriched runs under all three weightings.
    Exact,
    /// ROM-data-enriched runs (plain and error-sensitive) for n = 4, 8, 12.
    Rom,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Config(String),
    Io(String),
    Format(String),
    Compute(String),
}

impl CliError {
    fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Format(_) => "format",
            CliError::Compute(_) => "compute",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m)
            | CliError::Config(m)
            | CliError::Io(m)
            | CliError::Format(m)
            | CliError::Compute(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn main() {
    if let Ok(raw) = std::env::var("WAVESURROGATE_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error[usage]: WAVESURROGATE_THREADS must be a positive integer, got `{raw}`");
                std::process::exit(1);
            }
        }
    }
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error[{}]: {}", e.category(), e.message());
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let raw = load_raw_config(cli.config.as_deref())?;
    // reproduce overrides experiment and counts per variant, so it resolves
    // leniently; everything else validates the full configuration up front
    let mut resolved = match cli.command {
        Command::Reproduce { .. } => raw.resolve_lenient()?,
        _ => raw.resolve()?,
    };
    if let Some(seed) = cli.seed {
        resolved.run.seed = seed;
    }
    if let Some(dir) = &cli.output_dir {
        resolved.output_dir = dir.display().to_string();
    }
    match cli.command {
        Command::Fom { snapshot_stride } => cmd_fom(&resolved, snapshot_stride, cli.force),
        Command::Rom { size } => cmd_rom(&resolved, size, cli.force),
        Command::Train => cmd_train(&resolved, cli.force).map(|_| ()),
        Command::Plot {
            out,
            references,
            aggregates,
        } => cmd_plot(&out, &references, &aggregates, cli.force),
        Command::Reproduce { figure } => {
            cmd_reproduce(&raw, &resolved, figure, cli.paper_scale, cli.seed, cli.force)
        }
    }
}

fn load_raw_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            Ok(ExperimentConfig::parse(&text)?)
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_guarded(path: &Path, bytes: &[u8], force: bool) -> Result<(), CliError> {
    if path.exists() && !force {
        return Err(CliError::Io(format!(
            "{} already exists (pass --force to overwrite)",
            path.display()
        )));
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Git-style content hash: sha256 over `blob <len>\0<bytes>`.
fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn fom_path(cfg: &ResolvedConfig) -> PathBuf {
    Path::new(&cfg.output_dir).join("fom.wvsn")
}

fn rom_path(cfg: &ResolvedConfig, n: usize) -> PathBuf {
    Path::new(&cfg.output_dir).join(format!("rom_n{n}.wvrm"))
}

fn cmd_fom(cfg: &ResolvedConfig, stride: usize, force: bool) -> Result<(), CliError> {
    if stride == 0 {
        return Err(CliError::Usage("--snapshot-stride must be at least 1".into()));
    }
    let problem = WaveProblem::default();
    let disc = assemble(cfg.fem_nodes, cfg.fem_steps, &problem)
        .map_err(|e| CliError::Compute(e.to_string()))?;
    let sol = solve_fom_detailed(&disc, &problem, stride)
        .map_err(|e| CliError::Compute(e.to_string()))?;
    let mse = fom_mse(&sol.grid, &problem);
    let dir = Path::new(&cfg.output_dir);
    ensure_dir(dir)?;
    let mut bytes = Vec::with_capacity(formats::wvsn_size(sol.grid.n_t(), sol.grid.n_xi()));
    formats::write_wvsn(&mut bytes, &sol.grid).map_err(|e| CliError::Format(e.to_string()))?;
    write_guarded(&fom_path(cfg), &bytes, force)?;
    let energy_drift =
        ((sol.energy_final - sol.energy_initial) / sol.energy_initial.max(f64::MIN_POSITIVE)).abs();
    let report = format!(
        "fom_nodes = {}\nfom_steps = {}\nsnapshot_stride = {}\nmse_vs_analytic = {:.6e}\nenergy_drift_rel = {:.3e}\n",
        cfg.fem_nodes, cfg.fem_steps, stride, mse, energy_drift
    );
    write_guarded(&dir.join("fom_report.txt"), report.as_bytes(), force)?;
    println!("fom: {} x {} snapshots, MSE vs analytic {mse:.6e}", sol.grid.n_t(), sol.grid.n_xi());
    Ok(())
}

fn load_fom(cfg: &ResolvedConfig) -> Result<wavesurrogate::analytic::GridFunction, CliError> {
    let path = fom_path(cfg);
    let bytes = fs::read(&path).map_err(|e| {
        CliError::Io(format!(
            "{}: {e} (run the `fom` command first)",
            path.display()
        ))
    })?;
    formats::read_wvsn(&mut bytes.as_slice()).map_err(|e| CliError::Format(e.to_string()))
}

fn cmd_rom(cfg: &ResolvedConfig, size: Option<usize>, force: bool) -> Result<(), CliError> {
    let n = size.unwrap_or(cfg.run.rom_size);
    let problem = WaveProblem::default();
    let fom = load_fom(cfg)?;
    let model = pod_basis(&fom, n).map_err(|e| CliError::Compute(e.to_string()))?;
    let disc = assemble(fom.n_xi(), fom.n_t(), &problem)
        .map_err(|e| CliError::Compute(e.to_string()))?;
    let rom = solve_rom(&model, &disc, &problem);
    let mse = rom.mse_vs_exact(&problem);
    let cert = certify(rom, &fom, cfg.safety_factor).map_err(|e| CliError::Compute(e.to_string()))?;
    let max_eps = cert.epsilon.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut bytes = Vec::new();
    formats::write_wvrm(&mut bytes, &model, &cert.epsilon)
        .map_err(|e| CliError::Format(e.to_string()))?;
    write_guarded(&rom_path(cfg, n), &bytes, force)?;
    println!("rom n={n}: MSE vs analytic {mse:.6e}, max eps {max_eps:.6e}, certificate length {}", cert.epsilon.len());
    Ok(())
}

/// Rebuild the certified surrogate field from a stored reduced model.
fn surrogate_from_file(
    cfg: &ResolvedConfig,
    n: usize,
    problem: &WaveProblem,
) -> Result<CertifiedSurrogate, CliError> {
    let path = rom_path(cfg, n);
    let bytes = fs::read(&path).map_err(|e| {
        CliError::Io(format!(
            "{}: {e} (run the `rom` command for size {n} first)",
            path.display()
        ))
    })?;
    let (model, epsilon) =
        formats::read_wvrm(&mut bytes.as_slice()).map_err(|e| CliError::Format(e.to_string()))?;
    let disc = assemble(model.n_interior + 2, epsilon.len().max(2), problem)
        .map_err(|e| CliError::Compute(e.to_string()))?;
    let rom = solve_rom(&model, &disc, problem);
    if epsilon.len() != rom.n_t() {
        return Err(CliError::Format(format!(
            "certificate length {} does not match {} time levels",
            epsilon.len(),
            rom.n_t()
        )));
    }
    Ok(CertifiedSurrogate {
        rom_solution: rom,
        epsilon,
    })
}

fn train_dir(cfg: &ResolvedConfig) -> PathBuf {
    let r = &cfg.run;
    let name = match r.experiment {
        Experiment::RomData | Experiment::RomDataEs => {
            format!("{}_{}_n{}", r.experiment, r.weighting, r.rom_size)
        }
        _ => format!("{}_{}", r.experiment, r.weighting),
    };
    Path::new(&cfg.output_dir).join(name)
}

fn build_data_grid(
    cfg: &ResolvedConfig,
    problem: &WaveProblem,
) -> Result<Option<losses::DataGrid>, CliError> {
    let r = &cfg.run;
    Ok(match r.experiment {
        Experiment::Baseline => None,
        Experiment::ExactData => Some(losses::exact_data_grid(problem, r.n_data_t, r.n_data_xi)),
        Experiment::RomData | Experiment::RomDataEs => {
            let surrogate = surrogate_from_file(cfg, r.rom_size, problem)?;
            Some(losses::surrogate_data_grid(
                problem,
                &surrogate,
                r.n_data_t,
                r.n_data_xi,
                r.experiment == Experiment::RomDataEs,
            ))
        }
    })
}

fn cmd_train(cfg: &ResolvedConfig, force: bool) -> Result<Vec<TrainRecord>, CliError> {
    let problem = WaveProblem::default();
    let data = build_data_grid(cfg, &problem)?;
    let dir = train_dir(cfg);
    ensure_dir(&dir)?;
    // refuse to clobber an existing sweep unless forced
    let agg_path = dir.join("aggregate.csv");
    if agg_path.exists() && !force {
        return Err(CliError::Io(format!(
            "{} already exists (pass --force to overwrite)",
            agg_path.display()
        )));
    }
    let records = run_repetitions(&cfg.run, &problem, data.as_ref());
    for (k, rec) in records.iter().enumerate() {
        write_guarded(&dir.join(format!("run_{k}.csv")), record_csv(rec).as_bytes(), true)?;
        let mut bytes = Vec::new();
        formats::write_wvnn(&mut bytes, &rec.final_params, Some(&rec.final_adam))
            .map_err(|e| CliError::Format(e.to_string()))?;
        write_guarded(&dir.join(format!("run_{k}.wvnn")), &bytes, true)?;
    }
    let agg = aggregate(&records).map_err(|e| CliError::Compute(e.to_string()))?;
    write_guarded(
        &agg_path,
        wavesurrogate::trainer::aggregate_csv(&agg).as_bytes(),
        true,
    )?;
    let final_mean = agg.mean.last().copied().unwrap_or(f64::NAN);
    let final_median = agg.median.last().copied().unwrap_or(f64::NAN);
    println!(
        "train {}: {} runs, final mean val MSE {final_mean:.4e}, median {final_median:.4e}, {} diverged",
        train_dir(cfg).display(),
        records.len(),
        agg.n_diverged
    );
    Ok(records)
}

fn parse_reference(spec: &str) -> Result<RefLine, CliError> {
    let (label, value) = spec.split_once('=').ok_or_else(|| {
        CliError::Usage(format!("--reference takes LABEL=VALUE, got `{spec}`"))
    })?;
    let value: f64 = value
        .parse()
        .map_err(|_| CliError::Usage(format!("reference value `{value}` is not a number")))?;
    Ok(RefLine {
        label: label.to_string(),
        value,
    })
}

fn read_aggregate_curve(path: &Path) -> Result<Curve, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Format(format!("{}: row 1: empty file", path.display())))?
        .1;
    if header != "epoch,mean,median,geomean,n_diverged" {
        return Err(CliError::Format(format!(
            "{}: row 1: unexpected header `{header}`",
            path.display()
        )));
    }
    let mut points = Vec::new();
    for (idx, line) in lines {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(CliError::Format(format!(
                "{}: row {row}: expected 5 columns, found {}",
                path.display(),
                cols.len()
            )));
        }
        let epoch: f64 = cols[0].parse().map_err(|_| {
            CliError::Format(format!("{}: row {row}: bad epoch `{}`", path.display(), cols[0]))
        })?;
        let mean: f64 = cols[1].parse().map_err(|_| {
            CliError::Format(format!("{}: row {row}: bad mean `{}`", path.display(), cols[1]))
        })?;
        points.push((epoch, mean));
    }
    if points.is_empty() {
        return Err(CliError::Format(format!(
            "{}: row 2: no data rows",
            path.display()
        )));
    }
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    // label by parent dir when the stem is the generic aggregate name
    let label = if label == "aggregate" {
        path.parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or(label)
    } else {
        label
    };
    Ok(Curve { label, points })
}

fn cmd_plot(
    out: &Path,
    references: &[String],
    aggregates: &[PathBuf],
    force: bool,
) -> Result<(), CliError> {
    let refs: Vec<RefLine> = references
        .iter()
        .map(|s| parse_reference(s))
        .collect::<Result<_, _>>()?;
    let curves: Vec<Curve> = aggregates
        .iter()
        .map(|p| read_aggregate_curve(p))
        .collect::<Result<_, _>>()?;
    let svg = render_chart(&curves, &refs, "validation MSE over training")
        .map_err(|e| CliError::Compute(e.to_string()))?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    write_guarded(out, svg.as_bytes(), force)?;
    println!("plot: {} curves, {} references -> {}", curves.len(), refs.len(), out.display());
    Ok(())
}

fn cmd_reproduce(
    raw: &ExperimentConfig,
    base: &ResolvedConfig,
    figure: Figure,
    paper_scale: bool,
    seed_override: Option<u64>,
    force: bool,
) -> Result<(), CliError> {
    // scaled desk defaults unless the config file pins them explicitly
    let (def_reps, def_epochs) = if paper_scale { (30, 20_000) } else { (3, 2_000) };
    let repetitions = raw.repetitions.unwrap_or(def_reps);
    let epochs = raw.epochs.unwrap_or(def_epochs);
    let problem = WaveProblem::default();
    let out_dir = PathBuf::from(&base.output_dir);
    ensure_dir(&out_dir)?;

    let make_cfg = |experiment: Experiment, weighting: WeightScheme, rom_size: usize| {
        let mut cfg = base.clone();
        cfg.run.experiment = experiment;
        cfg.run.weighting = weighting;
        cfg.run.rom_size = rom_size;
        cfg.run.epochs = epochs;
        cfg.run.repetitions = repetitions;
        if let Some(s) = seed_override {
            cfg.run.seed = s;
        }
        let enriched = experiment.uses_data();
        if raw.n_interior.is_none() {
            cfg.run.n_interior = if enriched { 15_000 } else { 30_000 };
        }
        if enriched {
            cfg.run.n_data_t = raw.n_data_t.unwrap_or(150);
            cfg.run.n_data_xi = raw.n_data_xi.unwrap_or(100);
        } else {
            cfg.run.n_data_t = 0;
            cfg.run.n_data_xi = 0;
        }
        cfg
    };

    let mut manifest = String::new();
    let mut trained: Vec<(String, PathBuf)> = Vec::new();
    let mut train_variant = |cfg: &ResolvedConfig| -> Result<PathBuf, CliError> {
        let records = cmd_train(cfg, force)?;
        drop(records);
        let dir = train_dir(cfg);
        manifest.push_str(&format!("[{}]\n{}\n", dir.display(), cfg.manifest_lines()));
        let agg = dir.join("aggregate.csv");
        trained.push((dir.file_name().unwrap().to_string_lossy().into_owned(), agg.clone()));
        Ok(agg)
    };

    let svg_name;
    let mut refs: Vec<RefLine> = Vec::new();
    match figure {
        Figure::Baseline | Figure::Exact => {
            let experiment = if matches!(figure, Figure::Baseline) {
                svg_name = "baseline.svg";
                Experiment::Baseline
            } else {
                svg_name = "exact.svg";
                Experiment::ExactData
            };
            for weighting in [WeightScheme::Equal, WeightScheme::Lra, WeightScheme::Opt] {
                let cfg = make_cfg(experiment, weighting, base.run.rom_size);
                train_variant(&cfg)?;
            }
        }
        Figure::Rom => {
            svg_name = "rom.svg";
            // full-order model
            let fom_file = fom_path(base);
            if !fom_file.exists() || force {
                cmd_fom(base, 1, true)?;
            }
            let fom = load_fom(base)?;
            refs.push(RefLine {
                label: "FOM".into(),
                value: fom_mse(&fom, &problem),
            });
            // reduced models
            for n in [4usize, 8, 12] {
                if !rom_path(base, n).exists() || force {
                    cmd_rom(base, Some(n), true)?;
                }
                let surrogate = surrogate_from_file(base, n, &problem)?;
                refs.push(RefLine {
                    label: format!("ROM{n}"),
                    value: surrogate.rom_solution.mse_vs_exact(&problem),
                });
            }
            // reference curve: exact-data enrichment under OPT
            let cfg = make_cfg(Experiment::ExactData, WeightScheme::Opt, base.run.rom_size);
            train_variant(&cfg)?;
            for n in [4usize, 8, 12] {
                for experiment in [Experiment::RomData, Experiment::RomDataEs] {
                    let cfg = make_cfg(experiment, WeightScheme::Opt, n);
                    train_variant(&cfg)?;
                }
            }
        }
    }

    let curves: Vec<Curve> = trained
        .iter()
        .map(|(label, path)| {
            read_aggregate_curve(path).map(|mut c| {
                c.label = label.clone();
                c
            })
        })
        .collect::<Result<_, _>>()?;
    let svg = render_chart(&curves, &refs, "validation MSE over training")
        .map_err(|e| CliError::Compute(e.to_string()))?;
    let svg_path = out_dir.join(svg_name);
    write_guarded(&svg_path, svg.as_bytes(), force)?;

    // manifest: configs, input artifacts, emitted files
    manifest.push_str("[artifacts]\n");
    let mut artifact_paths: Vec<PathBuf> = vec![fom_path(base)];
    for n in [4usize, 8, 12] {
        artifact_paths.push(rom_path(base, n));
    }
    for (_, agg) in &trained {
        artifact_paths.push(agg.clone());
    }
    artifact_paths.push(svg_path.clone());
    for p in artifact_paths {
        if let Ok(bytes) = fs::read(&p) {
            manifest.push_str(&format!("{} {}\n", content_hash(&bytes), p.display()));
        }
    }
    let stem = svg_name.trim_end_matches(".svg");
    write_guarded(
        &out_dir.join(format!("{stem}_manifest.txt")),
        manifest.as_bytes(),
        force,
    )?;
    println!("reproduce: wrote {}", svg_path.display());
    Ok(())
}
