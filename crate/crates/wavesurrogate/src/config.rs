//! `key = value` experiment configuration with `#` comments.
//!
//! Unknown keys are rejected with their line number. Every key has a default;
//! sampling counts default per experiment (non-data-enriched runs use 30,000
//! interior points and no data grid, data-enriched runs 15,000 + 150×100).

use crate::losses::WeightScheme;
use crate::trainer::{Experiment, RunConfig};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: invalid value `{value}` for `{key}`: {reason}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
    #[error("inconsistent configuration: {0}")]
    Inconsistent(String),
}

/// Raw parsed configuration; unset keys fall back to documented defaults at
/// [`ExperimentConfig::resolve`] time.
#[derive(Debug, Clone, Default)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub weighting: Option<WeightScheme>,
    pub rom_size: Option<usize>,
    pub epochs: Option<usize>,
    pub repetitions: Option<usize>,
    pub seed: Option<u64>,
    pub n_interior: Option<usize>,
    pub n_boundary: Option<usize>,
    pub n_data_t: Option<usize>,
    pub n_data_xi: Option<usize>,
    pub fem_nodes: Option<usize>,
    pub fem_steps: Option<usize>,
    pub safety_factor: Option<f64>,
    pub validation_grid: Option<usize>,
    pub log_stride: Option<usize>,
    pub output_dir: Option<String>,
}

/// One line per key: name, default, meaning. This is what `--help` prints.
pub const KEY_DOCS: &[(&str, &str, &str)] = &[
    ("experiment", "baseline", "baseline | exact_data | rom_data | rom_data_es"),
    ("weighting", "equal", "equal | lra | opt"),
    ("rom_size", "12", "reduced basis size for rom experiments"),
    ("epochs", "20000", "training epochs per run"),
    ("repetitions", "30", "independently seeded runs"),
    ("seed", "1", "base seed; run k uses seed + k"),
    ("n_interior", "30000 / 15000", "PDE collocation points (per experiment table)"),
    ("n_boundary", "3000", "boundary/initial condition points"),
    ("n_data_t", "0 / 150", "data-grid time slices (per experiment table)"),
    ("n_data_xi", "0 / 100", "data-grid spatial points (per experiment table)"),
    ("fem_nodes", "3000", "FOM spatial nodes"),
    ("fem_steps", "3000", "FOM time levels"),
    ("safety_factor", "1.0", "certificate inflation ε ← safety·ε"),
    ("validation_grid", "256", "validation grid edge length"),
    ("log_stride", "10", "epochs between logged rows"),
    ("output_dir", "out", "directory for all artifacts"),
];

pub fn help_text() -> String {
    let mut s = String::from("Configuration keys (key = value, one per line, `#` comments):\n");
    for (key, default, doc) in KEY_DOCS {
        s.push_str(&format!("  {key:<16} default {default:<14} {doc}\n"));
    }
    s
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Experiment::Baseline => "baseline",
            Experiment::ExactData => "exact_data",
            Experiment::RomData => "rom_data",
            Experiment::RomDataEs => "rom_data_es",
        };
        f.write_str(s)
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            WeightScheme::Equal => "equal",
            WeightScheme::Lra => "lra",
            WeightScheme::Opt => "opt",
        };
        f.write_str(s)
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let stripped = stripped.trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or_else(|| ConfigError::Malformed {
                line,
                text: stripped.to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |reason: &str| ConfigError::BadValue {
                line,
                key: key.to_string(),
                value: value.to_string(),
                reason: reason.to_string(),
            };
            match key {
                "experiment" => {
                    cfg.experiment = Some(match value.to_ascii_lowercase().as_str() {
                        "baseline" => Experiment::Baseline,
                        "exact_data" => Experiment::ExactData,
                        "rom_data" => Experiment::RomData,
                        "rom_data_es" => Experiment::RomDataEs,
                        _ => return Err(bad("expected baseline|exact_data|rom_data|rom_data_es")),
                    })
                }
                "weighting" => {
                    cfg.weighting = Some(match value.to_ascii_lowercase().as_str() {
                        "equal" => WeightScheme::Equal,
                        "lra" => WeightScheme::Lra,
                        "opt" => WeightScheme::Opt,
                        _ => return Err(bad("expected equal|lra|opt")),
                    })
                }
                "rom_size" => cfg.rom_size = Some(parse_num(value).map_err(|e| bad(&e))?),
                "epochs" => cfg.epochs = Some(parse_num(value).map_err(|e| bad(&e))?),
                "repetitions" => cfg.repetitions = Some(parse_num(value).map_err(|e| bad(&e))?),
                "seed" => cfg.seed = Some(parse_num(value).map_err(|e| bad(&e))?),
                "n_interior" => cfg.n_interior = Some(parse_num(value).map_err(|e| bad(&e))?),
                "n_boundary" => cfg.n_boundary = Some(parse_num(value).map_err(|e| bad(&e))?),
                "n_data_t" => cfg.n_data_t = Some(parse_num(value).map_err(|e| bad(&e))?),
                "n_data_xi" => cfg.n_data_xi = Some(parse_num(value).map_err(|e| bad(&e))?),
                "fem_nodes" => cfg.fem_nodes = Some(parse_num(value).map_err(|e| bad(&e))?),
                "fem_steps" => cfg.fem_steps = Some(parse_num(value).map_err(|e| bad(&e))?),
                "safety_factor" => {
                    let v: f64 = value.parse().map_err(|_| bad("not a number"))?;
                    if !(v.is_finite() && v >= 1.0) {
                        return Err(bad("must be a finite number ≥ 1"));
                    }
                    cfg.safety_factor = Some(v);
                }
                "validation_grid" => {
                    cfg.validation_grid = Some(parse_num(value).map_err(|e| bad(&e))?)
                }
                "log_stride" => cfg.log_stride = Some(parse_num(value).map_err(|e| bad(&e))?),
                "output_dir" => cfg.output_dir = Some(value.to_string()),
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
            }
        }
        Ok(cfg)
    }

    /// Apply defaults (per-experiment where the table says so) and validate.
    pub fn resolve(&self) -> Result<ResolvedConfig, ConfigError> {
        let resolved = self.resolve_unvalidated();
        resolved.validate()?;
        Ok(resolved)
    }

    /// Defaults applied, cross-field checks deferred: sweep drivers override
    /// experiment and sampling counts per variant before validating.
    pub fn resolve_lenient(&self) -> Result<ResolvedConfig, ConfigError> {
        let resolved = self.resolve_unvalidated();
        resolved.validate_basics()?;
        Ok(resolved)
    }

    fn resolve_unvalidated(&self) -> ResolvedConfig {
        let experiment = self.experiment.unwrap_or(Experiment::Baseline);
        let enriched = experiment.uses_data();
        let run = RunConfig {
            experiment,
            weighting: self.weighting.unwrap_or(WeightScheme::Equal),
            rom_size: self.rom_size.unwrap_or(12),
            epochs: self.epochs.unwrap_or(20_000),
            repetitions: self.repetitions.unwrap_or(30),
            seed: self.seed.unwrap_or(1),
            n_interior: self
                .n_interior
                .unwrap_or(if enriched { 15_000 } else { 30_000 }),
            n_boundary: self.n_boundary.unwrap_or(3_000),
            n_data_t: self.n_data_t.unwrap_or(if enriched { 150 } else { 0 }),
            n_data_xi: self.n_data_xi.unwrap_or(if enriched { 100 } else { 0 }),
            validation_grid: self.validation_grid.unwrap_or(256),
            log_stride: self.log_stride.unwrap_or(10),
            learning_rate: 1e-3,
            lra_rate: 0.9,
            lra_every: 10,
            layer_sizes: crate::network::DEFAULT_LAYER_SIZES.to_vec(),
        };
        ResolvedConfig {
            run,
            fem_nodes: self.fem_nodes.unwrap_or(3_000),
            fem_steps: self.fem_steps.unwrap_or(3_000),
            safety_factor: self.safety_factor.unwrap_or(1.0),
            output_dir: self.output_dir.clone().unwrap_or_else(|| "out".to_string()),
        }
    }
}

fn parse_num<T: std::str::FromStr>(value: &str) -> Result<T, String> {
    value.parse().map_err(|_| "not a valid number".to_string())
}

/// Configuration with every default applied.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub run: RunConfig,
    pub fem_nodes: usize,
    pub fem_steps: usize,
    pub safety_factor: f64,
    pub output_dir: String,
}

impl ResolvedConfig {
    fn validate_basics(&self) -> Result<(), ConfigError> {
        let r = &self.run;
        if r.epochs == 0 || r.repetitions == 0 {
            return Err(ConfigError::Inconsistent(
                "epochs and repetitions must be at least 1".into(),
            ));
        }
        if r.log_stride == 0 {
            return Err(ConfigError::Inconsistent("log_stride must be at least 1".into()));
        }
        if self.fem_nodes < 3 || self.fem_steps < 2 {
            return Err(ConfigError::Inconsistent(
                "fem_nodes ≥ 3 and fem_steps ≥ 2 required".into(),
            ));
        }
        if r.validation_grid < 2 {
            return Err(ConfigError::Inconsistent("validation_grid must be ≥ 2".into()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_basics()?;
        let r = &self.run;
        if r.experiment.uses_data() && (r.n_data_t == 0 || r.n_data_xi == 0) {
            return Err(ConfigError::Inconsistent(format!(
                "experiment {} needs a data grid but n_data_t×n_data_xi = {}×{}",
                r.experiment, r.n_data_t, r.n_data_xi
            )));
        }
        if !r.experiment.uses_data() && r.n_data_t * r.n_data_xi != 0 {
            return Err(ConfigError::Inconsistent(
                "baseline experiment does not take data points".into(),
            ));
        }
        if matches!(
            r.experiment,
            Experiment::RomData | Experiment::RomDataEs
        ) && r.rom_size == 0
        {
            return Err(ConfigError::Inconsistent("rom_size must be positive".into()));
        }
        Ok(())
    }

    /// `key = value` rendering of every setting, for manifests.
    pub fn manifest_lines(&self) -> String {
        let r = &self.run;
        let mut s = String::new();
        s.push_str(&format!("experiment = {}\n", r.experiment));
        s.push_str(&format!("weighting = {}\n", r.weighting));
        s.push_str(&format!("rom_size = {}\n", r.rom_size));
        s.push_str(&format!("epochs = {}\n", r.epochs));
        s.push_str(&format!("repetitions = {}\n", r.repetitions));
        s.push_str(&format!("seed = {}\n", r.seed));
        s.push_str(&format!("n_interior = {}\n", r.n_interior));
        s.push_str(&format!("n_boundary = {}\n", r.n_boundary));
        s.push_str(&format!("n_data_t = {}\n", r.n_data_t));
        s.push_str(&format!("n_data_xi = {}\n", r.n_data_xi));
        s.push_str(&format!("fem_nodes = {}\n", self.fem_nodes));
        s.push_str(&format!("fem_steps = {}\n", self.fem_steps));
        s.push_str(&format!("safety_factor = {}\n", self.safety_factor));
        s.push_str(&format!("validation_grid = {}\n", r.validation_grid));
        s.push_str(&format!("log_stride = {}\n", r.log_stride));
        s.push_str(&format!("output_dir = {}\n", self.output_dir));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_experiment_table() {
        let cfg = ExperimentConfig::parse("").unwrap().resolve().unwrap();
        assert_eq!(cfg.run.n_interior, 30_000);
        assert_eq!(cfg.run.n_data_t, 0);
        assert_eq!(cfg.run.epochs, 20_000);
        assert_eq!(cfg.run.repetitions, 30);
        assert_eq!(cfg.fem_nodes, 3_000);

        let cfg = ExperimentConfig::parse("experiment = exact_data")
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(cfg.run.n_interior, 15_000);
        assert_eq!(cfg.run.n_data_t, 150);
        assert_eq!(cfg.run.n_data_xi, 100);
    }

    #[test]
    fn comments_whitespace_and_overrides() {
        let text = "
# a comment
experiment = rom_data_es   # trailing comment
rom_size=8
seed   =   17
output_dir = results/run1
";
        let cfg = ExperimentConfig::parse(text).unwrap().resolve().unwrap();
        assert_eq!(cfg.run.experiment, Experiment::RomDataEs);
        assert_eq!(cfg.run.rom_size, 8);
        assert_eq!(cfg.run.seed, 17);
        assert_eq!(cfg.output_dir, "results/run1");
    }

    #[test]
    fn unknown_key_reports_line_number() {
        let text = "seed = 3\nnot_a_key = 5\n";
        match ExperimentConfig::parse(text) {
            Err(ConfigError::UnknownKey { line, key }) => {
                assert_eq!(line, 2);
                assert_eq!(key, "not_a_key");
            }
            other => panic!("expected unknown-key error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_and_bad_values_report_lines() {
        match ExperimentConfig::parse("seed 3") {
            Err(ConfigError::Malformed { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        match ExperimentConfig::parse("\nepochs = many") {
            Err(ConfigError::BadValue { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        match ExperimentConfig::parse("safety_factor = 0.5") {
            Err(ConfigError::BadValue { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inconsistencies_are_rejected_before_compute() {
        let cfg = ExperimentConfig::parse("experiment = exact_data\nn_data_t = 0").unwrap();
        assert!(matches!(cfg.resolve(), Err(ConfigError::Inconsistent(_))));
        let cfg = ExperimentConfig::parse("experiment = baseline\nn_data_t = 5\nn_data_xi = 5")
            .unwrap();
        assert!(matches!(cfg.resolve(), Err(ConfigError::Inconsistent(_))));
    }

    #[test]
    fn help_text_lists_every_key() {
        let help = help_text();
        for (key, _, _) in KEY_DOCS {
            assert!(help.contains(key), "missing {key}");
        }
        // and the key list matches the struct fields the parser accepts
        assert_eq!(KEY_DOCS.len(), 16);
    }

    #[test]
    fn manifest_contains_every_key() {
        let cfg = ExperimentConfig::parse("").unwrap().resolve().unwrap();
        let m = cfg.manifest_lines();
        for (key, _, _) in KEY_DOCS {
            assert!(m.contains(&format!("{key} = ")), "missing {key}");
        }
    }
}
