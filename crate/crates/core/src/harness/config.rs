use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, load_dataset, Dataset, DatasetFormat, Protocol, SyntheticSpec};
use crate::error::{Error, Result};
use crate::strategy::{DistillMode, EvalMode, Strategy, TrainConfig};

/// Where an experiment's images come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic {
        #[serde(default)]
        spec: SyntheticSpec,
    },
    File {
        path: PathBuf,
        #[serde(default = "default_format")]
        format: DatasetFormat,
    },
}

fn default_format() -> DatasetFormat {
    DatasetFormat::Binary
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic {
            spec: SyntheticSpec::default(),
        }
    }
}

impl DatasetSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSource::Synthetic { spec } => generate_synthetic(spec),
            DatasetSource::File { path, format } => load_dataset(path, *format),
        }
    }
}

/// A fully resolved experiment: one strategy on one protocol, for each seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub protocol: Protocol,
    pub strategy: Strategy,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    /// Concurrent runs; each run is single-threaded.
    pub workers: usize,
}

/// The on-disk form: every field optional, filled from defaults and flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    dataset: Option<DatasetSource>,
    protocol: Option<Protocol>,
    strategy: Option<Strategy>,
    train: Option<TrainConfig>,
    seeds: Option<Vec<u64>>,
    out: Option<PathBuf>,
    workers: Option<usize>,
}

/// Command-line overrides. Anything set here wins over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub protocol: Option<Protocol>,
    pub strategy: Option<Strategy>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub tau: Option<f64>,
    pub eval_mode: Option<EvalMode>,
    pub distill_mode: Option<DistillMode>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

/// Reads an optional JSON config file, applies the overrides and validates
/// the result against the dataset's class count.
pub fn parse_config(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let file = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str::<ConfigFile>(&text)
                .map_err(|e| Error::Config(format!("invalid config {}: {e}", p.display())))?
        }
        None => ConfigFile::default(),
    };
    let mut train = file.train.unwrap_or_default();
    if let Some(a) = overrides.alpha {
        train.alpha = a;
    }
    if let Some(b) = overrides.beta {
        train.beta = b;
    }
    if let Some(t) = overrides.tau {
        train.tau = t;
    }
    if let Some(m) = overrides.eval_mode {
        train.eval_mode = m;
    }
    if let Some(m) = overrides.distill_mode {
        train.distill_mode = m;
    }
    let seeds = match (&overrides.seeds, overrides.seed) {
        (Some(s), _) => s.clone(),
        (None, Some(s)) => vec![s],
        (None, None) => file.seeds.unwrap_or_else(|| vec![0]),
    };
    let config = ExperimentConfig {
        dataset: file.dataset.unwrap_or_default(),
        protocol: overrides
            .protocol
            .or(file.protocol)
            .ok_or_else(|| Error::Config("no protocol given (e.g. --protocol B4-2)".into()))?,
        strategy: overrides
            .strategy
            .or(file.strategy)
            .ok_or_else(|| Error::Config("no strategy given (finetune, featstar or rad)".into()))?,
        train,
        seeds,
        out: overrides.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("runs")),
        workers: overrides.workers.or(file.workers).unwrap_or(1),
    };
    config.validate()?;
    Ok(config)
}

impl ExperimentConfig {
    /// Checks everything that can be checked without training. For a file
    /// dataset this reads the file to learn its class count.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        let classes = match &self.dataset {
            DatasetSource::Synthetic { spec } => spec.n_classes,
            DatasetSource::File { path, format } => {
                if !path.exists() {
                    return Err(Error::Config(format!("dataset file {} does not exist", path.display())));
                }
                load_dataset(path, *format)?.n_classes()
            }
        };
        self.protocol.task_sizes(classes)?;
        Ok(())
    }

    /// File stem shared by this experiment's per-seed artifacts.
    pub fn run_stem(&self, seed: u64) -> String {
        format!("{}_{}_s{seed}", self.strategy.name(), self.protocol)
    }

    pub fn train_for_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(protocol: &str, strategy: &str) -> Overrides {
        Overrides {
            protocol: Some(protocol.parse().unwrap()),
            strategy: Some(strategy.parse().unwrap()),
            ..Overrides::default()
        }
    }

    #[test]
    fn flags_only() {
        let cfg = parse_config(None, &flags("B4-2", "rad")).unwrap();
        assert_eq!(cfg.protocol.task_sizes(8).unwrap(), vec![4, 2, 2]);
        assert_eq!(cfg.strategy, Strategy::Rad);
        assert_eq!((cfg.train.alpha, cfg.train.beta), (1.0, 1.0));
        assert_eq!(cfg.seeds, vec![0]);
    }

    #[test]
    fn indivisible_protocol() {
        let err = parse_config(None, &flags("B4-3", "rad")).unwrap_err();
        assert!(matches!(err, Error::Protocol { .. }));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_strategy_in_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"protocol": "B4-2", "strategy": "lwf"}"#).unwrap();
        assert!(matches!(parse_config(Some(&p), &Overrides::default()), Err(Error::Config(_))));
    }

    #[test]
    fn missing_dataset_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(
            &p,
            r#"{"protocol": "B4-2", "strategy": "rad", "dataset": {"kind": "file", "path": "/nonexistent/x.cild"}}"#,
        )
        .unwrap();
        assert!(matches!(parse_config(Some(&p), &Overrides::default()), Err(Error::Config(_))));
    }

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(
            &p,
            r#"{"protocol": "B2-3", "strategy": "featstar", "seeds": [3, 4], "train": {"alpha": 2.0, "epochs_initial": 5}}"#,
        )
        .unwrap();
        let o = Overrides {
            alpha: Some(0.5),
            seed: Some(9),
            ..flags("B4-2", "rad")
        };
        let cfg = parse_config(Some(&p), &o).unwrap();
        assert_eq!(cfg.protocol.to_string(), "B4-2");
        assert_eq!(cfg.strategy, Strategy::Rad);
        assert_eq!(cfg.train.alpha, 0.5);
        assert_eq!(cfg.train.epochs_initial, 5);
        assert_eq!(cfg.seeds, vec![9]);
        let cfg = parse_config(Some(&p), &Overrides::default()).unwrap();
        assert_eq!(cfg.seeds, vec![3, 4]);
        assert_eq!(cfg.train.alpha, 2.0);
    }

    #[test]
    fn empty_seed_list() {
        let o = Overrides {
            seeds: Some(vec![]),
            ..flags("B4-2", "rad")
        };
        assert!(matches!(parse_config(None, &o), Err(Error::Config(_))));
    }

    #[test]
    fn run_stem_format() {
        let cfg = parse_config(None, &flags("B4-2", "featstar")).unwrap();
        assert_eq!(cfg.run_stem(3), "featstar_B4-2_s3");
    }
}
