use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{persist, run_experiment_in_memory, RunFailure, RunRecord};
use crate::error::{Error, Result};
use crate::strategy::{ReferenceCache, Strategy, TrainConfig};

/// The parameter a sweep varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepGrid {
    Alpha(Vec<f64>),
    Beta(Vec<f64>),
    Tau(Vec<f64>),
    /// The four on/off combinations of rotation and distillation, for RAD.
    Ablation,
}

impl SweepGrid {
    /// Parses `alpha=0.5,1,2`, `beta=...`, `tau=...` or `ablation`.
    pub fn parse(text: &str) -> Result<Self> {
        if text == "ablation" {
            return Ok(SweepGrid::Ablation);
        }
        let (name, values) = text
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("grid must look like alpha=0.5,1,2 or be 'ablation', got {text:?}")))?;
        let values = values
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad grid value {v:?}"))))
            .collect::<Result<Vec<_>>>()?;
        match name {
            "alpha" => Ok(SweepGrid::Alpha(values)),
            "beta" => Ok(SweepGrid::Beta(values)),
            "tau" => Ok(SweepGrid::Tau(values)),
            _ => Err(Error::Config(format!("cannot sweep over {name:?}"))),
        }
    }

    /// One labelled training config per grid point.
    pub fn points(&self, base: &TrainConfig) -> Result<Vec<(String, TrainConfig)>> {
        let with = |name: &str, values: &[f64], set: fn(&mut TrainConfig, f64)| -> Result<Vec<(String, TrainConfig)>> {
            if values.is_empty() {
                return Err(Error::Config(format!("{name} grid is empty")));
            }
            Ok(values
                .iter()
                .map(|&v| {
                    let mut cfg = base.clone();
                    set(&mut cfg, v);
                    (format!("{name}={v}"), cfg)
                })
                .collect())
        };
        match self {
            SweepGrid::Alpha(v) => with("alpha", v, |c, v| c.alpha = v),
            SweepGrid::Beta(v) => with("beta", v, |c, v| c.beta = v),
            SweepGrid::Tau(v) => with("tau", v, |c, v| c.tau = v),
            SweepGrid::Ablation => Ok([(false, 0.0), (true, 0.0), (false, 1.0), (true, 1.0)]
                .into_iter()
                .map(|(rotation, beta)| {
                    let cfg = TrainConfig {
                        alpha: 1.0,
                        beta,
                        rotation,
                        ..base.clone()
                    };
                    (format!("rotation={rotation},beta={beta}"), cfg)
                })
                .collect()),
        }
    }
}

/// One row of the sensitivity table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub rotation: bool,
    /// Average incremental accuracy per completed seed.
    pub avg_acc: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub final_forgetting: Option<f64>,
    pub final_intransigence: Option<f64>,
}

#[derive(Debug, Default)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub records: Vec<RunRecord>,
    pub failures: Vec<(String, RunFailure)>,
}

impl SweepOutcome {
    /// Largest minus smallest row mean.
    pub fn spread(&self) -> f64 {
        let means = self.rows.iter().map(|r| r.mean);
        let hi = means.clone().fold(f64::NEG_INFINITY, f64::max);
        let lo = means.fold(f64::INFINITY, f64::min);
        hi - lo
    }

    pub fn table(&self, ablation: bool) -> String {
        let mut out = String::new();
        if ablation {
            let _ = writeln!(out, "rotation  distillation  avg_acc(mean±std)  F_T     I_T");
            for r in &self.rows {
                let _ = writeln!(
                    out,
                    "{:<9} {:<13} {:.4}±{:.4}      {}  {}",
                    if r.rotation { "yes" } else { "no" },
                    if r.beta > 0.0 { "yes" } else { "no" },
                    r.mean,
                    r.std,
                    fmt_opt(r.final_forgetting),
                    fmt_opt(r.final_intransigence)
                );
            }
        } else {
            let _ = writeln!(out, "point                  avg_acc(mean±std)  seeds");
            for r in &self.rows {
                let _ = writeln!(out, "{:<22} {:.4}±{:.4}      {}", r.label, r.mean, r.std, r.avg_acc.len());
            }
            let _ = writeln!(out, "spread (max - min of means): {:.4}", self.spread());
        }
        out
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("label,alpha,beta,tau,rotation,seeds,mean,std,final_forgetting,final_intransigence\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "\"{}\",{:?},{:?},{:?},{},{},{:?},{:?},{},{}",
                r.label,
                r.alpha,
                r.beta,
                r.tau,
                r.rotation,
                r.avg_acc.len(),
                r.mean,
                r.std,
                r.final_forgetting.map_or(String::new(), |v| format!("{v:?}")),
                r.final_intransigence.map_or(String::new(), |v| format!("{v:?}"))
            );
        }
        out
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "  -   ".to_string(), |v| format!("{v:.4}"))
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty()).map(|v| mean_std(&v).0)
}

/// Runs the base experiment once per grid point (ablation forces RAD).
/// With `persist_to`, each point's records go to their own subdirectory
/// and the table is written as `sensitivity.csv` / `sensitivity.txt`.
pub fn sweep(
    config: &ExperimentConfig,
    grid: &SweepGrid,
    cache: &ReferenceCache,
    persist_to: Option<&std::path::Path>,
) -> Result<SweepOutcome> {
    let mut outcome = SweepOutcome::default();
    for (label, train) in grid.points(&config.train)? {
        let mut point = ExperimentConfig {
            train,
            ..config.clone()
        };
        if *grid == SweepGrid::Ablation {
            point.strategy = Strategy::Rad;
        }
        let result = run_experiment_in_memory(&point, cache)?;
        if let Some(dir) = persist_to {
            persist(&point, &result, &dir.join(label.replace(',', "_")))?;
        }
        let avg: Vec<f64> = result.records.iter().map(|r| r.metrics.avg_acc).collect();
        let (mean, std) = mean_std(&avg);
        outcome.rows.push(SweepRow {
            label: label.clone(),
            alpha: point.train.alpha,
            beta: point.train.beta,
            tau: point.train.tau,
            rotation: point.train.rotation,
            avg_acc: avg,
            mean,
            std,
            final_forgetting: mean_opt(result.records.iter().map(|r| r.metrics.final_forgetting())),
            final_intransigence: mean_opt(result.records.iter().map(|r| r.metrics.final_intransigence())),
        });
        outcome.records.extend(result.records);
        outcome
            .failures
            .extend(result.failures.into_iter().map(|f| (label.clone(), f)));
    }
    if let Some(dir) = persist_to {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sensitivity.csv"), outcome.csv())?;
        std::fs::write(dir.join("sensitivity.txt"), outcome.table(*grid == SweepGrid::Ablation))?;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_grids() {
        assert_eq!(SweepGrid::parse("alpha=0.5,1,2").unwrap(), SweepGrid::Alpha(vec![0.5, 1.0, 2.0]));
        assert_eq!(SweepGrid::parse("tau=2").unwrap(), SweepGrid::Tau(vec![2.0]));
        assert_eq!(SweepGrid::parse("ablation").unwrap(), SweepGrid::Ablation);
        assert!(SweepGrid::parse("gamma=1").is_err());
        assert!(SweepGrid::parse("alpha=x").is_err());
    }

    #[test]
    fn alpha_points_keep_beta() {
        let pts = SweepGrid::Alpha(vec![0.5, 1.0, 2.0]).points(&TrainConfig::default()).unwrap();
        assert_eq!(pts.len(), 3);
        assert!(pts.iter().all(|(_, c)| c.beta == 1.0));
        assert_eq!(pts[2].1.alpha, 2.0);
    }

    #[test]
    fn ablation_layout() {
        let pts = SweepGrid::Ablation.points(&TrainConfig::default()).unwrap();
        let layout: Vec<(bool, f64)> = pts.iter().map(|(_, c)| (c.rotation, c.beta)).collect();
        assert_eq!(layout, vec![(false, 0.0), (true, 0.0), (false, 1.0), (true, 1.0)]);
        assert!(pts.iter().all(|(_, c)| c.alpha == 1.0));
    }

    #[test]
    fn empty_grid() {
        assert!(SweepGrid::Beta(vec![]).points(&TrainConfig::default()).is_err());
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[5.0]), (5.0, 0.0));
    }
}
