use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::RunRecord;
use super::sweep::mean_std;
use crate::data::Protocol;
use crate::error::{Error, Result};
use crate::strategy::Strategy;

/// Seed-aggregated results of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub seeds: Vec<u64>,
    /// Per step: mean and sample standard deviation of pooled accuracy.
    pub curve: Vec<(f64, f64)>,
    pub avg_acc: f64,
    pub avg_acc_std: f64,
    pub final_forgetting: Option<f64>,
    pub final_intransigence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub protocol: Protocol,
    pub dataset_hash: String,
    pub strategies: Vec<StrategySummary>,
}

/// Reads every run record directly inside `dir`, sorted by file name.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".json") && !name.ends_with(".failed.json") && !name.starts_with("summary")
        })
        .collect();
    paths.sort();
    paths.iter().map(|p| RunRecord::load(p)).collect()
}

fn single<T: PartialEq + Clone + std::fmt::Display>(values: impl Iterator<Item = T>, what: &str) -> Result<T> {
    let mut values = values;
    let first = values.next().ok_or_else(|| Error::Data("no run records found".into()))?;
    if let Some(other) = values.find(|v| *v != first) {
        return Err(Error::Comparison(format!("mixed {what}: {first} and {other}")));
    }
    Ok(first)
}

fn mean_of(values: Vec<Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.into_iter().collect();
    v.filter(|v| !v.is_empty()).map(|v| mean_std(&v).0)
}

/// Aggregates records by strategy. All records must share one protocol and
/// one dataset.
pub fn summarize(records: &[RunRecord]) -> Result<Report> {
    let protocol = single(records.iter().map(|r| r.config.protocol), "protocols")?;
    let dataset_hash = single(records.iter().map(|r| r.dataset_hash.clone()), "dataset hashes")?;
    let mut by_strategy: BTreeMap<Strategy, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        by_strategy.entry(r.config.strategy).or_default().push(r);
    }
    let strategies = by_strategy
        .into_iter()
        .map(|(strategy, runs)| {
            let steps = runs.iter().map(|r| r.metrics.step_acc.len()).min().unwrap_or(0);
            let curve = (0..steps)
                .map(|s| mean_std(&runs.iter().map(|r| r.metrics.step_acc[s]).collect::<Vec<_>>()))
                .collect();
            let (avg_acc, avg_acc_std) = mean_std(&runs.iter().map(|r| r.metrics.avg_acc).collect::<Vec<_>>());
            StrategySummary {
                strategy,
                seeds: runs.iter().map(|r| r.seed).collect(),
                curve,
                avg_acc,
                avg_acc_std,
                final_forgetting: mean_of(runs.iter().map(|r| r.metrics.final_forgetting()).collect()),
                final_intransigence: mean_of(runs.iter().map(|r| r.metrics.final_intransigence()).collect()),
            }
        })
        .collect();
    Ok(Report {
        protocol,
        dataset_hash,
        strategies,
    })
}

impl Report {
    pub fn curve_csv(summary: &StrategySummary) -> String {
        let mut out = String::from("step,mean,std,seeds\n");
        for (step, (mean, std)) in summary.curve.iter().enumerate() {
            let _ = writeln!(out, "{step},{mean:?},{std:?},{}", summary.seeds.len());
        }
        out
    }

    /// Plain-text summary; arrows mark whether higher or lower is better.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "protocol {}  dataset {}", self.protocol, &self.dataset_hash[..12.min(self.dataset_hash.len())]);
        let _ = writeln!(out, "values are means over seeds; ± is the sample standard deviation");
        let _ = writeln!(out, "{:<10} {:>6} {:>18} {:>8} {:>8}", "strategy", "seeds", "avg_acc ↑", "F_T ↓", "I_T ↓");
        for s in &self.strategies {
            let _ = writeln!(
                out,
                "{:<10} {:>6} {:>18} {:>8} {:>8}",
                s.strategy.name(),
                s.seeds.len(),
                format!("{:.4}±{:.4}", s.avg_acc, s.avg_acc_std),
                opt(s.final_forgetting),
                opt(s.final_intransigence)
            );
        }
        out
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

/// Summarizes a run directory and writes `curve_<strategy>.csv`,
/// `summary.txt` and `summary.json` into it.
pub fn report(dir: &Path) -> Result<Report> {
    let records = load_records(dir)?;
    let report = summarize(&records)?;
    for s in &report.strategies {
        std::fs::write(dir.join(format!("curve_{}.csv", s.strategy.name())), Report::curve_csv(s))?;
    }
    std::fs::write(dir.join("summary.txt"), report.summary_text())?;
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// Rank 1 and 2 of each column; absent when fewer than two rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Ranks {
    pub avg_acc: Option<u8>,
    pub forgetting: Option<u8>,
    pub intransigence: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub name: String,
    pub strategy: Strategy,
    pub avg_acc: f64,
    pub forgetting: Option<f64>,
    pub intransigence: Option<f64>,
    pub ranks: Ranks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub protocol: Protocol,
    pub dataset_hash: String,
    pub rows: Vec<CompareRow>,
}

/// Ranks `values` (None never ranks) and returns rank 1/2 per position.
fn top_two(values: &[Option<f64>], higher_is_better: bool) -> Vec<Option<u8>> {
    let mut idx: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (values[a].unwrap(), values[b].unwrap());
        let ord = x.total_cmp(&y);
        (if higher_is_better { ord.reverse() } else { ord }).then(a.cmp(&b))
    });
    let mut ranks = vec![None; values.len()];
    if values.len() < 2 {
        return ranks;
    }
    for (rank, &i) in idx.iter().take(2).enumerate() {
        ranks[i] = Some(rank as u8 + 1);
    }
    ranks
}

/// Side-by-side table of the strategies found in several run directories.
pub fn compare(dirs: &[PathBuf]) -> Result<ComparisonTable> {
    if dirs.is_empty() {
        return Err(Error::Config("nothing to compare".into()));
    }
    let mut reports = Vec::new();
    for d in dirs {
        reports.push((d, summarize(&load_records(d)?)?));
    }
    let protocol = single(reports.iter().map(|(_, r)| r.protocol), "protocols")?;
    let dataset_hash = single(reports.iter().map(|(_, r)| r.dataset_hash.clone()), "dataset hashes")?;
    let mut rows: Vec<CompareRow> = Vec::new();
    for (dir, rep) in &reports {
        for s in &rep.strategies {
            rows.push(CompareRow {
                name: s.strategy.name().to_string(),
                strategy: s.strategy,
                avg_acc: s.avg_acc,
                forgetting: s.final_forgetting,
                intransigence: s.final_intransigence,
                ranks: Ranks::default(),
            });
            let last = rows.len() - 1;
            if rows[..last].iter().any(|r| r.strategy == s.strategy) {
                rows[last].name = format!("{} ({})", s.strategy.name(), dir.display());
            }
        }
    }
    let acc = top_two(&rows.iter().map(|r| Some(r.avg_acc)).collect::<Vec<_>>(), true);
    let fgt = top_two(&rows.iter().map(|r| r.forgetting).collect::<Vec<_>>(), false);
    let int = top_two(&rows.iter().map(|r| r.intransigence).collect::<Vec<_>>(), false);
    for (i, r) in rows.iter_mut().enumerate() {
        r.ranks = Ranks {
            avg_acc: acc[i],
            forgetting: fgt[i],
            intransigence: int[i],
        };
    }
    Ok(ComparisonTable {
        protocol,
        dataset_hash,
        rows,
    })
}

fn mark(rank: Option<u8>) -> &'static str {
    match rank {
        Some(1) => "*",
        Some(2) => "†",
        _ => "",
    }
}

impl ComparisonTable {
    /// Text table; `*` marks the best value of a column, `†` the second.
    pub fn text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "protocol {}", self.protocol);
        let _ = writeln!(out, "{:<24} {:>11} {:>9} {:>9}", "strategy", "avg_acc ↑", "F_T ↓", "I_T ↓");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<24} {:>11} {:>9} {:>9}",
                r.name,
                format!("{:.4}{}", r.avg_acc, mark(r.ranks.avg_acc)),
                format!("{}{}", opt(r.forgetting), mark(r.ranks.forgetting)),
                format!("{}{}", opt(r.intransigence), mark(r.ranks.intransigence)),
            );
        }
        if self.rows.len() > 1 {
            let _ = writeln!(out, "* best, † second best");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_follow_direction() {
        let v = [Some(0.5), Some(0.9), Some(0.7)];
        assert_eq!(top_two(&v, true), vec![None, Some(1), Some(2)]);
        assert_eq!(top_two(&v, false), vec![Some(1), None, Some(2)]);
    }

    #[test]
    fn single_row_has_no_ranks() {
        assert_eq!(top_two(&[Some(0.5)], true), vec![None]);
    }

    #[test]
    fn missing_values_never_rank() {
        assert_eq!(top_two(&[None, Some(0.2), Some(0.1)], false), vec![None, Some(2), Some(1)]);
    }
}
