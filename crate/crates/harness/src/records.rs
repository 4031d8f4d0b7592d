//! Evaluation records and the two CSV files built from them.
//!
//! `returns.csv`: `step,variant,seed,mean_return`, one row per
//! (step, variant, seed). `summary.csv`: `step,variant,n_seeds,mean,stderr`,
//! one row per (step, variant), stderr being the sample standard deviation
//! over seeds divided by the square root of the seed count (0 for one seed).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use confound_core::envs::EnvVariant;

use crate::error::{io_err, LabError, Result};

pub const RETURNS_HEADER: &str = "step,variant,seed,mean_return";
pub const SUMMARY_HEADER: &str = "step,variant,n_seeds,mean,stderr";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub step: usize,
    pub variant: EnvVariant,
    pub seed: u64,
    /// Mean undiscounted return over the evaluation episodes.
    pub mean_return: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub step: usize,
    pub variant: EnvVariant,
    pub n_seeds: usize,
    pub mean: f64,
    pub stderr: f64,
}

pub fn returns_csv(records: &[EvalRecord]) -> String {
    let mut s = format!("{RETURNS_HEADER}\n");
    for r in records {
        writeln!(s, "{},{},{},{}", r.step, r.variant, r.seed, r.mean_return).expect("string write");
    }
    s
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        writeln!(s, "{},{},{},{},{}", r.step, r.variant, r.n_seeds, r.mean, r.stderr).expect("string write");
    }
    s
}

pub fn parse_returns(text: &str, path: &str) -> Result<Vec<EvalRecord>> {
    let err = |msg: String| LabError::Csv { path: path.to_string(), msg };
    let mut lines = text.lines();
    if lines.next() != Some(RETURNS_HEADER) {
        return Err(err(format!("expected header `{RETURNS_HEADER}`")));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || err(format!("row {}: `{line}`", i + 2));
        if f.len() != 4 {
            return Err(bad());
        }
        out.push(EvalRecord {
            step: f[0].parse().map_err(|_| bad())?,
            variant: f[1].parse().map_err(|_| bad())?,
            seed: f[2].parse().map_err(|_| bad())?,
            mean_return: f[3].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

pub fn read_returns(path: &Path) -> Result<Vec<EvalRecord>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_returns(&text, &path.display().to_string())
}

fn variant_order(v: EnvVariant) -> u8 {
    match v {
        EnvVariant::Train => 0,
        EnvVariant::Eval => 1,
    }
}

/// Mean and standard error across seeds per (step, variant). Refuses
/// duplicate rows and groups with differing seed sets, which is what a
/// directory mixing runs of different configs looks like.
pub fn aggregate(records: &[EvalRecord]) -> std::result::Result<Vec<SummaryRow>, String> {
    if records.is_empty() {
        return Err("no records".into());
    }
    let mut groups: BTreeMap<(usize, u8), (EnvVariant, BTreeMap<u64, f64>)> = BTreeMap::new();
    for r in records {
        let g = groups.entry((r.step, variant_order(r.variant))).or_insert_with(|| (r.variant, BTreeMap::new()));
        if g.1.insert(r.seed, r.mean_return).is_some() {
            return Err(format!("duplicate row for step {} {} seed {}", r.step, r.variant, r.seed));
        }
    }
    let seeds: BTreeSet<u64> = records.iter().map(|r| r.seed).collect();
    let mut rows = Vec::with_capacity(groups.len());
    for ((step, _), (variant, by_seed)) in groups {
        if by_seed.len() != seeds.len() {
            return Err(format!("step {step} {variant} has {} of {} seeds", by_seed.len(), seeds.len()));
        }
        let n = by_seed.len();
        let mean = by_seed.values().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = by_seed.values().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        rows.push(SummaryRow { step, variant, n_seeds: n, mean, stderr });
    }
    let steps: BTreeSet<usize> = rows.iter().map(|r| r.step).collect();
    for v in [EnvVariant::Train, EnvVariant::Eval] {
        let vs: BTreeSet<usize> = rows.iter().filter(|r| r.variant == v).map(|r| r.step).collect();
        if !vs.is_empty() && vs != steps {
            return Err(format!("{v} rows cover different steps"));
        }
    }
    Ok(rows)
}

/// Aggregates `returns.csv` in a run directory and writes `summary.csv`.
pub fn aggregate_dir(dir: &Path) -> Result<Vec<SummaryRow>> {
    let path = dir.join("returns.csv");
    let records = read_returns(&path)?;
    let rows = aggregate(&records).map_err(|msg| LabError::Csv { path: path.display().to_string(), msg })?;
    let out = dir.join("summary.csv");
    std::fs::write(&out, summary_csv(&rows)).map_err(io_err(&out))?;
    Ok(rows)
}

/// Seed-mean curve of one variant, ordered by step.
pub fn curve(rows: &[SummaryRow], variant: EnvVariant) -> Vec<(usize, f64)> {
    rows.iter().filter(|r| r.variant == variant).map(|r| (r.step, r.mean)).collect()
}
