use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::RunResult;
use crate::data::Scenario;
use crate::error::{Error, Result};

/// Box-plot statistics of one cell's per-seed values. `std` is the sample
/// standard deviation (0 for a single value); quartiles interpolate
/// linearly between order statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::ConfigInvalid("no values to summarize".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let min = sorted[0];
    // Offsets from the minimum keep a constant sample exactly constant.
    let mean = min + sorted.iter().map(|v| v - min).sum::<f64>() / n as f64;
    let std = if n > 1 {
        (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(Summary {
        n,
        mean,
        std,
        min,
        q1: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q3: quantile(&sorted, 0.75),
        max: sorted[n - 1],
    })
}

pub fn write_results_csv<W: Write>(results: &[RunResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    fingerprint: &'a str,
    head: &'a str,
    scenario: Scenario,
    train_eta: f64,
    test_eta: f64,
    missing_aware: bool,
    metric: &'a str,
    n: usize,
    mean: f64,
    std: f64,
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
}

/// One row per fingerprint, in order of first appearance.
pub fn write_summary_csv<W: Write>(results: &[RunResult], out: W) -> Result<()> {
    let mut order: Vec<&str> = Vec::new();
    for r in results {
        if !order.contains(&r.fingerprint.as_str()) {
            order.push(&r.fingerprint);
        }
    }
    let mut w = csv::Writer::from_writer(out);
    for fp in order {
        let group: Vec<&RunResult> = results.iter().filter(|r| r.fingerprint == fp).collect();
        let values: Vec<f64> = group.iter().map(|r| r.value).collect();
        let first = group[0];
        let s = summarize(&values)?;
        w.serialize(SummaryRow {
            fingerprint: fp,
            head: &first.head,
            scenario: first.scenario,
            train_eta: first.train_eta,
            test_eta: first.test_eta,
            missing_aware: first.missing_aware,
            metric: &first.metric_name,
            n: s.n,
            mean: s.mean,
            std: s.std,
            min: s.min,
            q1: s.q1,
            median: s.median,
            q3: s.q3,
            max: s.max,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `results.csv` and `summary.csv` under `output_dir`.
pub fn emit_results(results: &[RunResult], output_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    if results.is_empty() {
        return Err(Error::ConfigInvalid("no results to emit".into()));
    }
    fs::create_dir_all(output_dir)?;
    let results_path = output_dir.join("results.csv");
    let summary_path = output_dir.join("summary.csv");
    let (mut rows, mut summary) = (Vec::new(), Vec::new());
    write_results_csv(results, &mut rows)?;
    write_summary_csv(results, &mut summary)?;
    fs::write(&results_path, rows)?;
    fs::write(&summary_path, summary)?;
    Ok((results_path, summary_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_values() {
        let s = summarize(&[0.1; 10]).unwrap();
        assert_eq!((s.mean, s.std, s.min, s.max, s.median), (0.1, 0.0, 0.1, 0.1, 0.1));
    }

    #[test]
    fn three_values() {
        let s = summarize(&[0.3, 0.1, 0.2]).unwrap();
        assert!((s.mean - 0.2).abs() < 1e-15);
        assert_eq!(s.median, 0.2);
        assert!((s.q1 - 0.15).abs() < 1e-15 && (s.q3 - 0.25).abs() < 1e-15);
        assert!((s.std - 0.1).abs() < 1e-15);
    }

    #[test]
    fn single_value_and_empty() {
        let s = summarize(&[0.5]).unwrap();
        assert_eq!((s.std, s.q1, s.q3), (0.0, 0.5, 0.5));
        assert!(summarize(&[]).is_err());
    }
}
