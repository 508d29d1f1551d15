use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, TrainConfig};
use crate::data::{split, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{full_report, DisparityReport, EvalOptions};

pub const SWEEP_HEADER: &str = "lambda,seed,split,error,ei,dp,eo,eod,be,er";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub seed: u64,
    /// `train` or `test`.
    pub split: String,
    pub report: DisparityReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// `(lambda, seed, reason)` for runs that did not finish.
    pub failures: Vec<(f64, u64, String)>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.lambda, r.seed, r.split, r.report.csv_fields().join(",")));
        }
        out
    }
}

/// Trains one model per (λ, seed) on a seed-specific split and reports both halves.
///
/// A failing run is recorded in `failures`; the other runs still complete.
pub fn pareto_sweep(
    data: &Dataset,
    base: &TrainConfig,
    lambdas: &[f64],
    seeds: &[u64],
    test_fraction: f64,
    eval: &EvalOptions,
) -> Result<SweepResult> {
    if lambdas.is_empty() {
        return Err(Error::config("lambda list is empty"));
    }
    if seeds.is_empty() {
        return Err(Error::config("seed list is empty"));
    }
    let splits: Vec<(u64, Dataset, Dataset)> = seeds
        .iter()
        .map(|&s| split(data, test_fraction, s).map(|(tr, te)| (s, tr, te)))
        .collect::<Result<_>>()?;
    let jobs: Vec<(f64, usize)> = lambdas
        .iter()
        .flat_map(|&l| (0..splits.len()).map(move |k| (l, k)))
        .collect();
    let outcomes: Vec<std::result::Result<[SweepRow; 2], (f64, u64, String)>> = jobs
        .par_iter()
        .map(|&(lambda, k)| {
            let (seed, tr, te) = &splits[k];
            let cfg = TrainConfig {
                lambda,
                seed: *seed,
                ..base.clone()
            };
            let m = train(tr, &cfg).map_err(|e| (lambda, *seed, e.to_string()))?;
            let row = |name: &str, d: &Dataset| SweepRow {
                lambda,
                seed: *seed,
                split: name.to_string(),
                report: full_report(&m.scorer, d, &cfg.budget, eval),
            };
            Ok([row("train", tr), row("test", te)])
        })
        .collect();
    let mut result = SweepResult::default();
    for o in outcomes {
        match o {
            Ok(rows) => result.rows.extend(rows),
            Err(f) => {
                log::warn!("sweep run lambda = {}, seed = {} failed: {}", f.0, f.1, f.2);
                result.failures.push(f);
            }
        }
    }
    Ok(result)
}

/// Test rows that no other test row beats on both error and EI; sorted by error.
pub fn frontier(rows: &[SweepRow]) -> Vec<SweepRow> {
    let pts: Vec<(&SweepRow, f64, f64)> = rows
        .iter()
        .filter(|r| r.split == "test")
        .filter_map(|r| Some((r, r.report.error_rate?, r.report.ei?)))
        .collect();
    let mut out: Vec<SweepRow> = pts
        .iter()
        .filter(|(_, e, u)| {
            !pts
                .iter()
                .any(|(_, e2, u2)| e2 <= e && u2 <= u && (e2 < e || u2 < u))
        })
        .map(|(r, _, _)| (*r).clone())
        .collect();
    out.sort_by(|a, b| {
        a.report
            .error_rate
            .partial_cmp(&b.report.error_rate)
            .unwrap()
            .then(a.lambda.total_cmp(&b.lambda))
    });
    out
}
