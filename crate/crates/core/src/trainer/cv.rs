//! Two-stage k-fold selection of the fairness weight λ (and optionally the learning rate).

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{ei_disparity, error_rate, EvalOptions};
use crate::rng::{rng_for, stream};

pub const STAGE_ONE_GRID: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 0.9];
const STAGE_TWO_OFFSETS: [f64; 5] = [-0.1, -0.05, 0.0, 0.05, 0.1];
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub stage_one: Vec<f64>,
    /// Learning rates to try jointly with λ; empty keeps the base config's rate.
    #[serde(default)]
    pub learning_rates: Vec<f64>,
    /// Allowed validation error above the λ = 0 baseline.
    pub error_slack: f64,
    #[serde(default)]
    pub eval: EvalOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            stage_one: STAGE_ONE_GRID.to_vec(),
            learning_rates: Vec::new(),
            error_slack: 0.05,
            eval: EvalOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub lambda: f64,
    pub learning_rate: f64,
    /// Mean over folds that produced both metrics; NaN when none did.
    pub error: f64,
    pub ei: f64,
    pub folds_used: usize,
    pub skipped_folds: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda: f64,
    pub learning_rate: f64,
    pub baseline_error: f64,
    pub stage_one: Vec<CvScore>,
    pub stage_two: Vec<CvScore>,
}

/// `{max(λ* + ε, 0)}` for ε in ±0.1, ±0.05, 0; values ≥ 1 are dropped since the
/// objective is undefined there.
pub fn stage_two_grid(best: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for e in STAGE_TWO_OFFSETS {
        let l = ((best + e).max(0.0) * 1e9).round() / 1e9;
        if l < 1.0 && !out.iter().any(|&v| v == l) {
            out.push(l);
        }
    }
    out
}

fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, stream::FOLDS));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

struct Folds {
    parts: Vec<(Dataset, Dataset)>,
}

impl Folds {
    fn new(data: &Dataset, k: usize, seed: u64) -> Result<Self> {
        let assign = fold_assignment(data.len(), k, seed);
        let mut parts = Vec::with_capacity(k);
        for f in 0..k {
            let (tr, va): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| assign[i] != f);
            parts.push((data.subset(&tr)?, data.subset(&va)?));
        }
        Ok(Self { parts })
    }

    fn score(&self, base: &TrainConfig, lambda: f64, lr: f64, eval: &EvalOptions) -> CvScore {
        let cfg = TrainConfig {
            lambda,
            learning_rate: lr,
            ..base.clone()
        };
        let per_fold: Vec<std::result::Result<(f64, f64), String>> = self
            .parts
            .par_iter()
            .map(|(tr, va)| {
                let m = train(tr, &cfg).map_err(|e| e.to_string())?;
                let err = error_rate(&m.scorer, va).map_err(|e| e.to_string())?;
                let ei = ei_disparity(&m.scorer, va, &cfg.budget, eval).map_err(|e| e.to_string())?;
                Ok((err, ei))
            })
            .collect();
        let mut skipped = Vec::new();
        let (mut err, mut ei, mut used) = (0.0, 0.0, 0);
        for (f, r) in per_fold.into_iter().enumerate() {
            match r {
                Ok((a, b)) => {
                    err += a;
                    ei += b;
                    used += 1;
                }
                Err(e) => skipped.push(format!("fold {}: {e}", f + 1)),
            }
        }
        let mean = |s: f64| if used > 0 { s / used as f64 } else { f64::NAN };
        CvScore {
            lambda,
            learning_rate: lr,
            error: mean(err),
            ei: mean(ei),
            folds_used: used,
            skipped_folds: skipped,
        }
    }
}

/// Smallest validation EI among candidates within the error budget; ties go to the smaller
/// λ, then the smaller learning rate.
fn select<'a>(scores: impl Iterator<Item = &'a CvScore>, max_error: f64) -> Option<&'a CvScore> {
    let mut best: Option<&CvScore> = None;
    for s in scores.filter(|s| s.folds_used > 0 && s.error <= max_error + TIE_TOL) {
        best = match best {
            None => Some(s),
            Some(b) => {
                let better = if (s.ei - b.ei).abs() <= TIE_TOL {
                    (s.lambda, s.learning_rate) < (b.lambda, b.learning_rate)
                } else {
                    s.ei < b.ei
                };
                Some(if better { s } else { b })
            }
        };
    }
    best
}

/// Runs the coarse grid, then the local refinement around the coarse winner.
///
/// λ = 0 is always evaluated because it defines the error baseline.
pub fn cross_validate(data: &Dataset, base: &TrainConfig, opts: &CvOptions) -> Result<CvResult> {
    base.validate()?;
    if opts.folds < 2 {
        return Err(Error::config("cross-validation needs at least 2 folds"));
    }
    if opts.stage_one.is_empty() {
        return Err(Error::config("stage-one lambda grid is empty"));
    }
    if data.len() < opts.folds {
        return Err(Error::config(format!(
            "{} rows cannot be split into {} folds",
            data.len(),
            opts.folds
        )));
    }
    let lrs = if opts.learning_rates.is_empty() {
        vec![base.learning_rate]
    } else {
        opts.learning_rates.clone()
    };
    let mut grid: Vec<f64> = opts.stage_one.clone();
    if !grid.contains(&0.0) {
        grid.insert(0, 0.0);
    }
    for &l in &grid {
        if !(0.0..1.0).contains(&l) {
            return Err(Error::config(format!("lambda {l} is outside [0, 1)")));
        }
    }
    let folds = Folds::new(data, opts.folds, base.seed)?;
    let candidates = |ls: &[f64]| -> Vec<(f64, f64)> { ls.iter().flat_map(|&l| lrs.iter().map(move |&r| (l, r))).collect() };

    let stage_one: Vec<CvScore> = candidates(&grid)
        .into_iter()
        .map(|(l, r)| folds.score(base, l, r, &opts.eval))
        .collect();
    let baseline_error = stage_one
        .iter()
        .filter(|s| s.lambda == 0.0 && s.folds_used > 0)
        .map(|s| s.error)
        .fold(f64::INFINITY, f64::min);
    if !baseline_error.is_finite() {
        return Err(Error::eval("no fold produced metrics at lambda = 0"));
    }
    let max_error = baseline_error + opts.error_slack;
    let coarse = select(stage_one.iter(), max_error)
        .ok_or_else(|| Error::eval("no stage-one candidate produced metrics"))?
        .lambda;

    let stage_two: Vec<CvScore> = candidates(&stage_two_grid(coarse))
        .into_iter()
        .map(|(l, r)| {
            stage_one
                .iter()
                .find(|s| s.lambda == l && s.learning_rate == r)
                .cloned()
                .unwrap_or_else(|| folds.score(base, l, r, &opts.eval))
        })
        .collect();
    let best = select(stage_two.iter(), max_error)
        .or_else(|| select(stage_one.iter(), max_error))
        .expect("stage one has a feasible candidate");
    log::info!(
        "cross-validation picked lambda = {} (lr = {}), validation ei = {}, error = {}",
        best.lambda,
        best.learning_rate,
        best.ei,
        best.error
    );
    Ok(CvResult {
        lambda: best.lambda,
        learning_rate: best.learning_rate,
        baseline_error,
        stage_one: stage_one.clone(),
        stage_two: stage_two.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(lambda: f64, error: f64, ei: f64) -> CvScore {
        CvScore {
            lambda,
            learning_rate: 0.01,
            error,
            ei,
            folds_used: 5,
            skipped_folds: vec![],
        }
    }

    #[test]
    fn stage_two_clips_at_zero_and_below_one() {
        assert_eq!(stage_two_grid(0.0), vec![0.0, 0.05, 0.1]);
        assert_eq!(stage_two_grid(0.9), vec![0.8, 0.85, 0.9, 0.95]);
        assert_eq!(stage_two_grid(0.4), vec![0.3, 0.35, 0.4, 0.45, 0.5]);
    }

    #[test]
    fn identical_scores_pick_smallest_lambda() {
        let s = [score(0.4, 0.2, 0.1), score(0.2, 0.2, 0.1), score(0.6, 0.2, 0.1)];
        assert_eq!(select(s.iter(), 0.25).unwrap().lambda, 0.2);
    }

    #[test]
    fn error_budget_excludes_candidates() {
        let s = [score(0.0, 0.2, 0.1), score(0.5, 0.26, 0.0), score(0.3, 0.24, 0.05)];
        assert_eq!(select(s.iter(), 0.25).unwrap().lambda, 0.3);
    }

    #[test]
    fn folds_partition_rows() {
        let a = fold_assignment(23, 5, 9);
        let mut counts = [0; 5];
        for f in a {
            counts[f] += 1;
        }
        assert_eq!(counts.iter().sum::<usize>(), 23);
        assert!(counts.iter().all(|&c| c == 4 || c == 5));
    }
}
