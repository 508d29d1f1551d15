//! Population-level error, EI and ER of group-aware linear classifiers on Gaussian clusters.
//!
//! With unit direction `w_θ = (sin θ, cos θ)`, the projection `w_θᵀx` of each cluster is a
//! univariate Gaussian, so every quantity reduces to normal tail probabilities.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SyntheticConfig;
use crate::error::{Error, Result};
use crate::models::GlmScorer;
use crate::special::{norm_cdf, norm_pdf, q_function};

const MIN_REJECTION: f64 = 1e-12;

/// Accepts `x` from group `z` iff `sin θ·x1 + cos θ·x2 > b_z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianAwareClassifier {
    pub theta: f64,
    pub b0: f64,
    pub b1: f64,
}

impl GaussianAwareClassifier {
    pub fn new(theta: f64, b0: f64, b1: f64) -> Self {
        Self {
            theta: theta.rem_euclid(TAU),
            b0,
            b1,
        }
    }

    pub fn direction(&self) -> [f64; 2] {
        [self.theta.sin(), self.theta.cos()]
    }

    pub fn bias(&self, z: usize) -> f64 {
        if z == 0 {
            self.b0
        } else {
            self.b1
        }
    }

    /// Largest score gain per unit of L∞ effort over both features.
    pub fn l1(&self) -> f64 {
        let [s, c] = self.direction();
        s.abs() + c.abs()
    }

    /// The same rule as a logistic model over `[x1, x2, z]` with boundary at logit 0.
    pub fn to_glm(&self) -> GlmScorer {
        let [s, c] = self.direction();
        GlmScorer::new(vec![s, c, -(self.b1 - self.b0)], -self.b0)
    }
}

/// One Gaussian cluster with its joint probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub group: usize,
    pub label: u8,
    pub weight: f64,
    pub mean: [f64; 2],
    pub var: [f64; 2],
}

/// Clusters of `config`, including the outlier cluster when present, normalized to mass 1.
pub fn components(config: &SyntheticConfig) -> Vec<Component> {
    let pz = [1.0 - config.p_z, config.p_z];
    let mut out = Vec::with_capacity(5);
    for z in 0..2 {
        for y in 0..2 {
            let py = if y == 1 { config.p_y_given_z[z] } else { 1.0 - config.p_y_given_z[z] };
            out.push(Component {
                group: z,
                label: y as u8,
                weight: pz[z] * py,
                mean: config.cluster_means[y][z],
                var: config.cluster_vars[y][z],
            });
        }
    }
    if let Some(o) = &config.outliers {
        out.push(Component {
            group: o.group,
            label: 0,
            weight: pz[o.group] * o.fraction,
            mean: o.mean,
            var: o.var,
        });
    }
    let total: f64 = out.iter().map(|c| c.weight).sum();
    for c in &mut out {
        c.weight /= total;
    }
    out
}

fn projection(clf: &GaussianAwareClassifier, c: &Component) -> (f64, f64) {
    let [s, k] = clf.direction();
    let m = s * c.mean[0] + k * c.mean[1];
    let sd = (s * s * c.var[0] + k * k * c.var[1]).sqrt();
    (m, sd)
}

/// Misclassification probability of `clf` on the cluster mixture.
pub fn qform_error(clf: &GaussianAwareClassifier, config: &SyntheticConfig) -> f64 {
    error_on(clf, &components(config))
}

fn error_on(clf: &GaussianAwareClassifier, comps: &[Component]) -> f64 {
    comps
        .iter()
        .map(|c| {
            let (m, sd) = projection(clf, c);
            let b = clf.bias(c.group);
            let wrong = if c.label == 0 { q_function((b - m) / sd) } else { q_function((m - b) / sd) };
            c.weight * wrong
        })
        .sum()
}

fn gap_to_pool(num: [f64; 2], den: [f64; 2]) -> Result<f64> {
    for (z, d) in den.iter().enumerate() {
        if *d < MIN_REJECTION {
            return Err(Error::eval(format!("group {z} rejection mass {d:e} is degenerate")));
        }
    }
    let pooled = (num[0] + num[1]) / (den[0] + den[1]);
    Ok((0..2).map(|z| (num[z] / den[z] - pooled).abs()).fold(0.0, f64::max))
}

/// EI disparity under an L∞ budget `delta` on both features, as max gap to the pooled rate.
pub fn qform_ei_disparity(clf: &GaussianAwareClassifier, config: &SyntheticConfig, delta: f64) -> Result<f64> {
    ei_on(clf, &components(config), delta)
}

fn ei_on(clf: &GaussianAwareClassifier, comps: &[Component], delta: f64) -> Result<f64> {
    let shift = delta * clf.l1();
    let (mut num, mut den) = ([0.0; 2], [0.0; 2]);
    for c in comps {
        let (m, sd) = projection(clf, c);
        let b = clf.bias(c.group);
        let rejected = norm_cdf((b - m) / sd);
        den[c.group] += c.weight * rejected;
        num[c.group] += c.weight * (rejected - norm_cdf((b - shift - m) / sd));
    }
    gap_to_pool(num, den)
}

/// ER disparity: mean L∞ distance to the boundary among rejected points, max gap to pool.
///
/// For a cluster projecting to `N(m, s²)`, `E[(b − X)⁺] = (b − m)Φ(a) + sφ(a)` with
/// `a = (b − m)/s`; dividing by `‖w_θ‖₁` converts score distance into L∞ effort.
pub fn qform_er_disparity(clf: &GaussianAwareClassifier, config: &SyntheticConfig) -> Result<f64> {
    er_on(clf, &components(config))
}

fn er_on(clf: &GaussianAwareClassifier, comps: &[Component]) -> Result<f64> {
    let (mut num, mut den) = ([0.0; 2], [0.0; 2]);
    for c in comps {
        let (m, sd) = projection(clf, c);
        let b = clf.bias(c.group);
        let a = (b - m) / sd;
        den[c.group] += c.weight * norm_cdf(a);
        num[c.group] += c.weight * ((b - m) * norm_cdf(a) + sd * norm_pdf(a)) / clf.l1();
    }
    gap_to_pool(num, den)
}

/// Fairness notion constraining the oracle search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleNotion {
    Ei { delta: f64 },
    Er,
}

impl OracleNotion {
    fn eval(&self, clf: &GaussianAwareClassifier, comps: &[Component]) -> Result<f64> {
        match *self {
            OracleNotion::Ei { delta } => ei_on(clf, comps, delta),
            OracleNotion::Er => er_on(clf, comps),
        }
    }
}

/// Search box and resolution of the oracle solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleGrid {
    pub theta_points: usize,
    pub bias_points: usize,
    pub bias_range: [f64; 2],
    pub refine_rounds: usize,
    /// Points per axis of each refinement grid; the step shrinks tenfold per round.
    pub refine_points: usize,
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self {
            theta_points: 72,
            bias_points: 61,
            bias_range: [-3.0, 3.0],
            refine_rounds: 2,
            refine_points: 21,
        }
    }
}

impl OracleGrid {
    fn steps(&self) -> (f64, f64) {
        (
            TAU / self.theta_points as f64,
            (self.bias_range[1] - self.bias_range[0]) / (self.bias_points - 1) as f64,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub c: f64,
    pub error: f64,
    pub disparity: f64,
    pub classifier: GaussianAwareClassifier,
    /// False when no searched point met the constraint; the point is then the least
    /// disparate one found.
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy)]
struct Eval {
    clf: GaussianAwareClassifier,
    error: f64,
    disparity: Option<f64>,
}

struct Solver<'a> {
    comps: Vec<Component>,
    notion: OracleNotion,
    grid: &'a OracleGrid,
    coarse: Vec<Eval>,
}

impl<'a> Solver<'a> {
    fn new(config: &SyntheticConfig, notion: OracleNotion, grid: &'a OracleGrid) -> Result<Self> {
        config.validate()?;
        if grid.theta_points == 0 || grid.bias_points < 2 || !(grid.bias_range[1] > grid.bias_range[0]) {
            return Err(Error::config("oracle grid needs at least one angle and two bias values"));
        }
        let comps = components(config);
        let (dt, db) = grid.steps();
        let lo = grid.bias_range[0];
        let cells: Vec<GaussianAwareClassifier> = (0..grid.theta_points)
            .flat_map(|i| {
                (0..grid.bias_points).flat_map(move |j| {
                    (0..grid.bias_points)
                        .map(move |k| GaussianAwareClassifier::new(i as f64 * dt, lo + j as f64 * db, lo + k as f64 * db))
                })
            })
            .collect();
        let coarse = cells
            .par_iter()
            .map(|clf| Eval {
                clf: *clf,
                error: error_on(clf, &comps),
                disparity: notion.eval(clf, &comps).ok(),
            })
            .collect();
        Ok(Self {
            comps,
            notion,
            grid,
            coarse,
        })
    }

    fn eval(&self, clf: GaussianAwareClassifier) -> Eval {
        Eval {
            clf,
            error: error_on(&clf, &self.comps),
            disparity: self.notion.eval(&clf, &self.comps).ok(),
        }
    }

    fn best_feasible<'e>(evals: impl Iterator<Item = &'e Eval>, c: f64) -> Option<Eval> {
        let mut best: Option<Eval> = None;
        for e in evals {
            if e.disparity.is_some_and(|d| d <= c) && best.map_or(true, |b| e.error < b.error) {
                best = Some(*e);
            }
        }
        best
    }

    fn refine(&self, start: Eval, c: f64) -> Eval {
        let (mut dt, mut db) = self.grid.steps();
        let half = (self.grid.refine_points / 2) as f64;
        let mut best = start;
        for _ in 0..self.grid.refine_rounds {
            dt /= 10.0;
            db /= 10.0;
            let center = best.clf;
            let n = self.grid.refine_points;
            let local: Vec<Eval> = (0..n * n * n)
                .into_par_iter()
                .map(|idx| {
                    let (i, j, k) = (idx / (n * n), (idx / n) % n, idx % n);
                    self.eval(GaussianAwareClassifier::new(
                        center.theta + (i as f64 - half) * dt,
                        center.b0 + (j as f64 - half) * db,
                        center.b1 + (k as f64 - half) * db,
                    ))
                })
                .collect();
            if let Some(e) = Self::best_feasible(local.iter(), c) {
                if e.error < best.error {
                    best = e;
                }
            }
        }
        best
    }

    fn least_disparate(&self) -> Eval {
        *self
            .coarse
            .iter()
            .filter(|e| e.disparity.is_some())
            .min_by(|a, b| a.disparity.partial_cmp(&b.disparity).unwrap())
            .unwrap_or(&self.coarse[0])
    }
}

fn point(c: f64, e: Eval, feasible: bool) -> TradeoffPoint {
    TradeoffPoint {
        c,
        error: e.error,
        disparity: e.disparity.unwrap_or(f64::NAN),
        classifier: e.clf,
        feasible,
    }
}

/// Error-minimizing classifier with `notion` disparity at most `c`, for each `c`.
///
/// Returned points are sorted by `c`. Solutions found for smaller `c` stay candidates for
/// larger `c`, so the error is non-increasing along the curve.
pub fn constrained_tradeoff(
    config: &SyntheticConfig,
    notion: OracleNotion,
    c_grid: &[f64],
    grid: &OracleGrid,
) -> Result<Vec<TradeoffPoint>> {
    let mut cs = c_grid.to_vec();
    if cs.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
        return Err(Error::config("constraint levels must be finite and non-negative"));
    }
    cs.sort_by(f64::total_cmp);
    let solver = Solver::new(config, notion, grid)?;
    let mut out: Vec<TradeoffPoint> = Vec::with_capacity(cs.len());
    let mut carried: Vec<Eval> = Vec::new();
    for c in cs {
        let seed = Solver::best_feasible(solver.coarse.iter().chain(carried.iter()), c);
        let p = match seed {
            Some(s) => {
                let e = solver.refine(s, c);
                carried.push(e);
                point(c, e, true)
            }
            None => {
                log::warn!("no classifier reaches disparity <= {c}; reporting the least disparate one");
                point(c, solver.least_disparate(), false)
            }
        };
        out.push(p);
    }
    for w in out.windows(2) {
        if w[0].feasible && w[1].feasible {
            assert!(w[1].error <= w[0].error, "oracle error increased with c");
        }
    }
    Ok(out)
}

/// Unconstrained error minimizer and its disparity under `notion`.
pub fn unconstrained_optimum(config: &SyntheticConfig, notion: OracleNotion, grid: &OracleGrid) -> Result<TradeoffPoint> {
    let solver = Solver::new(config, notion, grid)?;
    let start = *solver
        .coarse
        .iter()
        .min_by(|a, b| a.error.total_cmp(&b.error))
        .expect("grid is non-empty");
    let best = solver.refine(start, f64::INFINITY);
    let best = if best.disparity.is_some() { best } else { start };
    Ok(point(f64::INFINITY, best, true))
}

/// `count` levels `k/count · EI*` for `k = 1..=count`, where `EI*` is the disparity of the
/// unconstrained optimum.
pub fn default_c_grid(config: &SyntheticConfig, delta: f64, count: usize, grid: &OracleGrid) -> Result<Vec<f64>> {
    let top = unconstrained_optimum(config, OracleNotion::Ei { delta }, grid)?.disparity;
    if !top.is_finite() {
        return Err(Error::eval("unconstrained optimum has undefined EI disparity"));
    }
    Ok((1..=count).map(|k| top * k as f64 / count as f64).collect())
}

/// Optimal error/EI trade-off curve for the cluster mixture of `config`.
pub fn optimal_tradeoff(
    config: &SyntheticConfig,
    delta: f64,
    c_grid: &[f64],
    grid: &OracleGrid,
) -> Result<Vec<TradeoffPoint>> {
    constrained_tradeoff(config, OracleNotion::Ei { delta }, c_grid, grid)
}

/// Optimal error at EI level `ei`, linearly interpolated along a curve sorted by `c`.
///
/// Below the first level the first point's error is used, which under-states the optimum
/// there; above the last level the last error is used.
pub fn interpolate_error(curve: &[TradeoffPoint], ei: f64) -> Option<f64> {
    let pts: Vec<&TradeoffPoint> = curve.iter().filter(|p| p.feasible).collect();
    let first = pts.first()?;
    if ei <= first.c {
        return Some(first.error);
    }
    for w in pts.windows(2) {
        if ei <= w[1].c {
            let t = (ei - w[0].c) / (w[1].c - w[0].c);
            return Some(w[0].error + t * (w[1].error - w[0].error));
        }
    }
    pts.last().map(|p| p.error)
}
