//! Two-group, one-dimensional simulation of effort, refit and threshold policies.
//!
//! Each group's feature is Gaussian. Every round the simulator computes the mean effort,
//! picks group thresholds under a fairness policy, lets rejected individuals improve and
//! refits each group as a Gaussian.

mod solver;

pub use solver::{solve_thresholds, GRID_POINTS, REFINE_POINTS, REFINE_ROUNDS};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::integrate_pieces;
use crate::special::{gaussian_interval, gaussian_pdf, norm_cdf, norm_pdf, q_function};

const QUAD_TOL: f64 = 1e-8;
const WINDOW: f64 = 8.0;
const CHI_TOL: f64 = 1e-10;
/// Conditioning events below this probability make a disparity undefined.
pub const MIN_CONDITIONING: f64 = 1e-12;
const ILFCR_U: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupGaussianState {
    pub mu: [f64; 2],
    pub sigma: [f64; 2],
}

impl GroupGaussianState {
    pub fn new(mu0: f64, sigma0: f64, mu1: f64, sigma1: f64) -> Result<Self> {
        let s = Self {
            mu: [mu0, mu1],
            sigma: [sigma0, sigma1],
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for z in 0..2 {
            if !self.mu[z].is_finite() || !(self.sigma[z] > 0.0 && self.sigma[z].is_finite()) {
                return Err(Error::config(format!(
                    "group {z} needs a finite mean and positive sigma, got ({}, {})",
                    self.mu[z], self.sigma[z]
                )));
            }
        }
        Ok(())
    }

    pub fn swapped(&self) -> Self {
        Self {
            mu: [self.mu[1], self.mu[0]],
            sigma: [self.sigma[1], self.sigma[0]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Erm,
    Dp,
    Be,
    Er,
    Ei,
    Ilfcr,
}

impl Policy {
    pub const ALL: [Policy; 6] = [Policy::Erm, Policy::Dp, Policy::Be, Policy::Er, Policy::Ei, Policy::Ilfcr];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Erm => "erm",
            Policy::Dp => "dp",
            Policy::Be => "be",
            Policy::Er => "er",
            Policy::Ei => "ei",
            Policy::Ilfcr => "ilfcr",
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config(format!("unknown policy `{s}` (valid: erm, dp, be, er, ei, ilfcr)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffortModel {
    #[default]
    InverseSquare,
    LogCapped,
}

impl std::str::FromStr for EffortModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse_square" => Ok(EffortModel::InverseSquare),
            "log_capped" => Ok(EffortModel::LogCapped),
            other => Err(Error::config(format!(
                "unknown effort model `{other}` (valid: inverse_square, log_capped)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub init: GroupGaussianState,
    pub alpha: f64,
    pub c: f64,
    pub beta: f64,
    pub rounds: usize,
    pub policy: Policy,
    #[serde(default)]
    pub effort_model: EffortModel,
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        self.init.validate()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.c) {
            return Err(Error::config(format!("c must lie in [0, 1), got {}", self.c)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config(format!("beta must be positive, got {}", self.beta)));
        }
        if self.rounds == 0 {
            return Err(Error::config("rounds must be at least 1"));
        }
        Ok(())
    }

    /// Error cap handed to the threshold solver; ILFCR is held to α/2.
    pub fn error_cap(&self) -> f64 {
        if self.policy == Policy::Ilfcr {
            self.alpha / 2.0
        } else {
            self.c
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair {
    pub tau0: f64,
    pub tau1: f64,
}

impl ThresholdPair {
    pub fn get(&self, z: usize) -> f64 {
        if z == 0 {
            self.tau0
        } else {
            self.tau1
        }
    }
}

/// `χ` with `P(x ≥ χ) = α` under the equal-weight mixture of both groups.
pub fn accept_threshold_chi(state: &GroupGaussianState, alpha: f64) -> f64 {
    let tail = |c: f64| 0.5 * (0..2).map(|z| q_function((c - state.mu[z]) / state.sigma[z])).sum::<f64>();
    let spread = 10.0 * state.sigma[0].max(state.sigma[1]);
    let mut lo = state.mu[0].min(state.mu[1]) - spread;
    let mut hi = state.mu[0].max(state.mu[1]) + spread;
    // tail is decreasing in c
    while hi - lo > CHI_TOL {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Feature improvement of an individual at `x` facing threshold `tau`.
pub fn effort_nu(x: f64, tau: f64, beta: f64, model: EffortModel) -> f64 {
    if x >= tau {
        return 0.0;
    }
    let gap = tau - x + beta;
    match model {
        EffortModel::InverseSquare => 1.0 / (gap * gap),
        EffortModel::LogCapped => (1.0 / (gap * gap)).max(1.0).ln(),
    }
}

/// `∫_{-∞}^{τ} g(x) φ(x; μ, σ) dx` truncated to the ±8σ window, split at the kinks of ν.
fn below_threshold_integral(
    g: impl Fn(f64) -> f64,
    mu: f64,
    sigma: f64,
    tau: f64,
    beta: f64,
    model: EffortModel,
) -> Result<f64> {
    let lo = mu - WINDOW * sigma;
    let hi = tau.min(mu + WINDOW * sigma);
    if !(hi > lo) {
        return Ok(0.0);
    }
    let mut breaks = vec![lo];
    if model == EffortModel::LogCapped {
        let kink = tau + beta - 1.0;
        if kink > lo && kink < hi {
            breaks.push(kink);
        }
    }
    breaks.push(hi);
    integrate_pieces(|x| g(x) * gaussian_pdf(x, mu, sigma), &breaks, QUAD_TOL)
}

fn group_effort(state: &GroupGaussianState, z: usize, tau: f64, beta: f64, model: EffortModel) -> Result<f64> {
    let (mu, sigma) = (state.mu[z], state.sigma[z]);
    below_threshold_integral(|x| effort_nu(x, tau, beta, model), mu, sigma, tau, beta, model)
}

/// Population mean effort `δ_t = ½ Σ_z E[ν(x; z)]`.
pub fn mean_effort_delta_t(
    state: &GroupGaussianState,
    thresholds: &ThresholdPair,
    beta: f64,
    model: EffortModel,
) -> Result<f64> {
    let mut total = 0.0;
    for z in 0..2 {
        total += group_effort(state, z, thresholds.get(z), beta, model)?;
    }
    Ok(0.5 * total)
}

/// Applies one round of effort and refits each group as a Gaussian.
pub fn step_distribution(
    state: &GroupGaussianState,
    thresholds: &ThresholdPair,
    beta: f64,
    model: EffortModel,
) -> Result<GroupGaussianState> {
    let mut next = *state;
    for z in 0..2 {
        let (mu, sigma, tau) = (state.mu[z], state.sigma[z], thresholds.get(z));
        let nu = |x: f64| effort_nu(x, tau, beta, model);
        let e_nu = below_threshold_integral(nu, mu, sigma, tau, beta, model)?;
        // E[(x - μ)ν] and E[ν²]; the x ≥ τ half contributes nothing
        let e_xnu = below_threshold_integral(|x| (x - mu) * nu(x), mu, sigma, tau, beta, model)?;
        let e_nu2 = below_threshold_integral(|x| nu(x) * nu(x), mu, sigma, tau, beta, model)?;
        let var = sigma * sigma + 2.0 * e_xnu + e_nu2 - e_nu * e_nu;
        if !(var > 0.0 && var.is_finite()) {
            return Err(Error::numerical(format!(
                "refit variance for group {z} is {var} (mu = {mu}, sigma = {sigma}, tau = {tau})"
            )));
        }
        next.mu[z] = mu + e_nu;
        next.sigma[z] = var.sqrt();
    }
    Ok(next)
}

fn rejection_mass(a: f64) -> Result<f64> {
    let p = norm_cdf(a);
    if p < MIN_CONDITIONING {
        return Err(Error::eval(format!("rejection probability {p:e} is below {MIN_CONDITIONING:e}")));
    }
    Ok(p)
}

/// Closed-form disparity of `policy` at the given thresholds.
pub fn policy_disparity(
    policy: Policy,
    state: &GroupGaussianState,
    thresholds: &ThresholdPair,
    delta_t: f64,
) -> Result<f64> {
    let a = |z: usize| (thresholds.get(z) - state.mu[z]) / state.sigma[z];
    let per_group = |z: usize| -> Result<f64> {
        let (mu, sigma, tau) = (state.mu[z], state.sigma[z], thresholds.get(z));
        match policy {
            Policy::Dp => Ok(q_function(a(z))),
            Policy::Be => Ok(gaussian_interval(tau - delta_t, tau, mu, sigma)),
            Policy::Ei => {
                let p = rejection_mass(a(z))?;
                Ok(1.0 - norm_cdf((tau - delta_t - mu) / sigma) / p)
            }
            Policy::Er => {
                let p = rejection_mass(a(z))?;
                Ok((tau - mu) + sigma * norm_pdf(a(z)) / p)
            }
            Policy::Erm | Policy::Ilfcr => unreachable!(),
        }
    };
    match policy {
        Policy::Erm => Err(Error::Precondition("erm has no disparity objective".into())),
        Policy::Ilfcr => Ok(ilfcr_disparity(state, thresholds)),
        _ => Ok((per_group(0)? - per_group(1)?).abs()),
    }
}

/// `max_{|u| ≤ 3} |max(A0 − σ0u, 0) − max(A1 − σ1u, 0)|` with `A_z = τ_z − μ_z`.
///
/// The inner function is piecewise linear in `u`, so its extremes sit at the interval ends
/// or at the two kinks.
fn ilfcr_disparity(state: &GroupGaussianState, thresholds: &ThresholdPair) -> f64 {
    let a: [f64; 2] = [thresholds.tau0 - state.mu[0], thresholds.tau1 - state.mu[1]];
    let g = |u: f64| ((a[0] - state.sigma[0] * u).max(0.0) - (a[1] - state.sigma[1] * u).max(0.0)).abs();
    let mut best = g(-ILFCR_U).max(g(ILFCR_U));
    for z in 0..2 {
        let kink = a[z] / state.sigma[z];
        if kink.abs() <= ILFCR_U {
            best = best.max(g(kink));
        }
    }
    best
}

/// Misclassification rate against the true label `1{x ≥ χ_α}`; groups weigh ½ each.
pub fn error_rate(state: &GroupGaussianState, thresholds: &ThresholdPair, alpha: f64) -> f64 {
    let chi = accept_threshold_chi(state, alpha);
    error_rate_with_chi(state, thresholds, chi)
}

pub(crate) fn error_rate_with_chi(state: &GroupGaussianState, thresholds: &ThresholdPair, chi: f64) -> f64 {
    (0..2)
        .map(|z| {
            let t = thresholds.get(z);
            0.5 * gaussian_interval(t.min(chi), t.max(chi), state.mu[z], state.sigma[z])
        })
        .sum()
}

/// Points where the two group densities cross.
fn density_crossings(state: &GroupGaussianState) -> Vec<f64> {
    let ([m0, m1], [s0, s1]) = (state.mu, state.sigma);
    let a = 0.5 / (s1 * s1) - 0.5 / (s0 * s0);
    let b = m0 / (s0 * s0) - m1 / (s1 * s1);
    let c = 0.5 * m1 * m1 / (s1 * s1) - 0.5 * m0 * m0 / (s0 * s0) + (s1 / s0).ln();
    if a.abs() < 1e-14 {
        if b.abs() < 1e-14 {
            return vec![];
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let r = disc.sqrt();
    let mut out = vec![(-b - r) / (2.0 * a), (-b + r) / (2.0 * a)];
    out.sort_by(f64::total_cmp);
    out
}

/// `½ ∫ |φ0 − φ1|`, integrated piecewise between density crossings.
pub fn tv_distance(state: &GroupGaussianState) -> Result<f64> {
    if state.mu[0] == state.mu[1] && state.sigma[0] == state.sigma[1] {
        return Ok(0.0);
    }
    let spread = WINDOW * state.sigma[0].max(state.sigma[1]);
    let lo = state.mu[0].min(state.mu[1]) - spread;
    let hi = state.mu[0].max(state.mu[1]) + spread;
    let mut breaks = vec![lo];
    breaks.extend(density_crossings(state).into_iter().filter(|&x| x > lo && x < hi));
    breaks.push(hi);
    let f = |x: f64| (gaussian_pdf(x, state.mu[0], state.sigma[0]) - gaussian_pdf(x, state.mu[1], state.sigma[1])).abs();
    Ok((0.5 * integrate_pieces(f, &breaks, QUAD_TOL)?).clamp(0.0, 1.0))
}

/// One row of a trajectory; decision fields are empty on the final state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub state: GroupGaussianState,
    pub thresholds: Option<ThresholdPair>,
    pub delta_t: Option<f64>,
    pub tv: f64,
    pub error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub policy: Policy,
    /// `rounds + 1` records, the first being the initial state.
    pub records: Vec<RoundRecord>,
}

pub const TRAJECTORY_HEADER: &str = "round,policy,mu0,sigma0,mu1,sigma1,tau0,tau1,delta_t,tv,error";

impl Trajectory {
    pub fn tv_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.tv).collect()
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from(TRAJECTORY_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.round,
                self.policy,
                r.state.mu[0],
                r.state.sigma[0],
                r.state.mu[1],
                r.state.sigma[1],
                opt(r.thresholds.map(|t| t.tau0)),
                opt(r.thresholds.map(|t| t.tau1)),
                opt(r.delta_t),
                r.tv,
                opt(r.error)
            );
        }
        out
    }
}

/// Runs `config.rounds` rounds: effort under the previous thresholds (ERM before the
/// first round), then the policy's thresholds, then the refit.
pub fn run_simulation(config: &DynamicsConfig) -> Result<Trajectory> {
    config.validate()?;
    let mut state = config.init;
    let mut records = Vec::with_capacity(config.rounds + 1);
    let chi0 = accept_threshold_chi(&state, config.alpha);
    let mut previous = ThresholdPair { tau0: chi0, tau1: chi0 };
    for round in 0..config.rounds {
        let wrap = |e: Error| Error::Round {
            round,
            source: Box::new(e),
        };
        let delta_t = mean_effort_delta_t(&state, &previous, config.beta, config.effort_model).map_err(wrap)?;
        let thresholds =
            solve_thresholds(config.policy, &state, config.alpha, config.error_cap(), delta_t).map_err(wrap)?;
        let tv = tv_distance(&state).map_err(wrap)?;
        records.push(RoundRecord {
            round,
            state,
            thresholds: Some(thresholds),
            delta_t: Some(delta_t),
            tv,
            error: Some(error_rate(&state, &thresholds, config.alpha)),
        });
        state = step_distribution(&state, &thresholds, config.beta, config.effort_model).map_err(wrap)?;
        previous = thresholds;
    }
    records.push(RoundRecord {
        round: config.rounds,
        state,
        thresholds: None,
        delta_t: None,
        tv: tv_distance(&state).map_err(|e| Error::Round {
            round: config.rounds,
            source: Box::new(e),
        })?,
        error: None,
    });
    Ok(Trajectory {
        policy: config.policy,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand::Rng as _;
    use rand_distr::{Distribution, Normal};

    fn st(m0: f64, s0: f64, m1: f64, s1: f64) -> GroupGaussianState {
        GroupGaussianState::new(m0, s0, m1, s1).unwrap()
    }

    fn pair(tau0: f64, tau1: f64) -> ThresholdPair {
        ThresholdPair { tau0, tau1 }
    }

    #[test]
    fn chi_examples() {
        assert!(accept_threshold_chi(&st(0.0, 1.0, 0.0, 1.0), 0.5).abs() < 1e-9);
        assert!((accept_threshold_chi(&st(0.0, 1.0, 0.0, 1.0), 0.2) - 0.841_621_233_6).abs() < 1e-8);
    }

    #[test]
    fn chi_matches_monte_carlo() {
        let s = st(0.0, 1.0, 1.0, 0.5);
        let chi = accept_threshold_chi(&s, 0.2);
        let mut rng = rng_for(11, 0);
        let n = 2_000_000;
        let mut xs: Vec<f64> = (0..n)
            .map(|_| {
                let z = usize::from(rng.gen::<bool>());
                Normal::new(s.mu[z], s.sigma[z]).unwrap().sample(&mut rng)
            })
            .collect();
        xs.sort_by(f64::total_cmp);
        let mc = xs[(0.8 * n as f64) as usize];
        assert!((chi - mc).abs() < 3e-3, "{chi} vs {mc}");
    }

    #[test]
    fn nu_examples() {
        assert_eq!(effort_nu(1.0, 1.0, 0.25, EffortModel::InverseSquare), 0.0);
        assert!((effort_nu(0.25, 1.0, 0.25, EffortModel::InverseSquare) - 1.0).abs() < 1e-15);
        assert_eq!(effort_nu(-1.0, 1.0, 0.25, EffortModel::LogCapped), 0.0);
        assert!((effort_nu(0.8, 1.0, 0.2, EffortModel::LogCapped) - (1.0f64 / 0.16).ln()).abs() < 1e-12);
        assert!(effort_nu(0.5, 1.0, 0.25, EffortModel::InverseSquare) > effort_nu(0.0, 1.0, 0.25, EffortModel::InverseSquare));
    }

    #[test]
    fn step_without_effort_is_identity() {
        let s = st(0.0, 1.0, 1.0, 0.5);
        let t = pair(f64::NEG_INFINITY, f64::NEG_INFINITY);
        assert_eq!(step_distribution(&s, &t, 0.25, EffortModel::InverseSquare).unwrap(), s);
        assert_eq!(mean_effort_delta_t(&s, &t, 0.25, EffortModel::InverseSquare).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_groups_step_identically() {
        let s = st(0.3, 0.7, 0.3, 0.7);
        let n = step_distribution(&s, &pair(0.5, 0.5), 0.25, EffortModel::InverseSquare).unwrap();
        assert_eq!(n.mu[0], n.mu[1]);
        assert_eq!(n.sigma[0], n.sigma[1]);
        let d = mean_effort_delta_t(&s, &pair(0.5, 0.5), 0.25, EffortModel::InverseSquare).unwrap();
        assert!((d - (n.mu[0] - 0.3)).abs() < 1e-12);
    }

    #[test]
    fn step_matches_monte_carlo() {
        let (mu, sigma, tau, beta) = (0.0, 1.0, 0.8, 0.25);
        for model in [EffortModel::InverseSquare, EffortModel::LogCapped] {
            let s = st(mu, sigma, mu, sigma);
            let next = step_distribution(&s, &pair(tau, tau), beta, model).unwrap();
            let mut rng = rng_for(5, 1);
            let normal = Normal::new(mu, sigma).unwrap();
            let n = 1_000_000;
            let ys: Vec<f64> = (0..n)
                .map(|_| {
                    let x = normal.sample(&mut rng);
                    x + effort_nu(x, tau, beta, model)
                })
                .collect();
            let mean = ys.iter().sum::<f64>() / n as f64;
            let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            assert!((next.mu[0] - mean).abs() <= 3.0 * se, "{model:?}: {} vs {mean}", next.mu[0]);
            assert!((next.sigma[0] - var.sqrt()).abs() < 5e-3);
        }
    }

    #[test]
    fn steps_never_lower_means() {
        let s = st(-0.5, 2.0, 1.0, 0.3);
        let n = step_distribution(&s, &pair(0.0, 1.5), 0.25, EffortModel::InverseSquare).unwrap();
        assert!(n.mu[0] >= s.mu[0] && n.mu[1] >= s.mu[1]);
    }

    #[test]
    fn disparities_vanish_for_identical_groups() {
        let s = st(0.2, 0.9, 0.2, 0.9);
        for p in [Policy::Dp, Policy::Be, Policy::Er, Policy::Ei, Policy::Ilfcr] {
            assert_eq!(policy_disparity(p, &s, &pair(0.7, 0.7), 0.3).unwrap(), 0.0, "{p}");
        }
        assert!(policy_disparity(Policy::Erm, &s, &pair(0.7, 0.7), 0.3).is_err());
    }

    #[test]
    fn equal_sigma_ei_zero_iff_equal_offsets() {
        let s = st(0.0, 0.8, 1.0, 0.8);
        assert!(policy_disparity(Policy::Ei, &s, &pair(0.3, 1.3), 0.4).unwrap() < 1e-15);
        assert!(policy_disparity(Policy::Ei, &s, &pair(0.3, 1.2), 0.4).unwrap() > 1e-3);
    }

    #[test]
    fn ei_rejects_degenerate_conditioning() {
        let s = st(0.0, 1.0, 0.0, 1.0);
        assert!(matches!(policy_disparity(Policy::Ei, &s, &pair(-10.0, 0.0), 0.1), Err(Error::Evaluation(_))));
    }

    #[test]
    fn er_matches_monte_carlo_truncated_mean() {
        let (mu, sigma, tau) = (0.4, 0.6, 0.5);
        let s = st(mu, sigma, 0.0, 1.0);
        let mut rng = rng_for(3, 3);
        let normal = Normal::new(mu, sigma).unwrap();
        let gaps: Vec<f64> = (0..1_000_000).map(|_| normal.sample(&mut rng)).filter(|&x| x < tau).map(|x| tau - x).collect();
        let n = gaps.len() as f64;
        let mean = gaps.iter().sum::<f64>() / n;
        let se = (gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        // group 1 at τ = μ has recourse σ·φ(0)/Φ(0)
        let r1 = 2.0 * norm_pdf(0.0);
        let d = policy_disparity(Policy::Er, &s, &pair(tau, 0.0), 0.0).unwrap();
        assert!((d - (mean - r1).abs()).abs() <= 3.0 * se, "{d} vs {}", (mean - r1).abs());
    }

    #[test]
    fn ilfcr_piecewise_maximum() {
        let s = st(0.0, 1.0, 0.0, 2.0);
        // |max(-u,0) - max(-2u,0)| is maximized at u = -3 with value 3
        assert!((policy_disparity(Policy::Ilfcr, &s, &pair(0.0, 0.0), 0.0).unwrap() - 3.0).abs() < 1e-15);
        let brute = (0..=6000)
            .map(|k| {
                let u = -3.0 + k as f64 * 1e-3;
                ((0.5 - u).max(0.0) - (1.0 - 2.0 * u).max(0.0)).abs()
            })
            .fold(0.0, f64::max);
        let v = policy_disparity(Policy::Ilfcr, &s, &pair(0.5, 1.0), 0.0).unwrap();
        assert!((v - brute).abs() < 1e-12);
    }

    #[test]
    fn error_rate_examples() {
        let s = st(0.0, 1.0, 1.0, 0.5);
        let chi = accept_threshold_chi(&s, 0.2);
        assert!(error_rate(&s, &pair(chi, chi), 0.2) < 1e-9);
        let one = error_rate_with_chi(&st(0.0, 1.0, 50.0, 1.0), &pair(1.0, 0.0), 0.0);
        assert!((2.0 * one - (norm_cdf(1.0) - 0.5)).abs() < 1e-12);
        let mut last = 0.0;
        for k in 0..20 {
            let e = error_rate(&s, &pair(chi + 0.1 * k as f64, chi), 0.2);
            assert!(e >= last);
            last = e;
        }
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&st(0.0, 1.0, 0.0, 1.0)).unwrap(), 0.0);
        let v = tv_distance(&st(0.0, 1.0, 1.0, 1.0)).unwrap();
        assert!((v - (2.0 * norm_cdf(0.5) - 1.0)).abs() < 1e-8);
        let a = st(0.0, 1.0, 1.0, 0.5);
        assert!((tv_distance(&a).unwrap() - tv_distance(&a.swapped()).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn tv_matches_cdf_form() {
        // over the regions where φ0 > φ1, TV equals the summed probability differences
        let s = st(0.0, 1.0, 1.0, 0.5);
        let x = density_crossings(&s);
        assert_eq!(x.len(), 2);
        let p = |z: usize, a: f64, b: f64| gaussian_interval(a, b, s.mu[z], s.sigma[z]);
        let mid = p(1, x[0], x[1]) - p(0, x[0], x[1]);
        assert!((tv_distance(&s).unwrap() - mid).abs() < 1e-8);
    }

    #[test]
    fn identical_groups_have_zero_tv_trajectory() {
        for policy in Policy::ALL {
            let cfg = DynamicsConfig {
                init: st(0.0, 1.0, 0.0, 1.0),
                alpha: 0.2,
                c: 0.1,
                beta: 0.25,
                rounds: 3,
                policy,
                effort_model: EffortModel::InverseSquare,
            };
            let t = run_simulation(&cfg).unwrap();
            assert_eq!(t.records.len(), 4);
            assert!(t.tv_series().iter().all(|&v| v < 1e-6), "{policy}: {:?}", t.tv_series());
        }
    }

    #[test]
    fn trajectory_csv_shape() {
        let cfg = DynamicsConfig {
            init: st(0.0, 1.0, 1.0, 0.5),
            alpha: 0.2,
            c: 0.1,
            beta: 0.25,
            rounds: 2,
            policy: Policy::Ei,
            effort_model: EffortModel::InverseSquare,
        };
        let csv = run_simulation(&cfg).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TRAJECTORY_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("2,ei,"));
        let f: Vec<&str> = lines[3].split(',').collect();
        assert_eq!(f.len(), 11);
        assert!(f[6].is_empty() && f[7].is_empty() && f[8].is_empty() && f[10].is_empty());
        assert!(!f[9].is_empty());
    }

    #[test]
    fn config_validation() {
        let cfg = DynamicsConfig {
            init: st(0.0, 1.0, 1.0, 0.5),
            alpha: 1.0,
            c: 0.1,
            beta: 0.25,
            rounds: 2,
            policy: Policy::Ei,
            effort_model: EffortModel::InverseSquare,
        };
        assert!(matches!(run_simulation(&cfg), Err(Error::Config(_))));
        assert!(GroupGaussianState::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!("eo".parse::<Policy>().is_err());
    }
}
