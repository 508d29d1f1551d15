//! Exact one-step analysis of threshold classifiers on piecewise-uniform 1-D groups.
//!
//! Every quantity is a ratio of `i128`s, so thresholds and total-variation distances are
//! compared with zero tolerance.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};

pub type Rational = Ratio<i128>;

fn q(n: i128, d: i128) -> Rational {
    Rational::new(n, d)
}

/// Density that is constant on each of a set of disjoint intervals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PiecewiseUniform {
    /// Sorted, disjoint `(left, right, density)` with `left < right` and `density > 0`.
    segments: Vec<(Rational, Rational, Rational)>,
}

impl PiecewiseUniform {
    /// Validates that the segments are disjoint, non-negative and carry total mass 1.
    pub fn new(segments: Vec<(Rational, Rational, Rational)>) -> Result<Self> {
        let mut segs: Vec<_> = segments.into_iter().filter(|s| !s.2.is_zero()).collect();
        segs.sort();
        for s in &segs {
            if s.0 >= s.1 || s.2.is_negative() {
                return Err(Error::config(format!("invalid segment [{}, {}) with density {}", s.0, s.1, s.2)));
            }
        }
        if segs.windows(2).any(|w| w[0].1 > w[1].0) {
            return Err(Error::config("segments overlap"));
        }
        let p = Self { segments: segs };
        if p.total_mass() != Rational::from_integer(1) {
            return Err(Error::config(format!("total mass is {}, expected 1", p.total_mass())));
        }
        Ok(p)
    }

    /// Sum of possibly overlapping pieces, resolved into disjoint segments.
    fn from_pieces(pieces: &[(Rational, Rational, Rational)]) -> Self {
        let mut cuts: Vec<Rational> = pieces.iter().flat_map(|p| [p.0, p.1]).collect();
        cuts.sort();
        cuts.dedup();
        let mut segments: Vec<(Rational, Rational, Rational)> = Vec::new();
        for w in cuts.windows(2) {
            let d: Rational = pieces
                .iter()
                .filter(|p| p.0 <= w[0] && w[1] <= p.1)
                .map(|p| p.2)
                .sum();
            if d.is_zero() {
                continue;
            }
            match segments.last_mut() {
                Some(last) if last.1 == w[0] && last.2 == d => last.1 = w[1],
                _ => segments.push((w[0], w[1], d)),
            }
        }
        Self { segments }
    }

    pub fn segments(&self) -> &[(Rational, Rational, Rational)] {
        &self.segments
    }

    pub fn total_mass(&self) -> Rational {
        self.segments.iter().map(|s| (s.1 - s.0) * s.2).sum()
    }

    pub fn density_at(&self, x: Rational) -> Rational {
        self.segments
            .iter()
            .find(|s| s.0 <= x && x < s.1)
            .map_or_else(Rational::zero, |s| s.2)
    }

    /// Mass on `[a, b)`; zero when `b ≤ a`.
    pub fn mass_between(&self, a: Rational, b: Rational) -> Rational {
        self.segments
            .iter()
            .map(|s| {
                let (lo, hi) = (s.0.max(a), s.1.min(b));
                if hi > lo {
                    (hi - lo) * s.2
                } else {
                    Rational::zero()
                }
            })
            .sum()
    }

    pub fn mass_below(&self, t: Rational) -> Rational {
        let lo = self.segments.first().map_or(t, |s| s.0);
        self.mass_between(lo.min(t), t)
    }

    /// `∫_{-∞}^{t} x p(x) dx`.
    pub fn moment_below(&self, t: Rational) -> Rational {
        let two = Rational::from_integer(2);
        self.segments
            .iter()
            .filter(|s| s.0 < t)
            .map(|s| {
                let hi = s.1.min(t);
                s.2 * (hi * hi - s.0 * s.0) / two
            })
            .sum()
    }

    /// Distribution after every point in `[t − δ, t)` moves up by `δ`.
    pub fn improve(&self, t: Rational, delta: Rational) -> Self {
        let lo = t - delta;
        let mut pieces = Vec::with_capacity(self.segments.len() + 2);
        for &(a, b, d) in &self.segments {
            let (ma, mb) = (a.max(lo), b.min(t));
            if mb > ma {
                pieces.push((ma + delta, mb + delta, d));
                if a < ma {
                    pieces.push((a, ma, d));
                }
                if mb < b {
                    pieces.push((mb, b, d));
                }
            } else {
                pieces.push((a, b, d));
            }
        }
        Self::from_pieces(&pieces)
    }
}

/// `½ ∫ |p − q|`, summed over the intervals where both densities are constant.
pub fn tv_distance(p: &PiecewiseUniform, q: &PiecewiseUniform) -> Rational {
    let mut cuts: Vec<Rational> = p
        .segments
        .iter()
        .chain(&q.segments)
        .flat_map(|s| [s.0, s.1])
        .collect();
    cuts.sort();
    cuts.dedup();
    let two = Rational::from_integer(2);
    let total: Rational = cuts
        .windows(2)
        .map(|w| (p.density_at(w[0]) - q.density_at(w[0])).abs() * (w[1] - w[0]))
        .sum();
    total / two
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Example {
    /// EI against BE and ERM.
    D1,
    /// EI against ER, with a far-away negative cluster in group 0.
    D2,
}

impl FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "d1" => Ok(Example::D1),
            "d2" => Ok(Example::D2),
            other => Err(Error::config(format!("unknown example `{other}`, expected d1 or d2"))),
        }
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Example::D1 => "d1",
            Example::D2 => "d2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ThresholdPolicy {
    Erm,
    Be,
    Er,
    Ei,
}

impl ThresholdPolicy {
    pub const ALL: [ThresholdPolicy; 4] = [Self::Erm, Self::Be, Self::Er, Self::Ei];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Erm => "erm",
            Self::Be => "be",
            Self::Er => "er",
            Self::Ei => "ei",
        }
    }
}

/// Two groups with deterministic labels `y = 1{x ≥ label_threshold[z]}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExampleSetup {
    pub m: Rational,
    pub delta: Rational,
    pub p_group: [Rational; 2],
    pub label_threshold: [Rational; 2],
    pub densities: [PiecewiseUniform; 2],
}

impl ExampleSetup {
    pub fn new(example: Example, m: Rational) -> Result<Self> {
        if !m.is_positive() {
            return Err(Error::config(format!("m must be positive, got {m}")));
        }
        let z = Rational::zero();
        let setup = match example {
            Example::D1 => Self {
                m,
                delta: m / 2,
                p_group: [q(1, 4), q(3, 4)],
                label_threshold: [m / 2, z],
                densities: [
                    PiecewiseUniform::new(vec![
                        (-m, m / 2, q(1, 2) / m),
                        (m / 2, m * q(3, 2), q(1, 4) / m),
                    ])?,
                    PiecewiseUniform::new(vec![(-m, m, q(1, 2) / m)])?,
                ],
            },
            // group 1 spans [−m, m/2]: the only support consistent with a group-1 recourse of
            // (τ1 + m)/2 and full mass
            Example::D2 => Self {
                m,
                delta: m / 2,
                p_group: [q(1, 2), q(1, 2)],
                label_threshold: [z, z],
                densities: [
                    PiecewiseUniform::new(vec![
                        (m * -10, m * q(-19, 2), q(2, 3) / m),
                        (-m / 2, m / 2, q(2, 3) / m),
                    ])?,
                    PiecewiseUniform::new(vec![(-m, m / 2, q(2, 3) / m)])?,
                ],
            },
        };
        Ok(setup)
    }

    pub fn error(&self, t: [Rational; 2]) -> Rational {
        (0..2)
            .map(|z| {
                let (a, b) = (t[z].min(self.label_threshold[z]), t[z].max(self.label_threshold[z]));
                self.p_group[z] * self.densities[z].mass_between(a, b)
            })
            .sum()
    }

    /// Per-group statistic the policy equalizes; `None` when its conditioning event is empty.
    pub fn group_statistic(&self, policy: ThresholdPolicy, z: usize, t: Rational) -> Option<Rational> {
        let p = &self.densities[z];
        let rejected = p.mass_below(t);
        let improvable = p.mass_between(t - self.delta, t);
        match policy {
            ThresholdPolicy::Erm => Some(Rational::zero()),
            ThresholdPolicy::Be => Some(improvable),
            ThresholdPolicy::Ei => (!rejected.is_zero()).then(|| improvable / rejected),
            ThresholdPolicy::Er => (!rejected.is_zero()).then(|| t - p.moment_below(t) / rejected),
        }
    }

    pub fn is_fair(&self, policy: ThresholdPolicy, t: [Rational; 2]) -> Option<bool> {
        Some(self.group_statistic(policy, 0, t[0])? == self.group_statistic(policy, 1, t[1])?)
    }

    /// Group densities after one improvement step under thresholds `t`.
    pub fn step(&self, t: [Rational; 2]) -> [PiecewiseUniform; 2] {
        [
            self.densities[0].improve(t[0], self.delta),
            self.densities[1].improve(t[1], self.delta),
        ]
    }

    /// Error-minimizing exactly-fair thresholds on the lattice `m/8 · ℤ ∩ [−11m, 2m]`.
    ///
    /// Ties go to the lower τ0, then the lower τ1.
    pub fn optimal_thresholds(&self, policy: ThresholdPolicy) -> Option<[Rational; 2]> {
        let step = self.m / 8;
        let lattice: Vec<Rational> = (-88..=16).map(|k| step * k).collect();
        let mut best: Option<([Rational; 2], Rational)> = None;
        for &t0 in &lattice {
            for &t1 in &lattice {
                let t = [t0, t1];
                if self.is_fair(policy, t) != Some(true) {
                    continue;
                }
                let e = self.error(t);
                if best.as_ref().map_or(true, |(_, be)| e < *be) {
                    best = Some((t, e));
                }
            }
        }
        best.map(|(t, _)| t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyOutcome {
    pub policy: ThresholdPolicy,
    pub thresholds: [Rational; 2],
    pub error: Rational,
    pub tv_after: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppendixDReport {
    pub example: Example,
    pub m: Rational,
    pub tv_before: Rational,
    /// Policies with no exactly-fair lattice point are absent.
    pub outcomes: Vec<PolicyOutcome>,
}

pub const REPORT_HEADER: &str = "example,m,policy,tau0,tau1,error,tv_before,tv_after,tau0_exact,tau1_exact,tv_after_exact";

fn dec(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

impl AppendixDReport {
    pub fn outcome(&self, policy: ThresholdPolicy) -> Option<&PolicyOutcome> {
        self.outcomes.iter().find(|o| o.policy == policy)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for o in &self.outcomes {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                self.example,
                self.m,
                o.policy.name(),
                dec(o.thresholds[0]),
                dec(o.thresholds[1]),
                dec(o.error),
                dec(self.tv_before),
                dec(o.tv_after),
                o.thresholds[0],
                o.thresholds[1],
                o.tv_after
            ));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "example {} (m = {}): tv_before = {} ({})\n",
            self.example,
            self.m,
            self.tv_before,
            dec(self.tv_before)
        );
        for o in &self.outcomes {
            out.push_str(&format!(
                "  {:<3} thresholds = ({}, {})  error = {}  tv_after = {} ({})\n",
                o.policy.name(),
                o.thresholds[0],
                o.thresholds[1],
                o.error,
                o.tv_after,
                dec(o.tv_after)
            ));
        }
        out
    }
}

/// Optimal thresholds and post-step TV distance for every policy on a worked example.
pub fn appendix_d_oracle(example: Example, m: Rational) -> Result<AppendixDReport> {
    let setup = ExampleSetup::new(example, m)?;
    let tv_before = tv_distance(&setup.densities[0], &setup.densities[1]);
    let mut outcomes = Vec::new();
    for policy in ThresholdPolicy::ALL {
        let Some(t) = setup.optimal_thresholds(policy) else {
            log::warn!("no exactly {} fair lattice thresholds for {example}", policy.name());
            continue;
        };
        let [a, b] = setup.step(t);
        debug_assert!(a.total_mass() == Rational::from_integer(1) && b.total_mass() == Rational::from_integer(1));
        outcomes.push(PolicyOutcome {
            policy,
            thresholds: t,
            error: setup.error(t),
            tv_after: tv_distance(&a, &b),
        });
    }
    Ok(AppendixDReport {
        example,
        m,
        tv_before,
        outcomes,
    })
}
