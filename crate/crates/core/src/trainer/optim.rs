use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    PlainSgd,
    AdaptiveMoment,
}

impl std::str::FromStr for OptimizerKind {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s {
            "sgd" | "plain_sgd" => Ok(OptimizerKind::PlainSgd),
            "adam" | "adaptive_moment" => Ok(OptimizerKind::AdaptiveMoment),
            other => Err(crate::error::Error::config(format!(
                "unknown optimizer `{other}` (valid: sgd, adam)"
            ))),
        }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// First-order update rule over a flat parameter vector.
#[derive(Debug, Clone)]
pub(crate) enum Optimizer {
    Sgd { lr: f64 },
    Adam { lr: f64, m: Vec<f64>, v: Vec<f64>, t: i32 },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, n: usize) -> Self {
        match kind {
            OptimizerKind::PlainSgd => Optimizer::Sgd { lr },
            OptimizerKind::AdaptiveMoment => Optimizer::Adam {
                lr,
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self {
            Optimizer::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= *lr * g;
                }
            }
            Optimizer::Adam { lr, m, v, t } => {
                *t += 1;
                let c1 = 1.0 - BETA1.powi(*t);
                let c2 = 1.0 - BETA2.powi(*t);
                for i in 0..params.len() {
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
                    params[i] -= *lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut o = Optimizer::new(OptimizerKind::AdaptiveMoment, 0.1, 2);
        let mut p = vec![1.0, -1.0];
        o.step(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-7);
        assert!((p[1] + 0.9).abs() < 1e-7);
    }

    #[test]
    fn sgd_step() {
        let mut o = Optimizer::new(OptimizerKind::PlainSgd, 0.5, 1);
        let mut p = vec![1.0];
        o.step(&mut p, &[2.0]);
        assert_eq!(p, vec![0.0]);
    }
}
