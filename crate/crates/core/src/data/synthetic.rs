use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, FeaturePartition};
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};

/// Extra cluster of label-0 samples appended to one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierSpec {
    pub group: usize,
    /// Outlier count as a fraction of that group's clean sample count.
    pub fraction: f64,
    pub mean: [f64; 2],
    pub var: [f64; 2],
}

/// Two-group, two-feature Gaussian cluster generator.
///
/// Cluster parameters are indexed `[y][z]`; covariances are diagonal and given by their
/// variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_samples: usize,
    pub p_z: f64,
    pub p_y_given_z: [f64; 2],
    pub cluster_means: [[[f64; 2]; 2]; 2],
    pub cluster_vars: [[[f64; 2]; 2]; 2],
    /// Append `z` as an immutable input column.
    #[serde(default)]
    pub group_feature: bool,
    #[serde(default)]
    pub outliers: Option<OutlierSpec>,
}

impl SyntheticConfig {
    /// The benchmark used for the logistic-regression experiments (20k rows, δ = 0.5).
    pub fn paper_default() -> Self {
        Self {
            n_samples: 20_000,
            p_z: 0.4,
            p_y_given_z: [0.3, 0.5],
            cluster_means: [[[-0.1, -0.2], [-0.2, -0.3]], [[0.1, 0.4], [0.4, 0.3]]],
            cluster_vars: [[[0.4, 0.4], [0.2, 0.2]], [[0.2, 0.2], [0.1, 0.1]]],
            group_feature: true,
            outliers: None,
        }
    }

    /// Well-separated clusters used to compare outlier sensitivity of EI and ER.
    pub fn outlier_clean() -> Self {
        Self {
            n_samples: 20_000,
            p_z: 0.5,
            p_y_given_z: [0.5, 0.5],
            cluster_means: [[[1.0, -6.0], [-1.0, -2.0]], [[2.0, 1.5], [1.0, 2.5]]],
            cluster_vars: [[[0.25, 0.25]; 2]; 2],
            group_feature: true,
            outliers: None,
        }
    }

    /// [`Self::outlier_clean`] with 5% far-away label-0 points added to group 0.
    pub fn outlier_contaminated() -> Self {
        Self {
            outliers: Some(OutlierSpec {
                group: 0,
                fraction: 0.05,
                mean: [-1.0, -20.0],
                var: [0.05, 0.05],
            }),
            ..Self::outlier_clean()
        }
    }

    /// Mirror-symmetric clusters with equal group negative rates.
    pub fn balanced_negative_rate() -> Self {
        Self {
            n_samples: 20_000,
            p_z: 0.5,
            p_y_given_z: [0.5, 0.5],
            cluster_means: [[[-2.0, -1.0], [-1.0, -2.0]], [[1.0, 2.0], [2.0, 1.0]]],
            cluster_vars: [[[0.25, 0.25]; 2]; 2],
            group_feature: true,
            outliers: None,
        }
    }

    /// Same clusters with `P(y=1|z)` of 0.7 and 0.3.
    pub fn imbalanced_negative_rate() -> Self {
        Self {
            p_y_given_z: [0.7, 0.3],
            ..Self::balanced_negative_rate()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::config("n_samples must be positive"));
        }
        let probs = [self.p_z, self.p_y_given_z[0], self.p_y_given_z[1]];
        if probs.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(Error::config(format!(
                "probabilities must lie in (0, 1), got {probs:?}"
            )));
        }
        let vars = self.cluster_vars.iter().flatten().flatten();
        if vars.clone().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::config("cluster variances must be positive"));
        }
        if self.cluster_means.iter().flatten().flatten().any(|m| !m.is_finite()) {
            return Err(Error::config("cluster means must be finite"));
        }
        if let Some(o) = &self.outliers {
            if o.group > 1 || !(o.fraction >= 0.0) || o.var.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::config("invalid outlier specification"));
            }
        }
        Ok(())
    }
}

fn draw_point(rng: &mut crate::rng::Rng, mean: [f64; 2], var: [f64; 2]) -> [f64; 2] {
    let mut out = [0.0; 2];
    for k in 0..2 {
        let normal = Normal::new(mean[k], var[k].sqrt()).expect("validated variance");
        out[k] = normal.sample(rng);
    }
    out
}

/// Draws `z ~ Bern(p_z)`, `y | z ~ Bern(p_y|z)`, `x | y, z ~ N(μ_yz, Σ_yz)` row by row.
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut rng = rng_for(seed, stream::SYNTHETIC);
    let n = config.n_samples;
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for _ in 0..n {
        let z = usize::from(rng.gen::<f64>() < config.p_z);
        let y = usize::from(rng.gen::<f64>() < config.p_y_given_z[z]);
        let x = draw_point(&mut rng, config.cluster_means[y][z], config.cluster_vars[y][z]);
        features.extend_from_slice(&x);
        labels.push(y as u8);
        groups.push(z);
    }
    if let Some(o) = &config.outliers {
        let clean = groups.iter().filter(|&&z| z == o.group).count();
        let extra = (clean as f64 * o.fraction).round() as usize;
        for _ in 0..extra {
            let x = draw_point(&mut rng, o.mean, o.var);
            features.extend_from_slice(&x);
            labels.push(0);
            groups.push(o.group);
        }
    }
    let data = Dataset::new(
        features,
        2,
        labels,
        groups,
        2,
        FeaturePartition::all_improvable(2),
        vec!["x1".into(), "x2".into()],
    )?;
    Ok(if config.group_feature {
        data.with_group_feature()
    } else {
        data
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_fraction_near_p_z() {
        let data = generate_synthetic(&SyntheticConfig::paper_default(), 0).unwrap();
        let frac = data.groups().iter().filter(|&&z| z == 1).count() as f64 / data.len() as f64;
        assert!((frac - 0.40).abs() <= 0.02, "group-1 fraction {frac}");
        assert_eq!(data.dim(), 3);
    }

    #[test]
    fn empty_config_rejected() {
        let cfg = SyntheticConfig {
            n_samples: 0,
            ..SyntheticConfig::paper_default()
        };
        assert!(matches!(generate_synthetic(&cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = SyntheticConfig {
            n_samples: 500,
            ..SyntheticConfig::paper_default()
        };
        let a = generate_synthetic(&cfg, 42).unwrap();
        let b = generate_synthetic(&cfg, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&cfg, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn cluster_means_converge() {
        let cfg = SyntheticConfig {
            n_samples: 200_000,
            group_feature: false,
            ..SyntheticConfig::paper_default()
        };
        let data = generate_synthetic(&cfg, 5).unwrap();
        for y in 0..2 {
            for z in 0..2 {
                let rows: Vec<&[f64]> = (0..data.len())
                    .filter(|&i| data.label(i) as usize == y && data.group(i) == z)
                    .map(|i| data.row(i))
                    .collect();
                let n = rows.len() as f64;
                for k in 0..2 {
                    let mean = rows.iter().map(|r| r[k]).sum::<f64>() / n;
                    let sd = cfg.cluster_vars[y][z][k].sqrt();
                    let err = (mean - cfg.cluster_means[y][z][k]).abs();
                    assert!(err <= 3.0 * sd / n.sqrt(), "cluster ({y},{z}) feature {k}: {err}");
                }
            }
        }
    }

    #[test]
    fn outliers_are_appended_to_group() {
        let cfg = SyntheticConfig {
            n_samples: 2000,
            ..SyntheticConfig::outlier_contaminated()
        };
        let data = generate_synthetic(&cfg, 1).unwrap();
        let far = (0..data.len()).filter(|&i| data.row(i)[1] < -15.0).count();
        let clean0 = (0..2000).filter(|&i| data.group(i) == 0).count();
        assert_eq!(far, (clean0 as f64 * 0.05).round() as usize);
    }
}
