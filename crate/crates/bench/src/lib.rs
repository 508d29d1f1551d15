//! Fixtures shared by the benchmark targets.

use improvkit::data::generate_synthetic;
use improvkit::{Dataset, EffortBudget, GlmScorer, MlpScorer, Scorer, SyntheticConfig};

/// Default synthetic benchmark data with the group column, `n` rows.
pub fn synthetic(n: usize) -> Dataset {
    let cfg = SyntheticConfig {
        n_samples: n,
        ..SyntheticConfig::paper_default()
    };
    generate_synthetic(&cfg, 0).expect("valid preset")
}

pub fn glm() -> Scorer {
    Scorer::Glm(GlmScorer::new(vec![0.8, 1.6, -0.3], -0.2))
}

pub fn mlp() -> Scorer {
    Scorer::Mlp(MlpScorer::new(3, &[4, 4], 0).expect("valid widths"))
}

pub fn budget() -> EffortBudget {
    EffortBudget::linf(0.5, 2)
}
