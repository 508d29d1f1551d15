//! Reference computations with closed forms: the optimal error/EI trade-off for Gaussian
//! clusters and exact rational worked examples of one improvement step.

pub mod appendix_d;
pub mod qform;

pub use appendix_d::{appendix_d_oracle, AppendixDReport, Example, PiecewiseUniform, Rational, ThresholdPolicy};
pub use qform::{
    components, constrained_tradeoff, default_c_grid, interpolate_error, optimal_tradeoff, qform_ei_disparity,
    qform_er_disparity, qform_error, unconstrained_optimum, GaussianAwareClassifier, OracleGrid, OracleNotion,
    TradeoffPoint,
};
