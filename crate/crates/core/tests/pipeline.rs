use improvkit::data::{generate_synthetic, split};
use improvkit::metrics::{ei_disparity, error_rate};
use improvkit::trainer::train;
use improvkit::{EvalOptions, PenaltyTag, SyntheticConfig, TrainConfig, TrainedModel};

fn small_data() -> improvkit::Dataset {
    let cfg = SyntheticConfig {
        n_samples: 2000,
        ..SyntheticConfig::paper_default()
    };
    generate_synthetic(&cfg, 11).unwrap()
}

#[test]
fn saved_model_scores_identically_after_reload() {
    let (tr, te) = split(&small_data(), 0.25, 11).unwrap();
    let mut cfg = TrainConfig::logreg(PenaltyTag::EiLoss, 0.5, 0.5, 2);
    cfg.epochs = 60;
    let model = train(&tr, &cfg).unwrap();
    let back = TrainedModel::from_toml(&model.to_toml().unwrap()).unwrap();
    assert_eq!(back.scorer, model.scorer);
    assert_eq!(back.config, model.config);
    assert_eq!(error_rate(&back.scorer, &te).unwrap(), error_rate(&model.scorer, &te).unwrap());
}

#[test]
fn penalty_lowers_training_disparity() {
    let data = small_data();
    let opts = EvalOptions::default();
    let mut plain = TrainConfig::logreg(PenaltyTag::EiKde, 0.0, 0.5, 2);
    plain.epochs = 150;
    let mut fair = plain.clone();
    fair.lambda = 0.3;
    let a = train(&data, &plain).unwrap();
    let b = train(&data, &fair).unwrap();
    let ei_a = ei_disparity(&a.scorer, &data, &plain.budget, &opts).unwrap();
    let ei_b = ei_disparity(&b.scorer, &data, &fair.budget, &opts).unwrap();
    assert!(ei_b < ei_a, "penalized EI {ei_b} not below unpenalized {ei_a}");
}

#[test]
fn training_is_deterministic_for_a_seed() {
    let data = small_data();
    let mut cfg = TrainConfig::logreg(PenaltyTag::EiCov, 0.4, 0.5, 2);
    cfg.epochs = 40;
    assert_eq!(train(&data, &cfg).unwrap().scorer, train(&data, &cfg).unwrap().scorer);
}
