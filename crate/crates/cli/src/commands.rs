use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use improvkit::data::{generate_synthetic, load_csv, split};
use improvkit::dynamics::{run_simulation, EffortModel};
use improvkit::metrics::full_report;
use improvkit::oracles::{appendix_d_oracle, default_c_grid, optimal_tradeoff, Example, OracleGrid, Rational};
use improvkit::trainer::{cross_validate, frontier, pareto_sweep, train, CvOptions, SweepResult, SWEEP_HEADER};
use improvkit::{
    Dataset, DisparityReport, DynamicsConfig, EffortBudget, Error, EvalOptions, GroupGaussianState, ModelSpec,
    OptimizerKind, PenaltyKind, PenaltyTag, Policy, Result, SchemaConfig, SyntheticConfig, TrainConfig, TrainedModel,
};
use serde_json::json;

use crate::args::{
    CvArgs, DataArgs, EvalArgs, ModelArg, NormArg, OracleArgs, ParetoArgs, SimulateArgs, SplitArg, TrainArgs, TrainFlags,
};
use crate::manifest::Run;

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("invalid {what} `{s}`"))))
        .collect()
}

fn synthetic_preset(name: &str) -> Result<SyntheticConfig> {
    match name {
        "" | "paper" => Ok(SyntheticConfig::paper_default()),
        "outlier_clean" => Ok(SyntheticConfig::outlier_clean()),
        "outlier_contaminated" => Ok(SyntheticConfig::outlier_contaminated()),
        "balanced" => Ok(SyntheticConfig::balanced_negative_rate()),
        "imbalanced" => Ok(SyntheticConfig::imbalanced_negative_rate()),
        other => Err(Error::Config(format!(
            "unknown synthetic preset `{other}` (valid: paper, outlier_clean, outlier_contaminated, balanced, imbalanced)"
        ))),
    }
}

fn synthetic_config(spec: &str, n_samples: Option<usize>) -> Result<Option<SyntheticConfig>> {
    let Some(rest) = spec.strip_prefix("synth") else {
        return Ok(None);
    };
    let mut cfg = synthetic_preset(rest.trim_start_matches(':'))?;
    if let Some(n) = n_samples {
        cfg.n_samples = n;
    }
    Ok(Some(cfg))
}

/// Loads the dataset named by `--data`, recording file inputs in the manifest.
fn load_data(args: &DataArgs, seed: u64, run: &mut Run) -> Result<Dataset> {
    if let Some(cfg) = synthetic_config(&args.data, args.n_samples)? {
        return generate_synthetic(&cfg, args.data_seed.unwrap_or(seed));
    }
    let path = Path::new(&args.data);
    let schema_path = args
        .schema
        .as_deref()
        .ok_or_else(|| Error::Config("CSV input needs --schema".into()))?;
    let schema = SchemaConfig::from_file(schema_path)?;
    run.input(path)?;
    run.input(schema_path)?;
    load_csv(path, &schema)
}

fn budget(delta: f64, norm: NormArg, cost: Option<&str>, d_improvable: usize) -> Result<EffortBudget> {
    Ok(match norm {
        NormArg::Linf => EffortBudget::linf(delta, d_improvable),
        NormArg::L2 => {
            let diag = match cost {
                Some(c) => parse_list(c, "cost")?,
                None => vec![1.0; d_improvable],
            };
            EffortBudget::l2(delta, diag)
        }
    })
}

/// Base config from `--config` (or the logistic defaults) with every given flag applied.
fn train_config(flags: &TrainFlags, data: &Dataset, seed: u64, run: &mut Run) -> Result<TrainConfig> {
    let d_imp = data.partition().improvable.len();
    let mut cfg = match &flags.config {
        Some(path) => {
            run.input(path)?;
            let text = fs::read_to_string(path)?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("invalid training config: {e}")))?
        }
        None => TrainConfig::logreg(PenaltyTag::None, 0.0, 0.5, d_imp),
    };
    if let Some(p) = &flags.penalty {
        let tag: PenaltyTag = p.parse()?;
        cfg.penalty = PenaltyKind { tag, ..cfg.penalty };
    }
    if let Some(h) = flags.kde_bandwidth {
        cfg.penalty.kde_bandwidth = h;
    }
    if let Some(l) = flags.lambda {
        cfg.lambda = l;
    }
    if flags.delta.is_some() || flags.norm.is_some() || flags.cost.is_some() {
        let norm = flags.norm.unwrap_or(match cfg.budget.norm {
            improvkit::NormKind::Linf => NormArg::Linf,
            improvkit::NormKind::L2Weighted => NormArg::L2,
        });
        cfg.budget = budget(flags.delta.unwrap_or(cfg.budget.delta), norm, flags.cost.as_deref(), d_imp)?;
    }
    if let Some(m) = flags.model {
        cfg.model = match m {
            ModelArg::Logreg => ModelSpec::Logreg,
            ModelArg::Mlp => ModelSpec::Mlp {
                hidden: parse_list(&flags.hidden, "hidden width")?,
            },
        };
        if flags.epochs.is_none() && flags.config.is_none() {
            cfg.epochs = cfg.model.default_epochs();
        }
    }
    if let Some(e) = flags.epochs {
        cfg.epochs = e;
    }
    if let Some(b) = flags.batch_size {
        cfg.batch_size = b;
    }
    if let Some(lr) = flags.lr {
        cfg.learning_rate = lr;
    }
    if let Some(o) = &flags.optimizer {
        cfg.optimizer = o.parse::<OptimizerKind>()?;
    }
    cfg.seed = seed;
    cfg.budget.validate(data.partition())?;
    cfg.validate()?;
    Ok(cfg)
}

fn to_json<T: serde::Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).unwrap_or(serde_json::Value::Null)
}

fn report_csv(report: &DisparityReport) -> String {
    format!("error,ei,dp,eo,eod,be,er\n{}\n", report.csv_fields().join(","))
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let mut run = Run::new("train", Some(&args.out), json!({}), Some(args.seed))?;
    let data = load_data(&args.data, args.seed, &mut run)?;
    let cfg = train_config(&args.train, &data, args.seed, &mut run)?;
    let (tr, te) = split(&data, args.test_fraction, args.seed)?;
    log::info!("training on {} rows, testing on {}", tr.len(), te.len());
    let model = train(&tr, &cfg)?;
    let report = full_report(&model.scorer, &te, &cfg.budget, &EvalOptions::default());
    run.write("model.toml", &model.to_toml()?)?;
    run.write("history.csv", &model.history_csv())?;
    run.write("report.txt", &report.to_text())?;
    run.write("report.csv", &report_csv(&report))?;
    print!("{}", report.to_text());
    run.set_config(json!({"data": args.data.data, "test_fraction": args.test_fraction, "train": to_json(&cfg)}));
    run.finish()
}

pub fn eval_cmd(args: &EvalArgs) -> Result<()> {
    let text = fs::read_to_string(&args.model)
        .map_err(|e| Error::Data(format!("cannot read model {}: {e}", args.model.display())))?;
    let model = TrainedModel::from_toml(&text)?;
    let seed = args.seed.unwrap_or(model.config.seed);
    let mut run = Run::new("eval", Some(&args.out), json!({}), Some(seed))?;
    run.input(&args.model)?;
    let data = load_data(&args.data, seed, &mut run)?;
    let rows = match args.split {
        SplitArg::All => data,
        SplitArg::Train => split(&data, args.test_fraction, seed)?.0,
        SplitArg::Test => split(&data, args.test_fraction, seed)?.1,
    };
    let mut b = model.config.budget.clone();
    if args.delta.is_some() || args.norm.is_some() || args.cost.is_some() {
        let norm = args.norm.unwrap_or(match b.norm {
            improvkit::NormKind::Linf => NormArg::Linf,
            improvkit::NormKind::L2Weighted => NormArg::L2,
        });
        b = budget(args.delta.unwrap_or(b.delta), norm, args.cost.as_deref(), rows.partition().improvable.len())?;
    }
    b.validate(rows.partition())?;
    let report = full_report(&model.scorer, &rows, &b, &EvalOptions::default());
    run.write("report.txt", &report.to_text())?;
    run.write("report.csv", &report_csv(&report))?;
    print!("{}", report.to_text());
    run.set_config(json!({"data": args.data.data, "split": format!("{:?}", args.split).to_lowercase(), "budget": to_json(&b)}));
    run.finish()
}

fn frontier_csv(sweep: &SweepResult) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in frontier(&sweep.rows) {
        let _ = writeln!(out, "{},{},{},{}", r.lambda, r.seed, r.split, r.report.csv_fields().join(","));
    }
    out
}

pub fn pareto_cmd(args: &ParetoArgs) -> Result<()> {
    let lambdas: Vec<f64> = parse_list(&args.lambdas, "lambda")?;
    let seeds: Vec<u64> = parse_list(&args.seeds, "seed")?;
    if lambdas.is_empty() {
        return Err(Error::Config("--lambdas is empty".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("--seeds is empty".into()));
    }
    let mut run = Run::new("pareto", Some(&args.out), json!({}), seeds.first().copied())?;
    let data = load_data(&args.data, seeds[0], &mut run)?;
    let base = train_config(&args.train, &data, seeds[0], &mut run)?;
    let sweep = pareto_sweep(&data, &base, &lambdas, &seeds, args.test_fraction, &EvalOptions::default())?;
    run.write("sweep.csv", &sweep.to_csv())?;
    run.write("frontier.csv", &frontier_csv(&sweep))?;
    if !sweep.failures.is_empty() {
        let mut f = String::from("lambda,seed,reason\n");
        for (l, s, reason) in &sweep.failures {
            let _ = writeln!(f, "{l},{s},\"{}\"", reason.replace('"', "'"));
        }
        run.write("failures.csv", &f)?;
        log::warn!("{} of {} runs failed", sweep.failures.len(), lambdas.len() * seeds.len());
    }
    println!(
        "{} runs, {} failed; frontier has {} points",
        lambdas.len() * seeds.len(),
        sweep.failures.len(),
        frontier(&sweep.rows).len()
    );
    run.set_config(json!({"data": args.data.data, "lambdas": lambdas, "seeds": seeds, "test_fraction": args.test_fraction, "train": to_json(&base)}));
    run.finish()
}

pub fn cv_cmd(args: &CvArgs) -> Result<()> {
    let mut run = Run::new("cv", Some(&args.out), json!({}), Some(args.seed))?;
    let data = load_data(&args.data, args.seed, &mut run)?;
    let base = train_config(&args.train, &data, args.seed, &mut run)?;
    let opts = CvOptions {
        folds: args.folds,
        stage_one: parse_list(&args.stage_one, "lambda")?,
        learning_rates: match &args.lrs {
            Some(l) => parse_list(l, "learning rate")?,
            None => Vec::new(),
        },
        error_slack: args.error_slack,
        eval: EvalOptions::default(),
    };
    let result = cross_validate(&data, &base, &opts)?;
    let mut csv = String::from("stage,lambda,learning_rate,error,ei,folds_used\n");
    for (stage, scores) in [(1, &result.stage_one), (2, &result.stage_two)] {
        for s in scores.iter() {
            let _ = writeln!(csv, "{stage},{},{},{},{},{}", s.lambda, s.learning_rate, s.error, s.ei, s.folds_used);
        }
    }
    run.write("cv.csv", &csv)?;
    let summary = serde_json::to_string_pretty(&result).map_err(|e| Error::Config(e.to_string()))?;
    run.write("cv.json", &(summary + "\n"))?;
    println!(
        "selected lambda = {}, learning rate = {} (baseline error {:.4})",
        result.lambda, result.learning_rate, result.baseline_error
    );
    run.set_config(json!({"data": args.data.data, "train": to_json(&base), "cv": to_json(&opts)}));
    run.finish()
}

fn policies(spec: &str) -> Result<Vec<Policy>> {
    if spec == "all" {
        return Ok(Policy::ALL.to_vec());
    }
    let list: Vec<Policy> = parse_list_with(spec, str::parse)?;
    if list.is_empty() {
        return Err(Error::Config("--policy is empty".into()));
    }
    Ok(list)
}

fn parse_list_with<T>(text: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    text.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect()
}

pub fn simulate_cmd(args: &SimulateArgs) -> Result<()> {
    let init: Vec<f64> = parse_list(&args.init, "initial state value")?;
    let [m0, s0, m1, s1] = init[..] else {
        return Err(Error::Config(format!("--init needs 4 values, got {}", init.len())));
    };
    let state = GroupGaussianState::new(m0, s0, m1, s1)?;
    let effort_model: EffortModel = args.effort_model.parse()?;
    let configs: Vec<DynamicsConfig> = policies(&args.policy)?
        .into_iter()
        .map(|policy| DynamicsConfig {
            init: state,
            alpha: args.alpha,
            c: args.c,
            beta: args.beta,
            rounds: args.rounds,
            policy,
            effort_model,
        })
        .collect();
    let mut run = Run::new("simulate", args.out.as_deref(), to_json(&configs), None)?;
    let trajectories: Vec<Result<improvkit::Trajectory>> = {
        use rayon::prelude::*;
        configs.par_iter().map(run_simulation).collect()
    };
    let single = configs.len() == 1;
    for (cfg, t) in configs.iter().zip(trajectories) {
        let t = t?;
        let name = if single {
            "trajectory.csv".to_string()
        } else {
            format!("{}/trajectory.csv", cfg.policy)
        };
        run.write(&name, &t.to_csv())?;
    }
    run.finish()
}

pub fn oracle_cmd(args: &OracleArgs) -> Result<()> {
    let mut run = Run::new(
        "oracle",
        args.out.as_deref(),
        json!({"example": args.example, "m": args.m, "data": args.data, "delta": args.delta, "points": args.points}),
        None,
    )?;
    if args.example == "tradeoff" {
        let cfg = synthetic_config(&args.data, None)?
            .ok_or_else(|| Error::Config("the trade-off oracle needs a synthetic preset".into()))?;
        let grid = OracleGrid::default();
        let cs = default_c_grid(&cfg, args.delta, args.points, &grid)?;
        let curve = optimal_tradeoff(&cfg, args.delta, &cs, &grid)?;
        let mut csv = String::from("c,error,ei,theta,b0,b1,feasible\n");
        for p in &curve {
            let k = p.classifier;
            let _ = writeln!(csv, "{},{},{},{},{},{},{}", p.c, p.error, p.disparity, k.theta, k.b0, k.b1, p.feasible);
        }
        run.write("tradeoff.csv", &csv)?;
        return run.finish();
    }
    let example: Example = args.example.parse()?;
    let m: Rational = args
        .m
        .parse()
        .map_err(|_| Error::Config(format!("--m must be a rational number, got `{}`", args.m)))?;
    let report = appendix_d_oracle(example, m)?;
    if args.out.is_some() {
        print!("{}", report.to_text());
        run.write("report.txt", &report.to_text())?;
        run.write("oracle.csv", &report.to_csv())?;
    } else {
        run.write("report.txt", &report.to_text())?;
    }
    run.finish()
}
