//! Empirical disparities for EI, DP, EO, EOD, BE and ER.
//!
//! Every notion reports `max_z |group value - pooled value|`. Groups whose conditioning
//! set is empty are left out of the max and listed as skipped.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::effort::{best_response, recourse_distance, EffortBudget, PgdConfig};
use crate::error::{Error, Result};
use crate::models::{accepted, sigmoid, Scorer};

/// Settings shared by the effort-based notions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub pgd: PgdConfig,
    /// Recourse search cap; `None` means 10 times the largest column range.
    #[serde(default)]
    pub delta_max: Option<f64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            pgd: PgdConfig::default(),
            delta_max: None,
        }
    }
}

impl EvalOptions {
    pub fn delta_max_for(&self, dataset: &Dataset) -> f64 {
        self.delta_max
            .unwrap_or_else(|| 10.0 * dataset.max_column_range())
            .max(f64::MIN_POSITIVE)
    }
}

/// Per-group values and the resulting disparity for one notion.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStat {
    /// `None` for groups with an empty conditioning set.
    pub per_group: Vec<Option<f64>>,
    pub pooled: f64,
    pub disparity: f64,
    pub skipped: Vec<usize>,
}

/// Max gap of per-group ratios `num[z] / den[z]` to the pooled ratio.
pub fn max_gap_to_pool(num: &[f64], den: &[f64]) -> Result<GroupStat> {
    let total: f64 = den.iter().sum();
    if total <= 0.0 {
        return Err(Error::eval("empty pooled conditioning set"));
    }
    let pooled = num.iter().sum::<f64>() / total;
    let mut per_group = Vec::with_capacity(den.len());
    let mut skipped = Vec::new();
    let mut disparity: f64 = 0.0;
    for (z, (&n, &d)) in num.iter().zip(den).enumerate() {
        if d <= 0.0 {
            per_group.push(None);
            skipped.push(z);
            continue;
        }
        let v = n / d;
        disparity = disparity.max((v - pooled).abs());
        per_group.push(Some(v));
    }
    Ok(GroupStat {
        per_group,
        pooled,
        disparity,
        skipped,
    })
}

fn logits(model: &Scorer, data: &Dataset) -> Result<Vec<f64>> {
    if model.dim() != data.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            got: data.dim(),
        });
    }
    Ok((0..data.len())
        .into_par_iter()
        .map(|i| model.logit_unchecked(data.row(i)))
        .collect())
}

/// Improvability of every rejected sample; `None` for accepted ones.
fn improvable_flags(
    model: &Scorer,
    data: &Dataset,
    budget: &EffortBudget,
    opts: &EvalOptions,
    logits: &[f64],
) -> Result<Vec<Option<bool>>> {
    budget.validate(data.partition())?;
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            if accepted(sigmoid(logits[i])) {
                return Ok(None);
            }
            let r = best_response(model, data.row(i), budget, data.partition(), &opts.pgd)?;
            Ok(Some(r.improvable()))
        })
        .collect()
}

fn ei_from_flags(data: &Dataset, flags: &[Option<bool>]) -> Result<GroupStat> {
    let z_count = data.n_groups();
    let (mut num, mut den) = (vec![0.0; z_count], vec![0.0; z_count]);
    for (i, f) in flags.iter().enumerate() {
        if let Some(imp) = f {
            den[data.group(i)] += 1.0;
            if *imp {
                num[data.group(i)] += 1.0;
            }
        }
    }
    max_gap_to_pool(&num, &den).map_err(|_| Error::eval("no rejected samples"))
}

fn be_from_flags(data: &Dataset, flags: &[Option<bool>]) -> Result<GroupStat> {
    let z_count = data.n_groups();
    let (mut num, mut den) = (vec![0.0; z_count], vec![0.0; z_count]);
    for (i, f) in flags.iter().enumerate() {
        den[data.group(i)] += 1.0;
        if *f == Some(true) {
            num[data.group(i)] += 1.0;
        }
    }
    max_gap_to_pool(&num, &den)
}

/// `P(max f ≥ 0.5 | f < 0.5, z)` against its pooled value.
pub fn ei_stat(model: &Scorer, data: &Dataset, budget: &EffortBudget, opts: &EvalOptions) -> Result<GroupStat> {
    let l = logits(model, data)?;
    ei_from_flags(data, &improvable_flags(model, data, budget, opts, &l)?)
}

pub fn ei_disparity(model: &Scorer, data: &Dataset, budget: &EffortBudget, opts: &EvalOptions) -> Result<f64> {
    Ok(ei_stat(model, data, budget, opts)?.disparity)
}

/// Joint `P(max f ≥ 0.5, f < 0.5 | z)`.
pub fn be_stat(model: &Scorer, data: &Dataset, budget: &EffortBudget, opts: &EvalOptions) -> Result<GroupStat> {
    let l = logits(model, data)?;
    be_from_flags(data, &improvable_flags(model, data, budget, opts, &l)?)
}

pub fn be_disparity(model: &Scorer, data: &Dataset, budget: &EffortBudget, opts: &EvalOptions) -> Result<f64> {
    Ok(be_stat(model, data, budget, opts)?.disparity)
}

/// Acceptance rate among rows matching `label` (all rows when `None`).
fn acceptance_stat(data: &Dataset, logits: &[f64], label: Option<u8>) -> Result<GroupStat> {
    let z_count = data.n_groups();
    let (mut num, mut den) = (vec![0.0; z_count], vec![0.0; z_count]);
    for (i, &l) in logits.iter().enumerate() {
        if label.is_some_and(|y| data.label(i) != y) {
            continue;
        }
        den[data.group(i)] += 1.0;
        if accepted(sigmoid(l)) {
            num[data.group(i)] += 1.0;
        }
    }
    max_gap_to_pool(&num, &den)
}

pub fn dp_stat(model: &Scorer, data: &Dataset) -> Result<GroupStat> {
    acceptance_stat(data, &logits(model, data)?, None)
}

/// True-positive-rate gaps.
pub fn eo_stat(model: &Scorer, data: &Dataset) -> Result<GroupStat> {
    acceptance_stat(data, &logits(model, data)?, Some(1))
}

pub fn dp_disparity(model: &Scorer, data: &Dataset) -> Result<f64> {
    Ok(dp_stat(model, data)?.disparity)
}

pub fn eo_disparity(model: &Scorer, data: &Dataset) -> Result<f64> {
    Ok(eo_stat(model, data)?.disparity)
}

/// Larger of the true-positive and false-positive rate disparities.
pub fn eod_disparity(model: &Scorer, data: &Dataset) -> Result<f64> {
    let l = logits(model, data)?;
    let tpr = acceptance_stat(data, &l, Some(1))?;
    let fpr = acceptance_stat(data, &l, Some(0))?;
    Ok(tpr.disparity.max(fpr.disparity))
}

/// Mean recourse among rejected samples, per group, plus the number of capped searches.
pub fn er_stat(
    model: &Scorer,
    data: &Dataset,
    budget: &EffortBudget,
    opts: &EvalOptions,
) -> Result<(GroupStat, usize)> {
    budget.validate(data.partition())?;
    let l = logits(model, data)?;
    let delta_max = opts.delta_max_for(data);
    let rec: Vec<Option<(f64, bool)>> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            if accepted(sigmoid(l[i])) {
                return Ok(None);
            }
            let r = recourse_distance(model, data.row(i), budget, data.partition(), &opts.pgd, delta_max)?;
            Ok(Some((r.distance, r.capped)))
        })
        .collect::<Result<_>>()?;
    let z_count = data.n_groups();
    let (mut num, mut den) = (vec![0.0; z_count], vec![0.0; z_count]);
    let mut capped = 0;
    for (i, r) in rec.iter().enumerate() {
        if let Some((d, c)) = r {
            num[data.group(i)] += d;
            den[data.group(i)] += 1.0;
            capped += usize::from(*c);
        }
    }
    let stat = max_gap_to_pool(&num, &den).map_err(|_| Error::eval("no rejected samples"))?;
    Ok((stat, capped))
}

pub fn er_disparity(model: &Scorer, data: &Dataset, budget: &EffortBudget, opts: &EvalOptions) -> Result<f64> {
    Ok(er_stat(model, data, budget, opts)?.0.disparity)
}

/// Fraction of rows where `1{f ≥ 0.5}` differs from the label.
pub fn error_rate(model: &Scorer, data: &Dataset) -> Result<f64> {
    let l = logits(model, data)?;
    let wrong = l
        .iter()
        .enumerate()
        .filter(|(i, &v)| u8::from(accepted(sigmoid(v))) != data.label(*i))
        .count();
    Ok(wrong as f64 / data.len() as f64)
}

/// Every disparity for one (model, dataset, budget). A failing notion is left `None` with
/// its reason in `diagnostics`; the other fields are still computed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DisparityReport {
    pub error_rate: Option<f64>,
    pub ei: Option<f64>,
    pub dp: Option<f64>,
    pub eo: Option<f64>,
    pub eod: Option<f64>,
    pub be: Option<f64>,
    pub er: Option<f64>,
    pub er_capped: usize,
    pub per_group: BTreeMap<String, Vec<Option<f64>>>,
    pub skipped_groups: Vec<String>,
    pub diagnostics: BTreeMap<String, String>,
}

pub const REPORT_COLUMNS: [&str; 7] = ["error", "ei", "dp", "eo", "eod", "be", "er"];

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x}"))
}

impl DisparityReport {
    fn record(&mut self, notion: &str, stat: Result<GroupStat>) -> Option<f64> {
        match stat {
            Ok(s) => {
                for z in &s.skipped {
                    self.skipped_groups
                        .push(format!("{notion}: group {z} has an empty conditioning set"));
                }
                self.per_group.insert(notion.to_string(), s.per_group);
                Some(s.disparity)
            }
            Err(e) => {
                self.diagnostics.insert(notion.to_string(), e.to_string());
                None
            }
        }
    }

    /// Values in [`REPORT_COLUMNS`] order.
    pub fn values(&self) -> [Option<f64>; 7] {
        [self.error_rate, self.ei, self.dp, self.eo, self.eod, self.be, self.er]
    }

    /// `key = value` lines, one metric per line; missing values print as `nan`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in REPORT_COLUMNS.iter().zip(self.values()) {
            let _ = writeln!(out, "{k} = {}", fmt_opt(v));
        }
        let _ = writeln!(out, "er_capped = {}", self.er_capped);
        for (notion, groups) in &self.per_group {
            for (z, v) in groups.iter().enumerate() {
                let _ = writeln!(out, "{notion}.group{z} = {}", fmt_opt(*v));
            }
        }
        for s in &self.skipped_groups {
            let _ = writeln!(out, "skipped = \"{s}\"");
        }
        for (k, v) in &self.diagnostics {
            let _ = writeln!(out, "diagnostic.{k} = \"{}\"", v.replace('"', "'"));
        }
        out
    }

    /// Comma-separated values in [`REPORT_COLUMNS`] order.
    pub fn csv_fields(&self) -> Vec<String> {
        self.values().iter().map(|v| fmt_opt(*v)).collect()
    }
}

pub fn full_report(model: &Scorer, data: &Dataset, budget: &EffortBudget, opts: &EvalOptions) -> DisparityReport {
    let mut report = DisparityReport::default();
    let l = match logits(model, data) {
        Ok(l) => l,
        Err(e) => {
            report.diagnostics.insert("model".into(), e.to_string());
            return report;
        }
    };
    let wrong = l
        .iter()
        .enumerate()
        .filter(|(i, &v)| u8::from(accepted(sigmoid(v))) != data.label(*i))
        .count();
    report.error_rate = Some(wrong as f64 / data.len() as f64);
    report.dp = report.record("dp", acceptance_stat(data, &l, None));
    report.eo = report.record("eo", acceptance_stat(data, &l, Some(1)));
    let fpr = report.record("eod_fpr", acceptance_stat(data, &l, Some(0)));
    report.eod = match (report.eo, fpr) {
        (Some(a), Some(b)) => Some(a.max(b)),
        _ => None,
    };
    match improvable_flags(model, data, budget, opts, &l) {
        Ok(flags) => {
            report.ei = report.record("ei", ei_from_flags(data, &flags));
            report.be = report.record("be", be_from_flags(data, &flags));
        }
        Err(e) => {
            report.diagnostics.insert("ei".into(), e.to_string());
            report.diagnostics.insert("be".into(), e.to_string());
        }
    }
    match er_stat(model, data, budget, opts) {
        Ok((stat, capped)) => {
            report.er_capped = capped;
            report.er = report.record("er", Ok(stat));
        }
        Err(e) => {
            report.diagnostics.insert("er".into(), e.to_string());
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeaturePartition;
    use crate::models::GlmScorer;
    use proptest::prelude::*;

    /// One feature, identity logit: `f(x) = sigmoid(x)`.
    fn identity() -> Scorer {
        Scorer::Glm(GlmScorer::new(vec![1.0], 0.0))
    }

    fn dataset(xs: &[f64], ys: &[u8], zs: &[usize], n_groups: usize) -> Dataset {
        Dataset::new(
            xs.to_vec(),
            1,
            ys.to_vec(),
            zs.to_vec(),
            n_groups,
            FeaturePartition::all_improvable(1),
            vec!["x".into()],
        )
        .unwrap()
    }

    fn budget(delta: f64) -> EffortBudget {
        EffortBudget::linf(delta, 1)
    }

    #[test]
    fn figure_two_configuration() {
        // per group: 3 rejected, one of them within reach; three accepted
        let xs = [-0.5, -2.0, -3.0, 1.0, 2.0, 3.0, -0.8, -2.5, -4.0, 0.5, 1.5, 2.5];
        let zs = [0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1];
        let data = dataset(&xs, &[0; 12], &zs, 2);
        let opts = EvalOptions::default();
        let stat = ei_stat(&identity(), &data, &budget(1.0), &opts).unwrap();
        assert_eq!(stat.per_group, vec![Some(1.0 / 3.0), Some(1.0 / 3.0)]);
        assert_eq!(stat.disparity, 0.0);
        assert_eq!(ei_disparity(&identity(), &data, &budget(0.0), &opts).unwrap(), 0.0);
        assert_eq!(dp_disparity(&identity(), &data).unwrap(), 0.0);
    }

    #[test]
    fn dp_arithmetic() {
        // acceptance 1/5 in group 0, 3/5 in group 1
        let xs = [1.0, -1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, -1.0, -1.0];
        let zs = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let data = dataset(&xs, &[1; 10], &zs, 2);
        assert!((dp_disparity(&identity(), &data).unwrap() - 0.2).abs() < 1e-15);
        let all = Scorer::Glm(GlmScorer::new(vec![0.0], 1.0));
        assert_eq!(dp_disparity(&all, &data).unwrap(), 0.0);
        assert_eq!(eo_disparity(&all, &data).unwrap(), 0.0);
        assert!(eod_disparity(&all, &data).is_err(), "no y = 0 rows");
    }

    #[test]
    fn single_group_and_no_rejections() {
        let data = dataset(&[-1.0, -2.0, 1.0], &[0, 1, 1], &[0, 0, 0], 2);
        let opts = EvalOptions::default();
        let stat = ei_stat(&identity(), &data, &budget(1.5), &opts).unwrap();
        assert_eq!(stat.disparity, 0.0);
        assert_eq!(stat.skipped, vec![1]);
        let accept_all = Scorer::Glm(GlmScorer::new(vec![0.0], 5.0));
        assert!(matches!(
            ei_disparity(&accept_all, &data, &budget(1.0), &opts),
            Err(Error::Evaluation(_))
        ));
        assert_eq!(be_disparity(&accept_all, &data, &budget(1.0), &opts).unwrap(), 0.0);
    }

    #[test]
    fn er_mirror_and_outlier() {
        let opts = EvalOptions {
            delta_max: Some(1e6),
            ..Default::default()
        };
        let data = dataset(&[-1.0, -2.0, -1.0, -2.0], &[0; 4], &[0, 0, 1, 1], 2);
        assert_eq!(er_disparity(&identity(), &data, &budget(1.0), &opts).unwrap(), 0.0);
        // one far outlier in group 0 moves ER a lot and EI by at most 1/(n_rejected + 1)
        let xs = [-1.0, -2.0, -1.0, -2.0, -100.0];
        let out = dataset(&xs, &[0; 5], &[0, 0, 1, 1, 0], 2);
        let er = er_disparity(&identity(), &out, &budget(1.5), &opts).unwrap();
        // group means 103/3 and 3/2 around the pooled 106/5; group 1 is farther
        assert!((er - (106.0 / 5.0 - 1.5)).abs() < 1e-9);
        let ei0 = ei_disparity(&identity(), &data, &budget(1.5), &opts).unwrap();
        let ei1 = ei_disparity(&identity(), &out, &budget(1.5), &opts).unwrap();
        assert!((ei1 - ei0).abs() <= 1.0 / 3.0 + 1e-12);
    }

    #[test]
    fn report_matches_individual_operations() {
        let xs = [-0.3, -1.2, 0.4, 2.0, -0.1, -2.2, -0.6, 0.9];
        let ys = [0, 1, 1, 1, 0, 0, 1, 0];
        let zs = [0, 0, 0, 0, 1, 1, 1, 1];
        let data = dataset(&xs, &ys, &zs, 2);
        let m = identity();
        let b = budget(0.5);
        let o = EvalOptions::default();
        let r = full_report(&m, &data, &b, &o);
        assert_eq!(r.error_rate, Some(error_rate(&m, &data).unwrap()));
        assert_eq!(r.ei, Some(ei_disparity(&m, &data, &b, &o).unwrap()));
        assert_eq!(r.dp, Some(dp_disparity(&m, &data).unwrap()));
        assert_eq!(r.eo, Some(eo_disparity(&m, &data).unwrap()));
        assert_eq!(r.eod, Some(eod_disparity(&m, &data).unwrap()));
        assert_eq!(r.be, Some(be_disparity(&m, &data, &b, &o).unwrap()));
        assert_eq!(r.er, Some(er_disparity(&m, &data, &b, &o).unwrap()));
        assert!(r.to_text().contains("ei = "));
    }

    #[test]
    fn report_keeps_going_after_a_failure() {
        let data = dataset(&[1.0, 2.0], &[1, 0], &[0, 1], 2);
        let r = full_report(&identity(), &data, &budget(1.0), &EvalOptions::default());
        assert!(r.ei.is_none() && r.er.is_none());
        assert!(r.diagnostics.contains_key("ei"));
        assert_eq!(r.dp, Some(0.0));
        assert_eq!(r.error_rate, Some(0.5));
    }

    #[test]
    fn constant_model_error_is_minority_rate() {
        let data = dataset(&[0.0; 5], &[1, 1, 0, 1, 0], &[0, 1, 0, 1, 1], 2);
        let m = Scorer::Glm(GlmScorer::new(vec![0.0], 3.0));
        assert!((error_rate(&m, &data).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(dp_disparity(&m, &data).unwrap(), 0.0);
    }

    fn arb_data() -> impl Strategy<Value = (Vec<f64>, Vec<u8>, Vec<usize>)> {
        (4usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(-3.0..3.0f64, n),
                prop::collection::vec(0u8..2, n),
                prop::collection::vec(0usize..3, n),
            )
        })
    }

    /// Counting notions must match exactly; ER sums distances and may differ in the last ulp.
    fn assert_reports_close(a: &DisparityReport, b: &DisparityReport) -> std::result::Result<(), TestCaseError> {
        let (va, vb) = (a.values(), b.values());
        prop_assert_eq!(&va[..6], &vb[..6]);
        match (va[6], vb[6]) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0)),
            (x, y) => prop_assert_eq!(x, y),
        }
        Ok(())
    }

    proptest! {
        #[test]
        fn bounded_and_relabel_invariant((xs, ys, zs) in arb_data(), w in -2.0..2.0f64, b in -1.0..1.0f64, delta in 0.0..2.0f64) {
            let m = Scorer::Glm(GlmScorer::new(vec![w], b));
            let data = dataset(&xs, &ys, &zs, 3);
            let relabeled: Vec<usize> = zs.iter().map(|z| (z + 1) % 3).collect();
            let data2 = dataset(&xs, &ys, &relabeled, 3);
            let o = EvalOptions::default();
            let r1 = full_report(&m, &data, &budget(delta), &o);
            let r2 = full_report(&m, &data2, &budget(delta), &o);
            assert_reports_close(&r1, &r2)?;
            for v in [r1.ei, r1.dp, r1.eo, r1.eod, r1.be].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if let Some(er) = r1.er { prop_assert!(er >= 0.0); }
        }

        #[test]
        fn duplication_invariant((xs, ys, zs) in arb_data(), w in -2.0..2.0f64, delta in 0.0..2.0f64) {
            let m = Scorer::Glm(GlmScorer::new(vec![w], 0.2));
            let data = dataset(&xs, &ys, &zs, 3);
            let doubled = data.concat(&data).unwrap();
            let o = EvalOptions::default();
            assert_reports_close(&full_report(&m, &data, &budget(delta), &o),
                                 &full_report(&m, &doubled, &budget(delta), &o))?;
        }

        #[test]
        fn be_is_ei_times_common_negative_rate(k in 1usize..6, imp0 in 0usize..6, imp1 in 0usize..6, acc in 1usize..5) {
            // both groups: k rejected of which imp improvable, acc accepted
            let (i0, i1) = (imp0.min(k), imp1.min(k));
            let mut xs = vec![];
            let mut zs = vec![];
            for (z, imp) in [(0, i0), (1, i1)] {
                for j in 0..k { xs.push(if j < imp { -0.5 } else { -5.0 }); zs.push(z); }
                for _ in 0..acc { xs.push(1.0); zs.push(z); }
            }
            let n = xs.len();
            let data = dataset(&xs, &vec![0; n], &zs, 2);
            let o = EvalOptions::default();
            let ei = ei_disparity(&identity(), &data, &budget(1.0), &o).unwrap();
            let be = be_disparity(&identity(), &data, &budget(1.0), &o).unwrap();
            let neg = k as f64 / (k + acc) as f64;
            prop_assert!((be - ei * neg).abs() < 1e-12);
        }
    }
}
