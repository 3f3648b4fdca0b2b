//! Open-world scoring: confusion accounting with a rejection option,
//! per-class precision/recall/F1, the seen/unseen aggregates and their
//! harmonic means, and the F1 of the unknown macro-bin.
//!
//! Every ratio with a zero denominator is defined as 0.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{ClassRole, SplitManifest};

/// Classifier output: a known class or a rejection.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Prediction {
    Class(String),
    Reject,
}

/// Ground truth: a known class or the unknown macro-container.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Truth {
    Class(String),
    Unknown,
}

impl fmt::Display for Prediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prediction::Class(c) => f.write_str(c),
            Prediction::Reject => f.write_str("REJECT"),
        }
    }
}

impl fmt::Display for Truth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Truth::Class(c) => f.write_str(c),
            Truth::Unknown => f.write_str("UNKNOWN"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn scores(&self) -> Scores {
        let recall = ratio(self.tp, self.tp + self.fn_);
        let precision = ratio(self.tp, self.tp + self.fp);
        Scores { precision, recall, f1: harmonic(precision, recall) }
    }

    fn add(&mut self, other: &Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `2ab / (a + b)`, and 0 when `a + b = 0`.
pub fn harmonic(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Harmonic mean of the seen and unseen mean recalls.
pub fn h_gzsl(r_seen: f64, r_unseen: f64) -> f64 {
    harmonic(r_seen, r_unseen)
}

/// Harmonic mean of the seen and unseen mean F1 scores.
pub fn h_ozsl(f1_seen: f64, f1_unseen: f64) -> f64 {
    harmonic(f1_seen, f1_unseen)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-class counts for every seen and unseen class, plus the unknown bin.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionLedger {
    pub classes: BTreeMap<String, Counts>,
    pub unknown: Counts,
}

impl ConfusionLedger {
    pub fn with_classes<'a>(names: impl IntoIterator<Item = &'a String>) -> Self {
        ConfusionLedger {
            classes: names.into_iter().map(|n| (n.clone(), Counts::default())).collect(),
            unknown: Counts::default(),
        }
    }

    /// Cell-wise sum. Classes missing on one side count as zero.
    pub fn merge(mut self, other: &ConfusionLedger) -> Self {
        for (name, counts) in &other.classes {
            self.classes.entry(name.clone()).or_default().add(counts);
        }
        self.unknown.add(&other.unknown);
        self
    }

    /// Number of ground-truth instances recorded, `Σ_c (TP_c + FN_c) + TP_Ω + FN_Ω`.
    pub fn ground_truth_total(&self) -> u64 {
        self.classes.values().map(|c| c.tp + c.fn_).sum::<u64>() + self.unknown.tp + self.unknown.fn_
    }

    fn counts_mut(&mut self, name: &str) -> Result<&mut Counts> {
        self.classes.get_mut(name).ok_or_else(|| Error::UnknownClass(name.to_string()))
    }
}

/// Accumulates predictions against ground truth.
///
/// | prediction | truth     | cells             |
/// |------------|-----------|-------------------|
/// | `c`        | `c`       | TP_c              |
/// | `c`        | `c' ≠ c`  | FP_c, FN_c'       |
/// | `c`        | unknown   | FP_c, FN_Ω        |
/// | reject     | unknown   | TP_Ω              |
/// | reject     | `c`       | FP_Ω, FN_c        |
pub fn tally(predictions: &[Prediction], truth: &[Truth], manifest: &SplitManifest) -> Result<ConfusionLedger> {
    if predictions.len() != truth.len() {
        return Err(Error::dim("tally", format!("{} predictions for {} truths", predictions.len(), truth.len())));
    }
    let mut ledger = ConfusionLedger::with_classes(manifest.seen.iter().chain(&manifest.unseen));
    for (p, t) in predictions.iter().zip(truth) {
        match (p, t) {
            (Prediction::Class(c), Truth::Class(d)) if c == d => ledger.counts_mut(c)?.tp += 1,
            (Prediction::Class(c), Truth::Class(d)) => {
                ledger.counts_mut(c)?.fp += 1;
                ledger.counts_mut(d)?.fn_ += 1;
            }
            (Prediction::Class(c), Truth::Unknown) => {
                ledger.counts_mut(c)?.fp += 1;
                ledger.unknown.fn_ += 1;
            }
            (Prediction::Reject, Truth::Unknown) => ledger.unknown.tp += 1,
            (Prediction::Reject, Truth::Class(d)) => {
                ledger.counts_mut(d)?.fn_ += 1;
                ledger.unknown.fp += 1;
            }
        }
    }
    Ok(ledger)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: String,
    pub role: String,
    #[serde(flatten)]
    pub counts: Counts,
    #[serde(flatten)]
    pub scores: Scores,
}

pub fn per_class_scores(ledger: &ConfusionLedger) -> BTreeMap<String, Scores> {
    ledger.classes.iter().map(|(n, c)| (n.clone(), c.scores())).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub r_seen: f64,
    pub r_unseen: f64,
    pub f1_seen: f64,
    pub f1_unseen: f64,
}

fn mean_over(
    scores: &BTreeMap<String, Scores>,
    names: &[String],
    pick: impl Fn(&Scores) -> f64,
    what: &str,
) -> Result<f64> {
    if names.is_empty() {
        return Err(Error::Invalid(format!("cannot average over an empty {what} class set")));
    }
    let mut total = 0.0;
    for n in names {
        total += pick(scores.get(n).ok_or_else(|| Error::UnknownClass(n.clone()))?);
    }
    Ok(total / names.len() as f64)
}

/// Unweighted per-class means over the seen and the unseen classes.
pub fn aggregate(scores: &BTreeMap<String, Scores>, manifest: &SplitManifest) -> Result<Aggregates> {
    Ok(Aggregates {
        r_seen: mean_over(scores, &manifest.seen, |s| s.recall, "seen")?,
        r_unseen: mean_over(scores, &manifest.unseen, |s| s.recall, "unseen")?,
        f1_seen: mean_over(scores, &manifest.seen, |s| s.f1, "seen")?,
        f1_unseen: mean_over(scores, &manifest.unseen, |s| s.f1, "unseen")?,
    })
}

/// Every score of one evaluation run. Values are fractions in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub instances: u64,
    pub per_class: Vec<ClassScore>,
    pub r_seen: f64,
    pub r_unseen: f64,
    pub f1_seen: f64,
    pub f1_unseen: f64,
    pub h_gzsl: f64,
    pub h_ozsl: f64,
    pub unknown: Counts,
    pub p_omega: f64,
    pub r_omega: f64,
    pub f1_omega: f64,
}

impl EvalReport {
    pub fn from_ledger(label: impl Into<String>, ledger: &ConfusionLedger, manifest: &SplitManifest) -> Result<Self> {
        let scores = per_class_scores(ledger);
        let agg = aggregate(&scores, manifest)?;
        let per_class = manifest
            .seen
            .iter()
            .chain(&manifest.unseen)
            .map(|n| {
                let role = manifest.role(n).unwrap_or(ClassRole::Seen);
                ClassScore {
                    class: n.clone(),
                    role: role.as_str().to_string(),
                    counts: ledger.classes[n],
                    scores: scores[n],
                }
            })
            .collect();
        let omega = ledger.unknown.scores();
        Ok(EvalReport {
            label: label.into(),
            instances: ledger.ground_truth_total(),
            per_class,
            r_seen: agg.r_seen,
            r_unseen: agg.r_unseen,
            f1_seen: agg.f1_seen,
            f1_unseen: agg.f1_unseen,
            h_gzsl: h_gzsl(agg.r_seen, agg.r_unseen),
            h_ozsl: h_ozsl(agg.f1_seen, agg.f1_unseen),
            unknown: ledger.unknown,
            p_omega: omega.precision,
            r_omega: omega.recall,
            f1_omega: omega.f1,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Runs [`tally`] and scores the result.
pub fn evaluate(
    label: &str,
    predictions: &[Prediction],
    truth: &[Truth],
    manifest: &SplitManifest,
) -> Result<EvalReport> {
    let ledger = tally(predictions, truth, manifest)?;
    EvalReport::from_ledger(label, &ledger, manifest)
}

/// Formats a fraction as a percentage with two decimals, rounding exact
/// ties in the hundredths to even. Ties are detected with a small
/// tolerance so that binary noise from the `×100` does not decide them.
pub fn format_percent(fraction: f64) -> String {
    let hundredths = fraction * 10_000.0;
    let floor = hundredths.floor();
    let rest = hundredths - floor;
    let rounded = if (rest - 0.5).abs() < 1e-6 {
        if floor % 2.0 == 0.0 {
            floor
        } else {
            floor + 1.0
        }
    } else {
        hundredths.round()
    };
    format!("{:.2}", rounded / 100.0)
}

/// Class names that appear in `truth` but not in the manifest's known sets.
pub fn foreign_labels(truth: &[Truth], manifest: &SplitManifest) -> BTreeSet<String> {
    truth
        .iter()
        .filter_map(|t| match t {
            Truth::Class(c) if manifest.role(c).is_none_or(|r| r == ClassRole::Unknown) => Some(c.clone()),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{Provenance, Regime};
    use proptest::prelude::*;

    fn manifest() -> SplitManifest {
        SplitManifest {
            regime: Regime::FiftyFifty,
            seen: vec!["a".into(), "b".into()],
            unseen: vec!["u".into()],
            unknown: vec!["x".into()],
            provenance: Provenance::Canonical,
        }
    }

    fn c(n: &str) -> Prediction {
        Prediction::Class(n.into())
    }

    fn t(n: &str) -> Truth {
        Truth::Class(n.into())
    }

    #[test]
    fn perfect_predictions_score_one() {
        let m = manifest();
        let truth = [t("a"), t("b"), t("u"), Truth::Unknown];
        let preds = [c("a"), c("b"), c("u"), Prediction::Reject];
        let r = evaluate("perfect", &preds, &truth, &m).unwrap();
        assert!(r.per_class.iter().all(|s| s.counts.fp == 0 && s.counts.fn_ == 0 && s.scores.f1 == 1.0));
        assert_eq!((r.f1_seen, r.f1_unseen, r.h_ozsl, r.f1_omega), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn unknown_taken_for_a_seen_class() {
        let l = tally(&[c("a")], &[Truth::Unknown], &manifest()).unwrap();
        assert_eq!(l.classes["a"].fp, 1);
        assert_eq!(l.unknown.fn_, 1);
        assert_eq!(l.ground_truth_total(), 1);
    }

    #[test]
    fn labels_outside_the_manifest_are_errors() {
        let m = manifest();
        assert!(matches!(tally(&[c("x")], &[Truth::Unknown], &m), Err(Error::UnknownClass(_))));
        assert!(matches!(tally(&[Prediction::Reject], &[t("zzz")], &m), Err(Error::UnknownClass(_))));
        assert!(tally(&[Prediction::Reject], &[], &m).is_err());
        assert_eq!(foreign_labels(&[t("x"), t("a"), t("q")], &m).into_iter().collect::<Vec<_>>(), ["q", "x"]);
    }

    #[test]
    fn score_conventions() {
        let s = Counts { tp: 5, fp: 0, fn_: 0 }.scores();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        let s = Counts { tp: 0, fp: 0, fn_: 3 }.scores();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn published_harmonic_means() {
        // F1 of the unknown bin from its published precision and recall.
        assert!((harmonic(0.1881, 0.5824) * 100.0 - 28.43).abs() <= 0.02);
        assert!((h_ozsl(0.6148, 0.3929) * 100.0 - 47.94).abs() <= 0.02);
        assert!((h_ozsl(0.7332, 0.4577) * 100.0 - 56.36).abs() <= 0.02);
    }

    #[test]
    fn aggregate_means() {
        let mut m = manifest();
        m.seen = vec!["a".into()];
        let mut scores = BTreeMap::new();
        scores.insert("a".to_string(), Scores { precision: 1.0, recall: 1.0, f1: 1.0 });
        scores.insert("u".to_string(), Scores::default());
        let agg = aggregate(&scores, &m).unwrap();
        assert_eq!((agg.f1_seen, agg.f1_unseen), (1.0, 0.0));
        m.seen = vec!["a".into(), "u2".into()];
        m.unseen = vec![];
        assert!(aggregate(&scores, &m).is_err());
        m.unseen = vec!["u".into()];
        m.seen = vec!["a".into(), "u".into()];
        assert_eq!(aggregate(&scores, &m).unwrap().f1_seen, 0.5);
    }

    #[test]
    fn never_rejecting_zeroes_the_unknown_bin() {
        let m = manifest();
        let r = evaluate("softmax", &[c("a"), c("b"), c("u")], &[t("a"), Truth::Unknown, t("u")], &m).unwrap();
        assert_eq!((r.p_omega, r.r_omega, r.f1_omega), (0.0, 0.0, 0.0));
        assert!(r.f1_seen > 0.0 && r.f1_unseen > 0.0);
    }

    #[test]
    fn percent_rounding_is_half_even() {
        assert_eq!(format_percent(0.12125), "12.12");
        assert_eq!(format_percent(0.12135), "12.14");
        assert_eq!(format_percent(0.28436), "28.44");
        assert_eq!(format_percent(0.0), "0.00");
        assert_eq!(format_percent(1.0), "100.00");
    }

    fn ledger_strategy() -> impl Strategy<Value = ConfusionLedger> {
        (prop::collection::vec((0u64..50, 0u64..50, 0u64..50), 3), (0u64..50, 0u64..50, 0u64..50)).prop_map(
            |(cls, u)| {
                let mut l = ConfusionLedger::default();
                for (i, (tp, fp, fn_)) in cls.into_iter().enumerate() {
                    l.classes.insert(format!("c{i}"), Counts { tp, fp, fn_ });
                }
                l.unknown = Counts { tp: u.0, fp: u.1, fn_: u.2 };
                l
            },
        )
    }

    proptest! {
        #[test]
        fn harmonic_mean_properties(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let h = harmonic(a, b);
            prop_assert_eq!(h, harmonic(b, a));
            prop_assert!(h >= a.min(b) - 1e-15 && h <= a.max(b) + 1e-15);
            prop_assert!((harmonic(a, a) - a).abs() < 1e-15);
            prop_assert_eq!(harmonic(a, 0.0), 0.0);
        }

        #[test]
        fn merge_is_associative_and_commutative(x in ledger_strategy(), y in ledger_strategy(), z in ledger_strategy()) {
            prop_assert_eq!(x.clone().merge(&y), y.clone().merge(&x));
            prop_assert_eq!(x.clone().merge(&y).merge(&z), x.clone().merge(&y.clone().merge(&z)));
        }

        #[test]
        fn correct_rejections_only_help(extra in 1usize..20) {
            let m = manifest();
            let preds = vec![c("a"), Prediction::Reject, c("b"), c("u")];
            let truth = vec![t("a"), Truth::Unknown, Truth::Unknown, t("a")];
            let before = evaluate("", &preds, &truth, &m).unwrap();
            let mut preds2 = preds.clone();
            let mut truth2 = truth.clone();
            preds2.extend(std::iter::repeat_n(Prediction::Reject, extra));
            truth2.extend(std::iter::repeat_n(Truth::Unknown, extra));
            let after = evaluate("", &preds2, &truth2, &m).unwrap();
            prop_assert!(after.f1_omega >= before.f1_omega);
            prop_assert_eq!(after.per_class, before.per_class);
        }
    }
}
