//! Metrics, baselines, significance tests and the touch-frequency versus
//! Mullen development analysis.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{MullenRecord, PredictionRecord};
use crate::model::Region;
use crate::svm::RegionFlags;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("infant {infant_id} has {found} visits within {cutoff} months, need 2")]
    InsufficientVisits { infant_id: String, found: usize, cutoff: f64 },
}

// ---------------------------------------------------------------------------
// Special functions

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

const CF_EPS: f64 = 1e-15;
const CF_TINY: f64 = 1e-300;
const CF_MAX: usize = 1000;

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        d = if d.abs() < CF_TINY { CF_TINY } else { d };
        c = 1.0 + aa / c;
        c = if c.abs() < CF_TINY { CF_TINY } else { c };
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        d = if d.abs() < CF_TINY { CF_TINY } else { d };
        c = 1.0 + aa / c;
        c = if c.abs() < CF_TINY { CF_TINY } else { c };
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn upper_incomplete_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let (mut ap, mut sum) = (a, 1.0 / a);
        let mut del = sum;
        for _ in 0..CF_MAX {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * CF_EPS {
                break;
            }
        }
        1.0 - sum * ln_front.exp()
    } else {
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / CF_TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=CF_MAX {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            d = if d.abs() < CF_TINY { CF_TINY } else { d };
            c = b + an / c;
            c = if c.abs() < CF_TINY { CF_TINY } else { c };
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < CF_EPS {
                break;
            }
        }
        ln_front.exp() * h
    }
}

/// Upper tail `P(X ≥ x)` of a chi-square distribution.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    upper_incomplete_gamma(df / 2.0, x / 2.0)
}

/// Two-sided tail `P(|T| ≥ |t|)` of Student's t.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// Metrics

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub counts: ConfusionCounts,
    /// No positive predictions, so precision is 0 by convention.
    pub precision_undefined: bool,
}

pub fn binary_metrics(predictions: &[bool], labels: &[bool]) -> Result<BinaryMetrics, StatsError> {
    if predictions.len() != labels.len() {
        return Err(StatsError::LengthMismatch(predictions.len(), labels.len()));
    }
    if labels.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut k = ConfusionCounts::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => k.tp += 1,
            (true, false) => k.fp += 1,
            (false, false) => k.tn += 1,
            (false, true) => k.fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(BinaryMetrics {
        accuracy: ratio(k.tp + k.tn, k.total()),
        precision: ratio(k.tp, k.tp + k.fp),
        recall: ratio(k.tp, k.tp + k.fn_),
        counts: k,
        precision_undefined: k.tp + k.fp == 0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultilabelMetrics {
    pub macro_accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub per_label: Vec<BinaryMetrics>,
}

pub fn multilabel_macro_metrics(pred: &[RegionFlags], labels: &[RegionFlags]) -> Result<MultilabelMetrics, StatsError> {
    if pred.len() != labels.len() {
        return Err(StatsError::LengthMismatch(pred.len(), labels.len()));
    }
    let per_label = (0..Region::ALL.len())
        .map(|k| {
            let p: Vec<bool> = pred.iter().map(|r| r[k]).collect();
            let l: Vec<bool> = labels.iter().map(|r| r[k]).collect();
            binary_metrics(&p, &l)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mean = |f: fn(&BinaryMetrics) -> f64| per_label.iter().map(f).sum::<f64>() / per_label.len() as f64;
    Ok(MultilabelMetrics {
        macro_accuracy: mean(|m| m.accuracy),
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        per_label,
    })
}

// ---------------------------------------------------------------------------
// Baselines

/// Majority class of the training labels; a tie predicts negative.
pub fn zeror_fit(train: &[bool]) -> bool {
    let pos = train.iter().filter(|&&v| v).count();
    2 * pos > train.len()
}

/// Per-label majority for region labels.
pub fn zeror_fit_multilabel(train: &[RegionFlags]) -> RegionFlags {
    std::array::from_fn(|k| zeror_fit(&train.iter().map(|r| r[k]).collect::<Vec<_>>()))
}

/// Analytic metrics of a fair-coin predictor: accuracy 0.5, precision equal
/// to the prevalence, recall 0.5.
pub fn random_chance_expectation(prevalence: f64) -> (f64, f64, f64) {
    (0.5, prevalence, 0.5)
}

/// Seeded Bernoulli(0.5) predictions, used to pair the random baseline in
/// McNemar tests.
pub fn random_predictions(n: usize, rng: &mut impl Rng) -> Vec<bool> {
    (0..n).map(|_| rng.random_bool(0.5)).collect()
}

// ---------------------------------------------------------------------------
// McNemar

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum McNemarMethod {
    ExactBinomial,
    ChiSquareCC,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    /// Model wrong, reference right.
    pub b: usize,
    /// Model right, reference wrong.
    pub c: usize,
    /// `min(b, c)` for the exact test, the corrected chi-square otherwise.
    pub statistic: f64,
    pub p_value: f64,
    pub method: McNemarMethod,
}

/// `2 · P(X ≤ k)` for `X ~ Binomial(n, 1/2)`, capped at 1.
pub fn exact_binomial_two_sided(k: usize, n: usize) -> f64 {
    let mut term = 0.5f64.powi(n as i32);
    let mut cdf = 0.0;
    for i in 0..=k {
        cdf += term;
        term *= (n - i) as f64 / (i + 1) as f64;
    }
    (2.0 * cdf).min(1.0)
}

pub fn mcnemar_counts(b: usize, c: usize) -> McNemarResult {
    let n = b + c;
    if n < 25 {
        let k = b.min(c);
        let p_value = if n == 0 { 1.0 } else { exact_binomial_two_sided(k, n) };
        McNemarResult { b, c, statistic: k as f64, p_value, method: McNemarMethod::ExactBinomial }
    } else {
        let diff = (b as f64 - c as f64).abs() - 1.0;
        let statistic = diff.max(0.0).powi(2) / n as f64;
        McNemarResult { b, c, statistic, p_value: chi_square_sf(statistic, 1.0), method: McNemarMethod::ChiSquareCC }
    }
}

pub fn mcnemar(model_correct: &[bool], reference_correct: &[bool]) -> Result<McNemarResult, StatsError> {
    if model_correct.len() != reference_correct.len() {
        return Err(StatsError::LengthMismatch(model_correct.len(), reference_correct.len()));
    }
    let b = model_correct.iter().zip(reference_correct).filter(|(&m, &r)| !m && r).count();
    let c = model_correct.iter().zip(reference_correct).filter(|(&m, &r)| m && !r).count();
    Ok(mcnemar_counts(b, c))
}

// ---------------------------------------------------------------------------
// Correlation and development rates

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub n: usize,
    pub t_statistic: f64,
    pub p_value: f64,
}

/// p-value of a sample correlation `r` over `n` points.
pub fn correlation_from_r(r: f64, n: usize) -> CorrelationResult {
    let df = (n - 2) as f64;
    let t_statistic = if r.abs() >= 1.0 { r.signum() * f64::INFINITY } else { r * (df / (1.0 - r * r)).sqrt() };
    CorrelationResult { r, n, t_statistic, p_value: student_t_two_sided(t_statistic, df) }
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewPoints(n));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 {
        return Err(StatsError::ZeroVariance("x"));
    }
    if syy <= 0.0 {
        return Err(StatsError::ZeroVariance("y"));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    Ok(correlation_from_r(r, n))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MullenCategory {
    GrossMotor,
    FineMotor,
}

impl MullenCategory {
    pub fn code(self) -> &'static str {
        match self {
            MullenCategory::GrossMotor => "GM",
            MullenCategory::FineMotor => "FM",
        }
    }

    fn score(self, r: &MullenRecord) -> f64 {
        match self {
            MullenCategory::GrossMotor => r.gm_raw,
            MullenCategory::FineMotor => r.fm_raw,
        }
    }
}

/// Least-squares slope of raw score against age (points per month) over the
/// visits of one infant at or before `cutoff_months`.
pub fn mullen_rate(records: &[MullenRecord], category: MullenCategory, cutoff_months: f64) -> Result<f64, StatsError> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.visit_age_months <= cutoff_months)
        .map(|r| (r.visit_age_months, category.score(r)))
        .collect();
    let distinct_ages = {
        let mut a: Vec<f64> = pts.iter().map(|p| p.0).collect();
        a.sort_by(f64::total_cmp);
        a.dedup();
        a.len()
    };
    if distinct_ages < 2 {
        return Err(StatsError::InsufficientVisits {
            infant_id: records.first().map(|r| r.infant_id.clone()).unwrap_or_default(),
            found: pts.len(),
            cutoff: cutoff_months,
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

pub fn touch_frequency(on_head: &[bool]) -> Result<f64, StatsError> {
    if on_head.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    Ok(on_head.iter().filter(|&&v| v).count() as f64 / on_head.len() as f64)
}

/// Touch ratio per infant over all of its predicted frames.
pub fn touch_ratios_by_infant(preds: &[PredictionRecord]) -> BTreeMap<String, f64> {
    let mut by: BTreeMap<String, Vec<bool>> = BTreeMap::new();
    for p in preds {
        by.entry(p.infant_id.clone()).or_default().push(p.on_head);
    }
    by.into_iter().map(|(k, v)| (k, touch_frequency(&v).expect("non-empty group"))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfantRow {
    pub infant_id: String,
    pub touch_ratio: f64,
    pub gm_rate: Option<f64>,
    pub fm_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub cutoff_months: f64,
    pub infants: Vec<InfantRow>,
    pub fm: Option<CorrelationResult>,
    pub gm: Option<CorrelationResult>,
    pub notices: Vec<String>,
}

/// Correlates per-infant touch ratios with GM and FM development rates.
pub fn correlate_touch_development(
    preds: &[PredictionRecord],
    mullen: &[MullenRecord],
    cutoff_months: f64,
) -> CorrelationReport {
    let ratios = touch_ratios_by_infant(preds);
    let mut visits: BTreeMap<&str, Vec<MullenRecord>> = BTreeMap::new();
    for m in mullen {
        visits.entry(m.infant_id.as_str()).or_default().push(m.clone());
    }
    let mut notices = Vec::new();
    let mut infants = Vec::new();
    for (id, ratio) in &ratios {
        let Some(v) = visits.get(id.as_str()) else {
            notices.push(format!("infant {id} has predictions but no Mullen visits"));
            continue;
        };
        let mut rate = |cat| match mullen_rate(v, cat, cutoff_months) {
            Ok(s) => Some(s),
            Err(e) => {
                notices.push(format!("{}: {e}", MullenCategory::code(cat)));
                None
            }
        };
        let (gm_rate, fm_rate) = (rate(MullenCategory::GrossMotor), rate(MullenCategory::FineMotor));
        infants.push(InfantRow { infant_id: id.clone(), touch_ratio: *ratio, gm_rate, fm_rate });
    }
    let mut corr = |pick: fn(&InfantRow) -> Option<f64>, code: &str| {
        let (x, y): (Vec<f64>, Vec<f64>) = infants.iter().filter_map(|r| Some((r.touch_ratio, pick(r)?))).unzip();
        match pearson(&x, &y) {
            Ok(c) => Some(c),
            Err(e) => {
                notices.push(format!("{code} correlation unavailable: {e}"));
                None
            }
        }
    };
    let fm = corr(|r| r.fm_rate, "FM");
    let gm = corr(|r| r.gm_rate, "GM");
    CorrelationReport { cutoff_months, infants, fm, gm, notices }
}

impl CorrelationReport {
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Touch frequency vs Mullen rate of development (visits <= {} months)", self.cutoff_months);
        let _ = writeln!(s, "{:<10} {:>8} {:>4} {:>10} {:>10}", "Category", "r", "n", "t", "p");
        for (code, c) in [("FM", &self.fm), ("GM", &self.gm)] {
            match c {
                Some(c) => {
                    let _ = writeln!(s, "{code:<10} {:>8.3} {:>4} {:>10.3} {:>10.4}", c.r, c.n, c.t_statistic, c.p_value);
                }
                None => {
                    let _ = writeln!(s, "{code:<10} {:>8}", "n/a");
                }
            }
        }
        let _ = writeln!(s, "\n{:<16} {:>12} {:>10} {:>10}", "Infant", "Touch ratio", "GM rate", "FM rate");
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
        for r in &self.infants {
            let _ = writeln!(s, "{:<16} {:>12.4} {:>10} {:>10}", r.infant_id, r.touch_ratio, opt(r.gm_rate), opt(r.fm_rate));
        }
        for n in &self.notices {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Evaluation report

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub name: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub precision_undefined: bool,
}

impl MetricRow {
    pub fn from_binary(name: &str, m: &BinaryMetrics) -> Self {
        Self {
            name: name.into(),
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            precision_undefined: m.precision_undefined,
        }
    }

    pub fn from_multilabel(name: &str, m: &MultilabelMetrics) -> Self {
        Self {
            name: name.into(),
            accuracy: m.macro_accuracy,
            precision: m.macro_precision,
            recall: m.macro_recall,
            precision_undefined: m.per_label.iter().any(|l| l.precision_undefined),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub model: String,
    pub reference: String,
    pub result: McNemarResult,
    pub significant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigReport {
    pub name: String,
    pub multilabel: bool,
    pub n_test: usize,
    /// On-head prevalence, or mean region prevalence for the multi-label task.
    pub prevalence: f64,
    pub rows: Vec<MetricRow>,
    pub comparisons: Vec<Comparison>,
    pub notice: Option<String>,
}

pub const SIGNIFICANCE: f64 = 0.01;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub configs: Vec<ConfigReport>,
}

impl EvalReport {
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        for c in &self.configs {
            let _ = writeln!(s, "== {} ==", c.name);
            if let Some(n) = &c.notice {
                let _ = writeln!(s, "skipped: {n}\n");
                continue;
            }
            let what = if c.multilabel { "Key Area" } else { "On Head" };
            let _ = writeln!(s, "test frames: {}  prevalence: {:.1}%", c.n_test, 100.0 * c.prevalence);
            let (a, p, r) = ("Accuracy".to_string(), format!("Precision {what}"), format!("Recall {what}"));
            let _ = writeln!(s, "{:<20} {:>10} {:>20} {:>18}", "Model", a, p, r);
            for row in &c.rows {
                let flag = if row.precision_undefined { "*" } else { "" };
                let _ = writeln!(
                    s,
                    "{:<20} {:>9.1}% {:>19} {:>17.1}%",
                    row.name,
                    100.0 * row.accuracy,
                    format!("{:.1}%{flag}", 100.0 * row.precision),
                    100.0 * row.recall
                );
            }
            if c.rows.iter().any(|r| r.precision_undefined) {
                let _ = writeln!(s, "* no positive predictions; precision set to 0");
            }
            let _ = writeln!(s, "{:<20} {:<14} {:>6} {:>6} {:>10} {:>10}  sig", "McNemar", "vs", "b", "c", "stat", "p");
            for m in &c.comparisons {
                let _ = writeln!(
                    s,
                    "{:<20} {:<14} {:>6} {:>6} {:>10.3} {:>10.3e}  {}",
                    m.model,
                    m.reference,
                    m.result.b,
                    m.result.c,
                    m.result.statistic,
                    m.result.p_value,
                    if m.significant { "yes" } else { "no" }
                );
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_conventions() {
        let m = binary_metrics(&[false; 4], &[true, false, false, false]).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall), (0.75, 0.0, 0.0));
        assert!(m.precision_undefined);
        assert_eq!(binary_metrics(&[], &[]).unwrap_err(), StatsError::EmptyInput);
    }

    #[test]
    fn zeror_tie_is_negative() {
        assert!(!zeror_fit(&[true, false]));
        assert!(zeror_fit(&[true, true, false]));
    }

    #[test]
    fn mcnemar_branches() {
        assert_eq!(mcnemar_counts(7, 7).p_value, 1.0);
        assert_eq!(mcnemar_counts(0, 0).p_value, 1.0);
        let r = mcnemar_counts(40, 10);
        assert_eq!(r.method, McNemarMethod::ChiSquareCC);
        assert!((r.statistic - 16.82).abs() < 1e-12);
    }

    #[test]
    fn mullen_slopes() {
        let rec = |age, fm| MullenRecord { infant_id: "a".into(), visit_age_months: age, gm_raw: 0.0, fm_raw: fm };
        assert_eq!(mullen_rate(&[rec(1.0, 10.0), rec(5.0, 18.0)], MullenCategory::FineMotor, 5.0).unwrap(), 2.0);
        assert!((mullen_rate(&[rec(1.0, 10.0), rec(3.0, 14.0), rec(5.0, 18.0), rec(8.0, 0.0)], MullenCategory::FineMotor, 5.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(
            mullen_rate(&[rec(1.0, 10.0)], MullenCategory::FineMotor, 5.0),
            Err(StatsError::InsufficientVisits { .. })
        ));
    }

    #[test]
    fn touch_frequency_bounds() {
        assert_eq!(touch_frequency(&[true; 3]).unwrap(), 1.0);
        assert_eq!(touch_frequency(&[false; 3]).unwrap(), 0.0);
        assert_eq!(touch_frequency(&[]).unwrap_err(), StatsError::EmptyInput);
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
    }
}
