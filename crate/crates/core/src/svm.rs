//! Soft-margin RBF support vector machine trained by sequential minimal
//! optimization, and the Label Powerset multi-label wrapper.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::model::Region;

#[derive(Debug, Error, PartialEq)]
pub enum SvmError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("no training rows")]
    EmptyInput,
    #[error("expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("SMO stopped after {iterations} iterations with KKT violation {violation:.3e}")]
    NoConvergence { iterations: usize, violation: f64, model: Box<SvmModel> },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// RBF width: either fixed or the `1 / (d · Var(X))` heuristic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GammaRepr", into = "GammaRepr")]
pub enum Gamma {
    Scale,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GammaRepr {
    Number(f64),
    Name(String),
}

impl TryFrom<GammaRepr> for Gamma {
    type Error = String;
    fn try_from(r: GammaRepr) -> Result<Self, String> {
        match r {
            GammaRepr::Number(v) if v > 0.0 && v.is_finite() => Ok(Gamma::Fixed(v)),
            GammaRepr::Number(v) => Err(format!("gamma must be positive, got {v}")),
            GammaRepr::Name(s) if s == "scale" => Ok(Gamma::Scale),
            GammaRepr::Name(s) => Err(format!("unknown gamma {s:?}")),
        }
    }
}

impl From<Gamma> for GammaRepr {
    fn from(g: Gamma) -> Self {
        match g {
            Gamma::Scale => GammaRepr::Name("scale".into()),
            Gamma::Fixed(v) => GammaRepr::Number(v),
        }
    }
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gamma::Scale => f.write_str("scale"),
            Gamma::Fixed(v) => write!(f, "{v}"),
        }
    }
}

/// `1 / (d · Var(X))` over all entries, population variance.
pub fn scale_gamma(x: &[Vec<f64>]) -> f64 {
    let d = x.first().map_or(0, Vec::len);
    let n = (x.len() * d) as f64;
    if n == 0.0 {
        return 1.0;
    }
    let mean = x.iter().flatten().sum::<f64>() / n;
    let var = x.iter().flatten().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (d as f64 * var)
    } else {
        1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: Gamma,
    /// Scale each class's box constraint by `n / (2 · n_class)`.
    pub class_weighting: bool,
    pub tol: f64,
    pub cache_rows: usize,
    /// Iteration cap; `None` means `min(10 · n², 10⁷)` (at least 10⁴).
    pub max_iterations: Option<usize>,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { c: 1.0, gamma: Gamma::Scale, class_weighting: true, tol: 1e-3, cache_rows: 256, max_iterations: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// Training row of each support vector.
    pub support_indices: Vec<usize>,
    /// αᵢ·yᵢ per support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    /// Box multipliers for the negative and positive class.
    pub class_weights: [f64; 2],
    pub iterations: usize,
    /// Final maximal KKT violation (`Gmax − Gmin`).
    pub max_violation: f64,
}

struct KernelCache<'a> {
    x: &'a [f64],
    d: usize,
    norms: Vec<f64>,
    gamma: f64,
    rows: Vec<Option<(Vec<f64>, u64)>>,
    cached: Vec<usize>,
    capacity: usize,
    clock: u64,
}

impl<'a> KernelCache<'a> {
    fn new(x: &'a [f64], d: usize, gamma: f64, capacity: usize) -> Self {
        let n = if d == 0 { 0 } else { x.len() / d };
        let norms = (0..n).map(|i| x[i * d..(i + 1) * d].iter().map(|v| v * v).sum()).collect();
        Self { x, d, norms, gamma, rows: vec![None; n], cached: Vec::new(), capacity: capacity.max(2), clock: 0 }
    }

    fn n(&self) -> usize {
        self.norms.len()
    }

    fn eval(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.x[i * self.d..(i + 1) * self.d], &self.x[j * self.d..(j + 1) * self.d]);
        let dist: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
        (-self.gamma * dist).exp()
    }

    fn row(&mut self, i: usize) -> &[f64] {
        self.clock += 1;
        if self.rows[i].is_none() {
            if self.cached.len() >= self.capacity {
                let (pos, _) = self
                    .cached
                    .iter()
                    .enumerate()
                    .min_by_key(|(_, &r)| self.rows[r].as_ref().map_or(0, |e| e.1))
                    .expect("cache non-empty");
                let evicted = self.cached.swap_remove(pos);
                self.rows[evicted] = None;
            }
            let row = (0..self.n()).map(|j| self.eval(i, j)).collect();
            self.rows[i] = Some((row, 0));
            self.cached.push(i);
        }
        let entry = self.rows[i].as_mut().expect("row cached");
        entry.1 = self.clock;
        &entry.0
    }
}

fn check_rows(x: &[Vec<f64>]) -> Result<usize, SvmError> {
    let d = x.first().ok_or(SvmError::EmptyInput)?.len();
    if let Some(bad) = x.iter().find(|r| r.len() != d) {
        return Err(SvmError::DimensionMismatch { expected: d, found: bad.len() });
    }
    Ok(d)
}

/// Trains a binary SVM on labels `y ∈ {−1, +1}`.
///
/// The dual is solved by SMO with maximal-violating-pair working sets and
/// stops once `Gmax − Gmin < tol`. Hitting the iteration cap returns
/// [`SvmError::NoConvergence`] carrying the best model found.
pub fn train_svm(x: &[Vec<f64>], y: &[i8], params: &SvmParams) -> Result<SvmModel, SvmError> {
    let d = check_rows(x)?;
    let n = x.len();
    if y.len() != n {
        return Err(SvmError::InvalidParams(format!("{n} rows but {} labels", y.len())));
    }
    if y.iter().any(|&v| v != 1 && v != -1) {
        return Err(SvmError::InvalidParams("labels must be -1 or +1".into()));
    }
    if !(params.c > 0.0 && params.tol > 0.0) {
        return Err(SvmError::InvalidParams(format!("C={} and tol={} must be positive", params.c, params.tol)));
    }
    let n_pos = y.iter().filter(|&&v| v == 1).count();
    if n_pos == 0 || n_pos == n {
        return Err(SvmError::SingleClass);
    }
    let class_weights = if params.class_weighting {
        [n as f64 / (2.0 * (n - n_pos) as f64), n as f64 / (2.0 * n_pos as f64)]
    } else {
        [1.0, 1.0]
    };
    let gamma = match params.gamma {
        Gamma::Scale => scale_gamma(x),
        Gamma::Fixed(g) => g,
    };
    let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let cap: Vec<f64> = y.iter().map(|&v| params.c * class_weights[(v == 1) as usize]).collect();
    let flat: Vec<f64> = x.iter().flatten().copied().collect();
    let mut cache = KernelCache::new(&flat, d, gamma, params.cache_rows);
    let max_iter = params.max_iterations.unwrap_or_else(|| n.saturating_mul(n).saturating_mul(10).clamp(10_000, 10_000_000));

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut violation;
    let up = |a: f64, yi: f64, c: f64| if yi > 0.0 { a < c } else { a > 0.0 };
    let low = |a: f64, yi: f64, c: f64| if yi > 0.0 { a > 0.0 } else { a < c };
    loop {
        let (mut i, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut gmin) = (usize::MAX, f64::INFINITY);
        for t in 0..n {
            let v = -yf[t] * grad[t];
            if up(alpha[t], yf[t], cap[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if low(alpha[t], yf[t], cap[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        violation = gmax - gmin;
        if i == usize::MAX || j == usize::MAX || violation < params.tol {
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let ki = cache.row(i).to_vec();
        let kj = cache.row(j);
        let (yi, yj) = (yf[i], yf[j]);
        let (ci, cj) = (cap[i], cap[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let kij = ki[j];
        // Q_ii = Q_jj = 1 for the RBF kernel.
        if yi != yj {
            let quad = (2.0 + 2.0 * kij).max(1e-12);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let quad = (2.0 - 2.0 * kij).max(1e-12);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += yf[t] * (yi * ki[t] * di + yj * kj[t] * dj);
        }
    }

    // b = −ρ, with ρ averaged over free support vectors.
    let (mut sum, mut n_free) = (0.0, 0usize);
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let yg = yf[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < cap[t] {
            sum += yg;
            n_free += 1;
        } else if (alpha[t] >= cap[t]) == (yf[t] > 0.0) {
            lb = lb.max(yg);
        } else {
            ub = ub.min(yg);
        }
    }
    let rho = if n_free > 0 { sum / n_free as f64 } else { (ub + lb) / 2.0 };

    let support_indices: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    let model = SvmModel {
        support_vectors: support_indices.iter().map(|&t| x[t].clone()).collect(),
        dual_coef: support_indices.iter().map(|&t| alpha[t] * yf[t]).collect(),
        support_indices,
        bias: -rho,
        gamma,
        c: params.c,
        class_weights,
        iterations,
        max_violation: violation,
    };
    if violation >= params.tol && iterations >= max_iter {
        return Err(SvmError::NoConvergence { iterations, violation, model: Box::new(model) });
    }
    Ok(model)
}

/// Like [`train_svm`] but keeps the capped model on non-convergence.
pub fn train_svm_lenient(x: &[Vec<f64>], y: &[i8], params: &SvmParams) -> Result<SvmModel, SvmError> {
    match train_svm(x, y, params) {
        Err(SvmError::NoConvergence { iterations, violation, model }) => {
            log::warn!("SMO hit {iterations} iterations, KKT violation {violation:.3e}; keeping last iterate");
            Ok(*model)
        }
        other => other,
    }
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    pub fn decision_row(&self, row: &[f64]) -> f64 {
        let mut f = self.bias;
        for (sv, coef) in self.support_vectors.iter().zip(&self.dual_coef) {
            let dist: f64 = sv.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum();
            f += coef * (-self.gamma * dist).exp();
        }
        f
    }

    /// Decision values `f(x) = Σ αᵢyᵢK(xᵢ, x) + b`.
    pub fn decision(&self, x: &[Vec<f64>]) -> Result<Vec<f64>, SvmError> {
        if let Some(bad) = x.iter().find(|r| r.len() != self.dim()) {
            return Err(SvmError::DimensionMismatch { expected: self.dim(), found: bad.len() });
        }
        Ok(x.iter().map(|r| self.decision_row(r)).collect())
    }

    /// Labels (`f ≥ 0` is positive) and decision values.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<(Vec<bool>, Vec<f64>), SvmError> {
        let f = self.decision(x)?;
        Ok((f.iter().map(|&v| v >= 0.0).collect(), f))
    }
}

pub fn predict_svm(model: &SvmModel, x: &[Vec<f64>]) -> Result<(Vec<bool>, Vec<f64>), SvmError> {
    model.predict(x)
}

// ---------------------------------------------------------------------------
// Label Powerset

pub type RegionFlags = [bool; Region::ALL.len()];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowersetModel {
    /// Class id → observed combination, ascending by bit code.
    pub combos: Vec<RegionFlags>,
    /// One-vs-rest member per class; empty when a single combination was seen.
    pub members: Vec<SvmModel>,
}

fn combo_code(c: &RegionFlags) -> u8 {
    c.iter().enumerate().fold(0, |acc, (i, &b)| acc | ((b as u8) << i))
}

impl PowersetModel {
    pub fn class_of(&self, combo: &RegionFlags) -> Option<usize> {
        self.combos.iter().position(|c| c == combo)
    }

    pub fn combo_of(&self, class: usize) -> RegionFlags {
        self.combos[class]
    }

    pub fn predict_classes(&self, x: &[Vec<f64>]) -> Result<Vec<usize>, SvmError> {
        if self.members.is_empty() {
            return Ok(vec![0; x.len()]);
        }
        let decisions: Vec<Vec<f64>> = self.members.iter().map(|m| m.decision(x)).collect::<Result<_, _>>()?;
        Ok((0..x.len())
            .map(|r| {
                let mut best = 0;
                for k in 1..decisions.len() {
                    if decisions[k][r] > decisions[best][r] {
                        best = k;
                    }
                }
                best
            })
            .collect())
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<RegionFlags>, SvmError> {
        Ok(self.predict_classes(x)?.into_iter().map(|c| self.combos[c]).collect())
    }
}

/// Class ids of `labels` under the combinations observed in them.
pub fn powerset_classes(labels: &[RegionFlags]) -> (Vec<RegionFlags>, Vec<usize>) {
    let mut combos: Vec<RegionFlags> = labels.to_vec();
    combos.sort_by_key(combo_code);
    combos.dedup();
    let ids = labels.iter().map(|l| combos.iter().position(|c| c == l).expect("observed")).collect();
    (combos, ids)
}

/// One-vs-rest SVMs over the observed label combinations.
pub fn train_powerset(
    x: &[Vec<f64>],
    labels: &[RegionFlags],
    params: &SvmParams,
    exec: Execution,
) -> Result<PowersetModel, SvmError> {
    check_rows(x)?;
    if labels.len() != x.len() {
        return Err(SvmError::InvalidParams(format!("{} rows but {} label rows", x.len(), labels.len())));
    }
    let (combos, ids) = powerset_classes(labels);
    if combos.len() == 1 {
        log::warn!("all training rows share one region combination; predicting it constantly");
        return Ok(PowersetModel { combos, members: Vec::new() });
    }
    let classes: Vec<usize> = (0..combos.len()).collect();
    let members = exec.try_map(&classes, |&k| {
        let y: Vec<i8> = ids.iter().map(|&c| if c == k { 1 } else { -1 }).collect();
        train_svm_lenient(x, &y, params)
    })?;
    Ok(PowersetModel { combos, members })
}

pub fn predict_powerset(model: &PowersetModel, x: &[Vec<f64>]) -> Result<Vec<RegionFlags>, SvmError> {
    model.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_parses_from_name_or_number() {
        let g: Vec<Gamma> = serde_json::from_str(r#"["scale", 0.1]"#).unwrap();
        assert_eq!(g, vec![Gamma::Scale, Gamma::Fixed(0.1)]);
        assert!(serde_json::from_str::<Gamma>(r#""auto""#).is_err());
        assert_eq!(serde_json::to_string(&g).unwrap(), r#"["scale",0.1]"#);
    }

    #[test]
    fn scale_gamma_formula() {
        let x = vec![vec![0.0, 2.0], vec![4.0, 6.0]];
        // mean 3, var (9+1+1+9)/4 = 5
        assert!((scale_gamma(&x) - 1.0 / 10.0).abs() < 1e-15);
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        assert_eq!(train_svm(&x, &[1, 1], &SvmParams::default()).unwrap_err(), SvmError::SingleClass);
    }

    #[test]
    fn wrong_dimension_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        let m = train_svm(&x, &[1, -1], &SvmParams::default()).unwrap();
        assert!(matches!(m.predict(&[vec![0.0, 1.0]]), Err(SvmError::DimensionMismatch { expected: 1, found: 2 })));
    }

    #[test]
    fn powerset_enumerates_observed_combos() {
        let nose = [false, false, true, false, false];
        let mouth = [false, false, false, true, false];
        let nose_cheeks = [false, false, true, false, true];
        let (combos, ids) = powerset_classes(&[nose, mouth, nose_cheeks, nose]);
        assert_eq!(combos.len(), 3);
        assert_eq!(ids[0], ids[3]);
        for (k, c) in combos.iter().enumerate() {
            assert_eq!(combos.iter().position(|x| x == c), Some(k));
        }
    }

    #[test]
    fn single_combination_is_constant() {
        let x = vec![vec![0.0], vec![1.0]];
        let nose = [false, false, true, false, false];
        let m = train_powerset(&x, &[nose, nose], &SvmParams::default(), Execution::Sequential).unwrap();
        assert_eq!(m.predict(&[vec![5.0]]).unwrap(), vec![nose]);
    }
}
