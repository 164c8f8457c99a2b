//! Dimensionality reduction: standardization, random-forest feature
//! selection, PCA and a dense autoencoder.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;

#[derive(Debug, Error, PartialEq)]
pub enum ReduceError {
    #[error("labels contain a single class")]
    DegenerateLabels,
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("autoencoder loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Seeded generator for an independent stream, e.g. one per tree.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// ---------------------------------------------------------------------------
// Standardizer

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, ReduceError> {
        let Some(first) = rows.first() else { return Err(ReduceError::TooFewRows(0)) };
        let n = rows.len() as f64;
        let d = first.len();
        let mut means = vec![0.0; d];
        for r in rows {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut stds = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in stds.iter_mut().zip(r).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut stds {
            *s = (*s / n).sqrt();
            if !(*s >= 1e-12) {
                *s = 1.0;
            }
        }
        Ok(Self { means, stds })
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.means).zip(&self.stds).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform_row(r)).collect()
    }
}

// ---------------------------------------------------------------------------
// Random forest

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 12, min_samples_leaf: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { counts: Vec<usize> },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_counts(&self, x: &[f64]) -> &[usize] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return counts,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub params: ForestParams,
    pub seed: u64,
    pub n_classes: usize,
    pub n_features: usize,
    pub importances: Vec<f64>,
    /// Out-of-bag accuracy over rows left out by at least one tree.
    pub oob_accuracy: Option<f64>,
}

fn gini_sum(counts: &[usize], n: usize) -> f64 {
    // n · Gini(counts)
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    n as f64 - sq / n as f64
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    params: &'a ForestParams,
    max_features: usize,
    nodes: Vec<Node>,
    importances: Vec<f64>,
}

impl TreeBuilder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    fn build(&mut self, idx: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = self.counts(idx);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts: counts.clone() });
        let n = idx.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.params.max_depth || n < 2 * self.params.min_samples_leaf {
            return id;
        }
        let parent = gini_sum(&counts, n);
        let d = self.x[0].len();
        let candidates = rand::seq::index::sample(rng, d, self.max_features.min(d));
        let mut best: Option<(f64, usize, f64)> = None;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
        for f in candidates.iter() {
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (self.x[i][f], self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = vec![0usize; self.n_classes];
            let mut right = counts.clone();
            let leaf = self.params.min_samples_leaf;
            for k in 0..n - 1 {
                let c = pairs[k].1;
                left[c] += 1;
                right[c] -= 1;
                let nl = k + 1;
                if nl < leaf || n - nl < leaf || pairs[k].0 == pairs[k + 1].0 {
                    continue;
                }
                let gain = parent - gini_sum(&left, nl) - gini_sum(&right, n - nl);
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, 0.5 * (pairs[k].0 + pairs[k + 1].0)));
                }
            }
        }
        let Some((gain, feature, threshold)) = best else { return id };
        self.importances[feature] += gain;
        let mut split = 0;
        for k in 0..n {
            if self.x[idx[k]][feature] <= threshold {
                idx.swap(k, split);
                split += 1;
            }
        }
        let (l, r) = idx.split_at_mut(split);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
}

fn argmax_counts(counts: &[f64]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Bootstrap-sampled CART forest on class ids `y` (0-based). Each tree's
/// randomness comes from `(seed, tree index)`, so the execution strategy
/// does not affect the result.
pub fn fit_forest(
    x: &[Vec<f64>],
    y: &[usize],
    params: &ForestParams,
    seed: u64,
    exec: Execution,
) -> Result<ForestModel, ReduceError> {
    let n = x.len();
    if n != y.len() {
        return Err(ReduceError::InvalidParams(format!("{n} rows but {} labels", y.len())));
    }
    if n < 2 {
        return Err(ReduceError::TooFewRows(n));
    }
    if params.n_trees == 0 || params.min_samples_leaf == 0 {
        return Err(ReduceError::InvalidParams("n_trees and min_samples_leaf must be positive".into()));
    }
    let n_classes = y.iter().max().map_or(0, |m| m + 1);
    let mut seen = vec![false; n_classes];
    y.iter().for_each(|&c| seen[c] = true);
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(ReduceError::DegenerateLabels);
    }
    let d = x[0].len();
    let max_features = ((d as f64).sqrt().floor() as usize).max(1);

    let grown = exec.map_range(params.n_trees, |t| {
        let mut rng = stream_rng(seed, t as u64);
        let mut idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut in_bag = vec![false; n];
        idx.iter().for_each(|&i| in_bag[i] = true);
        let mut b = TreeBuilder {
            x,
            y,
            n_classes,
            params,
            max_features,
            nodes: Vec::new(),
            importances: vec![0.0; d],
        };
        b.build(&mut idx, 0, &mut rng);
        (Tree { nodes: b.nodes }, b.importances, in_bag)
    });

    let mut importances = vec![0.0; d];
    let mut oob_votes = vec![vec![0.0; n_classes]; n];
    let mut trees = Vec::with_capacity(grown.len());
    for (tree, imp, in_bag) in grown {
        importances.iter_mut().zip(&imp).for_each(|(a, b)| *a += b);
        for i in (0..n).filter(|&i| !in_bag[i]) {
            let c = tree.leaf_counts(&x[i]);
            let total: usize = c.iter().sum();
            for (v, &k) in oob_votes[i].iter_mut().zip(c) {
                *v += k as f64 / total as f64;
            }
        }
        trees.push(tree);
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        importances.iter_mut().for_each(|v| *v /= total);
    }
    let scored: Vec<bool> = (0..n)
        .filter(|&i| oob_votes[i].iter().any(|&v| v > 0.0))
        .map(|i| argmax_counts(&oob_votes[i]) == y[i])
        .collect();
    let oob_accuracy =
        (!scored.is_empty()).then(|| scored.iter().filter(|&&c| c).count() as f64 / scored.len() as f64);
    Ok(ForestModel { trees, params: params.clone(), seed, n_classes, n_features: d, importances, oob_accuracy })
}

impl ForestModel {
    /// Class with the largest mean leaf probability.
    pub fn predict_row(&self, x: &[f64]) -> usize {
        let mut votes = vec![0.0; self.n_classes];
        for t in &self.trees {
            let c = t.leaf_counts(x);
            let total: usize = c.iter().sum();
            for (v, &k) in votes.iter_mut().zip(c) {
                *v += k as f64 / total as f64;
            }
        }
        argmax_counts(&votes)
    }

    pub fn n_splits(&self) -> usize {
        self.trees.iter().map(Tree::n_splits).sum()
    }
}

/// Indices with importance strictly above the mean. When none qualifies,
/// the ten most important (ties by index) are returned instead.
pub fn select_features(model: &ForestModel) -> Vec<usize> {
    select_by_importance(&model.importances)
}

pub fn select_by_importance(importances: &[f64]) -> Vec<usize> {
    let d = importances.len();
    if d == 0 {
        return Vec::new();
    }
    let mean = importances.iter().sum::<f64>() / d as f64;
    let chosen: Vec<usize> = (0..d).filter(|&i| importances[i] > mean).collect();
    if !chosen.is_empty() {
        return chosen;
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| importances[b].total_cmp(&importances[a]).then(a.cmp(&b)));
    order.truncate(10);
    order.sort_unstable();
    order
}

// ---------------------------------------------------------------------------
// PCA

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors as rows.
pub fn symmetric_eigen(a: &[Vec<f64>], tol: f64, max_sweeps: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| (i == j) as u8 as f64).collect()).collect();
    let scale: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _ in 0..max_sweeps {
        let off: f64 = (0..d).flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        if off.sqrt() <= tol * scale {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = m[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| m[b][b].total_cmp(&m[a][a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..d).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Unit rows in descending eigenvalue order.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub retained_count: usize,
}

pub fn covariance(rows: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>), ReduceError> {
    let n = rows.len();
    if n < 2 {
        return Err(ReduceError::TooFewRows(n));
    }
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![vec![0.0; d]; d];
    let mut centered = vec![0.0; d];
    for r in rows {
        centered.iter_mut().zip(r).zip(&mean).for_each(|((c, v), m)| *c = v - m);
        for i in 0..d {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..d {
                cov[i][j] += ci * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= (n - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }
    Ok((mean, cov))
}

/// Full PCA basis; `retained_count` covers every component until
/// [`PcaModel::with_threshold`] truncates it.
pub fn fit_pca(rows: &[Vec<f64>]) -> Result<PcaModel, ReduceError> {
    let (mean, cov) = covariance(rows)?;
    let (values, components) = symmetric_eigen(&cov, 1e-12, 100);
    let eigenvalues: Vec<f64> = values.into_iter().map(|v| v.max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    let explained_variance_ratio =
        eigenvalues.iter().map(|v| if total > 0.0 { v / total } else { 0.0 }).collect();
    let retained_count = components.len();
    Ok(PcaModel { mean, components, eigenvalues, explained_variance_ratio, retained_count })
}

impl PcaModel {
    /// Smallest k whose cumulative ratio reaches `threshold` (at least 1).
    pub fn retained_for(&self, threshold: f64) -> usize {
        let mut cum = 0.0;
        for (k, r) in self.explained_variance_ratio.iter().enumerate() {
            cum += r;
            if cum >= threshold - 1e-12 {
                return k + 1;
            }
        }
        self.components.len().max(1)
    }

    pub fn with_threshold(&self, threshold: f64) -> Result<PcaModel, ReduceError> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(ReduceError::InvalidParams(format!("variance threshold {threshold} outside (0, 1]")));
        }
        let mut m = self.clone();
        m.retained_count = self.retained_for(threshold).min(self.components.len());
        Ok(m)
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        self.components[..self.retained_count]
            .iter()
            .map(|c| c.iter().zip(row).zip(&self.mean).map(|((w, v), m)| w * (v - m)).sum())
            .collect()
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform_row(r)).collect()
    }

    pub fn reconstruct_row(&self, projected: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, p) in self.components.iter().zip(projected) {
            out.iter_mut().zip(c).for_each(|(o, w)| *o += p * w);
        }
        out
    }
}

/// Projection onto the leading components keeping `threshold` of the variance.
pub fn transform_pca(model: &PcaModel, rows: &[Vec<f64>], threshold: f64) -> Result<Vec<Vec<f64>>, ReduceError> {
    Ok(model.with_threshold(threshold)?.transform(rows))
}

// ---------------------------------------------------------------------------
// Autoencoder

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `inputs × outputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn glorot(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.random_range(-limit..=limit)).collect();
        Self { inputs, outputs, weights, bias: vec![0.0; outputs] }
    }

    fn w(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.inputs, self.outputs), self.weights.clone()).expect("layer shape")
    }

    fn b(&self) -> Array1<f64> {
        Array1::from(self.bias.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AutoencoderParams {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AutoencoderParams {
    fn default() -> Self {
        Self { batch_size: 64, learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// `d → h → z → h → d` with rectified hidden layers and linear latent and
/// output layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderModel {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    /// Encoder hidden, latent, decoder hidden, output.
    pub layers: [DenseLayer; 4],
    /// Mean squared reconstruction error over each epoch's batches.
    pub loss_log: Vec<f64>,
    pub seed: u64,
}

struct Params {
    w: [Array2<f64>; 4],
    b: [Array1<f64>; 4],
}

struct Forward {
    pre1: Array2<f64>,
    a1: Array2<f64>,
    z: Array2<f64>,
    pre3: Array2<f64>,
    a3: Array2<f64>,
    out: Array2<f64>,
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.max(0.0))
}

impl Params {
    fn forward(&self, x: &Array2<f64>) -> Forward {
        let pre1 = x.dot(&self.w[0]) + &self.b[0];
        let a1 = relu(&pre1);
        let z = a1.dot(&self.w[1]) + &self.b[1];
        let pre3 = z.dot(&self.w[2]) + &self.b[2];
        let a3 = relu(&pre3);
        let out = a3.dot(&self.w[3]) + &self.b[3];
        Forward { pre1, a1, z, pre3, a3, out }
    }
}

fn to_array(rows: &[Vec<f64>]) -> Array2<f64> {
    let d = rows.first().map_or(0, Vec::len);
    Array2::from_shape_vec((rows.len(), d), rows.iter().flatten().copied().collect()).expect("rectangular rows")
}

/// Trains once and snapshots the model after each epoch count in
/// `checkpoints`; each snapshot equals a separate fit with that many epochs.
pub fn fit_autoencoder_checkpoints(
    rows: &[Vec<f64>],
    latent_dim: usize,
    checkpoints: &[usize],
    seed: u64,
    params: &AutoencoderParams,
) -> Result<Vec<AutoencoderModel>, ReduceError> {
    let n = rows.len();
    if n < 2 {
        return Err(ReduceError::TooFewRows(n));
    }
    let d = rows[0].len();
    if latent_dim == 0 || latent_dim >= d {
        return Err(ReduceError::InvalidParams(format!("latent size {latent_dim} must be in 1..{d}")));
    }
    if params.batch_size == 0 {
        return Err(ReduceError::InvalidParams("batch size must be positive".into()));
    }
    let hidden = ((d + latent_dim) as f64 / 2.0).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = [
        DenseLayer::glorot(d, hidden, &mut rng),
        DenseLayer::glorot(hidden, latent_dim, &mut rng),
        DenseLayer::glorot(latent_dim, hidden, &mut rng),
        DenseLayer::glorot(hidden, d, &mut rng),
    ];
    let mut p = Params { w: layers.clone().map(|l| l.w()), b: layers.clone().map(|l| l.b()) };
    let mut mw = p.w.clone().map(|a| a * 0.0);
    let mut vw = mw.clone();
    let mut mb = p.b.clone().map(|a| a * 0.0);
    let mut vb = mb.clone();
    let x = to_array(rows);
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_log = Vec::new();
    let mut snapshots = Vec::new();
    let last = checkpoints.iter().copied().max().unwrap_or(0);
    let mut step = 0i32;

    for epoch in 1..=last {
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        for batch in order.chunks(params.batch_size) {
            let xb = x.select(Axis(0), batch);
            let f = p.forward(&xb);
            let diff = &f.out - &xb;
            sse += diff.iter().map(|v| v * v).sum::<f64>();
            let scale = 2.0 / (batch.len() * d) as f64;
            let g_out = diff * scale;
            let g_w3 = f.a3.t().dot(&g_out);
            let g_b3 = g_out.sum_axis(Axis(0));
            let mut g_a3 = g_out.dot(&p.w[3].t());
            g_a3.zip_mut_with(&f.pre3, |g, &pre| {
                if pre <= 0.0 {
                    *g = 0.0
                }
            });
            let g_w2 = f.z.t().dot(&g_a3);
            let g_b2 = g_a3.sum_axis(Axis(0));
            let g_z = g_a3.dot(&p.w[2].t());
            let g_w1 = f.a1.t().dot(&g_z);
            let g_b1 = g_z.sum_axis(Axis(0));
            let mut g_a1 = g_z.dot(&p.w[1].t());
            g_a1.zip_mut_with(&f.pre1, |g, &pre| {
                if pre <= 0.0 {
                    *g = 0.0
                }
            });
            let g_w0 = xb.t().dot(&g_a1);
            let g_b0 = g_a1.sum_axis(Axis(0));

            step += 1;
            let c1 = 1.0 - params.beta1.powi(step);
            let c2 = 1.0 - params.beta2.powi(step);
            let adam = |w: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = params.beta1 * *m + (1.0 - params.beta1) * g;
                *v = params.beta2 * *v + (1.0 - params.beta2) * g * g;
                *w -= params.learning_rate * (*m / c1) / ((*v / c2).sqrt() + params.epsilon);
            };
            for (k, g) in [g_w0, g_w1, g_w2, g_w3].iter().enumerate() {
                ndarray::Zip::from(&mut p.w[k]).and(g).and(&mut mw[k]).and(&mut vw[k]).for_each(|w, &g, m, v| adam(w, g, m, v));
            }
            for (k, g) in [g_b0, g_b1, g_b2, g_b3].iter().enumerate() {
                ndarray::Zip::from(&mut p.b[k]).and(g).and(&mut mb[k]).and(&mut vb[k]).for_each(|w, &g, m, v| adam(w, g, m, v));
            }
        }
        let loss = sse / (n * d) as f64;
        if !loss.is_finite() {
            return Err(ReduceError::NonFiniteLoss { epoch });
        }
        loss_log.push(loss);
        if checkpoints.contains(&epoch) {
            for (layer, (w, b)) in layers.iter_mut().zip(p.w.iter().zip(&p.b)) {
                layer.weights = w.iter().copied().collect();
                layer.bias = b.to_vec();
            }
            snapshots.push((epoch, layers.clone(), loss_log.clone()));
        }
    }
    Ok(checkpoints
        .iter()
        .map(|&e| {
            let (_, layers, loss_log) = snapshots.iter().find(|s| s.0 == e).cloned().unwrap_or_else(|| (0, layers.clone(), Vec::new()));
            AutoencoderModel { input_dim: d, hidden_dim: hidden, latent_dim, layers, loss_log, seed }
        })
        .collect())
}

pub fn fit_autoencoder(
    rows: &[Vec<f64>],
    latent_dim: usize,
    epochs: usize,
    seed: u64,
    params: &AutoencoderParams,
) -> Result<AutoencoderModel, ReduceError> {
    if epochs == 0 {
        return Err(ReduceError::InvalidParams("epochs must be positive".into()));
    }
    Ok(fit_autoencoder_checkpoints(rows, latent_dim, &[epochs], seed, params)?.remove(0))
}

impl AutoencoderModel {
    fn params(&self) -> Params {
        Params { w: self.layers.clone().map(|l| l.w()), b: self.layers.clone().map(|l| l.b()) }
    }

    /// Latent activations, one row per input row.
    pub fn encode(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        if rows.is_empty() {
            return Vec::new();
        }
        let f = self.params().forward(&to_array(rows));
        f.z.outer_iter().map(|r| r.to_vec()).collect()
    }

    pub fn reconstruct(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        if rows.is_empty() {
            return Vec::new();
        }
        let f = self.params().forward(&to_array(rows));
        f.out.outer_iter().map(|r| r.to_vec()).collect()
    }

    pub fn reconstruction_mse(&self, rows: &[Vec<f64>]) -> f64 {
        let rec = self.reconstruct(rows);
        let n: usize = rows.iter().map(Vec::len).sum();
        rec.iter().flatten().zip(rows.iter().flatten()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn standardizer_centers_and_scales() {
        let mut rows = noise(50, 3, 1);
        rows.iter_mut().for_each(|r| r[2] = 4.0);
        let s = Standardizer::fit(&rows).unwrap();
        assert_eq!(s.stds[2], 1.0);
        let t = s.transform(&rows);
        for c in 0..2 {
            let m = t.iter().map(|r| r[c]).sum::<f64>() / 50.0;
            let v = t.iter().map(|r| (r[c] - m).powi(2)).sum::<f64>() / 50.0;
            assert!(m.abs() < 1e-9);
            assert!((v.sqrt() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn selection_rules() {
        assert_eq!(select_by_importance(&[0.7, 0.2, 0.1]), vec![0]);
        assert_eq!(select_by_importance(&[0.25; 4]), vec![0, 1, 2, 3]);
        assert_eq!(select_by_importance(&[0.0; 14]), (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn forest_finds_the_informative_feature() {
        let x = noise(300, 6, 3);
        let y: Vec<usize> = x.iter().map(|r| (r[3] > 0.1) as usize).collect();
        let f = fit_forest(&x, &y, &ForestParams { n_trees: 20, ..Default::default() }, 9, Execution::Sequential).unwrap();
        let top = (0..6).max_by(|&a, &b| f.importances[a].total_cmp(&f.importances[b])).unwrap();
        assert_eq!(top, 3);
        assert!((f.importances.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(f.oob_accuracy.unwrap() > 0.9);
    }

    #[test]
    fn single_class_is_degenerate() {
        let x = noise(20, 2, 1);
        let err = fit_forest(&x, &[0; 20], &ForestParams::default(), 1, Execution::Sequential).unwrap_err();
        assert_eq!(err, ReduceError::DegenerateLabels);
    }

    #[test]
    fn rank_one_pca() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let p = fit_pca(&rows).unwrap();
        assert!((p.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        assert_eq!(p.retained_for(0.95), 1);
    }

    #[test]
    fn pca_needs_two_rows() {
        assert_eq!(fit_pca(&[vec![1.0, 2.0]]).unwrap_err(), ReduceError::TooFewRows(1));
    }

    #[test]
    fn checkpoint_matches_fresh_fit() {
        let x = noise(100, 6, 5);
        let p = AutoencoderParams::default();
        let both = fit_autoencoder_checkpoints(&x, 2, &[3, 5], 11, &p).unwrap();
        let fresh = fit_autoencoder(&x, 2, 3, 11, &p).unwrap();
        assert_eq!(both[0], fresh);
        assert_eq!(both[1].loss_log.len(), 5);
        assert_eq!(both[1].loss_log[..3], fresh.loss_log[..]);
    }
}
