//! Model assembly: grouped cross-validated grid search over the three
//! architectures, final fitting, prediction, model files and evaluation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec::Execution;
use crate::features::flip_augment;
use crate::model::FeatureMatrix;
use crate::preprocess::{apply_imputation, fit_imputation, ImputationStats};
use crate::reduce::{
    fit_autoencoder_checkpoints, fit_forest, fit_pca, select_features, AutoencoderModel, AutoencoderParams,
    ForestParams, PcaModel, ReduceError, Standardizer,
};
use crate::stats::{
    binary_metrics, mcnemar, multilabel_macro_metrics, random_chance_expectation, random_predictions, zeror_fit,
    zeror_fit_multilabel, Comparison, ConfigReport, MetricRow, SIGNIFICANCE,
};
use crate::svm::{powerset_classes, train_powerset, train_svm_lenient, Gamma, PowersetModel, RegionFlags, SvmModel, SvmParams};
use crate::Error;

pub const MODEL_FORMAT: &str = "facetouch-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("need at least {k} videos for {k} folds, got {found}")]
    TooFewGroups { found: usize, k: usize },
    #[error("no labeled rows for the task")]
    NoLabeledRows,
    #[error("variant {0} needs HOG columns")]
    MissingHog(Variant),
    #[error("feature manifest fingerprint {found} does not match the model's {expected}")]
    ManifestFingerprintMismatch { expected: String, found: String },
    #[error("model file version {found} is newer than supported version {supported}")]
    VersionMismatch { found: u64, supported: u32 },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error("models disagree on the task")]
    MixedTasks,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    RfPcaSvm,
    AutoencSvmI,
    AutoencSvmII,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::RfPcaSvm, Variant::AutoencSvmI, Variant::AutoencSvmII];

    pub fn name(self) -> &'static str {
        match self {
            Variant::RfPcaSvm => "RF-PCA-SVM",
            Variant::AutoencSvmI => "AUTOENC-SVM-I",
            Variant::AutoencSvmII => "AUTOENC-SVM-II",
        }
    }

    pub fn uses_hog(self) -> bool {
        self == Variant::AutoencSvmII
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// On-head versus not, over all labeled frames.
    BinaryTouch,
    /// The five region flags, over on-head frames only.
    MultiLabelRegions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grid {
    pub pca_thresholds: Vec<f64>,
    pub latent_dims: Vec<usize>,
    pub epochs: Vec<usize>,
    pub c_values: Vec<f64>,
    pub gammas: Vec<Gamma>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            pca_thresholds: vec![0.90, 0.95, 0.99],
            latent_dims: vec![16, 32, 64],
            epochs: vec![50, 100],
            c_values: vec![0.1, 1.0, 10.0, 100.0],
            gammas: vec![Gamma::Scale, Gamma::Fixed(0.01), Gamma::Fixed(0.1)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSpec {
    pub variant: Variant,
    pub task: Task,
    pub grid: Grid,
    pub seed: u64,
    pub folds: usize,
    /// Mirror-augment training rows.
    pub augment: bool,
    /// Keep every n-th labeled frame of each training video.
    pub train_frame_stride: usize,
    pub forest: ForestParams,
    /// C and gamma are overridden by the grid.
    pub svm: SvmParams,
    pub autoencoder: AutoencoderParams,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        Self {
            variant: Variant::RfPcaSvm,
            task: Task::BinaryTouch,
            grid: Grid::default(),
            seed: 0,
            folds: 5,
            augment: true,
            train_frame_stride: 1,
            forest: ForestParams::default(),
            svm: SvmParams::default(),
            autoencoder: AutoencoderParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Reducer {
    Pca { threshold: f64 },
    Autoencoder { latent: usize, epochs: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub reducer: Reducer,
    pub c: f64,
    pub gamma: Gamma,
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.reducer {
            Reducer::Pca { threshold } => write!(f, "pca={threshold}")?,
            Reducer::Autoencoder { latent, epochs } => write!(f, "latent={latent} epochs={epochs}")?,
        }
        write!(f, " C={} gamma={}", self.c, self.gamma)
    }
}

impl PipelineSpec {
    pub fn reducers(&self) -> Vec<Reducer> {
        match self.variant {
            Variant::RfPcaSvm => self.grid.pca_thresholds.iter().map(|&threshold| Reducer::Pca { threshold }).collect(),
            _ => self
                .grid
                .latent_dims
                .iter()
                .flat_map(|&latent| self.grid.epochs.iter().map(move |&epochs| Reducer::Autoencoder { latent, epochs }))
                .collect(),
        }
    }

    /// Grid points in enumeration order: reducer, then C, then gamma.
    pub fn grid_points(&self) -> Vec<HyperParams> {
        self.reducers()
            .into_iter()
            .flat_map(|reducer| {
                self.grid.c_values.iter().flat_map(move |&c| self.grid.gammas.iter().map(move |&gamma| HyperParams { reducer, c, gamma }))
            })
            .collect()
    }

    fn svm_params(&self, h: &HyperParams) -> SvmParams {
        SvmParams { c: h.c, gamma: h.gamma, ..self.svm.clone() }
    }
}

// ---------------------------------------------------------------------------
// Folds

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupedFolds {
    pub k: usize,
    /// Video id → fold.
    pub assignment: BTreeMap<String, usize>,
}

impl GroupedFolds {
    pub fn videos_in(&self, fold: usize) -> Vec<String> {
        self.assignment.iter().filter(|(_, &f)| f == fold).map(|(v, _)| v.clone()).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        (0..self.k).map(|f| self.assignment.values().filter(|&&x| x == f).count()).collect()
    }
}

/// Shuffles the videos by `seed` and deals them round-robin into `k` folds.
pub fn make_grouped_folds(video_ids: &[String], k: usize, seed: u64) -> Result<GroupedFolds, PipelineError> {
    let mut ids: Vec<String> = video_ids.to_vec();
    ids.sort();
    ids.dedup();
    if k < 2 || ids.len() < k {
        return Err(PipelineError::TooFewGroups { found: ids.len(), k });
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let assignment = ids.into_iter().enumerate().map(|(i, v)| (v, i % k)).collect();
    Ok(GroupedFolds { k, assignment })
}

// ---------------------------------------------------------------------------
// Stage fitting

/// Labeled rows that belong to `task`.
pub fn task_rows(matrix: &FeatureMatrix, task: Task) -> FeatureMatrix {
    let rows: Vec<usize> = (0..matrix.n_rows())
        .filter(|&r| match (&matrix.labels[r], task) {
            (Some(_), Task::BinaryTouch) => true,
            (Some(l), Task::MultiLabelRegions) => l.on_head,
            (None, _) => false,
        })
        .collect();
    matrix.select_rows(&rows)
}

fn stride_rows(matrix: &FeatureMatrix, stride: usize) -> FeatureMatrix {
    if stride <= 1 {
        return matrix.clone();
    }
    let rows: Vec<usize> = (0..matrix.n_rows()).filter(|&r| matrix.frame_indices[r] % stride == 0).collect();
    matrix.select_rows(&rows)
}

fn input_columns(spec: &PipelineSpec, matrix: &FeatureMatrix) -> Result<Vec<usize>, PipelineError> {
    if spec.variant.uses_hog() {
        if !matrix.manifest.has_hog() {
            return Err(PipelineError::MissingHog(spec.variant));
        }
        Ok((0..matrix.n_cols()).collect())
    } else {
        Ok(matrix.manifest.landmark_indices())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    OnHead(Vec<bool>),
    Regions(Vec<RegionFlags>),
}

impl Targets {
    fn of(matrix: &FeatureMatrix, task: Task) -> Targets {
        match task {
            Task::BinaryTouch => Targets::OnHead(matrix.on_head_targets()),
            Task::MultiLabelRegions => Targets::Regions(matrix.region_targets()),
        }
    }

    fn forest_classes(&self) -> Vec<usize> {
        match self {
            Targets::OnHead(y) => y.iter().map(|&b| b as usize).collect(),
            Targets::Regions(r) => powerset_classes(r).1,
        }
    }
}

/// Everything fitted on one training portion before the classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedStages {
    /// Columns of the input manifest fed to the model.
    pub columns: Vec<usize>,
    pub imputation: ImputationStats,
    pub standardizer: Standardizer,
    /// Forest-selected positions within `columns` (RF-PCA-SVM only).
    pub selected: Option<Vec<usize>>,
    pub pca: Option<PcaModel>,
    /// `(latent, epochs)` → trained autoencoder.
    pub autoencoders: Vec<((usize, usize), AutoencoderModel)>,
}

impl FittedStages {
    /// Column subset, imputation, standardization and forest selection.
    pub fn prepare(&self, matrix: &FeatureMatrix) -> Vec<Vec<f64>> {
        let imputed = apply_imputation(&matrix.select_columns(&self.columns), &self.imputation);
        let std = self.standardizer.transform(&imputed.rows);
        match &self.selected {
            Some(sel) => std.iter().map(|r| sel.iter().map(|&c| r[c]).collect()).collect(),
            None => std,
        }
    }

    pub fn reduce(&self, prepared: &[Vec<f64>], reducer: &Reducer) -> Result<Vec<Vec<f64>>, Error> {
        match reducer {
            Reducer::Pca { threshold } => {
                let pca = self.pca.as_ref().ok_or(ReduceError::InvalidParams("no PCA basis fitted".into()))?;
                Ok(pca.with_threshold(*threshold)?.transform(prepared))
            }
            Reducer::Autoencoder { latent, epochs } => {
                let ae = self
                    .autoencoders
                    .iter()
                    .find(|(k, _)| *k == (*latent, *epochs))
                    .ok_or_else(|| ReduceError::InvalidParams(format!("no autoencoder for latent {latent}, {epochs} epochs")))?;
                Ok(ae.1.encode(prepared))
            }
        }
    }
}

/// Training rows as the model sees them: task rows, frame stride, then
/// mirror augmentation.
fn training_view(spec: &PipelineSpec, train: &FeatureMatrix) -> FeatureMatrix {
    let rows = stride_rows(&task_rows(train, spec.task), spec.train_frame_stride);
    if spec.augment {
        flip_augment(&rows)
    } else {
        rows
    }
}

/// Fits every pre-classifier stage on `train` for the given reducers.
pub fn fit_stages(spec: &PipelineSpec, train: &FeatureMatrix, reducers: &[Reducer], exec: Execution) -> Result<(FittedStages, Targets, Vec<Vec<f64>>), Error> {
    let view = training_view(spec, train);
    if view.n_rows() == 0 {
        return Err(PipelineError::NoLabeledRows.into());
    }
    let columns = input_columns(spec, &view)?;
    let sub = view.select_columns(&columns);
    let imputation = fit_imputation(&sub);
    let imputed = apply_imputation(&sub, &imputation);
    let standardizer = Standardizer::fit(&imputed.rows)?;
    let std_rows = standardizer.transform(&imputed.rows);
    let targets = Targets::of(&view, spec.task);

    let mut stages = FittedStages { columns, imputation, standardizer, selected: None, pca: None, autoencoders: Vec::new() };
    match spec.variant {
        Variant::RfPcaSvm => {
            let selected = match fit_forest(&std_rows, &targets.forest_classes(), &spec.forest, spec.seed, exec) {
                Ok(forest) => select_features(&forest),
                Err(ReduceError::DegenerateLabels) => {
                    log::warn!("single training class; forest selection keeps every feature");
                    (0..std_rows[0].len()).collect()
                }
                Err(e) => return Err(e.into()),
            };
            stages.selected = Some(selected);
            let prepared: Vec<Vec<f64>> =
                std_rows.iter().map(|r| stages.selected.as_ref().unwrap().iter().map(|&c| r[c]).collect()).collect();
            stages.pca = Some(fit_pca(&prepared)?);
            Ok((stages, targets, prepared))
        }
        Variant::AutoencSvmI | Variant::AutoencSvmII => {
            let mut by_latent: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for r in reducers {
                if let Reducer::Autoencoder { latent, epochs } = *r {
                    by_latent.entry(latent).or_default().push(epochs);
                }
            }
            let jobs: Vec<(usize, Vec<usize>)> = by_latent.into_iter().collect();
            let fitted = exec.try_map(&jobs, |(latent, epochs)| {
                fit_autoencoder_checkpoints(&std_rows, *latent, epochs, spec.seed, &spec.autoencoder)
                    .map(|models| epochs.iter().map(|&e| (*latent, e)).zip(models).collect::<Vec<_>>())
            })?;
            stages.autoencoders = fitted.into_iter().flatten().collect();
            Ok((stages, targets, std_rows))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Classifier {
    Binary(SvmModel),
    Powerset(PowersetModel),
}

fn train_classifier(spec: &PipelineSpec, x: &[Vec<f64>], targets: &Targets, h: &HyperParams, exec: Execution) -> Result<Classifier, Error> {
    let params = spec.svm_params(h);
    Ok(match targets {
        Targets::OnHead(y) => {
            let y: Vec<i8> = y.iter().map(|&b| if b { 1 } else { -1 }).collect();
            Classifier::Binary(train_svm_lenient(x, &y, &params)?)
        }
        Targets::Regions(r) => Classifier::Powerset(train_powerset(x, r, &params, exec)?),
    })
}

impl Classifier {
    fn predict(&self, x: &[Vec<f64>]) -> Result<Targets, Error> {
        Ok(match self {
            Classifier::Binary(m) => Targets::OnHead(m.predict(x)?.0),
            Classifier::Powerset(m) => Targets::Regions(m.predict(x)?),
        })
    }
}

/// Accuracy (binary) or macro-average accuracy (regions).
pub fn task_score(pred: &Targets, truth: &Targets) -> Result<f64, Error> {
    Ok(match (pred, truth) {
        (Targets::OnHead(p), Targets::OnHead(t)) => binary_metrics(p, t)?.accuracy,
        (Targets::Regions(p), Targets::Regions(t)) => multilabel_macro_metrics(p, t)?.macro_accuracy,
        _ => return Err(PipelineError::MixedTasks.into()),
    })
}

// ---------------------------------------------------------------------------
// Grid search

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub params: HyperParams,
    pub fold_scores: Vec<f64>,
    pub mean_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvTable {
    pub rows: Vec<CvRow>,
    pub best: usize,
}

impl CvTable {
    pub fn best_params(&self) -> HyperParams {
        self.rows[self.best].params
    }

    pub fn best_score(&self) -> f64 {
        self.rows[self.best].mean_score
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        for (i, r) in self.rows.iter().enumerate() {
            let mark = if i == self.best { "*" } else { " " };
            s.push_str(&format!("{mark} {:<40} {:.4}\n", r.params.to_string(), r.mean_score));
        }
        s
    }
}

/// Split of `matrix` into the training and validation rows of fold `k`.
pub fn fold_split(matrix: &FeatureMatrix, folds: &GroupedFolds, k: usize) -> (FeatureMatrix, FeatureMatrix) {
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for r in 0..matrix.n_rows() {
        match folds.assignment.get(&matrix.group_ids[r]) {
            Some(&f) if f == k => val.push(r),
            Some(_) => train.push(r),
            None => {}
        }
    }
    (matrix.select_rows(&train), matrix.select_rows(&val))
}

/// Stages fitted on the training portion of fold `k`.
pub fn fit_fold(spec: &PipelineSpec, matrix: &FeatureMatrix, folds: &GroupedFolds, k: usize, exec: Execution) -> Result<FittedStages, Error> {
    let (train, _) = fold_split(matrix, folds, k);
    Ok(fit_stages(spec, &train, &spec.reducers(), exec)?.0)
}

struct FoldData {
    train_targets: Targets,
    val_targets: Targets,
    /// Per reducer: reduced training and validation rows.
    reduced: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
}

/// Exhaustive grouped k-fold search; ties keep the earlier grid point.
pub fn grid_search(spec: &PipelineSpec, matrix: &FeatureMatrix, folds: &GroupedFolds, exec: Execution) -> Result<CvTable, Error> {
    let reducers = spec.reducers();
    let points = spec.grid_points();
    if points.is_empty() {
        return Err(PipelineError::EmptyGrid.into());
    }
    let fold_ids: Vec<usize> = (0..folds.k).collect();
    let data = exec.try_map(&fold_ids, |&k| -> Result<FoldData, Error> {
        let (train, val) = fold_split(matrix, folds, k);
        let (stages, train_targets, prepared) = fit_stages(spec, &train, &reducers, exec)?;
        let val = task_rows(&val, spec.task);
        let val_prepared = stages.prepare(&val);
        let reduced = reducers
            .iter()
            .map(|r| Ok((stages.reduce(&prepared, r)?, stages.reduce(&val_prepared, r)?)))
            .collect::<Result<Vec<_>, Error>>()?;
        Ok(FoldData { train_targets, val_targets: Targets::of(&val, spec.task), reduced })
    })?;

    let per_reducer = points.len() / reducers.len();
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| fold_ids.iter().map(move |&k| (p, k))).collect();
    let scores = exec.try_map(&jobs, |&(p, k)| -> Result<f64, Error> {
        let fold = &data[k];
        let (xt, xv) = &fold.reduced[p / per_reducer];
        if xv.is_empty() {
            return Ok(f64::NAN);
        }
        let clf = train_classifier(spec, xt, &fold.train_targets, &points[p], Execution::Sequential)?;
        task_score(&clf.predict(xv)?, &fold.val_targets)
    })?;

    let mut rows = Vec::with_capacity(points.len());
    for (p, params) in points.iter().enumerate() {
        let fold_scores: Vec<f64> = scores[p * folds.k..(p + 1) * folds.k].to_vec();
        let valid: Vec<f64> = fold_scores.iter().copied().filter(|v| v.is_finite()).collect();
        let mean_score = valid.iter().sum::<f64>() / valid.len().max(1) as f64;
        rows.push(CvRow { params: *params, fold_scores, mean_score });
    }
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.mean_score > rows[best].mean_score {
            best = i;
        }
    }
    Ok(CvTable { rows, best })
}

// ---------------------------------------------------------------------------
// Trained model

/// Training-set baselines carried with the model for evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainBaseline {
    pub n_train: usize,
    pub zeror_on_head: bool,
    pub zeror_regions: Option<RegionFlags>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: PipelineSpec,
    pub manifest_fingerprint: String,
    pub stages: FittedStages,
    pub params: HyperParams,
    pub classifier: Classifier,
    pub baseline: TrainBaseline,
    pub cv: Option<CvTable>,
    /// Free-form header lines recorded by the caller.
    #[serde(default)]
    pub provenance: Vec<String>,
}

/// Refits every stage on all of `train` with fixed hyperparameters.
pub fn fit(spec: &PipelineSpec, train: &FeatureMatrix, params: HyperParams, exec: Execution) -> Result<TrainedModel, Error> {
    let (stages, targets, prepared) = fit_stages(spec, train, &[params.reducer], exec)?;
    let x = stages.reduce(&prepared, &params.reducer)?;
    let classifier = train_classifier(spec, &x, &targets, &params, exec)?;
    let labeled = task_rows(train, spec.task);
    let baseline = TrainBaseline {
        n_train: labeled.n_rows(),
        zeror_on_head: zeror_fit(&task_rows(train, Task::BinaryTouch).on_head_targets()),
        zeror_regions: (spec.task == Task::MultiLabelRegions).then(|| zeror_fit_multilabel(&labeled.region_targets())),
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        manifest_fingerprint: train.manifest.fingerprint(),
        stages,
        params,
        classifier,
        baseline,
        cv: None,
        provenance: Vec::new(),
    })
}

/// Grid search on grouped folds, then a refit with the best grid point.
pub fn fit_with_search(spec: &PipelineSpec, train: &FeatureMatrix, exec: Execution) -> Result<TrainedModel, Error> {
    let labeled = task_rows(train, spec.task);
    let folds = make_grouped_folds(&labeled.video_ids(), spec.folds, spec.seed)?;
    let table = grid_search(spec, train, &folds, exec)?;
    log::info!("{} {:?}: best {} (CV {:.4})", spec.variant, spec.task, table.best_params(), table.best_score());
    let mut model = fit(spec, train, table.best_params(), exec)?;
    model.cv = Some(table);
    Ok(model)
}

impl TrainedModel {
    fn check_manifest(&self, matrix: &FeatureMatrix) -> Result<(), PipelineError> {
        let found = matrix.manifest.fingerprint();
        if found != self.manifest_fingerprint {
            return Err(PipelineError::ManifestFingerprintMismatch { expected: self.manifest_fingerprint.clone(), found });
        }
        Ok(())
    }

    /// Predictions for every row of `matrix`.
    pub fn predict(&self, matrix: &FeatureMatrix) -> Result<Targets, Error> {
        self.check_manifest(matrix)?;
        let x = self.stages.reduce(&self.stages.prepare(matrix), &self.params.reducer)?;
        self.classifier.predict(&x)
    }

    pub fn predict_on_head(&self, matrix: &FeatureMatrix) -> Result<Vec<bool>, Error> {
        match self.predict(matrix)? {
            Targets::OnHead(v) => Ok(v),
            Targets::Regions(_) => Err(PipelineError::MixedTasks.into()),
        }
    }

    pub fn predict_regions(&self, matrix: &FeatureMatrix) -> Result<Vec<RegionFlags>, Error> {
        match self.predict(matrix)? {
            Targets::Regions(v) => Ok(v),
            Targets::OnHead(_) => Err(PipelineError::MixedTasks.into()),
        }
    }

    pub fn label(&self) -> String {
        self.spec.variant.name().to_string()
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u64,
    sha256: String,
    model: serde_json::Value,
}

fn checksum(model: &serde_json::Value) -> String {
    let text = serde_json::to_string(model).expect("json value serializes");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Versioned JSON with a checksum over the model body. Floats use shortest
/// round-trip decimal form, so loading restores every number bit for bit.
pub fn model_to_string(model: &TrainedModel) -> String {
    let value = serde_json::to_value(model).expect("model serializes");
    let file = ModelFile { format: MODEL_FORMAT.into(), version: MODEL_VERSION as u64, sha256: checksum(&value), model: value };
    serde_json::to_string(&file).expect("model file serializes") + "\n"
}

pub fn model_from_str(text: &str) -> Result<TrainedModel, PipelineError> {
    let corrupt = |m: String| PipelineError::CorruptModel(m);
    let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    let version = raw.get("version").and_then(|v| v.as_u64()).ok_or_else(|| corrupt("missing version".into()))?;
    if version > MODEL_VERSION as u64 {
        return Err(PipelineError::VersionMismatch { found: version, supported: MODEL_VERSION });
    }
    let file: ModelFile = serde_json::from_value(raw).map_err(|e| corrupt(e.to_string()))?;
    if file.format != MODEL_FORMAT {
        return Err(corrupt(format!("unexpected format {:?}", file.format)));
    }
    if checksum(&file.model) != file.sha256 {
        return Err(corrupt("checksum mismatch".into()));
    }
    serde_json::from_value(file.model).map_err(|e| corrupt(e.to_string()))
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<(), Error> {
    std::fs::write(path, model_to_string(model))
        .map_err(|source| crate::ingest::IngestError::Io { path: path.to_path_buf(), source })?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedModel, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| crate::ingest::IngestError::Io { path: path.to_path_buf(), source })?;
    Ok(model_from_str(&text)?)
}

// ---------------------------------------------------------------------------
// Evaluation

/// Dataset pairing of one evaluation run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Train on A, test on B.
    AToB,
    /// Train on B, test on A.
    BToA,
    /// Train on A plus half of B's videos, test on the other half.
    AHalfB,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::AToB, Protocol::BToA, Protocol::AHalfB];
}

/// Splits the videos of `matrix` in two halves, seeded and grouped by video.
pub fn split_videos(matrix: &FeatureMatrix, seed: u64) -> (FeatureMatrix, FeatureMatrix) {
    let mut ids = matrix.video_ids();
    ids.sort();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let half = ids.len().div_ceil(2);
    let (first, second) = ids.split_at(half);
    (matrix.select_videos(first), matrix.select_videos(second))
}

/// Training and test matrices of a protocol, with a descriptive name.
pub fn protocol_split(
    protocol: Protocol,
    a: (&str, &FeatureMatrix),
    b: (&str, &FeatureMatrix),
    seed: u64,
) -> (String, FeatureMatrix, FeatureMatrix) {
    match protocol {
        Protocol::AToB => (format!("Train {} - Test {}", a.0, b.0), a.1.clone(), b.1.clone()),
        Protocol::BToA => (format!("Train {} - Test {}", b.0, a.0), b.1.clone(), a.1.clone()),
        Protocol::AHalfB => {
            let (b_train, b_test) = split_videos(b.1, seed);
            let mut train = a.1.clone();
            train.extend(&b_train);
            (format!("Train {} + 50% {} - Test other 50% {}", a.0, b.0, b.0), train, b_test)
        }
    }
}

fn compare(model: &str, reference: &str, model_ok: &[bool], ref_ok: &[bool]) -> Result<Comparison, Error> {
    let result = mcnemar(model_ok, ref_ok)?;
    Ok(Comparison { model: model.into(), reference: reference.into(), result, significant: result.p_value < SIGNIFICANCE })
}

/// Metrics of each model on `test`, with ZeroR (fitted on the first
/// model's training labels) and random-chance rows and McNemar tests of
/// every model against both baselines.
pub fn evaluate_models(name: &str, models: &[&TrainedModel], test: &FeatureMatrix, seed: u64) -> Result<ConfigReport, Error> {
    let first = models.first().ok_or(PipelineError::EmptyGrid)?;
    let task = first.spec.task;
    if models.iter().any(|m| m.spec.task != task) {
        return Err(PipelineError::MixedTasks.into());
    }
    let rows = task_rows(test, task);
    let multilabel = task == Task::MultiLabelRegions;
    if rows.n_rows() == 0 {
        return Ok(ConfigReport {
            name: name.into(),
            multilabel,
            n_test: test.n_rows(),
            prevalence: 0.0,
            rows: Vec::new(),
            comparisons: Vec::new(),
            notice: Some("test data carries no labels for this task".into()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ConfigReport {
        name: name.into(),
        multilabel,
        n_test: rows.n_rows(),
        prevalence: 0.0,
        rows: Vec::new(),
        comparisons: Vec::new(),
        notice: None,
    };
    match task {
        Task::BinaryTouch => {
            let truth = rows.on_head_targets();
            let prevalence = truth.iter().filter(|&&v| v).count() as f64 / truth.len() as f64;
            report.prevalence = prevalence;
            let zeror = vec![first.baseline.zeror_on_head; truth.len()];
            let random = random_predictions(truth.len(), &mut rng);
            report.rows.push(MetricRow::from_binary("Zero Rule", &binary_metrics(&zeror, &truth)?));
            let (a, p, r) = random_chance_expectation(prevalence);
            report.rows.push(MetricRow { name: "Random Chance".into(), accuracy: a, precision: p, recall: r, precision_undefined: false });
            let ok = |pred: &[bool]| -> Vec<bool> { pred.iter().zip(&truth).map(|(a, b)| a == b).collect() };
            let (zeror_ok, random_ok) = (ok(&zeror), ok(&random));
            for m in models {
                let pred = m.predict_on_head(&rows)?;
                report.rows.push(MetricRow::from_binary(&m.label(), &binary_metrics(&pred, &truth)?));
                let model_ok = ok(&pred);
                report.comparisons.push(compare(&m.label(), "Zero Rule", &model_ok, &zeror_ok)?);
                report.comparisons.push(compare(&m.label(), "Random Chance", &model_ok, &random_ok)?);
            }
        }
        Task::MultiLabelRegions => {
            let truth = rows.region_targets();
            let flat = |v: &[RegionFlags]| -> Vec<bool> { v.iter().flatten().copied().collect() };
            let truth_flat = flat(&truth);
            let prevalence = truth_flat.iter().filter(|&&v| v).count() as f64 / truth_flat.len() as f64;
            report.prevalence = prevalence;
            let zeror_combo = first.baseline.zeror_regions.unwrap_or([false; 5]);
            let zeror = vec![zeror_combo; truth.len()];
            report.rows.push(MetricRow::from_multilabel("Zero Rule", &multilabel_macro_metrics(&zeror, &truth)?));
            let per_label_prev: Vec<f64> =
                (0..5).map(|k| truth.iter().filter(|r| r[k]).count() as f64 / truth.len() as f64).collect();
            let mean_prev = per_label_prev.iter().sum::<f64>() / 5.0;
            report.rows.push(MetricRow { name: "Random Chance".into(), accuracy: 0.5, precision: mean_prev, recall: 0.5, precision_undefined: false });
            let random = random_predictions(truth_flat.len(), &mut rng);
            let ok = |pred: &[bool]| -> Vec<bool> { pred.iter().zip(&truth_flat).map(|(a, b)| a == b).collect() };
            let (zeror_ok, random_ok) = (ok(&flat(&zeror)), ok(&random));
            for m in models {
                let pred = m.predict_regions(&rows)?;
                report.rows.push(MetricRow::from_multilabel(&m.label(), &multilabel_macro_metrics(&pred, &truth)?));
                let model_ok = ok(&flat(&pred));
                report.comparisons.push(compare(&m.label(), "Zero Rule", &model_ok, &zeror_ok)?);
                report.comparisons.push(compare(&m.label(), "Random Chance", &model_ok, &random_ok)?);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_sizes_follow_round_robin() {
        let ids: Vec<String> = (0..23).map(|i| format!("v{i}")).collect();
        let f = make_grouped_folds(&ids, 5, 1).unwrap();
        let mut sizes = f.fold_sizes();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sizes, vec![5, 5, 5, 4, 4]);
        let few: Vec<String> = (0..3).map(|i| format!("v{i}")).collect();
        assert_eq!(make_grouped_folds(&few, 5, 1).unwrap_err(), PipelineError::TooFewGroups { found: 3, k: 5 });
    }

    #[test]
    fn grid_sizes() {
        let spec = PipelineSpec::default();
        assert_eq!(spec.grid_points().len(), 36);
        let ae = PipelineSpec { variant: Variant::AutoencSvmI, ..Default::default() };
        assert_eq!(ae.grid_points().len(), 72);
        let p = spec.grid_points();
        assert_eq!(p[0], HyperParams { reducer: Reducer::Pca { threshold: 0.90 }, c: 0.1, gamma: Gamma::Scale });
        assert_eq!(p[1].gamma, Gamma::Fixed(0.01));
        assert_eq!(p[3].c, 1.0);
    }

    #[test]
    fn future_version_is_rejected() {
        let text = r#"{"format":"facetouch-model","version":99,"sha256":"","model":{}}"#;
        assert_eq!(model_from_str(text).unwrap_err(), PipelineError::VersionMismatch { found: 99, supported: MODEL_VERSION });
        assert!(matches!(model_from_str(&text[..20]), Err(PipelineError::CorruptModel(_))));
    }
}
