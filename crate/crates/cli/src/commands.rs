//! One function per subcommand. Each is a pure function of its inputs,
//! the run configuration and the seeds in it.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use facetouch::extract::{extract_dataset, ExtractConfig};
use facetouch::ingest::{
    load_manifest, load_mullen, read_feature_matrix, read_predictions, write_feature_matrix, write_predictions,
    DatasetManifest, PredictionRecord,
};
use facetouch::model::FeatureMatrix;
use facetouch::pipeline::{
    evaluate_models, fit_with_search, load_model, model_to_string, protocol_split, PipelineSpec, Task, TrainedModel,
    Variant,
};
use facetouch::stats::{correlate_touch_development, ConfigReport, CorrelationReport, EvalReport};
use facetouch::synth::{generate, SynthSummary, MANIFEST_FILE};
use facetouch::Execution;

use crate::config::{provenance, RunConfig};

fn header(lines: &[String]) -> String {
    lines.iter().map(|l| format!("# {l}\n")).collect()
}

fn write_text(path: &Path, prov: &[String], body: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, header(prov) + body).with_context(|| format!("writing {}", path.display()))
}

/// A directory stands for the `manifest.json` inside it.
pub fn resolve_manifest(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

fn is_manifest(path: &Path) -> bool {
    path.is_dir() || path.extension().is_some_and(|e| e == "json")
}

/// Loaded input data: a feature matrix plus the dataset manifest when the
/// input was one.
pub struct Data {
    pub name: String,
    pub matrix: FeatureMatrix,
    pub manifest: Option<DatasetManifest>,
}

/// Reads a feature CSV, or extracts features from a dataset manifest.
pub fn load_data(path: &Path, extract: &ExtractConfig, include_hog: bool, exec: Execution) -> anyhow::Result<Data> {
    if is_manifest(path) {
        let mpath = resolve_manifest(path);
        let manifest = load_manifest(&mpath).with_context(|| format!("loading manifest {}", mpath.display()))?;
        let cfg = ExtractConfig { include_hog: include_hog || extract.include_hog, ..extract.clone() };
        let matrix = extract_dataset(&manifest, &cfg, exec).with_context(|| format!("extracting {}", mpath.display()))?;
        Ok(Data { name: manifest.dataset_name.clone(), matrix, manifest: Some(manifest) })
    } else {
        let matrix = read_feature_matrix(path, None).with_context(|| format!("reading features {}", path.display()))?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(Data { name, matrix, manifest: None })
    }
}

fn load_all(paths: &[PathBuf], extract: &ExtractConfig, include_hog: bool, exec: Execution) -> anyhow::Result<Data> {
    let mut iter = paths.iter();
    let first = iter.next().context("no input data given")?;
    let mut data = load_data(first, extract, include_hog, exec)?;
    for p in iter {
        let next = load_data(p, extract, include_hog, exec)?;
        if next.matrix.manifest != data.matrix.manifest {
            bail!("{} has a different feature layout from {}", p.display(), first.display());
        }
        data.matrix.extend(&next.matrix);
        data.name = format!("{}+{}", data.name, next.name);
        data.manifest = None;
    }
    Ok(data)
}

pub fn cmd_synth(config: &RunConfig, out: &Path, exec: Execution) -> anyhow::Result<SynthSummary> {
    let summary = generate(&config.synth, out, exec).with_context(|| format!("generating into {}", out.display()))?;
    log::info!(
        "{} videos, {} frames, prevalence {:.3} -> {}",
        summary.n_videos,
        summary.n_frames,
        summary.prevalence,
        summary.manifest_path.display()
    );
    Ok(summary)
}

pub fn cmd_extract(config: &RunConfig, manifest: &Path, out: &Path, include_hog: bool, exec: Execution) -> anyhow::Result<FeatureMatrix> {
    let data = load_data(manifest, &config.extract, include_hog, exec)?;
    let prov = provenance("extract", config, &[]);
    write_feature_matrix(&data.matrix, out, &prov).with_context(|| format!("writing {}", out.display()))?;
    log::info!("{} rows x {} features -> {}", data.matrix.n_rows(), data.matrix.n_cols(), out.display());
    Ok(data.matrix)
}

/// The configured pipeline with variant and task taken from the flags.
pub fn pipeline_spec(config: &RunConfig, variant: Variant, task: Task) -> PipelineSpec {
    PipelineSpec { variant, task, ..config.pipeline.clone() }
}

pub fn cmd_train(config: &RunConfig, variant: Variant, task: Task, inputs: &[PathBuf], out: &Path, exec: Execution) -> anyhow::Result<TrainedModel> {
    let spec = pipeline_spec(config, variant, task);
    let data = load_all(inputs, &config.extract, variant.uses_hog(), exec)?;
    let mut model = fit_with_search(&spec, &model_view(variant, &data.matrix), exec).context("training")?;
    model.provenance = provenance("train", config, &[("pipeline", spec.seed)]);
    model.provenance.push(format!("train_data {}", data.name));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(out, model_to_string(&model)).with_context(|| format!("writing {}", out.display()))?;
    Ok(model)
}

fn load_models(paths: &[PathBuf]) -> anyhow::Result<Vec<TrainedModel>> {
    paths.iter().map(|p| load_model(p).with_context(|| format!("loading model {}", p.display()))).collect()
}

fn needs_hog(models: &[TrainedModel]) -> bool {
    models.iter().any(|m| m.spec.variant.uses_hog())
}

/// Scores already trained models on one test set.
pub fn cmd_evaluate(config: &RunConfig, models: &[PathBuf], test: &Path, out: &Path, exec: Execution) -> anyhow::Result<EvalReport> {
    let models = load_models(models)?;
    let data = load_data(test, &config.extract, needs_hog(&models), exec)?;
    let refs: Vec<&TrainedModel> = models.iter().collect();
    let seed = config.evaluation.split_seed;
    let report = EvalReport { configs: vec![evaluate_views(&format!("Test {}", data.name), &refs, &data.matrix, seed)?] };
    write_text(out, &provenance("evaluate", config, &[("evaluation", seed)]), &report.render_text())?;
    Ok(report)
}

/// Runs the cross-dataset configurations: every listed variant is trained
/// with grid search on each configuration's training side and scored on its
/// test side.
pub fn cmd_evaluate_protocols(
    config: &RunConfig,
    variants: &[Variant],
    task: Task,
    dataset_a: &Path,
    dataset_b: &Path,
    out: &Path,
    exec: Execution,
) -> anyhow::Result<EvalReport> {
    let hog = variants.iter().any(|v| v.uses_hog());
    let a = load_data(dataset_a, &config.extract, hog, exec)?;
    let b = load_data(dataset_b, &config.extract, hog, exec)?;
    let seed = config.evaluation.split_seed;
    let mut report = EvalReport { configs: Vec::new() };
    for &protocol in &config.evaluation.configurations {
        let (name, train, test) = protocol_split(protocol, (&a.name, &a.matrix), (&b.name, &b.matrix), seed);
        let mut models = Vec::new();
        for &variant in variants {
            let spec = pipeline_spec(config, variant, task);
            let input = model_view(variant, &train);
            models.push(fit_with_search(&spec, &input, exec).with_context(|| format!("{name}: training {variant}"))?);
        }
        let refs: Vec<&TrainedModel> = models.iter().collect();
        report.configs.push(evaluate_views(&name, &refs, &test, seed)?);
    }
    write_text(out, &provenance("evaluate", config, &[("evaluation", seed), ("pipeline", config.pipeline.seed)]), &report.render_text())?;
    Ok(report)
}

/// The columns a variant is trained on: everything for HOG variants, the
/// landmark features otherwise.
pub fn model_view(variant: Variant, matrix: &FeatureMatrix) -> FeatureMatrix {
    if variant.uses_hog() {
        matrix.clone()
    } else {
        landmark_only(matrix)
    }
}

/// [`evaluate_models`] with each model scored on its own column view. The
/// baseline rows depend only on labels, so they are kept once.
pub fn evaluate_views(name: &str, models: &[&TrainedModel], test: &FeatureMatrix, seed: u64) -> anyhow::Result<ConfigReport> {
    let mut acc: Option<ConfigReport> = None;
    for m in models {
        let r = evaluate_models(name, &[m], &model_view(m.spec.variant, test), seed)?;
        acc = Some(match acc {
            None => r,
            Some(mut a) => {
                a.rows.extend(r.rows.into_iter().skip(2));
                a.comparisons.extend(r.comparisons);
                a
            }
        });
    }
    acc.context("no models given")
}

/// The non-HOG columns of a matrix, in manifest order.
pub fn landmark_only(matrix: &FeatureMatrix) -> FeatureMatrix {
    if matrix.manifest.has_hog() {
        matrix.select_columns(&matrix.manifest.landmark_indices())
    } else {
        matrix.clone()
    }
}

/// Frame-level predictions. With a regions model, region flags are
/// predicted for frames the binary model calls on-head.
pub fn cmd_predict(
    config: &RunConfig,
    model: &Path,
    regions_model: Option<&Path>,
    data: &Path,
    infants: Option<&Path>,
    out: &Path,
    exec: Execution,
) -> anyhow::Result<Vec<PredictionRecord>> {
    let binary = load_model(model).with_context(|| format!("loading model {}", model.display()))?;
    if binary.spec.task != Task::BinaryTouch {
        bail!("{} is not an on-head model", model.display());
    }
    let regions = regions_model.map(|p| load_model(p).with_context(|| format!("loading model {}", p.display()))).transpose()?;
    let hog = binary.spec.variant.uses_hog() || regions.as_ref().is_some_and(|m| m.spec.variant.uses_hog());
    let loaded = load_data(data, &config.extract, hog, exec)?;
    let view = |m: &TrainedModel| model_view(m.spec.variant, &loaded.matrix);

    let infant_manifest = match (infants, &loaded.manifest) {
        (Some(p), _) => Some(load_manifest(&resolve_manifest(p))?),
        (None, m) => m.clone(),
    };
    let infant_of: HashMap<String, String> =
        infant_manifest.iter().flat_map(|m| m.videos.iter().map(|v| (v.video_id.clone(), v.infant_id.clone()))).collect();
    if infant_of.is_empty() {
        log::warn!("no manifest for infant ids; using video ids");
    }

    let on_head = binary.predict_on_head(&view(&binary))?;
    let region_pred = match &regions {
        Some(m) => Some(m.predict_regions(&view(m))?),
        None => None,
    };
    let m = &loaded.matrix;
    let preds: Vec<PredictionRecord> = (0..m.n_rows())
        .map(|r| PredictionRecord {
            video_id: m.group_ids[r].clone(),
            infant_id: infant_of.get(&m.group_ids[r]).cloned().unwrap_or_else(|| m.group_ids[r].clone()),
            frame_index: m.frame_indices[r],
            on_head: on_head[r],
            regions: region_pred.as_ref().map(|p| if on_head[r] { p[r] } else { [false; 5] }),
        })
        .collect();
    let mut prov = provenance("predict", config, &[]);
    prov.push(format!("model {}", binary.label()));
    write_predictions(&preds, out, &prov).with_context(|| format!("writing {}", out.display()))?;
    Ok(preds)
}

pub fn cmd_correlate(config: &RunConfig, predictions: &Path, mullen: &Path, out: &Path) -> anyhow::Result<CorrelationReport> {
    let preds = read_predictions(predictions).with_context(|| format!("reading {}", predictions.display()))?;
    let visits = load_mullen(mullen).with_context(|| format!("reading {}", mullen.display()))?;
    let report = correlate_touch_development(&preds, &visits, config.correlation.cutoff_months);
    write_text(out, &provenance("correlate", config, &[]), &report.render_text())?;
    Ok(report)
}

pub fn cmd_annotate(manifest: &Path, port: u16) -> anyhow::Result<()> {
    let mpath = resolve_manifest(manifest);
    let manifest = load_manifest(&mpath).with_context(|| format!("loading manifest {}", mpath.display()))?;
    tokio::runtime::Builder::new_multi_thread().enable_all().build()?.block_on(crate::server::serve(manifest, port))
}

/// Machine-readable category of a failure, for the exit code and stderr.
pub fn error_category(err: &anyhow::Error) -> &'static str {
    use facetouch::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Ingest(_) => "ingest",
                E::Preprocess(_) => "preprocess",
                E::Imaging(_) => "imaging",
                E::Features(_) => "features",
                E::Reduce(_) => "reduce",
                E::Svm(_) => "svm",
                E::Stats(_) => "stats",
                E::Synth(_) => "synth",
                E::Pipeline(_) => "pipeline",
            };
        }
        if cause.is::<facetouch::ingest::IngestError>() {
            return "ingest";
        }
        if cause.is::<facetouch::synth::SynthError>() {
            return "synth";
        }
        if cause.is::<facetouch::pipeline::PipelineError>() {
            return "pipeline";
        }
        if cause.is::<facetouch::stats::StatsError>() {
            return "stats";
        }
        if cause.is::<toml::de::Error>() {
            return "config";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "usage"
}

/// Process exit code for a category.
pub fn exit_code(category: &str) -> i32 {
    match category {
        "usage" => 2,
        "config" => 3,
        "io" => 4,
        "ingest" => 5,
        "pipeline" => 6,
        _ => 7,
    }
}
