//! Raw landmark stream to cleaned per-frame feature matrix.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::features::{assemble_frame_features, TemporalWindowSpec};
use crate::imaging::{estimate_face_region, face_hog_features, face_region_confidences, HogConfig};
use crate::ingest::{load_labels, load_pgm, load_video, DatasetManifest, LoadOptions};
use crate::model::{build_manifest, FeatureMatrix, LabelRecord, VideoSequence, MISSING};
use crate::preprocess::{clean_features, normalize_video, smooth_and_interpolate, NormalizationParams};
use crate::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractConfig {
    pub normalization: NormalizationParams,
    pub hog: HogConfig,
    /// Append the 540 HOG columns.
    pub include_hog: bool,
    pub strict_labels: bool,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self { normalization: NormalizationParams::default(), hog: HogConfig::default(), include_hog: false, strict_labels: true }
    }
}

/// Features of one raw (pixel-space) video. Rows follow the frames; rows
/// whose frame has a label carry it.
pub fn extract_video(raw: &VideoSequence, labels: &[LabelRecord], config: &ExtractConfig) -> Result<FeatureMatrix, Error> {
    let normalized = normalize_video(raw, &config.normalization)?;
    let smoothed = smooth_and_interpolate(&normalized, &config.normalization);
    let face_conf: Vec<(f64, f64)> = raw.frames.iter().map(|f| face_region_confidences(f.face.as_ref())).collect();
    let mut m = assemble_frame_features(&smoothed, &face_conf, &TemporalWindowSpec::new(raw.fps))?;

    if config.include_hog {
        let hog_len = config.hog.total_len();
        let appearance = match estimate_face_region(raw) {
            Ok(regions) => face_hog_features(raw, &regions, &config.hog, |p| load_pgm(p).map_err(Error::from))?
                .into_iter()
                .map(|a| a.hog)
                .collect(),
            Err(e) => {
                log::warn!("{e}; HOG columns left missing");
                vec![None; raw.frames.len()]
            }
        };
        for (row, hog) in m.rows.iter_mut().zip(appearance) {
            match hog {
                Some(v) => row.extend(v),
                None => row.extend(std::iter::repeat_n(MISSING, hog_len)),
            }
        }
        m.manifest = build_manifest(true);
    }

    let mut m = clean_features(&m);
    let by_frame: HashMap<usize, &LabelRecord> =
        labels.iter().filter(|l| l.video_id == raw.video_id).map(|l| (l.frame_index, l)).collect();
    m.labels = m.frame_indices.iter().map(|i| by_frame.get(i).map(|l| (*l).clone())).collect();
    Ok(m)
}

/// Loads and extracts every video of a manifest, concatenated in manifest order.
pub fn extract_dataset(manifest: &DatasetManifest, config: &ExtractConfig, exec: Execution) -> Result<FeatureMatrix, Error> {
    let options = LoadOptions { strict: config.strict_labels };
    let parts = exec.try_map(&manifest.videos, |entry| {
        let load = load_video(entry, LoadOptions::default())?;
        let labels = match &entry.labels_path {
            Some(p) => load_labels(p, options)?,
            None => Vec::new(),
        };
        extract_video(&load.video, &labels, config)
    })?;
    let mut out = FeatureMatrix::new(build_manifest(config.include_hog));
    for p in &parts {
        out.extend(p);
    }
    Ok(out)
}
