//! Per-video landmark normalization, smoothing and gap filling, plus
//! outlier cleanup and mean imputation of computed features.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{is_missing, FeatureFamily, FeatureMatrix, Joint, Keypoint2D, VideoSequence};

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("video {0} has no frame with both Neck and MidHip")]
    NoUsableTrunk(String),
    #[error("video {0} has no frames")]
    EmptyVideo(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleDefinition {
    /// Neck to MidHip distance.
    TrunkLength,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalizationParams {
    pub origin_joint: Joint,
    pub scale_definition: ScaleDefinition,
    pub low_confidence_threshold: f64,
    pub median_window: usize,
    pub mean_window: usize,
    /// Longest gap (in frames) that is filled; `None` means one second of frames.
    pub max_gap_frames: Option<usize>,
}

impl Default for NormalizationParams {
    fn default() -> Self {
        Self {
            origin_joint: Joint::Neck,
            scale_definition: ScaleDefinition::TrunkLength,
            low_confidence_threshold: 0.1,
            median_window: 5,
            mean_window: 3,
            max_gap_frames: None,
        }
    }
}

impl NormalizationParams {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        for (name, w) in [("median_window", self.median_window), ("mean_window", self.mean_window)] {
            if w == 0 || w % 2 == 0 {
                return Err(PreprocessError::InvalidParams(format!("{name} must be odd and >= 1, got {w}")));
            }
        }
        if !(0.0..1.0).contains(&self.low_confidence_threshold) {
            return Err(PreprocessError::InvalidParams(format!(
                "confidence threshold {} outside [0,1)",
                self.low_confidence_threshold
            )));
        }
        Ok(())
    }

    pub fn max_gap(&self, fps: f64) -> usize {
        self.max_gap_frames.unwrap_or_else(|| fps.round().max(0.0) as usize)
    }
}

fn median_of(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Translates every landmark so the origin joint (Neck) sits at zero and
/// divides by trunk length. Keypoints below the confidence threshold become
/// missing first.
pub fn normalize_video(video: &VideoSequence, params: &NormalizationParams) -> Result<VideoSequence, PreprocessError> {
    params.validate()?;
    if video.frames.is_empty() {
        return Err(PreprocessError::EmptyVideo(video.video_id.clone()));
    }
    let threshold = params.low_confidence_threshold;
    let gate = |k: &Keypoint2D| if k.present && k.confidence >= threshold { *k } else { Keypoint2D::missing() };

    let mut out = video.clone();
    for f in &mut out.frames {
        for k in &mut f.pose.keypoints {
            *k = gate(k);
        }
        if let Some(face) = &mut f.face {
            for k in &mut face.landmarks {
                *k = gate(k);
            }
        }
        for h in &mut f.hands {
            for k in &mut h.landmarks {
                *k = gate(k);
            }
        }
    }

    let origin = params.origin_joint;
    let trunks: Vec<Option<f64>> = out
        .frames
        .iter()
        .map(|f| {
            let (nx, ny) = f.pose.pos(Joint::Neck)?;
            let (hx, hy) = f.pose.pos(Joint::MidHip)?;
            let t = ((nx - hx).powi(2) + (ny - hy).powi(2)).sqrt();
            (t > 0.0).then_some(t)
        })
        .collect();
    let mut known: Vec<f64> = trunks.iter().flatten().copied().collect();
    if known.is_empty() {
        return Err(PreprocessError::NoUsableTrunk(video.video_id.clone()));
    }
    let median_trunk = median_of(&mut known);

    let first_origin = out.frames.iter().find_map(|f| f.pose.pos(origin));
    let mut last_origin = first_origin.unwrap_or((0.0, 0.0));
    for (f, trunk) in out.frames.iter_mut().zip(&trunks) {
        if let Some(p) = f.pose.pos(origin) {
            last_origin = p;
        }
        let (ox, oy) = last_origin;
        let scale = trunk.unwrap_or(median_trunk);
        let apply = |k: &mut Keypoint2D| {
            if k.present {
                k.x = (k.x - ox) / scale;
                k.y = (k.y - oy) / scale;
            }
        };
        f.pose.keypoints.iter_mut().for_each(apply);
        if let Some(face) = &mut f.face {
            face.landmarks.iter_mut().for_each(apply);
        }
        for h in &mut f.hands {
            h.landmarks.iter_mut().for_each(apply);
        }
    }
    Ok(out)
}

/// Moving filter over present samples only; missing samples stay missing.
fn window_filter(values: &[Option<f64>], window: usize, reduce: impl Fn(&mut Vec<f64>) -> f64) -> Vec<Option<f64>> {
    let half = window / 2;
    let mut buf = Vec::with_capacity(window);
    (0..values.len())
        .map(|t| {
            values[t]?;
            buf.clear();
            let lo = t.saturating_sub(half);
            let hi = (t + half).min(values.len() - 1);
            buf.extend(values[lo..=hi].iter().flatten());
            Some(reduce(&mut buf))
        })
        .collect()
}

pub fn moving_median(values: &[Option<f64>], window: usize) -> Vec<Option<f64>> {
    window_filter(values, window, |b| median_of(b))
}

pub fn moving_mean(values: &[Option<f64>], window: usize) -> Vec<Option<f64>> {
    window_filter(values, window, |b| b.iter().sum::<f64>() / b.len() as f64)
}

/// Fills runs of missing samples. Interior gaps are interpolated linearly
/// over `positions`; edge gaps copy the nearest value. With `max_gap`, only
/// runs of at most that many samples are filled.
pub fn fill_gaps(values: &mut [Option<f64>], positions: &[f64], max_gap: Option<usize>) {
    let n = values.len();
    let present: Vec<usize> = (0..n).filter(|&i| values[i].is_some()).collect();
    let Some((&first, &last)) = present.first().zip(present.last()) else { return };
    let allowed = |len: usize| max_gap.is_none_or(|g| len <= g);
    if allowed(first) {
        let v = values[first];
        values[..first].iter_mut().for_each(|x| *x = v);
    }
    if allowed(n - 1 - last) {
        let v = values[last];
        values[last + 1..].iter_mut().for_each(|x| *x = v);
    }
    for pair in present.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let gap = b - a - 1;
        if gap == 0 || !allowed(gap) {
            continue;
        }
        let (va, vb) = (values[a].expect("present"), values[b].expect("present"));
        let (pa, pb) = (positions[a], positions[b]);
        for i in a + 1..b {
            let t = (positions[i] - pa) / (pb - pa);
            values[i] = Some(va + t * (vb - va));
        }
    }
}

/// Median then mean smoothing of every pose coordinate channel, followed by
/// gap filling up to `max_gap` frames.
pub fn smooth_and_interpolate(video: &VideoSequence, params: &NormalizationParams) -> VideoSequence {
    let mut out = video.clone();
    let positions: Vec<f64> = video.frames.iter().map(|f| f.frame_index as f64).collect();
    let max_gap = Some(params.max_gap(video.fps));
    for joint in Joint::ALL {
        let channel = |sel: fn(&Keypoint2D) -> f64| -> Vec<Option<f64>> {
            video.frames.iter().map(|f| f.pose.get(joint).present.then(|| sel(f.pose.get(joint)))).collect()
        };
        let mut chans = [channel(|k| k.x), channel(|k| k.y), channel(|k| k.confidence)];
        for c in chans.iter_mut().take(2) {
            *c = moving_mean(&moving_median(c, params.median_window), params.mean_window);
        }
        for c in &mut chans {
            fill_gaps(c, &positions, max_gap);
        }
        for (t, f) in out.frames.iter_mut().enumerate() {
            *f.pose.get_mut(joint) = match (chans[0][t], chans[1][t], chans[2][t]) {
                (Some(x), Some(y), Some(c)) => Keypoint2D::new(x, y, c),
                _ => Keypoint2D::missing(),
            };
        }
    }
    out
}

/// Type-7 (linear) sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn cleanup_exempt(family: FeatureFamily) -> bool {
    matches!(family, FeatureFamily::Hog | FeatureFamily::HandConfidence | FeatureFamily::FaceRegionConfidence)
}

/// Row indices grouped per video, in first-appearance order.
pub fn rows_by_video(matrix: &FeatureMatrix) -> Vec<Vec<usize>> {
    let mut order: Vec<Vec<usize>> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    for (r, g) in matrix.group_ids.iter().enumerate() {
        let k = *slot.entry(g.as_str()).or_insert_with(|| {
            order.push(Vec::new());
            order.len() - 1
        });
        order[k].push(r);
    }
    order
}

/// Per video and per geometric/temporal feature: values further than
/// 3·IQR from the median become missing, then every gap is interpolated
/// within the video. When IQR is zero a value is an outlier only if it
/// differs from the median by more than `1e-6·max(1, |median|)`.
pub fn clean_features(matrix: &FeatureMatrix) -> FeatureMatrix {
    let mut out = matrix.clone();
    let groups = rows_by_video(matrix);
    for (c, entry) in matrix.manifest.entries.iter().enumerate() {
        if cleanup_exempt(entry.family) {
            continue;
        }
        for rows in &groups {
            let mut col: Vec<Option<f64>> =
                rows.iter().map(|&r| Some(matrix.rows[r][c]).filter(|v| !is_missing(*v))).collect();
            let mut sorted: Vec<f64> = col.iter().flatten().copied().collect();
            if sorted.is_empty() {
                continue;
            }
            sorted.sort_by(|a, b| a.total_cmp(b));
            let med = quantile_sorted(&sorted, 0.5);
            let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
            let limit = if iqr > 0.0 { 3.0 * iqr } else { 1e-6 * med.abs().max(1.0) };
            for v in col.iter_mut() {
                if v.is_some_and(|x| (x - med).abs() > limit) {
                    *v = None;
                }
            }
            let positions: Vec<f64> = rows.iter().map(|&r| matrix.frame_indices[r] as f64).collect();
            fill_gaps(&mut col, &positions, None);
            for (&r, v) in rows.iter().zip(&col) {
                out.rows[r][c] = v.unwrap_or(f64::NAN);
            }
        }
    }
    out
}

/// Per-feature training means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputationStats {
    pub means: Vec<f64>,
    /// Features with no observed training value (imputed as 0).
    pub never_observed: Vec<usize>,
}

pub fn fit_imputation(train: &FeatureMatrix) -> ImputationStats {
    let d = train.n_cols();
    let mut sums = vec![0.0; d];
    let mut counts = vec![0usize; d];
    for row in &train.rows {
        for (c, &v) in row.iter().enumerate() {
            if !is_missing(v) {
                sums[c] += v;
                counts[c] += 1;
            }
        }
    }
    let mut never_observed = Vec::new();
    let means = (0..d)
        .map(|c| {
            if counts[c] == 0 {
                never_observed.push(c);
                0.0
            } else {
                sums[c] / counts[c] as f64
            }
        })
        .collect();
    if !never_observed.is_empty() {
        log::warn!("{} features never observed in training data; imputing 0", never_observed.len());
    }
    ImputationStats { means, never_observed }
}

pub fn apply_imputation(matrix: &FeatureMatrix, stats: &ImputationStats) -> FeatureMatrix {
    let mut out = matrix.clone();
    for row in &mut out.rows {
        for (v, &m) in row.iter_mut().zip(&stats.means) {
            if is_missing(*v) {
                *v = m;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_manifest, FrameRecord, PoseFrame, MISSING};
    use proptest::prelude::*;

    fn frame(idx: usize, pts: &[(Joint, f64, f64, f64)]) -> FrameRecord {
        let mut pose = PoseFrame::default();
        for &(j, x, y, c) in pts {
            *pose.get_mut(j) = Keypoint2D::new(x, y, c);
        }
        FrameRecord { frame_index: idx, timestamp_s: idx as f64 / 10.0, pose, face: None, hands: vec![], image_ref: None }
    }

    fn video(frames: Vec<FrameRecord>) -> VideoSequence {
        VideoSequence { video_id: "v".into(), infant_id: "i".into(), fps: 10.0, frames }
    }

    #[test]
    fn normalizes_to_trunk_units() {
        let v = video(vec![frame(
            0,
            &[(Joint::Neck, 100.0, 100.0, 1.0), (Joint::MidHip, 100.0, 200.0, 1.0), (Joint::RWrist, 150.0, 100.0, 1.0)],
        )]);
        let n = normalize_video(&v, &NormalizationParams::default()).unwrap();
        let w = n.frames[0].pose.get(Joint::RWrist);
        assert!((w.x - 0.5).abs() < 1e-15 && w.y.abs() < 1e-15);
    }

    #[test]
    fn low_confidence_becomes_missing() {
        let v = video(vec![frame(
            0,
            &[(Joint::Neck, 0.0, 0.0, 1.0), (Joint::MidHip, 0.0, 1.0, 1.0), (Joint::Nose, 0.0, -1.0, 0.05)],
        )]);
        let n = normalize_video(&v, &NormalizationParams::default()).unwrap();
        assert!(!n.frames[0].pose.get(Joint::Nose).present);
    }

    #[test]
    fn no_trunk_is_an_error() {
        let v = video(vec![frame(0, &[(Joint::Neck, 0.0, 0.0, 1.0)]), frame(1, &[(Joint::Neck, 1.0, 0.0, 1.0)])]);
        assert_eq!(
            normalize_video(&v, &NormalizationParams::default()).unwrap_err(),
            PreprocessError::NoUsableTrunk("v".into())
        );
    }

    #[test]
    fn missing_neck_reuses_last_known_and_median_trunk() {
        let v = video(vec![
            frame(0, &[(Joint::Neck, 10.0, 10.0, 1.0), (Joint::MidHip, 10.0, 30.0, 1.0)]),
            frame(1, &[(Joint::MidHip, 10.0, 30.0, 1.0), (Joint::Nose, 10.0, 0.0, 1.0)]),
        ]);
        let n = normalize_video(&v, &NormalizationParams::default()).unwrap();
        let nose = n.frames[1].pose.get(Joint::Nose);
        assert!((nose.y + 0.5).abs() < 1e-15);
    }

    #[test]
    fn median_removes_spike() {
        let c: Vec<Option<f64>> = [0.0, 0.0, 10.0, 0.0, 0.0].iter().map(|&v| Some(v)).collect();
        assert_eq!(moving_median(&c, 3)[2], Some(0.0));
    }

    #[test]
    fn interpolation_and_gap_limit() {
        let mut c = vec![Some(1.0), None, Some(3.0)];
        fill_gaps(&mut c, &[0.0, 1.0, 2.0], Some(1));
        assert_eq!(c[1], Some(2.0));

        let mut long = vec![Some(0.0), None, None, None, Some(4.0)];
        fill_gaps(&mut long, &[0.0, 1.0, 2.0, 3.0, 4.0], Some(2));
        assert_eq!(long[2], None);

        let mut edges = vec![None, Some(5.0), None];
        fill_gaps(&mut edges, &[0.0, 1.0, 2.0], Some(1));
        assert_eq!(edges, vec![Some(5.0); 3]);
    }

    #[test]
    fn smoothing_respects_max_gap() {
        let pts = |x: f64| [(Joint::Neck, x, 0.0, 1.0)];
        let mut frames: Vec<FrameRecord> = (0..20).map(|i| frame(i, &pts(i as f64))).collect();
        for f in frames.iter_mut().skip(5).take(11) {
            *f.pose.get_mut(Joint::Neck) = Keypoint2D::missing();
        }
        let v = video(frames);
        // fps 10 -> max gap 10, the 11-frame gap stays open
        let s = smooth_and_interpolate(&v, &NormalizationParams::default());
        assert!(!s.frames[10].pose.get(Joint::Neck).present);
        let params = NormalizationParams { max_gap_frames: Some(11), ..Default::default() };
        let s = smooth_and_interpolate(&v, &params);
        assert!(s.frames[10].pose.get(Joint::Neck).present);
    }

    fn column_matrix(values: &[f64]) -> FeatureMatrix {
        let mut m = FeatureMatrix::new(build_manifest(false));
        for (i, &v) in values.iter().enumerate() {
            let mut row = vec![0.25; 170];
            row[0] = v;
            m.push_row("v", i, row, None);
        }
        m
    }

    #[test]
    fn outlier_blanked_and_interpolated() {
        let out = clean_features(&column_matrix(&[1.0, 1.0, 1.0, 100.0, 1.0]));
        let col: Vec<f64> = out.rows.iter().map(|r| r[0]).collect();
        assert_eq!(col, vec![1.0; 5]);
    }

    #[test]
    fn constant_and_empty_columns() {
        let out = clean_features(&column_matrix(&[2.0; 6]));
        assert!(out.rows.iter().all(|r| r[0] == 2.0));
        let out = clean_features(&column_matrix(&[MISSING; 4]));
        assert!(out.rows.iter().all(|r| r[0].is_nan()));
    }

    #[test]
    fn cleanup_keeps_inliers_with_spread() {
        let vals = [0.1, 0.3, 0.2, 0.5, 0.4, 0.35, 0.15, 9.0];
        let out = clean_features(&column_matrix(&vals));
        let col: Vec<f64> = out.rows.iter().map(|r| r[0]).collect();
        assert_eq!(&col[..7], &vals[..7]);
        assert_eq!(col[7], 0.15, "trailing outlier takes the nearest value");
    }

    #[test]
    fn imputation_rules() {
        let mut train = FeatureMatrix::new(build_manifest(false));
        let mut a = vec![1.0; 170];
        let mut b = vec![1.0; 170];
        a[0] = 2.0;
        b[0] = 4.0;
        a[1] = MISSING;
        b[1] = MISSING;
        train.push_row("t", 0, a, None);
        train.push_row("t", 1, b, None);
        let stats = fit_imputation(&train);
        assert_eq!(stats.means[0], 3.0);
        assert_eq!(stats.never_observed, vec![1]);

        let mut test = FeatureMatrix::new(build_manifest(false));
        let mut row = vec![5.0; 170];
        row[0] = MISSING;
        row[1] = MISSING;
        test.push_row("u", 0, row, None);
        let filled = apply_imputation(&test, &stats);
        assert_eq!(filled.rows[0][0], 3.0);
        assert_eq!(filled.rows[0][1], 0.0);
        assert_eq!(filled.missing_count(), 0);
        assert_eq!(apply_imputation(&filled, &stats), filled);
    }

    fn raw_video(points: &[(f64, f64)]) -> VideoSequence {
        let joints = [Joint::Neck, Joint::MidHip, Joint::RWrist, Joint::LElbow, Joint::Nose];
        let frames = (0..points.len() / joints.len())
            .map(|i| {
                let pts: Vec<_> = joints
                    .iter()
                    .enumerate()
                    .map(|(k, &j)| {
                        let (x, y) = points[i * joints.len() + k];
                        (j, x, y, 0.9)
                    })
                    .collect();
                frame(i, &pts)
            })
            .collect();
        video(frames)
    }

    proptest! {
        #[test]
        fn normalization_is_scale_and_translation_invariant(
            pts in prop::collection::vec((-200.0f64..200.0, -200.0f64..200.0), 15..40),
            s in 0.1f64..20.0,
            dx in -500.0f64..500.0,
            dy in -500.0f64..500.0,
        ) {
            let n = pts.len() / 5 * 5;
            let mut pts = pts[..n].to_vec();
            // keep a nondegenerate trunk
            for i in 0..n / 5 {
                pts[i * 5 + 1] = (pts[i * 5].0, pts[i * 5].1 + 50.0 + i as f64);
            }
            let v = raw_video(&pts);
            let scaled: Vec<_> = pts.iter().map(|&(x, y)| (x * s, y * s)).collect();
            let shifted: Vec<_> = pts.iter().map(|&(x, y)| (x + dx, y + dy)).collect();
            let p = NormalizationParams::default();
            let base = normalize_video(&v, &p).unwrap();
            for other in [raw_video(&scaled), raw_video(&shifted)] {
                let o = normalize_video(&other, &p).unwrap();
                for (fa, fb) in base.frames.iter().zip(&o.frames) {
                    for (a, b) in fa.pose.keypoints.iter().zip(&fb.pose.keypoints) {
                        prop_assert_eq!(a.present, b.present);
                        prop_assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
                    }
                }
            }
        }

        #[test]
        fn smoothing_stays_in_window_envelope(
            raw in prop::collection::vec(prop::option::weighted(0.8, -5.0f64..5.0), 3..60),
        ) {
            let p = NormalizationParams::default();
            let sm = moving_mean(&moving_median(&raw, p.median_window), p.mean_window);
            let span = p.median_window / 2 + p.mean_window / 2;
            for t in 0..raw.len() {
                if let Some(v) = sm[t] {
                    let lo = t.saturating_sub(span);
                    let hi = (t + span).min(raw.len() - 1);
                    let win: Vec<f64> = raw[lo..=hi].iter().flatten().copied().collect();
                    let mn = win.iter().cloned().fold(f64::INFINITY, f64::min);
                    let mx = win.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(v >= mn - 1e-12 && v <= mx + 1e-12);
                }
            }
        }
    }
}
