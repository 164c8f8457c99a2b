//! The 170 landmark features per frame and horizontal-flip augmentation.

use thiserror::Error;

use crate::model::{
    build_manifest, FeatureMatrix, HandFrame, Joint, PoseFrame, Side, VideoSequence, ANGLE_JOINTS, BODY_TARGETS,
    FINGERTIPS, HAND_TARGETS, MISSING, NON_HOG_FEATURES, TEMPORAL_JOINTS, TEMPORAL_WINDOWS,
};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("assembled {got} features, manifest has {want}")]
    ManifestMismatch { got: usize, want: usize },
    #[error("{got} face-confidence pairs for {frames} frames")]
    FrameCountMismatch { got: usize, frames: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalWindowSpec {
    pub windows: Vec<usize>,
    pub fps: f64,
}

impl TemporalWindowSpec {
    pub fn new(fps: f64) -> Self {
        Self { windows: TEMPORAL_WINDOWS.to_vec(), fps }
    }
}

type Point = (f64, f64);

fn push_offset(out: &mut Vec<f64>, from: Option<Point>, to: Option<Point>) {
    match (from, to) {
        (Some(a), Some(b)) => {
            let dx = b.0 - a.0;
            let dy = b.1 - a.1;
            out.extend([dx, dy, (dx * dx + dy * dy).sqrt()]);
        }
        _ => out.extend([MISSING; 3]),
    }
}

/// Signed offsets (target − wrist) and distances from each wrist to the six head/neck targets.
pub fn body_distance_features(pose: &PoseFrame) -> Vec<f64> {
    let mut out = Vec::with_capacity(36);
    for wrist in [Joint::LWrist, Joint::RWrist] {
        for target in BODY_TARGETS {
            push_offset(&mut out, pose.pos(wrist), pose.pos(target));
        }
    }
    out
}

/// Angle in degrees at `at` between the bones towards `a` and `b`.
pub fn joint_angle(at: Point, a: Point, b: Point) -> Option<f64> {
    let u = (a.0 - at.0, a.1 - at.1);
    let v = (b.0 - at.0, b.1 - at.1);
    let nu = u.0.hypot(u.1);
    let nv = v.0.hypot(v.1);
    if nu == 0.0 || nv == 0.0 {
        return None;
    }
    // atan2 of cross and dot stays accurate near 0 and 180 degrees
    let cross = u.0 * v.1 - u.1 * v.0;
    let dot = u.0 * v.0 + u.1 * v.1;
    Some(cross.abs().atan2(dot).to_degrees())
}

/// Elbow and shoulder angles (left elbow, right elbow, left shoulder, right shoulder).
pub fn angle_features(pose: &PoseFrame) -> Vec<f64> {
    ANGLE_JOINTS
        .iter()
        .map(|&(at, a, b)| match (pose.pos(at), pose.pos(a), pose.pos(b)) {
            (Some(p), Some(q), Some(r)) => joint_angle(p, q, r).unwrap_or_else(|| {
                log::debug!("zero-length bone at {}; angle left missing", at.name());
                MISSING
            }),
            _ => MISSING,
        })
        .collect()
}

/// Fingertip offsets to both eyes and the nose for each hand (90), then the
/// two hand detection confidences (0 for an absent hand).
pub fn hand_distance_features(hands: &[HandFrame], pose: &PoseFrame) -> Vec<f64> {
    let mut out = Vec::with_capacity(92);
    for side in [Side::Left, Side::Right] {
        let hand = hands.iter().find(|h| h.side == side);
        for tip in FINGERTIPS {
            let tip_pos = hand.and_then(|h| h.landmarks.get(tip)).and_then(|k| k.pos());
            for target in HAND_TARGETS {
                push_offset(&mut out, tip_pos, pose.pos(target));
            }
        }
    }
    for side in [Side::Left, Side::Right] {
        out.push(hands.iter().find(|h| h.side == side).map_or(0.0, |h| h.detection_confidence));
    }
    out
}

/// Displacement, speed and acceleration of one track over each window.
/// Output per frame is `[disp w..., speed w..., accel w...]`.
pub fn track_dynamics(track: &[Option<Point>], spec: &TemporalWindowSpec) -> Vec<Vec<f64>> {
    let n = track.len();
    let k = spec.windows.len();
    let mut out = vec![vec![MISSING; 3 * k]; n];
    for (wi, &w) in spec.windows.iter().enumerate() {
        let rate = spec.fps / w as f64;
        let disp: Vec<Option<f64>> = (0..n)
            .map(|t| {
                let (a, b) = (track.get(t.checked_sub(w)?)?.as_ref()?, track[t].as_ref()?);
                Some((b.0 - a.0).hypot(b.1 - a.1))
            })
            .collect();
        for t in 0..n {
            if let Some(d) = disp[t] {
                out[t][wi] = d;
                out[t][k + wi] = d * rate;
            }
            if let (Some(now), Some(prev)) = (disp[t], t.checked_sub(w).and_then(|p| disp[p])) {
                out[t][2 * k + wi] = (now * rate - prev * rate) * rate;
            }
        }
    }
    out
}

/// Temporal features of the wrists and elbows for every frame (36 per frame).
pub fn temporal_features(video: &VideoSequence, spec: &TemporalWindowSpec) -> Vec<Vec<f64>> {
    let n = video.frames.len();
    let mut out = vec![Vec::with_capacity(36); n];
    for joint in TEMPORAL_JOINTS {
        let track: Vec<Option<Point>> = video.frames.iter().map(|f| f.pose.pos(joint)).collect();
        for (t, dyn_row) in track_dynamics(&track, spec).into_iter().enumerate() {
            out[t].extend(dyn_row);
        }
    }
    out
}

/// Manifest-ordered 170-column matrix for one preprocessed video.
/// `face_conf` holds the (upper, lower) face-region confidence per frame.
pub fn assemble_frame_features(
    video: &VideoSequence,
    face_conf: &[(f64, f64)],
    spec: &TemporalWindowSpec,
) -> Result<FeatureMatrix, FeatureError> {
    if face_conf.len() != video.frames.len() {
        return Err(FeatureError::FrameCountMismatch { got: face_conf.len(), frames: video.frames.len() });
    }
    let temporal = temporal_features(video, spec);
    let mut m = FeatureMatrix::new(build_manifest(false));
    for ((f, temp), &(upper, lower)) in video.frames.iter().zip(temporal).zip(face_conf) {
        let mut row = Vec::with_capacity(NON_HOG_FEATURES);
        row.extend(body_distance_features(&f.pose));
        row.extend(angle_features(&f.pose));
        row.extend(hand_distance_features(&f.hands, &f.pose));
        row.extend(temp);
        row.extend([upper, lower]);
        if row.len() != m.n_cols() {
            return Err(FeatureError::ManifestMismatch { got: row.len(), want: m.n_cols() });
        }
        m.push_row(&video.video_id, f.frame_index, row, None);
    }
    Ok(m)
}

/// Returns the original rows followed by their mirror images. Mirrored rows
/// permute features by their left/right partner (HOG dimensions by the
/// flip permutation) and negate x-signed features; labels are copied.
pub fn flip_augment(matrix: &FeatureMatrix) -> FeatureMatrix {
    let mut out = matrix.clone();
    for r in 0..matrix.n_rows() {
        out.rows.push(matrix.manifest.mirror_row(&matrix.rows[r]));
        out.group_ids.push(matrix.group_ids[r].clone());
        out.frame_indices.push(matrix.frame_indices[r]);
        out.labels.push(matrix.labels[r].clone());
    }
    out
}
