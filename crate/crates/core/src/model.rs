//! Shared domain types and the canonical feature manifest.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::imaging::{HogConfig, HogRegion};

/// The 13-joint body vocabulary of the pose stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Joint {
    Nose,
    Neck,
    RShoulder,
    RElbow,
    RWrist,
    LShoulder,
    LElbow,
    LWrist,
    MidHip,
    REye,
    LEye,
    REar,
    LEar,
}

impl Joint {
    pub const ALL: [Joint; 13] = [
        Joint::Nose,
        Joint::Neck,
        Joint::RShoulder,
        Joint::RElbow,
        Joint::RWrist,
        Joint::LShoulder,
        Joint::LElbow,
        Joint::LWrist,
        Joint::MidHip,
        Joint::REye,
        Joint::LEye,
        Joint::REar,
        Joint::LEar,
    ];

    pub const HEAD: [Joint; 5] = [Joint::Nose, Joint::LEye, Joint::REye, Joint::LEar, Joint::REar];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Joint::Nose => "Nose",
            Joint::Neck => "Neck",
            Joint::RShoulder => "RShoulder",
            Joint::RElbow => "RElbow",
            Joint::RWrist => "RWrist",
            Joint::LShoulder => "LShoulder",
            Joint::LElbow => "LElbow",
            Joint::LWrist => "LWrist",
            Joint::MidHip => "MidHip",
            Joint::REye => "REye",
            Joint::LEye => "LEye",
            Joint::REar => "REar",
            Joint::LEar => "LEar",
        }
    }

    pub fn from_name(name: &str) -> Option<Joint> {
        Joint::ALL.iter().copied().find(|j| j.name() == name)
    }

    /// Left/right counterpart; midline joints map to themselves.
    pub fn mirror(self) -> Joint {
        match self {
            Joint::RShoulder => Joint::LShoulder,
            Joint::LShoulder => Joint::RShoulder,
            Joint::RElbow => Joint::LElbow,
            Joint::LElbow => Joint::RElbow,
            Joint::RWrist => Joint::LWrist,
            Joint::LWrist => Joint::RWrist,
            Joint::REye => Joint::LEye,
            Joint::LEye => Joint::REye,
            Joint::REar => Joint::LEar,
            Joint::LEar => Joint::REar,
            other => other,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint2D {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
    pub present: bool,
}

impl Keypoint2D {
    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Self { x, y, confidence, present: true }
    }

    pub fn missing() -> Self {
        Self { x: 0.0, y: 0.0, confidence: 0.0, present: false }
    }

    /// Position when present.
    pub fn pos(&self) -> Option<(f64, f64)> {
        self.present.then_some((self.x, self.y))
    }
}

impl Default for Keypoint2D {
    fn default() -> Self {
        Self::missing()
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseFrame {
    pub keypoints: [Keypoint2D; 13],
}

impl PoseFrame {
    pub fn get(&self, joint: Joint) -> &Keypoint2D {
        &self.keypoints[joint.index()]
    }

    pub fn get_mut(&mut self, joint: Joint) -> &mut Keypoint2D {
        &mut self.keypoints[joint.index()]
    }

    pub fn pos(&self, joint: Joint) -> Option<(f64, f64)> {
        self.get(joint).pos()
    }
}

pub const FACE_LANDMARKS: usize = 68;
pub const HAND_LANDMARKS: usize = 21;
/// Fingertip indices (thumb, index, middle, ring, pinky) of the 21-point hand.
pub const FINGERTIPS: [usize; 5] = [4, 8, 12, 16, 20];
pub const FINGER_NAMES: [&str; 5] = ["thumb", "index", "middle", "ring", "pinky"];
/// Eye landmarks 36..=47 of the 68-point face.
pub const FACE_EYES: std::ops::Range<usize> = 36..48;
/// Mouth landmarks 48..=67 of the 68-point face.
pub const FACE_MOUTH: std::ops::Range<usize> = 48..68;

/// Mirror permutation of the standard 68-point face ordering.
pub fn face_mirror_index(i: usize) -> usize {
    const PAIRS: [(usize, usize); 29] = [
        (17, 26),
        (18, 25),
        (19, 24),
        (20, 23),
        (21, 22),
        (31, 35),
        (32, 34),
        (36, 45),
        (37, 44),
        (38, 43),
        (39, 42),
        (40, 47),
        (41, 46),
        (48, 54),
        (49, 53),
        (50, 52),
        (55, 59),
        (56, 58),
        (60, 64),
        (61, 63),
        (65, 67),
        (0, 16),
        (1, 15),
        (2, 14),
        (3, 13),
        (4, 12),
        (5, 11),
        (6, 10),
        (7, 9),
    ];
    for &(a, b) in &PAIRS {
        if i == a {
            return b;
        }
        if i == b {
            return a;
        }
    }
    i
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LandmarkSpace {
    Crop,
    FullFrame,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceFrame {
    pub landmarks: Vec<Keypoint2D>,
    pub source_space: LandmarkSpace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn mirror(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandFrame {
    pub side: Side,
    pub landmarks: Vec<Keypoint2D>,
    pub detection_confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_index: usize,
    pub timestamp_s: f64,
    pub pose: PoseFrame,
    pub face: Option<FaceFrame>,
    pub hands: Vec<HandFrame>,
    pub image_ref: Option<std::path::PathBuf>,
}

impl FrameRecord {
    pub fn hand(&self, side: Side) -> Option<&HandFrame> {
        self.hands.iter().find(|h| h.side == side)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoSequence {
    pub video_id: String,
    pub infant_id: String,
    pub fps: f64,
    pub frames: Vec<FrameRecord>,
}

impl VideoSequence {
    /// Horizontal mirror of the whole stream: x becomes `width - x` and every
    /// left/right landmark identity is swapped, as an estimator would report
    /// on the flipped footage.
    pub fn mirrored(&self, width: f64) -> VideoSequence {
        let flip = |k: &Keypoint2D| Keypoint2D { x: width - k.x, ..*k };
        let frames = self
            .frames
            .iter()
            .map(|f| {
                let mut pose = PoseFrame::default();
                for j in Joint::ALL {
                    *pose.get_mut(j.mirror()) = flip(f.pose.get(j));
                }
                let face = f.face.as_ref().map(|face| {
                    let mut lm = vec![Keypoint2D::missing(); face.landmarks.len()];
                    for (i, k) in face.landmarks.iter().enumerate() {
                        lm[face_mirror_index(i)] = flip(k);
                    }
                    FaceFrame { landmarks: lm, source_space: face.source_space }
                });
                let mut hands: Vec<HandFrame> = f
                    .hands
                    .iter()
                    .map(|h| HandFrame {
                        side: h.side.mirror(),
                        landmarks: h.landmarks.iter().map(flip).collect(),
                        detection_confidence: h.detection_confidence,
                    })
                    .collect();
                hands.sort_by_key(|h| h.side == Side::Right);
                FrameRecord {
                    frame_index: f.frame_index,
                    timestamp_s: f.timestamp_s,
                    pose,
                    face,
                    hands,
                    image_ref: f.image_ref.clone(),
                }
            })
            .collect();
        VideoSequence {
            video_id: self.video_id.clone(),
            infant_id: self.infant_id.clone(),
            fps: self.fps,
            frames,
        }
    }
}

/// The five non-exclusive touch locations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Eyes,
    Ears,
    Nose,
    Mouth,
    Cheeks,
}

impl Region {
    pub const ALL: [Region; 5] = [Region::Eyes, Region::Ears, Region::Nose, Region::Mouth, Region::Cheeks];

    pub fn name(self) -> &'static str {
        match self {
            Region::Eyes => "eyes",
            Region::Ears => "ears",
            Region::Nose => "nose",
            Region::Mouth => "mouth",
            Region::Cheeks => "cheeks",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub video_id: String,
    pub frame_index: usize,
    pub on_head: bool,
    /// Flags in [`Region::ALL`] order.
    pub regions: [bool; 5],
}

impl LabelRecord {
    /// Holds iff no region is flagged without a touch.
    pub fn is_consistent(&self) -> bool {
        self.on_head || self.regions.iter().all(|r| !r)
    }

    /// Region flags packed as a 5-bit code, eyes in bit 0.
    pub fn region_code(&self) -> u8 {
        self.regions
            .iter()
            .enumerate()
            .fold(0u8, |acc, (i, &r)| acc | ((r as u8) << i))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureFamily {
    BodyDistance,
    Angle,
    HandDistance,
    HandConfidence,
    Temporal,
    FaceRegionConfidence,
    Hog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub name: String,
    pub family: FeatureFamily,
    /// Negated under horizontal flip.
    pub signed_x: bool,
    pub mirror_partner: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub entries: Vec<FeatureEntry>,
}

pub const NON_HOG_FEATURES: usize = 170;
pub const BODY_TARGETS: [Joint; 6] = [Joint::Nose, Joint::Neck, Joint::LEye, Joint::REye, Joint::LEar, Joint::REar];
pub const HAND_TARGETS: [Joint; 3] = [Joint::LEye, Joint::REye, Joint::Nose];
pub const TEMPORAL_JOINTS: [Joint; 4] = [Joint::LWrist, Joint::RWrist, Joint::LElbow, Joint::RElbow];
pub const TEMPORAL_WINDOWS: [usize; 3] = [1, 3, 5];
/// (joint, first bone end, second bone end) for the four angle features.
pub const ANGLE_JOINTS: [(Joint, Joint, Joint); 4] = [
    (Joint::LElbow, Joint::LShoulder, Joint::LWrist),
    (Joint::RElbow, Joint::RShoulder, Joint::RWrist),
    (Joint::LShoulder, Joint::Neck, Joint::LElbow),
    (Joint::RShoulder, Joint::Neck, Joint::RElbow),
];

fn joint_tag(j: Joint) -> &'static str {
    match j {
        Joint::Nose => "nose",
        Joint::Neck => "neck",
        Joint::LEye => "eyeL",
        Joint::REye => "eyeR",
        Joint::LEar => "earL",
        Joint::REar => "earR",
        Joint::LWrist => "wristL",
        Joint::RWrist => "wristR",
        Joint::LElbow => "elbowL",
        Joint::RElbow => "elbowR",
        Joint::LShoulder => "shoulderL",
        Joint::RShoulder => "shoulderR",
        Joint::MidHip => "midhip",
    }
}

fn side_tag(s: Side) -> &'static str {
    match s {
        Side::Left => "L",
        Side::Right => "R",
    }
}

const AXES: [&str; 3] = ["x", "y", "e"];

/// Builds the canonical ordered manifest: 170 landmark features, plus 540
/// HOG dimensions when `include_hog` is set.
pub fn build_manifest(include_hog: bool) -> FeatureManifest {
    let mut names: Vec<(String, FeatureFamily, bool)> = Vec::with_capacity(710);
    for wrist in [Joint::LWrist, Joint::RWrist] {
        for target in BODY_TARGETS {
            for axis in AXES {
                names.push((
                    format!("dist_{axis}_{}_{}", joint_tag(wrist), joint_tag(target)),
                    FeatureFamily::BodyDistance,
                    axis == "x",
                ));
            }
        }
    }
    for (joint, _, _) in ANGLE_JOINTS {
        names.push((format!("angle_{}", joint_tag(joint)), FeatureFamily::Angle, false));
    }
    for side in [Side::Left, Side::Right] {
        for finger in FINGER_NAMES {
            for target in HAND_TARGETS {
                for axis in AXES {
                    names.push((
                        format!("hdist_{axis}_hand{}_{finger}_{}", side_tag(side), joint_tag(target)),
                        FeatureFamily::HandDistance,
                        axis == "x",
                    ));
                }
            }
        }
    }
    for side in [Side::Left, Side::Right] {
        names.push((format!("hand_conf_{}", side_tag(side)), FeatureFamily::HandConfidence, false));
    }
    for joint in TEMPORAL_JOINTS {
        for kind in ["disp", "speed", "accel"] {
            for w in TEMPORAL_WINDOWS {
                names.push((format!("temp_{kind}_{}_w{w}", joint_tag(joint)), FeatureFamily::Temporal, false));
            }
        }
    }
    names.push(("face_conf_upper".into(), FeatureFamily::FaceRegionConfidence, false));
    names.push(("face_conf_lower".into(), FeatureFamily::FaceRegionConfidence, false));
    debug_assert_eq!(names.len(), NON_HOG_FEATURES);

    let mut entries: Vec<FeatureEntry> = names
        .into_iter()
        .map(|(name, family, signed_x)| FeatureEntry { name, family, signed_x, mirror_partner: None })
        .collect();

    // Landmark partners: swap every L/R tag in the name.
    let index: std::collections::HashMap<String, usize> =
        entries.iter().enumerate().map(|(i, e)| (e.name.clone(), i)).collect();
    for i in 0..entries.len() {
        let mirrored = mirror_name(&entries[i].name);
        if mirrored != entries[i].name {
            entries[i].mirror_partner = index.get(&mirrored).copied();
        }
    }

    if include_hog {
        let cfg = HogConfig::default();
        for region in HogRegion::ALL {
            let base = entries.len();
            let perm = cfg.flip_permutation(region);
            for (k, &p) in perm.iter().enumerate() {
                entries.push(FeatureEntry {
                    name: format!("hog_{}_{k:03}", region.tag()),
                    family: FeatureFamily::Hog,
                    signed_x: false,
                    mirror_partner: (p != k).then_some(base + p),
                });
            }
        }
    }
    FeatureManifest { entries }
}

fn mirror_name(name: &str) -> String {
    name.split('_')
        .map(|tok| {
            if tok.len() >= 2 && (tok.ends_with('L') || tok.ends_with('R')) {
                let (stem, last) = tok.split_at(tok.len() - 1);
                if stem.chars().all(|c| c.is_ascii_lowercase()) {
                    return format!("{stem}{}", if last == "L" { "R" } else { "L" });
                }
            }
            match tok {
                "L" => "R".to_string(),
                "R" => "L".to_string(),
                other => other.to_string(),
            }
        })
        .collect::<Vec<_>>()
        .join("_")
}

impl FeatureManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn has_hog(&self) -> bool {
        self.entries.iter().any(|e| e.family == FeatureFamily::Hog)
    }

    /// Index of the feature that lands on `i` after a horizontal flip.
    pub fn mirror_index(&self, i: usize) -> usize {
        self.entries[i].mirror_partner.unwrap_or(i)
    }

    /// Indices of all non-HOG features.
    pub fn landmark_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.entries[i].family != FeatureFamily::Hog).collect()
    }

    /// Mirrors one feature row: permute by partner, negate signed-x features.
    pub fn mirror_row(&self, row: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let v = row[self.mirror_index(i)];
                if self.entries[i].signed_x {
                    -v
                } else {
                    v
                }
            })
            .collect()
    }

    /// Hex SHA-256 over the ordered feature names.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.entries {
            h.update(e.name.as_bytes());
            h.update([0u8]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Missing cells are stored as NaN.
pub fn is_missing(v: f64) -> bool {
    v.is_nan()
}

pub const MISSING: f64 = f64::NAN;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub manifest: FeatureManifest,
    pub rows: Vec<Vec<f64>>,
    pub group_ids: Vec<String>,
    pub frame_indices: Vec<usize>,
    pub labels: Vec<Option<LabelRecord>>,
}

impl FeatureMatrix {
    pub fn new(manifest: FeatureManifest) -> Self {
        Self { manifest, rows: Vec::new(), group_ids: Vec::new(), frame_indices: Vec::new(), labels: Vec::new() }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.manifest.len()
    }

    pub fn push_row(&mut self, video_id: &str, frame_index: usize, row: Vec<f64>, label: Option<LabelRecord>) {
        debug_assert_eq!(row.len(), self.manifest.len());
        self.rows.push(row);
        self.group_ids.push(video_id.to_string());
        self.frame_indices.push(frame_index);
        self.labels.push(label);
    }

    pub fn has_labels(&self) -> bool {
        !self.labels.is_empty() && self.labels.iter().all(Option::is_some)
    }

    /// Distinct video ids in first-appearance order.
    pub fn video_ids(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        self.group_ids.iter().filter(|g| seen.insert(g.as_str())).cloned().collect()
    }

    /// Row subset, preserving order of `rows`.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            manifest: self.manifest.clone(),
            rows: rows.iter().map(|&r| self.rows[r].clone()).collect(),
            group_ids: rows.iter().map(|&r| self.group_ids[r].clone()).collect(),
            frame_indices: rows.iter().map(|&r| self.frame_indices[r]).collect(),
            labels: rows.iter().map(|&r| self.labels[r].clone()).collect(),
        }
    }

    /// Rows whose video id is in `videos`.
    pub fn select_videos(&self, videos: &[String]) -> FeatureMatrix {
        let set: std::collections::HashSet<&str> = videos.iter().map(String::as_str).collect();
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&r| set.contains(self.group_ids[r].as_str())).collect();
        self.select_rows(&idx)
    }

    /// Column subset with a matching sub-manifest (partners outside the subset are dropped).
    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let mut pos = vec![None; self.manifest.len()];
        for (k, &c) in cols.iter().enumerate() {
            pos[c] = Some(k);
        }
        let entries = cols
            .iter()
            .map(|&c| {
                let e = &self.manifest.entries[c];
                FeatureEntry { mirror_partner: e.mirror_partner.and_then(|p| pos[p]), ..e.clone() }
            })
            .collect();
        FeatureMatrix {
            manifest: FeatureManifest { entries },
            rows: self.rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect(),
            group_ids: self.group_ids.clone(),
            frame_indices: self.frame_indices.clone(),
            labels: self.labels.clone(),
        }
    }

    /// Appends the rows of `other`, which must share the manifest.
    pub fn extend(&mut self, other: &FeatureMatrix) {
        debug_assert_eq!(self.manifest.len(), other.manifest.len());
        self.rows.extend(other.rows.iter().cloned());
        self.group_ids.extend(other.group_ids.iter().cloned());
        self.frame_indices.extend(other.frame_indices.iter().copied());
        self.labels.extend(other.labels.iter().cloned());
    }

    pub fn missing_count(&self) -> usize {
        self.rows.iter().flatten().filter(|v| is_missing(**v)).count()
    }

    /// Binary on-head targets; panics if any row is unlabeled.
    pub fn on_head_targets(&self) -> Vec<bool> {
        self.labels.iter().map(|l| l.as_ref().expect("labeled row").on_head).collect()
    }

    pub fn region_targets(&self) -> Vec<[bool; 5]> {
        self.labels.iter().map(|l| l.as_ref().expect("labeled row").regions).collect()
    }
}
