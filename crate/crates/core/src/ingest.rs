//! Readers and writers for every on-disk format: dataset manifests, landmark
//! streams, label and Mullen CSVs, PGM frames, feature matrices and
//! prediction tables.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::GrayImage;
use crate::model::{
    build_manifest, is_missing, FaceFrame, FeatureManifest, FeatureMatrix, FrameRecord, HandFrame, Joint,
    Keypoint2D, LabelRecord, LandmarkSpace, PoseFrame, Side, VideoSequence, FACE_LANDMARKS, HAND_LANDMARKS,
    MISSING,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("duplicate video id {0}")]
    DuplicateVideoId(String),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedRecord { path: PathBuf, line: usize, reason: String },
    #[error("{path}:{line}: frame index {frame_index} does not increase")]
    NonMonotonicFrames { path: PathBuf, line: usize, frame_index: usize },
    #[error("{path}:{line}: malformed labels: {reason}")]
    MalformedLabels { path: PathBuf, line: usize, reason: String },
    #[error("{path}:{line}: region flagged without on_head for {video_id} frame {frame_index}")]
    RegionWithoutTouch { path: PathBuf, line: usize, video_id: String, frame_index: usize },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("truncated image: expected {expected} pixel bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("{path}:{line}: malformed Mullen record: {reason}")]
    MalformedMullen { path: PathBuf, line: usize, reason: String },
    #[error("{path}:{line}: non-positive visit age for infant {infant_id}")]
    NonPositiveAge { path: PathBuf, line: usize, infant_id: String },
    #[error("feature header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("{path}:{line}: malformed table: {reason}")]
    MalformedTable { path: PathBuf, line: usize, reason: String },
}

type Result<T> = std::result::Result<T, IngestError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io { path: path.to_path_buf(), source }
}

// ---------------------------------------------------------------------------
// Dataset manifest

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoEntry {
    pub video_id: String,
    pub infant_id: String,
    pub fps: f64,
    pub landmarks_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub dataset_name: String,
    pub videos: Vec<VideoEntry>,
}

/// Loads a JSON dataset manifest. Relative paths resolve against the
/// manifest's directory; every landmark file must exist.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    if !path.exists() {
        return Err(IngestError::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| IngestError::MalformedManifest(e.to_string()))?;
    if manifest.videos.is_empty() {
        return Err(IngestError::MalformedManifest("video list is empty".into()));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut seen = HashSet::new();
    for v in &mut manifest.videos {
        if !seen.insert(v.video_id.clone()) {
            return Err(IngestError::DuplicateVideoId(v.video_id.clone()));
        }
        if !(v.fps > 0.0 && v.fps.is_finite()) {
            return Err(IngestError::MalformedManifest(format!("video {} has fps {}", v.video_id, v.fps)));
        }
        v.landmarks_path = base.join(&v.landmarks_path);
        v.labels_path = v.labels_path.as_ref().map(|p| base.join(p));
        v.frames_dir = v.frames_dir.as_ref().map(|p| base.join(p));
        if !v.landmarks_path.exists() {
            return Err(IngestError::MissingFile(v.landmarks_path.clone()));
        }
    }
    Ok(manifest)
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(path, text + "\n").map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// Landmark streams

type Triple = Option<[f64; 3]>;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HandRecord {
    landmarks: Vec<Triple>,
    detection_confidence: f64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HandsRecord {
    #[serde(default)]
    left: Option<HandRecord>,
    #[serde(default)]
    right: Option<HandRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LandmarkRecord {
    frame_index: usize,
    timestamp_s: f64,
    pose: BTreeMap<String, Triple>,
    #[serde(default)]
    face: Option<Vec<Triple>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    face_space: Option<LandmarkSpace>,
    #[serde(default)]
    hands: HandsRecord,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LoadOptions {
    /// Strict mode fails on the first malformed record (landmarks) or on a
    /// region flag set without a touch (labels); lenient mode rejects and counts.
    pub strict: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { strict: true }
    }
}

/// A loaded video plus ingest accounting: `frames_in == video.frames.len() + rejected`.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoLoad {
    pub video: VideoSequence,
    pub frames_in: usize,
    pub rejected: usize,
    pub clamped_confidences: usize,
}

fn keypoint(t: &Triple, clamped: &mut usize) -> Keypoint2D {
    match t {
        None => Keypoint2D::missing(),
        Some([x, y, c]) => {
            let conf = c.clamp(0.0, 1.0);
            if conf != *c {
                *clamped += 1;
            }
            Keypoint2D::new(*x, *y, conf)
        }
    }
}

fn parse_frame(rec: &LandmarkRecord, clamped: &mut usize) -> std::result::Result<FrameRecord, String> {
    let mut pose = PoseFrame::default();
    for (name, t) in &rec.pose {
        let joint = Joint::from_name(name).ok_or_else(|| format!("unknown joint {name:?}"))?;
        *pose.get_mut(joint) = keypoint(t, clamped);
    }
    let face = match &rec.face {
        None => None,
        Some(pts) if pts.len() != FACE_LANDMARKS => {
            return Err(format!("face has {} landmarks, expected {FACE_LANDMARKS}", pts.len()))
        }
        Some(pts) => Some(FaceFrame {
            landmarks: pts.iter().map(|t| keypoint(t, clamped)).collect(),
            source_space: rec.face_space.unwrap_or(LandmarkSpace::FullFrame),
        }),
    };
    let mut hands = Vec::new();
    for (side, hand) in [(Side::Left, &rec.hands.left), (Side::Right, &rec.hands.right)] {
        if let Some(h) = hand {
            if h.landmarks.len() != HAND_LANDMARKS {
                return Err(format!("hand has {} landmarks, expected {HAND_LANDMARKS}", h.landmarks.len()));
            }
            let conf = h.detection_confidence.clamp(0.0, 1.0);
            if conf != h.detection_confidence {
                *clamped += 1;
            }
            hands.push(HandFrame {
                side,
                landmarks: h.landmarks.iter().map(|t| keypoint(t, clamped)).collect(),
                detection_confidence: conf,
            });
        }
    }
    if !rec.timestamp_s.is_finite() {
        return Err("non-finite timestamp".into());
    }
    Ok(FrameRecord { frame_index: rec.frame_index, timestamp_s: rec.timestamp_s, pose, face, hands, image_ref: None })
}

/// Loads the landmark stream of one manifest entry. Frame images are
/// attached when `frames_dir/frame_<index>.pgm` exists.
pub fn load_video(entry: &VideoEntry, options: LoadOptions) -> Result<VideoLoad> {
    let path = &entry.landmarks_path;
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => IngestError::MissingFile(path.clone()),
        _ => IngestError::Io { path: path.clone(), source: e },
    })?;
    let mut frames: Vec<FrameRecord> = Vec::new();
    let (mut frames_in, mut rejected, mut clamped) = (0, 0, 0);
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        frames_in += 1;
        let lineno = i + 1;
        let parsed = serde_json::from_str::<LandmarkRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|rec| parse_frame(&rec, &mut clamped));
        let frame = match parsed {
            Ok(f) => f,
            Err(reason) if options.strict => {
                return Err(IngestError::MalformedRecord { path: path.clone(), line: lineno, reason })
            }
            Err(reason) => {
                log::warn!("{}:{lineno}: rejected frame: {reason}", path.display());
                rejected += 1;
                continue;
            }
        };
        if let Some(prev) = frames.last() {
            if frame.frame_index <= prev.frame_index || frame.timestamp_s <= prev.timestamp_s {
                return Err(IngestError::NonMonotonicFrames {
                    path: path.clone(),
                    line: lineno,
                    frame_index: frame.frame_index,
                });
            }
        }
        frames.push(frame);
    }
    if clamped > 0 {
        log::warn!("{}: clamped {clamped} confidences into [0,1]", path.display());
    }
    if let Some(dir) = &entry.frames_dir {
        for f in &mut frames {
            let p = dir.join(format!("frame_{}.pgm", f.frame_index));
            if p.exists() {
                f.image_ref = Some(p);
            }
        }
    }
    Ok(VideoLoad {
        video: VideoSequence {
            video_id: entry.video_id.clone(),
            infant_id: entry.infant_id.clone(),
            fps: entry.fps,
            frames,
        },
        frames_in,
        rejected,
        clamped_confidences: clamped,
    })
}

fn triple(k: &Keypoint2D) -> Triple {
    k.present.then_some([k.x, k.y, k.confidence])
}

/// One JSON line per frame, the inverse of [`load_video`].
pub fn write_landmarks(video: &VideoSequence, path: &Path) -> Result<()> {
    let mut out = String::new();
    for f in &video.frames {
        let pose = Joint::ALL.iter().map(|&j| (j.name().to_string(), triple(f.pose.get(j)))).collect();
        let hand = |side| {
            f.hand(side).map(|h| HandRecord {
                landmarks: h.landmarks.iter().map(triple).collect(),
                detection_confidence: h.detection_confidence,
            })
        };
        let rec = LandmarkRecord {
            frame_index: f.frame_index,
            timestamp_s: f.timestamp_s,
            pose,
            face: f.face.as_ref().map(|face| face.landmarks.iter().map(triple).collect()),
            face_space: f.face.as_ref().and_then(|face| {
                (face.source_space != LandmarkSpace::FullFrame).then_some(face.source_space)
            }),
            hands: HandsRecord { left: hand(Side::Left), right: hand(Side::Right) },
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// Labels

pub const LABEL_HEADER: [&str; 8] = ["video_id", "frame_index", "on_head", "eyes", "ears", "nose", "mouth", "cheeks"];

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim() {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

/// Parses label rows from any CSV reader. `path` is used for error context only.
pub fn parse_labels(reader: impl std::io::Read, path: &Path, options: LoadOptions) -> Result<Vec<LabelRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let bad = |line: usize, reason: String| IngestError::MalformedLabels { path: path.to_path_buf(), line, reason };
    let header = rdr.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != LABEL_HEADER {
        return Err(bad(1, format!("expected header {}", LABEL_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        if rec.len() != LABEL_HEADER.len() {
            return Err(bad(line, format!("expected 8 fields, found {}", rec.len())));
        }
        let frame_index: usize = rec[1].parse().map_err(|_| bad(line, format!("bad frame index {:?}", &rec[1])))?;
        let mut flags = [false; 6];
        for (k, f) in flags.iter_mut().enumerate() {
            *f = parse_flag(&rec[2 + k]).ok_or_else(|| bad(line, format!("flag {:?} is not 0/1", &rec[2 + k])))?;
        }
        let mut label = LabelRecord {
            video_id: rec[0].to_string(),
            frame_index,
            on_head: flags[0],
            regions: [flags[1], flags[2], flags[3], flags[4], flags[5]],
        };
        if !label.is_consistent() {
            if options.strict {
                return Err(IngestError::RegionWithoutTouch {
                    path: path.to_path_buf(),
                    line,
                    video_id: label.video_id,
                    frame_index,
                });
            }
            label.regions = [false; 5];
        }
        out.push(label);
    }
    Ok(out)
}

pub fn load_labels(path: &Path, options: LoadOptions) -> Result<Vec<LabelRecord>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    parse_labels(file, path, options)
}

pub fn labels_to_csv(labels: &[LabelRecord]) -> String {
    let mut out = LABEL_HEADER.join(",");
    out.push('\n');
    for l in labels {
        out.push_str(&format!("{},{},{}", l.video_id, l.frame_index, l.on_head as u8));
        for r in l.regions {
            out.push_str(&format!(",{}", r as u8));
        }
        out.push('\n');
    }
    out
}

pub fn write_labels(labels: &[LabelRecord], path: &Path) -> Result<()> {
    fs::write(path, labels_to_csv(labels)).map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// PGM frames

/// Decodes a binary (P5) PGM with maxval 255.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        let magic = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(IngestError::UnsupportedFormat(format!("magic {magic:?}, only P5 is supported")));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(IngestError::UnsupportedFormat("malformed PGM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| IngestError::UnsupportedFormat("malformed PGM header".into()))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(IngestError::UnsupportedFormat(format!("maxval {maxval}, only 255 is supported")));
    }
    if width == 0 || height == 0 {
        return Err(IngestError::UnsupportedFormat("zero-sized image".into()));
    }
    // exactly one whitespace byte separates header and raster
    pos += 1;
    let expected = width * height;
    let found = bytes.len().saturating_sub(pos);
    if found < expected {
        return Err(IngestError::TruncatedFile { expected, found });
    }
    Ok(GrayImage { width, height, pixels: bytes[pos..pos + expected].to_vec() })
}

pub fn load_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => IngestError::MissingFile(path.to_path_buf()),
        _ => IngestError::Io { path: path.to_path_buf(), source: e },
    })?;
    parse_pgm(&bytes)
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

pub fn write_pgm(image: &GrayImage, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(image)).map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// Mullen scores

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MullenRecord {
    pub infant_id: String,
    pub visit_age_months: f64,
    pub gm_raw: f64,
    pub fm_raw: f64,
}

pub const MULLEN_HEADER: [&str; 4] = ["infant_id", "visit_age_months", "gm_raw", "fm_raw"];

pub fn load_mullen(path: &Path) -> Result<Vec<MullenRecord>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let bad = |line: usize, reason: String| IngestError::MalformedMullen { path: path.to_path_buf(), line, reason };
    let header = rdr.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != MULLEN_HEADER {
        return Err(bad(1, format!("expected header {}", MULLEN_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(line, format!("field {} is not a finite number", MULLEN_HEADER[k])))
        };
        let r = MullenRecord { infant_id: rec[0].to_string(), visit_age_months: num(1)?, gm_raw: num(2)?, fm_raw: num(3)? };
        if r.visit_age_months <= 0.0 {
            return Err(IngestError::NonPositiveAge { path: path.to_path_buf(), line, infant_id: r.infant_id });
        }
        out.push(r);
    }
    Ok(out)
}

pub fn write_mullen(records: &[MullenRecord], path: &Path) -> Result<()> {
    let mut out = MULLEN_HEADER.join(",") + "\n";
    for r in records {
        out.push_str(&format!("{},{:?},{:?},{:?}\n", r.infant_id, r.visit_age_months, r.gm_raw, r.fm_raw));
    }
    fs::write(path, out).map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// Feature matrices

const LABEL_COLUMNS: [&str; 6] = ["on_head", "eyes", "ears", "nose", "mouth", "cheeks"];

fn fmt_value(v: f64) -> String {
    if is_missing(v) {
        String::new()
    } else {
        format!("{v:?}")
    }
}

/// Writes the matrix as CSV. `provenance` lines are emitted first as `#` comments.
pub fn write_feature_matrix(matrix: &FeatureMatrix, path: &Path, provenance: &[String]) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    let labeled = matrix.labels.iter().any(Option::is_some);
    let mut text = String::new();
    for p in provenance {
        text.push_str(&format!("# {p}\n"));
    }
    text.push_str("video_id,frame_index");
    for name in matrix.manifest.names() {
        text.push(',');
        text.push_str(name);
    }
    if labeled {
        for c in LABEL_COLUMNS {
            text.push(',');
            text.push_str(c);
        }
    }
    text.push('\n');
    w.write_all(text.as_bytes()).map_err(io_err(path))?;
    for r in 0..matrix.n_rows() {
        let mut line = format!("{},{}", matrix.group_ids[r], matrix.frame_indices[r]);
        for &v in &matrix.rows[r] {
            line.push(',');
            line.push_str(&fmt_value(v));
        }
        match (labeled, &matrix.labels[r]) {
            (true, Some(l)) => {
                line.push_str(&format!(",{}", l.on_head as u8));
                for f in l.regions {
                    line.push_str(&format!(",{}", f as u8));
                }
            }
            (true, None) => line.push_str(",,,,,,"),
            _ => {}
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a feature-matrix CSV. With `expected`, the feature header must match
/// it exactly; otherwise the manifest is recognized as the 170- or 710-column
/// canonical layout.
pub fn read_feature_matrix(path: &Path, expected: Option<&FeatureManifest>) -> Result<FeatureMatrix> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |line: usize, reason: String| IngestError::MalformedTable { path: path.to_path_buf(), line, reason };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[0] != "video_id" || cols[1] != "frame_index" {
        return Err(bad(1, "header must start with video_id,frame_index".into()));
    }
    let labeled = cols.len() >= 8 && cols[cols.len() - 6..] == LABEL_COLUMNS;
    let feature_names = &cols[2..cols.len() - if labeled { 6 } else { 0 }];
    let manifest = match expected {
        Some(m) => m.clone(),
        None => {
            if feature_names.len() > 170 {
                build_manifest(true)
            } else {
                build_manifest(false)
            }
        }
    };
    if feature_names.len() != manifest.len() || !feature_names.iter().copied().eq(manifest.names()) {
        return Err(IngestError::HeaderMismatch(format!(
            "file has {} feature columns, manifest expects {}",
            feature_names.len(),
            manifest.len()
        )));
    }
    let width = cols.len();
    let mut m = FeatureMatrix::new(manifest);
    for (i, line) in lines {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(bad(lineno, format!("expected {width} fields, found {}", fields.len())));
        }
        let frame_index: usize = fields[1].parse().map_err(|_| bad(lineno, "bad frame index".into()))?;
        let row = fields[2..2 + feature_names.len()]
            .iter()
            .map(|s| if s.is_empty() { Ok(MISSING) } else { s.parse::<f64>() })
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| bad(lineno, e.to_string()))?;
        let label = if labeled && fields[width - 6..].iter().all(|s| s.is_empty()) {
            None
        } else if labeled {
            let flags: Vec<bool> = fields[width - 6..]
                .iter()
                .map(|s| parse_flag(s).ok_or_else(|| bad(lineno, format!("flag {s:?} is not 0/1"))))
                .collect::<Result<_>>()?;
            Some(LabelRecord {
                video_id: fields[0].to_string(),
                frame_index,
                on_head: flags[0],
                regions: [flags[1], flags[2], flags[3], flags[4], flags[5]],
            })
        } else {
            None
        };
        m.push_row(fields[0], frame_index, row, label);
    }
    Ok(m)
}

// ---------------------------------------------------------------------------
// Predictions

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub video_id: String,
    pub infant_id: String,
    pub frame_index: usize,
    pub on_head: bool,
    pub regions: Option<[bool; 5]>,
}

pub fn write_predictions(preds: &[PredictionRecord], path: &Path, provenance: &[String]) -> Result<()> {
    let mut out = String::new();
    for p in provenance {
        out.push_str(&format!("# {p}\n"));
    }
    let with_regions = preds.iter().any(|p| p.regions.is_some());
    out.push_str("video_id,infant_id,frame_index,on_head");
    if with_regions {
        out.push_str(",eyes,ears,nose,mouth,cheeks");
    }
    out.push('\n');
    for p in preds {
        out.push_str(&format!("{},{},{},{}", p.video_id, p.infant_id, p.frame_index, p.on_head as u8));
        if with_regions {
            for f in p.regions.unwrap_or_default() {
                out.push_str(&format!(",{}", f as u8));
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |line: usize, reason: String| IngestError::MalformedTable { path: path.to_path_buf(), line, reason };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
    let with_regions = match header {
        "video_id,infant_id,frame_index,on_head" => false,
        "video_id,infant_id,frame_index,on_head,eyes,ears,nose,mouth,cheeks" => true,
        other => return Err(bad(1, format!("unexpected header {other:?}"))),
    };
    lines
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let want = if with_regions { 9 } else { 4 };
            if f.len() != want {
                return Err(bad(i + 1, format!("expected {want} fields")));
            }
            let flag = |s: &str| parse_flag(s).ok_or_else(|| bad(i + 1, format!("flag {s:?} is not 0/1")));
            let regions = if with_regions {
                Some([flag(f[4])?, flag(f[5])?, flag(f[6])?, flag(f[7])?, flag(f[8])?])
            } else {
                None
            };
            Ok(PredictionRecord {
                video_id: f[0].to_string(),
                infant_id: f[1].to_string(),
                frame_index: f[2].parse().map_err(|_| bad(i + 1, "bad frame index".into()))?,
                on_head: flag(f[3])?,
                regions,
            })
        })
        .collect()
}
