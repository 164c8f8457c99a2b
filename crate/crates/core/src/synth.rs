//! Seeded synthetic infants: animated 2D skeletons with scripted hand-to-face
//! touches, noisy landmark observations, rendered frames, geometric ground
//! truth labels and Mullen scores coupled to the true touch ratio.
//!
//! Geometry lives in a body frame measured in trunk lengths (neck at the
//! origin, hip at `(0, 1)`, image axes with y pointing down, the infant's
//! left side at +x) and is mapped to pixels per video.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::imaging::GrayImage;
use crate::ingest::{self, DatasetManifest, MullenRecord, VideoEntry};
use crate::model::{
    FaceFrame, FrameRecord, HandFrame, Joint, Keypoint2D, LabelRecord, LandmarkSpace, PoseFrame, Region, Side,
    VideoSequence, FACE_LANDMARKS, FINGERTIPS, HAND_LANDMARKS,
};
use crate::reduce::stream_rng;

/// A fingertip closer than this (trunk lengths) to a face target is a touch.
pub const TOUCH_THRESHOLD: f64 = 0.25;
const UPPER_ARM: f64 = 0.4;
const FOREARM: f64 = 0.35;
const TARGET_JITTER: f64 = 0.04;
const OCCLUSION_RADIUS: f64 = 0.12;
const APPROACH: (usize, usize) = (5, 20);
const HOLD: (usize, usize) = (3, 30);
/// Mean on-head frames produced by one scripted event (hold plus the close
/// part of approach and return), measured on the generator itself.
pub const ON_HEAD_FRAMES_PER_EVENT: f64 = 24.0;
const MEAN_EVENT_FRAMES: f64 = (APPROACH.0 + APPROACH.1) as f64 + (HOLD.0 + HOLD.1) as f64 / 2.0;
const MULLEN_STREAM: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub dataset_name: String,
    pub n_videos: usize,
    pub frames_per_video: usize,
    pub fps: f64,
    pub image_width: usize,
    pub image_height: usize,
    pub noise_std_px: f64,
    pub hand_dropout_prob: f64,
    pub face_dropout_prob: f64,
    /// Touch events per minute before the per-infant multiplier.
    pub touch_event_rate: f64,
    /// Probability of each target group, in [`Region::ALL`] order.
    pub touch_region_distribution: [f64; 5],
    /// Per-infant rate multiplier drawn from `U(1 − s, 1 + s)`.
    pub infant_rate_spread: f64,
    pub mullen_coupling: f64,
    pub gm_coupling: f64,
    pub render_frames: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dataset_name: "synthetic".into(),
            n_videos: 40,
            frames_per_video: 200,
            fps: 30.0,
            image_width: 256,
            image_height: 256,
            noise_std_px: 1.0,
            hand_dropout_prob: 0.03,
            face_dropout_prob: 0.03,
            touch_event_rate: rate_for_prevalence(0.30, 30.0),
            touch_region_distribution: [0.15, 0.1, 0.2, 0.35, 0.2],
            infant_rate_spread: 0.6,
            mullen_coupling: 0.6,
            gm_coupling: 0.2,
            render_frames: true,
            seed: 7,
        }
    }
}

/// Event rate (per minute) whose expected on-head fraction is `prevalence`.
pub fn rate_for_prevalence(prevalence: f64, fps: f64) -> f64 {
    60.0 * fps * prevalence / ON_HEAD_FRAMES_PER_EVENT
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n_videos == 0 || self.frames_per_video == 0 {
            return bad("need at least one video and one frame".into());
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps {}", self.fps));
        }
        if self.image_width < 64 || self.image_height < 64 {
            return bad("images must be at least 64x64".into());
        }
        for (name, p) in [
            ("hand_dropout_prob", self.hand_dropout_prob),
            ("face_dropout_prob", self.face_dropout_prob),
            ("mullen_coupling", self.mullen_coupling),
            ("gm_coupling", self.gm_coupling),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if !(self.noise_std_px >= 0.0 && self.touch_event_rate >= 0.0) {
            return bad("noise and event rate must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.infant_rate_spread) {
            return bad(format!("infant_rate_spread {} outside [0, 1)", self.infant_rate_spread));
        }
        let d = &self.touch_region_distribution;
        if d.iter().any(|&p| p < 0.0) || (d.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("region distribution {d:?} must be non-negative and sum to 1"));
        }
        Ok(())
    }

    pub fn video_id(&self, index: usize) -> String {
        format!("vid_{index:03}")
    }

    pub fn infant_id(&self, index: usize) -> String {
        format!("infant_{index:03}")
    }
}

// ---------------------------------------------------------------------------
// Body geometry

type P2 = (f64, f64);

fn add(a: P2, b: P2) -> P2 {
    (a.0 + b.0, a.1 + b.1)
}

fn sub(a: P2, b: P2) -> P2 {
    (a.0 - b.0, a.1 - b.1)
}

fn scale(a: P2, s: f64) -> P2 {
    (a.0 * s, a.1 * s)
}

fn norm(a: P2) -> f64 {
    a.0.hypot(a.1)
}

fn dir(angle: f64) -> P2 {
    (angle.cos(), angle.sin())
}

fn wrap(a: f64) -> f64 {
    let mut a = (a + PI).rem_euclid(2.0 * PI) - PI;
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

fn side_sign(side: Side) -> f64 {
    match side {
        Side::Left => 1.0,
        Side::Right => -1.0,
    }
}

fn shoulder(side: Side) -> P2 {
    (0.35 * side_sign(side), 0.05)
}

fn joint_rest(j: Joint) -> P2 {
    match j {
        Joint::Nose => (0.0, -0.4),
        Joint::Neck => (0.0, 0.0),
        Joint::MidHip => (0.0, 1.0),
        Joint::LEye => (0.1, -0.5),
        Joint::REye => (-0.1, -0.5),
        Joint::LEar => (0.23, -0.45),
        Joint::REar => (-0.23, -0.45),
        Joint::LShoulder => shoulder(Side::Left),
        Joint::RShoulder => shoulder(Side::Right),
        _ => (0.0, 0.0),
    }
}

/// Touch targets of each region group.
pub fn region_points(region: Region) -> Vec<P2> {
    match region {
        Region::Eyes => vec![(-0.1, -0.5), (0.1, -0.5)],
        Region::Ears => vec![(-0.23, -0.45), (0.23, -0.45)],
        Region::Nose => vec![(0.0, -0.4)],
        Region::Mouth => vec![(0.0, -0.3)],
        Region::Cheeks => vec![(-0.15, -0.36), (0.15, -0.36)],
    }
}

const HEAD_CENTER: P2 = (0.0, -0.45);
const HEAD_AXES: P2 = (0.27, 0.33);

/// 68-point face layout in iBUG order.
pub fn face_layout() -> Vec<P2> {
    let mut p = Vec::with_capacity(FACE_LANDMARKS);
    for k in 0..17 {
        let t = PI - k as f64 * PI / 16.0;
        p.push((0.24 * t.cos(), -0.45 + 0.3 * t.sin()));
    }
    for side in [-1.0, 1.0] {
        for k in 0..5 {
            let x = 0.04 + 0.0325 * k as f64;
            let x = if side < 0.0 { -(0.17 - 0.0325 * k as f64) } else { x };
            p.push((x, -0.57 - 0.015 * (1.0 - ((x.abs() - 0.105) / 0.065).powi(2))));
        }
    }
    for k in 0..4 {
        p.push((0.0, -0.5 + 0.03 * k as f64));
    }
    for k in 0..5 {
        p.push((-0.04 + 0.02 * k as f64, -0.39));
    }
    for cx in [-0.1, 0.1] {
        for k in 0..6 {
            let t = PI + k as f64 * PI / 3.0;
            p.push((cx + 0.04 * t.cos(), -0.5 + 0.015 * t.sin()));
        }
    }
    for k in 0..12 {
        let t = PI + k as f64 * 2.0 * PI / 12.0;
        p.push((0.07 * t.cos(), -0.3 + 0.03 * t.sin()));
    }
    for k in 0..8 {
        let t = PI + k as f64 * 2.0 * PI / 8.0;
        p.push((0.05 * t.cos(), -0.3 + 0.015 * t.sin()));
    }
    p
}

const FINGER_OFFSET: [f64; 5] = [0.05, 0.025, 0.0, -0.02, -0.04];
const FINGER_BASE: [f64; 5] = [0.02, 0.05, 0.05, 0.05, 0.045];
const FINGER_TIP: [f64; 5] = [0.09, 0.15, 0.155, 0.145, 0.125];

/// 21 hand landmarks from the wrist and the pointing direction.
pub fn hand_layout(wrist: P2, pointing: f64, side: Side) -> Vec<P2> {
    let u = dir(pointing);
    let v = (-u.1 * side_sign(side), u.0 * side_sign(side));
    let mut pts = vec![wrist];
    for f in 0..5 {
        for k in 0..4 {
            let along = FINGER_BASE[f] + (FINGER_TIP[f] - FINGER_BASE[f]) * k as f64 / 3.0;
            pts.push(add(add(wrist, scale(u, along)), scale(v, FINGER_OFFSET[f])));
        }
    }
    pts
}

/// Absolute segment directions of one arm: upper arm, forearm, hand.
#[derive(Clone, Copy, Debug)]
struct ArmAngles {
    upper: f64,
    fore: f64,
    hand: f64,
}

struct ArmPose {
    elbow: P2,
    wrist: P2,
    hand: Vec<P2>,
}

fn forward(side: Side, a: ArmAngles) -> ArmPose {
    let s = shoulder(side);
    let elbow = add(s, scale(dir(a.upper), UPPER_ARM));
    let wrist = add(elbow, scale(dir(a.fore), FOREARM));
    ArmPose { elbow, wrist, hand: hand_layout(wrist, a.hand, side) }
}

/// Arm angles putting the index fingertip on `target`, elbow out.
fn reach(side: Side, target: P2) -> ArmAngles {
    let s = shoulder(side);
    let hand = (target.1 - s.1).atan2(target.0 - s.0);
    let tip = hand_layout((0.0, 0.0), hand, side)[FINGERTIPS[1]];
    let wrist = sub(target, tip);
    let to_wrist = sub(wrist, s);
    let d = norm(to_wrist).clamp(0.06, UPPER_ARM + FOREARM - 1e-3);
    let base = to_wrist.1.atan2(to_wrist.0);
    let alpha = ((UPPER_ARM * UPPER_ARM + d * d - FOREARM * FOREARM) / (2.0 * UPPER_ARM * d)).clamp(-1.0, 1.0).acos();
    let outward = |a: f64| (s.0 + UPPER_ARM * a.cos()) * side_sign(side);
    let upper = if outward(base + alpha) >= outward(base - alpha) { base + alpha } else { base - alpha };
    let elbow = add(s, scale(dir(upper), UPPER_ARM));
    let w = add(s, scale(to_wrist, d / norm(to_wrist).max(1e-12)));
    let fore = (w.1 - elbow.1).atan2(w.0 - elbow.0);
    ArmAngles { upper, fore, hand }
}

fn blend(a: ArmAngles, b: ArmAngles, w: f64) -> ArmAngles {
    let mix = |x: f64, y: f64| x + w * wrap(y - x);
    ArmAngles { upper: mix(a.upper, b.upper), fore: mix(a.fore, b.fore), hand: mix(a.hand, b.hand) }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

#[derive(Clone, Copy, Debug)]
struct Wave {
    amp: f64,
    freq: f64,
    phase: f64,
}

fn waves(rng: &mut ChaCha8Rng, amp: (f64, f64)) -> [Wave; 3] {
    std::array::from_fn(|_| Wave {
        amp: rng.random_range(amp.0..amp.1),
        freq: rng.random_range(0.1..1.0),
        phase: rng.random_range(0.0..2.0 * PI),
    })
}

fn sum_waves(w: &[Wave; 3], t: f64) -> f64 {
    w.iter().map(|w| w.amp * (2.0 * PI * w.freq * t + w.phase).sin()).sum()
}

struct IdleArm {
    upper0: f64,
    bend0: f64,
    upper: [Wave; 3],
    bend: [Wave; 3],
    hand: [Wave; 3],
}

impl IdleArm {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        Self {
            upper0: rng.random_range(30f64..80.0).to_radians(),
            bend0: rng.random_range(10f64..50.0).to_radians(),
            upper: waves(rng, (0.05, 0.2)),
            bend: waves(rng, (0.05, 0.2)),
            hand: waves(rng, (0.05, 0.15)),
        }
    }

    /// Left-arm angles mirrored onto `side`.
    fn angles(&self, side: Side, t: f64) -> ArmAngles {
        let upper = self.upper0 + sum_waves(&self.upper, t);
        let fore = upper + self.bend0 + sum_waves(&self.bend, t);
        let hand = fore + sum_waves(&self.hand, t);
        let m = |a: f64| if side == Side::Left { a } else { PI - a };
        ArmAngles { upper: m(upper), fore: m(fore), hand: m(hand) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TouchEvent {
    pub side: Side,
    pub region: Region,
    pub target: P2,
    pub start: usize,
    pub approach: usize,
    pub hold: usize,
    pub ret: usize,
}

impl TouchEvent {
    fn len(&self) -> usize {
        self.approach + self.hold + self.ret
    }

    fn weight(&self, frame: usize) -> f64 {
        if frame < self.start {
            return 0.0;
        }
        let k = frame - self.start;
        if k < self.approach {
            smoothstep((k + 1) as f64 / self.approach as f64)
        } else if k < self.approach + self.hold {
            1.0
        } else if k < self.len() {
            1.0 - smoothstep((k - self.approach - self.hold + 1) as f64 / self.ret as f64)
        } else {
            0.0
        }
    }
}

fn sample_region(dist: &[f64; 5], rng: &mut ChaCha8Rng) -> Region {
    let u: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    for (r, p) in Region::ALL.iter().zip(dist) {
        acc += p;
        if u < acc {
            return *r;
        }
    }
    *Region::ALL.iter().zip(dist).rev().find(|(_, &p)| p > 0.0).map(|(r, _)| r).unwrap_or(&Region::Nose)
}

fn schedule(config: &SynthConfig, rate: f64, rng: &mut ChaCha8Rng) -> Vec<TouchEvent> {
    let n = config.frames_per_video;
    if rate <= 0.0 {
        return Vec::new();
    }
    let cycle = 60.0 * config.fps / rate;
    let gap = Exp::new(1.0 / (cycle - MEAN_EVENT_FRAMES).max(1.0)).expect("positive rate");
    let mut t = rng.random_range(0.0..(cycle - MEAN_EVENT_FRAMES).max(1.0));
    let mut events = Vec::new();
    while (t as usize) < n {
        let side = if rng.random_bool(0.5) { Side::Left } else { Side::Right };
        let region = sample_region(&config.touch_region_distribution, rng);
        let pts = region_points(region);
        let point = if pts.len() == 1 {
            pts[0]
        } else {
            let same = rng.random_bool(0.8);
            let want = if same { side_sign(side) } else { -side_sign(side) };
            *pts.iter().find(|p| p.0.signum() == want).unwrap_or(&pts[0])
        };
        let target = (
            point.0 + rng.random_range(-TARGET_JITTER..TARGET_JITTER),
            point.1 + rng.random_range(-TARGET_JITTER..TARGET_JITTER),
        );
        let e = TouchEvent {
            side,
            region,
            target,
            start: t as usize,
            approach: rng.random_range(APPROACH.0..=APPROACH.1),
            hold: rng.random_range(HOLD.0..=HOLD.1),
            ret: rng.random_range(APPROACH.0..=APPROACH.1),
        };
        t = (e.start + e.len()) as f64 + gap.sample(rng);
        events.push(e);
    }
    events
}

// ---------------------------------------------------------------------------
// Ground truth

/// True body-frame geometry of one frame.
#[derive(Clone, Debug)]
pub struct TrueFrame {
    pub joints: [P2; 13],
    pub hands: [Vec<P2>; 2],
    pub face: Vec<P2>,
}

impl TrueFrame {
    fn fingertips(&self) -> impl Iterator<Item = P2> + '_ {
        self.hands.iter().flat_map(|h| FINGERTIPS.iter().map(move |&i| h[i]))
    }

    /// Smallest fingertip distance to each region group.
    pub fn region_distances(&self) -> [f64; 5] {
        Region::ALL.map(|r| {
            let pts = region_points(r);
            self.fingertips()
                .flat_map(|t| pts.iter().map(move |&p| norm(sub(t, p))))
                .fold(f64::INFINITY, f64::min)
        })
    }

    pub fn min_face_distance(&self) -> f64 {
        self.region_distances().into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// Labels from true geometry: a touch when any fingertip is within
/// [`TOUCH_THRESHOLD`] of a face target, flagging the nearest group (the
/// first one on an exact tie).
pub fn oracle_label(video_id: &str, frame_index: usize, truth: &TrueFrame) -> LabelRecord {
    let d = truth.region_distances();
    let nearest = (0..5).fold(0, |best, k| if d[k] < d[best] { k } else { best });
    let on_head = d[nearest] <= TOUCH_THRESHOLD;
    let regions = std::array::from_fn(|k| on_head && k == nearest);
    LabelRecord { video_id: video_id.into(), frame_index, on_head, regions }
}

/// One generated video with everything derived from it.
#[derive(Clone, Debug)]
pub struct SynthVideo {
    pub video: VideoSequence,
    pub labels: Vec<LabelRecord>,
    pub truth: Vec<TrueFrame>,
    pub events: Vec<TouchEvent>,
    /// Pixels per trunk length.
    pub trunk_px: f64,
    pub images: Option<Vec<GrayImage>>,
}

impl SynthVideo {
    pub fn true_ratio(&self) -> f64 {
        self.labels.iter().filter(|l| l.on_head).count() as f64 / self.labels.len().max(1) as f64
    }
}

struct Placement {
    origin: P2,
    trunk_px: f64,
    rotation: f64,
    drift: [Wave; 3],
    sway: [Wave; 3],
}

impl Placement {
    fn to_pixels(&self, p: P2, t: f64) -> P2 {
        let rot = self.rotation + 0.05 * sum_waves(&self.sway, t);
        let (s, c) = rot.sin_cos();
        let o = add(self.origin, (2.0 * sum_waves(&self.drift, t), 2.0 * sum_waves(&self.drift, t + 1.7)));
        add(o, scale((c * p.0 - s * p.1, s * p.0 + c * p.1), self.trunk_px))
    }
}

/// Generates video `index` of `config` in memory.
pub fn generate_video(config: &SynthConfig, index: usize) -> SynthVideo {
    let mut rng = stream_rng(config.seed, index as u64);
    let (w, h) = (config.image_width as f64, config.image_height as f64);
    let trunk_px = rng.random_range(50.0..80.0) * w.min(h) / 256.0;
    let place = Placement {
        origin: (w / 2.0 + rng.random_range(-0.08..0.08) * w, 0.4 * h + rng.random_range(-0.06..0.06) * h),
        trunk_px,
        rotation: rng.random_range(-20f64..20.0).to_radians(),
        drift: waves(&mut rng, (0.1, 0.4)),
        sway: waves(&mut rng, (0.1, 0.4)),
    };
    let idle = [IdleArm::sample(&mut rng), IdleArm::sample(&mut rng)];
    let spread = config.infant_rate_spread;
    let multiplier = if spread > 0.0 { rng.random_range(1.0 - spread..1.0 + spread) } else { 1.0 };
    let events = schedule(config, config.touch_event_rate * multiplier, &mut rng);
    let sides = [Side::Left, Side::Right];
    let layout = face_layout();

    let video_id = config.video_id(index);
    let noise = Normal::new(0.0, config.noise_std_px.max(1e-300)).expect("finite noise");
    let jitter = |rng: &mut ChaCha8Rng, p: P2| {
        if config.noise_std_px > 0.0 {
            (p.0 + noise.sample(rng), p.1 + noise.sample(rng))
        } else {
            p
        }
    };

    let mut frames = Vec::with_capacity(config.frames_per_video);
    let mut labels = Vec::with_capacity(config.frames_per_video);
    let mut truth = Vec::with_capacity(config.frames_per_video);
    let mut images = config.render_frames.then(Vec::new);
    for i in 0..config.frames_per_video {
        let t = i as f64 / config.fps;
        let arms: Vec<ArmPose> = sides
            .iter()
            .enumerate()
            .map(|(k, &side)| {
                let mut a = idle[k].angles(side, t);
                if let Some(e) = events.iter().find(|e| e.side == side && e.weight(i) > 0.0) {
                    a = blend(a, reach(side, e.target), e.weight(i));
                }
                forward(side, a)
            })
            .collect();
        let mut joints = [(0.0, 0.0); 13];
        for j in Joint::ALL {
            joints[j.index()] = joint_rest(j);
        }
        for (side, arm) in sides.iter().zip(&arms) {
            let (e, wr) = if *side == Side::Left { (Joint::LElbow, Joint::LWrist) } else { (Joint::RElbow, Joint::RWrist) };
            joints[e.index()] = arm.elbow;
            joints[wr.index()] = arm.wrist;
        }
        let tf = TrueFrame { joints, hands: [arms[0].hand.clone(), arms[1].hand.clone()], face: layout.clone() };
        labels.push(oracle_label(&video_id, i, &tf));

        let mut pose = PoseFrame::default();
        for j in Joint::ALL {
            let dropped = matches!(j, Joint::LWrist | Joint::RWrist) && rng.random_bool(config.hand_dropout_prob / 2.0);
            let px = jitter(&mut rng, place.to_pixels(joints[j.index()], t));
            let conf = rng.random_range(0.6..1.0);
            *pose.get_mut(j) = if dropped { Keypoint2D::missing() } else { Keypoint2D::new(px.0, px.1, conf) };
        }
        let face = (!rng.random_bool(config.face_dropout_prob)).then(|| {
            let tips: Vec<P2> = tf.fingertips().collect();
            let landmarks = layout
                .iter()
                .map(|&p| {
                    let px = jitter(&mut rng, place.to_pixels(p, t));
                    let mut conf = rng.random_range(0.7..1.0);
                    if tips.iter().any(|&q| norm(sub(q, p)) < OCCLUSION_RADIUS) {
                        conf *= 0.3;
                    }
                    Keypoint2D::new(px.0, px.1, conf)
                })
                .collect();
            FaceFrame { landmarks, source_space: LandmarkSpace::FullFrame }
        });
        let mut hands = Vec::new();
        for (side, arm) in sides.iter().zip(&arms) {
            if rng.random_bool(config.hand_dropout_prob) {
                continue;
            }
            let landmarks = arm
                .hand
                .iter()
                .map(|&p| {
                    let px = jitter(&mut rng, place.to_pixels(p, t));
                    Keypoint2D::new(px.0, px.1, rng.random_range(0.6..1.0))
                })
                .collect::<Vec<_>>();
            debug_assert_eq!(landmarks.len(), HAND_LANDMARKS);
            hands.push(HandFrame { side: *side, landmarks, detection_confidence: rng.random_range(0.6..1.0) });
        }
        if let Some(imgs) = images.as_mut() {
            imgs.push(render(&tf, &place, t, config, &mut rng));
        }
        truth.push(tf);
        frames.push(FrameRecord { frame_index: i, timestamp_s: t, pose, face, hands, image_ref: None });
    }
    SynthVideo {
        video: VideoSequence { video_id, infant_id: config.infant_id(index), fps: config.fps, frames },
        labels,
        truth,
        events,
        trunk_px,
        images,
    }
}

// ---------------------------------------------------------------------------
// Rendering

struct Canvas {
    w: usize,
    h: usize,
    px: Vec<f64>,
}

impl Canvas {
    /// Blends `value` with anti-aliased coverage `clamp(0.5 − sdf)` inside
    /// the pixel box `[lo, hi]`.
    fn paint(&mut self, lo: P2, hi: P2, value: f64, sdf: impl Fn(P2) -> f64) {
        let x0 = lo.0.floor().max(0.0) as usize;
        let y0 = lo.1.floor().max(0.0) as usize;
        let x1 = (hi.0.ceil().max(0.0) as usize).min(self.w.saturating_sub(1));
        let y1 = (hi.1.ceil().max(0.0) as usize).min(self.h.saturating_sub(1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                let cov = (0.5 - sdf((x as f64, y as f64))).clamp(0.0, 1.0);
                if cov > 0.0 {
                    let p = &mut self.px[y * self.w + x];
                    *p = *p * (1.0 - cov) + value * cov;
                }
            }
        }
    }

    fn disc(&mut self, c: P2, r: f64, value: f64) {
        self.paint(sub(c, (r + 1.0, r + 1.0)), add(c, (r + 1.0, r + 1.0)), value, |p| norm(sub(p, c)) - r);
    }

    fn capsule(&mut self, a: P2, b: P2, r: f64, value: f64) {
        let lo = (a.0.min(b.0) - r - 1.0, a.1.min(b.1) - r - 1.0);
        let hi = (a.0.max(b.0) + r + 1.0, a.1.max(b.1) + r + 1.0);
        let ab = sub(b, a);
        let len2 = (ab.0 * ab.0 + ab.1 * ab.1).max(1e-12);
        self.paint(lo, hi, value, |p| {
            let ap = sub(p, a);
            let t = ((ap.0 * ab.0 + ap.1 * ab.1) / len2).clamp(0.0, 1.0);
            norm(sub(ap, scale(ab, t))) - r
        });
    }

    fn ellipse(&mut self, c: P2, axes: P2, rotation: f64, value: f64) {
        let r = axes.0.max(axes.1) + 1.0;
        let (s, co) = rotation.sin_cos();
        self.paint(sub(c, (r, r)), add(c, (r, r)), value, |p| {
            let d = sub(p, c);
            let q = (co * d.0 + s * d.1, -s * d.0 + co * d.1);
            (norm((q.0 / axes.0, q.1 / axes.1)) - 1.0) * axes.0.min(axes.1)
        });
    }
}

fn render(tf: &TrueFrame, place: &Placement, t: f64, config: &SynthConfig, rng: &mut ChaCha8Rng) -> GrayImage {
    let (w, h) = (config.image_width, config.image_height);
    let mut c = Canvas { w, h, px: (0..w * h).map(|i| 50.0 + 30.0 * (i / w) as f64 / h as f64).collect() };
    let px = |p: P2| place.to_pixels(p, t);
    let tp = place.trunk_px;
    let j = |joint: Joint| px(tf.joints[joint.index()]);
    let rot = place.rotation + 0.05 * sum_waves(&place.sway, t);

    c.capsule(j(Joint::Neck), j(Joint::MidHip), 0.15 * tp, 140.0);
    c.capsule(j(Joint::LShoulder), j(Joint::RShoulder), 0.07 * tp, 150.0);
    c.ellipse(px(HEAD_CENTER), scale(HEAD_AXES, tp), rot, 200.0);
    for eye in region_points(Region::Eyes) {
        c.ellipse(px(eye), (0.045 * tp, 0.02 * tp), rot, 35.0);
    }
    c.disc(px((0.0, -0.39)), 0.025 * tp, 160.0);
    c.ellipse(px((0.0, -0.3)), (0.07 * tp, 0.028 * tp), rot, 70.0);
    for (sh, el, wr, hand) in [
        (Joint::LShoulder, Joint::LElbow, Joint::LWrist, &tf.hands[0]),
        (Joint::RShoulder, Joint::RElbow, Joint::RWrist, &tf.hands[1]),
    ] {
        c.capsule(j(sh), j(el), 0.06 * tp, 170.0);
        c.capsule(j(el), j(wr), 0.05 * tp, 175.0);
        c.disc(px(hand[0]), 0.05 * tp, 235.0);
        for f in 0..5 {
            c.capsule(px(hand[1 + 4 * f]), px(hand[4 + 4 * f]), 0.018 * tp, 235.0);
        }
    }
    let pixel_noise = Normal::new(0.0, 4.0).expect("finite");
    let pixels = c.px.iter().map(|&v| (v + pixel_noise.sample(rng)).round().clamp(0.0, 255.0) as u8).collect();
    GrayImage { width: w, height: h, pixels }
}

// ---------------------------------------------------------------------------
// Mullen scores

fn standardize(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt();
    v.iter().map(|x| if sd > 0.0 { (x - m) / sd } else { 0.0 }).collect()
}

/// Unit-variance noise with zero sample mean and zero sample correlation with `z`.
fn orthogonal_noise(z: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut e: Vec<f64> = z.iter().map(|_| normal.sample(rng)).collect();
    let zz: f64 = z.iter().map(|v| v * v).sum();
    if zz > 0.0 {
        let proj = e.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() / zz;
        e.iter_mut().zip(z).for_each(|(a, b)| *a -= proj * b);
    }
    standardize(&e)
}

/// Visits at about 1, 3 and 5 months plus one after the analysis window.
/// Scores lie on a line whose slope has sample correlation exactly
/// `coupling` with the true touch ratios (FM) or `gm_coupling` (GM).
pub fn generate_mullen(config: &SynthConfig, infants: &[(String, f64)]) -> Vec<MullenRecord> {
    let mut rng = stream_rng(config.seed, MULLEN_STREAM);
    let ratios: Vec<f64> = infants.iter().map(|i| i.1).collect();
    let z = standardize(&ratios);
    let slopes = |c: f64, base: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let e = orthogonal_noise(&z, rng);
        z.iter().zip(&e).map(|(zi, ei)| base + 0.5 * (c * zi + (1.0 - c * c).sqrt() * ei)).collect()
    };
    let fm = slopes(config.mullen_coupling, 2.0, &mut rng);
    let gm = slopes(config.gm_coupling, 2.5, &mut rng);
    let mut out = Vec::new();
    for (k, (id, _)) in infants.iter().enumerate() {
        let (fm0, gm0) = (rng.random_range(1.0..4.0), rng.random_range(1.0..4.0));
        let ages = [
            1.0 + rng.random_range(-0.3..0.3),
            3.0 + rng.random_range(-0.3..0.3),
            5.0 - rng.random_range(0.0..0.3),
            8.0 + rng.random_range(-0.5..0.5),
        ];
        for age in ages {
            out.push(MullenRecord {
                infant_id: id.clone(),
                visit_age_months: age,
                gm_raw: gm0 + gm[k] * age,
                fm_raw: fm0 + fm[k] * age,
            });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// On-disk dataset

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub manifest_path: PathBuf,
    pub n_videos: usize,
    pub n_frames: usize,
    pub prevalence: f64,
    /// `(infant_id, true touch ratio)` per infant.
    pub true_ratios: Vec<(String, f64)>,
}

pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const MULLEN_FILE: &str = "mullen.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io { path: path.to_path_buf(), source }
}

/// Writes a complete dataset under `out`: `manifest.json`, landmark streams,
/// label CSVs, PGM frames (when rendered), `mullen.csv` and the true touch
/// ratio per infant.
pub fn generate(config: &SynthConfig, out: &Path, exec: Execution) -> Result<SynthSummary, SynthError> {
    config.validate()?;
    for sub in ["landmarks", "labels"] {
        fs::create_dir_all(out.join(sub)).map_err(io(out))?;
    }
    let indices: Vec<usize> = (0..config.n_videos).collect();
    let written = exec.try_map(&indices, |&i| -> Result<(VideoEntry, f64, usize, usize), SynthError> {
        let v = generate_video(config, i);
        let id = v.video.video_id.clone();
        let landmarks = PathBuf::from("landmarks").join(format!("{id}.jsonl"));
        let labels = PathBuf::from("labels").join(format!("{id}.csv"));
        ingest::write_landmarks(&v.video, &out.join(&landmarks))?;
        ingest::write_labels(&v.labels, &out.join(&labels))?;
        let frames_dir = match &v.images {
            Some(imgs) => {
                let dir = PathBuf::from("frames").join(&id);
                fs::create_dir_all(out.join(&dir)).map_err(io(out))?;
                for (k, img) in imgs.iter().enumerate() {
                    ingest::write_pgm(img, &out.join(&dir).join(format!("frame_{k}.pgm")))?;
                }
                Some(dir)
            }
            None => None,
        };
        let on = v.labels.iter().filter(|l| l.on_head).count();
        let entry = VideoEntry {
            video_id: id,
            infant_id: v.video.infant_id.clone(),
            fps: config.fps,
            landmarks_path: landmarks,
            labels_path: Some(labels),
            frames_dir,
        };
        Ok((entry, v.true_ratio(), on, v.labels.len()))
    })?;
    let manifest = DatasetManifest {
        dataset_name: config.dataset_name.clone(),
        videos: written.iter().map(|w| w.0.clone()).collect(),
    };
    let manifest_path = out.join(MANIFEST_FILE);
    ingest::write_manifest(&manifest, &manifest_path)?;
    let true_ratios: Vec<(String, f64)> = written.iter().map(|w| (w.0.infant_id.clone(), w.1)).collect();
    ingest::write_mullen(&generate_mullen(config, &true_ratios), &out.join(MULLEN_FILE))?;
    let mut gt = String::from("infant_id,true_touch_ratio\n");
    for (id, r) in &true_ratios {
        gt.push_str(&format!("{id},{r:?}\n"));
    }
    let gt_path = out.join(GROUND_TRUTH_FILE);
    fs::write(&gt_path, gt).map_err(io(&gt_path))?;
    let on: usize = written.iter().map(|w| w.2).sum();
    let n_frames: usize = written.iter().map(|w| w.3).sum();
    Ok(SynthSummary {
        manifest_path,
        n_videos: config.n_videos,
        n_frames,
        prevalence: on as f64 / n_frames.max(1) as f64,
        true_ratios,
    })
}
