//! Face-region estimation, aligned cropping and HOG appearance descriptors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Joint, Keypoint2D, VideoSequence, FACE_EYES, FACE_MOUTH};

#[derive(Debug, Error, PartialEq)]
pub enum ImagingError {
    #[error("no frame of video {0} has any head keypoint")]
    NoFaceAnywhere(String),
    #[error("patch is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch { got_w: usize, got_h: usize, want_w: usize, want_h: usize },
}

/// 8-bit grayscale image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, fill: u8) -> Self {
        Self { width, height, pixels: vec![fill; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Bilinear sample with edge clamping; integer coordinates are pixel centers.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let p = |xx, yy| self.get(xx, yy) as f64;
        let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
        let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Real-valued grayscale patch, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Patch {
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn flipped_horizontally(&self) -> Patch {
        Patch::from_fn(self.width, self.height, |x, y| self.at(self.width - 1 - x, y))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionProvenance {
    FromFaceLandmarks,
    FromPose,
    FromNeighborFrames,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceRegion {
    /// Pixel-space center.
    pub center: Keypoint2D,
    pub size_px: f64,
    /// Eye-line angle; the crop's horizontal axis follows it.
    pub rotation_deg: f64,
    pub provenance: RegionProvenance,
}

/// Oriented sampling window in pixel space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropWindow {
    pub center: (f64, f64),
    pub width_px: f64,
    pub height_px: f64,
    pub rotation_deg: f64,
}

impl FaceRegion {
    pub fn window(&self) -> CropWindow {
        CropWindow {
            center: (self.center.x, self.center.y),
            width_px: self.size_px,
            height_px: self.size_px,
            rotation_deg: self.rotation_deg,
        }
    }

    /// Point at `(u, v)` in the region's rotated frame, in pixels.
    fn offset(&self, u: f64, v: f64) -> (f64, f64) {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        (self.center.x + c * u - s * v, self.center.y + s * u + c * v)
    }
}

/// The three HOG crops of a face.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HogRegion {
    Face,
    Upper,
    Lower,
}

impl HogRegion {
    pub const ALL: [HogRegion; 3] = [HogRegion::Face, HogRegion::Upper, HogRegion::Lower];

    pub fn tag(self) -> &'static str {
        match self {
            HogRegion::Face => "face",
            HogRegion::Upper => "upper",
            HogRegion::Lower => "lower",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HogConfig {
    pub face_size: (usize, usize),
    pub half_size: (usize, usize),
    pub cell: usize,
    /// Block side in cells.
    pub block: usize,
    /// Block stride in pixels.
    pub block_stride: usize,
    pub bins: usize,
    pub clip: f64,
}

impl Default for HogConfig {
    fn default() -> Self {
        Self { face_size: (32, 32), half_size: (32, 16), cell: 8, block: 2, block_stride: 8, bins: 9, clip: 0.2 }
    }
}

impl HogConfig {
    pub fn size_of(&self, region: HogRegion) -> (usize, usize) {
        match region {
            HogRegion::Face => self.face_size,
            _ => self.half_size,
        }
    }

    fn block_grid(&self, w: usize, h: usize) -> (usize, usize) {
        let side = self.block * self.cell;
        ((w - side) / self.block_stride + 1, (h - side) / self.block_stride + 1)
    }

    fn block_len(&self) -> usize {
        self.block * self.block * self.bins
    }

    /// Descriptor length for a `w`×`h` patch.
    pub fn descriptor_len(&self, w: usize, h: usize) -> usize {
        let (bx, by) = self.block_grid(w, h);
        bx * by * self.block_len()
    }

    pub fn region_len(&self, region: HogRegion) -> usize {
        let (w, h) = self.size_of(region);
        self.descriptor_len(w, h)
    }

    /// Total appearance dimensions over the three crops.
    pub fn total_len(&self) -> usize {
        HogRegion::ALL.iter().map(|&r| self.region_len(r)).sum()
    }

    /// Index map `p` with `hog(flip(patch))[k] == hog(patch)[p[k]]`: blocks and
    /// cells mirror left-right, orientation bin `b` reflects to `bins - 1 - b`.
    pub fn flip_permutation(&self, region: HogRegion) -> Vec<usize> {
        let (w, h) = self.size_of(region);
        let (nbx, nby) = self.block_grid(w, h);
        let bl = self.block_len();
        let mut perm = Vec::with_capacity(nbx * nby * bl);
        for by in 0..nby {
            for bx in 0..nbx {
                for cy in 0..self.block {
                    for cx in 0..self.block {
                        for b in 0..self.bins {
                            let mbx = nbx - 1 - bx;
                            let mcx = self.block - 1 - cx;
                            let mb = self.bins - 1 - b;
                            perm.push((by * nbx + mbx) * bl + (cy * self.block + mcx) * self.bins + mb);
                        }
                    }
                }
            }
        }
        perm
    }
}

/// HOG descriptor of a patch: central-difference gradients with edge clamp,
/// unsigned orientation voted bilinearly into `bins` per cell, overlapping
/// blocks normalized with L2-Hys, concatenated row-major.
pub fn hog(patch: &Patch, config: &HogConfig) -> Result<Vec<f64>, ImagingError> {
    let (w, h) = (patch.width, patch.height);
    let side = config.block * config.cell;
    let fits = w >= side
        && h >= side
        && w % config.cell == 0
        && h % config.cell == 0
        && (w - side) % config.block_stride == 0
        && (h - side) % config.block_stride == 0;
    if !fits || patch.data.len() != w * h {
        let (want_w, want_h) = config.face_size;
        return Err(ImagingError::DimensionMismatch { got_w: w, got_h: h, want_w, want_h });
    }

    let cells_x = w / config.cell;
    let cells_y = h / config.cell;
    let bins = config.bins;
    let bin_width = 180.0 / bins as f64;
    let mut cells = vec![0.0f64; cells_x * cells_y * bins];
    for y in 0..h {
        for x in 0..w {
            let gx = patch.at((x + 1).min(w - 1), y) - patch.at(x.saturating_sub(1), y);
            let gy = patch.at(x, (y + 1).min(h - 1)) - patch.at(x, y.saturating_sub(1));
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let mut theta = gy.atan2(gx).to_degrees();
            if theta < 0.0 {
                theta += 180.0;
            }
            if theta >= 180.0 {
                theta -= 180.0;
            }
            let pos = theta / bin_width - 0.5;
            let lo = pos.floor();
            let frac = pos - lo;
            let b0 = (lo as i64).rem_euclid(bins as i64) as usize;
            let b1 = (b0 + 1) % bins;
            let cell = ((y / config.cell) * cells_x + x / config.cell) * bins;
            cells[cell + b0] += mag * (1.0 - frac);
            cells[cell + b1] += mag * frac;
        }
    }

    let (nbx, nby) = config.block_grid(w, h);
    let stride = config.block_stride / config.cell;
    let mut out = Vec::with_capacity(nbx * nby * config.block_len());
    let mut block = Vec::with_capacity(config.block_len());
    for by in 0..nby {
        for bx in 0..nbx {
            block.clear();
            for cy in 0..config.block {
                for cx in 0..config.block {
                    let c = ((by * stride + cy) * cells_x + bx * stride + cx) * bins;
                    block.extend_from_slice(&cells[c..c + bins]);
                }
            }
            l2_hys(&mut block, config.clip);
            out.extend_from_slice(&block);
        }
    }
    Ok(out)
}

fn l2_hys(v: &mut [f64], clip: f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    for x in v.iter_mut() {
        *x = (*x / norm).min(clip);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Samples an oriented window into a `target_w`×`target_h` patch (bilinear,
/// edge-clamped). The patch's horizontal axis follows `rotation_deg`.
pub fn align_and_crop(image: &GrayImage, window: &CropWindow, target_w: usize, target_h: usize) -> Patch {
    let (s, c) = window.rotation_deg.to_radians().sin_cos();
    let (cx, cy) = window.center;
    Patch::from_fn(target_w, target_h, |i, j| {
        let u = ((i as f64 + 0.5) / target_w as f64 - 0.5) * window.width_px;
        let v = ((j as f64 + 0.5) / target_h as f64 - 0.5) * window.height_px;
        image.sample(cx + c * u - s * v, cy + s * u + c * v)
    })
}

fn mean_point(points: impl Iterator<Item = (f64, f64)>) -> Option<(f64, f64)> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (x, y) in points {
        sx += x;
        sy += y;
        n += 1;
    }
    (n > 0).then(|| (sx / n as f64, sy / n as f64))
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Per-frame face region in pixel space of a raw (unnormalized) video.
pub fn estimate_face_region(video: &VideoSequence) -> Result<Vec<FaceRegion>, ImagingError> {
    let trunk = |f: &crate::model::FrameRecord| {
        Some(dist(f.pose.pos(Joint::Neck)?, f.pose.pos(Joint::MidHip)?))
    };
    let median_trunk = median(video.frames.iter().filter_map(trunk).collect());

    let direct: Vec<Option<FaceRegion>> = video
        .frames
        .iter()
        .map(|f| {
            let center = mean_point(Joint::HEAD.iter().filter_map(|&j| f.pose.pos(j)))?;
            let size_px = match (f.pose.pos(Joint::LEar), f.pose.pos(Joint::REar)) {
                (Some(l), Some(r)) if dist(l, r) > 0.0 => 2.2 * dist(l, r),
                _ => match trunk(f).filter(|t| *t > 0.0).or(median_trunk) {
                    Some(t) if t > 0.0 => 1.5 * t,
                    _ => 32.0,
                },
            };
            let face_eyes = f.face.as_ref().and_then(|face| {
                let right = mean_point(face.landmarks[36..42].iter().filter_map(Keypoint2D::pos))?;
                let left = mean_point(face.landmarks[42..48].iter().filter_map(Keypoint2D::pos))?;
                Some((right, left))
            });
            let pose_eyes = f.pose.pos(Joint::REye).zip(f.pose.pos(Joint::LEye));
            let (rotation_deg, provenance) = match (face_eyes, pose_eyes) {
                (Some((r, l)), _) => ((l.1 - r.1).atan2(l.0 - r.0).to_degrees(), RegionProvenance::FromFaceLandmarks),
                (None, Some((r, l))) => ((l.1 - r.1).atan2(l.0 - r.0).to_degrees(), RegionProvenance::FromPose),
                (None, None) => (0.0, RegionProvenance::FromPose),
            };
            Some(FaceRegion { center: Keypoint2D::new(center.0, center.1, 1.0), size_px, rotation_deg, provenance })
        })
        .collect();

    let known: Vec<usize> = (0..direct.len()).filter(|&i| direct[i].is_some()).collect();
    if known.is_empty() {
        return Err(ImagingError::NoFaceAnywhere(video.video_id.clone()));
    }
    Ok((0..direct.len())
        .map(|i| match &direct[i] {
            Some(r) => r.clone(),
            None => {
                // nearest known frame by position; ties resolve to the earlier one
                let k = *known.iter().min_by_key(|&&k| (k.abs_diff(i), k)).expect("nonempty");
                FaceRegion { provenance: RegionProvenance::FromNeighborFrames, ..direct[k].clone().expect("known") }
            }
        })
        .collect())
}

/// Mean landmark confidence of the eye and mouth groups; zeros without a face.
pub fn face_region_confidences(face: Option<&crate::model::FaceFrame>) -> (f64, f64) {
    let Some(face) = face else { return (0.0, 0.0) };
    let mean_conf = |r: std::ops::Range<usize>| {
        let n = r.len() as f64;
        r.map(|i| face.landmarks.get(i).filter(|k| k.present).map_or(0.0, |k| k.confidence)).sum::<f64>() / n
    };
    (mean_conf(FACE_EYES), mean_conf(FACE_MOUTH))
}

/// Appearance features of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceAppearance {
    /// Face, upper and lower HOG concatenated; `None` when no image.
    pub hog: Option<Vec<f64>>,
    pub upper_conf: f64,
    pub lower_conf: f64,
}

/// HOG of the face, upper-face and lower-face crops for every frame.
/// `load` resolves a frame's image reference.
pub fn face_hog_features<E>(
    video: &VideoSequence,
    regions: &[FaceRegion],
    config: &HogConfig,
    load: impl Fn(&std::path::Path) -> Result<GrayImage, E>,
) -> Result<Vec<FaceAppearance>, E>
where
    E: From<ImagingError>,
{
    video
        .frames
        .iter()
        .zip(regions)
        .map(|(frame, region)| {
            let (upper_conf, lower_conf) = face_region_confidences(frame.face.as_ref());
            let hog_vec = match &frame.image_ref {
                None => None,
                Some(path) => {
                    let image = load(path)?;
                    let face_pts = |r: std::ops::Range<usize>| {
                        frame.face.as_ref().and_then(|f| mean_point(f.landmarks[r].iter().filter_map(Keypoint2D::pos)))
                    };
                    let upper_center = face_pts(FACE_EYES)
                        .or_else(|| mean_point([Joint::LEye, Joint::REye].iter().filter_map(|&j| frame.pose.pos(j))))
                        .unwrap_or_else(|| region.offset(0.0, -0.15 * region.size_px));
                    let lower_center =
                        face_pts(FACE_MOUTH).unwrap_or_else(|| region.offset(0.0, 0.25 * region.size_px));
                    let half = |center| CropWindow {
                        center,
                        width_px: region.size_px,
                        height_px: region.size_px / 2.0,
                        rotation_deg: region.rotation_deg,
                    };
                    let mut v = Vec::with_capacity(config.total_len());
                    for (reg, window) in [
                        (HogRegion::Face, region.window()),
                        (HogRegion::Upper, half(upper_center)),
                        (HogRegion::Lower, half(lower_center)),
                    ] {
                        let (w, h) = config.size_of(reg);
                        v.extend(hog(&align_and_crop(&image, &window, w, h), config)?);
                    }
                    Some(v)
                }
            };
            Ok(FaceAppearance { hog: hog_vec, upper_conf, lower_conf })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FaceFrame, FrameRecord, LandmarkSpace, PoseFrame};
    use rand::{Rng, SeedableRng};

    fn random_patch(w: usize, h: usize, seed: u64) -> Patch {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Patch::from_fn(w, h, |_, _| rng_value(&mut rng))
    }

    fn rng_value(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
        rng.random_range(0.0..255.0)
    }

    #[test]
    fn descriptor_dimensions() {
        let cfg = HogConfig::default();
        // ((W - block) / stride + 1) * ((H - block) / stride + 1) * 36
        let formula = |w: usize, h: usize| ((w - 16) / 8 + 1) * ((h - 16) / 8 + 1) * 36;
        assert_eq!(formula(32, 32), 324);
        assert_eq!(formula(32, 16), 108);
        assert_eq!(hog(&random_patch(32, 32, 1), &cfg).unwrap().len(), formula(32, 32));
        assert_eq!(hog(&random_patch(32, 16, 2), &cfg).unwrap().len(), formula(32, 16));
        assert_eq!(cfg.total_len(), 540);
    }

    #[test]
    fn constant_patch_is_all_zero() {
        let v = hog(&Patch::from_fn(32, 32, |_, _| 77.0), &HogConfig::default()).unwrap();
        assert_eq!(v.len(), 324);
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn intensity_shift_invariance() {
        let cfg = HogConfig::default();
        let p = Patch::from_fn(32, 32, |x, y| ((x * 7 + y * 3) % 150) as f64);
        let q = Patch::from_fn(32, 32, |x, y| p.at(x, y) + 50.0);
        assert_eq!(hog(&p, &cfg).unwrap(), hog(&q, &cfg).unwrap());
    }

    #[test]
    fn wrong_dimensions_rejected() {
        let err = hog(&Patch::from_fn(30, 32, |_, _| 0.0), &HogConfig::default()).unwrap_err();
        assert!(matches!(err, ImagingError::DimensionMismatch { got_w: 30, .. }));
    }

    #[test]
    fn block_norms_bounded() {
        let cfg = HogConfig::default();
        for seed in 0..10 {
            let v = hog(&random_patch(32, 32, seed), &cfg).unwrap();
            for block in v.chunks(36) {
                let n = block.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!(n <= 1.0 + 1e-9);
                assert!(block.iter().all(|x| x.is_finite()));
            }
        }
    }

    #[test]
    fn flip_equivariance_on_random_patches() {
        let cfg = HogConfig::default();
        for region in HogRegion::ALL {
            let (w, h) = cfg.size_of(region);
            let perm = cfg.flip_permutation(region);
            for seed in 0..20 {
                let p = random_patch(w, h, 100 + seed);
                let a = hog(&p, &cfg).unwrap();
                let b = hog(&p.flipped_horizontally(), &cfg).unwrap();
                for k in 0..a.len() {
                    assert!((b[k] - a[perm[k]]).abs() < 1e-9, "{region:?} seed {seed} k {k}");
                }
            }
            // involution
            for (k, &p) in perm.iter().enumerate() {
                assert_eq!(perm[p], k);
            }
        }
    }

    #[test]
    fn crop_of_centered_square() {
        let mut img = GrayImage::new(64, 64, 0);
        for y in 24..40 {
            for x in 24..40 {
                img.pixels[y * 64 + x] = 255;
            }
        }
        let win = CropWindow { center: (31.5, 31.5), width_px: 32.0, height_px: 32.0, rotation_deg: 0.0 };
        let patch = align_and_crop(&img, &win, 32, 32);
        assert_eq!(patch.at(16, 16), 255.0);
        assert_eq!(patch.at(0, 0), 0.0);
        assert_eq!(patch.at(31, 31), 0.0);
        // symmetric about the crop center
        assert_eq!(patch.at(8, 16), patch.at(23, 16));
        assert_eq!(patch.at(9, 16), 255.0);
    }

    #[test]
    fn constant_image_and_out_of_bounds_crop() {
        let img = GrayImage::new(20, 20, 93);
        let win = CropWindow { center: (-10.0, 25.0), width_px: 40.0, height_px: 20.0, rotation_deg: 33.0 };
        let patch = align_and_crop(&img, &win, 32, 16);
        assert_eq!(patch.width, 32);
        assert_eq!(patch.height, 16);
        assert!(patch.data.iter().all(|&v| (v - 93.0).abs() < 1e-12));
    }

    fn frame_with(idx: usize, pts: &[(Joint, (f64, f64))]) -> FrameRecord {
        let mut pose = PoseFrame::default();
        for &(j, (x, y)) in pts {
            *pose.get_mut(j) = Keypoint2D::new(x, y, 1.0);
        }
        FrameRecord { frame_index: idx, timestamp_s: idx as f64, pose, face: None, hands: vec![], image_ref: None }
    }

    fn video(frames: Vec<FrameRecord>) -> VideoSequence {
        VideoSequence { video_id: "v".into(), infant_id: "i".into(), fps: 1.0, frames }
    }

    #[test]
    fn region_from_ears() {
        let f = frame_with(0, &[(Joint::LEar, (110.0, 100.0)), (Joint::REar, (90.0, 100.0)), (Joint::Nose, (100.0, 106.0))]);
        let r = estimate_face_region(&video(vec![f])).unwrap();
        assert!((r[0].size_px - 44.0).abs() < 1e-12);
        assert!((r[0].center.x - 100.0).abs() < 1e-12);
        assert!((r[0].center.y - 102.0).abs() < 1e-12);
    }

    #[test]
    fn region_falls_back_to_trunk_and_neighbors() {
        let head = [(Joint::Nose, (50.0, 40.0)), (Joint::Neck, (50.0, 60.0)), (Joint::MidHip, (50.0, 100.0))];
        let frames: Vec<FrameRecord> = (0..10)
            .map(|i| if i == 5 || i == 9 { frame_with(i, &head) } else { frame_with(i, &[]) })
            .collect();
        let mut frames = frames;
        frames[9].pose.get_mut(Joint::Nose).x = 70.0;
        let r = estimate_face_region(&video(frames)).unwrap();
        assert_eq!(r.len(), 10);
        assert!((r[5].size_px - 60.0).abs() < 1e-12);
        assert_eq!(r[7].provenance, RegionProvenance::FromNeighborFrames);
        assert_eq!(r[7].center.x, 50.0, "tie between frames 5 and 9 goes to the earlier one");
        assert_eq!(r[8].center.x, 70.0);
        assert_eq!(r[0].center.x, 50.0);
    }

    #[test]
    fn headless_video_errors() {
        let frames = (0..3).map(|i| frame_with(i, &[(Joint::Neck, (1.0, 1.0))])).collect();
        assert_eq!(
            estimate_face_region(&video(frames)).unwrap_err(),
            ImagingError::NoFaceAnywhere("v".into())
        );
    }

    #[test]
    fn appearance_without_images_keeps_confidences() {
        let mut f = frame_with(0, &[(Joint::Nose, (10.0, 10.0))]);
        let mut lm = vec![Keypoint2D::new(0.0, 0.0, 0.5); 68];
        for k in &mut lm[36..48] {
            k.confidence = 0.8;
        }
        f.face = Some(FaceFrame { landmarks: lm, source_space: LandmarkSpace::FullFrame });
        let v = video(vec![f]);
        let regions = estimate_face_region(&v).unwrap();
        let out = face_hog_features(&v, &regions, &HogConfig::default(), |_| -> Result<GrayImage, ImagingError> {
            unreachable!()
        })
        .unwrap();
        assert!(out[0].hog.is_none());
        assert!((out[0].upper_conf - 0.8).abs() < 1e-12);
        assert!((out[0].lower_conf - 0.5).abs() < 1e-12);
    }

    #[test]
    fn appearance_with_image_has_540_dims() {
        let mut f = frame_with(0, &[(Joint::LEar, (40.0, 30.0)), (Joint::REar, (24.0, 30.0))]);
        f.image_ref = Some("frame_0.pgm".into());
        let v = video(vec![f]);
        let regions = estimate_face_region(&v).unwrap();
        let img = GrayImage { width: 64, height: 64, pixels: (0..64 * 64).map(|i| (i % 251) as u8).collect() };
        let out = face_hog_features(&v, &regions, &HogConfig::default(), |_| Ok::<_, ImagingError>(img.clone())).unwrap();
        assert_eq!(out[0].hog.as_ref().unwrap().len(), 540);
    }
}
