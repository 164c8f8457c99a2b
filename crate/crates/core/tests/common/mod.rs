#![allow(dead_code)]

use facetouch::extract::{extract_video, ExtractConfig};
use facetouch::model::{build_manifest, FeatureMatrix};
use facetouch::pipeline::PipelineSpec;
use facetouch::svm::Gamma;
use facetouch::synth::{generate_video, SynthConfig};

pub fn synth_config(n_videos: usize, frames: usize, seed: u64) -> SynthConfig {
    SynthConfig { n_videos, frames_per_video: frames, render_frames: false, seed, ..Default::default() }
}

/// Landmark features of synthetic videos, extracted in memory.
pub fn dataset(n_videos: usize, frames: usize, seed: u64) -> FeatureMatrix {
    let cfg = synth_config(n_videos, frames, seed);
    let mut m = FeatureMatrix::new(build_manifest(false));
    for i in 0..n_videos {
        let v = generate_video(&cfg, i);
        m.extend(&extract_video(&v.video, &v.labels, &ExtractConfig::default()).unwrap());
    }
    m
}

/// A spec with a tiny grid so tests stay quick.
pub fn small_spec() -> PipelineSpec {
    let mut spec = PipelineSpec { seed: 3, train_frame_stride: 3, ..Default::default() };
    spec.forest.n_trees = 20;
    spec.grid.pca_thresholds = vec![0.9, 0.99];
    spec.grid.c_values = vec![1.0, 10.0];
    spec.grid.gammas = vec![Gamma::Scale, Gamma::Fixed(0.1)];
    spec.grid.latent_dims = vec![8];
    spec.grid.epochs = vec![5, 10];
    spec
}
