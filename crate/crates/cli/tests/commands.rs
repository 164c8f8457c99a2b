use std::path::Path;

use facetouch::pipeline::{Task, Variant};
use facetouch::svm::Gamma;
use facetouch::Execution;
use facetouch_cli::commands::{
    cmd_correlate, cmd_evaluate, cmd_evaluate_protocols, cmd_extract, cmd_predict, cmd_synth, cmd_train, error_category,
};
use facetouch_cli::config::RunConfig;

fn quick_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.synth.n_videos = 8;
    c.synth.frames_per_video = 60;
    c.synth.render_frames = false;
    c.synth.seed = 2;
    c.pipeline.train_frame_stride = 3;
    c.pipeline.forest.n_trees = 10;
    c.pipeline.grid.pca_thresholds = vec![0.95];
    c.pipeline.grid.c_values = vec![1.0, 10.0];
    c.pipeline.grid.gammas = vec![Gamma::Scale];
    c.pipeline.grid.latent_dims = vec![8];
    c.pipeline.grid.epochs = vec![5];
    c
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn workflow_outputs_are_reproducible_and_carry_provenance() {
    let config = quick_config();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let exec = Execution::Parallel;
    cmd_synth(&config, &d.join("data"), exec).unwrap();

    let m = cmd_extract(&config, &d.join("data"), &d.join("f.csv"), false, exec).unwrap();
    assert_eq!(m.n_rows(), 8 * 60);
    assert_eq!(m.n_cols(), 170);
    cmd_extract(&config, &d.join("data/manifest.json"), &d.join("f2.csv"), false, exec).unwrap();
    assert_eq!(read(&d.join("f.csv")), read(&d.join("f2.csv")));
    let header = read(&d.join("f.csv"));
    assert!(header.starts_with("# facetouch "));
    assert!(header.contains(&format!("# config_sha256 {}", config.hash())));

    for (name, exec) in [("a.json", Execution::Sequential), ("b.json", Execution::Parallel)] {
        cmd_train(&config, Variant::RfPcaSvm, Task::BinaryTouch, &[d.join("f.csv")], &d.join(name), exec).unwrap();
    }
    assert_eq!(read(&d.join("a.json")), read(&d.join("b.json")));
    assert!(read(&d.join("a.json")).contains("config_sha256"));

    let report = cmd_evaluate(&config, &[d.join("a.json")], &d.join("data"), &d.join("r.txt"), exec).unwrap();
    let rows: Vec<&str> = report.configs[0].rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(rows, ["Zero Rule", "Random Chance", "RF-PCA-SVM"]);
    assert_eq!(report.configs[0].comparisons.len(), 2);
    let text = read(&d.join("r.txt"));
    assert!(text.starts_with("# facetouch ") && text.contains("McNemar"));

    let preds = cmd_predict(&config, &d.join("a.json"), None, &d.join("data"), None, &d.join("p.csv"), exec).unwrap();
    assert_eq!(preds.len(), 480);
    assert!(preds.iter().all(|p| p.infant_id.starts_with("infant_")));
    cmd_predict(&config, &d.join("a.json"), None, &d.join("f.csv"), Some(&d.join("data")), &d.join("p2.csv"), exec).unwrap();
    assert_eq!(read(&d.join("p.csv")), read(&d.join("p2.csv")));

    let corr = cmd_correlate(&config, &d.join("p.csv"), &d.join("data/mullen.csv"), &d.join("c.txt")).unwrap();
    assert_eq!(corr.infants.len(), 8);
    assert!(corr.fm.is_some() && corr.gm.is_some());
    let ctext = read(&d.join("c.txt"));
    assert!(ctext.starts_with("# facetouch ") && ctext.contains("FM") && ctext.contains("GM"));
}

#[test]
fn regions_model_and_protocols() {
    let mut config = quick_config();
    config.synth.n_videos = 10;
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let exec = Execution::Parallel;
    cmd_synth(&config, &d.join("a"), exec).unwrap();
    config.synth.seed = 3;
    config.synth.dataset_name = "other".into();
    cmd_synth(&config, &d.join("b"), exec).unwrap();

    cmd_train(&config, Variant::RfPcaSvm, Task::BinaryTouch, &[d.join("a")], &d.join("bin.json"), exec).unwrap();
    cmd_train(&config, Variant::RfPcaSvm, Task::MultiLabelRegions, &[d.join("a")], &d.join("reg.json"), exec).unwrap();
    let preds = cmd_predict(&config, &d.join("bin.json"), Some(&d.join("reg.json")), &d.join("b"), None, &d.join("p.csv"), exec).unwrap();
    for p in &preds {
        let r = p.regions.unwrap();
        assert!(p.on_head || r.iter().all(|f| !f));
    }

    config.pipeline.folds = 3;
    let report = cmd_evaluate_protocols(
        &config,
        &[Variant::RfPcaSvm, Variant::AutoencSvmI],
        Task::BinaryTouch,
        &d.join("a"),
        &d.join("b"),
        &d.join("r.txt"),
        exec,
    )
    .unwrap();
    assert_eq!(report.configs.len(), 3);
    assert_eq!(report.configs[0].name, "Train synthetic - Test other");
    assert_eq!(report.configs[1].name, "Train other - Test synthetic");
    assert!(report.configs[2].name.contains("50%"));
    assert_eq!(report.configs[2].n_test, 5 * 60);
    for c in &report.configs {
        assert_eq!(c.rows.len(), 4);
        assert_eq!(c.comparisons.len(), 4);
    }
}

#[test]
fn failures_have_categories() {
    let config = RunConfig::default();
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_extract(&config, &dir.path().join("missing.json"), &dir.path().join("x.csv"), false, Execution::Sequential)
        .unwrap_err();
    assert_eq!(error_category(&err), "ingest");
    let err = RunConfig::from_toml("[pipeline]\nbogus = 1\n").unwrap_err();
    assert_eq!(error_category(&err), "config");
    std::fs::write(dir.path().join("m.json"), "{\"format\":\"facetouch-model\",\"version\":1").unwrap();
    let err = cmd_evaluate(&config, &[dir.path().join("m.json")], dir.path(), &dir.path().join("r.txt"), Execution::Sequential)
        .unwrap_err();
    assert_eq!(error_category(&err), "pipeline");
}
