use std::path::Path;
use std::process::Command;

use aaa_core::dataset::DatasetSpec;
use aaa_harness::commands::{BUNDLE_DIR, RUN_CONFIG, TRAIN_LOG};
use aaa_harness::{cmd_ablate, cmd_eval, cmd_generate, cmd_train, exit_code, DatasetSource, ExperimentConfig, Mode};

fn tiny(seed: u64, mode: Mode) -> ExperimentConfig {
    let mut spec = DatasetSpec::default_layout(8, seed);
    for s in &mut spec.sites {
        s.n_mdd = 6;
        s.n_nc = 5;
    }
    ExperimentConfig {
        seed,
        mode,
        dataset: DatasetSource::Generate(spec),
        test_fraction: 0.2,
        autoencoder_epochs: 2,
        classifier_epochs: 2,
        autoencoder_hidden: 8,
        latent_dim: 4,
        scale: 64,
        ..ExperimentConfig::default()
    }
}

fn aaa() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aaa"))
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn generate_default_layout_has_1350_samples() {
    let dir = tempfile::tempdir().unwrap();
    let s = cmd_generate(&ExperimentConfig::default(), dir.path()).unwrap();
    assert_eq!(s.total, 1350);
    assert_eq!(s.sites.len(), 4);
    for id in 1..=4 {
        assert!(dir.path().join(format!("site{id}.fcds")).exists());
    }
}

#[test]
fn generate_reports_6670_edges_for_116_rois() {
    let dir = tempfile::tempdir().unwrap();
    let out = aaa()
        .args(["gen", "--n", "116", "--out"])
        .arg(dir.path())
        .env("AAA_LOG", "error")
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("d = 6670"), "{stdout}");
}

#[test]
fn same_seed_same_manifest_hash() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = tiny(4, Mode::Aaa);
    let ha = cmd_generate(&cfg, a.path()).unwrap().manifest_sha256;
    let hb = cmd_generate(&cfg, b.path()).unwrap().manifest_sha256;
    assert_eq!(ha, hb);
    let hc = cmd_generate(&tiny(5, Mode::Aaa), b.path()).unwrap().manifest_sha256;
    assert_ne!(ha, hc);
}

#[test]
fn train_writes_loadable_bundle_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let s = cmd_train(&tiny(6, Mode::Aaa), dir.path()).unwrap();
    assert!(dir.path().join(BUNDLE_DIR).join("bundle.json").exists());
    let log = read(&dir.path().join(TRAIN_LOG));
    let mut lines = log.lines();
    assert_eq!(lines.next().unwrap(), "phase,round,site_id,epoch,loss,accuracy");
    // 2 epochs for each of 4 sites, for the autoencoder and the classifier.
    assert_eq!(lines.count(), 2 * 4 * 2);
    assert_eq!(s.log_rows, 16);
    let again = tempfile::tempdir().unwrap();
    assert_eq!(cmd_train(&tiny(6, Mode::Aaa), again.path()).unwrap().model_sha256, s.model_sha256);
}

#[test]
fn eval_report_columns_and_average() {
    let dir = tempfile::tempdir().unwrap();
    cmd_train(&tiny(8, Mode::Aaa), dir.path()).unwrap();
    let r = cmd_eval(dir.path(), None, None).unwrap();
    let csv = read(&dir.path().join("report.csv"));
    assert_eq!(csv.lines().next().unwrap(), "Site1,Site2,Site3,Site4,Average");
    let mean = r.sites.iter().map(|s| s.accuracy).sum::<f64>() / r.sites.len() as f64;
    assert!((r.average - mean).abs() < 1e-12);
    assert!(r.sites.iter().all(|s| s.own_site_attention.is_some()));
    let hard = cmd_eval(dir.path(), Some(Mode::HardSelect), None).unwrap();
    assert_eq!(hard.mode, Mode::HardSelect);
}

#[test]
fn baselines_train_and_evaluate() {
    for mode in [Mode::Fedavg, Mode::PooledSingle] {
        let dir = tempfile::tempdir().unwrap();
        cmd_train(&tiny(10, mode), dir.path()).unwrap();
        let r = cmd_eval(dir.path(), None, None).unwrap();
        assert_eq!(r.sites.len(), 4);
        assert!(r.sites.iter().all(|s| s.own_site_attention.is_none()));
        assert!(matches!(
            cmd_eval(dir.path(), Some(Mode::Aaa), None),
            Err(aaa_core::Error::Config(_))
        ));
    }
}

#[test]
fn fedavg_over_heterogeneous_classifiers_is_a_config_error() {
    let mut cfg = tiny(12, Mode::Fedavg);
    cfg.classifiers = Some(aaa_harness::ClassifierSetting::Heterogeneous);
    let dir = tempfile::tempdir().unwrap();
    let e = cmd_train(&cfg, dir.path()).unwrap_err();
    assert_eq!(exit_code(&e), 2);
}

#[test]
fn eval_against_other_roi_count_is_a_data_error() {
    let run = tempfile::tempdir().unwrap();
    cmd_train(&tiny(14, Mode::Aaa), run.path()).unwrap();
    let mut other = tiny(14, Mode::Aaa);
    if let DatasetSource::Generate(spec) = &mut other.dataset {
        spec.n = 10;
    }
    let data = tempfile::tempdir().unwrap();
    cmd_generate(&other, data.path()).unwrap();
    let e = cmd_eval(run.path(), None, Some(data.path())).unwrap_err();
    assert!(matches!(e, aaa_core::Error::Dimension(_)), "{e}");
    assert_eq!(exit_code(&e), 3);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.json");
    std::fs::write(&cfg_path, r#"{"rounds": 0}"#).unwrap();
    let status = aaa()
        .args(["train", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path().join("run"))
        .env("AAA_LOG", "error")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    let status = aaa()
        .args(["eval", "--out"])
        .arg(dir.path().join("missing"))
        .env("AAA_LOG", "error")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn binary_train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, serde_json::to_string(&tiny(16, Mode::Aaa)).unwrap()).unwrap();
    let run = dir.path().join("run");
    let ok = aaa()
        .args(["train", "--jobs", "2", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&run)
        .env("AAA_LOG", "error")
        .status()
        .unwrap();
    assert!(ok.success());
    let out = aaa().args(["eval", "--out"]).arg(&run).env("AAA_LOG", "error").output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("Average"), "{stdout}");
    let embedded: ExperimentConfig = serde_json::from_str(&read(&run.join(RUN_CONFIG))).unwrap();
    assert_eq!(embedded, tiny(16, Mode::Aaa).resolved());
}

#[test]
fn ablation_grid_files() {
    let dir = tempfile::tempdir().unwrap();
    let s = cmd_ablate(&tiny(18, Mode::Aaa), 2, dir.path()).unwrap();
    assert_eq!(s.cells.len(), 4);
    assert_eq!(s.seeds, vec![18, 19]);
    for f in ["ablation_mean.csv", "ablation_std.csv", "ablation_seed18.csv", "ablation_seed19.csv"] {
        let text = read(&dir.path().join(f));
        assert_eq!(text.lines().count(), 5, "{f}");
        assert!(text.starts_with("Subset,MoE,Site1,Site2,Site3,Site4,Average"));
    }
    assert!(s.table().contains(&s.ordering));
}
