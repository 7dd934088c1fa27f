use std::path::{Path, PathBuf};
use std::process::Command;

use faceage::descriptors::{max_offdiag_correlation, sample_patches, FilterBank};
use faceage::store::{FeatureTable, ModelFile};
use faceage::synth::{generate, write_dataset, SynthConfig};
use faceage::{Algorithm, Matrix, Model};
use faceage_cli::{
    cmd_curve, cmd_evaluate, cmd_extract, cmd_learn_filters, cmd_predict, cmd_train, load_face, read_manifest,
    read_predictions, CliError, Protocol, RunConfig,
};

fn dataset(dir: &Path, count: usize, persons: usize, seed: u64) -> PathBuf {
    let cfg = SynthConfig {
        count,
        persons,
        ..SynthConfig::default()
    };
    write_dataset(dir, &generate(&cfg, seed).unwrap()).unwrap()
}

fn lbp_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.features.descriptors = "lbp".into();
    cfg
}

fn small_bank_config(dir: &Path, manifest: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.filters.l = 5;
    cfg.filters.patches = 4000;
    let bank = dir.join("bank.txt");
    cmd_learn_filters(&cfg, manifest, false, &bank).unwrap();
    cfg.features.bank = Some(bank);
    cfg
}

fn one_cell(cfg: &mut RunConfig, algo: &str) {
    cfg.regression.algorithm = algo.into();
    cfg.regression.gammas = vec![0.5];
    cfg.regression.lambdas = vec![1e-3];
    cfg.regression.cs = vec![100.0];
    cfg.regression.epsilons = vec![0.5];
}

#[test]
fn extract_shapes_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 5, 5, 1);
    let cfg = small_bank_config(dir.path(), &manifest);
    let a = dir.path().join("a.agfv");
    let s = cmd_extract(&cfg, &manifest, &a).unwrap();
    assert_eq!((s.rows, s.dims, s.skipped), (5, 6656, 0));
    let b = dir.path().join("b.agfv");
    cmd_extract(&cfg, &manifest, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let lbp = dir.path().join("lbp.agfv");
    let s = cmd_extract(&lbp_config(), &manifest, &lbp).unwrap();
    assert_eq!((s.rows, s.dims), (5, 3328));
    let table = FeatureTable::read(&lbp).unwrap();
    let ids: Vec<String> = read_manifest(&manifest).unwrap().into_iter().map(|r| r.id).collect();
    assert_eq!(table.ids, ids);
}

#[test]
fn extract_skips_bad_records() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 4, 4, 2);
    std::fs::write(dir.path().join("landmarks/face_00001.pts"), "version: 1\nn_points: 2\n{\n1 2\n3 4\n}\n").unwrap();
    std::fs::remove_file(dir.path().join("images/face_00002.pgm")).unwrap();
    let out = dir.path().join("f.agfv");
    let s = cmd_extract(&lbp_config(), &manifest, &out).unwrap();
    assert_eq!((s.rows, s.skipped), (2, 2));
    let table = FeatureTable::read(&out).unwrap();
    assert_eq!(table.ids, vec!["images/face_00000.pgm", "images/face_00003.pgm"]);
}

#[test]
fn learn_filters_is_reproducible_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 10, 10, 3);
    let mut cfg = RunConfig::default();
    cfg.filters.l = 5;
    cfg.filters.patches = 3000;
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    let s = cmd_learn_filters(&cfg, &manifest, false, &a).unwrap();
    assert_eq!(s.sources, 5);
    cmd_learn_filters(&cfg, &manifest, false, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(s.bank.provenance().contains("seed=0"));
    assert!(s.bank.provenance().contains("sources=5"));

    // Bank from all 10 faces, checked on freshly sampled patches that ICA never saw.
    cfg.filters.patches = 5000;
    let full = dir.path().join("full.txt");
    assert_eq!(cmd_learn_filters(&cfg, &manifest, true, &full).unwrap().sources, 10);
    let norm = cfg.normalizer().unwrap();
    let scheme = cfg.scheme().unwrap();
    let images: Vec<_> = read_manifest(&manifest)
        .unwrap()
        .iter()
        .map(|r| load_face(r, &scheme, &norm).unwrap().image)
        .collect();
    let patches = sample_patches(&images, 5, 5000, 1234).unwrap();
    let bank = FilterBank::from_text(&std::fs::read_to_string(&full).unwrap()).unwrap();
    let corr = max_offdiag_correlation(&bank, &patches);
    assert!(corr <= 0.1, "held-out correlation {corr}");

    cfg.filters.patches = 20 * 25 - 1;
    let err = cmd_learn_filters(&cfg, &manifest, false, &dir.path().join("c.txt")).unwrap_err();
    assert!(matches!(err, CliError::Usage(ref m) if m.contains("20·l²")), "{err}");
    assert!(!dir.path().join("c.txt").exists());
}

#[test]
fn train_tags_and_learnability() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 30, 30, 4);
    let features = dir.path().join("f.agfv");
    let mut cfg = lbp_config();
    cmd_extract(&cfg, &manifest, &features).unwrap();
    for (algo, tag) in [("krr", 1u8), ("svr", 2u8)] {
        one_cell(&mut cfg, algo);
        let out = dir.path().join(format!("{algo}.agmd"));
        let s = cmd_train(&cfg, &features, &manifest, &out).unwrap();
        assert_eq!(s.samples, 30);
        assert!(s.train_mae.is_finite() && s.cv_mae.is_finite());
        assert!(s.train_mae < s.mean_predictor_mae);
        assert_eq!(std::fs::read(&out).unwrap()[5], tag);
        let m = ModelFile::read(&out).unwrap();
        assert_eq!(m.model.algorithm(), algo.parse::<Algorithm>().unwrap());
        assert_eq!(m.layout, "size=120x126;grid=4x3;lbp=8");
    }
}

#[test]
fn train_rejects_mismatched_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 8, 8, 5);
    let features = dir.path().join("f.agfv");
    cmd_extract(&lbp_config(), &manifest, &features).unwrap();
    let mut cfg = lbp_config();
    cfg.features.grid = [2, 2];
    let err = cmd_train(&cfg, &features, &manifest, &dir.path().join("m.agmd")).unwrap_err();
    assert!(matches!(err, CliError::Data(ref m) if m.contains("layout")), "{err}");

    let other = tempfile::tempdir().unwrap();
    let other_manifest = dataset(other.path(), 3, 3, 6);
    std::fs::write(other.path().join("manifest.csv"), {
        let text = std::fs::read_to_string(&other_manifest).unwrap();
        text.replace("face_00000", "face_x")
    })
    .unwrap();
    let err = cmd_train(&lbp_config(), &features, &other_manifest, &dir.path().join("m.agmd")).unwrap_err();
    assert!(matches!(err, CliError::Data(_)));
}

#[test]
fn predict_matches_library_composition() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 12, 12, 7);
    let features = dir.path().join("f.agfv");
    let mut cfg = lbp_config();
    cmd_extract(&cfg, &manifest, &features).unwrap();
    one_cell(&mut cfg, "krr");
    cfg.regression.lambdas = vec![1e-9];
    cfg.regression.folds = 3;
    let model_path = dir.path().join("m.agmd");
    cmd_train(&cfg, &features, &manifest, &model_path).unwrap();

    let records = read_manifest(&manifest).unwrap();
    let r = &records[3];
    let p1 = cmd_predict(&cfg, &model_path, &r.image_path, &r.landmarks_path).unwrap();
    let p2 = cmd_predict(&cfg, &model_path, &r.image_path, &r.landmarks_path).unwrap();
    assert_eq!(p1, p2);
    assert!((p1 - r.age).abs() <= 0.1, "{p1} vs {}", r.age);

    let face = load_face(r, &cfg.scheme().unwrap(), &cfg.normalizer().unwrap()).unwrap();
    let v = cfg.extractor().unwrap().extract(&face).unwrap();
    let model = ModelFile::read(&model_path).unwrap().model;
    let direct = model.predict(&Matrix::new(1, v.values.len(), v.values).unwrap()).unwrap()[0];
    assert_eq!(p1, direct);
    assert!(matches!(model, Model::Krr(_)));

    let mut both = cfg.clone();
    both.features.descriptors = "both".into();
    let bank = dir.path().join("bank.txt");
    let mut learn = RunConfig::default();
    learn.filters.l = 3;
    learn.filters.n = 4;
    learn.filters.patches = 1000;
    cmd_learn_filters(&learn, &manifest, true, &bank).unwrap();
    both.features.bank = Some(bank);
    let err = cmd_predict(&both, &model_path, &r.image_path, &r.landmarks_path).unwrap_err();
    assert!(err.to_string().contains("layout"));
}

#[test]
fn evaluate_lopo_covers_every_image_once() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 12, 3, 8);
    let features = dir.path().join("f.agfv");
    let mut cfg = lbp_config();
    cmd_extract(&cfg, &manifest, &features).unwrap();
    one_cell(&mut cfg, "krr");
    cfg.regression.folds = 2;
    let out = dir.path().join("lopo");
    let report = cmd_evaluate(&cfg, &features, &manifest, Protocol::Lopo, None, &out).unwrap();
    assert_eq!(report.folds.len(), 3);
    assert!(report.folds.iter().all(|f| f.train == 8 && f.test == 4));
    let preds = read_predictions(&out.join("predictions.csv")).unwrap();
    let mut ids: Vec<_> = preds.iter().map(|p| p.id.clone()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 12);

    let max_err = preds.iter().map(|p| p.abs_error()).fold(0.0, f64::max);
    let curve_path = dir.path().join("curve.csv");
    let curve = cmd_curve(&out.join("predictions.csv"), max_err.ceil() as u32, &curve_path).unwrap();
    assert_eq!(*curve.values.last().unwrap(), 100.0);
    assert!(std::fs::read_to_string(&curve_path).unwrap().starts_with("level,cs_percent\n0,"));
    let text = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(text.contains("protocol: lopo") && text.contains("filter bank: none"));
}

#[test]
fn evaluate_holdout_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 10, 1, 9);
    let features = dir.path().join("f.agfv");
    let mut cfg = lbp_config();
    cmd_extract(&cfg, &manifest, &features).unwrap();
    one_cell(&mut cfg, "svr");
    cfg.regression.folds = 2;
    let out = dir.path().join("holdout");
    let report = cmd_evaluate(&cfg, &features, &manifest, Protocol::Holdout, None, &out).unwrap();
    assert_eq!((report.folds[0].train, report.folds[0].test), (5, 5));
    let err = cmd_evaluate(&cfg, &features, &manifest, Protocol::Lopo, None, &out).unwrap_err();
    assert!(matches!(err, CliError::Data(ref m) if m.contains("2 persons")), "{err}");

    // Hyperparameters fixed by a model file.
    let model = dir.path().join("m.agmd");
    cmd_train(&cfg, &features, &manifest, &model).unwrap();
    let fixed = cmd_evaluate(&cfg, &features, &manifest, Protocol::Holdout, Some(&model), &dir.path().join("fixed")).unwrap();
    assert_eq!(fixed.folds[0].cell, report.folds[0].cell);
}

fn faceage(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_faceage")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn binary_exit_codes() {
    assert_eq!(faceage(&["--help"]).0, 0);
    assert_eq!(faceage(&["--version"]).0, 0);
    assert_eq!(faceage(&["frobnicate"]).0, 1);
    assert_eq!(faceage(&["extract", "--manifest", "x.csv"]).0, 1);

    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = d.join("missing.csv");
    let (code, _, err) = faceage(&["extract", "--manifest", missing.to_str().unwrap(), "--out", "o", "--descriptors", "lbp"]);
    assert_eq!(code, 2, "{err}");

    let manifest = dataset(d, 10, 10, 10);
    let m = manifest.to_str().unwrap();
    let f = d.join("f.agfv");
    let (code, stdout, _) = faceage(&["extract", "--manifest", m, "--out", f.to_str().unwrap(), "--descriptors", "lbp"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("10 x 3328"));
    // BSIF requested without a bank: configuration problem.
    assert_eq!(faceage(&["extract", "--manifest", m, "--out", "o"]).0, 1);

    let cfg = d.join("c.toml");
    std::fs::write(
        &cfg,
        "[features]\ndescriptors = \"lbp\"\n[regression]\nalgorithm = \"svr\"\ngammas = [0.5]\ncs = [100.0]\nepsilons = [0.1]\nfolds = 2\nsvr_max_iter = 1\n",
    )
    .unwrap();
    let model = d.join("m.agmd");
    let args = ["train", "--config", cfg.to_str().unwrap(), "--features", f.to_str().unwrap(), "--manifest", m, "--out", model.to_str().unwrap()];
    let (code, _, err) = faceage(&args);
    assert_eq!(code, 3, "{err}");
    assert!(!model.exists());

    std::fs::write(&cfg, "[features]\ndescriptors = \"lbp\"\n[regression]\nalgorithm = \"krr\"\ngammas = [0.5]\nlambdas = [1e-3]\nfolds = 2\n").unwrap();
    let (code, stdout, err) = faceage(&args);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("trained on 10 samples"));
    let r = &read_manifest(&manifest).unwrap()[0];
    let (code, stdout, _) = faceage(&[
        "predict",
        "--config",
        cfg.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--image",
        r.image_path.to_str().unwrap(),
        "--landmarks",
        r.landmarks_path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let printed = stdout.trim();
    assert_eq!(printed.split('.').nth(1).map(str::len), Some(2), "{printed}");
}
