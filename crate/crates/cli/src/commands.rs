use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use faceage::descriptors::{learn_filterbank, sample_patches, FilterBank};
use faceage::eval::{cs_curve, grouped_mae, lopo_splits, mae, predictions_csv, random_split, CsCurve, LabeledPrediction};
use faceage::geometry::{parse_landmark_file, AlignedFace, FaceNormalizer};
use faceage::image::decode_pnm;
use faceage::regress::{cross_validate, fit_cell, Cell};
use faceage::store::{write_atomic, FeatureTable, ModelFile};
use faceage::{LandmarkScheme, Matrix};

use crate::config::RunConfig;
use crate::manifest::{read_manifest, ManifestRecord};
use crate::{CliError, CliResult};

fn data_err(msg: impl Into<String>) -> CliError {
    CliError::Data(msg.into())
}

/// Load, roll-compensate and crop one manifest record.
pub fn load_face(record: &ManifestRecord, scheme: &LandmarkScheme, norm: &FaceNormalizer) -> CliResult<AlignedFace> {
    let image_bytes = std::fs::read(&record.image_path)
        .map_err(|e| data_err(format!("{}: {e}", record.image_path.display())))?;
    let image = decode_pnm(&image_bytes).map_err(|e| data_err(format!("{}: {e}", record.image_path.display())))?;
    let pts = std::fs::read(&record.landmarks_path)
        .map_err(|e| data_err(format!("{}: {e}", record.landmarks_path.display())))?;
    let lms = parse_landmark_file(&pts, scheme).map_err(|e| data_err(format!("{}: {e}", record.landmarks_path.display())))?;
    Ok(norm.normalize(&image, &lms, &record.id)?)
}

/// Normalize every record in parallel, keeping manifest order. Failures are
/// logged and dropped.
fn load_faces(records: &[ManifestRecord], cfg: &RunConfig) -> CliResult<(Vec<(usize, AlignedFace)>, usize)> {
    let scheme = cfg.scheme()?;
    let norm = cfg.normalizer()?;
    let loaded: Vec<_> = records.par_iter().map(|r| load_face(r, &scheme, &norm)).collect();
    let mut faces = Vec::with_capacity(records.len());
    let mut skipped = 0;
    for (i, res) in loaded.into_iter().enumerate() {
        match res {
            Ok(f) => faces.push((i, f)),
            Err(e) => {
                log::warn!("skipping `{}`: {e}", records[i].id);
                skipped += 1;
            }
        }
    }
    Ok((faces, skipped))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnSummary {
    pub bank: FilterBank,
    pub sources: usize,
    pub skipped: usize,
}

/// Learn a BSIF bank from patches of the aligned training faces.
///
/// Training faces are the training side of the same seeded split that
/// `evaluate --protocol holdout` uses, unless `all_records` is set (for a
/// manifest that is disjoint from the evaluation data).
pub fn cmd_learn_filters(cfg: &RunConfig, manifest: &Path, all_records: bool, out: &Path) -> CliResult<LearnSummary> {
    let (l, n, m) = (cfg.filters.l, cfg.filters.n, cfg.filters.patches);
    if m < 20 * l * l {
        return Err(CliError::Usage(format!(
            "{m} patches are too few to learn {l}x{l} filters: ICA needs at least 20·l² = {} patches",
            20 * l * l
        )));
    }
    let records = read_manifest(manifest)?;
    let records = if all_records {
        records
    } else {
        let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
        let plan = random_split(&ids, cfg.evaluate.train_fraction, cfg.seed)?;
        let train: std::collections::HashSet<&String> = plan.folds[0].train.iter().collect();
        records.into_iter().filter(|r| train.contains(&r.id)).collect()
    };
    let (faces, skipped) = load_faces(&records, cfg)?;
    if faces.is_empty() {
        return Err(data_err("no training face could be loaded"));
    }
    let images: Vec<_> = faces.into_iter().map(|(_, f)| f.image).collect();
    let patches = sample_patches(&images, l, m, cfg.seed)?;
    let learned = learn_filterbank(&patches, n, cfg.seed)?;
    let provenance = format!("{} sources={}", learned.provenance(), images.len());
    let bank = FilterBank::new(l, learned.filters().to_vec(), provenance)?;
    write_atomic(out, bank.to_text().as_bytes())?;
    Ok(LearnSummary {
        bank,
        sources: images.len(),
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractSummary {
    pub rows: usize,
    pub dims: usize,
    pub skipped: usize,
    pub layout: String,
}

/// Feature matrix for every loadable manifest record, in manifest order.
pub fn cmd_extract(cfg: &RunConfig, manifest: &Path, out: &Path) -> CliResult<ExtractSummary> {
    let extractor = cfg.extractor()?;
    let records = read_manifest(manifest)?;
    let (faces, mut skipped) = load_faces(&records, cfg)?;
    let vectors: Vec<_> = faces.par_iter().map(|(i, f)| (*i, extractor.extract(f))).collect();
    let mut ids = Vec::with_capacity(vectors.len());
    let mut data = Vec::new();
    for (i, v) in vectors {
        match v {
            Ok(v) => {
                ids.push(records[i].id.clone());
                data.extend(v.values);
            }
            Err(e) => {
                log::warn!("skipping `{}`: {e}", records[i].id);
                skipped += 1;
            }
        }
    }
    if ids.is_empty() {
        return Err(data_err(format!("no features extracted ({skipped} records failed)")));
    }
    let layout = extractor.layout();
    let dims = layout.dims();
    let table = FeatureTable::new(Matrix::new(ids.len(), dims, data)?, ids, layout.to_string())?;
    table.write(out)?;
    Ok(ExtractSummary {
        rows: table.ids.len(),
        dims,
        skipped,
        layout: table.layout,
    })
}

/// Ages and persons of the table rows; every row must be in the manifest.
fn labels(table: &FeatureTable, records: &[ManifestRecord]) -> CliResult<(Vec<f64>, Vec<String>)> {
    let by_id: HashMap<&str, &ManifestRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut ages = Vec::with_capacity(table.ids.len());
    let mut persons = Vec::with_capacity(table.ids.len());
    for id in &table.ids {
        let r = by_id
            .get(id.as_str())
            .ok_or_else(|| data_err(format!("feature row `{id}` is not in the manifest")))?;
        ages.push(r.age);
        persons.push(r.person_id.clone());
    }
    Ok((ages, persons))
}

/// The layout the configuration would produce, or `None` when BSIF is
/// enabled but no bank is configured (so the hash is unknown).
fn configured_layout(cfg: &RunConfig) -> CliResult<Option<String>> {
    if cfg.descriptors()?.uses_bsif() && cfg.features.bank.is_none() {
        return Ok(None);
    }
    Ok(Some(cfg.extractor()?.layout().to_string()))
}

fn check_table_layout(cfg: &RunConfig, table: &FeatureTable) -> CliResult<()> {
    if let Some(expected) = configured_layout(cfg)? {
        if expected != table.layout {
            return Err(faceage::Error::LayoutMismatch {
                expected,
                found: table.layout.clone(),
            }
            .into());
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub samples: usize,
    pub cell: Cell,
    pub cv_mae: f64,
    pub train_mae: f64,
    pub mean_predictor_mae: f64,
}

fn mean_predictor_mae(y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - mean).abs()).sum::<f64>() / y.len() as f64
}

/// Grid-search the configured algorithm by cross-validation, refit the best
/// cell on all rows and save the model.
pub fn cmd_train(cfg: &RunConfig, features: &Path, manifest: &Path, out: &Path) -> CliResult<TrainSummary> {
    let table = FeatureTable::read(features)?;
    check_table_layout(cfg, &table)?;
    let records = read_manifest(manifest)?;
    let (y, _) = labels(&table, &records)?;
    let grid = cfg.hyper_grid();
    let cv = cross_validate(&table.matrix, &y, &grid, cfg.algorithm()?)?;
    let cell = cv.best_cell();
    let model = fit_cell(&table.matrix, &y, &cell, &grid.svr)?;
    let pred = model.predict(&table.matrix)?;
    let train_mae = pred.iter().zip(&y).map(|(p, t)| (p - t).abs()).sum::<f64>() / y.len() as f64;
    let file = ModelFile {
        model,
        layout: table.layout.clone(),
        cv_mae: cv.best_mae(),
    };
    file.write(out)?;
    Ok(TrainSummary {
        samples: y.len(),
        cell,
        cv_mae: cv.best_mae(),
        train_mae,
        mean_predictor_mae: mean_predictor_mae(&y),
    })
}

/// Estimated age of one annotated image.
pub fn cmd_predict(cfg: &RunConfig, model: &Path, image: &Path, landmarks: &Path) -> CliResult<f64> {
    let model = ModelFile::read(model)?;
    let extractor = cfg.extractor()?;
    model.check_layout(&extractor.layout().to_string())?;
    let record = ManifestRecord {
        id: image.display().to_string(),
        image_path: image.to_path_buf(),
        landmarks_path: landmarks.to_path_buf(),
        age: 0.0,
        person_id: String::new(),
    };
    let face = load_face(&record, &cfg.scheme()?, &cfg.normalizer()?)?;
    let v = extractor.extract(&face)?;
    let x = Matrix::new(1, v.values.len(), v.values)?;
    Ok(model.model.predict(&x)?[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Holdout,
    Lopo,
}

impl std::str::FromStr for Protocol {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "holdout" => Ok(Protocol::Holdout),
            "lopo" => Ok(Protocol::Lopo),
            other => Err(CliError::Usage(format!("unknown protocol `{other}` (holdout or lopo)"))),
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Protocol::Holdout => "holdout",
            Protocol::Lopo => "lopo",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldSummary {
    pub person: Option<String>,
    pub train: usize,
    pub test: usize,
    pub cell: Cell,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub seed: u64,
    pub layout: String,
    pub folds: Vec<FoldSummary>,
    /// Pooled test predictions in feature-table order.
    pub predictions: Vec<LabeledPrediction>,
    pub mae: f64,
    pub curve: CsCurve,
}

impl EvalReport {
    /// Filter-bank hash recorded in the feature layout, if BSIF was used.
    pub fn bank_hash(&self) -> Option<&str> {
        self.layout.split(';').find_map(|part| part.strip_prefix("bsif=")).and_then(|b| b.split('@').nth(1))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "protocol: {}", self.protocol);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "layout: {}", self.layout);
        let _ = writeln!(s, "filter bank: {}", self.bank_hash().unwrap_or("none"));
        let _ = writeln!(s, "folds: {}", self.folds.len());
        if let [fold] = self.folds.as_slice() {
            let _ = writeln!(s, "train: {}", fold.train);
            let _ = writeln!(s, "test: {}", fold.test);
            let _ = writeln!(s, "selected: {}", fold.cell);
        }
        let _ = writeln!(s, "test predictions: {}", self.predictions.len());
        let _ = writeln!(s, "MAE: {:.4}", self.mae);
        let _ = writeln!(s, "\nlevel  CS%");
        for (l, v) in self.curve.levels.iter().zip(&self.curve.values) {
            let _ = writeln!(s, "{l:>5}  {v:.2}");
        }
        if self.protocol == Protocol::Lopo {
            let _ = writeln!(s, "\nperson  train  test  MAE  selected");
            for f in &self.folds {
                let _ = writeln!(
                    s,
                    "{}  {}  {}  {:.4}  {}",
                    f.person.as_deref().unwrap_or("-"),
                    f.train,
                    f.test,
                    f.mae,
                    f.cell
                );
            }
        }
        s
    }
}

/// Paths written by [`cmd_evaluate`].
pub fn evaluate_outputs(out_dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    (
        out_dir.join("predictions.csv"),
        out_dir.join("curve.csv"),
        out_dir.join("report.txt"),
    )
}

/// Train and test under the holdout or leave-one-person-out protocol.
///
/// Each fold selects hyperparameters by cross-validation on its own training
/// rows, unless `fixed_model` supplies them. Writes `predictions.csv`,
/// `curve.csv` and `report.txt` into `out_dir`.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    features: &Path,
    manifest: &Path,
    protocol: Protocol,
    fixed_model: Option<&Path>,
    out_dir: &Path,
) -> CliResult<EvalReport> {
    let table = FeatureTable::read(features)?;
    check_table_layout(cfg, &table)?;
    let records = read_manifest(manifest)?;
    let (ages, persons) = labels(&table, &records)?;
    let fixed = match fixed_model {
        Some(p) => {
            let m = ModelFile::read(p)?;
            m.check_layout(&table.layout)?;
            Some(m.model.cell())
        }
        None => None,
    };
    let plan = match protocol {
        Protocol::Holdout => random_split(&table.ids, cfg.evaluate.train_fraction, cfg.seed)?,
        Protocol::Lopo => {
            let pairs: Vec<(String, String)> = table.ids.iter().cloned().zip(persons.iter().cloned()).collect();
            lopo_splits(&pairs)?
        }
    };
    let row_of: HashMap<&str, usize> = table.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let grid = cfg.hyper_grid();
    let algo = cfg.algorithm()?;

    let run_fold = |fold: &faceage::eval::Fold| -> CliResult<(FoldSummary, Vec<(usize, f64)>)> {
        let train: Vec<usize> = fold.train.iter().map(|id| row_of[id.as_str()]).collect();
        let test: Vec<usize> = fold.test.iter().map(|id| row_of[id.as_str()]).collect();
        if let Some(person) = &fold.person {
            if let Some(&i) = train.iter().find(|&&i| &persons[i] == person) {
                return Err(data_err(format!("fold for `{person}` would train on its own image `{}`", table.ids[i])));
            }
        }
        let x = table.matrix.select_rows(&train);
        let y: Vec<f64> = train.iter().map(|&i| ages[i]).collect();
        let cell = match fixed {
            Some(c) => c,
            None => cross_validate(&x, &y, &grid, algo)?.best_cell(),
        };
        let model = fit_cell(&x, &y, &cell, &grid.svr)?;
        let pred = model.predict(&table.matrix.select_rows(&test))?;
        let fold_mae = pred.iter().zip(&test).map(|(p, &i)| (p - ages[i]).abs()).sum::<f64>() / test.len() as f64;
        Ok((
            FoldSummary {
                person: fold.person.clone(),
                train: train.len(),
                test: test.len(),
                cell,
                mae: fold_mae,
            },
            test.into_iter().zip(pred).collect(),
        ))
    };
    let results: Vec<_> = plan.folds.par_iter().map(run_fold).collect::<CliResult<_>>()?;

    let mut pooled: Vec<(usize, f64)> = results.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    pooled.sort_by_key(|&(i, _)| i);
    if pooled.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(data_err("a record was tested more than once"));
    }
    let predictions: Vec<LabeledPrediction> = pooled
        .into_iter()
        .map(|(i, p)| LabeledPrediction::new(table.ids[i].clone(), ages[i], p))
        .collect::<faceage::Result<_>>()?;
    let report = EvalReport {
        protocol,
        seed: cfg.seed,
        layout: table.layout.clone(),
        folds: results.into_iter().map(|(f, _)| f).collect(),
        mae: mae(&predictions)?,
        curve: cs_curve(&predictions, cfg.evaluate.max_level)?,
        predictions,
    };
    std::fs::create_dir_all(out_dir)?;
    let (pred_path, curve_path, report_path) = evaluate_outputs(out_dir);
    write_atomic(&pred_path, predictions_csv(&report.predictions).as_bytes())?;
    write_atomic(&curve_path, report.curve.to_csv().as_bytes())?;
    write_atomic(&report_path, report.to_text().as_bytes())?;
    Ok(report)
}

/// Per-person MAE of a LOPO report's pooled predictions.
pub fn per_person_mae(report: &EvalReport, manifest: &[ManifestRecord]) -> std::collections::BTreeMap<String, f64> {
    let person: HashMap<&str, &str> = manifest.iter().map(|r| (r.id.as_str(), r.person_id.as_str())).collect();
    grouped_mae(&report.predictions, |id| person.get(id).copied().unwrap_or("?").to_string())
}

#[derive(serde::Deserialize)]
struct PredictionRow {
    id: String,
    y_true: f64,
    y_pred: f64,
}

pub fn read_predictions(path: &Path) -> CliResult<Vec<LabeledPrediction>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
    reader
        .deserialize::<PredictionRow>()
        .enumerate()
        .map(|(k, row)| {
            let row = row.map_err(|e| data_err(format!("{} line {}: {e}", path.display(), k + 2)))?;
            Ok(LabeledPrediction::new(row.id, row.y_true, row.y_pred)?)
        })
        .collect()
}

/// CS curve of a predictions file.
pub fn cmd_curve(predictions: &Path, max_level: u32, out: &Path) -> CliResult<CsCurve> {
    let preds = read_predictions(predictions)?;
    let curve = cs_curve(&preds, max_level)?;
    write_atomic(out, curve.to_csv().as_bytes())?;
    Ok(curve)
}
