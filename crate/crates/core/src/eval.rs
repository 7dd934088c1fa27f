//! Error metrics and train/test split protocols.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Default highest error level of a CS curve, in years.
pub const DEFAULT_MAX_LEVEL: u32 = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPrediction {
    pub id: String,
    pub y_true: f64,
    pub y_pred: f64,
}

impl LabeledPrediction {
    pub fn new(id: impl Into<String>, y_true: f64, y_pred: f64) -> Result<Self> {
        let id = id.into();
        if !y_true.is_finite() || !y_pred.is_finite() || y_true < 0.0 {
            return Err(Error::invalid(format!(
                "prediction `{id}` has non-finite or negative values ({y_true}, {y_pred})"
            )));
        }
        Ok(LabeledPrediction { id, y_true, y_pred })
    }

    pub fn abs_error(&self) -> f64 {
        (self.y_pred - self.y_true).abs()
    }
}

fn nonempty(preds: &[LabeledPrediction]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::invalid("no predictions to score"));
    }
    Ok(())
}

/// Mean absolute error in years.
pub fn mae(preds: &[LabeledPrediction]) -> Result<f64> {
    nonempty(preds)?;
    Ok(preds.iter().map(LabeledPrediction::abs_error).sum::<f64>() / preds.len() as f64)
}

/// Percentage of predictions whose absolute error is at most `level` years.
pub fn cumulative_score(preds: &[LabeledPrediction], level: f64) -> Result<f64> {
    nonempty(preds)?;
    if !(level >= 0.0) {
        return Err(Error::invalid(format!("CS level must be >= 0, got {level}")));
    }
    let hits = preds.iter().filter(|p| p.abs_error() <= level).count();
    Ok(100.0 * hits as f64 / preds.len() as f64)
}

/// Cumulative score at integer levels `0..=max_level`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsCurve {
    pub levels: Vec<u32>,
    pub values: Vec<f64>,
}

pub fn cs_curve(preds: &[LabeledPrediction], max_level: u32) -> Result<CsCurve> {
    nonempty(preds)?;
    let mut errors: Vec<f64> = preds.iter().map(LabeledPrediction::abs_error).collect();
    errors.sort_by(f64::total_cmp);
    let levels: Vec<u32> = (0..=max_level).collect();
    let values = levels
        .iter()
        .map(|&l| {
            let hits = errors.partition_point(|&e| e <= l as f64);
            100.0 * hits as f64 / errors.len() as f64
        })
        .collect();
    Ok(CsCurve { levels, values })
}

impl CsCurve {
    /// `level,cs_percent` with header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,cs_percent\n");
        for (l, v) in self.levels.iter().zip(&self.values) {
            let _ = writeln!(out, "{l},{v:.4}");
        }
        out
    }
}

/// `id,y_true,y_pred` with header, in the given order.
pub fn predictions_csv(preds: &[LabeledPrediction]) -> String {
    let mut out = String::from("id,y_true,y_pred\n");
    for p in preds {
        let _ = writeln!(out, "{},{},{:.6}", p.id, p.y_true, p.y_pred);
    }
    out
}

/// One train/test partition. `person` is set for leave-one-person-out folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub person: Option<String>,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// A holdout split (one fold) or a leave-one-person-out plan (one fold per person).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub folds: Vec<Fold>,
}

/// Seeded shuffle; the first `ceil(fraction·N)` shuffled ids go to training.
/// Both sides keep the input order of their ids.
pub fn random_split(ids: &[String], fraction: f64, seed: u64) -> Result<SplitPlan> {
    if ids.len() < 2 {
        return Err(Error::invalid("a split needs at least 2 ids"));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("split fraction must be in (0, 1), got {fraction}")));
    }
    let n = ids.len();
    let n_train = (fraction * n as f64).ceil() as usize;
    if n_train >= n {
        return Err(Error::invalid(format!("fraction {fraction} of {n} ids leaves no test data")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_train = vec![false; n];
    order[..n_train].iter().for_each(|&i| in_train[i] = true);
    let (train, test): (Vec<_>, Vec<_>) = ids.iter().zip(&in_train).partition(|(_, &t)| t);
    Ok(SplitPlan {
        folds: vec![Fold {
            person: None,
            train: train.into_iter().map(|(id, _)| id.clone()).collect(),
            test: test.into_iter().map(|(id, _)| id.clone()).collect(),
        }],
    })
}

/// One fold per person, ordered by person id. Ids keep their input order.
pub fn lopo_splits(id_person: &[(String, String)]) -> Result<SplitPlan> {
    let mut persons: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, person) in id_person {
        persons.entry(person).or_default().push(id);
    }
    if persons.len() < 2 {
        return Err(Error::invalid(format!(
            "leave-one-person-out needs at least 2 persons, found {}",
            persons.len()
        )));
    }
    let folds = persons
        .keys()
        .map(|&person| Fold {
            person: Some(person.to_string()),
            train: id_person.iter().filter(|(_, p)| p != person).map(|(id, _)| id.clone()).collect(),
            test: id_person.iter().filter(|(_, p)| p == person).map(|(id, _)| id.clone()).collect(),
        })
        .collect();
    Ok(SplitPlan { folds })
}

/// MAE of each group, keyed by group label, for predictions labelled by `group_of`.
pub fn grouped_mae(preds: &[LabeledPrediction], group_of: impl Fn(&str) -> String) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for p in preds {
        let e = sums.entry(group_of(&p.id)).or_default();
        e.0 += p.abs_error();
        e.1 += 1;
    }
    sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn preds(pairs: &[(f64, f64)]) -> Vec<LabeledPrediction> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(t, p))| LabeledPrediction::new(format!("r{i}"), t, p).unwrap())
            .collect()
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("img{i:04}")).collect()
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&preds(&[(18.0, 20.0), (34.0, 30.0)])).unwrap(), 3.0);
        assert_eq!(mae(&preds(&[(5.0, 5.0), (7.5, 7.5)])).unwrap(), 0.0);
        assert_eq!(mae(&preds(&[(34.0, 30.0), (18.0, 20.0)])).unwrap(), 3.0);
        assert!(mae(&[]).is_err());
    }

    #[test]
    fn cs_examples() {
        let p = preds(&[(10.0, 11.0), (10.0, 7.0), (10.0, 15.0), (10.0, 3.0)]);
        assert_eq!(cumulative_score(&p, 4.0).unwrap(), 50.0);
        assert_eq!(cumulative_score(&p, 7.0).unwrap(), 100.0);
        assert_eq!(cumulative_score(&p, 0.0).unwrap(), 0.0);
        assert!(cumulative_score(&p, -1.0).is_err());
        assert!(cumulative_score(&[], 1.0).is_err());
    }

    #[test]
    fn single_prediction_curve() {
        let c = cs_curve(&preds(&[(30.0, 32.0)]), 4).unwrap();
        assert_eq!(c.levels, vec![0, 1, 2, 3, 4]);
        assert_eq!(c.values, vec![0.0, 0.0, 100.0, 100.0, 100.0]);
        assert_eq!(c.to_csv().lines().next(), Some("level,cs_percent"));
        assert_eq!(c.to_csv().lines().nth(3), Some("2,100.0000"));
    }

    #[test]
    fn invalid_predictions_rejected() {
        assert!(LabeledPrediction::new("a", f64::NAN, 1.0).is_err());
        assert!(LabeledPrediction::new("a", 1.0, f64::INFINITY).is_err());
        assert!(LabeledPrediction::new("a", -1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn curve_matches_pointwise_and_is_monotone(
            pairs in prop::collection::vec((0.0f64..90.0, -10.0f64..100.0), 1..60),
        ) {
            let p = preds(&pairs);
            let c = cs_curve(&p, DEFAULT_MAX_LEVEL).unwrap();
            prop_assert_eq!(c.levels.len(), 16);
            for (l, v) in c.levels.iter().zip(&c.values) {
                prop_assert_eq!(*v, cumulative_score(&p, *l as f64).unwrap());
                prop_assert!((0.0..=100.0).contains(v));
            }
            prop_assert!(c.values.windows(2).all(|w| w[0] <= w[1]));
            let max_err = p.iter().map(LabeledPrediction::abs_error).fold(0.0, f64::max);
            let full = cs_curve(&p, max_err.ceil() as u32).unwrap();
            prop_assert_eq!(*full.values.last().unwrap(), 100.0);
            prop_assert!(mae(&p).unwrap() >= 0.0);
        }

        #[test]
        fn random_split_partitions(n in 2usize..200, frac in 0.05f64..0.95, seed in any::<u64>()) {
            let all = ids(n);
            match random_split(&all, frac, seed) {
                Ok(plan) => {
                    let f = &plan.folds[0];
                    prop_assert_eq!(f.train.len(), (frac * n as f64).ceil() as usize);
                    let train: BTreeSet<_> = f.train.iter().collect();
                    prop_assert!(f.test.iter().all(|t| !train.contains(t)));
                    prop_assert_eq!(f.train.len() + f.test.len(), n);
                    if n % 2 == 0 {
                        let half = random_split(&all, 0.5, seed).unwrap();
                        prop_assert_eq!(half.folds[0].train.len(), n / 2);
                        prop_assert_eq!(half.folds[0].test.len(), n / 2);
                    }
                }
                Err(_) => prop_assert!((frac * n as f64).ceil() as usize >= n),
            }
        }
    }

    #[test]
    fn split_examples() {
        let plan = random_split(&ids(1046), 0.5, 42).unwrap();
        assert_eq!(plan.folds[0].train.len(), 523);
        assert_eq!(plan.folds[0].test.len(), 523);
        assert_eq!(plan, random_split(&ids(1046), 0.5, 42).unwrap());
        assert_ne!(plan, random_split(&ids(1046), 0.5, 43).unwrap());

        let plan = random_split(&ids(4), 0.5, 0).unwrap();
        let f = &plan.folds[0];
        assert_eq!((f.train.len(), f.test.len()), (2, 2));
        let mut all: Vec<_> = f.train.iter().chain(&f.test).cloned().collect();
        all.sort();
        assert_eq!(all, ids(4));

        assert!(random_split(&ids(1), 0.5, 0).is_err());
        assert!(random_split(&ids(10), 1.0, 0).is_err());
        assert!(random_split(&ids(10), 0.0, 0).is_err());
    }

    #[test]
    fn lopo_examples() {
        let two = vec![("a".to_string(), "p1".to_string()), ("b".to_string(), "p2".to_string())];
        let plan = lopo_splits(&two).unwrap();
        assert_eq!(plan.folds.len(), 2);
        assert_eq!(plan.folds[0].train, vec!["b"]);
        assert_eq!(plan.folds[0].test, vec!["a"]);
        assert_eq!(plan.folds[1].person.as_deref(), Some("p2"));

        let map: Vec<(String, String)> = (0..82 * 3).map(|i| (format!("i{i}"), format!("p{:02}", i % 82))).collect();
        let plan = lopo_splits(&map).unwrap();
        assert_eq!(plan.folds.len(), 82);
        let mut seen: Vec<&String> = plan.folds.iter().flat_map(|f| &f.test).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), map.len());
        for f in &plan.folds {
            let person = f.person.as_ref().unwrap();
            assert!(map.iter().filter(|(id, _)| f.train.contains(id)).all(|(_, p)| p != person));
            assert_eq!(f.train.len() + f.test.len(), map.len());
        }

        let one = vec![("a".to_string(), "p".to_string()), ("b".to_string(), "p".to_string())];
        assert!(lopo_splits(&one).is_err());
    }

    #[test]
    fn pooled_vs_grouped() {
        let p = preds(&[(10.0, 11.0), (10.0, 13.0), (10.0, 10.0)]);
        let g = grouped_mae(&p, |id| if id == "r2" { "b".into() } else { "a".into() });
        assert_eq!(g["a"], 2.0);
        assert_eq!(g["b"], 0.0);
        assert_eq!(mae(&p).unwrap(), 4.0 / 3.0);
    }
}
