//! Run configuration, loaded from TOML. Every field has a default, so an empty
//! file (or none) gives the standard pipeline.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use faceage::descriptors::FilterBank;
use faceage::features::BlockGrid;
use faceage::geometry::{CanonicalSize, RoiRatios};
use faceage::regress::SvrParams;
use faceage::{Algorithm, DescriptorSet, FaceNormalizer, FeatureExtractor, HyperGrid, LandmarkScheme, RoiMode};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub normalize: NormalizeConfig,
    pub features: FeaturesConfig,
    pub filters: FiltersConfig,
    pub regression: RegressionConfig,
    pub evaluate: EvaluateConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizeConfig {
    pub roi_mode: String,
    /// Built-in landmark scheme name (`fgnet68`, `pal78`).
    pub scheme: String,
    /// Scheme description file; overrides `scheme`.
    pub scheme_file: Option<PathBuf>,
    pub size: [usize; 2],
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesConfig {
    pub descriptors: String,
    /// Block grid as `[rows, cols]`.
    pub grid: [usize; 2],
    pub bank: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiltersConfig {
    pub l: usize,
    pub n: usize,
    pub patches: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionConfig {
    pub algorithm: String,
    pub gammas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub cs: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub folds: usize,
    pub svr_tol: f64,
    pub svr_max_iter: usize,
    pub cache_mb: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub protocol: String,
    pub train_fraction: f64,
    pub max_level: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            normalize: NormalizeConfig::default(),
            features: FeaturesConfig::default(),
            filters: FiltersConfig::default(),
            regression: RegressionConfig::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

impl Default for NormalizeConfig {
    fn default() -> Self {
        let r = RoiRatios::default();
        let s = CanonicalSize::default();
        NormalizeConfig {
            roi_mode: "ratios".into(),
            scheme: "fgnet68".into(),
            scheme_file: None,
            size: [s.width, s.height],
            k1: r.k1,
            k2: r.k2,
            k3: r.k3,
        }
    }
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        let g = BlockGrid::default();
        FeaturesConfig {
            descriptors: "both".into(),
            grid: [g.rows, g.cols],
            bank: None,
        }
    }
}

impl Default for FiltersConfig {
    fn default() -> Self {
        FiltersConfig {
            l: 7,
            n: 8,
            patches: 50_000,
        }
    }
}

impl Default for RegressionConfig {
    fn default() -> Self {
        let g = HyperGrid::default();
        RegressionConfig {
            algorithm: "svr".into(),
            gammas: g.gammas,
            lambdas: g.lambdas,
            cs: g.cs,
            epsilons: g.epsilons,
            folds: g.folds,
            svr_tol: g.svr.tol,
            svr_max_iter: g.svr.max_iter,
            cache_mb: g.svr.cache_mb,
        }
    }
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            protocol: "holdout".into(),
            train_fraction: 0.5,
            max_level: faceage::eval::DEFAULT_MAX_LEVEL,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| usage(format!("invalid config: {e}")))
    }

    /// Read `path`, or return the defaults when no file is given.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| usage(format!("cannot read config `{}`: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }

    pub fn scheme(&self) -> CliResult<LandmarkScheme> {
        if let Some(path) = &self.normalize.scheme_file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("cannot read scheme `{}`: {e}", path.display())))?;
            return Ok(LandmarkScheme::parse_config(&text)?);
        }
        LandmarkScheme::preset(&self.normalize.scheme)
            .ok_or_else(|| usage(format!("unknown landmark scheme `{}`", self.normalize.scheme)))
    }

    pub fn normalizer(&self) -> CliResult<FaceNormalizer> {
        let n = &self.normalize;
        let ratios = RoiRatios {
            k1: n.k1,
            k2: n.k2,
            k3: n.k3,
        };
        ratios.validate().map_err(usage)?;
        let size = CanonicalSize {
            width: n.size[0],
            height: n.size[1],
        };
        size.validate().map_err(usage)?;
        Ok(FaceNormalizer {
            mode: n.roi_mode.parse::<RoiMode>().map_err(usage)?,
            ratios,
            size,
        })
    }

    pub fn descriptors(&self) -> CliResult<DescriptorSet> {
        self.features.descriptors.parse().map_err(usage)
    }

    pub fn algorithm(&self) -> CliResult<Algorithm> {
        self.regression.algorithm.parse().map_err(usage)
    }

    /// The filter bank named by `features.bank`, if any.
    pub fn load_bank(&self) -> CliResult<Option<FilterBank>> {
        match &self.features.bank {
            None => Ok(None),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Data(format!("cannot read filter bank `{}`: {e}", path.display())))?;
                Ok(Some(FilterBank::from_text(&text)?))
            }
        }
    }

    pub fn extractor(&self) -> CliResult<FeatureExtractor> {
        let descriptors = self.descriptors()?;
        let bank = self.load_bank()?;
        if descriptors.uses_bsif() && bank.is_none() {
            return Err(usage("BSIF features need a filter bank (--bank or features.bank)"));
        }
        let norm = self.normalizer()?;
        let grid = BlockGrid {
            rows: self.features.grid[0],
            cols: self.features.grid[1],
        };
        FeatureExtractor::new(norm.size, grid, descriptors, bank).map_err(usage)
    }

    pub fn hyper_grid(&self) -> HyperGrid {
        let r = &self.regression;
        HyperGrid {
            gammas: r.gammas.clone(),
            lambdas: r.lambdas.clone(),
            cs: r.cs.clone(),
            epsilons: r.epsilons.clone(),
            folds: r.folds,
            seed: self.seed,
            svr: SvrParams {
                tol: r.svr_tol,
                max_iter: r.svr_max_iter,
                cache_mb: r.cache_mb,
                ..SvrParams::default()
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
        let c = RunConfig::default();
        assert_eq!(c.hyper_grid(), HyperGrid::default());
        assert_eq!(c.normalizer().unwrap(), FaceNormalizer::default());
        assert_eq!(c.descriptors().unwrap(), DescriptorSet::Both);
    }

    #[test]
    fn overrides_and_errors() {
        let c = RunConfig::from_toml(
            "seed = 9\n[regression]\nalgorithm = \"krr\"\nlambdas = [0.5]\n[normalize]\nroi_mode = \"bbox\"\n",
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.hyper_grid().lambdas, vec![0.5]);
        assert_eq!(c.hyper_grid().seed, 9);
        assert_eq!(c.algorithm().unwrap(), Algorithm::Krr);
        assert_eq!(c.normalizer().unwrap().mode, RoiMode::Bbox);
        assert!(matches!(RunConfig::from_toml("bogus = 1"), Err(CliError::Usage(_))));
        let bad = RunConfig::from_toml("[features]\ndescriptors = \"hog\"\n").unwrap();
        assert!(matches!(bad.descriptors(), Err(CliError::Usage(_))));
        // BSIF without a bank.
        assert!(matches!(RunConfig::default().extractor(), Err(CliError::Usage(_))));
    }
}
