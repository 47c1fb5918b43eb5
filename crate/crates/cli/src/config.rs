//! Run configuration: built-in defaults, overridden by a TOML file, overridden
//! by command-line flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use nnc::augment::MissingAppearancePolicy;
use nnc::cluster::{KMeansConfig, DEFAULT_MAX_ITER, DEFAULT_MIN_CLUSTER_SIZE, DEFAULT_RESTARTS, DEFAULT_TOL};
use nnc::cubes::DEFAULT_TAU_STATIC;
use nnc::detect::{
    AppearanceSource, FeatureConfig, ScoreConfig, TrainConfig, DEFAULT_SIGMA_TEMPORAL, DEFAULT_TEST_STRIDE,
    DEFAULT_TRAIN_STRIDE,
};
use nnc::eval::{DEFAULT_MAX_THRESHOLDS, DEFAULT_SIGMA_SPATIAL};
use nnc::ocsvm::{OcsvmConfig, DEFAULT_MAX_ITER as SVM_MAX_ITER, DEFAULT_NU, DEFAULT_TOL as SVM_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Appearance {
    None,
    Handcrafted,
    File,
}

impl From<Appearance> for AppearanceSource {
    fn from(a: Appearance) -> Self {
        match a {
            Appearance::None => AppearanceSource::None,
            Appearance::Handcrafted => AppearanceSource::Handcrafted,
            Appearance::File => AppearanceSource::File,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub tau_static: f32,
    pub normalize_blocks: bool,
    pub appearance: Appearance,
    /// Use zero appearance for frames missing from the feature file.
    pub missing_as_zeros: bool,
}

impl Default for FeatureSection {
    fn default() -> Self {
        Self {
            tau_static: DEFAULT_TAU_STATIC,
            normalize_blocks: true,
            appearance: Appearance::Handcrafted,
            missing_as_zeros: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    /// Fixed k; 0 means one cluster per 1000 training cubes.
    pub k: usize,
    pub min_size: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self {
            k: 0,
            min_size: DEFAULT_MIN_CLUSTER_SIZE,
            restarts: DEFAULT_RESTARTS,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmSection {
    pub nu: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmSection {
    fn default() -> Self {
        Self {
            nu: DEFAULT_NU,
            tol: SVM_TOL,
            max_iter: SVM_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub stride: usize,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            stride: DEFAULT_TRAIN_STRIDE,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreSection {
    pub stride: usize,
    pub sigma_t: f64,
}

impl Default for ScoreSection {
    fn default() -> Self {
        Self {
            stride: DEFAULT_TEST_STRIDE,
            sigma_t: DEFAULT_SIGMA_TEMPORAL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub sigma_s: f64,
    pub max_thresholds: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            sigma_s: DEFAULT_SIGMA_SPATIAL,
            max_thresholds: DEFAULT_MAX_THRESHOLDS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub features: FeatureSection,
    pub cluster: ClusterSection,
    pub svm: SvmSection,
    pub train: TrainSection,
    pub score: ScoreSection,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.svm.nu > 0.0 && self.svm.nu <= 1.0) {
            bail!("svm.nu = {} must lie in (0, 1]", self.svm.nu);
        }
        if self.cluster.restarts == 0 {
            bail!("cluster.restarts must be >= 1");
        }
        if self.train.stride == 0 || self.score.stride == 0 {
            bail!("strides must be >= 1");
        }
        if !(self.score.sigma_t >= 0.0 && self.eval.sigma_s >= 0.0) {
            bail!("smoothing widths must be >= 0");
        }
        Ok(())
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            tau_static: self.features.tau_static,
            normalize_blocks: self.features.normalize_blocks,
            appearance: self.features.appearance.into(),
            missing: if self.features.missing_as_zeros {
                MissingAppearancePolicy::Zeros
            } else {
                MissingAppearancePolicy::Fail
            },
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            features: self.feature_config(),
            train_stride: self.train.stride,
            k: (self.cluster.k > 0).then_some(self.cluster.k),
            min_cluster_size: self.cluster.min_size,
            kmeans: KMeansConfig {
                max_iter: self.cluster.max_iter,
                tol: self.cluster.tol,
                restarts: self.cluster.restarts,
            },
            svm: OcsvmConfig {
                nu: self.svm.nu,
                tol: self.svm.tol,
                max_iter: self.svm.max_iter,
            },
            seed: self.train.seed,
        }
    }

    pub fn score_config(&self) -> ScoreConfig {
        ScoreConfig {
            stride: self.score.stride,
            sigma_t: self.score.sigma_t,
        }
    }
}
