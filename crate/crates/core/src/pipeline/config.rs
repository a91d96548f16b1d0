use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::CANONICAL_RATE;
use crate::error::{Error, Result};
use crate::features::{FeatureVariant, SecondBlock, DEFAULT_RELEVANCE};
use crate::gmm::GmmTrainConfig;
use crate::hashing;
use crate::kernels::KernelKind;
use crate::mfcc::MfccConfig;
use crate::svm::CvGrid;

/// Everything that determines one experiment's results.
///
/// `n_components` and `seed` take precedence over the fields of the same
/// name in `gmm`; each fold's GMM is seeded from `seed` and the fold number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub variant: FeatureVariant,
    pub kernel: KernelKind,
    pub n_components: usize,
    pub relevance: f64,
    pub second_block: SecondBlock,
    pub seed: u64,
    /// Cache root for MFCCs, GMMs and features. Never affects results.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    pub mfcc: MfccConfig,
    pub gmm: GmmTrainConfig,
    pub grid: CvGrid,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variant: FeatureVariant::Alpha,
            kernel: KernelKind::ExpChi2,
            n_components: 32,
            relevance: DEFAULT_RELEVANCE,
            second_block: SecondBlock::StdDev,
            seed: 0,
            cache_dir: None,
            mfcc: MfccConfig::default(),
            gmm: GmmTrainConfig::default(),
            grid: CvGrid::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_components == 0 {
            return Err(Error::InvalidConfig("M must be at least 1".into()));
        }
        if !(self.relevance > 0.0 && self.relevance.is_finite()) {
            return Err(Error::InvalidRelevance(self.relevance));
        }
        if self.kernel == KernelKind::ExpChi2 && self.variant.is_beta() {
            return Err(Error::InvalidConfig(format!(
                "the chi-square kernel needs nonnegative histograms, not {}",
                self.variant
            )));
        }
        if self.mfcc.sample_rate != CANONICAL_RATE {
            return Err(Error::InvalidConfig(format!(
                "audio is analysed at {CANONICAL_RATE} Hz, MFCC config says {}",
                self.mfcc.sample_rate
            )));
        }
        self.mfcc.validate()?;
        self.gmm_config(1).validate()?;
        self.grid.validate()
    }

    /// GMM training settings for one rotation.
    pub fn gmm_config(&self, fold: u8) -> GmmTrainConfig {
        GmmTrainConfig {
            n_components: self.n_components,
            seed: self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(u64::from(fold)),
            ..self.gmm.clone()
        }
    }

    /// Seed for the inner cross-validation of one detector.
    pub fn detector_seed(&self, fold: u8, event_index: usize) -> u64 {
        self.seed
            .wrapping_add(1_000_003 * u64::from(fold))
            .wrapping_add(event_index as u64)
    }

    /// Cache root: the configured directory, else the `AED_CACHE_DIR`
    /// environment variable, else none.
    pub fn resolved_cache_dir(&self) -> Option<PathBuf> {
        self.cache_dir
            .clone()
            .or_else(|| std::env::var_os(crate::cache::CACHE_ENV).map(PathBuf::from))
    }

    /// Digest of every result-affecting field.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.cache_dir = None;
        c.gmm.n_components = self.n_components;
        c.gmm.seed = self.seed;
        hashing::digest_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }

    /// Short label such as `alpha/ck/M32`.
    pub fn label(&self) -> String {
        format!("{}/{}/M{}", self.variant, self.kernel, self.n_components)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Unreadable {
            path: path.into(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| Error::format("config", path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.relevance, 20.0);
        assert_eq!(c.gmm_config(3).n_components, 32);
    }

    #[test]
    fn invalid_settings() {
        let bad = |f: fn(&mut ExperimentConfig)| {
            let mut c = ExperimentConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.n_components = 0));
        assert!(bad(|c| c.relevance = 0.0));
        assert!(bad(|c| c.relevance = -1.0));
        assert!(bad(|c| c.variant = FeatureVariant::BetaS));
        assert!(bad(|c| c.mfcc.sample_rate = 16_000));
        assert!(bad(|c| c.grid.c_values.clear()));
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let mut c = ExperimentConfig::default();
        c.variant = FeatureVariant::BetaSSigma;
        c.kernel = KernelKind::Linear;
        c.n_components = 64;
        c.grid.inner_folds = 4;
        let text = c.to_toml_string();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);

        let partial = ExperimentConfig::from_toml_str(
            "variant = \"beta_s\"\nkernel = \"lk\"\nn_components = 8\n[mfcc]\nn_coeffs = 13\n",
        )
        .unwrap();
        assert_eq!(partial.variant, FeatureVariant::BetaS);
        assert_eq!(partial.mfcc.n_coeffs, 13);
        assert_eq!(partial.mfcc.n_mel_filters, 40);
        assert!(ExperimentConfig::from_toml_str("typo_field = 1").is_err());
    }

    #[test]
    fn digest_ignores_cache_dir() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.cache_dir = Some("/tmp/x".into());
        assert_eq!(a.digest(), b.digest());
        b.seed = 1;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn fold_seeds_differ() {
        let c = ExperimentConfig::default();
        assert_ne!(c.gmm_config(1).seed, c.gmm_config(2).seed);
        assert_ne!(c.detector_seed(1, 0), c.detector_seed(1, 1));
    }
}
