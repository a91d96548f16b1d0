//! Clip-level representations built from a background [`DiagGmm`]:
//! soft-count histograms and MAP-adapted supervectors.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::DiagGmm;
use crate::mfcc::MfccMatrix;

/// Soft counts below this are treated as an empty component.
pub const EMPTY_COUNT: f64 = 1e-10;

/// Relevance factor used for every experiment unless overridden.
pub const DEFAULT_RELEVANCE: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureVariant {
    Alpha,
    BetaM,
    BetaS,
    BetaSigma,
    BetaSSigma,
}

impl FeatureVariant {
    pub const ALL: [FeatureVariant; 5] = [
        FeatureVariant::Alpha,
        FeatureVariant::BetaM,
        FeatureVariant::BetaS,
        FeatureVariant::BetaSigma,
        FeatureVariant::BetaSSigma,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureVariant::Alpha => "alpha",
            FeatureVariant::BetaM => "beta_m",
            FeatureVariant::BetaS => "beta_s",
            FeatureVariant::BetaSigma => "beta_sigma",
            FeatureVariant::BetaSSigma => "beta_s_sigma",
        }
    }

    pub fn is_beta(self) -> bool {
        self != FeatureVariant::Alpha
    }

    /// Feature length for `m` components of dimension `d`.
    pub fn len(self, m: usize, d: usize) -> usize {
        match self {
            FeatureVariant::Alpha => m,
            FeatureVariant::BetaM | FeatureVariant::BetaS => m * d,
            FeatureVariant::BetaSigma | FeatureVariant::BetaSSigma => 2 * m * d,
        }
    }

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(usize::from(c)).copied()
    }
}

impl fmt::Display for FeatureVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown feature variant '{s}'")))
    }
}

/// How the adapted second-order block enters the beta_sigma variants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondBlock {
    /// Square root of the adapted variance.
    #[default]
    StdDev,
    Variance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub variant: FeatureVariant,
    pub n_components: usize,
    pub values: Vec<f64>,
}

const FEATURE_MAGIC: &[u8; 8] = b"AEDFEAT1";

impl FeatureVector {
    /// Cache layout, little-endian: `b"AEDFEAT1"`, `u8` variant code,
    /// `u64` M, `u64` length, then `f64` values.
    pub fn write_cache(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::with_capacity(25 + 8 * self.values.len());
        buf.extend_from_slice(FEATURE_MAGIC);
        buf.push(self.variant.code());
        buf.extend_from_slice(&(self.n_components as u64).to_le_bytes());
        buf.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        crate::cache::write_atomic(path.as_ref(), &buf)
    }

    pub fn read_cache(path: impl AsRef<Path>) -> Result<Option<Self>> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        match std::fs::File::open(path) {
            Ok(mut f) => f.read_to_end(&mut bytes)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let bad = || Error::format("feature cache", path, "corrupt file");
        if bytes.len() < 25 || &bytes[..8] != FEATURE_MAGIC {
            return Err(bad());
        }
        let variant = FeatureVariant::from_code(bytes[8]).ok_or_else(bad)?;
        let m = u64::from_le_bytes(bytes[9..17].try_into().unwrap()) as usize;
        let len = u64::from_le_bytes(bytes[17..25].try_into().unwrap()) as usize;
        if bytes.len() != 25 + 8 * len {
            return Err(bad());
        }
        let values = bytes[25..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Some(Self {
            variant,
            n_components: m,
            values,
        }))
    }
}

fn check_frames(g: &DiagGmm, m: &MfccMatrix) -> Result<()> {
    if m.n_frames() == 0 {
        return Err(Error::Empty("MFCC matrix"));
    }
    if m.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            got: m.dim(),
        });
    }
    Ok(())
}

/// Average posterior mass per component, before the explicit L1
/// normalization. Sums to one up to rounding.
pub fn alpha_unnormalized(g: &DiagGmm, m: &MfccMatrix) -> Result<Vec<f64>> {
    check_frames(g, m)?;
    let mut acc = vec![0.0; g.n_components()];
    let mut post = vec![0.0; g.n_components()];
    for row in m.view().rows() {
        g.posterior_into(row.as_slice().expect("row-major"), &mut post);
        acc.iter_mut().zip(&post).for_each(|(a, p)| *a += p);
    }
    let t = m.n_frames() as f64;
    acc.iter_mut().for_each(|a| *a /= t);
    Ok(acc)
}

/// Soft-count histogram: duration-normalized posterior mass per component,
/// L1-normalized.
pub fn alpha_feature(g: &DiagGmm, m: &MfccMatrix) -> Result<FeatureVector> {
    let mut values = alpha_unnormalized(g, m)?;
    let total: f64 = values.iter().sum();
    values.iter_mut().for_each(|v| *v /= total);
    Ok(FeatureVector {
        variant: FeatureVariant::Alpha,
        n_components: g.n_components(),
        values,
    })
}

/// Zeroth, first and second order statistics of one clip against `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    /// Soft counts `n_k`.
    pub counts: Array1<f64>,
    /// `E_k(x)`, M x D.
    pub mean: Array2<f64>,
    /// `E_k(x^2)`, elementwise, M x D.
    pub second: Array2<f64>,
}

/// Posterior-weighted statistics. Components with `n_k < EMPTY_COUNT` take
/// the background moments, so adaptation leaves them at the prior.
pub fn sufficient_stats(g: &DiagGmm, m: &MfccMatrix) -> Result<SuffStats> {
    check_frames(g, m)?;
    let (k_count, d) = (g.n_components(), g.dim());
    let mut counts = Array1::<f64>::zeros(k_count);
    let mut s1 = Array2::<f64>::zeros((k_count, d));
    let mut s2 = Array2::<f64>::zeros((k_count, d));
    let mut post = vec![0.0; k_count];
    for row in m.view().rows() {
        let x = row.as_slice().expect("row-major");
        g.posterior_into(x, &mut post);
        for (k, &p) in post.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            counts[k] += p;
            let mut a = s1.row_mut(k);
            let mut b = s2.row_mut(k);
            for j in 0..d {
                a[j] += p * x[j];
                b[j] += p * x[j] * x[j];
            }
        }
    }

    let mu = g.means();
    let var = g.variances();
    for k in 0..k_count {
        let n = counts[k];
        for j in 0..d {
            if n < EMPTY_COUNT {
                s1[[k, j]] = mu[[k, j]];
                s2[[k, j]] = var[[k, j]] + mu[[k, j]] * mu[[k, j]];
            } else {
                s1[[k, j]] /= n;
                s2[[k, j]] /= n;
            }
        }
    }
    Ok(SuffStats {
        counts,
        mean: s1,
        second: s2,
    })
}

/// Background model adapted toward one clip. Weights are not adapted.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedGmm {
    pub means: Array2<f64>,
    pub variances: Array2<f64>,
    pub relevance: f64,
}

impl AdaptedGmm {
    pub fn n_components(&self) -> usize {
        self.means.nrows()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }
}

/// MAP adaptation of means and variances with relevance factor `r`:
///
/// ```text
/// a_k      = n_k / (n_k + r)
/// mean'_k  = a_k E_k(x)   + (1 - a_k) mean_k
/// var'_k   = a_k E_k(x^2) + (1 - a_k) (var_k + mean_k^2) - mean'_k^2
/// ```
///
/// Adapted variances are floored at the background model's floor.
pub fn map_adapt(g: &DiagGmm, s: &SuffStats, r: f64) -> Result<AdaptedGmm> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidRelevance(r));
    }
    let (m, d) = (g.n_components(), g.dim());
    if s.counts.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: s.counts.len(),
        });
    }
    if s.mean.dim() != (m, d) || s.second.dim() != (m, d) {
        return Err(Error::DimensionMismatch {
            expected: m * d,
            got: s.mean.len(),
        });
    }
    let mu = g.means();
    let var = g.variances();
    let floor = g.variance_floor();
    let mut means = Array2::zeros((m, d));
    let mut variances = Array2::zeros((m, d));
    for k in 0..m {
        let n = s.counts[k];
        let data_w = n / (n + r);
        let prior_w = r / (n + r);
        for j in 0..d {
            let mean = data_w * s.mean[[k, j]] + prior_w * mu[[k, j]];
            let second = data_w * s.second[[k, j]]
                + prior_w * (var[[k, j]] + mu[[k, j]] * mu[[k, j]]);
            means[[k, j]] = mean;
            variances[[k, j]] = (second - mean * mean).max(floor[j]);
        }
    }
    Ok(AdaptedGmm {
        means,
        variances,
        relevance: r,
    })
}

pub fn beta_feature(a: &AdaptedGmm, g: &DiagGmm, variant: FeatureVariant) -> Result<FeatureVector> {
    beta_feature_with(a, g, variant, SecondBlock::default())
}

/// Concatenate adapted parameters component by component. Scaled variants
/// multiply each adapted mean by `sqrt(w_k) / sigma_k` using the background
/// weights and standard deviations. The second block is never scaled.
pub fn beta_feature_with(
    a: &AdaptedGmm,
    g: &DiagGmm,
    variant: FeatureVariant,
    second: SecondBlock,
) -> Result<FeatureVector> {
    let (m, d) = (g.n_components(), g.dim());
    if a.means.dim() != (m, d) || a.variances.dim() != (m, d) {
        return Err(Error::DimensionMismatch {
            expected: m * d,
            got: a.n_components() * a.dim(),
        });
    }
    let scaled = matches!(variant, FeatureVariant::BetaS | FeatureVariant::BetaSSigma);
    let with_second = matches!(variant, FeatureVariant::BetaSigma | FeatureVariant::BetaSSigma);
    if variant == FeatureVariant::Alpha {
        return Err(Error::InvalidConfig("alpha is not a supervector variant".into()));
    }

    let mut values = Vec::with_capacity(variant.len(m, d));
    let w = g.weights();
    let var = g.variances();
    for k in 0..m {
        let sw = w[k].sqrt();
        for j in 0..d {
            let mean = a.means[[k, j]];
            values.push(if scaled { sw * mean / var[[k, j]].sqrt() } else { mean });
        }
    }
    if with_second {
        values.extend(a.variances.iter().map(|&v| match second {
            SecondBlock::StdDev => v.sqrt(),
            SecondBlock::Variance => v,
        }));
    }
    Ok(FeatureVector {
        variant,
        n_components: m,
        values,
    })
}

/// Compute one clip's feature of any variant.
pub fn clip_feature(
    g: &DiagGmm,
    m: &MfccMatrix,
    variant: FeatureVariant,
    relevance: f64,
    second: SecondBlock,
) -> Result<FeatureVector> {
    match variant {
        FeatureVariant::Alpha => alpha_feature(g, m),
        _ => {
            let stats = sufficient_stats(g, m)?;
            let adapted = map_adapt(g, &stats, relevance)?;
            beta_feature_with(&adapted, g, variant, second)
        }
    }
}

/// View a set of equal-length features as rows of a matrix.
pub fn stack(features: &[FeatureVector]) -> Result<Array2<f64>> {
    let p = features.first().map_or(0, |f| f.values.len());
    let mut flat = Vec::with_capacity(features.len() * p);
    for f in features {
        if f.values.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: f.values.len(),
            });
        }
        flat.extend_from_slice(&f.values);
    }
    Ok(Array2::from_shape_vec((features.len(), p), flat).expect("lengths checked"))
}
