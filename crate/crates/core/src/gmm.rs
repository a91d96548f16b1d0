//! Diagonal-covariance Gaussian mixture: the background model shared by all
//! clip-level features. Trained with k-means++ seeding, Lloyd refinement and EM.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing;
use crate::mfcc::MfccMatrix;

/// Frames per E-step work unit. Partial sums are combined in chunk order so
/// the result does not depend on how many threads ran.
const CHUNK: usize = 1024;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagGmm {
    weights: Array1<f64>,
    means: Array2<f64>,
    variances: Array2<f64>,
    variance_floor: Array1<f64>,
    // cached: ln w_k - 0.5 * sum_d ln(2 pi var_kd)
    log_norm: Array1<f64>,
    inv_var: Array2<f64>,
}

impl DiagGmm {
    pub fn new(
        weights: Array1<f64>,
        means: Array2<f64>,
        variances: Array2<f64>,
        variance_floor: Array1<f64>,
    ) -> Result<Self> {
        let (m, d) = means.dim();
        if m == 0 || d == 0 {
            return Err(Error::Empty("mixture has no components or dimensions"));
        }
        if weights.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: weights.len(),
            });
        }
        if variances.dim() != (m, d) {
            return Err(Error::DimensionMismatch {
                expected: m * d,
                got: variances.len(),
            });
        }
        if variance_floor.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: variance_floor.len(),
            });
        }
        let finite = |a: &[f64]| a.iter().all(|v| v.is_finite());
        if !finite(weights.as_slice().unwrap())
            || means.iter().any(|v| !v.is_finite())
            || variances.iter().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("mixture parameters"));
        }
        if weights.iter().any(|&w| w < 0.0) || (weights.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "mixture weights must be nonnegative and sum to 1, sum is {}",
                weights.sum()
            )));
        }
        if variance_floor.iter().any(|&f| !(f > 0.0)) {
            return Err(Error::InvalidConfig("variance floor must be positive".into()));
        }
        for row in variances.rows() {
            for (v, f) in row.iter().zip(&variance_floor) {
                if v < f {
                    return Err(Error::InvalidConfig(format!(
                        "variance {v} below floor {f}"
                    )));
                }
            }
        }

        let inv_var = variances.mapv(|v| 1.0 / v);
        let log_norm = Array1::from_iter(variances.rows().into_iter().zip(&weights).map(
            |(var, &w)| w.ln() - 0.5 * var.iter().map(|v| LN_2PI + v.ln()).sum::<f64>(),
        ));
        Ok(Self {
            weights,
            means,
            variances,
            variance_floor,
            log_norm,
            inv_var,
        })
    }

    pub fn n_components(&self) -> usize {
        self.means.nrows()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    pub fn means(&self) -> ArrayView2<'_, f64> {
        self.means.view()
    }

    pub fn variances(&self) -> ArrayView2<'_, f64> {
        self.variances.view()
    }

    pub fn variance_floor(&self) -> ArrayView1<'_, f64> {
        self.variance_floor.view()
    }

    /// `ln(w_k N(x; mu_k, var_k))` for every component into `out`.
    fn joint_log_densities(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let mu = self.means.row(k);
            let iv = self.inv_var.row(k);
            let mut q = 0.0;
            for ((&xi, &m), &p) in x.iter().zip(mu.iter()).zip(iv.iter()) {
                let diff = xi - m;
                q += diff * diff * p;
            }
            *o = self.log_norm[k] - 0.5 * q;
        }
    }

    /// Fill `out` with `Pr(k | x)` and return `ln p(x)`. Caller guarantees
    /// `x.len() == dim()` and `out.len() == n_components()`.
    pub(crate) fn posterior_into(&self, x: &[f64], out: &mut [f64]) -> f64 {
        self.joint_log_densities(x, out);
        let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            total += *o;
        }
        for o in out.iter_mut() {
            *o /= total;
        }
        max + total.ln()
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            })
        }
    }

    /// Component responsibilities for one frame, computed in log space.
    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("frame"));
        }
        let mut out = vec![0.0; self.n_components()];
        self.posterior_into(x, &mut out);
        Ok(out)
    }

    /// Mean per-frame log density.
    pub fn log_likelihood(&self, frames: &MfccMatrix) -> Result<f64> {
        if frames.n_frames() == 0 {
            return Err(Error::Empty("frame set"));
        }
        self.check_dim(frames.dim())?;
        let view = frames.view();
        let sums: Vec<f64> = view
            .axis_chunks_iter(Axis(0), CHUNK)
            .into_par_iter()
            .map(|chunk| {
                let mut scratch = vec![0.0; self.n_components()];
                chunk
                    .rows()
                    .into_iter()
                    .map(|x| self.posterior_into(x.as_slice().expect("row-major"), &mut scratch))
                    .sum::<f64>()
            })
            .collect();
        Ok(sums.iter().sum::<f64>() / frames.n_frames() as f64)
    }

    /// Flat text serialization. Floats use the shortest representation that
    /// parses back to the same bits.
    ///
    /// ```text
    /// aed-gmm 1
    /// <M> <D>
    /// floor <D values>
    /// weights <M values>
    /// mean <D values>       (M lines)
    /// var <D values>        (M lines)
    /// ```
    pub fn to_text(&self) -> String {
        let mut s = format!("aed-gmm 1\n{} {}\n", self.n_components(), self.dim());
        let mut line = |tag: &str, vals: ArrayView1<f64>| {
            s.push_str(tag);
            for v in vals {
                write!(s, " {v:?}").unwrap();
            }
            s.push('\n');
        };
        line("floor", self.variance_floor.view());
        line("weights", self.weights.view());
        for row in self.means.rows() {
            line("mean", row);
        }
        for row in self.variances.rows() {
            line("var", row);
        }
        s
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let bad = |detail: &str| Error::format("GMM", origin, detail);
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("aed-gmm 1") {
            return Err(bad("missing 'aed-gmm 1' header"));
        }
        let dims: Vec<usize> = lines
            .next()
            .ok_or_else(|| bad("missing dimensions"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("bad dimension")))
            .collect::<Result<_>>()?;
        let [m, d] = dims[..] else {
            return Err(bad("expected 'M D'"));
        };
        let mut read = |tag: &str, n: usize| -> Result<Vec<f64>> {
            let line = lines.next().ok_or_else(|| bad("truncated"))?;
            let mut toks = line.split_whitespace();
            if toks.next() != Some(tag) {
                return Err(bad(&format!("expected '{tag}' line")));
            }
            let vals: Vec<f64> = toks
                .map(|t| t.parse().map_err(|_| bad("bad number")))
                .collect::<Result<_>>()?;
            if vals.len() != n {
                return Err(bad(&format!("'{tag}' line has {} values, want {n}", vals.len())));
            }
            Ok(vals)
        };
        let floor = read("floor", d)?;
        let weights = read("weights", m)?;
        let mut means = Vec::with_capacity(m * d);
        for _ in 0..m {
            means.extend(read("mean", d)?);
        }
        let mut vars = Vec::with_capacity(m * d);
        for _ in 0..m {
            vars.extend(read("var", d)?);
        }
        Self::new(
            Array1::from(weights),
            Array2::from_shape_vec((m, d), means).unwrap(),
            Array2::from_shape_vec((m, d), vars).unwrap(),
            Array1::from(floor),
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::cache::write_atomic(path.as_ref(), self.to_text().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Unreadable {
            path: path.into(),
            source,
        })?;
        Self::from_text(&text, path)
    }

    /// Hex digest of the serialized model; keys feature caches.
    pub fn digest(&self) -> String {
        hashing::digest_hex(self.to_text().as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmTrainConfig {
    pub n_components: usize,
    pub max_iter: usize,
    /// Stop once the mean log-likelihood changes by less than this.
    pub tol: f64,
    /// Variance floor as a fraction of the per-dimension data variance.
    pub floor_ratio: f64,
    pub kmeans_iters: usize,
    pub seed: u64,
}

impl Default for GmmTrainConfig {
    fn default() -> Self {
        Self {
            n_components: 32,
            max_iter: 100,
            tol: 1e-5,
            floor_ratio: 1e-3,
            kmeans_iters: 10,
            seed: 0,
        }
    }
}

impl GmmTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_components == 0 {
            return Err(Error::InvalidConfig("need at least one component".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("EM tolerance must be positive".into()));
        }
        if !(self.floor_ratio > 0.0) {
            return Err(Error::InvalidConfig("variance floor ratio must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean log-likelihood at the start of each EM iteration.
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
    /// Set when the data has zero variance in some dimension; the floor then
    /// falls back to an absolute minimum.
    pub degenerate: bool,
}

/// Smallest variance floor used when the data itself has none.
const ABSOLUTE_FLOOR: f64 = 1e-8;

pub fn train_gmm(frames: &MfccMatrix, cfg: &GmmTrainConfig) -> Result<DiagGmm> {
    train_gmm_with_report(frames, cfg).map(|(g, _)| g)
}

pub fn train_gmm_with_report(
    frames: &MfccMatrix,
    cfg: &GmmTrainConfig,
) -> Result<(DiagGmm, TrainReport)> {
    cfg.validate()?;
    let n = frames.n_frames();
    let m = cfg.n_components;
    if n < m {
        return Err(Error::TooFewFrames { needed: m, got: n });
    }
    let x = frames.view();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training frames"));
    }

    let global_mean = x.mean_axis(Axis(0)).expect("n >= 1");
    let global_var = x.var_axis(Axis(0), 0.0);
    let degenerate = global_var.iter().any(|&v| v <= 0.0);
    if degenerate {
        log::warn!("training frames have zero variance in at least one dimension");
    }
    let floor = global_var.mapv(|v| (cfg.floor_ratio * v).max(ABSOLUTE_FLOOR));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centres = kmeans_pp(x, m, &mut rng);
    let centres = lloyd(x, centres, cfg.kmeans_iters);
    let mut gmm = init_from_centres(x, centres, &global_var, &floor, &global_mean)?;

    let mut log_likelihoods: Vec<f64> = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        let stats = e_step(&gmm, x);
        let ll = stats.ll / n as f64;
        if let Some(&prev) = log_likelihoods.last() {
            if (ll - prev).abs() < cfg.tol {
                log_likelihoods.push(ll);
                converged = true;
                break;
            }
        }
        log_likelihoods.push(ll);
        gmm = m_step(&gmm, &stats, n, &floor)?;
    }

    Ok((
        gmm,
        TrainReport {
            log_likelihoods,
            converged,
            degenerate,
        },
    ))
}

struct SuffSums {
    ll: f64,
    n: Array1<f64>,
    s1: Array2<f64>,
    s2: Array2<f64>,
}

impl SuffSums {
    fn zeros(m: usize, d: usize) -> Self {
        Self {
            ll: 0.0,
            n: Array1::zeros(m),
            s1: Array2::zeros((m, d)),
            s2: Array2::zeros((m, d)),
        }
    }

    fn add(&mut self, other: &SuffSums) {
        self.ll += other.ll;
        self.n += &other.n;
        self.s1 += &other.s1;
        self.s2 += &other.s2;
    }
}

fn e_step(gmm: &DiagGmm, x: ArrayView2<f64>) -> SuffSums {
    let (m, d) = (gmm.n_components(), gmm.dim());
    let partials: Vec<SuffSums> = x
        .axis_chunks_iter(Axis(0), CHUNK)
        .into_par_iter()
        .map(|chunk| {
            let mut acc = SuffSums::zeros(m, d);
            let mut post = vec![0.0; m];
            for row in chunk.rows() {
                let xs = row.as_slice().expect("row-major");
                acc.ll += gmm.posterior_into(xs, &mut post);
                for (k, &p) in post.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    acc.n[k] += p;
                    let mut s1 = acc.s1.row_mut(k);
                    let mut s2 = acc.s2.row_mut(k);
                    for j in 0..d {
                        let v = xs[j];
                        s1[j] += p * v;
                        s2[j] += p * v * v;
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = SuffSums::zeros(m, d);
    for p in &partials {
        total.add(p);
    }
    total
}

fn m_step(prev: &DiagGmm, s: &SuffSums, n: usize, floor: &Array1<f64>) -> Result<DiagGmm> {
    let (m, d) = (prev.n_components(), prev.dim());
    let mut means = prev.means.clone();
    let mut vars = prev.variances.clone();
    for k in 0..m {
        let nk = s.n[k];
        if nk <= 1e-10 {
            continue;
        }
        for j in 0..d {
            let mu = s.s1[[k, j]] / nk;
            means[[k, j]] = mu;
            vars[[k, j]] = (s.s2[[k, j]] / nk - mu * mu).max(floor[j]);
        }
    }
    let mut weights = s.n.mapv(|v| v / n as f64);
    let total = weights.sum();
    weights /= total;
    DiagGmm::new(weights, means, vars, floor.clone())
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp(x: ArrayView2<f64>, m: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centres = Array2::zeros((m, x.ncols()));
    let first = rng.random_range(0..n);
    centres.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = x
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(|r| sq_dist(r, centres.row(0)))
        .collect();

    for c in 1..m {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random_range(0.0..total);
            let mut acc = 0.0;
            let mut idx = n - 1;
            for (i, &v) in d2.iter().enumerate() {
                acc += v;
                if acc > target {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centres.row_mut(c).assign(&x.row(pick));
        let centre = centres.row(c);
        d2.par_iter_mut()
            .zip(x.axis_iter(Axis(0)).into_par_iter())
            .for_each(|(d, r)| *d = d.min(sq_dist(r, centre)));
    }
    centres
}

fn nearest(row: ArrayView1<f64>, centres: &Array2<f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centres.rows().into_iter().enumerate() {
        let d = sq_dist(row, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

fn lloyd(x: ArrayView2<f64>, mut centres: Array2<f64>, iters: usize) -> Array2<f64> {
    let (m, d) = centres.dim();
    for _ in 0..iters {
        let partials: Vec<(Array1<f64>, Array2<f64>)> = x
            .axis_chunks_iter(Axis(0), CHUNK)
            .into_par_iter()
            .map(|chunk| {
                let mut counts = Array1::zeros(m);
                let mut sums = Array2::zeros((m, d));
                for row in chunk.rows() {
                    let k = nearest(row, &centres);
                    counts[k] += 1.0;
                    let mut s = sums.row_mut(k);
                    s += &row;
                }
                (counts, sums)
            })
            .collect();
        let mut counts = Array1::<f64>::zeros(m);
        let mut sums = Array2::<f64>::zeros((m, d));
        for (c, s) in &partials {
            counts += c;
            sums += s;
        }
        for k in 0..m {
            if counts[k] > 0.0 {
                let mean = &sums.row(k) / counts[k];
                centres.row_mut(k).assign(&mean);
            }
        }
    }
    centres
}

fn init_from_centres(
    x: ArrayView2<f64>,
    centres: Array2<f64>,
    global_var: &Array1<f64>,
    floor: &Array1<f64>,
    global_mean: &Array1<f64>,
) -> Result<DiagGmm> {
    let (m, d) = centres.dim();
    let mut counts = Array1::<f64>::zeros(m);
    let mut s1 = Array2::<f64>::zeros((m, d));
    let mut s2 = Array2::<f64>::zeros((m, d));
    for row in x.rows() {
        let k = nearest(row, &centres);
        counts[k] += 1.0;
        for j in 0..d {
            s1[[k, j]] += row[j];
            s2[[k, j]] += row[j] * row[j];
        }
    }
    let mut vars = Array2::zeros((m, d));
    for k in 0..m {
        for j in 0..d {
            vars[[k, j]] = if counts[k] >= 2.0 {
                let mu = s1[[k, j]] / counts[k];
                (s2[[k, j]] / counts[k] - mu * mu).max(floor[j])
            } else {
                global_var[j].max(floor[j])
            };
        }
    }
    let means = if centres.iter().all(|v| v.is_finite()) {
        centres
    } else {
        Array2::from_shape_fn((m, d), |(_, j)| global_mean[j])
    };
    let mut weights = counts.mapv(|c| c.max(1.0));
    let total = weights.sum();
    weights /= total;
    DiagGmm::new(weights, means, vars, floor.clone())
}

/// Direct (non-log) density of one component, for tests and small problems.
pub fn gaussian_density(x: &[f64], mean: ArrayView1<f64>, var: ArrayView1<f64>) -> f64 {
    x.iter()
        .zip(mean.iter())
        .zip(var.iter())
        .map(|((&xi, &m), &v)| (-(xi - m) * (xi - m) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt())
        .product()
}
