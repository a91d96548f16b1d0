//! Linear, RBF and exponential chi-square kernels, and Gram matrices over
//! feature sets.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output rows per parallel work unit.
const TILE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KernelKind {
    #[serde(rename = "lk")]
    Linear,
    #[serde(rename = "rk")]
    Rbf,
    #[serde(rename = "ck")]
    ExpChi2,
}

impl KernelKind {
    pub const ALL: [KernelKind; 3] = [KernelKind::Linear, KernelKind::Rbf, KernelKind::ExpChi2];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Linear => "lk",
            KernelKind::Rbf => "rk",
            KernelKind::ExpChi2 => "ck",
        }
    }

    pub fn uses_gamma(self) -> bool {
        self != KernelKind::Linear
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lk" | "linear" => Ok(KernelKind::Linear),
            "rk" | "rbf" => Ok(KernelKind::Rbf),
            "ck" | "chi2" | "expchi2" => Ok(KernelKind::ExpChi2),
            other => Err(Error::InvalidConfig(format!("unknown kernel '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Ignored by the linear kernel.
    pub gamma: f64,
}

impl KernelSpec {
    pub fn linear() -> Self {
        Self {
            kind: KernelKind::Linear,
            gamma: 0.0,
        }
    }

    pub fn rbf(gamma: f64) -> Self {
        Self {
            kind: KernelKind::Rbf,
            gamma,
        }
    }

    pub fn exp_chi2(gamma: f64) -> Self {
        Self {
            kind: KernelKind::ExpChi2,
            gamma,
        }
    }

    pub fn new(kind: KernelKind, gamma: f64) -> Self {
        Self { kind, gamma }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.uses_gamma() && !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "{} kernel needs gamma > 0, got {}",
                self.kind, self.gamma
            )));
        }
        Ok(())
    }

    /// Evaluate without validation; inputs are assumed checked.
    fn eval_unchecked(&self, f: &[f64], g: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Linear => f.iter().zip(g).map(|(a, b)| a * b).sum(),
            KernelKind::Rbf => {
                let d: f64 = f.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum();
                (-self.gamma * d).exp()
            }
            KernelKind::ExpChi2 => (-self.gamma * chi2_distance(f, g)).exp(),
        }
    }
}

/// `sum_i (f_i - g_i)^2 / (f_i + g_i)`, with `0/0` terms contributing zero.
pub fn chi2_distance(f: &[f64], g: &[f64]) -> f64 {
    f.iter()
        .zip(g)
        .map(|(&a, &b)| {
            let s = a + b;
            if s == 0.0 {
                0.0
            } else {
                (a - b) * (a - b) / s
            }
        })
        .sum()
}

fn check_nonnegative(values: impl IntoIterator<Item = f64>) -> Result<()> {
    for (index, value) in values.into_iter().enumerate() {
        if !(value >= 0.0) {
            return Err(Error::NegativeFeature { index, value });
        }
    }
    Ok(())
}

pub fn kernel_eval(spec: &KernelSpec, f: &[f64], g: &[f64]) -> Result<f64> {
    spec.validate()?;
    if f.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: f.len(),
            got: g.len(),
        });
    }
    if spec.kind == KernelKind::ExpChi2 {
        check_nonnegative(f.iter().chain(g).copied())?;
    }
    Ok(spec.eval_unchecked(f, g))
}

/// Kernel evaluations between two feature sets, with optional identifiers
/// for the rows and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub values: Array2<f64>,
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
}

impl GramMatrix {
    pub fn new(values: Array2<f64>) -> Self {
        Self {
            values,
            row_ids: Vec::new(),
            col_ids: Vec::new(),
        }
    }

    pub fn with_ids(mut self, row_ids: Vec<String>, col_ids: Vec<String>) -> Self {
        self.row_ids = row_ids;
        self.col_ids = col_ids;
        self
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_symmetric(&self) -> bool {
        let v = &self.values;
        v.is_square()
            && (0..v.nrows()).all(|i| (0..i).all(|j| v[[i, j]] == v[[j, i]]))
    }
}

fn check_inputs(spec: &KernelSpec, sets: &[ArrayView2<f64>]) -> Result<()> {
    spec.validate()?;
    let p = sets[0].ncols();
    for s in sets {
        if s.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: s.ncols(),
            });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel input"));
        }
        if spec.kind == KernelKind::ExpChi2 {
            check_nonnegative(s.iter().copied())?;
        }
    }
    Ok(())
}

/// Entry `(i, j)` is `k(rows_i, cols_j)`. Row tiles are filled in parallel;
/// every entry is computed the same way regardless of tiling.
pub fn gram(spec: &KernelSpec, rows: ArrayView2<f64>, cols: ArrayView2<f64>) -> Result<GramMatrix> {
    check_inputs(spec, &[rows, cols])?;
    let rows = rows.as_standard_layout();
    let cols = cols.as_standard_layout();
    let col_slices: Vec<&[f64]> = cols.rows().into_iter().map(|r| r.to_slice().unwrap()).collect();
    let mut out = Array2::zeros((rows.nrows(), cols.nrows()));
    out.axis_chunks_iter_mut(Axis(0), TILE)
        .into_par_iter()
        .zip(rows.axis_chunks_iter(Axis(0), TILE).into_par_iter())
        .for_each(|(mut dst, src)| {
            for (mut drow, srow) in dst.rows_mut().into_iter().zip(src.rows()) {
                let f = srow.to_slice().unwrap();
                for (d, g) in drow.iter_mut().zip(&col_slices) {
                    *d = spec.eval_unchecked(f, g);
                }
            }
        });
    Ok(GramMatrix::new(out))
}

/// Square Gram of a set with itself: the upper triangle is computed and
/// mirrored, so the result is exactly symmetric.
pub fn gram_symmetric(spec: &KernelSpec, x: ArrayView2<f64>) -> Result<GramMatrix> {
    check_inputs(spec, &[x])?;
    let x = x.as_standard_layout();
    let slices: Vec<&[f64]> = x.rows().into_iter().map(|r| r.to_slice().unwrap()).collect();
    let n = slices.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| spec.eval_unchecked(slices[i], slices[j])).collect())
        .collect();
    let mut out = Array2::zeros((n, n));
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            out[[i, i + off]] = v;
            out[[i + off, i]] = v;
        }
    }
    Ok(GramMatrix::new(out))
}
