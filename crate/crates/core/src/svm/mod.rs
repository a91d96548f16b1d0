//! Binary soft-margin SVMs on precomputed Gram matrices, trained one event
//! against the rest, with cross-validated hyperparameters.

mod cv;
mod smo;

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{self, GramMatrix, KernelSpec};

pub use cv::{
    grid_search_cv, stratified_folds, train_event_detector, CvGrid, DetectorConfig, GridChoice,
    Standardizer,
};
pub use smo::dual_objective;

/// Stopping tolerance on the maximal KKT violation.
pub const SMO_TOLERANCE: f64 = 1e-3;

/// Trained one-vs-rest detector. Scores are raw margins
/// `sum_i coef_i K(x, s_i) + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: KernelSpec,
    pub c: f64,
    pub bias: f64,
    /// Training-set positions of the support vectors.
    pub support_indices: Vec<usize>,
    pub support_ids: Vec<String>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coef: Vec<f64>,
    /// Support vectors in the (possibly standardized) feature space. Empty
    /// for models trained directly from a Gram matrix.
    pub support_vectors: Vec<Vec<f64>>,
    pub standardizer: Option<Standardizer>,
    pub kkt_violation: f64,
}

fn validate_labels(y: &[f64]) -> Result<()> {
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidConfig("labels must be +1 or -1".into()));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::SingleClass);
    }
    Ok(())
}

fn check_symmetric(k: ArrayView2<f64>) -> Result<()> {
    if !k.is_square() {
        return Err(Error::DimensionMismatch {
            expected: k.nrows(),
            got: k.ncols(),
        });
    }
    let scale = k.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for i in 0..k.nrows() {
        for j in 0..i {
            if (k[[i, j]] - k[[j, i]]).abs() > 1e-12 * scale {
                return Err(Error::NonSymmetricGram { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Dual coefficients over the whole training set plus bias, before support
/// extraction. Used by cross-validation, which scores against full blocks.
pub(crate) fn solve_dense(k: ArrayView2<f64>, y: &[f64], c: f64) -> Result<(Vec<f64>, f64, f64)> {
    let sol = smo::solve(k, y, c, SMO_TOLERANCE)?;
    let coef = sol.alpha.iter().zip(y).map(|(a, y)| a * y).collect();
    Ok((coef, -sol.rho, sol.violation))
}

/// Train a C-SVC on a precomputed train x train Gram matrix.
pub fn train_csvc(k: &GramMatrix, y: &[f64], c: f64, kernel: KernelSpec) -> Result<SvmModel> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidConfig(format!("C must be positive, got {c}")));
    }
    if k.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: k.nrows(),
        });
    }
    check_symmetric(k.values.view())?;
    validate_labels(y)?;

    let sol = smo::solve(k.values.view(), y, c, SMO_TOLERANCE)?;
    let mut model = SvmModel {
        kernel,
        c,
        bias: -sol.rho,
        support_indices: Vec::new(),
        support_ids: Vec::new(),
        dual_coef: Vec::new(),
        support_vectors: Vec::new(),
        standardizer: None,
        kkt_violation: sol.violation,
    };
    for (i, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            model.support_indices.push(i);
            model
                .support_ids
                .push(k.row_ids.get(i).cloned().unwrap_or_else(|| i.to_string()));
            model.dual_coef.push(a * y[i]);
        }
    }
    Ok(model)
}

/// Train from feature rows: builds the Gram matrix and keeps the support
/// vectors so the model can score new features on its own.
pub fn train_csvc_features(
    kernel: KernelSpec,
    x: ArrayView2<f64>,
    ids: &[String],
    y: &[f64],
    c: f64,
) -> Result<SvmModel> {
    let k = kernels::gram_symmetric(&kernel, x)?.with_ids(ids.to_vec(), ids.to_vec());
    let mut model = train_csvc(&k, y, c, kernel)?;
    model.support_vectors = model
        .support_indices
        .iter()
        .map(|&i| x.row(i).to_vec())
        .collect();
    Ok(model)
}

/// Margins for test rows of a test x support Gram matrix whose columns follow
/// `model.support_indices` order.
pub fn decision_scores(model: &SvmModel, k_test: ArrayView2<f64>) -> Result<Vec<f64>> {
    if k_test.ncols() != model.dual_coef.len() && k_test.nrows() > 0 {
        return Err(Error::DimensionMismatch {
            expected: model.dual_coef.len(),
            got: k_test.ncols(),
        });
    }
    Ok(k_test
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .zip(&model.dual_coef)
                .map(|(k, c)| k * c)
                .sum::<f64>()
                + model.bias
        })
        .collect())
}

impl SvmModel {
    /// Score raw feature rows: standardize if the model was fit on
    /// standardized features, then evaluate against stored support vectors.
    pub fn score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if x.nrows() == 0 {
            return Ok(Vec::new());
        }
        if self.support_vectors.len() != self.dual_coef.len() {
            return Err(Error::InvalidConfig(
                "model has no stored support vectors".into(),
            ));
        }
        let x = match &self.standardizer {
            Some(s) => s.apply(x)?,
            None => x.to_owned(),
        };
        let p = self.support_vectors.first().map_or(x.ncols(), Vec::len);
        let sv = Array2::from_shape_vec(
            (self.support_vectors.len(), p),
            self.support_vectors.concat(),
        )
        .map_err(|_| Error::InvalidConfig("ragged support vectors".into()))?;
        let k = kernels::gram(&self.kernel, x.view(), sv.view())?;
        decision_scores(self, k.values.view())
    }

    /// Persist as JSON (support ids, coefficients, bias, kernel and
    /// standardization). Floats round-trip exactly.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        crate::cache::write_atomic(path.as_ref(), text.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Unreadable {
            path: path.into(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::format("SVM model", path, e))
    }
}
