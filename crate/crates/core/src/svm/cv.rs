use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_dense, train_csvc_features, SvmModel};
use crate::error::{Error, Result};
use crate::eval::average_precision_raw;
use crate::features::FeatureVariant;
use crate::kernels::{gram_symmetric, KernelKind, KernelSpec};

/// Hyperparameter candidates for the inner cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvGrid {
    pub c_values: Vec<f64>,
    pub gamma_values: Vec<f64>,
    pub inner_folds: usize,
}

impl Default for CvGrid {
    /// `C` in 2^-5, 2^-3, ..., 2^15 and `gamma` in 2^-15, 2^-13, ..., 2^3
    /// with three stratified inner folds.
    fn default() -> Self {
        Self {
            c_values: (-5..=15).step_by(2).map(|e| 2f64.powi(e)).collect(),
            gamma_values: (-15..=3).step_by(2).map(|e| 2f64.powi(e)).collect(),
            inner_folds: 3,
        }
    }
}

impl CvGrid {
    pub fn single(c: f64, gamma: f64) -> Self {
        Self {
            c_values: vec![c],
            gamma_values: vec![gamma],
            inner_folds: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_values.is_empty() || self.gamma_values.is_empty() {
            return Err(Error::InvalidConfig("hyperparameter grid is empty".into()));
        }
        if self.inner_folds < 2 {
            return Err(Error::InvalidConfig("need at least two inner folds".into()));
        }
        if self
            .c_values
            .iter()
            .chain(&self.gamma_values)
            .any(|&v| !(v > 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidConfig("grid values must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridChoice {
    pub c: f64,
    /// Zero for the linear kernel.
    pub gamma: f64,
    /// Mean inner-fold average precision.
    pub score: f64,
}

/// Per-dimension z-scoring fit on training features. Constant dimensions
/// keep unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::Empty("standardization set"));
        }
        let mean = x.mean_axis(Axis(0)).expect("nonempty");
        let std = x.std_axis(Axis(0), 0.0);
        Ok(Self {
            mean: mean.to_vec(),
            scale: std.iter().map(|&s| if s > 0.0 { s } else { 1.0 }).collect(),
        })
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: x.ncols(),
            });
        }
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

/// Assign each sample an inner fold in `0..folds`, shuffling each class with
/// a seeded RNG and dealing it round-robin.
pub fn stratified_folds(y: &[f64], folds: usize, seed: u64) -> Result<Vec<usize>> {
    let mut pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] > 0.0).collect();
    let mut neg: Vec<usize> = (0..y.len()).filter(|&i| y[i] <= 0.0).collect();
    for class in [&pos, &neg] {
        if class.len() < folds {
            return Err(Error::ClassTooSmall {
                count: class.len(),
                folds,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut assignment = vec![0; y.len()];
    for class in [&pos, &neg] {
        for (r, &i) in class.iter().enumerate() {
            assignment[i] = r % folds;
        }
    }
    Ok(assignment)
}

fn take(k: &Array2<f64>, rows: &[usize], cols: &[usize]) -> Array2<f64> {
    k.select(Axis(0), rows).select(Axis(1), cols)
}

/// Inner cross-validation over the grid. Picks the cell with the highest
/// mean inner-fold AP; ties go to the smaller `C`, then the smaller `gamma`.
pub fn grid_search_cv(
    x: ArrayView2<f64>,
    y: &[f64],
    kind: KernelKind,
    grid: &CvGrid,
    seed: u64,
) -> Result<GridChoice> {
    grid.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: x.nrows(),
        });
    }
    let fold_of = stratified_folds(y, grid.inner_folds, seed)?;
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..grid.inner_folds)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..y.len()).partition(|&i| fold_of[i] == f);
            (train, test)
        })
        .collect();

    let gammas = if kind.uses_gamma() {
        grid.gamma_values.clone()
    } else {
        vec![0.0]
    };

    let cells: Vec<Vec<GridChoice>> = gammas
        .par_iter()
        .map(|&gamma| -> Result<Vec<GridChoice>> {
            let k = gram_symmetric(&KernelSpec::new(kind, gamma), x)?.values;
            let per_split: Vec<(Array2<f64>, Array2<f64>, Vec<f64>, Vec<bool>)> = splits
                .iter()
                .map(|(train, test)| {
                    (
                        take(&k, train, train),
                        take(&k, test, train),
                        train.iter().map(|&i| y[i]).collect(),
                        test.iter().map(|&i| y[i] > 0.0).collect(),
                    )
                })
                .collect();
            grid.c_values
                .par_iter()
                .map(|&c| {
                    let mut total = 0.0;
                    for (k_tr, k_te, y_tr, truth) in &per_split {
                        let (coef, bias, _) = solve_dense(k_tr.view(), y_tr, c)?;
                        let scores: Vec<f64> = k_te
                            .rows()
                            .into_iter()
                            .map(|r| r.dot(&ndarray::ArrayView1::from(&coef)) + bias)
                            .collect();
                        total += average_precision_raw(&scores, truth)?;
                    }
                    Ok(GridChoice {
                        c,
                        gamma,
                        score: total / per_split.len() as f64,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let best = cells
        .into_iter()
        .flatten()
        .reduce(|best, cand| {
            let better = cand.score > best.score
                || (cand.score == best.score
                    && (cand.c < best.c || (cand.c == best.c && cand.gamma < best.gamma)));
            if better {
                cand
            } else {
                best
            }
        })
        .expect("grid validated as nonempty");
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub grid: CvGrid,
    pub seed: u64,
}

/// One-vs-rest detector for `event` over the given training clips.
/// Supervector variants are z-scored with statistics of these clips only;
/// histograms are used as they are.
pub fn train_event_detector(
    event: &str,
    ids: &[String],
    labels: &[String],
    features: ArrayView2<f64>,
    variant: FeatureVariant,
    kind: KernelKind,
    cfg: &DetectorConfig,
) -> Result<SvmModel> {
    if ids.len() != labels.len() || ids.len() != features.nrows() {
        return Err(Error::DimensionMismatch {
            expected: ids.len(),
            got: features.nrows(),
        });
    }
    let y: Vec<f64> = labels
        .iter()
        .map(|l| if l == event { 1.0 } else { -1.0 })
        .collect();
    if !y.contains(&1.0) {
        return Err(Error::EventAbsent(event.to_string()));
    }

    let standardizer = variant
        .is_beta()
        .then(|| Standardizer::fit(features))
        .transpose()?;
    let x = match &standardizer {
        Some(s) => s.apply(features)?,
        None => features.to_owned(),
    };

    let choice = grid_search_cv(x.view(), &y, kind, &cfg.grid, cfg.seed)?;
    log::debug!(
        "event {event}: C={} gamma={} inner AP={:.4}",
        choice.c,
        choice.gamma,
        choice.score
    );
    let mut model =
        train_csvc_features(KernelSpec::new(kind, choice.gamma), x.view(), ids, &y, choice.c)?;
    model.standardizer = standardizer;
    Ok(model)
}
