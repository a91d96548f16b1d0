//! Configuration grids and the MAP/MAUC tables built from them.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiment::{run_experiment, ResultsBundle};
use super::manifest::Manifest;
use crate::error::{Error, Result};
use crate::features::FeatureVariant;
use crate::kernels::KernelKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub variants: Vec<FeatureVariant>,
    pub kernels: Vec<KernelKind>,
    pub components: Vec<usize>,
}

/// Whether a feature and kernel pairing is meaningful. The chi-square
/// kernel is only defined for the nonnegative histograms.
pub fn compatible(variant: FeatureVariant, kernel: KernelKind) -> bool {
    !(variant.is_beta() && kernel == KernelKind::ExpChi2)
}

impl SweepGrid {
    /// Cell configurations in table order: by M, then variant, then kernel.
    /// Supervector and chi-square pairings are skipped.
    pub fn cells(&self, base: &ExperimentConfig) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &m in &self.components {
            for &variant in &self.variants {
                for &kernel in &self.kernels {
                    if compatible(variant, kernel) {
                        out.push(ExperimentConfig {
                            variant,
                            kernel,
                            n_components: m,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub variant: FeatureVariant,
    pub kernel: KernelKind,
    pub n_components: usize,
    pub map: f64,
    pub mauc: f64,
}

impl SweepCell {
    pub fn of(bundle: &ResultsBundle) -> Self {
        Self {
            variant: bundle.config.variant,
            kernel: bundle.config.kernel,
            n_components: bundle.config.n_components,
            map: bundle.map,
            mauc: bundle.mauc,
        }
    }
}

/// Run every cell of the grid as an independent experiment.
pub fn sweep(manifest: &Manifest, base: &ExperimentConfig, grid: &SweepGrid) -> Result<Vec<ResultsBundle>> {
    let cells = grid.cells(base);
    if cells.is_empty() {
        return Err(Error::InvalidConfig("sweep grid has no valid cells".into()));
    }
    cells
        .iter()
        .map(|cfg| {
            log::info!("running {}", cfg.label());
            run_experiment(manifest, cfg).map_err(|e| Error::Cell {
                cell: cfg.label(),
                source: Box::new(e),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Map,
    Mauc,
}

/// Rows are M, columns feature and kernel pairs in the order
/// alpha (LK, RK, CK), beta_m (LK, RK), beta_s (LK, RK), beta_sigma (LK, RK),
/// beta_s_sigma (LK, RK), restricted to the pairs present.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub metric: Metric,
    pub columns: Vec<(FeatureVariant, KernelKind)>,
    pub rows: Vec<(usize, Vec<Option<f64>>)>,
}

pub fn table(cells: &[SweepCell], metric: Metric) -> MetricTable {
    let columns: Vec<(FeatureVariant, KernelKind)> = FeatureVariant::ALL
        .into_iter()
        .flat_map(|v| KernelKind::ALL.into_iter().map(move |k| (v, k)))
        .filter(|&(v, k)| compatible(v, k))
        .filter(|&(v, k)| cells.iter().any(|c| c.variant == v && c.kernel == k))
        .collect();
    let mut ms: Vec<usize> = cells.iter().map(|c| c.n_components).collect();
    ms.sort_unstable();
    ms.dedup();
    let rows = ms
        .into_iter()
        .map(|m| {
            let vals = columns
                .iter()
                .map(|&(v, k)| {
                    cells
                        .iter()
                        .find(|c| c.n_components == m && c.variant == v && c.kernel == k)
                        .map(|c| match metric {
                            Metric::Map => c.map,
                            Metric::Mauc => c.mauc,
                        })
                })
                .collect();
            (m, vals)
        })
        .collect();
    MetricTable {
        metric,
        columns,
        rows,
    }
}

impl MetricTable {
    fn headers(&self) -> Vec<String> {
        self.columns
            .iter()
            .map(|(v, k)| format!("{}_{}", v, k))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("M");
        for h in self.headers() {
            s.push(',');
            s.push_str(&h);
        }
        s.push('\n');
        for (m, vals) in &self.rows {
            let _ = write!(s, "{m}");
            for v in vals {
                s.push(',');
                if let Some(v) = v {
                    let _ = write!(s, "{v:.4}");
                }
            }
            s.push('\n');
        }
        s
    }

    /// Fixed-width text rendering for terminals.
    pub fn to_text(&self) -> String {
        let headers = self.headers();
        let width = headers.iter().map(String::len).max().unwrap_or(0).max(7);
        let title = match self.metric {
            Metric::Map => "MAP",
            Metric::Mauc => "MAUC",
        };
        let mut s = format!("{title:>5}");
        for h in &headers {
            let _ = write!(s, " {h:>width$}");
        }
        s.push('\n');
        for (m, vals) in &self.rows {
            let _ = write!(s, "{:>5}", format!("M={m}"));
            for v in vals {
                match v {
                    Some(v) => {
                        let _ = write!(s, " {v:>width$.4}");
                    }
                    None => {
                        let _ = write!(s, " {:>width$}", "-");
                    }
                }
            }
            s.push('\n');
        }
        s
    }
}
