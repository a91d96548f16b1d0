use std::path::PathBuf;

use aed_core::features::SecondBlock;
use aed_core::pipeline::DatasetKind;
use aed_core::{ExperimentConfig, FeatureVariant, KernelKind};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "aed", version, about = "Audio event detection with GMM features and kernel SVMs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic corpus with a generic manifest.
    Synth(SynthArgs),
    /// Compute MFCCs (and optionally per-fold features) into the cache.
    Extract(ExtractArgs),
    /// Train the background GMM of one or every rotation.
    TrainGmm(TrainGmmArgs),
    /// Run one ten-fold experiment and save its results bundle.
    Run(RunArgs),
    /// Run every feature, kernel and M combination of a grid.
    Sweep(SweepArgs),
    /// Tabulate saved bundles, write DET points and optionally fuse systems.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory; receives `manifest.csv` and `audio/`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub clips_per_class: usize,
    #[arg(long, default_value_t = 2.0)]
    pub seconds: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// TOML corpus description replacing the built-in three classes.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Manifest or dataset metadata file.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "generic")]
    pub dataset: DatasetKind,
    /// `filename,fold` mapping, required for ESC-50.
    #[arg(long)]
    pub fold_map: Option<PathBuf>,
}

impl DatasetArgs {
    pub fn load(&self) -> Result<aed_core::Manifest> {
        aed_core::pipeline::load_manifest(&self.manifest, self.dataset, self.fold_map.as_deref())
            .with_context(|| format!("loading {}", self.manifest.display()))
    }
}

fn parse_second_block(s: &str) -> std::result::Result<SecondBlock, String> {
    match s {
        "std_dev" | "std" => Ok(SecondBlock::StdDev),
        "variance" | "var" => Ok(SecondBlock::Variance),
        _ => Err(format!("expected std_dev or variance, got '{s}'")),
    }
}

/// Experiment settings. Each flag overrides the matching field of the
/// `--config` file, which in turn overrides the defaults.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// TOML file with any subset of the experiment fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<FeatureVariant>,
    #[arg(long)]
    pub kernel: Option<KernelKind>,
    /// Number of mixture components M.
    #[arg(long = "components")]
    pub n_components: Option<usize>,
    /// MAP relevance factor.
    #[arg(long)]
    pub relevance: Option<f64>,
    #[arg(long, value_parser = parse_second_block)]
    pub second_block: Option<SecondBlock>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "AED_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,

    #[arg(long, help_heading = "MFCC")]
    pub window_ms: Option<f64>,
    #[arg(long, help_heading = "MFCC")]
    pub hop_ms: Option<f64>,
    #[arg(long, help_heading = "MFCC")]
    pub n_coeffs: Option<usize>,
    #[arg(long, help_heading = "MFCC")]
    pub n_mel_filters: Option<usize>,
    #[arg(long, help_heading = "MFCC")]
    pub fft_size: Option<usize>,
    #[arg(long, help_heading = "MFCC")]
    pub fmin: Option<f64>,
    #[arg(long, help_heading = "MFCC")]
    pub fmax: Option<f64>,
    #[arg(long, help_heading = "MFCC")]
    pub log_floor: Option<f64>,

    #[arg(long, help_heading = "GMM")]
    pub gmm_max_iter: Option<usize>,
    #[arg(long, help_heading = "GMM")]
    pub gmm_tol: Option<f64>,
    #[arg(long, help_heading = "GMM")]
    pub floor_ratio: Option<f64>,
    #[arg(long, help_heading = "GMM")]
    pub kmeans_iters: Option<usize>,

    /// Candidate C values, comma separated.
    #[arg(long, value_delimiter = ',', help_heading = "Model selection")]
    pub c_values: Option<Vec<f64>>,
    /// Candidate gamma values, comma separated.
    #[arg(long, value_delimiter = ',', help_heading = "Model selection")]
    pub gamma_values: Option<Vec<f64>>,
    #[arg(long, help_heading = "Model selection")]
    pub inner_folds: Option<usize>,
}

fn set<T>(slot: &mut T, value: &Option<T>)
where
    T: Clone,
{
    if let Some(v) = value {
        *slot = v.clone();
    }
}

impl ConfigArgs {
    /// The merged configuration, validated.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let c = self.resolve_base()?;
        c.validate()?;
        Ok(c)
    }

    /// The merged configuration without validation, as a base for sweeps
    /// whose cells replace the feature, kernel and M.
    pub fn resolve_base(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        set(&mut c.variant, &self.variant);
        set(&mut c.kernel, &self.kernel);
        set(&mut c.n_components, &self.n_components);
        set(&mut c.relevance, &self.relevance);
        set(&mut c.second_block, &self.second_block);
        set(&mut c.seed, &self.seed);
        if self.cache_dir.is_some() {
            c.cache_dir = self.cache_dir.clone();
        }

        set(&mut c.mfcc.window_ms, &self.window_ms);
        set(&mut c.mfcc.hop_ms, &self.hop_ms);
        set(&mut c.mfcc.n_coeffs, &self.n_coeffs);
        set(&mut c.mfcc.n_mel_filters, &self.n_mel_filters);
        set(&mut c.mfcc.fft_size, &self.fft_size);
        set(&mut c.mfcc.fmin, &self.fmin);
        set(&mut c.mfcc.fmax, &self.fmax);
        set(&mut c.mfcc.log_floor, &self.log_floor);

        set(&mut c.gmm.max_iter, &self.gmm_max_iter);
        set(&mut c.gmm.tol, &self.gmm_tol);
        set(&mut c.gmm.floor_ratio, &self.floor_ratio);
        set(&mut c.gmm.kmeans_iters, &self.kmeans_iters);

        set(&mut c.grid.c_values, &self.c_values);
        set(&mut c.grid.gamma_values, &self.gamma_values);
        set(&mut c.grid.inner_folds, &self.inner_folds);
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Also write each clip's MFCCs as CSV under this directory.
    #[arg(long)]
    pub mfcc_csv: Option<PathBuf>,
    /// Also train every rotation's GMM and compute clip features.
    #[arg(long)]
    pub features: bool,
}

#[derive(Debug, Args)]
pub struct TrainGmmArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Held-out fold; every fold when omitted.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=10))]
    pub fold: Option<u8>,
    /// Directory receiving `fold<N>.gmm`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Results directory.
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_delimiter = ',', default_value = "alpha,beta_m,beta_s,beta_sigma,beta_s_sigma")]
    pub variants: Vec<FeatureVariant>,
    #[arg(long, value_delimiter = ',', default_value = "lk,rk,ck")]
    pub kernels: Vec<KernelKind>,
    /// Values of M, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256")]
    pub sizes: Vec<usize>,
    /// Results directory; receives one bundle per cell plus the report.
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Bundle files, or directories whose `*.json` files are bundles.
    #[arg(required = true)]
    pub bundles: Vec<PathBuf>,
    #[arg(long, default_value = "report")]
    pub out: PathBuf,
    /// Also fuse all given systems by score averaging into `<out>/fusion/`.
    #[arg(long)]
    pub fuse: bool,
}
