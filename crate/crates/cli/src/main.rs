mod args;

use std::path::PathBuf;
use std::process::ExitCode;

use aed_core::audio::synth::{synth_dataset, SynthSpec};
use aed_core::pipeline::{
    bundle_path, clip_features, clip_mfccs, fuse_bundles, run_experiment, sweep, table,
    train_fold_gmm, write_fusion, write_report, Metric, ResultsBundle, SweepCell, SweepGrid,
    FOLD_COUNT,
};
use anyhow::{bail, Context, Result};
use clap::Parser;
use log::info;

use args::{Cli, Command, ExtractArgs, ReportArgs, RunArgs, SweepArgs, SynthArgs, TrainGmmArgs};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Extract(a) => extract(a),
        Command::TrainGmm(a) => train_gmm(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render(&e));
            ExitCode::FAILURE
        }
    }
}

/// The error chain joined by `: `, skipping causes that the previous
/// message already ends with.
fn render(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !last.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
        last = text;
    }
    out
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => SynthSpec::three_class(a.clips_per_class, a.seconds, a.seed),
    };
    let m = synth_dataset(&spec, &a.out)?;
    println!(
        "wrote {} clips in {} classes to {}",
        m.len(),
        m.events().len(),
        a.out.join("manifest.csv").display()
    );
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let m = a.data.load()?;
    if cfg.resolved_cache_dir().is_none() && a.mfcc_csv.is_none() {
        log::warn!("no cache directory or --mfcc-csv given; results are computed and discarded");
    }
    let mfccs = clip_mfccs(&m, &cfg)?;
    let frames: usize = mfccs.iter().map(|x| x.n_frames()).sum();
    println!("{} clips, {frames} frames", m.len());
    if let Some(dir) = &a.mfcc_csv {
        let digest = cfg.mfcc.digest();
        for (row, mf) in m.rows().iter().zip(&mfccs) {
            let name = aed_core::cache::sanitize(&row.clip_id);
            aed_core::mfcc::write_csv(dir.join(format!("{name}.csv")), mf, &digest)?;
        }
    }
    if a.features {
        for fold in 1..=FOLD_COUNT as u8 {
            let g = train_fold_gmm(&m, &mfccs, &cfg, fold)?;
            let f = clip_features(&m, &mfccs, &g, &cfg)?;
            info!("fold {fold}: {} {} features of length {}", f.len(), cfg.variant, f[0].values.len());
        }
    }
    Ok(())
}

fn train_gmm(a: TrainGmmArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let m = a.data.load()?;
    let mfccs = clip_mfccs(&m, &cfg)?;
    let folds: Vec<u8> = match a.fold {
        Some(f) => vec![f],
        None => (1..=FOLD_COUNT as u8).collect(),
    };
    for fold in folds {
        let g = train_fold_gmm(&m, &mfccs, &cfg, fold)?;
        let path = a.out.join(format!("fold{fold}.gmm"));
        g.save(&path)?;
        println!("fold {fold}: {} components -> {}", g.n_components(), path.display());
    }
    Ok(())
}

fn print_bundle(b: &ResultsBundle) {
    println!("{}: MAP {:.4}  MAUC {:.4}", b.config.label(), b.map, b.mauc);
    for e in &b.events {
        println!("  {:<24} AP {:.4}  AUC {:.4}", e.event, e.ap, e.auc);
    }
    if let Some(cats) = &b.categories {
        for (cat, r) in cats {
            println!("  [{cat}] MAP {:.4}  MAUC {:.4}", r.map, r.mauc);
        }
    }
}

fn run(a: RunArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let m = a.data.load()?;
    info!("running {} on {} clips", cfg.label(), m.len());
    let b = run_experiment(&m, &cfg)?;
    let path = bundle_path(&a.out, &cfg);
    b.save(&path)?;
    print_bundle(&b);
    println!("saved {}", path.display());
    Ok(())
}

fn print_tables(bundles: &[ResultsBundle]) {
    let cells: Vec<SweepCell> = bundles.iter().map(SweepCell::of).collect();
    print!("{}", table(&cells, Metric::Map).to_text());
    print!("{}", table(&cells, Metric::Mauc).to_text());
}

fn run_sweep(a: SweepArgs) -> Result<()> {
    let base = a.config.resolve_base()?;
    let m = a.data.load()?;
    let grid = SweepGrid {
        variants: a.variants,
        kernels: a.kernels,
        components: a.sizes,
    };
    let bundles = sweep(&m, &base, &grid)?;
    for b in &bundles {
        b.save(bundle_path(&a.out, &b.config))?;
    }
    write_report(&bundles, &a.out)?;
    print_tables(&bundles);
    println!("{} cells saved under {}", bundles.len(), a.out.display());
    Ok(())
}

fn bundle_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        bail!("no bundle files found");
    }
    Ok(out)
}

fn report(a: ReportArgs) -> Result<()> {
    let bundles = bundle_files(&a.bundles)?
        .iter()
        .map(|p| ResultsBundle::load(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    write_report(&bundles, &a.out)?;
    print_tables(&bundles);
    if a.fuse {
        let f = fuse_bundles(&bundles)?;
        write_fusion(&f, &a.out.join("fusion"))?;
        println!("fusion of {}: MAP {:.4}  MAUC {:.4}", f.systems.join(" + "), f.map, f.mauc);
    }
    println!("report written to {}", a.out.display());
    Ok(())
}
