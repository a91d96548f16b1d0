//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Run with `cargo test -p aed-core --test acceptance --release`. Criterion 4
//! needs the real datasets; see `full_scale` for the environment variables.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use aed_core::audio::synth::{render_clip, synth_dataset, SynthKind, SynthLevels, SynthSpec};
use aed_core::eval::{average_precision_raw, det_auc, det_curve_raw};
use aed_core::features::{
    alpha_unnormalized, clip_feature, map_adapt, sufficient_stats, SecondBlock, SuffStats,
};
use aed_core::gmm::train_gmm_with_report;
use aed_core::kernels::{gram_symmetric, kernel_eval};
use aed_core::mfcc::{hz_to_mel, mel_to_hz, MfccExtractor};
use aed_core::pipeline::{fuse_bundles, load_manifest, run_experiment, DatasetKind, ResultsBundle};
use aed_core::svm::train_csvc;
use aed_core::{
    DiagGmm, ExperimentConfig, FeatureVariant, GmmTrainConfig, GramMatrix, KernelKind, KernelSpec,
    Manifest, MfccConfig, MfccMatrix,
};
use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Collects sub-check failures for one criterion.
#[derive(Default)]
struct Checks {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }
}

enum Verdict {
    Pass,
    Fail,
    Skip,
}

fn report(id: u8, name: &str, elapsed: Duration, budget: Option<Duration>, mut c: Checks, skip: bool) -> Verdict {
    if let Some(b) = budget {
        c.check(elapsed <= b, || format!("runtime {elapsed:.1?} exceeds {b:?}"));
    }
    let verdict = if skip {
        Verdict::Skip
    } else if c.failures.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let tag = match verdict {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
        Verdict::Skip => "SKIP",
    };
    let mut detail = c.notes.join("; ");
    if !c.failures.is_empty() {
        let shown: Vec<&str> = c.failures.iter().take(5).map(String::as_str).collect();
        detail = format!("{} failure(s): {}", c.failures.len(), shown.join(" | "));
    }
    println!("{tag} [{id}] {name} ({elapsed:.1?}) {detail}");
    verdict
}

fn random_gmm(rng: &mut ChaCha8Rng, m: usize, d: usize) -> DiagGmm {
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights = Array1::from_iter(raw.iter().map(|w| w / total));
    let means = Array2::from_shape_fn((m, d), |_| rng.random_range(-4.0..4.0));
    let vars = Array2::from_shape_fn((m, d), |_| rng.random_range(0.2..3.0));
    DiagGmm::new(weights, means, vars, Array1::from_elem(d, 1e-3)).unwrap()
}

fn random_frames(rng: &mut ChaCha8Rng, t: usize, d: usize, spread: f64) -> MfccMatrix {
    MfccMatrix::new(Array2::from_shape_fn((t, d), |_| {
        spread * rng.sample::<f64, _>(StandardNormal)
    }))
}

fn histograms(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Array2<f64> {
    let mut x = Array2::from_shape_fn((n, m), |_| {
        if rng.random_bool(0.3) {
            0.0
        } else {
            rng.random::<f64>()
        }
    });
    for mut row in x.rows_mut() {
        if row.sum() == 0.0 {
            row[0] = 1.0;
        }
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    x
}

fn min_eigenvalue(k: &Array2<f64>) -> f64 {
    let n = k.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| k[[i, j]]);
    m.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------- criterion 1

fn property_suite() -> Checks {
    let mut c = Checks::default();
    let mut rng = ChaCha8Rng::seed_from_u64(101);

    // Posterior normalization over 1000 random draws, including far outliers.
    let mut worst = 0.0f64;
    for draw in 0..1000 {
        let m = rng.random_range(1..=64);
        let d = rng.random_range(1..=20);
        let g = random_gmm(&mut rng, m, d);
        let scale = if draw % 10 == 0 { 200.0 } else { 3.0 };
        let x: Vec<f64> = (0..d).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let p = g.posterior(&x).unwrap();
        let s: f64 = p.iter().sum();
        worst = worst.max((s - 1.0).abs());
        c.check((s - 1.0).abs() <= 1e-9, || format!("posterior sum {s} (draw {draw})"));
        c.check(p.iter().all(|&v| (0.0..=1.0).contains(&v)), || format!("posterior outside [0,1] (draw {draw})"));
    }
    c.note(format!("posterior |sum-1| <= {worst:.1e}"));

    // Soft counts sum to T; the unnormalized histogram sums to one.
    for trial in 0..50 {
        let m = rng.random_range(1..=32);
        let d = rng.random_range(1..=20);
        let t = rng.random_range(1..=400);
        let g = random_gmm(&mut rng, m, d);
        let frames = random_frames(&mut rng, t, d, 3.0);
        let s = sufficient_stats(&g, &frames).unwrap();
        let total = s.counts.sum();
        c.check((total - t as f64).abs() <= 1e-6, || format!("sum n_k = {total}, T = {t} (trial {trial})"));
        let a: f64 = alpha_unnormalized(&g, &frames).unwrap().iter().sum();
        c.check((a - 1.0).abs() <= 1e-9, || format!("alpha sum {a} (trial {trial})"));
    }

    // MAP limits: empty components keep the prior; r -> 0 gives the ML moments.
    for trial in 0..20 {
        let (m, d) = (rng.random_range(1..=16), rng.random_range(1..=10));
        let g = random_gmm(&mut rng, m, d);
        let empty = SuffStats {
            counts: Array1::zeros(m),
            mean: Array2::from_shape_fn((m, d), |_| rng.random_range(-9.0..9.0)),
            second: Array2::from_shape_fn((m, d), |_| rng.random_range(0.0..9.0)),
        };
        let a = map_adapt(&g, &empty, 20.0).unwrap();
        for k in 0..m {
            for j in 0..d {
                let dm = (a.means[[k, j]] - g.means()[[k, j]]).abs();
                let dv = (a.variances[[k, j]] - g.variances()[[k, j]]).abs();
                c.check(dm <= 1e-12 && dv <= 1e-12, || {
                    format!("n_k=0 moved component {k} by ({dm:.1e}, {dv:.1e}) (trial {trial})")
                });
            }
        }

        let frames = random_frames(&mut rng, 300, d, 2.0);
        let s = sufficient_stats(&g, &frames).unwrap();
        let a = map_adapt(&g, &s, 1e-12).unwrap();
        let floor = g.variance_floor();
        for k in 0..m {
            if s.counts[k] < 1e-3 {
                continue;
            }
            for j in 0..d {
                let mean = s.mean[[k, j]];
                let var = (s.second[[k, j]] - mean * mean).max(floor[j]);
                let dm = (a.means[[k, j]] - mean).abs();
                let dv = (a.variances[[k, j]] - var).abs();
                c.check(dm <= 1e-8 && dv <= 1e-8, || {
                    format!("r->0 differs from ML moments by ({dm:.1e}, {dv:.1e}) (trial {trial})")
                });
            }
        }
    }

    // Feature lengths over an (M, D) sweep.
    for m in [1, 2, 5, 16, 32] {
        for d in [1, 3, 20] {
            let g = random_gmm(&mut rng, m, d);
            let frames = random_frames(&mut rng, 40, d, 2.0);
            for (variant, expected) in [
                (FeatureVariant::Alpha, m),
                (FeatureVariant::BetaM, m * d),
                (FeatureVariant::BetaS, m * d),
                (FeatureVariant::BetaSigma, 2 * m * d),
                (FeatureVariant::BetaSSigma, 2 * m * d),
            ] {
                for second in [SecondBlock::StdDev, SecondBlock::Variance] {
                    let f = clip_feature(&g, &frames, variant, 20.0, second).unwrap();
                    c.check(f.values.len() == expected, || {
                        format!("{variant} M={m} D={d}: length {} != {expected}", f.values.len())
                    });
                }
            }
        }
    }

    // Gram symmetry and PSD.
    for n in [5, 20, 60] {
        let x = Array2::from_shape_fn((n, 8), |_| rng.sample::<f64, _>(StandardNormal));
        let h = histograms(&mut rng, n, 16);
        let gamma = 2f64.powi(rng.random_range(-6..=2));
        for (spec, data) in [
            (KernelSpec::linear(), &x),
            (KernelSpec::rbf(gamma), &x),
            (KernelSpec::exp_chi2(gamma), &h),
        ] {
            let k = gram_symmetric(&spec, data.view()).unwrap().values;
            let symmetric = (0..n).all(|i| (0..n).all(|j| k[[i, j]] == k[[j, i]]));
            c.check(symmetric, || format!("{:?} Gram not symmetric (n={n})", spec.kind));
            let lo = min_eigenvalue(&k);
            c.check(lo >= -1e-8 * n as f64, || format!("{:?} Gram min eigenvalue {lo:.3e} (n={n})", spec.kind));
        }
    }

    // EM log-likelihood is monotone.
    for trial in 0..6 {
        let d = 4;
        let truth = random_gmm(&mut rng, 5, d);
        let mut rows = Vec::new();
        for _ in 0..1500 {
            let k = rng.random_range(0..5);
            let row: Vec<f64> = (0..d)
                .map(|j| {
                    truth.means()[[k, j]]
                        + truth.variances()[[k, j]].sqrt() * rng.sample::<f64, _>(StandardNormal)
                })
                .collect();
            rows.push(row);
        }
        let frames = MfccMatrix::from_rows(&rows).unwrap();
        let cfg = GmmTrainConfig {
            n_components: 2 + trial,
            seed: trial as u64,
            ..GmmTrainConfig::default()
        };
        let (_, rep) = train_gmm_with_report(&frames, &cfg).unwrap();
        for w in rep.log_likelihoods.windows(2) {
            c.check(w[1] >= w[0] - 1e-8, || format!("EM log-likelihood fell {} -> {} (trial {trial})", w[0], w[1]));
        }
    }
    c
}

// ---------------------------------------------------------------- criterion 2

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for k in col..n {
                a[r][k] -= f * a[col][k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn dual_value(q: &[Vec<f64>], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * q[i][j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Maximize the C-SVC dual by visiting every face of the box: each
/// variable at 0, at C or free, solving the KKT system on the free set.
fn brute_force_dual(k: &Array2<f64>, y: &[f64], c: f64) -> f64 {
    let n = y.len();
    let q: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| y[i] * y[j] * k[[i, j]]).collect()).collect();
    let mut best = f64::NEG_INFINITY;
    for code in 0..3usize.pow(n as u32) {
        let mut state = vec![0u8; n];
        let mut rest = code;
        for s in state.iter_mut() {
            *s = (rest % 3) as u8;
            rest /= 3;
        }
        let mut alpha: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        if free.is_empty() {
            let balance: f64 = (0..n).map(|i| y[i] * alpha[i]).sum();
            if balance.abs() > 1e-12 {
                continue;
            }
        } else {
            let f = free.len();
            let mut a = vec![vec![0.0; f + 1]; f + 1];
            let mut b = vec![0.0; f + 1];
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    a[r][s] = q[i][j];
                }
                a[r][f] = y[i];
                a[f][r] = y[i];
                b[r] = 1.0 - (0..n).filter(|j| state[*j] != 2).map(|j| q[i][j] * alpha[j]).sum::<f64>();
            }
            b[f] = -(0..n).filter(|j| state[*j] != 2).map(|j| y[j] * alpha[j]).sum::<f64>();
            let Some(sol) = gauss_solve(a, b) else { continue };
            if sol[..f].iter().any(|&v| v < -1e-10 || v > c + 1e-10) {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                alpha[i] = sol[r].clamp(0.0, c);
            }
        }
        best = best.max(dual_value(&q, &alpha));
    }
    best
}

/// Tie-rule AP from scratch: each positive's rank is the number of clips
/// scoring at least as high, its hits the positives among them.
fn rank_enumeration_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let mut terms: Vec<(usize, f64)> = Vec::new();
    for i in 0..scores.len() {
        if !labels[i] {
            continue;
        }
        let rank = (0..scores.len()).filter(|&j| scores[j] >= scores[i]).count();
        let hits = (0..scores.len()).filter(|&j| labels[j] && scores[j] >= scores[i]).count();
        terms.push((rank, hits as f64 / rank as f64));
    }
    terms.sort_by_key(|t| t.0);
    let p = terms.len();
    terms.iter().map(|t| t.1).fold(0.0, |acc, v| acc + v) / p as f64
}

fn chi2_oracle(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let mut d = 0.0;
    for i in 0..a.len() {
        let s = a[i] + b[i];
        if s != 0.0 {
            d += (a[i] - b[i]) * (a[i] - b[i]) / s;
        }
    }
    (-gamma * d).exp()
}

/// Mel energies of one frame via an O(N^2) DFT and independently built
/// triangles.
fn direct_dft_energies(cfg: &MfccConfig, frame: &[f64]) -> Vec<f64> {
    let n_fft = cfg.fft_size;
    let win = frame.len();
    let x: Vec<f64> = (0..win)
        .map(|i| {
            let w = 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (win as f64 - 1.0)).cos();
            frame[i] * w
        })
        .collect();
    let power: Vec<f64> = (0..=n_fft / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * ((k * t) % n_fft) as f64 / n_fft as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            re * re + im * im
        })
        .collect();
    let lo = hz_to_mel(cfg.fmin);
    let hi = hz_to_mel(cfg.fmax);
    let nf = cfg.n_mel_filters;
    let edge = |i: usize| mel_to_hz(lo + (hi - lo) * i as f64 / (nf + 1) as f64);
    (0..nf)
        .map(|m| {
            let (l, ctr, r) = (edge(m), edge(m + 1), edge(m + 2));
            power
                .iter()
                .enumerate()
                .map(|(k, &p)| {
                    let f = k as f64 * f64::from(cfg.sample_rate) / n_fft as f64;
                    let w = if f > l && f <= ctr {
                        (f - l) / (ctr - l)
                    } else if f > ctr && f < r {
                        (r - f) / (r - ctr)
                    } else {
                        0.0
                    };
                    w * p
                })
                .sum()
        })
        .collect()
}

fn oracle_suite() -> Checks {
    let mut c = Checks::default();
    let mut rng = ChaCha8Rng::seed_from_u64(202);

    // SMO against the exhaustive face search.
    let mut worst = 0.0f64;
    for trial in 0..120 {
        let n = rng.random_range(2..=6);
        let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-2.0..2.0));
        let mut y: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        y[0] = 1.0;
        y[1] = -1.0;
        let cpen = [0.1, 1.0, 10.0, 100.0][trial % 4];
        let spec = KernelSpec::rbf(2f64.powi(rng.random_range(-3..=2)));
        let k = gram_symmetric(&spec, x.view()).unwrap().values;
        let model = train_csvc(&GramMatrix::new(k.clone()), &y, cpen, spec).unwrap();
        let mut alpha = vec![0.0; n];
        for (&i, &coef) in model.support_indices.iter().zip(&model.dual_coef) {
            alpha[i] = coef * y[i];
        }
        let q: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| y[i] * y[j] * k[[i, j]]).collect()).collect();
        let smo = dual_value(&q, &alpha);
        let oracle = brute_force_dual(&k, &y, cpen);
        let gap = (smo - oracle).abs();
        worst = worst.max(gap);
        c.check(gap <= 1e-4, || format!("SMO dual {smo} vs oracle {oracle} (n={n}, C={cpen})"));
    }
    c.note(format!("SMO dual gap <= {worst:.1e}"));

    // AP under the tie rule on 200 random scored sets.
    let mut sets = 0;
    while sets < 200 {
        let n = rng.random_range(1..=30);
        let levels = rng.random_range(1..=8);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.25).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        if !labels.contains(&true) {
            continue;
        }
        sets += 1;
        let ap = average_precision_raw(&scores, &labels).unwrap();
        let oracle = rank_enumeration_ap(&scores, &labels);
        c.check(ap == oracle, || format!("AP {ap} vs oracle {oracle} on {scores:?} {labels:?}"));
    }

    // DET-AUC of perfect and inverted rankings.
    for p in 1..=12 {
        for n in 1..=12 {
            let labels: Vec<bool> = (0..p + n).map(|i| i < p).collect();
            let down: Vec<f64> = (0..p + n).map(|i| -(i as f64)).collect();
            let up: Vec<f64> = (0..p + n).map(|i| i as f64).collect();
            let perfect = det_auc(&det_curve_raw(&down, &labels).unwrap()).unwrap();
            let inverted = det_auc(&det_curve_raw(&up, &labels).unwrap()).unwrap();
            c.check(perfect == 0.0 && inverted == 1.0, || {
                format!("DET-AUC perfect {perfect}, inverted {inverted} (P={p}, N={n})")
            });
        }
    }

    // Exponential chi-square against a scalar loop.
    for _ in 0..500 {
        let d = rng.random_range(1..=64);
        let h = histograms(&mut rng, 2, d);
        let gamma = 2f64.powi(rng.random_range(-15..=3));
        let spec = KernelSpec::exp_chi2(gamma);
        let (a, b) = (h.row(0).to_vec(), h.row(1).to_vec());
        let got = kernel_eval(&spec, &a, &b).unwrap();
        let want = chi2_oracle(gamma, &a, &b);
        c.check((got - want).abs() <= 1e-12, || format!("chi2 kernel {got} vs {want}"));
    }

    // Mel filterbank energies against a direct DFT.
    let cfg = MfccConfig::default();
    let ex = MfccExtractor::new(cfg.clone()).unwrap();
    let win = cfg.win_len();
    let mut worst = 0.0f64;
    for trial in 0..4 {
        let frame: Vec<f64> = match trial {
            0 => (0..win).map(|_| rng.random_range(-1.0..1.0)).collect(),
            1 => render_clip(&SynthKind::Tone { freq_hz: 1_000.0 }, &SynthLevels::default(), 0.1, 3, 0).samples[..win].to_vec(),
            2 => render_clip(&SynthKind::Chirp { start_hz: 300.0, end_hz: 3_000.0 }, &SynthLevels::default(), 0.1, 3, 1).samples[..win].to_vec(),
            _ => render_clip(&SynthKind::NoiseBand { low_hz: 4_000.0, high_hz: 8_000.0 }, &SynthLevels::default(), 0.1, 3, 2).samples[..win].to_vec(),
        };
        let got = ex.filterbank_energies(&frame);
        let want = direct_dft_energies(&cfg, &frame);
        for (m, (g, w)) in got.iter().zip(&want).enumerate() {
            let rel = (g - w).abs() / w.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
            c.check(rel <= 1e-6, || format!("filter {m}: {g} vs {w} (frame {trial})"));
        }
    }
    c.note(format!("filterbank rel err <= {worst:.1e}"));
    c
}

// ---------------------------------------------------------- criteria 3 and 5

fn benchmark_config(variant: FeatureVariant, kernel: KernelKind) -> ExperimentConfig {
    ExperimentConfig {
        variant,
        kernel,
        n_components: 32,
        seed: 2024,
        ..ExperimentConfig::default()
    }
}

fn synthetic_benchmark(manifest: &Manifest) -> (Checks, Vec<ResultsBundle>) {
    let mut c = Checks::default();
    let mut bundles = Vec::new();
    for (variant, kernel) in [
        (FeatureVariant::Alpha, KernelKind::ExpChi2),
        (FeatureVariant::BetaS, KernelKind::Linear),
    ] {
        let cfg = benchmark_config(variant, kernel);
        let label = cfg.label();
        match (run_experiment(manifest, &cfg), run_experiment(manifest, &cfg)) {
            (Ok(a), Ok(b)) => {
                c.check(a.map >= 0.95, || format!("{label}: MAP {:.4} < 0.95", a.map));
                c.check(a.mauc <= 0.05, || format!("{label}: MAUC {:.4} > 0.05", a.mauc));
                c.check(a.to_json() == b.to_json(), || format!("{label}: rerun differs"));
                c.note(format!("{label} MAP {:.4} MAUC {:.4}", a.map, a.mauc));
                bundles.push(a);
            }
            (Err(e), _) | (_, Err(e)) => c.check(false, || format!("{label}: {e}")),
        }
    }
    (c, bundles)
}

fn fusion_check(bundles: &[ResultsBundle]) -> Checks {
    let mut c = Checks::default();
    if bundles.len() != 2 {
        c.check(false, || "benchmark systems unavailable".into());
        return c;
    }
    match fuse_bundles(bundles) {
        Ok(f) => {
            let best = bundles[0].map.max(bundles[1].map);
            c.check(f.map >= best - 0.01, || format!("fused MAP {:.4} < {:.4} - 0.01", f.map, best));
            c.note(format!("fused MAP {:.4}, best single {:.4}", f.map, best));
        }
        Err(e) => c.check(false, || e.to_string()),
    }
    c
}

// ---------------------------------------------------------------- criterion 4

/// Reference MAP values for the full datasets.
const US8K_ALPHA256_CK: f64 = 0.624;
const US8K_BETAS32_LK: f64 = 0.536;
const ESC50_ALPHA256_CK: f64 = 0.622;

fn components() -> Vec<usize> {
    std::env::var("AED_FULL_COMPONENTS")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect())
        .unwrap_or_else(|| vec![32, 64, 128, 256])
}

fn full_map(manifest: &Manifest, variant: FeatureVariant, kernel: KernelKind, m: usize) -> aed_core::Result<f64> {
    let cfg = ExperimentConfig {
        variant,
        kernel,
        n_components: m,
        ..ExperimentConfig::default()
    };
    let b = run_experiment(manifest, &cfg)?;
    println!("      {} MAP {:.4} MAUC {:.4}", cfg.label(), b.map, b.mauc);
    Ok(b.map)
}

/// Needs `AED_US8K_METADATA` (path to `UrbanSound8K.csv`) and/or
/// `AED_ESC50_METADATA` (path to `esc50.csv`) with `AED_ESC50_FOLDS`
/// (ten-fold mapping, `filename,fold`). `AED_FULL_COMPONENTS` narrows the
/// M values swept for the ordering checks.
fn full_scale() -> (Checks, bool) {
    let mut c = Checks::default();
    let us8k = std::env::var_os("AED_US8K_METADATA").map(PathBuf::from);
    let esc = std::env::var_os("AED_ESC50_METADATA").map(PathBuf::from);
    let esc_folds = std::env::var_os("AED_ESC50_FOLDS").map(PathBuf::from);
    if us8k.is_none() && esc.is_none() {
        c.note("datasets not supplied (set AED_US8K_METADATA, AED_ESC50_METADATA and AED_ESC50_FOLDS)");
        return (c, true);
    }
    let ms = components();
    let run = |c: &mut Checks, m: &Manifest, v, k, size| match full_map(m, v, k, size) {
        Ok(v) => Some(v),
        Err(e) => {
            c.check(false, || format!("{v}/{k}/M{size}: {e}"));
            None
        }
    };

    if let Some(path) = us8k {
        match load_manifest(&path, DatasetKind::UrbanSound8k, None) {
            Ok(m) => {
                c.check(m.len() == 8732 && m.events().len() == 10, || {
                    format!("UrbanSound8k has {} clips, {} events", m.len(), m.events().len())
                });
                if let Some(v) = run(&mut c, &m, FeatureVariant::Alpha, KernelKind::ExpChi2, 256) {
                    c.check((v - US8K_ALPHA256_CK).abs() <= 0.05, || format!("US8k alpha256+CK MAP {v:.3}"));
                }
                if let Some(v) = run(&mut c, &m, FeatureVariant::BetaS, KernelKind::Linear, 32) {
                    c.check((v - US8K_BETAS32_LK).abs() <= 0.05, || format!("US8k beta_s32+LK MAP {v:.3}"));
                }
            }
            Err(e) => c.check(false, || format!("UrbanSound8k manifest: {e}")),
        }
    }

    if let Some(path) = esc {
        match load_manifest(&path, DatasetKind::Esc50, esc_folds.as_deref()) {
            Ok(m) => {
                c.check(m.len() == 2000 && m.events().len() == 50, || {
                    format!("ESC-50 has {} clips, {} events", m.len(), m.events().len())
                });
                let mut maps: HashMap<(FeatureVariant, KernelKind, usize), f64> = HashMap::new();
                for &size in &ms {
                    for (v, k) in [
                        (FeatureVariant::Alpha, KernelKind::Linear),
                        (FeatureVariant::Alpha, KernelKind::Rbf),
                        (FeatureVariant::Alpha, KernelKind::ExpChi2),
                        (FeatureVariant::BetaM, KernelKind::Linear),
                        (FeatureVariant::BetaM, KernelKind::Rbf),
                        (FeatureVariant::BetaS, KernelKind::Linear),
                        (FeatureVariant::BetaS, KernelKind::Rbf),
                    ] {
                        if let Some(val) = run(&mut c, &m, v, k, size) {
                            maps.insert((v, k, size), val);
                        }
                    }
                }
                if !ms.contains(&256) {
                    if let Some(v) = run(&mut c, &m, FeatureVariant::Alpha, KernelKind::ExpChi2, 256) {
                        maps.insert((FeatureVariant::Alpha, KernelKind::ExpChi2, 256), v);
                    }
                }
                if let Some(&v) = maps.get(&(FeatureVariant::Alpha, KernelKind::ExpChi2, 256)) {
                    c.check((v - ESC50_ALPHA256_CK).abs() <= 0.05, || format!("ESC-50 alpha256+CK MAP {v:.3}"));
                }
                for &size in &ms {
                    let get = |v, k| maps.get(&(v, k, size)).copied();
                    if let (Some(ck), Some(rk), Some(lk)) = (
                        get(FeatureVariant::Alpha, KernelKind::ExpChi2),
                        get(FeatureVariant::Alpha, KernelKind::Rbf),
                        get(FeatureVariant::Alpha, KernelKind::Linear),
                    ) {
                        c.check(ck > rk && rk > lk, || format!("M={size}: alpha CK {ck:.3}, RK {rk:.3}, LK {lk:.3}"));
                    }
                    for k in [KernelKind::Linear, KernelKind::Rbf] {
                        if let (Some(s), Some(b)) = (get(FeatureVariant::BetaS, k), get(FeatureVariant::BetaM, k)) {
                            c.check(s >= b, || format!("M={size} {k}: beta_s {s:.3} < beta_m {b:.3}"));
                        }
                    }
                }
            }
            Err(e) => c.check(false, || format!("ESC-50 manifest: {e}")),
        }
    }
    (c, false)
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture` or a filter;
    // listing requests get an empty answer.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failed = 0;
    let mut tally = |v: Verdict| {
        if matches!(v, Verdict::Fail) {
            failed += 1;
        }
    };

    let t = Instant::now();
    let c = property_suite();
    tally(report(1, "property suite", t.elapsed(), Some(Duration::from_secs(120)), c, false));

    let t = Instant::now();
    let c = oracle_suite();
    tally(report(2, "oracle equivalence", t.elapsed(), Some(Duration::from_secs(300)), c, false));

    let t = Instant::now();
    let dir = tempfile::tempdir().expect("temp dir");
    let manifest = synth_dataset(&SynthSpec::three_class(20, 2.0, 7), dir.path());
    let (c, bundles) = match manifest {
        Ok(m) => {
            let mut checks;
            let bundles;
            (checks, bundles) = synthetic_benchmark(&m);
            checks.check(m.len() == 60, || format!("{} clips", m.len()));
            (checks, bundles)
        }
        Err(e) => {
            let mut checks = Checks::default();
            checks.check(false, || format!("synthetic corpus: {e}"));
            (checks, Vec::new())
        }
    };
    let bench_time = t.elapsed();
    tally(report(3, "synthetic benchmark", bench_time, Some(Duration::from_secs(900)), c, false));

    let t = Instant::now();
    let (c, skip) = full_scale();
    tally(report(4, "full-size dataset runs", t.elapsed(), None, c, skip));

    let t = Instant::now();
    let c = fusion_check(&bundles);
    tally(report(5, "decision-level fusion", t.elapsed(), None, c, false));

    if failed > 0 {
        std::process::exit(1);
    }
}
