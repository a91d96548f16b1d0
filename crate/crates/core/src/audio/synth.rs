//! Deterministic synthetic corpora: labeled tone, noise-band and chirp clips
//! written as 16-bit WAV with a generic manifest.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{Waveform, CANONICAL_RATE};
use crate::error::{Error, Result};
use crate::pipeline::manifest::{Manifest, ManifestRow, FOLD_COUNT};

/// Signal levels shared by every class of a corpus.
///
/// The defaults bury each event about 10 dB under a common white bed. Frames
/// from different classes then overlap, so mixture components are shared
/// between classes and adapted means move with the class. Clean, loud events
/// give class-pure components whose adapted means never leave the prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthLevels {
    /// Event peak amplitude is drawn uniformly from `[amplitude_min, amplitude_max)`.
    pub amplitude_min: f64,
    pub amplitude_max: f64,
    /// Standard deviation of the white background bed under every clip.
    pub background_rms: f64,
}

impl Default for SynthLevels {
    fn default() -> Self {
        Self {
            amplitude_min: 0.02,
            amplitude_max: 0.04,
            background_rms: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthKind {
    Tone { freq_hz: f64 },
    NoiseBand { low_hz: f64, high_hz: f64 },
    Chirp { start_hz: f64, end_hz: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthClass {
    pub name: String,
    #[serde(flatten)]
    pub kind: SynthKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: Vec<SynthClass>,
    pub clips_per_class: usize,
    pub clip_seconds: f64,
    pub seed: u64,
    #[serde(default)]
    pub levels: SynthLevels,
}

impl SynthSpec {
    /// Three well-separated classes: a 1 kHz tone, 4-8 kHz band noise and a
    /// 300 Hz to 3 kHz chirp.
    pub fn three_class(clips_per_class: usize, clip_seconds: f64, seed: u64) -> Self {
        Self {
            classes: vec![
                SynthClass {
                    name: "tone".into(),
                    kind: SynthKind::Tone { freq_hz: 1_000.0 },
                },
                SynthClass {
                    name: "noise_band".into(),
                    kind: SynthKind::NoiseBand {
                        low_hz: 4_000.0,
                        high_hz: 8_000.0,
                    },
                },
                SynthClass {
                    name: "chirp".into(),
                    kind: SynthKind::Chirp {
                        start_hz: 300.0,
                        end_hz: 3_000.0,
                    },
                },
            ],
            clips_per_class,
            clip_seconds,
            seed,
            levels: SynthLevels::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::InvalidConfig("no synthetic classes defined".into()));
        }
        if self.clips_per_class == 0 {
            return Err(Error::InvalidConfig("clips_per_class must be at least 1".into()));
        }
        if !(self.clip_seconds > 0.0) {
            return Err(Error::InvalidConfig("clip_seconds must be positive".into()));
        }
        let l = &self.levels;
        if !(l.amplitude_min > 0.0 && l.amplitude_max > l.amplitude_min && l.background_rms >= 0.0) {
            return Err(Error::InvalidConfig(
                "levels need 0 < amplitude_min < amplitude_max and background_rms >= 0".into(),
            ));
        }
        let nyquist = f64::from(CANONICAL_RATE) / 2.0;
        for c in &self.classes {
            let ok = match c.kind {
                SynthKind::Tone { freq_hz } => freq_hz > 0.0 && freq_hz < nyquist,
                SynthKind::NoiseBand { low_hz, high_hz } => {
                    low_hz >= 0.0 && high_hz > low_hz && high_hz <= nyquist
                }
                SynthKind::Chirp { start_hz, end_hz } => {
                    start_hz > 0.0 && end_hz > 0.0 && start_hz < nyquist && end_hz < nyquist
                }
            };
            if !ok {
                return Err(Error::InvalidConfig(format!(
                    "class '{}' has frequencies outside (0, {nyquist}) Hz",
                    c.name
                )));
            }
        }
        Ok(())
    }
}

/// Render one clip. `stream` selects an independent RNG stream so that each
/// clip depends only on the seed and its own index.
pub fn render_clip(kind: &SynthKind, levels: &SynthLevels, clip_seconds: f64, seed: u64, stream: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let rate = f64::from(CANONICAL_RATE);
    let n = (clip_seconds * rate).round() as usize;
    let amplitude = rng.random_range(levels.amplitude_min..levels.amplitude_max);
    let phase = rng.random_range(0.0..2.0 * PI);

    let mut samples: Vec<f64> = match *kind {
        SynthKind::Tone { freq_hz } => (0..n)
            .map(|i| amplitude * (2.0 * PI * freq_hz * i as f64 / rate + phase).sin())
            .collect(),
        SynthKind::Chirp { start_hz, end_hz } => {
            let sweep = (end_hz - start_hz) / clip_seconds;
            (0..n)
                .map(|i| {
                    let t = i as f64 / rate;
                    amplitude * (2.0 * PI * (start_hz * t + 0.5 * sweep * t * t) + phase).sin()
                })
                .collect()
        }
        SynthKind::NoiseBand { low_hz, high_hz } => band_noise(&mut rng, n, low_hz, high_hz, amplitude),
    };

    for s in &mut samples {
        let z: f64 = rng.sample(StandardNormal);
        *s += levels.background_rms * z;
    }
    Waveform::new(samples, CANONICAL_RATE)
}

fn band_noise(rng: &mut ChaCha8Rng, n: usize, low_hz: f64, high_hz: f64, amplitude: f64) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|_| Complex::new(rng.sample(StandardNormal), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let bin_hz = f64::from(CANONICAL_RATE) / n as f64;
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * bin_hz;
        if f < low_hz || f > high_hz {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let rms = (buf.iter().map(|c| c.re * c.re).sum::<f64>() / n as f64).sqrt();
    let gain = if rms > 0.0 {
        amplitude / (2f64.sqrt() * rms)
    } else {
        0.0
    };
    buf.iter().map(|c| c.re * gain).collect()
}

/// Write `clips_per_class` clips per class under `out_dir/audio/` and a
/// generic manifest at `out_dir/manifest.csv`. Clips are assigned to folds
/// round-robin in generation order (class-major).
pub fn synth_dataset(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    let audio_dir = out_dir.join("audio");
    std::fs::create_dir_all(&audio_dir).map_err(|source| Error::Unwritable {
        path: audio_dir.clone(),
        source,
    })?;

    let mut rows = Vec::with_capacity(spec.classes.len() * spec.clips_per_class);
    for class in &spec.classes {
        for i in 0..spec.clips_per_class {
            let index = rows.len();
            let clip_id = format!("{}_{:04}", class.name, i);
            let rel = Path::new("audio").join(format!("{clip_id}.wav"));
            let wave = render_clip(&class.kind, &spec.levels, spec.clip_seconds, spec.seed, index as u64);
            super::write_wav16(out_dir.join(&rel), &wave)?;
            rows.push(ManifestRow {
                clip_id,
                path: out_dir.join(rel),
                label: class.name.clone(),
                fold: (index % FOLD_COUNT) as u8 + 1,
                category: None,
            });
        }
    }

    let manifest = Manifest::new(rows)?;
    manifest.write_generic(out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
