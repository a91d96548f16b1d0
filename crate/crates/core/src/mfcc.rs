//! MFCC front-end: Hamming-windowed frames, power spectrum, triangular mel
//! filterbank, log compression and an orthonormal DCT-II.

use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::{Waveform, CANONICAL_RATE};
use crate::error::{Error, Result};
use crate::hashing;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub n_coeffs: usize,
    pub n_mel_filters: usize,
    pub fft_size: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub sample_rate: u32,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            window_ms: 30.0,
            hop_ms: 15.0,
            n_coeffs: 20,
            n_mel_filters: 40,
            fft_size: 2048,
            fmin: 0.0,
            fmax: 22_050.0,
            sample_rate: CANONICAL_RATE,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    /// Window length in samples, rounded half-up.
    pub fn win_len(&self) -> usize {
        ms_to_samples(self.window_ms, self.sample_rate)
    }

    /// Hop length in samples, rounded half-up (15 ms at 44.1 kHz is 662).
    pub fn hop_len(&self) -> usize {
        ms_to_samples(self.hop_ms, self.sample_rate)
    }

    /// `floor((n - win) / hop) + 1`, or `None` when `n < win`.
    pub fn frame_count(&self, n_samples: usize) -> Option<usize> {
        let win = self.win_len();
        (n_samples >= win).then(|| (n_samples - win) / self.hop_len() + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.hop_ms > 0.0 && self.window_ms > self.hop_ms) {
            return bad(format!(
                "need window_ms > hop_ms > 0, got {} and {}",
                self.window_ms, self.hop_ms
            ));
        }
        if self.n_coeffs == 0 || self.n_coeffs > self.n_mel_filters {
            return bad(format!(
                "need 1 <= n_coeffs <= n_mel_filters, got {} and {}",
                self.n_coeffs, self.n_mel_filters
            ));
        }
        if self.fft_size < self.win_len() {
            return bad(format!(
                "fft_size {} shorter than window of {} samples",
                self.fft_size,
                self.win_len()
            ));
        }
        let nyquist = f64::from(self.sample_rate) / 2.0;
        if !(self.fmin >= 0.0 && self.fmax > self.fmin && self.fmax <= nyquist) {
            return bad(format!(
                "need 0 <= fmin < fmax <= {nyquist}, got {} and {}",
                self.fmin, self.fmax
            ));
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive".into());
        }
        Ok(())
    }

    /// Hex digest identifying every field; keys the MFCC cache.
    pub fn digest(&self) -> String {
        hashing::digest_hex(
            serde_json::to_string(self)
                .expect("config serializes")
                .as_bytes(),
        )
    }
}

fn ms_to_samples(ms: f64, rate: u32) -> usize {
    (ms * f64::from(rate) / 1000.0 + 0.5).floor() as usize
}

/// T x D matrix of cepstral vectors, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccMatrix {
    data: Array2<f64>,
}

impl MfccMatrix {
    pub fn new(data: Array2<f64>) -> Self {
        Self { data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
            flat.extend_from_slice(r);
        }
        Ok(Self::new(
            Array2::from_shape_vec((rows.len(), d), flat).expect("shape checked"),
        ))
    }

    pub fn n_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, t: usize) -> ArrayView1<'_, f64> {
        self.data.row(t)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    /// Stack several matrices of equal width.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a MfccMatrix>) -> Result<Self> {
        let views: Vec<_> = parts.into_iter().map(|m| m.data.view()).collect();
        if views.is_empty() {
            return Err(Error::Empty("no frame matrices to pool"));
        }
        let d = views[0].ncols();
        if let Some(v) = views.iter().find(|v| v.ncols() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: v.ncols(),
            });
        }
        Ok(Self::new(
            ndarray::concatenate(ndarray::Axis(0), &views).expect("widths checked"),
        ))
    }

    /// Binary cache layout, little-endian: `b"AEDMFCC1"`, `u64` T, `u64` D,
    /// 64 ASCII hex bytes of the config digest, then T*D `f64` row-major.
    pub fn write_cache(&self, path: impl AsRef<Path>, config_digest: &str) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::with_capacity(88 + self.data.len() * 8);
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&(self.n_frames() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.dim() as u64).to_le_bytes());
        buf.extend_from_slice(&digest_field(config_digest));
        for v in self.data.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        crate::cache::write_atomic(path, &buf)
    }

    /// Returns `Ok(None)` when the file is absent or was written under a
    /// different configuration.
    pub fn read_cache(path: impl AsRef<Path>, config_digest: &str) -> Result<Option<Self>> {
        let path = path.as_ref();
        let mut file = match std::fs::File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let mut header = [0u8; 88];
        if file.read_exact(&mut header).is_err() || &header[..8] != CACHE_MAGIC {
            return Err(Error::format("MFCC cache", path, "bad header"));
        }
        if header[24..88] != digest_field(config_digest) {
            return Ok(None);
        }
        let t = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
        let d = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
        let mut body = Vec::new();
        file.read_to_end(&mut body)?;
        if body.len() != t * d * 8 {
            return Err(Error::format("MFCC cache", path, "truncated body"));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Some(Self::new(
            Array2::from_shape_vec((t, d), values).expect("length checked"),
        )))
    }
}

const CACHE_MAGIC: &[u8; 8] = b"AEDMFCC1";

fn digest_field(digest: &str) -> [u8; 64] {
    let mut out = [b'0'; 64];
    for (o, b) in out.iter_mut().zip(digest.bytes()) {
        *o = b;
    }
    out
}

/// Triangular filters on the HTK mel scale, evaluated at FFT bin centre
/// frequencies. Each filter is stored as its first nonzero bin and weights.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    filters: Vec<(usize, Vec<f64>)>,
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

impl MelFilterbank {
    pub fn new(cfg: &MfccConfig) -> Self {
        let n_bins = cfg.fft_size / 2 + 1;
        let bin_hz = f64::from(cfg.sample_rate) / cfg.fft_size as f64;
        let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
        let edges: Vec<f64> = (0..cfg.n_mel_filters + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mel_filters + 1) as f64))
            .collect();

        let filters = edges
            .windows(3)
            .map(|e| {
                let (left, centre, right) = (e[0], e[1], e[2]);
                let weights: Vec<(usize, f64)> = (0..n_bins)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > left && f <= centre {
                            (f - left) / (centre - left)
                        } else if f > centre && f < right {
                            (right - f) / (right - centre)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                match weights.first() {
                    Some(&(start, _)) => (start, weights.iter().map(|&(_, w)| w).collect()),
                    None => (0, Vec::new()),
                }
            })
            .collect();
        Self { filters }
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.filters
            .iter()
            .map(|(start, w)| w.iter().zip(&power[*start..]).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Reusable extractor holding the FFT plan, window, filterbank and DCT basis.
pub struct MfccExtractor {
    cfg: MfccConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    filterbank: MelFilterbank,
    /// n_coeffs x n_mel_filters, row-major
    dct: Vec<f64>,
}

impl std::fmt::Debug for MfccExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MfccExtractor").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl MfccExtractor {
    pub fn new(cfg: MfccConfig) -> Result<Self> {
        cfg.validate()?;
        let win = cfg.win_len();
        let window = (0..win)
            .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (win - 1) as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        let filterbank = MelFilterbank::new(&cfg);

        let m = cfg.n_mel_filters;
        let mut dct = Vec::with_capacity(cfg.n_coeffs * m);
        for n in 0..cfg.n_coeffs {
            let scale = if n == 0 {
                (1.0 / m as f64).sqrt()
            } else {
                (2.0 / m as f64).sqrt()
            };
            for j in 0..m {
                dct.push(scale * (PI * n as f64 * (j as f64 + 0.5) / m as f64).cos());
            }
        }

        Ok(Self {
            cfg,
            window,
            fft,
            filterbank,
            dct,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    /// Mel energies of one frame of exactly `win_len` raw samples.
    pub fn filterbank_energies(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.cfg.fft_size];
        self.energies_into(frame, &mut buf)
    }

    fn energies_into(&self, frame: &[f64], buf: &mut [Complex<f64>]) -> Vec<f64> {
        debug_assert_eq!(frame.len(), self.window.len());
        for (i, c) in buf.iter_mut().enumerate() {
            let re = if i < frame.len() {
                frame[i] * self.window[i]
            } else {
                0.0
            };
            *c = Complex::new(re, 0.0);
        }
        self.fft.process(buf);
        let power: Vec<f64> = buf[..self.cfg.fft_size / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr())
            .collect();
        self.filterbank.apply(&power)
    }

    fn cepstrum(&self, energies: &[f64], out: &mut [f64]) {
        let m = energies.len();
        let logs: Vec<f64> = energies
            .iter()
            .map(|&e| e.max(self.cfg.log_floor).ln())
            .collect();
        for (n, o) in out.iter_mut().enumerate() {
            let basis = &self.dct[n * m..(n + 1) * m];
            *o = basis.iter().zip(&logs).map(|(a, b)| a * b).sum();
        }
    }

    pub fn extract(&self, wave: &Waveform) -> Result<MfccMatrix> {
        if wave.sample_rate != self.cfg.sample_rate {
            return Err(Error::InvalidConfig(format!(
                "waveform at {} Hz, extractor expects {} Hz",
                wave.sample_rate, self.cfg.sample_rate
            )));
        }
        let win = self.cfg.win_len();
        let hop = self.cfg.hop_len();
        let frames = self.cfg.frame_count(wave.len()).ok_or(Error::ClipTooShort {
            samples: wave.len(),
            window: win,
        })?;

        let d = self.cfg.n_coeffs;
        let mut out = Array2::zeros((frames, d));
        let mut buf = vec![Complex::new(0.0, 0.0); self.cfg.fft_size];
        let mut coeffs = vec![0.0; d];
        for (t, mut row) in out.rows_mut().into_iter().enumerate() {
            let start = t * hop;
            let energies = self.energies_into(&wave.samples[start..start + win], &mut buf);
            self.cepstrum(&energies, &mut coeffs);
            row.iter_mut().zip(&coeffs).for_each(|(r, &c)| *r = c);
        }
        Ok(MfccMatrix::new(out))
    }
}

pub fn extract_mfcc(wave: &Waveform, cfg: &MfccConfig) -> Result<MfccMatrix> {
    MfccExtractor::new(cfg.clone())?.extract(wave)
}

/// Write a matrix as CSV with a `# T D digest` header line.
pub fn write_csv(path: impl AsRef<Path>, m: &MfccMatrix, config_digest: &str) -> Result<()> {
    let mut text = format!("# {} {} {}\n", m.n_frames(), m.dim(), config_digest);
    for row in m.data.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    crate::cache::write_atomic(path.as_ref(), text.as_bytes())
}
