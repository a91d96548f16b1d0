//! Audio ingestion: WAV decoding, channel mixdown and resampling to the
//! canonical 44.1 kHz rate, plus a synthetic corpus generator.

mod resample;
pub mod synth;

use std::path::Path;

use crate::error::{Error, Result};

pub use resample::Resampler;
pub use synth::{synth_dataset, SynthClass, SynthKind, SynthSpec};

/// Every clip is analysed at this rate.
pub const CANONICAL_RATE: u32 = 44_100;

/// Mono PCM samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Resample to [`CANONICAL_RATE`]. A waveform already at that rate is
    /// returned untouched.
    pub fn canonicalize(self) -> Self {
        if self.sample_rate == CANONICAL_RATE {
            return self;
        }
        let samples = Resampler::new(self.sample_rate, CANONICAL_RATE).process(&self.samples);
        Self {
            samples,
            sample_rate: CANONICAL_RATE,
        }
    }

    /// Zero-pad at the end to at least `len` samples.
    pub fn pad_to(&mut self, len: usize) {
        if self.samples.len() < len {
            self.samples.resize(len, 0.0);
        }
    }
}

/// Average interleaved channels into one.
pub fn mixdown(interleaved: &[f64], channels: usize) -> Vec<f64> {
    assert!(channels > 0, "channel count must be positive");
    if channels == 1 {
        return interleaved.to_vec();
    }
    let scale = 1.0 / channels as f64;
    interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() * scale)
        .collect()
}

/// Decode a PCM WAV file into a canonical mono waveform.
pub fn load_clip(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| decode_error(path, e))?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    if channels == 0 {
        return Err(Error::UnsupportedEncoding {
            path: path.into(),
            detail: "zero channels".into(),
        });
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let full_scale = f64::from(1u32 << (bits - 1));
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) / full_scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| decode_error(path, e))?
        }
        (hound::SampleFormat::Float, 32) => {
            let mut out = Vec::with_capacity(reader.len() as usize);
            for s in reader.into_samples::<f32>() {
                let v = f64::from(s.map_err(|e| decode_error(path, e))?);
                if !v.is_finite() {
                    return Err(Error::UnsupportedEncoding {
                        path: path.into(),
                        detail: "non-finite float sample".into(),
                    });
                }
                out.push(v.clamp(-1.0, 1.0));
            }
            out
        }
        (format, bits) => {
            return Err(Error::UnsupportedEncoding {
                path: path.into(),
                detail: format!("{format:?} with {bits} bits per sample"),
            })
        }
    };

    if interleaved.len() < channels {
        return Err(Error::EmptyAudio { path: path.into() });
    }

    let mono = mixdown(&interleaved, channels);
    Ok(Waveform::new(mono, spec.sample_rate).canonicalize())
}

/// Write a mono waveform as 16-bit PCM.
pub fn write_wav16(path: impl AsRef<Path>, wave: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let unwritable = |e: hound::Error| Error::Unwritable {
        path: path.into(),
        source: match e {
            hound::Error::IoError(io) => io,
            other => std::io::Error::other(other.to_string()),
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(unwritable)?;
    for &s in &wave.samples {
        writer
            .write_sample(quantize_i16(s))
            .map_err(unwritable)?;
    }
    writer.finalize().map_err(unwritable)
}

pub(crate) fn quantize_i16(s: f64) -> i16 {
    (s.clamp(-1.0, 1.0) * f64::from(i16::MAX)).round() as i16
}

fn decode_error(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(source) => Error::Unreadable {
            path: path.into(),
            source,
        },
        other => Error::UnsupportedEncoding {
            path: path.into(),
            detail: other.to_string(),
        },
    }
}
