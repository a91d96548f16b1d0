use std::f64::consts::PI;

/// Zero crossings on each side of the sinc kernel at unit ratio, giving 64 taps
/// per phase. Downsampling widens the kernel in proportion to the ratio.
const HALF_TAPS: usize = 32;
/// Passband edge as a fraction of the lower Nyquist frequency.
const CUTOFF: f64 = 0.95;
const KAISER_BETA: f64 = 8.0;

/// Rational-ratio polyphase resampler with a Kaiser-windowed sinc kernel.
///
/// Output sample `n` sits at input position `n * down / up`; its fractional
/// part selects one of `up` precomputed phases, each normalized to unit DC gain.
#[derive(Debug, Clone)]
pub struct Resampler {
    up: usize,
    down: usize,
    half: usize,
    /// `up` rows of `2 * half` taps; tap `k` multiplies input `floor(t) + k + 1 - half`.
    phases: Vec<f64>,
}

impl Resampler {
    pub fn new(in_rate: u32, out_rate: u32) -> Self {
        assert!(in_rate > 0 && out_rate > 0, "sample rates must be positive");
        let g = gcd(in_rate as usize, out_rate as usize);
        let up = out_rate as usize / g;
        let down = in_rate as usize / g;

        let ratio = up as f64 / down as f64;
        // cycles per input sample
        let fc = 0.5 * CUTOFF * ratio.min(1.0);
        let half = if down > up {
            (HALF_TAPS as f64 * down as f64 / up as f64).ceil() as usize
        } else {
            HALF_TAPS
        };
        let width = 2 * half;

        let i0_beta = bessel_i0(KAISER_BETA);
        let mut phases = vec![0.0; up * width];
        for p in 0..up {
            let frac = p as f64 / up as f64;
            let row = &mut phases[p * width..(p + 1) * width];
            for (k, tap) in row.iter_mut().enumerate() {
                // distance from output instant to input sample, in input samples
                let tau = frac + half as f64 - 1.0 - k as f64;
                let x = tau / half as f64;
                let window = if x.abs() >= 1.0 {
                    0.0
                } else {
                    bessel_i0(KAISER_BETA * (1.0 - x * x).sqrt()) / i0_beta
                };
                *tap = 2.0 * fc * sinc(2.0 * fc * tau) * window;
            }
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|t| *t /= sum);
        }

        Self {
            up,
            down,
            half,
            phases,
        }
    }

    pub fn taps_per_phase(&self) -> usize {
        2 * self.half
    }

    pub fn is_passthrough(&self) -> bool {
        self.up == 1 && self.down == 1
    }

    /// Number of output samples for `input_len` inputs: the rounded
    /// duration-preserving length.
    pub fn output_len(&self, input_len: usize) -> usize {
        (input_len * self.up + self.down / 2) / self.down
    }

    pub fn process(&self, input: &[f64]) -> Vec<f64> {
        if self.is_passthrough() {
            return input.to_vec();
        }
        let width = 2 * self.half;
        let n_out = self.output_len(input.len());
        let len = input.len() as isize;
        let mut out = Vec::with_capacity(n_out);
        for n in 0..n_out {
            let pos = n * self.down;
            let base = (pos / self.up) as isize;
            let phase = pos % self.up;
            let taps = &self.phases[phase * width..(phase + 1) * width];
            let start = base + 1 - self.half as isize;
            let mut acc = 0.0;
            for (k, &tap) in taps.iter().enumerate() {
                let idx = start + k as isize;
                if idx >= 0 && idx < len {
                    acc += tap * input[idx as usize];
                }
            }
            out.push(acc);
        }
        out
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half_sq = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-16 * sum {
        term *= half_sq / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn spectrum_peak_hz(samples: &[f64], rate: f64) -> f64 {
        let n = samples.len();
        let mut buf: Vec<Complex<f64>> = samples.iter().map(|&s| Complex::new(s, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let (bin, _) = buf[..n / 2]
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.norm()))
            .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        bin as f64 * rate / n as f64
    }

    #[test]
    fn at_least_64_taps_per_phase() {
        for (i, o) in [(22_050, 44_100), (48_000, 44_100), (96_000, 44_100), (8_000, 44_100)] {
            assert!(Resampler::new(i, o).taps_per_phase() >= 64);
        }
    }

    #[test]
    fn upsampled_sine_keeps_its_frequency() {
        let input: Vec<f64> = (0..22_050)
            .map(|i| (2.0 * PI * 440.0 * i as f64 / 22_050.0).sin())
            .collect();
        let out = Resampler::new(22_050, 44_100).process(&input);
        assert_eq!(out.len(), 44_100);
        let peak = spectrum_peak_hz(&out, 44_100.0);
        assert!((peak - 440.0).abs() <= 1.0, "peak at {peak} Hz");
    }

    #[test]
    fn downsampled_sine_keeps_its_frequency() {
        let input: Vec<f64> = (0..48_000)
            .map(|i| (2.0 * PI * 1_000.0 * i as f64 / 48_000.0).sin())
            .collect();
        let out = Resampler::new(48_000, 44_100).process(&input);
        assert_eq!(out.len(), 44_100);
        let peak = spectrum_peak_hz(&out, 44_100.0);
        assert!((peak - 1_000.0).abs() <= 1.0, "peak at {peak} Hz");
    }

    #[test]
    fn passband_amplitude_is_preserved() {
        let input: Vec<f64> = (0..22_050)
            .map(|i| (2.0 * PI * 1_000.0 * i as f64 / 22_050.0).sin())
            .collect();
        let out = Resampler::new(22_050, 44_100).process(&input);
        let interior = &out[4_000..40_000];
        let max = interior.iter().cloned().fold(f64::MIN, f64::max);
        assert!((max - 1.0).abs() < 1e-3, "max {max}");
    }

    #[test]
    fn dc_is_passed_exactly_in_the_interior() {
        let out = Resampler::new(16_000, 44_100).process(&vec![0.5; 8_000]);
        for &s in &out[200..out.len() - 200] {
            assert!((s - 0.5).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn duration_is_preserved(len in 0usize..5_000, rate in prop::sample::select(vec![8_000u32, 11_025, 16_000, 22_050, 32_000, 44_100, 48_000, 96_000])) {
            let r = Resampler::new(rate, 44_100);
            let out_len = r.output_len(len);
            let err = (out_len as f64 / 44_100.0 - len as f64 / f64::from(rate)).abs();
            prop_assert!(err <= 1.0 / 44_100.0);
        }

        #[test]
        fn mixdown_is_linear(a in prop::collection::vec(-1.0f64..1.0, 12), b in prop::collection::vec(-1.0f64..1.0, 12)) {
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let lhs = crate::audio::mixdown(&sum, 3);
            let ma = crate::audio::mixdown(&a, 3);
            let mb = crate::audio::mixdown(&b, 3);
            for i in 0..lhs.len() {
                prop_assert!((lhs[i] - (ma[i] + mb[i])).abs() < 1e-12);
            }
        }
    }
}
