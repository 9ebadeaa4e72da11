//! Spectral features of 3-axis acceleration traces.
//!
//! A trace is reduced to one magnitude spectrum that keeps the per-frequency
//! energy of all three axes (DFT321), and the spectrum is summarised by a bank
//! of 32 Gaussian-weighted bands whose widths grow geometrically with
//! frequency (a constant-Q filter bank).

use crate::data::SignalId;
use crate::error::{Error, Result};
use crate::par::Execution;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

/// Number of filter-bank bands.
pub const BAND_COUNT: usize = 32;
/// Ratio between consecutive band widths.
pub const BAND_GROWTH: f64 = 1.8;
/// Standard deviation of each band's Gaussian window, in spectrum bins.
pub const BAND_SIGMA: f64 = 20.0;
/// Windows are truncated at this many standard deviations.
pub const WINDOW_TRUNCATION: f64 = 3.0;
/// Shortest accepted trace.
pub const MIN_SAMPLES: usize = 2 * BAND_COUNT;

/// One 3-axis acceleration trace.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalRecord {
    pub id: SignalId,
    pub sample_rate: f64,
    axes: [Vec<f64>; 3],
}

impl SignalRecord {
    pub fn new(id: SignalId, sample_rate: f64, axes: [Vec<f64>; 3]) -> Result<Self> {
        let n = axes[0].len();
        if axes.iter().any(|a| a.len() != n) {
            return Err(Error::Input(format!(
                "signal {id}: axes have different lengths ({}, {}, {})",
                axes[0].len(),
                axes[1].len(),
                axes[2].len()
            )));
        }
        if n < MIN_SAMPLES {
            return Err(Error::Input(format!(
                "signal {id}: {n} samples, at least {MIN_SAMPLES} required"
            )));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::Input(format!(
                "signal {id}: invalid sample rate {sample_rate}"
            )));
        }
        if axes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Input(format!("signal {id}: non-finite sample")));
        }
        Ok(Self {
            id,
            sample_rate,
            axes,
        })
    }

    pub fn axes(&self) -> &[Vec<f64>; 3] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.axes[0].is_empty()
    }

    /// Linear-interpolation resampling to `target_rate`, keeping the duration.
    pub fn resampled(&self, target_rate: f64) -> Result<Self> {
        if (target_rate - self.sample_rate).abs() <= f64::EPSILON * self.sample_rate {
            return Ok(self.clone());
        }
        let n = self.len();
        let duration = (n - 1) as f64 / self.sample_rate;
        let m = (duration * target_rate).floor() as usize + 1;
        let axes = self.axes.clone().map(|axis| {
            (0..m)
                .map(|i| {
                    let pos = i as f64 * self.sample_rate / target_rate;
                    let lo = (pos.floor() as usize).min(n - 1);
                    let hi = (lo + 1).min(n - 1);
                    let frac = pos - lo as f64;
                    axis[lo] + (axis[hi] - axis[lo]) * frac
                })
                .collect()
        });
        Self::new(self.id, target_rate, axes)
    }
}

/// Filter-bank output for one signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub id: SignalId,
    pub values: Vec<f64>,
}

/// Combined magnitude spectrum of the three axes.
///
/// Each axis is zero-padded to the next power of two and transformed; bin `f`
/// of the result is `sqrt(|X(f)|² + |Y(f)|² + |Z(f)|²)`, for `f` in `0..=n/2`.
pub fn dft321(signal: &SignalRecord) -> Result<Vec<f64>> {
    let n = signal.len();
    if n < 2 {
        return Err(Error::Input(format!(
            "signal {}: DFT needs at least 2 samples",
            signal.id
        )));
    }
    if signal.axes.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Input(format!("signal {}: non-finite sample", signal.id)));
    }
    let fft_len = n.next_power_of_two();
    let bins = fft_len / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_len);
    let mut power = vec![[0.0f64; 3]; bins];
    for (a, axis) in signal.axes.iter().enumerate() {
        let mut buf: Vec<Complex<f64>> = axis.iter().map(|&v| Complex::new(v, 0.0)).collect();
        buf.resize(fft_len, Complex::new(0.0, 0.0));
        fft.process(&mut buf);
        for (slot, c) in power.iter_mut().zip(&buf) {
            slot[a] = c.norm_sqr();
        }
    }
    // Summing in sorted order makes the result independent of axis order.
    Ok(power
        .into_iter()
        .map(|mut p| {
            p.sort_by(f64::total_cmp);
            (p[0] + p[1] + p[2]).sqrt()
        })
        .collect())
}

/// One band of the filter bank.
#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub lower: f64,
    pub upper: f64,
    pub center: f64,
    /// `(bin, weight)` pairs inside the truncated window.
    pub weights: Vec<(usize, f64)>,
}

/// Constant-Q filter bank tiling `[0, spectrum_len)`.
///
/// Band widths are `w, 1.8w, 1.8²w, …` with `w` chosen so the 32 bands exactly
/// cover the spectrum; each band weights the spectrum with a Gaussian
/// (σ = 20 bins, truncated at ±3σ) centred on the band.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    spectrum_len: usize,
    bands: Vec<Band>,
}

impl FilterBank {
    pub fn new(spectrum_len: usize) -> Result<Self> {
        if spectrum_len < 2 {
            return Err(Error::Input(format!(
                "filter bank needs a spectrum of at least 2 bins, got {spectrum_len}"
            )));
        }
        let span = spectrum_len as f64;
        let base = span * (BAND_GROWTH - 1.0) / (BAND_GROWTH.powi(BAND_COUNT as i32) - 1.0);
        let edge = |b: usize| {
            if b == BAND_COUNT {
                span
            } else {
                base * (BAND_GROWTH.powi(b as i32) - 1.0) / (BAND_GROWTH - 1.0)
            }
        };
        let reach = WINDOW_TRUNCATION * BAND_SIGMA;
        let bands = (0..BAND_COUNT)
            .map(|b| {
                let (lower, upper) = (edge(b), edge(b + 1));
                let center = 0.5 * (lower + upper);
                let first = (center - reach).ceil().max(0.0) as usize;
                let last = ((center + reach).floor() as usize).min(spectrum_len - 1);
                let weights = (first..=last)
                    .map(|f| {
                        let d = f as f64 - center;
                        (f, (-d * d / (2.0 * BAND_SIGMA * BAND_SIGMA)).exp())
                    })
                    .collect();
                Band {
                    lower,
                    upper,
                    center,
                    weights,
                }
            })
            .collect();
        Ok(Self {
            spectrum_len,
            bands,
        })
    }

    pub fn spectrum_len(&self) -> usize {
        self.spectrum_len
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    /// Gaussian-weighted band sums, ordered by increasing frequency.
    pub fn apply(&self, spectrum: &[f64]) -> Result<Vec<f64>> {
        if spectrum.len() < self.spectrum_len {
            return Err(Error::Input(format!(
                "spectrum has {} bins, filter bank spans {}",
                spectrum.len(),
                self.spectrum_len
            )));
        }
        Ok(self
            .bands
            .iter()
            .map(|band| band.weights.iter().map(|&(f, w)| w * spectrum[f]).sum())
            .collect())
    }
}

/// Filter-bank features of a spectrum, with a bank sized to it.
pub fn cqfb(spectrum: &[f64]) -> Result<Vec<f64>> {
    FilterBank::new(spectrum.len())?.apply(spectrum)
}

/// DFT321 followed by the filter bank.
pub fn extract(signal: &SignalRecord) -> Result<FeatureVector> {
    let values = cqfb(&dft321(signal)?)?;
    Ok(FeatureVector {
        id: signal.id,
        values,
    })
}

/// Most frequent sample rate (smallest on ties).
pub fn modal_rate(rates: &[f64]) -> Option<f64> {
    let mut sorted: Vec<f64> = rates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, usize)> = None;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|r| **r == sorted[i]).count() + i;
        if best.is_none_or(|(_, c)| j - i > c) {
            best = Some((sorted[i], j - i));
        }
        i = j;
    }
    best.map(|(r, _)| r)
}

/// Features for a whole corpus: signals are resampled to the modal sample
/// rate, then transformed independently.
pub fn extract_dataset(signals: &[SignalRecord], exec: Execution) -> Result<Vec<FeatureVector>> {
    let rates: Vec<f64> = signals.iter().map(|s| s.sample_rate).collect();
    let Some(rate) = modal_rate(&rates) else {
        return Ok(Vec::new());
    };
    exec.try_map(signals, |s| extract(&s.resampled(rate)?))
}

/// Per-dimension mean and standard deviation from training features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn fit(features: &[Vec<f64>]) -> Result<Self> {
        let first = features
            .first()
            .ok_or_else(|| Error::Input("cannot fit normalisation on zero vectors".into()))?;
        let dim = first.len();
        if features.iter().any(|f| f.len() != dim) {
            return Err(Error::Input("feature vectors differ in length".into()));
        }
        let n = features.len() as f64;
        let mut mean = vec![0.0; dim];
        for f in features {
            for (m, v) in mean.iter_mut().zip(f) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for f in features {
            for ((s, v), m) in var.iter_mut().zip(f).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .enumerate()
            .map(|(d, s)| {
                let v = s / n;
                if v > 0.0 {
                    v.sqrt()
                } else {
                    log::warn!("feature dimension {d} has zero variance; leaving it unscaled");
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::Input(format!(
                "feature vector has {} values, statistics cover {}",
                x.len(),
                self.mean.len()
            )));
        }
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }
}

/// Z-scores `features`, fitting statistics unless training statistics are supplied.
pub fn normalize_features(
    features: &[Vec<f64>],
    stats: Option<&FeatureStats>,
) -> Result<(Vec<Vec<f64>>, FeatureStats)> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => FeatureStats::fit(features)?,
    };
    let out = features.iter().map(|f| stats.apply(f)).collect::<Result<_>>()?;
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn id() -> SignalId {
        SignalId::new(3, 1)
    }

    fn sine(n: usize, freq: f64) -> Vec<f64> {
        (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * freq * t as f64 / n as f64).sin())
            .collect()
    }

    /// Naive O(n²) DFT magnitude of one zero-padded axis.
    fn naive_magnitude(x: &[f64], fft_len: usize) -> Vec<f64> {
        (0..=fft_len / 2)
            .map(|f| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, v) in x.iter().enumerate() {
                    let a = -2.0 * std::f64::consts::PI * (f * t) as f64 / fft_len as f64;
                    re += v * a.cos();
                    im += v * a.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    #[test]
    fn zero_signal_zero_spectrum() {
        let s = SignalRecord::new(id(), 100.0, [vec![0.0; 100], vec![0.0; 100], vec![0.0; 100]]).unwrap();
        let spec = dft321(&s).unwrap();
        assert_eq!(spec.len(), 65);
        assert!(spec.iter().all(|v| *v == 0.0));
        assert!(extract(&s).unwrap().values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_axis_reduces_to_its_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..96).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = SignalRecord::new(id(), 1.0, [vec![0.0; 96], x.clone(), vec![0.0; 96]]).unwrap();
        let spec = dft321(&s).unwrap();
        let naive = naive_magnitude(&x, 128);
        for (a, b) in spec.iter().zip(&naive) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn identical_axes_scale_by_sqrt3() {
        let x = sine(128, 8.0);
        let one = SignalRecord::new(id(), 1.0, [x.clone(), vec![0.0; 128], vec![0.0; 128]]).unwrap();
        let three = SignalRecord::new(id(), 1.0, [x.clone(), x.clone(), x]).unwrap();
        let p1 = dft321(&one).unwrap();
        let p3 = dft321(&three).unwrap();
        let peak1 = p1.iter().cloned().fold(0.0, f64::max);
        let peak3 = p3.iter().cloned().fold(0.0, f64::max);
        assert!((peak3 - 3f64.sqrt() * peak1).abs() < 1e-9 * peak3);
        assert_eq!(p1.iter().position(|v| *v == peak1), Some(8));
    }

    #[test]
    fn non_finite_samples_rejected() {
        let mut x = vec![0.0; 64];
        x[5] = f64::NAN;
        let err = SignalRecord::new(id(), 1.0, [x, vec![0.0; 64], vec![0.0; 64]]).unwrap_err();
        assert!(err.to_string().contains("3:1"), "{err}");
        assert!(SignalRecord::new(id(), 1.0, [vec![0.0; 10], vec![0.0; 10], vec![0.0; 10]]).is_err());
    }

    #[test]
    fn band_edges_grow_geometrically_and_tile_the_spectrum() {
        let bank = FilterBank::new(2049).unwrap();
        let bands = bank.bands();
        assert_eq!(bands.len(), 32);
        assert_eq!(bands[0].lower, 0.0);
        assert!((bands[31].upper - 2049.0).abs() < 1e-9);
        for pair in bands.windows(2) {
            assert!((pair[0].upper - pair[1].lower).abs() < 1e-9);
            let ratio = (pair[1].upper - pair[1].lower) / (pair[0].upper - pair[0].lower);
            assert!((ratio - 1.8).abs() < 1e-9, "{ratio}");
        }
        // centres increase with band index
        assert!(bands.windows(2).all(|p| p[0].center <= p[1].center));
    }

    #[test]
    fn short_spectrum_reports_required_length() {
        let bank = FilterBank::new(200).unwrap();
        let err = bank.apply(&[1.0; 150]).unwrap_err();
        assert!(err.to_string().contains("200"), "{err}");
        assert!(bank.apply(&[0.0; 200]).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn impulse_response_matches_gaussian() {
        let bank = FilterBank::new(513).unwrap();
        let mut spectrum = vec![0.0; 513];
        spectrum[300] = 2.0;
        let out = bank.apply(&spectrum).unwrap();
        for (b, band) in bank.bands().iter().enumerate() {
            let d = 300.0 - band.center;
            let expected = if d.abs() <= 60.0 {
                2.0 * (-d * d / 800.0).exp()
            } else {
                0.0
            };
            assert!((out[b] - expected).abs() < 1e-9, "band {b}");
        }
    }

    #[test]
    fn modal_rate_picks_most_common() {
        assert_eq!(modal_rate(&[100.0, 200.0, 200.0, 50.0]), Some(200.0));
        assert_eq!(modal_rate(&[3.0, 1.0]), Some(1.0));
        assert_eq!(modal_rate(&[]), None);
    }

    #[test]
    fn resampling_preserves_linear_ramps() {
        let ramp: Vec<f64> = (0..200).map(|t| t as f64 * 0.5).collect();
        let s = SignalRecord::new(id(), 100.0, [ramp.clone(), ramp.clone(), ramp]).unwrap();
        let r = s.resampled(50.0).unwrap();
        assert_eq!(r.len(), 100);
        for (i, v) in r.axes()[0].iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn normalisation_contracts() {
        let constant = vec![vec![2.0, 5.0]; 4];
        let (z, _) = normalize_features(&constant, None).unwrap();
        assert!(z.iter().flatten().all(|v| *v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let train: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..32).map(|_| rng.random_range(0.0..10.0)).collect())
            .collect();
        let (z, stats) = normalize_features(&train, None).unwrap();
        for d in 0..32 {
            let mean: f64 = z.iter().map(|r| r[d]).sum::<f64>() / 50.0;
            let var: f64 = z.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / 50.0;
            assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
        }
        let (at_mean, _) = normalize_features(std::slice::from_ref(&stats.mean), Some(&stats)).unwrap();
        assert!(at_mean[0].iter().all(|v| *v == 0.0));
    }
}
