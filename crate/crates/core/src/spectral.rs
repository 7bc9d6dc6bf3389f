//! Amplitude spectral density and integrated beam motion.
//!
//! The one-sided ASD of an `N`-sample record is
//! `D_k = √(c_k / (f_s Σw²)) |Σ_t w_t x_t e^{−j2πkt/N}|`, `k = 0..=N/2`, with
//! `c_k = 2` for interior bins and 1 for DC and (even `N`) Nyquist. For the
//! rectangular window `Σw² = N`, and `(f_s/N) Σ_{k≥1} D_k²` is exactly the power
//! of the mean-removed signal.

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Rectangular,
    Hann,
}

impl Window {
    fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|t| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * t as f64 / n as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSet {
    pub freq_hz: Vec<f64>,
    /// channels × bins
    #[serde(with = "crate::io::matrix_serde")]
    pub asd: DMatrix<f64>,
    /// Samples per segment.
    pub n: usize,
    pub fs_hz: f64,
    pub segments: usize,
    pub window: Window,
}

fn one_sided(signal: &DMatrix<f64>, fs_hz: f64, window: Window) -> Result<SpectrumSet> {
    let (ch, n) = signal.shape();
    if n < 2 || ch == 0 {
        return Err(Error::EmptySignal);
    }
    if !(fs_hz > 0.0) {
        return Err(Error::Validation("sample rate must be positive".into()));
    }
    let bins = n / 2 + 1;
    let w = window.coefficients(n);
    let energy: f64 = w.iter().map(|v| v * v).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let rows: Vec<Vec<f64>> = (0..ch)
        .into_par_iter()
        .map(|i| {
            let mut buf: Vec<Complex64> = (0..n).map(|t| Complex64::new(signal[(i, t)] * w[t], 0.0)).collect();
            fft.process(&mut buf);
            (0..bins)
                .map(|k| {
                    let c = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
                    (c / (fs_hz * energy)).sqrt() * buf[k].norm()
                })
                .collect()
        })
        .collect();
    Ok(SpectrumSet {
        freq_hz: (0..bins).map(|k| k as f64 * fs_hz / n as f64).collect(),
        asd: DMatrix::from_fn(ch, bins, |i, k| rows[i][k]),
        n,
        fs_hz,
        segments: 1,
        window,
    })
}

/// ASD of the whole record, one row per channel.
pub fn asd(signal: &DMatrix<f64>, fs_hz: f64) -> Result<SpectrumSet> {
    one_sided(signal, fs_hz, Window::Rectangular)
}

pub fn asd_windowed(signal: &DMatrix<f64>, fs_hz: f64, window: Window) -> Result<SpectrumSet> {
    one_sided(signal, fs_hz, window)
}

/// Power average of the ASDs of `n_segments` non-overlapping blocks.
pub fn welch_asd(signal: &DMatrix<f64>, fs_hz: f64, n_segments: usize, window: Window) -> Result<SpectrumSet> {
    let n = signal.ncols();
    if n_segments == 0 || !n.is_multiple_of(n_segments) || n / n_segments < 2 {
        return Err(Error::BadSegmentation(format!(
            "{n} samples cannot be split into {n_segments} equal blocks of at least 2"
        )));
    }
    if n_segments == 1 {
        return one_sided(signal, fs_hz, window);
    }
    let len = n / n_segments;
    let mut power: Option<DMatrix<f64>> = None;
    let mut base = None;
    for j in 0..n_segments {
        let block = signal.columns(j * len, len).into_owned();
        let s = one_sided(&block, fs_hz, window)?;
        let p = s.asd.map(|v| v * v);
        power = Some(match power {
            Some(acc) => acc + p,
            None => p,
        });
        base.get_or_insert(s);
    }
    let mut out = base.expect("at least two segments");
    out.asd = power.expect("at least two segments").map(|v| (v / n_segments as f64).sqrt());
    out.segments = n_segments;
    Ok(out)
}

impl SpectrumSet {
    pub fn channels(&self) -> usize {
        self.asd.nrows()
    }

    /// Cumulative RMS `√((f_s/N) Σ_{k=1..p} D_k²)`; column 0 is zero.
    pub fn ibm(&self) -> DMatrix<f64> {
        let df = self.fs_hz / self.n as f64;
        let mut out = DMatrix::zeros(self.asd.nrows(), self.asd.ncols());
        for i in 0..self.asd.nrows() {
            let mut acc = 0.0;
            for k in 1..self.asd.ncols() {
                acc += self.asd[(i, k)] * self.asd[(i, k)];
                out[(i, k)] = (df * acc).sqrt();
            }
        }
        out
    }

    pub fn header(&self) -> Vec<String> {
        std::iter::once("freq_hz".to_string())
            .chain((0..self.channels()).map(|i| format!("ch_{i}")))
            .collect()
    }

    /// One row per bin, `freq_hz` followed by every channel of `values`.
    pub fn rows(&self, values: &DMatrix<f64>) -> Vec<Vec<f64>> {
        (0..self.freq_hz.len())
            .map(|k| {
                std::iter::once(self.freq_hz[k])
                    .chain((0..values.nrows()).map(|i| values[(i, k)]))
                    .collect()
            })
            .collect()
    }

    pub fn summary(&self) -> SpectrumSummary {
        let ibm = self.ibm();
        let last = ibm.ncols() - 1;
        let channels = (0..self.channels())
            .map(|i| {
                let (k, v) = (1..self.asd.ncols())
                    .map(|k| (k, self.asd[(i, k)]))
                    .fold((0, 0.0), |best, c| if c.1 > best.1 { c } else { best });
                ChannelSummary {
                    peak_hz: self.freq_hz[k],
                    peak_asd: v,
                    ibm: ibm[(i, last)],
                }
            })
            .collect();
        SpectrumSummary {
            n: self.n,
            fs_hz: self.fs_hz,
            segments: self.segments,
            window: self.window,
            normalization: "one-sided, sqrt(c_k/(fs*sum(w^2)))*|DFT|, c_k=2 except DC/Nyquist".into(),
            channels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    /// Largest bin away from DC.
    pub peak_hz: f64,
    pub peak_asd: f64,
    /// IBM at the Nyquist frequency.
    pub ibm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub n: usize,
    pub fs_hz: f64,
    pub segments: usize,
    pub window: Window,
    pub normalization: String,
    pub channels: Vec<ChannelSummary>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    fn row(v: Vec<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, v.len(), &v)
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn mean_removed_rms(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn zero_signal_zero_spectrum() {
        let s = asd(&DMatrix::zeros(2, 64), 100.0).unwrap();
        assert!(s.asd.iter().all(|&v| v == 0.0));
        assert!(s.ibm().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sinusoid_at_bin() {
        let (n, fs, k0) = (100_000usize, 1e4, 1234usize);
        let x: Vec<f64> = (0..n).map(|t| (2.0 * PI * k0 as f64 * t as f64 / n as f64).sin()).collect();
        let s = asd(&row(x), fs).unwrap();
        let expect = (2.0 / (fs * n as f64)).sqrt() * n as f64 / 2.0;
        assert!((s.asd[(0, k0)] - expect).abs() <= 1e-9 * expect);
        assert!((s.freq_hz[k0] - k0 as f64 * fs / n as f64).abs() < 1e-12);
    }

    #[test]
    fn constant_signal_only_dc() {
        let s = asd(&row(vec![3.0; 50]), 10.0).unwrap();
        assert!(s.asd[(0, 0)] > 0.0);
        assert!(s.asd.iter().skip(1).all(|&v| v < 1e-12));
    }

    #[test]
    fn ibm_equals_mean_removed_rms() {
        for n in [1000, 1001] {
            let x: Vec<f64> = noise(n, 1).iter().map(|v| v + 5.0).collect();
            let s = asd(&row(x.clone()), 250.0).unwrap();
            let ibm = s.ibm();
            let got = ibm[(0, ibm.ncols() - 1)];
            let rms = mean_removed_rms(&x);
            assert!((got - rms).abs() <= 1e-9 * rms, "n={n}: {got} vs {rms}");
        }
    }

    #[test]
    fn single_bin_spectrum_is_a_step() {
        let n = 64;
        let x: Vec<f64> = (0..n).map(|t| (2.0 * PI * 5.0 * t as f64 / n as f64).cos()).collect();
        let s = asd(&row(x), 64.0).unwrap();
        let ibm = s.ibm();
        let step = (s.fs_hz / n as f64).sqrt() * s.asd[(0, 5)];
        for k in 0..ibm.ncols() {
            let expect = if k >= 5 { step } else { 0.0 };
            assert!((ibm[(0, k)] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn welch_one_segment_is_bitwise_asd() {
        let x = row(noise(512, 2));
        let a = asd(&x, 1e3).unwrap();
        let w = welch_asd(&x, 1e3, 1, Window::Rectangular).unwrap();
        assert!(a.asd.iter().zip(w.asd.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn welch_of_repeated_block_equals_block() {
        let block = noise(100, 3);
        let x: Vec<f64> = (0..10).flat_map(|_| block.clone()).collect();
        let w = welch_asd(&row(x), 1e3, 10, Window::Rectangular).unwrap();
        let b = asd(&row(block), 1e3).unwrap();
        assert!((w.asd - b.asd).norm() < 1e-12);
    }

    #[test]
    fn welch_rejects_bad_segmentation() {
        let x = row(noise(100, 4));
        assert!(matches!(welch_asd(&x, 1.0, 3, Window::Rectangular), Err(Error::BadSegmentation(_))));
        assert!(matches!(welch_asd(&x, 1.0, 100, Window::Rectangular), Err(Error::BadSegmentation(_))));
        assert!(matches!(asd(&DMatrix::zeros(1, 1), 1.0), Err(Error::EmptySignal)));
    }

    #[test]
    fn welch_reduces_variance() {
        let (n, seeds) = (2000, 100);
        let bin_single = 50;
        let bin_welch = 5; // same frequency at a tenth of the resolution
        let mut p1 = Vec::new();
        let mut p10 = Vec::new();
        for s in 0..seeds {
            let x = row(noise(n, 100 + s));
            p1.push(asd(&x, 1.0).unwrap().asd[(0, bin_single)].powi(2));
            p10.push(welch_asd(&x, 1.0, 10, Window::Rectangular).unwrap().asd[(0, bin_welch)].powi(2));
        }
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        let ratio = var(&p1) / var(&p10);
        assert!(ratio > 5.0 && ratio < 20.0, "{ratio}");
    }

    #[test]
    fn hann_window_preserves_white_noise_level() {
        let x = row(noise(1 << 14, 5));
        let r = asd(&x, 1.0).unwrap();
        let h = asd_windowed(&x, 1.0, Window::Hann).unwrap();
        let mean = |s: &SpectrumSet| s.asd.iter().map(|v| v * v).sum::<f64>() / s.asd.len() as f64;
        assert!((mean(&h) / mean(&r) - 1.0).abs() < 0.1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn offset_only_moves_dc(seed in 0u64..500, offset in -10.0f64..10.0, n in 8usize..300) {
            let x = noise(n, seed);
            let a = asd(&row(x.clone()), 1.0).unwrap();
            let b = asd(&row(x.iter().map(|v| v + offset).collect()), 1.0).unwrap();
            for k in 1..a.asd.ncols() {
                prop_assert!((a.asd[(0, k)] - b.asd[(0, k)]).abs() < 1e-9 * (1.0 + a.asd[(0, k)]));
            }
            let ibm = a.ibm();
            for k in 1..ibm.ncols() {
                prop_assert!(ibm[(0, k)] >= ibm[(0, k - 1)]);
            }
            let df = 1.0 / n as f64;
            let power: f64 = (1..a.asd.ncols()).map(|k| a.asd[(0, k)].powi(2)).sum::<f64>() * df;
            let rms = mean_removed_rms(&x);
            prop_assert!((power - rms * rms).abs() <= 1e-9 * rms * rms);
        }
    }
}
