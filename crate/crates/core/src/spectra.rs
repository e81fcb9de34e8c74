//! Windowed FFT of observable series, peak picking, and comb labelling.

use std::f64::consts::PI;

use rustfft::FftPlanner;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floquet::{comb_frequency, label_rank};
use crate::observables::ObservableSeries;

pub const MIN_SAMPLES: usize = 16;
/// Residuals closer than this count as a tie when labelling.
const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Rect,
    #[default]
    Hann,
}

impl Window {
    fn weights(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; n],
            Window::Hann => {
                let denom = (n - 1) as f64;
                (0..n).map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / denom).cos()).collect()
            }
        }
    }
}

/// One-sided magnitude spectrum on the angular-frequency axis.
///
/// Magnitudes are amplitude-calibrated: a sinusoid of amplitude `A` centred on
/// a bin shows a peak of height `A` under either window.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub omegas: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub window: Window,
    pub dt_sample: f64,
    pub n_samples: usize,
    pub n_fft: usize,
}

impl Spectrum {
    /// Grid spacing `2 pi / (n_fft dt)`.
    pub fn bin_width(&self) -> f64 {
        2.0 * PI / (self.n_fft as f64 * self.dt_sample)
    }

    /// Native resolution `2 pi / (n_samples dt)`, the bin width without zero padding.
    pub fn resolution(&self) -> f64 {
        2.0 * PI / (self.n_samples as f64 * self.dt_sample)
    }

    pub fn total_power(&self) -> f64 {
        self.magnitudes.iter().map(|m| m * m).sum()
    }

    /// Largest magnitude with `lo <= omega <= hi`, as `(omega, magnitude)`.
    pub fn max_in(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        self.omegas
            .iter()
            .zip(&self.magnitudes)
            .filter(|(w, _)| **w >= lo && **w <= hi)
            .map(|(w, m)| (*w, *m))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Mean-subtracted, windowed, zero-padded magnitude spectrum of a uniformly sampled series.
pub fn power_spectrum(series: &ObservableSeries, window: Window, zero_pad_factor: usize) -> Result<Spectrum> {
    spectrum_of(&series.times, &series.values, window, zero_pad_factor)
}

/// [`power_spectrum`] on raw sample arrays.
pub fn spectrum_of(times: &[f64], values: &[f64], window: Window, zero_pad_factor: usize) -> Result<Spectrum> {
    let n = values.len();
    if n < MIN_SAMPLES || times.len() != n {
        return Err(Error::Spectrum(format!("need at least {MIN_SAMPLES} equal-length samples, got {n}")));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::Spectrum("sample times must increase".into()));
    }
    for w in times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(w[1].abs()) {
            return Err(Error::Spectrum(format!("non-uniform sampling near t = {}", w[0])));
        }
    }
    let pad = zero_pad_factor.max(1);
    let n_fft = n * pad;
    let mean = values.iter().sum::<f64>() / n as f64;
    let weights = window.weights(n);
    let gain: f64 = weights.iter().sum();
    let mut buf: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); n_fft];
    for (k, (v, w)) in values.iter().zip(&weights).enumerate() {
        buf[k] = Complex64::new((v - mean) * w, 0.0);
    }
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    let half = n_fft / 2 + 1;
    let dw = 2.0 * PI / (n_fft as f64 * dt);
    let omegas = (0..half).map(|k| k as f64 * dw).collect();
    let magnitudes = buf[..half]
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let one_sided = if k == 0 || (n_fft % 2 == 0 && k == n_fft / 2) { 1.0 } else { 2.0 };
            one_sided * z.norm() / gain
        })
        .collect();
    Ok(Spectrum { omegas, magnitudes, window, dt_sample: dt, n_samples: n, n_fft })
}

/// `(m, n, p)` indices of `m w0 + n B + p Omega_bar`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombLabel {
    pub m: i32,
    pub n: i32,
    pub p: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralLine {
    pub omega_peak: f64,
    pub magnitude: f64,
    pub label: Option<CombLabel>,
    /// Distance to the nearest comb member; absent until labelled.
    pub residual: Option<f64>,
}

/// Local maxima above `rel_threshold * max`, at least `min_separation_bins`
/// apart, refined by a parabola through the log-magnitudes. Sorted by
/// descending magnitude.
pub fn find_peaks(spectrum: &Spectrum, rel_threshold: f64, min_separation_bins: usize) -> Result<Vec<SpectralLine>> {
    let mags = &spectrum.magnitudes;
    if mags.is_empty() {
        return Err(Error::Spectrum("empty spectrum".into()));
    }
    if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
        return Err(Error::Spectrum(format!("rel_threshold must lie in (0, 1), got {rel_threshold}")));
    }
    let top = mags.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return Ok(Vec::new());
    }
    let floor = rel_threshold * top;
    let len = mags.len();
    let mut candidates: Vec<usize> = (0..len)
        .filter(|&k| {
            let m = mags[k];
            let left_ok = k == 0 || m > mags[k - 1];
            let right_ok = k + 1 == len || m >= mags[k + 1];
            m >= floor && left_ok && right_ok
        })
        .collect();
    candidates.sort_by(|&a, &b| mags[b].total_cmp(&mags[a]).then(a.cmp(&b)));

    let mut kept: Vec<usize> = Vec::new();
    for k in candidates {
        if kept.iter().all(|&q| k.abs_diff(q) >= min_separation_bins.max(1)) {
            kept.push(k);
        }
    }
    let dw = spectrum.bin_width();
    Ok(kept
        .into_iter()
        .map(|k| {
            let (offset, mag) = refine(mags, k);
            SpectralLine { omega_peak: (k as f64 + offset) * dw, magnitude: mag, label: None, residual: None }
        })
        .collect())
}

fn refine(mags: &[f64], k: usize) -> (f64, f64) {
    if k == 0 || k + 1 >= mags.len() || mags[k - 1] <= 0.0 || mags[k + 1] <= 0.0 {
        return (0.0, mags[k]);
    }
    let (a, b, c) = (mags[k - 1].ln(), mags[k].ln(), mags[k + 1].ln());
    let denom = a - 2.0 * b + c;
    if denom >= 0.0 {
        return (0.0, mags[k]);
    }
    let delta = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
    (delta, (b - 0.25 * (a - c) * delta).exp())
}

/// Labelling bounds for the comb search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombSearch {
    pub omega0: f64,
    pub bloch: f64,
    /// Non-positive disables the `p = +-1` members.
    pub omega_bar: f64,
    pub m_max: u32,
    pub n_max: u32,
    pub tol: f64,
}

impl CombSearch {
    /// Nearest comb member to `omega` with its residual.
    pub fn nearest(&self, omega: f64) -> (CombLabel, f64) {
        let (mm, nm) = (self.m_max as i32, self.n_max as i32);
        let p_range = if self.omega_bar > 0.0 { -1..=1 } else { 0..=0 };
        let mut members = Vec::new();
        for m in -mm..=mm {
            for n in -nm..=nm {
                for p in p_range.clone() {
                    let f = comb_frequency(self.omega0, self.bloch, self.omega_bar.max(0.0), m, n, p);
                    members.push((CombLabel { m, n, p }, (omega - f).abs()));
                }
            }
        }
        let best = members.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        members
            .into_iter()
            .filter(|x| x.1 <= best + TIE_TOLERANCE)
            .min_by_key(|(l, _)| label_rank(l.m, l.n, l.p))
            .expect("comb search is never empty")
    }
}

pub fn label_peaks(peaks: &[SpectralLine], search: &CombSearch) -> Vec<SpectralLine> {
    peaks
        .iter()
        .map(|line| {
            let (label, residual) = search.nearest(line.omega_peak);
            SpectralLine {
                label: (residual <= search.tol).then_some(label),
                residual: Some(residual),
                ..line.clone()
            }
        })
        .collect()
}
