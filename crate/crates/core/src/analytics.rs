//! Closed-form rotating-wave theory of the driven chain.
//!
//! Everything here assumes exact resonance (`drive_freq == omega0`) and a
//! plane-wave phase `phi` per cell. The quasi-classical forms replace `phi` by
//! the Bloch-swept phase `phi(t) = -bloch * t + phi0`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{AmplitudeState, ChainParams};

/// Grid size of the periodic trapezoid rule used for phase averages.
pub const QUADRATURE_POINTS: usize = 1 << 14;

/// Dispersion and mixing data of the two travelling Rabi-wave branches at one `phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeInfo {
    pub phase_per_cell: f64,
    pub nu1: f64,
    pub nu2: f64,
    /// Mixing factor: mode 1 is `(1, -lambda)`, mode 2 is `(lambda, 1)`.
    pub lambda: f64,
    /// Tunnelling-corrected Rabi frequency `sqrt(4 (t_a - t_b)^2 cos^2 phi + rabi^2)`.
    pub big_omega: f64,
    /// Common drift `(t_a + t_b) cos phi`.
    pub mu: f64,
}

/// `Omega_R / (2 (d + sqrt(d^2 + Omega_R^2 / 4)))`, evaluated without cancellation for `d < 0`.
fn mixing_factor(d: f64, rabi: f64, scale: f64, phi: f64) -> Result<f64> {
    // cos(pi/2) is not exactly zero in floating point
    let d = if d.abs() <= 1e-14 * scale { 0.0 } else { d };
    let root = (d * d + rabi * rabi / 4.0).sqrt();
    if d >= 0.0 {
        if d == 0.0 && rabi == 0.0 {
            return Err(Error::DegenerateMode { phi });
        }
        Ok(rabi / (2.0 * (d + root)))
    } else {
        if rabi == 0.0 {
            return Err(Error::DegenerateMode { phi });
        }
        Ok(2.0 * (root - d) / rabi)
    }
}

pub fn mode_info(phi: f64, params: &ChainParams) -> Result<ModeInfo> {
    let c = phi.cos();
    let d = (params.t_a - params.t_b) * c;
    let half_split = (d * d + params.rabi * params.rabi / 4.0).sqrt();
    let mu = (params.t_a + params.t_b) * c;
    Ok(ModeInfo {
        phase_per_cell: phi,
        nu1: mu + half_split,
        nu2: mu - half_split,
        lambda: mixing_factor(d, params.rabi, params.t_a.abs() + params.t_b.abs(), phi)?,
        big_omega: 2.0 * half_split,
        mu,
    })
}

/// Superposition of the two Rabi-wave branches with constants `c1`, `c2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TravellingWave {
    pub mode: ModeInfo,
    pub c1: Complex64,
    pub c2: Complex64,
    pub drive_freq: f64,
}

impl TravellingWave {
    /// Requires `|c1|^2 + |c2|^2 = 1 / (1 + lambda^2)` to within 1e-10.
    pub fn new(phi: f64, c1: Complex64, c2: Complex64, params: &ChainParams) -> Result<Self> {
        let mode = mode_info(phi, params)?;
        let want = 1.0 / (1.0 + mode.lambda * mode.lambda);
        let got = c1.norm_sqr() + c2.norm_sqr();
        if (got - want).abs() > 1e-10 {
            return Err(Error::Normalization { got, want });
        }
        Ok(Self { mode, c1, c2, drive_freq: params.drive_freq })
    }

    /// Fully excited start, `B_p(0) = 0`.
    pub fn excited_start(phi: f64, params: &ChainParams) -> Result<Self> {
        let mode = mode_info(phi, params)?;
        let s = 1.0 + mode.lambda * mode.lambda;
        Self::new(phi, Complex64::new(1.0 / s, 0.0), Complex64::new(mode.lambda / s, 0.0), params)
    }

    /// Pure branch-1 eigenmode (`c2 = 0`).
    pub fn branch_one(phi: f64, params: &ChainParams) -> Result<Self> {
        let mode = mode_info(phi, params)?;
        let c1 = (1.0 / (1.0 + mode.lambda * mode.lambda)).sqrt();
        Self::new(phi, Complex64::new(c1, 0.0), Complex64::new(0.0, 0.0), params)
    }

    /// `(A_p(t), B_p(t))` for site index `p`.
    pub fn amplitudes(&self, p: f64, t: f64) -> (Complex64, Complex64) {
        let ModeInfo { lambda, big_omega, phase_per_cell, .. } = self.mode;
        let slow = Complex64::from_polar(1.0, -0.5 * big_omega * t);
        let fast = Complex64::from_polar(1.0, -0.5 * self.drive_freq * t);
        let site = Complex64::from_polar(1.0, p * phase_per_cell);
        let a = (self.c1 * slow + self.c2 * lambda * slow.conj()) * fast * site;
        let b = (self.c2 * slow.conj() - self.c1 * lambda * slow) * fast.conj() * site;
        (a, b)
    }

    /// Full ring state at time `t`: `a_j = A_j e^{-i mu t} / sqrt(N)`, likewise `b_j`.
    pub fn chain_state(&self, n_sites: usize, t: f64) -> AmplitudeState {
        let scale = Complex64::from_polar(1.0 / (n_sites as f64).sqrt(), -self.mode.mu * t);
        let mut s = AmplitudeState::zeros(n_sites);
        s.time = t;
        for j in 0..n_sites {
            let (a, b) = self.amplitudes(j as f64, t);
            s.excited[j] = a * scale;
            s.ground[j] = b * scale;
        }
        s
    }
}

/// Site-indexed generators `p -> A_p(t)` and `p -> B_p(t)`.
pub fn travelling_wave_amplitudes(
    phi: f64,
    t: f64,
    c1: Complex64,
    c2: Complex64,
    params: &ChainParams,
) -> Result<(impl Fn(f64) -> Complex64, impl Fn(f64) -> Complex64)> {
    let wave = TravellingWave::new(phi, c1, c2, params)?;
    Ok((move |p| wave.amplitudes(p, t).0, move |p| wave.amplitudes(p, t).1))
}

/// Per-site current for the fully excited start.
pub fn closed_form_current(phi: f64, t: f64, params: &ChainParams) -> Result<f64> {
    let m = mode_info(phi, params)?;
    Ok(current_with(phi, m.lambda, m.big_omega * t, params))
}

/// The excited-start current with an explicit Rabi phase `theta` in place of `Omega t`.
fn current_with(phi: f64, lambda: f64, theta: f64, params: &ChainParams) -> f64 {
    let l2 = lambda * lambda;
    let s = (0.5 * theta).sin();
    let bracket = params.t_a * (1.0 + l2 * l2 + 2.0 * l2 * theta.cos()) + 4.0 * params.t_b * l2 * s * s;
    -2.0 * phi.sin() * bracket / ((1.0 + l2) * (1.0 + l2))
}

/// Mean of `f` over one period, periodic trapezoid rule.
pub fn periodic_mean(f: impl Fn(f64) -> f64, points: usize) -> f64 {
    let h = 2.0 * PI / points as f64;
    (0..points).map(|k| f(k as f64 * h)).sum::<f64>() / points as f64
}

/// Phase-averaged corrected Rabi frequency.
pub fn mean_ro_frequency_rwa(params: &ChainParams) -> f64 {
    let d = params.t_a - params.t_b;
    let r2 = params.rabi * params.rabi;
    periodic_mean(|phi| (4.0 * d * d * phi.cos().powi(2) + r2).sqrt(), QUADRATURE_POINTS)
}

/// Phase average of the Stark-mode frequency `sqrt((t_a - t_b)^2 cos^2 phi + rabi^2)`.
pub fn mean_ro_frequency_stark(params: &ChainParams) -> f64 {
    let d = params.t_a - params.t_b;
    let r2 = params.rabi * params.rabi;
    periodic_mean(|phi| (d * d * phi.cos().powi(2) + r2).sqrt(), QUADRATURE_POINTS)
}

/// Bloch-swept phase `-bloch * t + phi0`.
pub fn swept_phase(t: f64, phi0: f64, params: &ChainParams) -> f64 {
    -params.bloch * t + phi0
}

/// `(Omega(t), Lambda(t))` with the cell phase swept by the dc field.
pub fn quasiclassical_ro(t: f64, phi0: f64, params: &ChainParams) -> Result<(f64, f64)> {
    let m = mode_info(swept_phase(t, phi0, params), params)?;
    Ok((m.big_omega, m.lambda))
}

/// Stark-mode `(Omega(t), Lambda(t))` in the Stark-regime form, which lacks the
/// factors 4 (in `Omega`) and 2 (in `Lambda`'s denominator) of
/// [`quasiclassical_ro`].
pub fn stark_quasiclassical(t: f64, phi0: f64, params: &ChainParams) -> Result<(f64, f64)> {
    let d = (params.t_a - params.t_b) * (params.bloch * t - phi0).cos();
    let omega = (d * d + params.rabi * params.rabi).sqrt();
    let lambda = if d >= 0.0 {
        if d == 0.0 && params.rabi == 0.0 {
            return Err(Error::DegenerateMode { phi: swept_phase(t, phi0, params) });
        }
        params.rabi / (d + omega)
    } else {
        if params.rabi == 0.0 {
            return Err(Error::DegenerateMode { phi: swept_phase(t, phi0, params) });
        }
        (omega - d) / params.rabi
    };
    Ok((omega, lambda))
}

/// Both Stark-regime forms side by side so their discrepancy stays visible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarkFormComparison {
    /// `(Omega, Lambda)` in the Stark-regime form.
    pub printed: (f64, f64),
    /// `(Omega, Lambda)` from the ac-driven quasi-classical substitution.
    pub swept_rwa: (f64, f64),
}

pub fn compare_stark_forms(t: f64, phi0: f64, params: &ChainParams) -> Result<StarkFormComparison> {
    Ok(StarkFormComparison {
        printed: stark_quasiclassical(t, phi0, params)?,
        swept_rwa: quasiclassical_ro(t, phi0, params)?,
    })
}

/// Detuning `delta` in `mean_omega - m * bloch = delta * bloch`.
pub fn super_bloch_detuning(params: &ChainParams, m: i32) -> f64 {
    (mean_ro_frequency_rwa(params) - m as f64 * params.bloch) / params.bloch
}

/// Bloch frequency that puts harmonic `m` at detuning `delta`.
pub fn bloch_for_detuning(params: &ChainParams, m: i32, delta: f64) -> f64 {
    mean_ro_frequency_rwa(params) / (m as f64 + delta)
}

/// Quasi-classical position `x(t) = int_0^t J(tau) dtau` sampled on a uniform grid.
///
/// The Rabi phase is accumulated as `int Omega(tau) dtau` so that the swept
/// frequency modulation is carried correctly; `t_a == t_b` uses the constant
/// limit `Lambda = 1`, `Omega = rabi`.
#[derive(Debug, Clone)]
pub struct SuperBlochTrace {
    pub times: Vec<f64>,
    pub position: Vec<f64>,
}

impl SuperBlochTrace {
    /// Largest `|x(t) - x(0)|`.
    pub fn peak_excursion(&self) -> f64 {
        let x0 = self.position[0];
        self.position.iter().map(|x| (x - x0).abs()).fold(0.0, f64::max)
    }
}

fn swept_omega_lambda(t: f64, phi0: f64, params: &ChainParams) -> Result<(f64, f64)> {
    if params.t_a == params.t_b {
        Ok((params.rabi, 1.0))
    } else {
        quasiclassical_ro(t, phi0, params)
    }
}

pub fn super_bloch_trace(params: &ChainParams, phi0: f64, t_end: f64, dt: f64) -> Result<SuperBlochTrace> {
    if !(params.bloch > 0.0) {
        return Err(Error::InvalidParams(vec![crate::error::Violation::new(
            "bloch",
            "quasi-classical position needs bloch > 0",
        )]));
    }
    let steps = (t_end / dt).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    // state (theta, x); theta' = Omega(t), x' = J(t, theta)
    let rhs = |t: f64, theta: f64| -> Result<(f64, f64)> {
        let (omega, lambda) = swept_omega_lambda(t, phi0, params)?;
        let phi = swept_phase(t, phi0, params);
        Ok((omega, current_with(phi, lambda, theta, params)))
    };
    let mut times = Vec::with_capacity(steps + 1);
    let mut position = Vec::with_capacity(steps + 1);
    let (mut theta, mut x) = (0.0, 0.0);
    times.push(0.0);
    position.push(0.0);
    for k in 0..steps {
        let t = k as f64 * h;
        let (k1t, k1x) = rhs(t, theta)?;
        let (k2t, k2x) = rhs(t + h / 2.0, theta + h / 2.0 * k1t)?;
        let (k3t, k3x) = rhs(t + h / 2.0, theta + h / 2.0 * k2t)?;
        let (k4t, k4x) = rhs(t + h, theta + h * k3t)?;
        theta += h / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t);
        x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        times.push((k + 1) as f64 * h);
        position.push(x);
    }
    Ok(SuperBlochTrace { times, position })
}

/// Step used by [`super_bloch_position`]: 200 steps per fastest period.
pub fn super_bloch_step(params: &ChainParams) -> f64 {
    let d = (params.t_a - params.t_b).abs();
    let fastest = (4.0 * d * d + params.rabi * params.rabi).sqrt().max(params.bloch);
    2.0 * PI / fastest / 200.0
}

pub fn super_bloch_position(t: f64, params: &ChainParams, phi0: f64) -> Result<f64> {
    let trace = super_bloch_trace(params, phi0, t, super_bloch_step(params))?;
    Ok(*trace.position.last().expect("trace has at least one point"))
}
