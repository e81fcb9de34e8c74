//! Parameter and state model shared by every other module.
//!
//! Units: hbar = e = 1 and the transition frequency `omega0` is normally 1, so
//! times are in 1/omega0 and currents in e*omega0. Sites are labelled
//! `j = 0..N-1` externally; the dc tilt uses `p = j - floor(N/2)` internally.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Open,
    Periodic,
}

/// Which right-hand side the amplitude equations use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// ac drive with counter-rotating terms, `-rabi cos(w t)` coupling.
    #[default]
    Full,
    /// Rotating-wave approximation of the ac coupling.
    Rwa,
    /// dc-only drive: static `-rabi` coupling, `drive_freq` ignored.
    Stark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    #[default]
    Excited,
    Ground,
}

/// Physical constants of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub n_sites: usize,
    /// Lattice constant in nm. Metadata only; the dynamics is unitless.
    pub lattice_const_nm: f64,
    pub omega0: f64,
    pub drive_freq: f64,
    pub rabi: f64,
    pub bloch: f64,
    pub t_a: f64,
    pub t_b: f64,
    /// Per-level decay rate; 0 means lossless.
    pub gamma: f64,
    pub boundary: Boundary,
    pub mode: Mode,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            n_sites: 128,
            lattice_const_nm: 20.0,
            omega0: 1.0,
            drive_freq: 1.0,
            rabi: 0.8,
            bloch: 0.04,
            t_a: 0.4,
            t_b: 0.04,
            gamma: 0.0,
            boundary: Boundary::Open,
            mode: Mode::Full,
        }
    }
}

impl ChainParams {
    /// Every violated invariant, never stopping at the first one.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.n_sites < 1 {
            out.push(Violation::new("n_sites", "n_sites must be ≥ 1"));
        }
        if !(self.lattice_const_nm.is_finite() && self.lattice_const_nm > 0.0) {
            out.push(Violation::new("lattice_const_nm", "lattice_const_nm must be > 0"));
        }
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            out.push(Violation::new("omega0", "omega0 must be > 0"));
        }
        if !(self.drive_freq.is_finite() && self.drive_freq >= 0.0) {
            out.push(Violation::new("drive_freq", "drive_freq must be ≥ 0"));
        }
        if !(self.rabi.is_finite() && self.rabi >= 0.0) {
            out.push(Violation::new("rabi", "rabi must be ≥ 0"));
        }
        if !(self.bloch.is_finite() && self.bloch >= 0.0) {
            out.push(Violation::new("bloch", "bloch must be ≥ 0"));
        }
        if !self.t_a.is_finite() {
            out.push(Violation::new("t_a", "t_a must be finite"));
        }
        if !self.t_b.is_finite() {
            out.push(Violation::new("t_b", "t_b must be finite"));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            out.push(Violation::new("gamma", "gamma must be ≥ 0"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(v))
        }
    }

    /// Decay rate for a quality factor `Q = omega0 / (2 gamma)`.
    pub fn gamma_from_q(omega0: f64, q: f64) -> f64 {
        omega0 / (2.0 * q)
    }

    /// Site index at which the dc tilt term vanishes.
    pub fn tilt_origin(&self) -> f64 {
        (self.n_sites / 2) as f64
    }

    /// Upper bound on the magnitude of the generator, used for the step budget.
    pub fn lambda_max(&self) -> f64 {
        self.omega0 / 2.0
            + (self.n_sites as f64 / 2.0) * self.bloch
            + 2.0 * self.t_a.abs().max(self.t_b.abs())
            + self.rabi
    }
}

/// Gaussian wave packet used as the initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPacket {
    pub center_site: f64,
    /// e^-1 half-width of the amplitude, in sites.
    pub width_sites: f64,
    #[serde(default)]
    pub band: Band,
    #[serde(default)]
    pub phase_per_site: f64,
}

impl Default for GaussianPacket {
    fn default() -> Self {
        Self { center_site: 80.0, width_sites: 20.0, band: Band::Excited, phase_per_site: 0.0 }
    }
}

impl GaussianPacket {
    pub fn center_in_range(&self, n_sites: usize) -> bool {
        self.center_site >= 0.0 && self.center_site < n_sites as f64
    }
}

/// Complex site amplitudes `a_j` (excited) and `b_j` (ground) at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeState {
    pub time: f64,
    pub excited: Vec<Complex64>,
    pub ground: Vec<Complex64>,
}

impl AmplitudeState {
    pub fn zeros(n_sites: usize) -> Self {
        Self {
            time: 0.0,
            excited: vec![Complex64::new(0.0, 0.0); n_sites],
            ground: vec![Complex64::new(0.0, 0.0); n_sites],
        }
    }

    pub fn n_sites(&self) -> usize {
        self.excited.len()
    }

    /// Total probability `sum_j |a_j|^2 + |b_j|^2`.
    pub fn norm(&self) -> f64 {
        self.excited.iter().chain(&self.ground).map(|z| z.norm_sqr()).sum()
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            time: self.time,
            excited: self.excited.iter().map(|z| z * factor).collect(),
            ground: self.ground.iter().map(|z| z * factor).collect(),
        }
    }

    /// `<self|other>` summed over both bands.
    pub fn inner(&self, other: &AmplitudeState) -> Complex64 {
        self.excited
            .iter()
            .zip(&other.excited)
            .chain(self.ground.iter().zip(&other.ground))
            .map(|(x, y)| x.conj() * y)
            .sum()
    }

    /// Largest pointwise amplitude difference over both bands.
    pub fn max_abs_diff(&self, other: &AmplitudeState) -> f64 {
        self.excited
            .iter()
            .zip(&other.excited)
            .chain(self.ground.iter().zip(&other.ground))
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.excited.iter().chain(&self.ground).all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Normalized Gaussian packet on one band; the other band is zero and `time = 0`.
///
/// Weights are computed relative to the site nearest the centre so that a
/// vanishing width degrades to a single-site state instead of underflowing.
pub fn make_initial_state(params: &ChainParams, packet: &GaussianPacket) -> Result<AmplitudeState> {
    params.validate()?;
    if !(packet.width_sites > 0.0) || !packet.width_sites.is_finite() {
        return Err(Error::InvalidParams(vec![Violation::new(
            "width_sites",
            "width_sites must be > 0",
        )]));
    }
    if !packet.center_site.is_finite() || !packet.phase_per_site.is_finite() {
        return Err(Error::InvalidParams(vec![Violation::new(
            "center_site",
            "packet center and phase must be finite",
        )]));
    }
    let n = params.n_sites;
    let sq_dist = |j: usize| {
        let d = j as f64 - packet.center_site;
        d * d
    };
    let d_min = (0..n).map(sq_dist).fold(f64::INFINITY, f64::min);
    let sigma2 = packet.width_sites * packet.width_sites;

    let mut amps: Vec<Complex64> = (0..n)
        .map(|j| {
            let mag = (-(sq_dist(j) - d_min) / sigma2).exp();
            Complex64::from_polar(mag, j as f64 * packet.phase_per_site)
        })
        .collect();
    let total: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
    let g = 1.0 / total.sqrt();
    for z in &mut amps {
        *z *= g;
    }

    let mut state = AmplitudeState::zeros(n);
    match packet.band {
        Band::Excited => state.excited = amps,
        Band::Ground => state.ground = amps,
    }
    Ok(state)
}

/// Free-function form of [`AmplitudeState::norm`].
pub fn norm(state: &AmplitudeState) -> f64 {
    state.norm()
}
