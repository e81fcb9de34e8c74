//! Time-domain integration of the chain amplitude equations.
//!
//! The generator for site `j` (with `p = j - origin`) is
//!
//! ```text
//! i da_p/dt = (w0/2 - p B - i g/2) a_p + t_a (a_{p+1} + a_{p-1}) + c_a(t) b_p
//! i db_p/dt = (-w0/2 - p B - i g/2) b_p + t_b (b_{p+1} + b_{p-1}) + c_b(t) a_p
//! ```
//!
//! where the interband couplings `c_a`, `c_b` depend on [`Mode`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::model::{AmplitudeState, Boundary, ChainParams, Mode};

/// Largest allowed `dt * lambda_max`.
pub const STEP_BUDGET: f64 = 0.1;
/// Relative norm drift that aborts an integration.
pub const NORM_DRIFT_LIMIT: f64 = 1e-6;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationSettings {
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
    #[serde(default)]
    pub scheme: Scheme,
}

impl IntegrationSettings {
    /// Default step `min(0.1 / lambda_max, 0.01)` with a snapshot stride that
    /// keeps the sampling interval at or below 0.1.
    pub fn auto(params: &ChainParams, t_end: f64) -> Self {
        let dt = default_dt(params);
        Self { dt, t_end, record_every: default_stride(dt), scheme: Scheme::Rk4 }
    }

    pub fn violations(&self, params: &ChainParams) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.dt.is_finite() && self.dt > 0.0) {
            out.push(Violation::new("dt", "dt must be > 0"));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            out.push(Violation::new("t_end", "t_end must be > 0"));
        }
        if self.record_every < 1 {
            out.push(Violation::new("record_every", "record_every must be ≥ 1"));
        }
        let budget = self.dt * params.lambda_max();
        // small slack so that dt = 0.1 / lambda_max itself passes
        if budget > STEP_BUDGET * (1.0 + 1e-12) {
            out.push(Violation::new(
                "dt",
                format!("dt * lambda_max = {budget:.4} exceeds the step budget {STEP_BUDGET}"),
            ));
        }
        out
    }

    pub fn validate(&self, params: &ChainParams) -> Result<()> {
        let v = self.violations(params);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(v))
        }
    }

    /// Number of recorded snapshots, including the initial one.
    pub fn snapshot_count(&self) -> usize {
        let stride = self.dt * self.record_every as f64;
        // tolerate t_end being an exact multiple up to rounding
        ((self.t_end / stride) * (1.0 + 1e-12)).floor() as usize + 1
    }

    pub fn sample_interval(&self) -> f64 {
        self.dt * self.record_every as f64
    }
}

pub fn default_dt(params: &ChainParams) -> f64 {
    (STEP_BUDGET / params.lambda_max()).min(0.01)
}

pub fn default_stride(dt: f64) -> usize {
    ((0.1 / dt) * (1.0 + 1e-12)).floor().max(1.0) as usize
}

/// Right-hand side of the amplitude equations with the site-dependent
/// diagonal precomputed.
#[derive(Debug, Clone)]
struct Generator {
    n: usize,
    diag_a: Vec<Complex64>,
    diag_b: Vec<Complex64>,
    t_a: f64,
    t_b: f64,
    periodic: bool,
    mode: Mode,
    rabi: f64,
    drive_freq: f64,
}

impl Generator {
    fn new(params: &ChainParams, origin: f64) -> Self {
        let half = params.omega0 / 2.0;
        let loss = Complex64::new(0.0, -params.gamma / 2.0);
        let tilt = |j: usize| (j as f64 - origin) * params.bloch;
        Self {
            n: params.n_sites,
            diag_a: (0..params.n_sites).map(|j| Complex64::new(half - tilt(j), 0.0) + loss).collect(),
            diag_b: (0..params.n_sites).map(|j| Complex64::new(-half - tilt(j), 0.0) + loss).collect(),
            t_a: params.t_a,
            t_b: params.t_b,
            periodic: params.boundary == Boundary::Periodic,
            mode: params.mode,
            rabi: params.rabi,
            drive_freq: params.drive_freq,
        }
    }

    /// Couplings multiplying `b_p` in the a-row and `a_p` in the b-row.
    fn couplings(&self, t: f64) -> (Complex64, Complex64) {
        match self.mode {
            Mode::Full => {
                let c = Complex64::new(-self.rabi * (self.drive_freq * t).cos(), 0.0);
                (c, c)
            }
            Mode::Rwa => {
                let e = Complex64::from_polar(self.rabi / 2.0, -self.drive_freq * t);
                (-e, -e.conj())
            }
            Mode::Stark => {
                let c = Complex64::new(-self.rabi, 0.0);
                (c, c)
            }
        }
    }

    /// `y = [a_0..a_{N-1}, b_0..b_{N-1}]`; writes `dy/dt` into `out`.
    fn eval(&self, t: f64, y: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        let (a, b) = y.split_at(n);
        let (da, db) = out.split_at_mut(n);
        let (ca, cb) = self.couplings(t);
        let neighbours = |v: &[Complex64], j: usize| -> Complex64 {
            let left = if j > 0 {
                v[j - 1]
            } else if self.periodic {
                v[n - 1]
            } else {
                ZERO
            };
            let right = if j + 1 < n {
                v[j + 1]
            } else if self.periodic {
                v[0]
            } else {
                ZERO
            };
            left + right
        };
        for j in 0..n {
            let ha = self.diag_a[j] * a[j] + neighbours(a, j) * self.t_a + ca * b[j];
            let hb = self.diag_b[j] * b[j] + neighbours(b, j) * self.t_b + cb * a[j];
            da[j] = -I * ha;
            db[j] = -I * hb;
        }
    }
}

fn pack(state: &AmplitudeState) -> Vec<Complex64> {
    state.excited.iter().chain(&state.ground).copied().collect()
}

fn unpack(y: &[Complex64], time: f64) -> AmplitudeState {
    let n = y.len() / 2;
    AmplitudeState { time, excited: y[..n].to_vec(), ground: y[n..].to_vec() }
}

fn check_len(state: &AmplitudeState, params: &ChainParams) -> Result<()> {
    if state.excited.len() != params.n_sites || state.ground.len() != params.n_sites {
        return Err(Error::InvalidParams(vec![Violation::new(
            "n_sites",
            format!(
                "state has {}/{} sites, params expect {}",
                state.excited.len(),
                state.ground.len(),
                params.n_sites
            ),
        )]));
    }
    Ok(())
}

/// Time derivatives `(da/dt, db/dt)` of `state` at time `t`.
pub fn derivative(
    state: &AmplitudeState,
    params: &ChainParams,
    t: f64,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    check_len(state, params)?;
    if !state.is_finite() {
        return Err(Error::Numerical { step: 0, reason: "non-finite amplitude in state".into() });
    }
    let g = Generator::new(params, params.tilt_origin());
    let y = pack(state);
    let mut dy = vec![ZERO; y.len()];
    g.eval(t, &y, &mut dy);
    let n = params.n_sites;
    let db = dy.split_off(n);
    Ok((dy, db))
}

/// Fixed-step RK4 integrator holding its scratch buffers.
#[derive(Debug, Clone)]
pub struct Propagator {
    gen: Generator,
    gamma: f64,
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl Propagator {
    pub fn new(params: &ChainParams) -> Self {
        Self::with_tilt_origin(params, params.tilt_origin())
    }

    /// Uses `p = j - origin` for the tilt term instead of the mid-chain default.
    pub fn with_tilt_origin(params: &ChainParams, origin: f64) -> Self {
        let len = 2 * params.n_sites;
        Self {
            gen: Generator::new(params, origin),
            gamma: params.gamma,
            k1: vec![ZERO; len],
            k2: vec![ZERO; len],
            k3: vec![ZERO; len],
            k4: vec![ZERO; len],
            tmp: vec![ZERO; len],
        }
    }

    /// Advances the packed state `y` from `t` to `t + dt`; returns the new norm.
    fn advance(&mut self, y: &mut [Complex64], t: f64, dt: f64) -> f64 {
        let h2 = dt / 2.0;
        self.gen.eval(t, y, &mut self.k1);
        for ((o, y), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k1) {
            *o = y + k * h2;
        }
        self.gen.eval(t + h2, &self.tmp, &mut self.k2);
        for ((o, y), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k2) {
            *o = y + k * h2;
        }
        self.gen.eval(t + h2, &self.tmp, &mut self.k3);
        for ((o, y), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k3) {
            *o = y + k * dt;
        }
        self.gen.eval(t + dt, &self.tmp, &mut self.k4);
        let w = dt / 6.0;
        let mut norm = 0.0;
        for (i, y) in y.iter_mut().enumerate() {
            *y += (self.k1[i] + (self.k2[i] + self.k3[i]) * 2.0 + self.k4[i]) * w;
            norm += y.norm_sqr();
        }
        norm
    }

    /// Integrates `initial` under `settings`, recording every `record_every` steps.
    pub fn run(&mut self, initial: &AmplitudeState, settings: &IntegrationSettings) -> Result<Vec<AmplitudeState>> {
        if initial.n_sites() != self.gen.n || initial.ground.len() != self.gen.n {
            return Err(Error::InvalidParams(vec![Violation::new("n_sites", "state length mismatch")]));
        }
        if !initial.is_finite() {
            return Err(Error::Numerical { step: 0, reason: "non-finite amplitude in initial state".into() });
        }
        let count = settings.snapshot_count();
        let dt = settings.dt;
        let t0 = initial.time;
        let mut y = pack(initial);
        let norm0 = initial.norm();
        let mut snaps = Vec::with_capacity(count);
        snaps.push(initial.clone());
        let mut step = 0usize;
        for _ in 1..count {
            for _ in 0..settings.record_every {
                let t = t0 + step as f64 * dt;
                let norm = self.advance(&mut y, t, dt);
                step += 1;
                if !norm.is_finite() {
                    return Err(Error::Numerical { step, reason: "NaN or Inf in amplitudes".into() });
                }
                if norm0 > 0.0 {
                    let elapsed = step as f64 * dt;
                    let drift = (norm * (self.gamma * elapsed).exp() / norm0 - 1.0).abs();
                    if drift > NORM_DRIFT_LIMIT {
                        return Err(Error::NormDrift { step, drift, limit: NORM_DRIFT_LIMIT });
                    }
                }
            }
            snaps.push(unpack(&y, t0 + step as f64 * dt));
        }
        Ok(snaps)
    }
}

/// Advances `state` by one step of `settings.dt` starting at time `t`.
pub fn step(
    state: &AmplitudeState,
    params: &ChainParams,
    settings: &IntegrationSettings,
    t: f64,
) -> Result<AmplitudeState> {
    check_len(state, params)?;
    if !state.is_finite() {
        return Err(Error::Numerical { step: 0, reason: "non-finite amplitude in state".into() });
    }
    let mut prop = Propagator::new(params);
    let mut y = pack(state);
    let norm = prop.advance(&mut y, t, settings.dt);
    if !norm.is_finite() {
        return Err(Error::Numerical { step: 1, reason: "NaN or Inf in amplitudes".into() });
    }
    Ok(unpack(&y, t + settings.dt))
}

/// Time-sampled solution of one scenario.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: ChainParams,
    pub settings: IntegrationSettings,
    pub snapshots: Vec<AmplitudeState>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    /// Largest relative norm deviation from the initial norm, after removing
    /// the `exp(-gamma t)` decay.
    pub fn max_norm_drift(&self) -> f64 {
        let n0 = self.snapshots[0].norm();
        let t0 = self.snapshots[0].time;
        self.snapshots
            .iter()
            .map(|s| (s.norm() * (self.params.gamma * (s.time - t0)).exp() / n0 - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn last(&self) -> &AmplitudeState {
        self.snapshots.last().expect("trajectory always holds the initial state")
    }
}

/// Integrates `initial` with the parameters' own tilt origin.
pub fn evolve(
    initial: &AmplitudeState,
    params: &ChainParams,
    settings: &IntegrationSettings,
) -> Result<Trajectory> {
    params.validate()?;
    settings.validate(params)?;
    check_len(initial, params)?;
    let snapshots = Propagator::new(params).run(initial, settings)?;
    Ok(Trajectory { params: params.clone(), settings: settings.clone(), snapshots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_initial_state, GaussianPacket};
    use std::f64::consts::PI;

    fn atom(mode: Mode) -> ChainParams {
        ChainParams {
            n_sites: 1,
            t_a: 0.0,
            t_b: 0.0,
            bloch: 0.0,
            rabi: 0.8,
            mode,
            ..ChainParams::default()
        }
    }

    fn excited_atom() -> AmplitudeState {
        let mut s = AmplitudeState::zeros(1);
        s.excited[0] = Complex64::new(1.0, 0.0);
        s
    }

    #[test]
    fn single_atom_derivative() {
        let (da, db) = derivative(&excited_atom(), &atom(Mode::Full), 0.0).unwrap();
        assert!((da[0] - Complex64::new(0.0, -0.5)).norm() < 1e-15);
        assert!((db[0] - Complex64::new(0.0, 0.8)).norm() < 1e-15);
    }

    #[test]
    fn decoupled_bands_without_rabi() {
        let params = ChainParams { rabi: 0.0, n_sites: 16, ..ChainParams::default() };
        let mut s = make_initial_state(&params, &GaussianPacket { center_site: 8.0, width_sites: 3.0, ..Default::default() }).unwrap();
        // only the excited band populated: ground derivative must vanish identically
        let (_, db) = derivative(&s, &params, 0.37).unwrap();
        assert!(db.iter().all(|z| *z == ZERO));
        s.ground = s.excited.clone();
        s.excited = vec![ZERO; 16];
        let (da, _) = derivative(&s, &params, 1.3).unwrap();
        assert!(da.iter().all(|z| *z == ZERO));
    }

    #[test]
    fn loss_shifts_derivative_by_half_gamma() {
        let lossless = ChainParams { n_sites: 12, ..ChainParams::default() };
        let lossy = ChainParams { gamma: 1.0 / 30.0, ..lossless.clone() };
        let mut s = make_initial_state(&lossless, &GaussianPacket { center_site: 5.0, width_sites: 2.0, phase_per_site: 0.4, ..Default::default() }).unwrap();
        s.ground = s.excited.iter().rev().map(|z| z * 0.3).collect();
        for mode in [Mode::Full, Mode::Rwa, Mode::Stark] {
            let (a0, b0) = derivative(&s, &ChainParams { mode, ..lossless.clone() }, 0.9).unwrap();
            let (a1, b1) = derivative(&s, &ChainParams { mode, ..lossy.clone() }, 0.9).unwrap();
            for j in 0..12 {
                let want_a = a0[j] - s.excited[j] * (lossy.gamma / 2.0);
                let want_b = b0[j] - s.ground[j] * (lossy.gamma / 2.0);
                assert!((a1[j] - want_a).norm() < 1e-15);
                assert!((b1[j] - want_b).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn nan_state_rejected() {
        let mut s = excited_atom();
        s.ground[0] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(derivative(&s, &atom(Mode::Full), 0.0), Err(Error::Numerical { .. })));
    }

    #[test]
    fn periodic_neighbours_wrap() {
        let params = ChainParams { n_sites: 4, rabi: 0.0, bloch: 0.0, omega0: 1.0, t_a: 1.0, boundary: Boundary::Periodic, ..ChainParams::default() };
        let mut s = AmplitudeState::zeros(4);
        s.excited[0] = Complex64::new(1.0, 0.0);
        let (da, _) = derivative(&s, &params, 0.0).unwrap();
        // sites 1 and 3 are neighbours of 0 on the ring
        assert!((da[1] - Complex64::new(0.0, -1.0)).norm() < 1e-15);
        assert!((da[3] - Complex64::new(0.0, -1.0)).norm() < 1e-15);
        assert_eq!(da[2], ZERO);
        let open = ChainParams { boundary: Boundary::Open, ..params };
        let (da, _) = derivative(&s, &open, 0.0).unwrap();
        assert_eq!(da[3], ZERO);
    }

    #[test]
    fn rk4_step_matches_phase_rotation() {
        let params = ChainParams { rabi: 0.0, ..atom(Mode::Full) };
        let settings = IntegrationSettings { dt: 0.05, t_end: 0.05, record_every: 1, scheme: Scheme::Rk4 };
        let s = step(&excited_atom(), &params, &settings, 0.0).unwrap();
        let exact = Complex64::from_polar(1.0, -0.5 * 0.05);
        // local error of RK4 is (z^5)/120 with z = 0.025
        assert!((s.excited[0] - exact).norm() < 1e-10);
        assert_eq!(s.time, 0.05);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let params = ChainParams { n_sites: 24, bloch: 0.05, ..ChainParams::default() };
        let init = make_initial_state(&params, &GaussianPacket { center_site: 12.0, width_sites: 3.0, ..Default::default() }).unwrap();
        let run = |dt: f64| {
            let steps = (2.0 / dt).round() as usize;
            let settings = IntegrationSettings { dt, t_end: 2.0, record_every: steps, scheme: Scheme::Rk4 };
            evolve(&init, &params, &settings).unwrap().last().clone()
        };
        let reference = run(0.025 / 8.0);
        let e1 = run(0.025).max_abs_diff(&reference);
        let e2 = run(0.0125).max_abs_diff(&reference);
        let ratio = e1 / e2;
        assert!((12.0..20.0).contains(&ratio), "convergence ratio {ratio}");
    }

    #[test]
    fn single_step_norm_change_is_tiny() {
        let params = ChainParams::default();
        let init = make_initial_state(&params, &GaussianPacket::default()).unwrap();
        let settings = IntegrationSettings::auto(&params, 1.0);
        assert!(settings.dt * params.lambda_max() <= STEP_BUDGET + 1e-15);
        let s = step(&init, &params, &settings, 0.0).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rwa_single_atom_flop() {
        let params = atom(Mode::Rwa);
        let t_end = PI / params.rabi;
        let dt = t_end / 4000.0;
        let settings = IntegrationSettings { dt, t_end, record_every: 4000, scheme: Scheme::Rk4 };
        let traj = evolve(&excited_atom(), &params, &settings).unwrap();
        assert_eq!(traj.snapshots.len(), 2);
        assert!((traj.last().ground[0].norm_sqr() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn snapshot_times_and_count() {
        let params = atom(Mode::Full);
        let settings = IntegrationSettings { dt: 0.01, t_end: 1.0, record_every: 7, scheme: Scheme::Rk4 };
        let traj = evolve(&excited_atom(), &params, &settings).unwrap();
        assert_eq!(traj.snapshots.len(), (1.0f64 / 0.07).floor() as usize + 1);
        for (k, s) in traj.snapshots.iter().enumerate() {
            assert_eq!(s.time, (k * 7) as f64 * 0.01);
        }
    }

    #[test]
    fn oversized_step_rejected() {
        let params = ChainParams::default();
        let settings = IntegrationSettings { dt: 0.5, t_end: 1.0, record_every: 1, scheme: Scheme::Rk4 };
        let init = make_initial_state(&params, &GaussianPacket::default()).unwrap();
        assert!(matches!(evolve(&init, &params, &settings), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn norm_drift_guard_trips() {
        // a stable but inaccurate step: the guard must fire, not silently decay
        let params = ChainParams { n_sites: 1, t_a: 0.0, t_b: 0.0, bloch: 0.0, rabi: 0.0, omega0: 1.0, ..ChainParams::default() };
        let settings = IntegrationSettings { dt: 0.2, t_end: 2000.0, record_every: 1, scheme: Scheme::Rk4 };
        let mut prop = Propagator::new(&params);
        match prop.run(&excited_atom(), &settings) {
            Err(Error::NormDrift { step, .. }) => assert!(step > 1),
            other => panic!("expected norm drift, got {other:?}"),
        }
    }
}
