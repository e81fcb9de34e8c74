//! Floquet analysis of the plane-wave reduced, tilt-free driven two-level problem.
//!
//! For a phase `phi` per cell the chain reduces to the 2x2 Hamiltonian
//! `[[w0/2 + 2 t_a cos phi, -R cos wt], [-R cos wt, -w0/2 + 2 t_b cos phi]]`,
//! with the off-diagonal replaced by the rotating-wave or static coupling in
//! the other modes.
//! Its one-period propagator (monodromy) gives the quasi-energies whose mean
//! splitting over `phi` sets the `p` spacing of the spectral comb
//! `m w0 + n B + p Omega_bar`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result, Violation};
use crate::model::{ChainParams, Mode};

pub type Mat2 = [[Complex64; 2]; 2];

pub const DEFAULT_STEPS_PER_PERIOD: usize = 4096;
const UNITARITY_LIMIT: f64 = 1e-8;
const DEGENERACY_LIMIT: f64 = 1e-12;
/// Largest phase increment used when tracking branches from `pi/2`.
const TRACKING_STEP: f64 = 2.0 * PI / 512.0;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn adjoint(a: &Mat2) -> Mat2 {
    [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
}

fn axpy(a: &Mat2, s: Complex64, b: &Mat2) -> Mat2 {
    let mut out = *a;
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] += s * b[i][j];
        }
    }
    out
}

/// Frobenius norm of `M^dag M - I`.
pub fn unitarity_residual(m: &Mat2) -> f64 {
    let p = mul(&adjoint(m), m);
    let mut s = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let id = if i == j { ONE } else { ZERO };
            s += (p[i][j] - id).norm_sqr();
        }
    }
    s.sqrt()
}

pub fn det(m: &Mat2) -> Complex64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub fn eigenvalues(m: &Mat2) -> (Complex64, Complex64) {
    let half_tr = (m[0][0] + m[1][1]) / 2.0;
    let disc = (half_tr * half_tr - det(m)).sqrt();
    (half_tr + disc, half_tr - disc)
}

fn band_energies(phi: f64, params: &ChainParams) -> (f64, f64) {
    let c = phi.cos();
    (params.omega0 / 2.0 + 2.0 * params.t_a * c, -params.omega0 / 2.0 + 2.0 * params.t_b * c)
}

pub fn reduced_hamiltonian(phi: f64, t: f64, params: &ChainParams) -> Mat2 {
    let (ea, eb) = band_energies(phi, params);
    let (ab, ba) = match params.mode {
        Mode::Full => {
            let c = Complex64::new(-params.rabi * (params.drive_freq * t).cos(), 0.0);
            (c, c)
        }
        Mode::Rwa => {
            let e = Complex64::from_polar(params.rabi / 2.0, -params.drive_freq * t);
            (-e, -e.conj())
        }
        Mode::Stark => {
            let c = Complex64::new(-params.rabi, 0.0);
            (c, c)
        }
    };
    [[Complex64::new(ea, 0.0), ab], [ba, Complex64::new(eb, 0.0)]]
}

fn drive_period(params: &ChainParams) -> Result<f64> {
    if !(params.drive_freq > 0.0) {
        return Err(Error::InvalidParams(vec![Violation::new(
            "drive_freq",
            "Floquet analysis needs drive_freq > 0",
        )]));
    }
    Ok(2.0 * PI / params.drive_freq)
}

/// One-period propagator `M` with `i dM/dt = H(t) M`, `M(0) = I`.
///
/// The scalar part `(E_a + E_b)/2` of `H` is time independent and commutes
/// with everything, so it is applied as an exact phase and RK4 only
/// integrates the traceless remainder.
pub fn monodromy(phi: f64, params: &ChainParams, steps_per_period: usize) -> Result<Mat2> {
    let period = drive_period(params)?;
    let (ea, eb) = band_energies(phi, params);
    let mean = 0.5 * (ea + eb);
    let traceless = |t: f64| -> Mat2 {
        let mut h = reduced_hamiltonian(phi, t, params);
        h[0][0] -= mean;
        h[1][1] -= mean;
        h
    };
    // dM/dt = -i H M
    let f = |t: f64, m: &Mat2| -> Mat2 {
        let hm = mul(&traceless(t), m);
        [[-I * hm[0][0], -I * hm[0][1]], [-I * hm[1][0], -I * hm[1][1]]]
    };
    let steps = steps_per_period.max(1);
    let dt = period / steps as f64;
    let mut m: Mat2 = [[ONE, ZERO], [ZERO, ONE]];
    for k in 0..steps {
        let t = k as f64 * dt;
        let h = Complex64::new(dt, 0.0);
        let k1 = f(t, &m);
        let k2 = f(t + dt / 2.0, &axpy(&m, h / 2.0, &k1));
        let k3 = f(t + dt / 2.0, &axpy(&m, h / 2.0, &k2));
        let k4 = f(t + dt, &axpy(&m, h, &k3));
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] += h / 6.0 * (k1[i][j] + 2.0 * k2[i][j] + 2.0 * k3[i][j] + k4[i][j]);
            }
        }
    }
    let residual = unitarity_residual(&m);
    if residual > UNITARITY_LIMIT {
        return Err(Error::Accuracy { residual });
    }
    let phase = Complex64::from_polar(1.0, -mean * period);
    for row in &mut m {
        for z in row.iter_mut() {
            *z *= phase;
        }
    }
    Ok(m)
}

/// Folds `x` into `(-w/2, w/2]`.
pub fn fold(x: f64, w: f64) -> f64 {
    let y = x.rem_euclid(w);
    if y > w / 2.0 {
        y - w
    } else {
        y
    }
}

/// Quasi-energies at one `phi`: folded into the first zone, and unwrapped
/// continuously from `phi = pi/2` with `nu1` on the upper dressed branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiEnergyPair {
    pub phi: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub unwrapped1: f64,
    pub unwrapped2: f64,
    pub degenerate: bool,
}

impl QuasiEnergyPair {
    pub fn splitting(&self) -> f64 {
        self.unwrapped1 - self.unwrapped2
    }
}

/// Tracks the two rotating-frame quasi-energies of the traceless problem
/// along an ordered sequence of phases.
struct BranchTracker {
    history: Vec<(f64, f64)>,
}

impl BranchTracker {
    fn new() -> Self {
        Self { history: Vec::new() }
    }

    fn predict(&self) -> Option<(f64, f64)> {
        match self.history.as_slice() {
            [] => None,
            [only] => Some(*only),
            [.., prev, last] => Some((2.0 * last.0 - prev.0, 2.0 * last.1 - prev.1)),
        }
    }

    /// `r` are the folded rotating-frame values of the two eigenvalues.
    fn push(&mut self, r: (f64, f64), w: f64) -> (f64, f64) {
        let next = match self.predict() {
            None => {
                if r.0 >= r.1 {
                    r
                } else {
                    (r.1, r.0)
                }
            }
            Some((p1, p2)) => {
                let lift = |x: f64, target: f64| x + w * ((target - x) / w).round();
                // pick the eigenvalue assignment with the smaller total jump
                let a = (lift(r.0, p1), lift(r.1, p2));
                let b = (lift(r.1, p1), lift(r.0, p2));
                let cost = |c: (f64, f64)| (c.0 - p1).abs() + (c.1 - p2).abs();
                if cost(a) <= cost(b) {
                    a
                } else {
                    b
                }
            }
        };
        self.history.push(next);
        next
    }
}

fn sweep(phis: &[f64], params: &ChainParams, steps: usize) -> Result<Vec<QuasiEnergyPair>> {
    let period = drive_period(params)?;
    let w = params.drive_freq;
    let mut tracker = BranchTracker::new();
    let mut out = Vec::with_capacity(phis.len());
    for &phi in phis {
        let (ea, eb) = band_energies(phi, params);
        let mean = 0.5 * (ea + eb);
        let m = monodromy(phi, params, steps)?;
        let (l1, l2) = eigenvalues(&m);
        let degenerate = (l1 - l2).norm() < DEGENERACY_LIMIT;
        // strip the exact scalar phase, then shift to the rotating frame
        let q1 = -l1.arg() / period - mean;
        let q2 = -l2.arg() / period - mean;
        let (u1, u2) = tracker.push((fold(q1 - w / 2.0, w), fold(q2 - w / 2.0, w)), w);
        let (n1, n2) = (u1 + w / 2.0 + mean, u2 + w / 2.0 + mean);
        out.push(QuasiEnergyPair { phi, nu1: fold(n1, w), nu2: fold(n2, w), unwrapped1: n1, unwrapped2: n2, degenerate });
    }
    Ok(out)
}

/// Quasi-energies at `phi`, branch-tracked along the straight path from `pi/2`.
pub fn quasi_energies(phi: f64, params: &ChainParams) -> Result<QuasiEnergyPair> {
    quasi_energies_with(phi, params, DEFAULT_STEPS_PER_PERIOD)
}

pub fn quasi_energies_with(phi: f64, params: &ChainParams, steps: usize) -> Result<QuasiEnergyPair> {
    let start = PI / 2.0;
    let n = ((phi - start).abs() / TRACKING_STEP).ceil() as usize;
    let path: Vec<f64> = (0..=n).map(|k| start + (phi - start) * k as f64 / n.max(1) as f64).collect();
    let pairs = sweep(&path, params, steps)?;
    Ok(*pairs.last().expect("path is never empty"))
}

/// Phase average of the unwrapped quasi-energy splitting on `n_phi` points.
pub fn mean_ro_frequency_floquet(params: &ChainParams, n_phi: usize) -> Result<f64> {
    mean_ro_frequency_floquet_with(params, n_phi, DEFAULT_STEPS_PER_PERIOD)
}

pub fn mean_ro_frequency_floquet_with(params: &ChainParams, n_phi: usize, steps: usize) -> Result<f64> {
    if n_phi < 64 {
        return Err(Error::InvalidParams(vec![Violation::new("n_phi", "n_phi must be ≥ 64")]));
    }
    // refine the tracking grid so consecutive phases stay close
    let sub = ((2.0 * PI / n_phi as f64) / TRACKING_STEP).ceil().max(1.0) as usize;
    let fine = n_phi * sub;
    let phis: Vec<f64> = (0..fine).map(|k| PI / 2.0 + 2.0 * PI * k as f64 / fine as f64).collect();
    let pairs = sweep(&phis, params, steps)?;
    let total: f64 = pairs.iter().step_by(sub).map(QuasiEnergyPair::splitting).sum();
    Ok(total / n_phi as f64)
}

/// One member `m w0 + n B + p Omega_bar` of the predicted comb.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PredictedLine {
    pub freq: f64,
    pub m: i32,
    pub n: i32,
    pub p: i32,
}

/// Ordering used to pick among comb members: fewest total quanta, then
/// smallest `|p|`, `|n|`, `|m|`, then the signed triple.
pub fn label_rank(m: i32, n: i32, p: i32) -> (i32, i32, i32, i32, i32, i32, i32) {
    (m.abs() + n.abs() + p.abs(), p.abs(), n.abs(), m.abs(), m, n, p)
}

pub fn comb_frequency(omega0: f64, bloch: f64, omega_bar: f64, m: i32, n: i32, p: i32) -> f64 {
    m as f64 * omega0 + n as f64 * bloch + p as f64 * omega_bar
}

/// Nonnegative comb frequencies, deduplicated within 1e-9 and sorted ascending.
pub fn predicted_lines(params: &ChainParams, omega_bar: f64, m_max: u32, n_max: u32) -> Vec<PredictedLine> {
    let (mm, nm) = (m_max as i32, n_max as i32);
    let mut all = Vec::new();
    for m in -mm..=mm {
        for n in -nm..=nm {
            for p in -1..=1 {
                let freq = comb_frequency(params.omega0, params.bloch, omega_bar, m, n, p);
                if freq >= -1e-12 {
                    all.push(PredictedLine { freq: freq.max(0.0), m, n, p });
                }
            }
        }
    }
    all.sort_by(|a, b| a.freq.total_cmp(&b.freq).then(label_rank(a.m, a.n, a.p).cmp(&label_rank(b.m, b.n, b.p))));
    let mut out: Vec<PredictedLine> = Vec::new();
    let mut i = 0;
    while i < all.len() {
        let mut j = i + 1;
        while j < all.len() && all[j].freq - all[i].freq <= 1e-9 {
            j += 1;
        }
        let best = all[i..j].iter().min_by_key(|l| label_rank(l.m, l.n, l.p)).copied().expect("non-empty group");
        out.push(PredictedLine { freq: all[i].freq, ..best });
        i = j;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::mean_ro_frequency_rwa;
    use proptest::prelude::*;

    fn fig3() -> ChainParams {
        ChainParams::default()
    }

    #[test]
    fn hamiltonian_examples() {
        let p = fig3();
        let h = reduced_hamiltonian(0.4, PI / (2.0 * p.drive_freq), &p);
        assert!(h[0][1].norm() < 1e-15 && h[1][0].norm() < 1e-15);
        let h = reduced_hamiltonian(PI / 2.0, 0.3, &p);
        assert!((h[0][0].re - 0.5).abs() < 1e-15 && (h[1][1].re + 0.5).abs() < 1e-15);
        let h = reduced_hamiltonian(0.4, 0.3, &ChainParams { mode: Mode::Rwa, ..p.clone() });
        assert!((h[0][1] - h[1][0].conj()).norm() < 1e-15);
        assert!((h[0][1].norm() - 0.4).abs() < 1e-15);
        let h = reduced_hamiltonian(0.4, 0.3, &ChainParams { mode: Mode::Stark, ..p });
        assert_eq!(h[0][1], Complex64::new(-0.8, 0.0));
    }

    #[test]
    fn rwa_floquet_splitting_is_the_rabi_frequency() {
        let p = ChainParams { mode: Mode::Rwa, ..fig3() };
        for phi in [0.0, 0.4, 1.2, 2.5] {
            let q = quasi_energies(phi, &p).unwrap();
            let want = crate::analytics::mode_info(phi, &p).unwrap().big_omega;
            assert!((q.splitting().abs() - want).abs() < 1e-8, "phi {phi}: {} vs {want}", q.splitting());
        }
    }

    #[test]
    fn monodromy_without_rabi_is_diagonal() {
        let p = ChainParams { rabi: 0.0, ..fig3() };
        let t = 2.0 * PI;
        for phi in [0.0, 0.5, 2.0, -1.3] {
            let m = monodromy(phi, &p, DEFAULT_STEPS_PER_PERIOD).unwrap();
            let (ea, eb) = band_energies(phi, &p);
            assert!((m[0][0] - Complex64::from_polar(1.0, -ea * t)).norm() < 1e-8);
            assert!((m[1][1] - Complex64::from_polar(1.0, -eb * t)).norm() < 1e-8);
            assert!(m[0][1].norm() < 1e-15 && m[1][0].norm() < 1e-15);
        }
    }

    #[test]
    fn determinant_follows_trace() {
        let p = fig3();
        for phi in [0.0, 1.0, 2.7] {
            let m = monodromy(phi, &p, DEFAULT_STEPS_PER_PERIOD).unwrap();
            let (ea, eb) = band_energies(phi, &p);
            assert!((det(&m) - Complex64::from_polar(1.0, -(ea + eb) * 2.0 * PI)).norm() < 1e-10);
        }
    }

    #[test]
    fn coarse_steps_fail_unitarity() {
        let p = ChainParams { rabi: 0.8, t_a: 7.0, t_b: 0.0, ..fig3() };
        assert!(matches!(monodromy(0.0, &p, 8), Err(Error::Accuracy { .. })));
    }

    #[test]
    fn quasi_energies_without_rabi() {
        let p = ChainParams { rabi: 0.0, ..fig3() };
        for phi in [0.0, 0.8, 2.2] {
            let q = quasi_energies(phi, &p).unwrap();
            let (ea, eb) = band_energies(phi, &p);
            let got = [q.nu1, q.nu2];
            let want = [fold(ea, 1.0), fold(eb, 1.0)];
            for w in want {
                assert!(got.iter().any(|g| (g - w).abs() < 1e-8), "{got:?} vs {want:?}");
            }
            // the crossing at pi/2 is exact, so only the splitting modulo w is fixed
            let s = q.splitting();
            assert!(fold(s - (ea - eb), 1.0).abs() < 1e-8 || fold(s + (ea - eb), 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn weak_drive_splitting() {
        let p = ChainParams { t_a: 0.0, t_b: 0.0, rabi: 0.05, bloch: 0.0, ..fig3() };
        let q = quasi_energies(0.3, &p).unwrap();
        assert!((q.splitting() - 0.05).abs() < 1e-3);
        for v in [q.nu1, q.nu2] {
            assert!(v > -0.5 && v <= 0.5);
        }
    }

    #[test]
    fn weak_coupling_matches_rwa_mean() {
        let p = ChainParams { rabi: 0.05, t_a: 0.02, t_b: 0.02, ..fig3() };
        let fl = mean_ro_frequency_floquet(&p, 64).unwrap();
        let rwa = mean_ro_frequency_rwa(&p);
        assert!(((fl - rwa) / rwa).abs() < 0.05);
        assert!((fl - 0.05).abs() < 0.05 * 0.05);
        let fl2 = mean_ro_frequency_floquet(&p, 128).unwrap();
        assert!((fl2 - fl).abs() < 1e-6);
    }

    #[test]
    fn n_phi_lower_bound() {
        assert!(mean_ro_frequency_floquet(&fig3(), 32).is_err());
    }

    #[test]
    fn comb_examples() {
        let p = fig3();
        let lines = predicted_lines(&p, 0.945, 1, 1);
        let has = |f: f64, m, n, q| lines.iter().any(|l| (l.freq - f).abs() < 1e-12 && (l.m, l.n, l.p) == (m, n, q));
        assert!(has(0.04, 0, 1, 0));
        assert!(has(0.945, 0, 0, 1));
        assert!(has(1.0, 1, 0, 0));
        assert!(lines.windows(2).all(|w| w[0].freq < w[1].freq));

        let only = predicted_lines(&p, 0.945, 0, 0);
        assert_eq!(only.len(), 2);
        assert_eq!((only[0].freq, only[1].freq), (0.0, 0.945));
    }

    #[test]
    fn degenerate_comb_collapses() {
        let p = ChainParams { rabi: 0.5, bloch: 0.5, t_a: 5.0, t_b: 5.0, ..fig3() };
        let lines = predicted_lines(&p, 0.5, 2, 8);
        for f in [0.5, 1.0, 1.5] {
            assert_eq!(lines.iter().filter(|l| (l.freq - f).abs() < 1e-9).count(), 1);
        }
        let at = |f: f64| *lines.iter().find(|l| (l.freq - f).abs() < 1e-9).unwrap();
        let l = at(1.5);
        assert_eq!((l.m, l.n, l.p), (1, 1, 0));
        let l = at(1.0);
        assert_eq!((l.m, l.n, l.p), (1, 0, 0));
        // all combinations are multiples of 0.5: far fewer distinct lines than raw triples
        assert!(lines.len() < 30);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn monodromy_is_unitary(phi in -PI..PI, rabi in 0.0f64..1.0, t_a in -2.0f64..2.0, t_b in -2.0f64..2.0) {
            let p = ChainParams { rabi, t_a, t_b, ..ChainParams::default() };
            let m = monodromy(phi, &p, DEFAULT_STEPS_PER_PERIOD).unwrap();
            prop_assert!(unitarity_residual(&m) < 1e-10);
        }

        #[test]
        fn quasi_energies_are_even(phi in 0.05f64..3.0) {
            let p = ChainParams::default();
            let a = quasi_energies_with(phi, &p, 1024).unwrap();
            let b = quasi_energies_with(-phi, &p, 1024).unwrap();
            prop_assert!((a.nu1 - b.nu1).abs() < 1e-10);
            prop_assert!((a.splitting() - b.splitting()).abs() < 1e-10);
        }
    }
}
