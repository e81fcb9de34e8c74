//! Per-site observables derived from amplitude states.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::model::{AmplitudeState, Boundary, ChainParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservableKind {
    Current,
    Inversion,
    Dipole,
    Centroid,
    Norm,
}

impl ObservableKind {
    pub fn per_site(self) -> bool {
        matches!(self, Self::Current | Self::Inversion | Self::Dipole)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Current => "current",
            Self::Inversion => "inversion",
            Self::Dipole => "dipole",
            Self::Centroid => "centroid",
            Self::Norm => "norm",
        }
    }
}

impl std::str::FromStr for ObservableKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "current" => Ok(Self::Current),
            "inversion" => Ok(Self::Inversion),
            "dipole" => Ok(Self::Dipole),
            "centroid" => Ok(Self::Centroid),
            "norm" => Ok(Self::Norm),
            other => Err(Error::Observable(format!(
                "unknown observable '{other}' (expected current, inversion, dipole, centroid, norm)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSeries {
    pub kind: ObservableKind,
    pub site: Option<usize>,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

fn neighbour_difference(v: &[Complex64], j: usize, periodic: bool) -> Complex64 {
    let n = v.len();
    let zero = Complex64::new(0.0, 0.0);
    let right = if j + 1 < n {
        v[j + 1]
    } else if periodic {
        v[(j + 1) % n]
    } else {
        zero
    };
    let left = if j > 0 {
        v[j - 1]
    } else if periodic {
        v[n - 1]
    } else {
        zero
    };
    right - left
}

/// Tunnelling current density
/// `J_p = i/2 [t_a (a_{p+1} - a_{p-1}) a_p* + t_b (b_{p+1} - b_{p-1}) b_p*] + c.c.`
///
/// Open ends drop the missing neighbour (one-sided sums).
pub fn tunneling_current_density(state: &AmplitudeState, params: &ChainParams) -> Vec<f64> {
    let periodic = params.boundary == Boundary::Periodic;
    (0..state.n_sites())
        .map(|j| {
            let za = neighbour_difference(&state.excited, j, periodic) * state.excited[j].conj();
            let zb = neighbour_difference(&state.ground, j, periodic) * state.ground[j].conj();
            let bracket = za * params.t_a + zb * params.t_b;
            // i/2 z + c.c. = -Im(z)
            -bracket.im
        })
        .collect()
}

/// `w_p = |a_p|^2 - |b_p|^2`
pub fn inversion_density(state: &AmplitudeState) -> Vec<f64> {
    state.excited.iter().zip(&state.ground).map(|(a, b)| a.norm_sqr() - b.norm_sqr()).collect()
}

/// Transition dipole density `d_p = 2 Re(a_p b_p*)` in units of the dipole matrix element.
pub fn dipole_density(state: &AmplitudeState) -> Vec<f64> {
    state.excited.iter().zip(&state.ground).map(|(a, b)| 2.0 * (a * b.conj()).re).collect()
}

/// Probability-weighted mean site index.
pub fn centroid(state: &AmplitudeState) -> Result<f64> {
    let norm = state.norm();
    if norm <= 0.0 {
        return Err(Error::Observable("centroid of a zero-norm state".into()));
    }
    let first: f64 = state
        .excited
        .iter()
        .zip(&state.ground)
        .enumerate()
        .map(|(j, (a, b))| j as f64 * (a.norm_sqr() + b.norm_sqr()))
        .sum();
    Ok(first / norm)
}

/// Samples one observable at every snapshot of `trajectory`.
pub fn extract_series(trajectory: &Trajectory, kind: ObservableKind, site: Option<usize>) -> Result<ObservableSeries> {
    let n = trajectory.params.n_sites;
    let site = if kind.per_site() {
        match site {
            Some(j) if j < n => Some(j),
            Some(j) => return Err(Error::Observable(format!("site {j} out of range 0..{n}"))),
            None => return Err(Error::Observable(format!("observable '{}' needs a site", kind.name()))),
        }
    } else {
        None
    };
    let times = trajectory.times();
    let values = trajectory
        .snapshots
        .iter()
        .map(|s| -> Result<f64> {
            Ok(match (kind, site) {
                (ObservableKind::Current, Some(j)) => tunneling_current_density(s, &trajectory.params)[j],
                (ObservableKind::Inversion, Some(j)) => s.excited[j].norm_sqr() - s.ground[j].norm_sqr(),
                (ObservableKind::Dipole, Some(j)) => 2.0 * (s.excited[j] * s.ground[j].conj()).re,
                (ObservableKind::Centroid, _) => centroid(s)?,
                (ObservableKind::Norm, _) => s.norm(),
                _ => unreachable!("per-site kinds always carry a site"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ObservableSeries { kind, site, times, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_initial_state, GaussianPacket};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn ring(n: usize) -> ChainParams {
        ChainParams { n_sites: n, boundary: Boundary::Periodic, ..ChainParams::default() }
    }

    #[test]
    fn single_site_has_no_current() {
        let mut s = AmplitudeState::zeros(10);
        s.excited[4] = Complex64::new(0.6, 0.3);
        s.ground[4] = Complex64::new(0.1, -0.7);
        assert!(tunneling_current_density(&s, &ChainParams { n_sites: 10, ..Default::default() }).iter().all(|&j| j == 0.0));
    }

    #[test]
    fn real_amplitudes_carry_no_current() {
        let params = ChainParams { n_sites: 32, ..Default::default() };
        let s = make_initial_state(&params, &GaussianPacket { center_site: 15.0, width_sites: 4.0, ..Default::default() }).unwrap();
        assert!(tunneling_current_density(&s, &params).iter().all(|j| j.abs() < 1e-18));
    }

    #[test]
    fn plane_wave_current() {
        let n = 64;
        let params = ring(n);
        let phi = 2.0 * PI * 5.0 / n as f64;
        let (amp_a, amp_b) = (Complex64::new(0.6, 0.2), Complex64::new(-0.3, 0.5));
        let mut s = AmplitudeState::zeros(n);
        for j in 0..n {
            let e = Complex64::from_polar(1.0 / (n as f64).sqrt(), j as f64 * phi);
            s.excited[j] = amp_a * e;
            s.ground[j] = amp_b * e;
        }
        let want = -2.0 * phi.sin() * (params.t_a * amp_a.norm_sqr() + params.t_b * amp_b.norm_sqr()) / n as f64;
        for j in tunneling_current_density(&s, &params) {
            assert!((j - want).abs() < 1e-15);
        }
    }

    #[test]
    fn inversion_and_dipole_examples() {
        let params = ChainParams { n_sites: 40, ..Default::default() };
        let s = make_initial_state(&params, &GaussianPacket { center_site: 20.0, width_sites: 5.0, ..Default::default() }).unwrap();
        assert!((inversion_density(&s).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(dipole_density(&s).iter().all(|&d| d == 0.0));

        let n = 8;
        let mut mixed = AmplitudeState::zeros(n);
        let c = Complex64::new((1.0 / (2.0 * n as f64)).sqrt(), 0.0);
        mixed.excited = vec![c; n];
        mixed.ground = vec![c; n];
        assert!(inversion_density(&mixed).iter().all(|w| w.abs() < 1e-16));
        for d in dipole_density(&mixed) {
            assert!((d - 1.0 / n as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn centroid_examples() {
        // 161 sites: the packet at 80 is symmetric about the chain centre
        let params = ChainParams { n_sites: 161, ..Default::default() };
        let s = make_initial_state(&params, &GaussianPacket::default()).unwrap();
        assert!((centroid(&s).unwrap() - 80.0).abs() < 1e-9);
        let mut single = AmplitudeState::zeros(10);
        single.ground[5] = Complex64::new(0.0, 1.0);
        assert_eq!(centroid(&single).unwrap(), 5.0);
        assert!(centroid(&AmplitudeState::zeros(3)).is_err());
    }

    #[test]
    fn unknown_observable_name() {
        assert!("voltage".parse::<ObservableKind>().is_err());
        assert_eq!("dipole".parse::<ObservableKind>().unwrap(), ObservableKind::Dipole);
    }

    fn arb_state(n: usize) -> impl Strategy<Value = AmplitudeState> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2 * n).prop_map(move |v| {
            let z: Vec<Complex64> = v.into_iter().map(|(r, i)| Complex64::new(r, i)).collect();
            AmplitudeState { time: 0.0, excited: z[..n].to_vec(), ground: z[n..].to_vec() }
        })
    }

    proptest! {
        #[test]
        fn observables_are_gauge_invariant(s in arb_state(12), theta in 0.0f64..(2.0 * PI), periodic in any::<bool>()) {
            let params = ChainParams {
                n_sites: 12,
                boundary: if periodic { Boundary::Periodic } else { Boundary::Open },
                ..Default::default()
            };
            let r = s.scaled(Complex64::from_polar(1.0, theta));
            for (x, y) in tunneling_current_density(&s, &params).iter().zip(tunneling_current_density(&r, &params)) {
                prop_assert!((x - y).abs() < 1e-14);
            }
            for (x, y) in inversion_density(&s).iter().zip(inversion_density(&r)) {
                prop_assert!((x - y).abs() < 1e-14);
            }
            for (x, y) in dipole_density(&s).iter().zip(dipole_density(&r)) {
                prop_assert!((x - y).abs() < 1e-14);
            }
            prop_assert!((centroid(&s).unwrap() - centroid(&r).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn inversion_plus_ground_is_norm(s in arb_state(9)) {
            let w: f64 = inversion_density(&s).iter().sum();
            let g: f64 = s.ground.iter().map(|z| z.norm_sqr()).sum();
            prop_assert!((w + 2.0 * g - s.norm()).abs() < 1e-12);
        }
    }
}
