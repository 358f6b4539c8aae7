//! RICS element state and the diagonal reflection/refraction matrices.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Per-element phases, energy split and amplification.
///
/// Invariant: `beta_r[l] + beta_t[l] == 1` and phases lie in `[0, 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RicsState {
    pub theta_r: Vec<f64>,
    pub theta_t: Vec<f64>,
    pub beta_r: Vec<f64>,
    pub beta_t: Vec<f64>,
    pub psi: Vec<f64>,
}

/// Wraps a phase into `[0, 2π)`.
pub fn wrap_phase(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

impl RicsState {
    /// Zero phases, an even energy split and uniform amplification.
    pub fn identity_split(l: usize, psi: f64) -> Self {
        Self::uniform(l, 0.5, psi)
    }

    pub fn uniform(l: usize, beta_r: f64, psi: f64) -> Self {
        Self {
            theta_r: vec![0.0; l],
            theta_t: vec![0.0; l],
            beta_r: vec![beta_r; l],
            beta_t: vec![1.0 - beta_r; l],
            psi: vec![psi; l],
        }
    }

    /// Builds a state from reflection amplitudes; refraction takes the rest.
    pub fn from_parts(theta_r: Vec<f64>, theta_t: Vec<f64>, beta_r: Vec<f64>, psi: Vec<f64>) -> Result<Self> {
        let l = theta_r.len();
        if theta_t.len() != l || beta_r.len() != l || psi.len() != l {
            return Err(Error::Dimension("RicsState vectors differ in length".into()));
        }
        let all = theta_r.iter().chain(&theta_t).chain(&beta_r).chain(&psi);
        if let Some(v) = all.copied().find(|v| !v.is_finite()) {
            return Err(Error::Constraint { field: "RicsState", bound: "finite values", value: v });
        }
        let beta_r: Vec<f64> = beta_r.into_iter().map(|b| b.clamp(0.0, 1.0)).collect();
        let beta_t = beta_r.iter().map(|b| 1.0 - b).collect();
        Ok(Self {
            theta_r: theta_r.into_iter().map(wrap_phase).collect(),
            theta_t: theta_t.into_iter().map(wrap_phase).collect(),
            beta_r,
            beta_t,
            psi,
        })
    }

    pub fn len(&self) -> usize {
        self.theta_r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta_r.is_empty()
    }

    /// Largest violation of the energy-split and range invariants.
    pub fn split_residual(&self) -> f64 {
        self.beta_r
            .iter()
            .zip(&self.beta_t)
            .map(|(r, t)| {
                let out_r = (-r).max(r - 1.0).max(0.0);
                let out_t = (-t).max(t - 1.0).max(0.0);
                (r + t - 1.0).abs().max(out_r).max(out_t)
            })
            .fold(0.0, f64::max)
    }

    pub fn with_psi(mut self, psi: f64) -> Self {
        self.psi.iter_mut().for_each(|p| *p = psi);
        self
    }
}

/// Diagonal of Φ_r: `sqrt(beta_r) * exp(j theta_r)`.
pub fn phi_r(state: &RicsState) -> Vec<C64> {
    state
        .theta_r
        .iter()
        .zip(&state.beta_r)
        .map(|(&th, &b)| C64::from_polar(b.sqrt(), th))
        .collect()
}

/// Diagonal of Φ_t: `psi * sqrt(beta_t) * exp(j theta_t)`.
pub fn phi_t(state: &RicsState) -> Vec<C64> {
    state
        .theta_t
        .iter()
        .zip(&state.beta_t)
        .zip(&state.psi)
        .map(|((&th, &b), &g)| C64::from_polar(g * b.sqrt(), th))
        .collect()
}

/// Refraction phases that put every cascaded term in anti-phase with the
/// direct interference `h_mn`, returned together with the indices of elements
/// whose cascaded product vanished (those get phase 0).
pub fn interference_nulling_phases(h_mn: C64, h_rn: &[C64], h_mr: &[C64], state: &RicsState) -> (Vec<f64>, Vec<usize>) {
    let target = h_mn.arg() + PI;
    let mut flagged = Vec::new();
    let phases = h_rn
        .iter()
        .zip(h_mr)
        .enumerate()
        .map(|(l, (rn, mr))| {
            let prod = rn.conj() * mr * (state.psi[l] * state.beta_t[l].sqrt());
            if prod.norm() == 0.0 {
                flagged.push(l);
                0.0
            } else {
                wrap_phase(target - prod.arg())
            }
        })
        .collect();
    (phases, flagged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refracted(h_mn: C64, h_rn: &[C64], h_mr: &[C64], st: &RicsState) -> C64 {
        let t = phi_t(st);
        h_mn + h_rn.iter().zip(h_mr).zip(&t).map(|((a, b), p)| a.conj() * p * b).sum::<C64>()
    }

    #[test]
    fn phi_r_boundaries() {
        let st = RicsState::uniform(4, 1.0, 1.0);
        for e in phi_r(&st) {
            assert!((e - C64::new(1.0, 0.0)).norm() < 1e-15);
        }
        let st = RicsState::uniform(4, 0.0, 1.0);
        assert!(phi_r(&st).iter().all(|e| e.norm() == 0.0));
        let mut st = RicsState::uniform(3, 0.5, 1.0);
        st.theta_r = vec![PI; 3];
        for e in phi_r(&st) {
            assert!((e - C64::new(-(0.5f64).sqrt(), 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn phi_t_applies_amplification() {
        let st = RicsState::uniform(5, 0.0, 1.2);
        for e in phi_t(&st) {
            assert!((e - C64::new(1.2, 0.0)).norm() < 1e-15);
        }
        let st = RicsState::uniform(5, 1.0, 1.5);
        assert!(phi_t(&st).iter().all(|e| e.norm() == 0.0));
    }

    #[test]
    fn passive_surface_conserves_energy() {
        let st = RicsState::from_parts(
            vec![0.3, 1.0, 2.0, 5.0],
            vec![1.0, 0.1, 4.0, 6.0],
            vec![0.0, 0.25, 0.7, 1.0],
            vec![1.0; 4],
        )
        .unwrap();
        for (r, t) in phi_r(&st).iter().zip(phi_t(&st)) {
            assert!((r.norm_sqr() + t.norm_sqr() - 1.0).abs() < 1e-15);
        }
        assert!(st.split_residual() < 1e-15);
    }

    #[test]
    fn phases_wrap() {
        assert_eq!(wrap_phase(TAU), 0.0);
        assert!((wrap_phase(-0.5) - (TAU - 0.5)).abs() < 1e-15);
        let st = RicsState::from_parts(vec![7.0], vec![-1.0], vec![0.4], vec![1.0]).unwrap();
        assert!(st.theta_r[0] >= 0.0 && st.theta_r[0] < TAU);
        assert!(st.theta_t[0] >= 0.0 && st.theta_t[0] < TAU);
    }

    #[test]
    fn nulling_real_positive_gives_pi() {
        let st = RicsState::uniform(3, 0.5, 1.0);
        let ones = vec![C64::new(0.3, 0.0); 3];
        let (ph, flagged) = interference_nulling_phases(C64::new(2.0, 0.0), &ones, &ones, &st);
        assert!(flagged.is_empty());
        for p in ph {
            assert!((p - PI).abs() < 1e-12);
        }
    }

    #[test]
    fn nulling_reduces_and_anti_null_increases_interference() {
        let h_mn = C64::from_polar(1.0, 0.7);
        let h_rn: Vec<C64> = (0..6).map(|i| C64::from_polar(0.3, 0.4 * i as f64)).collect();
        let h_mr: Vec<C64> = (0..6).map(|i| C64::from_polar(0.4, -1.1 * i as f64 + 0.2)).collect();
        let mut st = RicsState::uniform(6, 0.2, 1.2);
        // sum of cascade magnitudes = 6 * 1.2 * sqrt(0.8) * 0.12 ≈ 0.77 <= 2|h_mn|
        let (ph, _) = interference_nulling_phases(h_mn, &h_rn, &h_mr, &st);
        st.theta_t = ph.clone();
        let nulled = refracted(h_mn, &h_rn, &h_mr, &st).norm();
        assert!(nulled <= h_mn.norm());
        st.theta_t = ph.iter().map(|p| wrap_phase(p + PI)).collect();
        let anti = refracted(h_mn, &h_rn, &h_mr, &st).norm();
        assert!(anti > h_mn.norm());
        // aligned phasor arithmetic
        let mag: f64 = h_rn.iter().zip(&h_mr).map(|(a, b)| a.norm() * b.norm() * 1.2 * 0.8f64.sqrt()).sum();
        assert!((nulled - (h_mn.norm() - mag).abs()).abs() < 1e-12);
        assert!((anti - (h_mn.norm() + mag)).abs() < 1e-12);
    }

    #[test]
    fn zero_products_are_flagged() {
        let st = RicsState::uniform(2, 0.5, 1.0);
        let h_rn = vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
        let h_mr = vec![C64::new(1.0, 0.0); 2];
        let (ph, flagged) = interference_nulling_phases(C64::new(1.0, 0.0), &h_rn, &h_mr, &st);
        assert_eq!(flagged, vec![0]);
        assert_eq!(ph[0], 0.0);
    }

    #[test]
    fn non_finite_parts_are_rejected() {
        let r = RicsState::from_parts(vec![f64::NAN], vec![0.0], vec![0.5], vec![1.0]);
        assert!(matches!(r, Err(Error::Constraint { .. })));
    }
}
