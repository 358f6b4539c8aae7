//! Quasi-static channel synthesis.
//!
//! Every link keeps its Rician decomposition: a unit-modulus line-of-sight
//! part, a CN(0,1) scattered part, the K-factor and the amplitude path loss.
//! The composed channel is
//! `gain * (sqrt(k/(1+k)) * los + sqrt(1/(1+k)) * nlos)`.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{cn01, stream, Domain};
use crate::scenario::{db_to_lin, distance, Point, Scenario, SystemParams};
use crate::C64;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// A Rician link of length 1 (scalar) or L (element-wise RICS link).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RicianLink {
    pub los: Vec<C64>,
    pub nlos: Vec<C64>,
    pub kappa: f64,
    /// Amplitude path loss, `sqrt(g0 * d^-beta)`.
    pub gain: f64,
    pub total: Vec<C64>,
}

impl RicianLink {
    pub fn compose(los: Vec<C64>, nlos: Vec<C64>, kappa: f64, gain: f64) -> Self {
        debug_assert_eq!(los.len(), nlos.len());
        let (wl, wn) = Self::weights(kappa);
        let total = los.iter().zip(&nlos).map(|(a, b)| (a * wl + b * wn) * gain).collect();
        Self { los, nlos, kappa, gain, total }
    }

    /// LoS and NLoS amplitude weights.
    pub fn weights(kappa: f64) -> (f64, f64) {
        ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
    }

    /// Same link with a different scattered component.
    pub fn with_nlos(&self, nlos: Vec<C64>) -> Self {
        Self::compose(self.los.clone(), nlos, self.kappa, self.gain)
    }

    /// Deterministic (LoS) part of the composed channel.
    pub fn mean(&self) -> Vec<C64> {
        let (wl, _) = Self::weights(self.kappa);
        self.los.iter().map(|a| a * (wl * self.gain)).collect()
    }

    /// Average power per entry, `gain^2`.
    pub fn power(&self) -> f64 {
        self.gain * self.gain
    }

    pub fn scalar(&self) -> C64 {
        self.total[0]
    }

    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }
}

/// One realization of every channel in the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    /// CV_m -> BS.
    pub h_mb: Vec<RicianLink>,
    /// V2V Tx_n -> Rx_n.
    pub h_n: Vec<RicianLink>,
    /// CV_m -> Rx_n, indexed `[m][n]`.
    pub h_mn: Vec<Vec<RicianLink>>,
    /// V2V Tx_n -> BS.
    pub h_nb: Vec<RicianLink>,
    /// CV_m -> RICS, length L.
    pub h_mr: Vec<RicianLink>,
    /// RICS -> BS, length L.
    pub h_rb: RicianLink,
    /// RICS -> Rx_n, length L.
    pub h_rn: Vec<RicianLink>,
}

impl ChannelSet {
    pub fn m(&self) -> usize {
        self.h_mb.len()
    }

    pub fn n(&self) -> usize {
        self.h_n.len()
    }

    pub fn l(&self) -> usize {
        self.h_rb.len()
    }

    /// The same realization with the RICS switched off: every CV-to-RICS link
    /// is zeroed, which removes both cascades.
    pub fn without_rics(&self) -> Self {
        let mut out = self.clone();
        for link in &mut out.h_mr {
            let l = link.len();
            *link = RicianLink::compose(vec![C64::new(0.0, 0.0); l], vec![C64::new(0.0, 0.0); l], link.kappa, 0.0);
        }
        out
    }

    /// Element-wise reflected cascade `h_RB ∘ h_mR`.
    pub fn reflect_cascade(&self, m: usize) -> Vec<C64> {
        self.h_rb.total.iter().zip(&self.h_mr[m].total).map(|(a, b)| a * b).collect()
    }

    /// Element-wise refracted cascade `conj(h_Rn) ∘ h_mR`.
    pub fn refract_cascade(&self, m: usize, n: usize) -> Vec<C64> {
        self.h_rn[n].total.iter().zip(&self.h_mr[m].total).map(|(a, b)| a.conj() * b).collect()
    }

    /// Writes every composed channel entry as `link,i,j,l,re,im` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["link", "i", "j", "l", "re", "im"])?;
        let mut put = |name: &str, i: usize, j: usize, link: &RicianLink| -> Result<()> {
            for (l, h) in link.total.iter().enumerate() {
                w.write_record([
                    name.to_string(),
                    i.to_string(),
                    j.to_string(),
                    l.to_string(),
                    format!("{:.17e}", h.re),
                    format!("{:.17e}", h.im),
                ])?;
            }
            Ok(())
        };
        for (m, link) in self.h_mb.iter().enumerate() {
            put("h_mB", m, 0, link)?;
        }
        for (n, link) in self.h_n.iter().enumerate() {
            put("h_n", n, 0, link)?;
        }
        for (m, row) in self.h_mn.iter().enumerate() {
            for (n, link) in row.iter().enumerate() {
                put("h_mn", m, n, link)?;
            }
        }
        for (n, link) in self.h_nb.iter().enumerate() {
            put("h_nB", n, 0, link)?;
        }
        for (m, link) in self.h_mr.iter().enumerate() {
            put("h_mR", m, 0, link)?;
        }
        put("h_RB", 0, 0, &self.h_rb)?;
        for (n, link) in self.h_rn.iter().enumerate() {
            put("h_Rn", n, 0, link)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Steering vector of a uniform linear array laid along the y axis, seen at
/// azimuth `phi` from its broadside (x axis). Spacing is in wavelengths.
pub fn steering_from_angle(phi: f64, l: usize, spacing: f64) -> Vec<C64> {
    let k = -std::f64::consts::TAU * spacing * phi.sin();
    (0..l).map(|i| C64::from_polar(1.0, k * i as f64)).collect()
}

/// Half-wavelength LoS steering vector of the RICS at `rics` towards `peer`.
pub fn los_steering(rics: &Point, peer: &Point, l: usize) -> Vec<C64> {
    los_steering_spaced(rics, peer, l, 0.5)
}

pub fn los_steering_spaced(rics: &Point, peer: &Point, l: usize, spacing: f64) -> Vec<C64> {
    let dx = peer[0] - rics[0];
    let dy = peer[1] - rics[1];
    let phi = if dx == 0.0 && dy == 0.0 { 0.0 } else { dy.atan2(dx) };
    steering_from_angle(phi, l, spacing)
}

/// Link classes, used both for stream addressing and K-factor lookup.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Class {
    CvBs = 1,
    V2v = 2,
    CvRx = 3,
    TxBs = 4,
    CvRics = 5,
    RicsBs = 6,
    RicsRx = 7,
}

struct Drawer<'a> {
    params: &'a SystemParams,
    seed: u64,
    wavelength: f64,
    g0: f64,
}

impl Drawer<'_> {
    fn link(&self, class: Class, i: usize, j: usize, a: &Point, b: &Point, steer: Option<&Point>) -> Result<RicianLink> {
        let d = distance(a, b);
        if !(d > 0.0) {
            return Err(Error::CoincidentPositions(format!("{class:?}[{i}][{j}]")));
        }
        let k = &self.params.kappa;
        let (kappa, beta) = match class {
            Class::CvBs => (k.cv_bs, self.params.beta_pl),
            Class::V2v => (k.v2v, self.params.beta_pl),
            Class::CvRx => (k.cv_rx, self.params.beta_pl),
            Class::TxBs => (k.tx_bs, self.params.beta_pl),
            Class::CvRics => (k.cv_rics, self.params.beta_rics),
            Class::RicsBs => (k.rics_bs, self.params.beta_rics),
            Class::RicsRx => (k.rics_rx, self.params.beta_rics),
        };
        let gain = (self.g0 * d.powf(-beta)).sqrt();
        let common = C64::from_polar(1.0, -std::f64::consts::TAU * d / self.wavelength);
        let len = if steer.is_some() { self.params.l } else { 1 };
        let los = match steer {
            Some(rics) => {
                let peer = if rics == a { b } else { a };
                los_steering_spaced(rics, peer, len, self.params.element_spacing)
                    .into_iter()
                    .map(|v| v * common)
                    .collect()
            }
            None => vec![common],
        };
        let mut rng = stream(self.seed, Domain::Channel, ((class as u64) << 32) | i as u64, j as u64);
        let nlos = (0..len).map(|_| cn01(&mut rng)).collect();
        Ok(RicianLink::compose(los, nlos, kappa, gain))
    }
}

/// Draws one realization of every channel. Deterministic per seed; each link
/// (and each RICS element within it) has its own stream.
pub fn draw_channels(scenario: &Scenario, seed: u64) -> Result<ChannelSet> {
    let p = &scenario.params;
    let pl = &scenario.placement;
    let dr = Drawer {
        params: p,
        seed,
        wavelength: SPEED_OF_LIGHT / p.carrier_hz,
        g0: db_to_lin(p.ref_gain_db),
    };
    let rics = &pl.rics_pos;
    let bs = &pl.bs_pos;
    let mut h_mb = Vec::with_capacity(p.m);
    let mut h_mr = Vec::with_capacity(p.m);
    let mut h_mn = Vec::with_capacity(p.m);
    for (m, cv) in pl.cv_pos.iter().enumerate() {
        h_mb.push(dr.link(Class::CvBs, m, 0, cv, bs, None)?);
        h_mr.push(dr.link(Class::CvRics, m, 0, cv, rics, Some(rics))?);
        let row = pl
            .v2v_rx_pos
            .iter()
            .enumerate()
            .map(|(n, rx)| dr.link(Class::CvRx, m, n, cv, rx, None))
            .collect::<Result<Vec<_>>>()?;
        h_mn.push(row);
    }
    let mut h_n = Vec::with_capacity(p.n);
    let mut h_nb = Vec::with_capacity(p.n);
    let mut h_rn = Vec::with_capacity(p.n);
    for (n, (tx, rx)) in pl.v2v_tx_pos.iter().zip(&pl.v2v_rx_pos).enumerate() {
        h_n.push(dr.link(Class::V2v, n, 0, tx, rx, None)?);
        h_nb.push(dr.link(Class::TxBs, n, 0, tx, bs, None)?);
        h_rn.push(dr.link(Class::RicsRx, n, 0, rics, rx, Some(rics))?);
    }
    let h_rb = dr.link(Class::RicsBs, 0, 0, rics, bs, Some(rics))?;
    Ok(ChannelSet { h_mb, h_n, h_mn, h_nb, h_mr, h_rb, h_rn })
}

/// Fresh CN(0,1) vector of length `len`.
pub fn draw_nlos<R: Rng>(rng: &mut R, len: usize) -> Vec<C64> {
    (0..len).map(|_| cn01(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, PlacementConfig};
    use std::f64::consts::PI;

    fn scenario(l: usize) -> Scenario {
        let mut p = SystemParams::default();
        p.l = l;
        p.m = 3;
        p.n = 2;
        generate_scenario(&p, &PlacementConfig::default(), 5)
    }

    #[test]
    fn steering_broadside_is_all_ones() {
        let v = los_steering(&[0.0, 0.0, 10.0], &[50.0, 0.0, 0.0], 8);
        for e in v {
            assert!((e - C64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn steering_is_unit_modulus_and_periodic() {
        for phi in [0.1, 1.0, 2.5, -0.7] {
            let a = steering_from_angle(phi, 16, 0.5);
            let b = steering_from_angle(phi + 2.0 * PI, 16, 0.5);
            for (x, y) in a.iter().zip(&b) {
                assert!((x.norm() - 1.0).abs() < 1e-14);
                assert!((x - y).norm() < 1e-12);
            }
            // entry l has phase -pi * l * sin(phi)
            let want = C64::from_polar(1.0, -PI * 3.0 * phi.sin());
            assert!((a[3] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn draws_are_deterministic_and_shaped() {
        let sc = scenario(12);
        let a = draw_channels(&sc, 11).unwrap();
        let b = draw_channels(&sc, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, draw_channels(&sc, 12).unwrap());
        assert_eq!(a.l(), 12);
        assert_eq!(a.h_mn.len(), 3);
        assert_eq!(a.h_mn[0].len(), 2);
        for link in a.h_mr.iter().chain(&a.h_rn).chain(std::iter::once(&a.h_rb)) {
            assert_eq!(link.len(), 12);
        }
    }

    #[test]
    fn more_elements_extend_the_same_vectors() {
        let a = draw_channels(&scenario(8), 3).unwrap();
        let b = draw_channels(&scenario(20), 3).unwrap();
        assert_eq!(a.h_mb, b.h_mb);
        assert_eq!(a.h_mr[1].total[..], b.h_mr[1].total[..8]);
    }

    #[test]
    fn decomposition_recombines_exactly() {
        let ch = draw_channels(&scenario(6), 1).unwrap();
        for link in ch.h_mr.iter().chain(&ch.h_rn) {
            let again = RicianLink::compose(link.los.clone(), link.nlos.clone(), link.kappa, link.gain);
            assert_eq!(again.total, link.total);
        }
    }

    #[test]
    fn huge_kappa_is_los() {
        let mut sc = scenario(6);
        sc.params.kappa.cv_rics = 1e9;
        let ch = draw_channels(&sc, 2).unwrap();
        let link = &ch.h_mr[0];
        let (_, wn) = RicianLink::weights(link.kappa);
        assert!(wn < 1e-4);
        let mean = link.mean();
        for (t, m) in link.total.iter().zip(&mean) {
            assert!((t - m).norm() / link.gain < 1e-4);
        }
    }

    #[test]
    fn coincident_positions_rejected() {
        let mut sc = scenario(4);
        sc.placement.cv_pos[0] = sc.placement.bs_pos;
        assert!(matches!(draw_channels(&sc, 0), Err(Error::CoincidentPositions(_))));
    }

    #[test]
    fn csv_dump_has_one_row_per_entry() {
        let ch = draw_channels(&scenario(4), 0).unwrap();
        let mut buf = Vec::new();
        ch.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        // 3 h_mB + 2 h_n + 6 h_mn + 2 h_nB + 3*4 h_mR + 4 h_RB + 2*4 h_Rn
        assert_eq!(text.lines().count(), 1 + 3 + 2 + 6 + 2 + 12 + 4 + 8);
    }
}
