//! SINR, rates, expected V2V SINR and outage estimates.
//!
//! Rates use base-2 logarithms (`R = W log2(1 + γ)`).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_nlos, ChannelSet};
use crate::error::{Error, Result};
use crate::rics::{phi_r, phi_t, RicsState};
use crate::rng::{stream, Domain};
use crate::scenario::SystemParams;
use crate::C64;

/// Relaxed or binary sharing matrix `alpha[m][n]`, row-major `M x N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharingMatrix {
    pub m: usize,
    pub n: usize,
    pub data: Vec<f64>,
}

impl SharingMatrix {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self { m, n, data: vec![0.0; m * n] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        Self { m, n, data: rows.iter().flatten().copied().collect() }
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.data[m * self.n + n]
    }

    #[inline]
    pub fn set(&mut self, m: usize, n: usize, v: f64) {
        self.data[m * self.n + n] = v;
    }

    pub fn row_sum(&self, m: usize) -> f64 {
        self.data[m * self.n..(m + 1) * self.n].iter().sum()
    }

    pub fn col_sum(&self, n: usize) -> f64 {
        (0..self.m).map(|m| self.get(m, n)).sum()
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }
}

/// Per-link figures of merit for one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub gamma_b: Vec<f64>,
    pub rate_b: Vec<f64>,
    pub gamma_n: Vec<f64>,
    pub rate_n: Vec<f64>,
    pub gamma_tilde_n: Vec<f64>,
    pub gamma_tilde_c: f64,
}

pub fn rate(bandwidth: f64, sinr: f64) -> f64 {
    bandwidth * (1.0 + sinr).log2()
}

/// `P_m |h_mB + h_RB Φ_r h_mR|^2` for a given Φ_r diagonal.
pub fn uplink_signal_power(ch: &ChannelSet, phi_r: &[C64], p: &SystemParams, m: usize) -> f64 {
    let reflected: C64 = ch
        .h_rb
        .total
        .iter()
        .zip(phi_r)
        .zip(&ch.h_mr[m].total)
        .map(|((a, s), b)| a * s * b)
        .sum();
    p.p_m * (ch.h_mb[m].scalar() + reflected).norm_sqr()
}

/// Interference-plus-noise power at the BS for CV `m`.
pub fn uplink_interference(ch: &ChannelSet, alpha: &SharingMatrix, p: &SystemParams, m: usize) -> f64 {
    let i: f64 = (0..ch.n()).map(|n| alpha.get(m, n) * p.p_t * ch.h_nb[n].scalar().norm_sqr()).sum();
    i + p.noise_power
}

/// Uplink SINR of CV `m` at the BS.
pub fn sinr_uplink(ch: &ChannelSet, rics: &RicsState, alpha: &SharingMatrix, p: &SystemParams, m: usize) -> f64 {
    uplink_signal_power(ch, &phi_r(rics), p, m) / uplink_interference(ch, alpha, p, m)
}

/// Uplink SINRs of all CVs, computing Φ_r once.
pub fn sinr_uplink_all(ch: &ChannelSet, rics: &RicsState, alpha: &SharingMatrix, p: &SystemParams) -> Vec<f64> {
    let pr = phi_r(rics);
    (0..ch.m())
        .map(|m| uplink_signal_power(ch, &pr, p, m) / uplink_interference(ch, alpha, p, m))
        .collect()
}

/// `|h_mn + h_Rn^H Φ_t h_mR|^2` for a given Φ_t diagonal.
pub fn v2v_interference_gain(ch: &ChannelSet, phi_t: &[C64], m: usize, n: usize) -> f64 {
    let refracted: C64 = ch.h_rn[n]
        .total
        .iter()
        .zip(phi_t)
        .zip(&ch.h_mr[m].total)
        .map(|((a, s), b)| a.conj() * s * b)
        .sum();
    (ch.h_mn[m][n].scalar() + refracted).norm_sqr()
}

/// V2V SINR at Rx_n.
pub fn sinr_v2v(ch: &ChannelSet, rics: &RicsState, alpha: &SharingMatrix, p: &SystemParams, n: usize) -> f64 {
    let pt = phi_t(rics);
    sinr_v2v_with(ch, &pt, alpha, p, n)
}

fn sinr_v2v_with(ch: &ChannelSet, pt: &[C64], alpha: &SharingMatrix, p: &SystemParams, n: usize) -> f64 {
    let interference: f64 = (0..ch.m())
        .filter(|&m| alpha.get(m, n) != 0.0)
        .map(|m| alpha.get(m, n) * p.p_m * v2v_interference_gain(ch, pt, m, n))
        .sum();
    p.p_t * ch.h_n[n].scalar().norm_sqr() / (interference + p.noise_power)
}

/// Logistic smooth step `1 / (1 + exp(-ω x))`, evaluated without overflow.
pub fn smooth_step(x: f64, omega: f64) -> f64 {
    let z = omega * x;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `E |h_mn + h_Rn^H Φ_t h_mR|^2` over the scattered components, for a given
/// Φ_t diagonal.
///
/// Decomposes into the squared mean (LoS parts) plus the variances of the
/// direct term and of every independent cascaded element. With unit path
/// losses, a Rayleigh direct link and unit-modulus Φ_t entries this equals
/// `1 + (|H1|^2 + L κ_Rn + L κ_mR + L) / ((1 + κ_Rn)(1 + κ_mR))`.
pub fn expected_interference_gain_with(ch: &ChannelSet, phi_t: &[C64], m: usize, n: usize) -> f64 {
    let direct = &ch.h_mn[m][n];
    let mean_direct = direct.mean()[0];
    let var_direct = direct.power() - mean_direct.norm_sqr();
    let rn = &ch.h_rn[n];
    let mr = &ch.h_mr[m];
    let mean_rn = rn.mean();
    let mean_mr = mr.mean();
    let pow = rn.power() * mr.power();
    let mut mean = mean_direct;
    let mut var = var_direct;
    for l in 0..phi_t.len() {
        let mu = mean_rn[l].conj() * phi_t[l] * mean_mr[l];
        mean += mu;
        var += phi_t[l].norm_sqr() * pow - mu.norm_sqr();
    }
    mean.norm_sqr() + var
}

pub fn expected_interference_gain(ch: &ChannelSet, rics: &RicsState, m: usize, n: usize) -> f64 {
    expected_interference_gain_with(ch, &phi_t(rics), m, n)
}

/// Matrix `G[m][n]` of expected interference gains.
pub fn expected_gains(ch: &ChannelSet, rics: &RicsState) -> Vec<Vec<f64>> {
    let pt = phi_t(rics);
    (0..ch.m())
        .map(|m| (0..ch.n()).map(|n| expected_interference_gain_with(ch, &pt, m, n)).collect())
        .collect()
}

/// Expected V2V SINR, `P_t E|h_n|^2 / (Σ_m α P_m G_mn + W ξ0)`.
pub fn expected_sinr_v2v(ch: &ChannelSet, rics: &RicsState, alpha: &SharingMatrix, p: &SystemParams, n: usize) -> f64 {
    let pt = phi_t(rics);
    let interference: f64 = (0..ch.m())
        .filter(|&m| alpha.get(m, n) != 0.0)
        .map(|m| alpha.get(m, n) * p.p_m * expected_interference_gain_with(ch, &pt, m, n))
        .sum();
    p.p_t * ch.h_n[n].power() / (interference + p.noise_power)
}

pub fn expected_sinr_v2v_all(ch: &ChannelSet, rics: &RicsState, alpha: &SharingMatrix, p: &SystemParams) -> Vec<f64> {
    let g = expected_gains(ch, rics);
    (0..ch.n())
        .map(|n| {
            let i: f64 = (0..ch.m()).map(|m| alpha.get(m, n) * p.p_m * g[m][n]).sum();
            p.p_t * ch.h_n[n].power() / (i + p.noise_power)
        })
        .collect()
}

/// Surrogate SINR threshold `γ_th + ln(1/P_out - 1) / ω`.
pub fn surrogate_threshold(p: &SystemParams) -> Result<f64> {
    if !(p.p_out > 0.0 && p.p_out < 1.0) {
        return Err(Error::Constraint { field: "P_out", bound: "(0,1)", value: p.p_out });
    }
    Ok(p.gamma_th + (1.0 / p.p_out - 1.0).ln() / p.omega)
}

pub fn link_metrics(ch: &ChannelSet, rics: &RicsState, alpha: &SharingMatrix, p: &SystemParams) -> Result<LinkMetrics> {
    let gamma_b = sinr_uplink_all(ch, rics, alpha, p);
    let pt = phi_t(rics);
    let gamma_n: Vec<f64> = (0..ch.n()).map(|n| sinr_v2v_with(ch, &pt, alpha, p, n)).collect();
    Ok(LinkMetrics {
        rate_b: gamma_b.iter().map(|&g| rate(p.bandwidth_hz, g)).collect(),
        rate_n: gamma_n.iter().map(|&g| rate(p.bandwidth_hz, g)).collect(),
        gamma_b,
        gamma_n,
        gamma_tilde_n: expected_sinr_v2v_all(ch, rics, alpha, p),
        gamma_tilde_c: surrogate_threshold(p)?,
    })
}

/// Which random parts an outage trial redraws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutageOptions {
    /// Redraw the scattered part of the desired V2V link `h_n` as well.
    pub redraw_desired: bool,
}

impl Default for OutageOptions {
    fn default() -> Self {
        Self { redraw_desired: true }
    }
}

/// Per-pair empirical outage probability and its binomial standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageEstimate {
    pub estimate: Vec<f64>,
    pub stderr: Vec<f64>,
    pub trials: usize,
}

/// V2V SINR samples `[trial][n]` under redrawn scattered components; LoS parts
/// and geometry stay fixed.
pub fn v2v_sinr_samples(
    ch: &ChannelSet,
    rics: &RicsState,
    alpha: &SharingMatrix,
    p: &SystemParams,
    trials: usize,
    seed: u64,
    opts: OutageOptions,
) -> Vec<Vec<f64>> {
    let pt = phi_t(rics);
    let (mm, nn, l) = (ch.m(), ch.n(), ch.l());
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, Domain::Outage, t as u64, 0);
            let h_mr: Vec<_> = ch.h_mr.iter().map(|k| k.with_nlos(draw_nlos(&mut rng, l))).collect();
            let h_rn: Vec<_> = ch.h_rn.iter().map(|k| k.with_nlos(draw_nlos(&mut rng, l))).collect();
            (0..nn)
                .map(|n| {
                    let h_n = if opts.redraw_desired {
                        ch.h_n[n].with_nlos(draw_nlos(&mut rng, 1)).scalar()
                    } else {
                        ch.h_n[n].scalar()
                    };
                    let mut interference = 0.0;
                    for m in 0..mm {
                        let direct = ch.h_mn[m][n].with_nlos(draw_nlos(&mut rng, 1)).scalar();
                        let a = alpha.get(m, n);
                        if a == 0.0 {
                            continue;
                        }
                        let cascade: C64 = h_rn[n]
                            .total
                            .iter()
                            .zip(&pt)
                            .zip(&h_mr[m].total)
                            .map(|((x, s), y)| x.conj() * s * y)
                            .sum();
                        interference += a * p.p_m * (direct + cascade).norm_sqr();
                    }
                    p.p_t * h_n.norm_sqr() / (interference + p.noise_power)
                })
                .collect()
        })
        .collect()
}

/// Monte-Carlo estimate of `Pr{γ_n <= γ_th}` for every pair.
pub fn outage_monte_carlo(
    ch: &ChannelSet,
    rics: &RicsState,
    alpha: &SharingMatrix,
    p: &SystemParams,
    trials: usize,
    seed: u64,
    opts: OutageOptions,
) -> Result<OutageEstimate> {
    if trials < 100 {
        return Err(Error::TooFewTrials(trials));
    }
    let samples = v2v_sinr_samples(ch, rics, alpha, p, trials, seed, opts);
    let mut estimate = vec![0.0; ch.n()];
    for row in &samples {
        for (e, &g) in estimate.iter_mut().zip(row) {
            if g <= p.gamma_th {
                *e += 1.0;
            }
        }
    }
    let t = trials as f64;
    estimate.iter_mut().for_each(|e| *e /= t);
    let stderr = estimate.iter().map(|&q| (q * (1.0 - q) / t).sqrt()).collect();
    Ok(OutageEstimate { estimate, stderr, trials })
}
