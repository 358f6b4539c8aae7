//! Offload-ratio block: quadratic-transform fractional programming.
//!
//! For fixed rates every CV's ratio `A(ρ) / τ(ρ)` is handled separately. The
//! transform replaces it by `2μ√A(ρ) − μ²τ(ρ)`; the μ-update is closed form
//! and the ρ-update is solved exactly on the two smooth branches of
//! `τ = max{τ_l, τ_o}`.

use rayon::prelude::*;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::link::SharingMatrix;
use crate::offload::{delays, safety_coefficient, uplink_rates, OffloadVector};
use crate::rics::RicsState;
use crate::scenario::{Scenario, SystemParams, TaskSpec};

#[derive(Debug, Clone, Copy)]
pub struct FpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FpOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100 }
    }
}

/// Per-CV constants of the ratio: `A(ρ) = a0 + a1 ρ`, `τ_l = (1-ρ) loc`,
/// `τ_o = ρ off`.
#[derive(Debug, Clone, Copy)]
struct Ratio {
    a0: f64,
    a1: f64,
    loc: f64,
    off: f64,
}

impl Ratio {
    fn new(task: &TaskSpec, rate: f64, p: &SystemParams) -> Self {
        let off = if rate > 0.0 { task.s / rate + task.c / p.f_server_hz } else { f64::INFINITY };
        Self { a0: p.a_b * p.lambda_acc, a1: p.a_b * (1.0 - p.lambda_acc), loc: task.c / task.f, off }
    }

    fn num(&self, rho: f64) -> f64 {
        self.a0 + self.a1 * rho
    }

    fn tau(&self, rho: f64) -> f64 {
        let o = if rho == 0.0 { 0.0 } else { rho * self.off };
        ((1.0 - rho) * self.loc).max(o)
    }

    fn surrogate(&self, rho: f64, mu: f64) -> f64 {
        2.0 * mu * self.num(rho).sqrt() - mu * mu * self.tau(rho)
    }

    fn kink(&self) -> f64 {
        self.loc / (self.loc + self.off)
    }

    /// Exact maximizer of the surrogate for fixed μ.
    fn best_rho(&self, mu: f64) -> f64 {
        if !self.off.is_finite() {
            return 0.0;
        }
        let mut cands = vec![0.0, 1.0, self.kink()];
        // On the τ_l branch the surrogate is increasing, so only the τ_o branch
        // can have an interior stationary point.
        if self.a1 > 0.0 && mu > 0.0 {
            let root = self.a1 / (mu * self.off);
            let r = (root * root - self.a0) / self.a1;
            if r.is_finite() {
                cands.push(r.clamp(0.0, 1.0));
            }
        }
        let mut best = (f64::NEG_INFINITY, 0.0);
        for r in cands {
            let v = self.surrogate(r, mu);
            if v > best.0 {
                best = (v, r);
            }
        }
        best.1
    }
}

/// Quadratic-transform weight `μ = √A / τ`.
pub fn mu_update(num: f64, tau: f64) -> f64 {
    num.sqrt() / tau
}

fn solve_one(r: &Ratio, init: f64, opts: FpOptions, m: usize) -> Result<(f64, Vec<f64>)> {
    let mut rho = init.clamp(0.0, 1.0);
    if !r.off.is_finite() {
        return Ok((0.0, vec![r.num(0.0) / r.tau(0.0)]));
    }
    let mut trace = vec![r.num(rho) / r.tau(rho)];
    let mut last = f64::NAN;
    for _ in 0..opts.max_iter {
        let mu = mu_update(r.num(rho), r.tau(rho));
        let next = r.best_rho(mu);
        let sur = r.surrogate(next, mu);
        if !sur.is_finite() {
            return Err(Error::NonFiniteSurrogate(m));
        }
        rho = next;
        trace.push(r.num(rho) / r.tau(rho));
        if last.is_finite() && (sur - last).abs() <= opts.tol * sur.abs().max(1e-300) {
            break;
        }
        last = sur;
    }
    Ok((rho, trace))
}

/// Optimizes the offload ratios for fixed sharing and RICS configuration.
/// Returns the ratios and the per-iteration `Σ S_m`.
pub fn solve_rho(
    scenario: &Scenario,
    ch: &ChannelSet,
    alpha: &SharingMatrix,
    rics: &RicsState,
    init: &OffloadVector,
    opts: FpOptions,
) -> Result<(OffloadVector, Vec<f64>)> {
    let p = &scenario.params;
    let rates = uplink_rates(ch, rics, alpha, p);
    solve_rho_with_rates(&scenario.tasks, &rates, p, init, opts)
}

/// [`solve_rho`] for precomputed uplink rates.
pub fn solve_rho_with_rates(
    tasks: &[TaskSpec],
    rates: &[f64],
    p: &SystemParams,
    init: &OffloadVector,
    opts: FpOptions,
) -> Result<(OffloadVector, Vec<f64>)> {
    for (m, t) in tasks.iter().enumerate() {
        if !(t.c > 0.0) {
            return Err(Error::DegenerateTask(m));
        }
    }
    let per_cv: Vec<(f64, Vec<f64>)> = tasks
        .par_iter()
        .zip(rates)
        .zip(&init.rho)
        .enumerate()
        .map(|(m, ((t, &rate), &r0))| solve_one(&Ratio::new(t, rate, p), r0, opts, m))
        .collect::<Result<_>>()?;
    let len = per_cv.iter().map(|(_, t)| t.len()).max().unwrap_or(1);
    let trace = (0..len)
        .map(|i| per_cv.iter().map(|(_, t)| t[i.min(t.len() - 1)]).sum())
        .collect();
    let rho = per_cv.into_iter().map(|(r, _)| r).collect();
    Ok((OffloadVector { rho }, trace))
}

/// Per-CV optimum of `S_m` over `[0, 1]` at a fixed rate: the point where
/// `τ_l = τ_o`, or 0 when the rate is zero.
pub fn optimal_rho(task: &TaskSpec, rate: f64, p: &SystemParams) -> f64 {
    let r = Ratio::new(task, rate, p);
    if r.off.is_finite() {
        r.kink()
    } else {
        0.0
    }
}

/// `S_m` at the optimal ratio.
pub fn optimal_safety(task: &TaskSpec, rate: f64, p: &SystemParams, m: usize) -> Result<f64> {
    safety_coefficient(task, optimal_rho(task, rate, p), rate, p, m)
}

/// Grid-search reference for a single CV: best `S_m` over `ρ = k·step`.
pub fn grid_rho(task: &TaskSpec, rate: f64, p: &SystemParams, step: f64) -> (f64, f64) {
    let n = (1.0 / step).round() as usize;
    let mut best = (0.0, f64::NEG_INFINITY);
    for k in 0..=n {
        let rho = k as f64 / n as f64;
        let d = delays(task, rho, rate, p.f_server_hz);
        let s = if d.total.is_finite() {
            p.a_b * (p.lambda_acc + rho * (1.0 - p.lambda_acc)) / d.total
        } else {
            0.0
        };
        if s > best.1 {
            best = (rho, s);
        }
    }
    best
}
