//! Task delays, inference accuracy and the driving-safety objective.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::link::{rate, sinr_uplink_all, SharingMatrix};
use crate::rics::RicsState;
use crate::scenario::{Scenario, SystemParams, TaskSpec};

/// Offload ratios `rho[m]` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffloadVector {
    pub rho: Vec<f64>,
}

impl OffloadVector {
    pub fn uniform(m: usize, rho: f64) -> Self {
        Self { rho: vec![rho.clamp(0.0, 1.0); m] }
    }
}

/// The full decision `(rho, alpha, RICS state)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub rho: OffloadVector,
    pub alpha: SharingMatrix,
    pub rics: RicsState,
}

/// Local, offloading and total delay in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delays {
    pub local: f64,
    pub offload: f64,
    pub total: f64,
}

/// `τ_l = (1-ρ)c/f`, `τ_o = ρ(s/R + c/F)`, `τ = max`. Zero rate with a
/// positive ratio gives an infinite offloading delay.
pub fn delays(task: &TaskSpec, rho: f64, rate_b: f64, f_server: f64) -> Delays {
    let local = (1.0 - rho) * task.c / task.f;
    let offload = if rho == 0.0 {
        0.0
    } else if rate_b > 0.0 {
        rho * (task.s / rate_b + task.c / f_server)
    } else {
        f64::INFINITY
    };
    Delays { local, offload, total: local.max(offload) }
}

/// Average inference accuracy `(1-ρ) λ A_B + ρ A_B`.
pub fn accuracy(rho: f64, p: &SystemParams) -> f64 {
    (1.0 - rho) * p.lambda_acc * p.a_b + rho * p.a_b
}

/// Safety coefficient `A_B (λ + ρ(1-λ)) / max{τ_l, τ_o}`.
pub fn safety_coefficient(task: &TaskSpec, rho: f64, rate_b: f64, p: &SystemParams, m: usize) -> Result<f64> {
    if !(task.c > 0.0) {
        return Err(Error::DegenerateTask(m));
    }
    let d = delays(task, rho, rate_b, p.f_server_hz);
    if d.total.is_infinite() {
        return Ok(0.0);
    }
    if !(d.total > 0.0) {
        return Err(Error::DegenerateTask(m));
    }
    Ok(p.a_b * (p.lambda_acc + rho * (1.0 - p.lambda_acc)) / d.total)
}

/// Largest `S_m` over every ratio and rate: with an instantaneous uplink the
/// optimum sits where `τ_l = τ_o = ρ c/F`.
pub fn max_attainable_safety(task: &TaskSpec, p: &SystemParams, m: usize) -> Result<f64> {
    if !(task.c > 0.0 && task.f > 0.0) {
        return Err(Error::DegenerateTask(m));
    }
    let (loc, off) = (task.c / task.f, task.c / p.f_server_hz);
    let k = loc / (loc + off);
    Ok(p.a_b * (p.lambda_acc + k * (1.0 - p.lambda_acc)) / ((1.0 - k) * loc))
}

/// `S_m / max_attainable_safety` per CV, each in `[0, 1]`.
pub fn normalized_safety(scenario: &Scenario, ch: &ChannelSet, d: &Decision) -> Result<Vec<f64>> {
    let p = &scenario.params;
    let rates = uplink_rates(ch, &d.rics, &d.alpha, p);
    let s = safety_from_rates(&scenario.tasks, &d.rho.rho, &rates, p)?;
    scenario
        .tasks
        .iter()
        .zip(s)
        .enumerate()
        .map(|(m, (t, v))| Ok(v / max_attainable_safety(t, p, m)?))
        .collect()
}

/// Per-CV safety coefficients for given uplink rates.
pub fn safety_from_rates(tasks: &[TaskSpec], rho: &[f64], rates: &[f64], p: &SystemParams) -> Result<Vec<f64>> {
    tasks
        .iter()
        .zip(rho)
        .zip(rates)
        .enumerate()
        .map(|(m, ((t, &r), &rb))| safety_coefficient(t, r, rb, p, m))
        .collect()
}

/// Uplink rates induced by a decision.
pub fn uplink_rates(ch: &ChannelSet, rics: &RicsState, alpha: &SharingMatrix, p: &SystemParams) -> Vec<f64> {
    sinr_uplink_all(ch, rics, alpha, p)
        .into_iter()
        .map(|g| rate(p.bandwidth_hz, g))
        .collect()
}

/// `Σ_m S_m` under the decision's rates. α is used as given (relaxed or not).
pub fn objective(scenario: &Scenario, ch: &ChannelSet, d: &Decision) -> Result<f64> {
    let p = &scenario.params;
    let rates = uplink_rates(ch, &d.rics, &d.alpha, p);
    Ok(safety_from_rates(&scenario.tasks, &d.rho.rho, &rates, p)?.iter().sum())
}
