//! The outer alternating loop over offload ratios, sharing and RICS state.
//!
//! Each block is wrapped in an accept-if-better guard on the true `Σ S_m`, so
//! the objective trace never decreases even when a block solver returns a
//! poor approximation.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::link::{expected_sinr_v2v_all, link_metrics, outage_monte_carlo, surrogate_threshold, OutageOptions, SharingMatrix};
use crate::offload::{normalized_safety, objective, Decision, OffloadVector};
use crate::rics::RicsState;
use crate::scenario::{Scenario, SharingPolicy};
use crate::solver_fp::{solve_rho, FpOptions};
use crate::solver_sca::{solve_alpha, AlphaPolytope, ScaOptions};
use crate::solver_sdr::{nulling_state, solve_phi, RateWeights, SdrOptions};

#[derive(Debug, Clone, Copy)]
pub struct AioaOptions {
    pub max_outer: usize,
    /// Relative-improvement stop threshold.
    pub delta: f64,
    pub fp: FpOptions,
    pub sca: ScaOptions,
    pub sdr: SdrOptions,
    /// Monte-Carlo trials for the outage check at the solution; 0 skips it.
    pub outage_trials: usize,
    /// Keeps the RICS state of the start decision and skips the Φ block.
    pub fixed_rics: bool,
}

impl AioaOptions {
    /// Defaults taken from a scenario's parameters.
    pub fn for_scenario(scenario: &Scenario) -> Self {
        let p = &scenario.params;
        Self {
            max_outer: p.max_outer,
            delta: p.delta,
            fp: FpOptions::default(),
            sca: ScaOptions::default(),
            // the ratio block re-balances every CV right after this one, and
            // plain sum rate serves that better than fixed-ratio weights
            sdr: SdrOptions { trials: p.randomization_trials, seed: scenario.seed, passes: 1, weights: RateWeights::Uniform, ..Default::default() },
            outage_trials: 2000,
            fixed_rics: false,
        }
    }
}

/// Wall time of each block in one outer iteration, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockTimings {
    pub rho: f64,
    pub alpha: f64,
    pub phi: f64,
}

/// Quantities tracked after every outer iteration (index 0 is the start).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub objective: f64,
    pub sum_v2v_rate: f64,
    pub max_residual: f64,
    /// Seconds since the solve started.
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// `Σ S_m` at the start and after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub records: Vec<IterationRecord>,
    pub block_timings: Vec<BlockTimings>,
    pub converged: bool,
    pub iterations: usize,
    pub decision: Decision,
    /// Largest violation per constraint family at the final decision.
    pub constraint_residuals: BTreeMap<String, f64>,
    /// Monte-Carlo outage per V2V pair at the final decision.
    pub empirical_outage: Vec<f64>,
    /// `S_m` over its largest attainable value, per CV, at the final decision.
    pub normalized_safety: Vec<f64>,
    /// Solver warnings and the error that stopped the loop, if any.
    pub warnings: Vec<String>,
}

impl SolveReport {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the start value")
    }

    pub fn max_residual(&self) -> f64 {
        self.constraint_residuals.values().copied().fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Default feasible start: `ρ = 0.5`, even energy split with nulling
/// refraction phases, and `α = 0` (or the projected uniform matrix when every
/// pair must share).
pub fn default_init(scenario: &Scenario, ch: &ChannelSet) -> Result<Decision> {
    let p = &scenario.params;
    let (m, n, l) = (ch.m(), ch.n(), ch.l());
    let rics = nulling_state(ch, &SharingMatrix::zeros(m, n), p, vec![0.5; l], vec![p.psi; l])?;
    init_with_rics(scenario, ch, rics)
}

/// Start decision around a given RICS state.
pub fn init_with_rics(scenario: &Scenario, ch: &ChannelSet, rics: RicsState) -> Result<Decision> {
    let p = &scenario.params;
    let (m, n) = (ch.m(), ch.n());
    let zeros = SharingMatrix::zeros(m, n);
    let alpha = match p.sharing {
        SharingPolicy::Optional => zeros,
        SharingPolicy::Required => {
            let poly = AlphaPolytope::new(ch, &rics, p)?;
            let k = m.min(n) as f64;
            let uniform = vec![k / (m * n) as f64; m * n];
            SharingMatrix { m, n, data: poly.project(&uniform)? }
        }
    };
    Ok(Decision { rho: OffloadVector::uniform(m, 0.5), alpha, rics })
}

/// Largest violation per constraint family.
pub fn constraint_residuals(scenario: &Scenario, ch: &ChannelSet, d: &Decision) -> Result<BTreeMap<String, f64>> {
    let p = &scenario.params;
    let mut out = BTreeMap::new();
    let rho = d.rho.rho.iter().map(|&r| (-r).max(r - 1.0)).fold(0.0, f64::max);
    out.insert("offload_ratio".to_string(), rho.max(0.0));
    let poly = AlphaPolytope::new(ch, &d.rics, p)?;
    out.insert("sharing".to_string(), poly.residual(&d.alpha.data));
    out.insert("energy_split".to_string(), d.rics.split_residual());
    let gc = surrogate_threshold(p)?;
    let worst = expected_sinr_v2v_all(ch, &d.rics, &d.alpha, p)
        .iter()
        .map(|g| (gc - g) / gc)
        .fold(0.0, f64::max);
    out.insert("outage_surrogate".to_string(), worst);
    Ok(out)
}

/// Objective, V2V rate and worst residual of a decision; `start` sets the
/// wall-time origin.
pub fn evaluate(scenario: &Scenario, ch: &ChannelSet, d: &Decision, start: Instant) -> Result<IterationRecord> {
    let metrics = link_metrics(ch, &d.rics, &d.alpha, &scenario.params)?;
    let residuals = constraint_residuals(scenario, ch, d)?;
    Ok(IterationRecord {
        objective: objective(scenario, ch, d)?,
        sum_v2v_rate: metrics.rate_n.iter().sum(),
        max_residual: residuals.values().copied().fold(0.0, f64::max),
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Runs the three blocks in turn until the relative improvement of `Σ S_m`
/// drops below `delta` or `max_outer` iterations pass.
///
/// An infeasible start is an error. A block failure ends the loop with
/// `converged = false` and the last accepted decision.
pub fn run_aioa(scenario: &Scenario, ch: &ChannelSet, init: &Decision, opts: &AioaOptions) -> Result<SolveReport> {
    let start = Instant::now();
    let p = &scenario.params;
    let init_res = constraint_residuals(scenario, ch, init)?;
    if let Some((family, v)) = init_res.iter().find(|(_, v)| **v > 1e-8) {
        return Err(Error::OutageInfeasible(format!("initial decision violates {family} by {v:.3e}")));
    }
    let mut d = init.clone();
    let mut value = objective(scenario, ch, &d)?;
    let mut trace = vec![value];
    let mut records = vec![evaluate(scenario, ch, &d, start)?];
    let mut timings = Vec::new();
    let mut warnings = Vec::new();
    let mut converged = false;

    for k in 0..opts.max_outer {
        let mut t = BlockTimings::default();
        let step = (|| -> Result<()> {
            let clock = Instant::now();
            let (rho, _) = solve_rho(scenario, ch, &d.alpha, &d.rics, &d.rho, opts.fp)?;
            let cand = Decision { rho, ..d.clone() };
            let v = objective(scenario, ch, &cand)?;
            if v >= value {
                (d, value) = (cand, v);
            }
            t.rho = clock.elapsed().as_secs_f64();

            let clock = Instant::now();
            let sca = solve_alpha(scenario, ch, &d.rics, &d.rho, &d.alpha, opts.sca)?;
            let cand = Decision { alpha: sca.alpha, ..d.clone() };
            let v = objective(scenario, ch, &cand)?;
            if v >= value {
                (d, value) = (cand, v);
            }
            t.alpha = clock.elapsed().as_secs_f64();

            if opts.fixed_rics {
                return Ok(());
            }
            let clock = Instant::now();
            let sdr = SdrOptions { seed: opts.sdr.seed ^ ((k as u64) << 40), ..opts.sdr };
            let (rep, _) = solve_phi(scenario, ch, &d.alpha, &d.rho, &d.rics, sdr)?;
            if !rep.sdp_converged {
                warnings.push(format!("iteration {}: relaxation hit its iteration cap", k + 1));
            }
            if rep.fallback {
                warnings.push(format!("iteration {}: no feasible randomization candidate", k + 1));
            }
            let cand = Decision { rics: rep.rics, ..d.clone() };
            let v = objective(scenario, ch, &cand)?;
            if v >= value {
                (d, value) = (cand, v);
            }
            t.phi = clock.elapsed().as_secs_f64();
            Ok(())
        })();
        if let Err(e) = step {
            log::warn!("outer iteration {} failed: {e}", k + 1);
            warnings.push(format!("iteration {}: {e}", k + 1));
            break;
        }
        timings.push(t);
        let prev = *trace.last().unwrap();
        trace.push(value);
        records.push(evaluate(scenario, ch, &d, start)?);
        let gain = if value > 0.0 { (value - prev) / value } else { 0.0 };
        if gain < opts.delta {
            converged = true;
            break;
        }
    }

    let constraint_residuals = constraint_residuals(scenario, ch, &d)?;
    let empirical_outage = if opts.outage_trials > 0 && ch.n() > 0 {
        outage_monte_carlo(ch, &d.rics, &d.alpha, p, opts.outage_trials, scenario.seed, OutageOptions::default())?.estimate
    } else {
        Vec::new()
    };
    Ok(SolveReport {
        normalized_safety: normalized_safety(scenario, ch, &d)?,
        iterations: timings.len(),
        objective_trace: trace,
        records,
        block_timings: timings,
        converged,
        decision: d,
        constraint_residuals,
        empirical_outage,
        warnings,
    })
}

/// Rounded sharing matrix and the objective before and after rounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rounded {
    pub alpha: SharingMatrix,
    pub relaxed_objective: f64,
    pub rounded_objective: f64,
}

/// Greedy rounding: visits entries by descending relaxed value and switches an
/// entry on when its CV and pair are both still free and the pair's outage
/// budget admits it.
pub fn round_alpha(alpha: &SharingMatrix, scenario: &Scenario, ch: &ChannelSet, decision: &Decision) -> Result<Rounded> {
    let poly = AlphaPolytope::new(ch, &decision.rics, &scenario.params)?;
    let (m, n) = (alpha.m, alpha.n);
    let mut order: Vec<usize> = (0..m * n).filter(|&i| alpha.data[i] > 0.0).collect();
    order.sort_by(|&a, &b| alpha.data[b].total_cmp(&alpha.data[a]).then(a.cmp(&b)));
    let mut out = SharingMatrix::zeros(m, n);
    let (mut row_used, mut col_used) = (vec![false; m], vec![false; n]);
    for i in order {
        let (r, c) = (i / n, i % n);
        if !row_used[r] && !col_used[c] && poly.weights[i] <= 1.0 {
            out.data[i] = 1.0;
            row_used[r] = true;
            col_used[c] = true;
        }
    }
    let relaxed = Decision { alpha: alpha.clone(), ..decision.clone() };
    let rounded = Decision { alpha: out.clone(), ..decision.clone() };
    Ok(Rounded {
        alpha: out,
        relaxed_objective: objective(scenario, ch, &relaxed)?,
        rounded_objective: objective(scenario, ch, &rounded)?,
    })
}
