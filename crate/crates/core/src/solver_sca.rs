//! Sharing-matrix block: log-sum-exp delay bound, DC rate split and SCA.
//!
//! The uplink rate of CV `m` is written as `R = p(α) − q(α)` with
//!
//! * `p(α) = W log2(Ξ1 + Σ_n Ξ2_n α_mn + Wξ0)`
//! * `q(α) = W log2(Σ_n Ξ2_n α_mn + Wξ0)`
//!
//! Both parts are concave. Replacing `q` by its tangent at `α_k` gives
//! `q̂ ≥ q`, so the surrogate rate `p − q̂` is a concave under-estimator of the
//! true rate that touches it at `α_k`. The surrogate delay bound is then a
//! convex upper bound of the true bound, and minimizing it can only decrease
//! the true bound.

use std::f64::consts::LN_2;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::link::{expected_gains, surrogate_threshold, SharingMatrix};
use crate::numopt::{dykstra, project_box, projected_gradient, DykstraOptions, PgOptions};
use crate::offload::OffloadVector;
use crate::rics::{phi_r, RicsState};
use crate::scenario::{Scenario, SharingPolicy, SystemParams, TaskSpec};

/// Delays are expressed in this unit before exponentiation.
pub const DELAY_SCALE_S: f64 = 1e-3;

/// `ln(e^τ_l + e^τ_o)`, a smooth upper bound on `max{τ_l, τ_o}`.
pub fn lse_delay_bound(tau_l: f64, tau_o: f64) -> f64 {
    let hi = tau_l.max(tau_o);
    let lo = tau_l.min(tau_o);
    if hi.is_infinite() {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Constants of the DC split for one CV.
#[derive(Debug, Clone, PartialEq)]
pub struct DcParts {
    /// Received V2I signal power.
    pub xi1: f64,
    /// V2V transmitter power at the BS, per pair.
    pub xi2: Vec<f64>,
}

pub fn dc_rate_parts(ch: &ChannelSet, rics: &RicsState, p: &SystemParams, m: usize) -> DcParts {
    let xi1 = crate::link::uplink_signal_power(ch, &phi_r(rics), p, m);
    let xi2 = ch.h_nb.iter().map(|h| p.p_t * h.scalar().norm_sqr()).collect();
    DcParts { xi1, xi2 }
}

impl DcParts {
    fn interference(&self, row: &[f64]) -> f64 {
        self.xi2.iter().zip(row).map(|(x, a)| x * a).sum()
    }

    pub fn p(&self, row: &[f64], w: f64, noise: f64) -> f64 {
        w * (self.xi1 + self.interference(row) + noise).log2()
    }

    pub fn q(&self, row: &[f64], w: f64, noise: f64) -> f64 {
        w * (self.interference(row) + noise).log2()
    }

    pub fn rate(&self, row: &[f64], w: f64, noise: f64) -> f64 {
        w * (1.0 + self.xi1 / (self.interference(row) + noise)).log2()
    }

    /// Tangent of `q` at `at`, evaluated at `row`.
    pub fn q_linearized(&self, at: &[f64], row: &[f64], w: f64, noise: f64) -> f64 {
        let d = self.interference(at) + noise;
        let slope: f64 = self.xi2.iter().zip(row).zip(at).map(|((x, a), a0)| x * (a - a0)).sum();
        self.q(at, w, noise) + w * slope / (d * LN_2)
    }

    /// Surrogate rate `p − q̂`.
    pub fn surrogate_rate(&self, at: &[f64], row: &[f64], w: f64, noise: f64) -> f64 {
        self.p(row, w, noise) - self.q_linearized(at, row, w, noise)
    }
}

/// Feasible set of the relaxed sharing matrix (row-major vector).
#[derive(Debug, Clone)]
pub struct AlphaPolytope {
    pub m: usize,
    pub n: usize,
    /// `P_m · G_mn / b_n`, row-major.
    pub weights: Vec<f64>,
    /// Outage budget `b_n = P_t E|h_n|² / γ̃_c − Wξ0` per pair; the outage
    /// rows read `Σ_m α_mn weights_mn <= 1`.
    pub budget: Vec<f64>,
    pub policy: SharingPolicy,
}

impl AlphaPolytope {
    pub fn new(ch: &ChannelSet, rics: &RicsState, p: &SystemParams) -> Result<Self> {
        let gc = surrogate_threshold(p)?;
        let g = expected_gains(ch, rics);
        let (m, n) = (ch.m(), ch.n());
        let budget: Vec<f64> = ch.h_n.iter().map(|h| p.p_t * h.power() / gc - p.noise_power).collect();
        if let Some(j) = budget.iter().position(|&b| !(b > 0.0)) {
            return Err(Error::OutageInfeasible(format!("pair {j} misses the SINR target even without interference")));
        }
        let weights = (0..m)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| p.p_m * g[i][j] / budget[j])
            .collect();
        Ok(Self { m, n, weights, budget, policy: p.sharing })
    }

    /// Number of active couplings required under [`SharingPolicy::Required`].
    pub fn required_total(&self) -> Option<f64> {
        match self.policy {
            SharingPolicy::Required => Some(self.m.min(self.n) as f64),
            SharingPolicy::Optional => None,
        }
    }

    fn project_rows(&self, x: &Vec<f64>) -> Vec<f64> {
        let mut out = x.clone();
        for row in out.chunks_mut(self.n) {
            let s: f64 = row.iter().sum();
            if s > 1.0 {
                let t = (s - 1.0) / self.n as f64;
                row.iter_mut().for_each(|v| *v -= t);
            }
        }
        out
    }

    fn project_cols(&self, x: &Vec<f64>) -> Vec<f64> {
        let mut out = x.clone();
        for j in 0..self.n {
            let s: f64 = (0..self.m).map(|i| out[i * self.n + j]).sum();
            if s > 1.0 {
                let t = (s - 1.0) / self.m as f64;
                (0..self.m).for_each(|i| out[i * self.n + j] -= t);
            }
        }
        out
    }

    fn project_outage(&self, x: &Vec<f64>) -> Vec<f64> {
        let mut out = x.clone();
        for j in 0..self.n {
            let v: f64 = (0..self.m).map(|i| out[i * self.n + j] * self.weights[i * self.n + j]).sum();
            let nn: f64 = (0..self.m).map(|i| self.weights[i * self.n + j].powi(2)).sum();
            if v > 1.0 && nn > 0.0 {
                let t = (v - 1.0) / nn;
                (0..self.m).for_each(|i| out[i * self.n + j] -= t * self.weights[i * self.n + j]);
            }
        }
        out
    }

    fn project_total(&self, x: &Vec<f64>, k: f64) -> Vec<f64> {
        let t = (x.iter().sum::<f64>() - k) / x.len() as f64;
        x.iter().map(|v| v - t).collect()
    }

    /// Euclidean projection onto the polytope.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let boxp = |v: &Vec<f64>| project_box(v, 0.0, 1.0);
        let rows = |v: &Vec<f64>| self.project_rows(v);
        let outage = |v: &Vec<f64>| self.project_outage(v);
        let opts = DykstraOptions { tol: 1e-11, ..Default::default() };
        let res = match self.required_total() {
            None => dykstra(&x.to_vec(), &[&boxp, &rows, &outage], opts),
            Some(k) => {
                let cols = |v: &Vec<f64>| self.project_cols(v);
                let total = |v: &Vec<f64>| self.project_total(v, k);
                dykstra(&x.to_vec(), &[&boxp, &rows, &cols, &outage, &total], opts)
            }
        };
        match res {
            Ok(r) => Ok(r.x),
            Err(Error::InfeasibleSet(g)) => Err(Error::OutageInfeasible(format!("no sharing matrix meets every constraint (gap {g:.3e})"))),
            Err(e) => Err(e),
        }
    }

    /// Largest constraint violation of `x`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().map(|&v| (-v).max(v - 1.0)).fold(0.0, f64::max);
        for row in x.chunks(self.n) {
            worst = worst.max(row.iter().sum::<f64>() - 1.0);
        }
        for j in 0..self.n {
            let v: f64 = (0..self.m).map(|i| x[i * self.n + j] * self.weights[i * self.n + j]).sum();
            worst = worst.max(v - 1.0);
        }
        if let Some(k) = self.required_total() {
            for j in 0..self.n {
                worst = worst.max((0..self.m).map(|i| x[i * self.n + j]).sum::<f64>() - 1.0);
            }
            worst = worst.max((x.iter().sum::<f64>() - k).abs());
        }
        worst.max(0.0)
    }

    /// A feasible starting point: zero, or a uniform matrix with the required
    /// total projected onto the set.
    pub fn feasible_start(&self) -> Result<Vec<f64>> {
        match self.required_total() {
            None => Ok(vec![0.0; self.m * self.n]),
            Some(k) => self.project(&vec![k / (self.m * self.n) as f64; self.m * self.n]),
        }
    }
}

/// Everything the SCA iteration needs, fixed for the block.
#[derive(Debug, Clone)]
pub struct ScaProblem {
    pub parts: Vec<DcParts>,
    pub tasks: Vec<TaskSpec>,
    pub rho: Vec<f64>,
    pub bandwidth: f64,
    pub noise: f64,
    pub f_server: f64,
    pub polytope: AlphaPolytope,
}

impl ScaProblem {
    pub fn new(scenario: &Scenario, ch: &ChannelSet, rics: &RicsState, rho: &OffloadVector) -> Result<Self> {
        let p = &scenario.params;
        Ok(Self {
            parts: (0..ch.m()).map(|m| dc_rate_parts(ch, rics, p, m)).collect(),
            tasks: scenario.tasks.clone(),
            rho: rho.rho.clone(),
            bandwidth: p.bandwidth_hz,
            noise: p.noise_power,
            f_server: p.f_server_hz,
            polytope: AlphaPolytope::new(ch, rics, p)?,
        })
    }

    fn n(&self) -> usize {
        self.polytope.n
    }

    /// `(τ^ub, dτ^ub/dR)` in delay-scale units for CV `m` at rate `r`.
    fn bound_from_rate(&self, m: usize, r: f64) -> (f64, f64) {
        let t = &self.tasks[m];
        let rho = self.rho[m];
        let tl = (1.0 - rho) * t.c / t.f / DELAY_SCALE_S;
        if rho == 0.0 {
            return (lse_delay_bound(tl, 0.0), 0.0);
        }
        if !(r > 0.0) {
            return (f64::INFINITY, 0.0);
        }
        let to = rho * (t.s / r + t.c / self.f_server) / DELAY_SCALE_S;
        let ub = lse_delay_bound(tl, to);
        let w_o = (to - ub).exp();
        (ub, w_o * (-rho * t.s / (r * r)) / DELAY_SCALE_S)
    }

    /// True `Σ_m τ^ub_m(α)` in delay-scale units.
    pub fn true_bound(&self, alpha: &[f64]) -> f64 {
        let n = self.n();
        self.parts
            .iter()
            .enumerate()
            .map(|(m, d)| self.bound_from_rate(m, d.rate(&alpha[m * n..(m + 1) * n], self.bandwidth, self.noise)).0)
            .sum()
    }

    /// Surrogate `Σ_m τ^ub_m` around `at` and its gradient.
    pub fn surrogate_bound(&self, at: &[f64], alpha: &[f64]) -> (f64, Vec<f64>) {
        let n = self.n();
        let mut total = 0.0;
        let mut grad = vec![0.0; alpha.len()];
        for (m, d) in self.parts.iter().enumerate() {
            let row = &alpha[m * n..(m + 1) * n];
            let row0 = &at[m * n..(m + 1) * n];
            let r = d.surrogate_rate(row0, row, self.bandwidth, self.noise);
            let (ub, dr) = self.bound_from_rate(m, r);
            total += ub;
            if dr != 0.0 {
                let dp = d.xi1 + d.interference(row) + self.noise;
                let dq = d.interference(row0) + self.noise;
                for (j, x) in d.xi2.iter().enumerate() {
                    let drate = self.bandwidth / LN_2 * (x / dp - x / dq);
                    grad[m * n + j] = dr * drate;
                }
            }
        }
        (total, grad)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScaOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub pg: PgOptions,
}

impl Default for ScaOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 50, pg: PgOptions { max_iter: 500, ..Default::default() } }
    }
}

/// One SCA step: minimizes the convex surrogate built at `alpha_k` over the
/// polytope. The surrogate value at the output never exceeds its value at
/// `alpha_k`.
pub fn sca_step(prob: &ScaProblem, alpha_k: &[f64], pg: PgOptions) -> Result<Vec<f64>> {
    let at = alpha_k.to_vec();
    let f = |x: &Vec<f64>| {
        let (v, g) = prob.surrogate_bound(&at, x);
        (-v, g.iter().map(|d| -d).collect::<Vec<f64>>())
    };
    let project = |x: &Vec<f64>| prob.polytope.project(x);
    let start_val = prob.surrogate_bound(&at, &at).0;
    // the polytope sits inside the unit box
    let diameter = (at.len() as f64).sqrt();
    let pg = PgOptions { max_move: pg.max_move.min(diameter), ..pg };
    let r = projected_gradient(f, project, &at, pg)?;
    if -r.value <= start_val {
        Ok(r.x)
    } else {
        Ok(at)
    }
}

/// SCA result: the sharing matrix and the true bound per iteration.
#[derive(Debug, Clone)]
pub struct ScaReport {
    pub alpha: SharingMatrix,
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Optimizes the relaxed sharing matrix for fixed ratios and RICS state.
///
/// An infeasible `init` is replaced by its projection onto the feasible set.
pub fn solve_alpha(
    scenario: &Scenario,
    ch: &ChannelSet,
    rics: &RicsState,
    rho: &OffloadVector,
    init: &SharingMatrix,
    opts: ScaOptions,
) -> Result<ScaReport> {
    let prob = ScaProblem::new(scenario, ch, rics, rho)?;
    solve_alpha_problem(&prob, init, opts)
}

pub fn solve_alpha_problem(prob: &ScaProblem, init: &SharingMatrix, opts: ScaOptions) -> Result<ScaReport> {
    let poly = &prob.polytope;
    let mut alpha = if poly.residual(&init.data) <= 1e-9 { init.data.clone() } else { poly.project(&init.data)? };
    let mut val = prob.true_bound(&alpha);
    let mut trace = vec![val];
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        iterations += 1;
        let next = sca_step(prob, &alpha, opts.pg)?;
        let nv = prob.true_bound(&next);
        if nv > val {
            break;
        }
        let gain = val - nv;
        alpha = next;
        val = nv;
        trace.push(val);
        if gain <= opts.tol * val.abs() {
            break;
        }
    }
    Ok(ScaReport { alpha: SharingMatrix { m: poly.m, n: poly.n, data: alpha }, trace, iterations })
}

/// True `Σ_m max{τ_l, τ_o}` in delay-scale units.
pub fn true_max_delay(prob: &ScaProblem, alpha: &[f64]) -> f64 {
    let n = prob.n();
    prob.parts
        .iter()
        .enumerate()
        .map(|(m, d)| {
            let r = d.rate(&alpha[m * n..(m + 1) * n], prob.bandwidth, prob.noise);
            let t = &prob.tasks[m];
            let rho = prob.rho[m];
            let d = crate::offload::delays(t, rho, r, prob.f_server);
            d.total / DELAY_SCALE_S
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_channels;
    use crate::link::sinr_uplink;
    use crate::scenario::{generate_scenario, PlacementConfig};
    use rand::Rng;

    fn instance(m: usize, n: usize, seed: u64, policy: SharingPolicy) -> (Scenario, ChannelSet) {
        let mut p = SystemParams::default();
        p.l = 8;
        p.m = m;
        p.n = n;
        p.sharing = policy;
        let sc = generate_scenario(&p, &PlacementConfig::default(), seed);
        let ch = draw_channels(&sc, seed).unwrap();
        (sc, ch)
    }

    #[test]
    fn lse_examples() {
        assert!((lse_delay_bound(1.0, 1.0) - (1.0 + LN_2)).abs() < 1e-15);
        let v = lse_delay_bound(10.0, 0.0);
        assert!((v - 10.000_045_4).abs() < 1e-7);
        assert!((lse_delay_bound(1e6, 1e6 - 1.0) - crate::numopt::logsumexp(&[1e6, 1e6 - 1.0]).unwrap()).abs() < 1e-9);
        let mut rng = crate::rng::stream(1, crate::rng::Domain::Scheme, 2, 0);
        for _ in 0..10_000 {
            let a: f64 = rng.random_range(0.0..1e6);
            let b: f64 = rng.random_range(0.0..1e6);
            let v = lse_delay_bound(a, b) - a.max(b);
            assert!((0.0..=LN_2 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn dc_split_matches_uplink_rate() {
        let (sc, ch) = instance(3, 2, 4, SharingPolicy::Optional);
        let p = &sc.params;
        let rics = RicsState::identity_split(p.l, p.psi);
        let mut rng = crate::rng::stream(9, crate::rng::Domain::Scheme, 0, 0);
        for _ in 0..20 {
            let a = SharingMatrix { m: 3, n: 2, data: (0..6).map(|_| rng.random::<f64>() * 0.5).collect() };
            for m in 0..3 {
                let d = dc_rate_parts(&ch, &rics, p, m);
                let row = &a.data[m * 2..m * 2 + 2];
                let r = d.p(row, p.bandwidth_hz, p.noise_power) - d.q(row, p.bandwidth_hz, p.noise_power);
                let truth = crate::link::rate(p.bandwidth_hz, sinr_uplink(&ch, &rics, &a, p, m));
                assert!((r - truth).abs() <= 1e-9 * truth, "{r} {truth}");
            }
        }
        let d = dc_rate_parts(&ch, &rics, p, 0);
        let z = [0.0, 0.0];
        let direct = p.bandwidth_hz * (1.0 + d.xi1 / p.noise_power).log2();
        assert!((d.rate(&z, p.bandwidth_hz, p.noise_power) - direct).abs() <= 1e-12 * direct);
        // Ξ2 ignores Φ_t
        let mut other = rics.clone();
        other.theta_t = vec![1.0; p.l];
        assert_eq!(dc_rate_parts(&ch, &other, p, 0).xi2, d.xi2);
    }

    #[test]
    fn surrogate_rate_under_estimates_and_touches() {
        let d = DcParts { xi1: 3e-9, xi2: vec![2e-10, 7e-11, 5e-9] };
        let (w, noise) = (1e7, 1e-14);
        let mut rng = crate::rng::stream(3, crate::rng::Domain::Scheme, 3, 0);
        for _ in 0..1000 {
            let at: Vec<f64> = (0..3).map(|_| rng.random()).collect();
            let x: Vec<f64> = (0..3).map(|_| rng.random()).collect();
            let tight = d.surrogate_rate(&at, &at, w, noise);
            assert!((tight - d.rate(&at, w, noise)).abs() <= 1e-9 * d.rate(&at, w, noise).max(1.0));
            assert!(d.surrogate_rate(&at, &x, w, noise) <= d.rate(&x, w, noise) + 1e-9 * d.rate(&x, w, noise).max(1.0));
        }
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        let (sc, ch) = instance(3, 2, 11, SharingPolicy::Optional);
        let rics = RicsState::identity_split(sc.params.l, sc.params.psi);
        let prob = ScaProblem::new(&sc, &ch, &rics, &OffloadVector::uniform(3, 0.6)).unwrap();
        let at = vec![0.2, 0.1, 0.0, 0.3, 0.4, 0.4];
        let x = vec![0.25, 0.05, 0.1, 0.2, 0.3, 0.5];
        let (_, g) = prob.surrogate_bound(&at, &x);
        for i in 0..x.len() {
            let h = 1e-6;
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (prob.surrogate_bound(&at, &a).0 - prob.surrogate_bound(&at, &b).0) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-4 * g[i].abs().max(1e-6), "{i}: {fd} {}", g[i]);
        }
    }

    #[test]
    fn solve_alpha_descends_and_stays_feasible() {
        for policy in [SharingPolicy::Optional, SharingPolicy::Required] {
            let (sc, ch) = instance(4, 3, 21, policy);
            let rics = RicsState::identity_split(sc.params.l, sc.params.psi);
            let prob = ScaProblem::new(&sc, &ch, &rics, &OffloadVector::uniform(4, 0.7)).unwrap();
            let start = SharingMatrix { m: 4, n: 3, data: prob.polytope.feasible_start().unwrap() };
            let rep = solve_alpha_problem(&prob, &start, ScaOptions::default()).unwrap();
            for w in rep.trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9 * w[0].abs());
            }
            assert!(prob.polytope.residual(&rep.alpha.data) <= 1e-8, "{:?}", policy);
            for m in 0..4 {
                assert!(rep.alpha.row_sum(m) <= 1.0 + 1e-8);
            }
            assert!(true_max_delay(&prob, &rep.alpha.data) <= prob.true_bound(&rep.alpha.data));
        }
    }

    #[test]
    fn sharing_that_helps_nobody_stays_zero() {
        let (sc, ch) = instance(1, 1, 2, SharingPolicy::Optional);
        let rics = RicsState::identity_split(sc.params.l, sc.params.psi);
        let rep = solve_alpha(&sc, &ch, &rics, &OffloadVector::uniform(1, 0.8), &SharingMatrix::zeros(1, 1), ScaOptions::default()).unwrap();
        assert_eq!(rep.alpha.data, vec![0.0]);
        // grid reference: the bound only grows with α
        let prob = ScaProblem::new(&sc, &ch, &rics, &OffloadVector::uniform(1, 0.8)).unwrap();
        let base = prob.true_bound(&[0.0]);
        for k in 1..=100 {
            assert!(prob.true_bound(&[k as f64 / 100.0]) >= base);
        }
    }

    #[test]
    fn required_policy_matches_binary_enumeration() {
        let (sc, ch) = instance(2, 2, 5, SharingPolicy::Required);
        let rics = RicsState::identity_split(sc.params.l, sc.params.psi);
        let prob = ScaProblem::new(&sc, &ch, &rics, &OffloadVector::uniform(2, 0.7)).unwrap();
        let start = SharingMatrix { m: 2, n: 2, data: prob.polytope.feasible_start().unwrap() };
        let rep = solve_alpha_problem(&prob, &start, ScaOptions::default()).unwrap();
        let got = prob.true_bound(&rep.alpha.data);
        let mut best = f64::INFINITY;
        for bits in 0u32..16 {
            let a: Vec<f64> = (0..4).map(|i| ((bits >> i) & 1) as f64).collect();
            if prob.polytope.residual(&a) <= 1e-12 {
                best = best.min(prob.true_bound(&a));
            }
        }
        assert!(best.is_finite());
        assert!(got <= best * 1.01, "{got} {best}");
    }

    #[test]
    fn unreachable_target_is_outage_infeasible() {
        let (mut sc, ch) = instance(2, 2, 5, SharingPolicy::Optional);
        sc.params.gamma_th_db = 200.0;
        sc.params.refresh_derived();
        let rics = RicsState::identity_split(sc.params.l, sc.params.psi);
        let r = ScaProblem::new(&sc, &ch, &rics, &OffloadVector::uniform(2, 0.5));
        assert!(matches!(r, Err(Error::OutageInfeasible(_))));
    }

    #[test]
    fn projection_is_feasible_and_idempotent() {
        let (sc, ch) = instance(4, 3, 8, SharingPolicy::Required);
        let rics = RicsState::identity_split(sc.params.l, sc.params.psi);
        let poly = AlphaPolytope::new(&ch, &rics, &sc.params).unwrap();
        let mut rng = crate::rng::stream(2, crate::rng::Domain::Scheme, 5, 0);
        for _ in 0..20 {
            let x: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..2.0)).collect();
            let y = poly.project(&x).unwrap();
            assert!(poly.residual(&y) <= 1e-8);
            let z = poly.project(&y).unwrap();
            assert!(y.iter().zip(&z).all(|(a, b)| (a - b).abs() < 1e-8));
        }
    }
}
