//! RICS block: semidefinite relaxation and Gaussian randomization.
//!
//! With `v = [φ_1, …, φ_L, 1]` a received amplitude `d + Σ_l c_l φ_l` becomes
//! `w^H v` for `w = conj([c; d])`, so powers are quadratic forms `v^H R v`
//! with `R = w w^H`. Lifting `V = v v^H` and dropping the rank constraint
//! leaves a concave program over two PSD matrices, solved here by projected
//! gradient ascent, projecting through a semismooth Newton method on the dual.
//! The rate terms may be weighted by marginal safety, see [`RateWeights`].

use std::io::Write;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::link::SharingMatrix;
use crate::numopt::{hermitian_eigen, hermitian_part, min_eigenvalue, projected_gradient, CMat, MatPair, PgOptions, Space};
use crate::offload::{safety_coefficient, safety_from_rates, uplink_rates, OffloadVector};
use crate::rics::{interference_nulling_phases, RicsState};
use crate::rng::{cn01, stream, Domain};
use crate::scenario::{Scenario, SystemParams};
use crate::solver_sca::AlphaPolytope;
use crate::C64;

const ONE: C64 = C64::new(1.0, 0.0);

/// `w` for the uplink of CV `m` (instantaneous channels).
pub fn uplink_vector(ch: &ChannelSet, m: usize) -> DVector<C64> {
    let l = ch.l();
    let mut w = DVector::from_element(l + 1, C64::new(0.0, 0.0));
    for i in 0..l {
        w[i] = (ch.h_rb.total[i] * ch.h_mr[m].total[i]).conj();
    }
    w[l] = ch.h_mb[m].scalar().conj();
    w
}

/// `P_m w w^H`: `v^H R v = P_m |h_mB + Σ_l h_RB,l φ_l h_mR,l|²`.
pub fn build_uplink_data(ch: &ChannelSet, p: &SystemParams, m: usize) -> CMat {
    let w = uplink_vector(ch, m);
    &w * w.adjoint() * C64::new(p.p_m, 0.0)
}

/// Expected interference data for pair `(m, n)` with amplification `psi`:
/// `v^H R v = E|h_mn + Σ_l h_Rn,l^* ψ_l v_l h_mR,l|²` over the scattered parts.
pub fn build_interference_data(ch: &ChannelSet, psi: &[f64], m: usize, n: usize) -> CMat {
    let l = ch.l();
    let rn = &ch.h_rn[n];
    let mr = &ch.h_mr[m];
    let direct = &ch.h_mn[m][n];
    let (mean_rn, mean_mr) = (rn.mean(), mr.mean());
    let pow = rn.power() * mr.power();
    let mut w = DVector::from_element(l + 1, C64::new(0.0, 0.0));
    let mut var = vec![0.0; l + 1];
    for i in 0..l {
        let mu = mean_rn[i].conj() * mean_mr[i];
        w[i] = (mu * psi[i]).conj();
        var[i] = psi[i] * psi[i] * (pow - mu.norm_sqr());
    }
    let md = direct.mean()[0];
    w[l] = md.conj();
    var[l] = direct.power() - md.norm_sqr();
    let mut r = &w * w.adjoint();
    for (i, v) in var.iter().enumerate() {
        r[(i, i)] += C64::new(*v, 0.0);
    }
    r
}

/// `[√β_l e^{jθ_l}; 1]`.
pub fn lift(theta: &[f64], beta: &[f64]) -> DVector<C64> {
    let l = theta.len();
    DVector::from_fn(l + 1, |i, _| if i < l { C64::from_polar(beta[i].sqrt(), theta[i]) } else { ONE })
}

pub fn quad_form(r: &CMat, v: &DVector<C64>) -> f64 {
    (v.adjoint() * r * v)[(0, 0)].re
}

/// `Re Tr(V R)` for Hermitian `V`, `R`.
pub fn trace_product(v: &CMat, r: &CMat) -> f64 {
    Space::dot(v, r)
}

fn rank_one(v: &DVector<C64>) -> CMat {
    v * v.adjoint()
}

/// Lifted pair of a RICS state.
pub fn lifted_state(rics: &RicsState) -> MatPair {
    MatPair(rank_one(&lift(&rics.theta_r, &rics.beta_r)), rank_one(&lift(&rics.theta_t, &rics.beta_t)))
}

/// Data of the relaxed program for fixed sharing.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub l: usize,
    /// Uplink data normalized by each CV's interference-plus-noise power.
    pub r_b: Vec<CMat>,
    /// Outage halfspaces `Tr(V_t A) <= b`, scaled to unit Frobenius norm.
    pub halfspaces: Vec<(CMat, f64)>,
    /// Per-CV weights on the rate terms, all 1 for the plain sum rate.
    pub weights: Vec<f64>,
}

impl SdpProblem {
    pub fn new(ch: &ChannelSet, alpha: &SharingMatrix, p: &SystemParams, psi: &[f64]) -> Result<Self> {
        let (mm, nn) = (ch.m(), ch.n());
        let r_b = (0..mm)
            .map(|m| {
                let d = crate::link::uplink_interference(ch, alpha, p, m);
                build_uplink_data(ch, p, m) * C64::new(1.0 / d, 0.0)
            })
            .collect();
        let gc = crate::link::surrogate_threshold(p)?;
        let mut halfspaces = Vec::new();
        for n in 0..nn {
            let b = p.p_t * ch.h_n[n].power() / gc - p.noise_power;
            let active: Vec<usize> = (0..mm).filter(|&m| alpha.get(m, n) > 0.0).collect();
            if active.is_empty() {
                continue;
            }
            let mut a = CMat::zeros(ch.l() + 1, ch.l() + 1);
            for m in active {
                a += build_interference_data(ch, psi, m, n) * C64::new(alpha.get(m, n) * p.p_m, 0.0);
            }
            let scale = a.norm();
            if scale > 0.0 {
                halfspaces.push((a / C64::new(scale, 0.0), b / scale));
            }
        }
        Ok(Self { l: ch.l(), weights: vec![1.0; mm], r_b, halfspaces })
    }

    /// Replaces the rate weights. They must be finite and non-negative.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.r_b.len() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Dimension(format!("{} rate weights for {} CVs", weights.len(), self.r_b.len())));
        }
        self.weights = weights;
        Ok(self)
    }

    /// `Σ_m w_m log2(1 + Tr(V_r R̂_m))`.
    pub fn objective(&self, v_r: &CMat) -> f64 {
        self.r_b.iter().zip(&self.weights).map(|(r, w)| w * (1.0 + trace_product(v_r, r)).log2()).sum()
    }

    pub fn rank_one_objective(&self, rics: &RicsState) -> f64 {
        let v = lift(&rics.theta_r, &rics.beta_r);
        self.r_b.iter().zip(&self.weights).map(|(r, w)| w * (1.0 + quad_form(r, &v)).log2()).sum()
    }

    fn gradient(&self, v_r: &CMat) -> CMat {
        let mut g = CMat::zeros(self.l + 1, self.l + 1);
        for (r, w) in self.r_b.iter().zip(&self.weights) {
            let t = trace_product(v_r, r);
            g += r * C64::new(w / ((1.0 + t) * std::f64::consts::LN_2), 0.0);
        }
        g
    }

    /// Projection onto PSD ∩ diagonal/corner constraints ∩ outage halfspaces,
    /// accurate to `tol` in the constraint residual.
    pub fn project(&self, x: &MatPair, tol: f64) -> Result<MatPair> {
        project_lifted(x, &self.halfspaces, tol, &mut Vec::new())
    }

    /// Largest violation of the PSD, diagonal, corner and outage constraints.
    pub fn residual(&self, x: &MatPair) -> f64 {
        let mut worst = (-min_eigenvalue(&x.0)).max(-min_eigenvalue(&x.1)).max(0.0);
        for i in 0..self.l {
            worst = worst.max((x.0[(i, i)].re + x.1[(i, i)].re - 1.0).abs());
        }
        worst = worst.max((x.0[(self.l, self.l)] - ONE).norm()).max((x.1[(self.l, self.l)] - ONE).norm());
        for (a, b) in &self.halfspaces {
            worst = worst.max(trace_product(&x.1, a) - b);
        }
        worst
    }
}

/// One side of the lifted pair touched by a dual multiplier.
#[derive(Clone, Copy)]
enum Row {
    /// `[V_r]_ll + [V_t]_ll = 1`.
    Diag(usize),
    /// `[V_r]_{L+1,L+1} = 1`.
    CornerR,
    /// `[V_t]_{L+1,L+1} = 1`.
    CornerT,
    /// `Tr(V_t A_k) <= b_k`, multiplier `z_k >= 0`.
    Half(usize),
}

/// Eigendecomposition of one shifted block and its projection.
struct Spectral {
    q: CMat,
    lam: Vec<f64>,
    proj: CMat,
}

impl Spectral {
    fn new(m: CMat) -> Self {
        let (lam, q) = hermitian_eigen(&m);
        let mut scaled = q.clone();
        for (j, l) in lam.iter().enumerate() {
            scaled.column_mut(j).scale_mut(l.max(0.0));
        }
        let proj = hermitian_part(&(scaled * q.adjoint()));
        Self { q, lam, proj }
    }

    /// Divided differences of `max(λ, 0)`, the weights of the directional
    /// derivative of the projection.
    fn omega(&self) -> CMat {
        let n = self.lam.len();
        CMat::from_fn(n, n, |a, b| {
            let (la, lb) = (self.lam[a], self.lam[b]);
            let w = if la > 0.0 && lb > 0.0 {
                1.0
            } else if la <= 0.0 && lb <= 0.0 {
                0.0
            } else {
                (la.max(0.0) - lb.max(0.0)) / (la - lb)
            };
            C64::new(w, 0.0)
        })
    }
}

/// Dual of the projection onto `{V_r, V_t ⪰ 0, [V_r]_ll + [V_t]_ll = 1,
/// corners = 1, Tr(V_t A_k) <= b_k}`. With `y` the equality multipliers and
/// `z >= 0` those of the halfspaces, the primal point is
/// `P_psd(X + A^* y - B^* z)` and the dual gradient is the constraint residual.
/// The dual is minimized by a semismooth Newton method.
struct LiftedDual<'a> {
    x: &'a MatPair,
    halfspaces: &'a [(CMat, f64)],
    rows: Vec<Row>,
}

struct DualPoint {
    cost: f64,
    grad: Vec<f64>,
    r: Spectral,
    t: Spectral,
}

impl<'a> LiftedDual<'a> {
    fn new(x: &'a MatPair, halfspaces: &'a [(CMat, f64)]) -> Self {
        let l = x.0.nrows() - 1;
        let mut rows: Vec<Row> = (0..l).map(Row::Diag).collect();
        rows.extend([Row::CornerR, Row::CornerT]);
        rows.extend((0..halfspaces.len()).map(Row::Half));
        Self { x, halfspaces, rows }
    }

    fn l(&self) -> usize {
        self.x.0.nrows() - 1
    }

    fn eval(&self, y: &[f64]) -> DualPoint {
        let l = self.l();
        let (mut a, mut b) = (self.x.0.clone(), self.x.1.clone());
        let mut cost = 0.0;
        for (row, &yi) in self.rows.iter().zip(y) {
            let c = C64::new(yi, 0.0);
            match *row {
                Row::Diag(i) => {
                    a[(i, i)] += c;
                    b[(i, i)] += c;
                    cost -= yi;
                }
                Row::CornerR => {
                    a[(l, l)] += c;
                    cost -= yi;
                }
                Row::CornerT => {
                    b[(l, l)] += c;
                    cost -= yi;
                }
                Row::Half(k) => {
                    let (h, bk) = &self.halfspaces[k];
                    b -= h * c;
                    cost += bk * yi;
                }
            }
        }
        let (r, t) = (Spectral::new(a), Spectral::new(b));
        cost += 0.5 * (r.proj.norm_squared() + t.proj.norm_squared());
        let grad = self
            .rows
            .iter()
            .map(|row| match *row {
                Row::Diag(i) => r.proj[(i, i)].re + t.proj[(i, i)].re - 1.0,
                Row::CornerR => r.proj[(l, l)].re - 1.0,
                Row::CornerT => t.proj[(l, l)].re - 1.0,
                Row::Half(k) => {
                    let (h, bk) = &self.halfspaces[k];
                    bk - trace_product(&t.proj, h)
                }
            })
            .collect();
        DualPoint { cost, grad, r, t }
    }

    /// Rows that may move: equalities, and halfspace multipliers that are
    /// positive or whose descent direction increases them.
    fn free(&self, y: &[f64], g: &[f64]) -> Vec<usize> {
        (0..y.len())
            .filter(|&i| !matches!(self.rows[i], Row::Half(_)) || y[i] > 0.0 || g[i] < 0.0)
            .collect()
    }

    /// Generalized Hessian of the dual restricted to `rows`:
    /// `H_ij = Σ_blocks Re Σ_ab Ω_ab conj(G̃_i)_ab (G̃_j)_ab` with
    /// `G̃ = Q^H G Q`. Ω is 1 on the positive eigenpairs and 0 on the others,
    /// so only the rows of `G̃` in the smaller of the two index sets are formed;
    /// in the complementary case `H = Gram - Σ (1 - Ω) ...`.
    fn hessian(&self, pt: &DualPoint, rows: &[usize]) -> nalgebra::DMatrix<f64> {
        let l = self.l();
        let n = l + 1;
        let k = rows.len();
        let mut h = nalgebra::DMatrix::<f64>::zeros(k, k);
        for (block, sp) in [(0usize, &pt.r), (1, &pt.t)] {
            let acting: Vec<(usize, Row)> = rows
                .iter()
                .enumerate()
                .map(|(c, &i)| (c, self.rows[i]))
                .filter(|(_, row)| match (row, block) {
                    (Row::Diag(_), _) | (Row::CornerR, 0) | (Row::CornerT, 1) | (Row::Half(_), 1) => true,
                    _ => false,
                })
                .collect();
            if acting.is_empty() {
                continue;
            }
            let pos: Vec<usize> = (0..n).filter(|&a| sp.lam[a] > 0.0).collect();
            let complement = 2 * pos.len() > n;
            let set: Vec<usize> = if complement { (0..n).filter(|&a| sp.lam[a] <= 0.0).collect() } else { pos };
            let omega = sp.omega();
            if !set.is_empty() {
                let in_set: Vec<bool> = (0..n).map(|a| set.contains(&a)).collect();
                let weight = |a: usize, b: usize| {
                    if in_set[b] {
                        1.0
                    } else {
                        let w = omega[(a, b)].re;
                        2.0 * if complement { 1.0 - w } else { w }
                    }
                };
                let qs = sp.q.select_columns(&set);
                let mut cols = CMat::zeros(set.len() * n, acting.len());
                let mut weighted = cols.clone();
                for (c, (_, row)) in acting.iter().enumerate() {
                    let g: CMat = match *row {
                        Row::Diag(d) => outer_rows(&sp.q, &set, d),
                        Row::CornerR | Row::CornerT => outer_rows(&sp.q, &set, l),
                        Row::Half(j) => -(qs.adjoint() * &self.halfspaces[j].0 * &sp.q),
                    };
                    for b in 0..n {
                        for (s, &a) in set.iter().enumerate() {
                            let v = g[(s, b)];
                            cols[(b * set.len() + s, c)] = v;
                            weighted[(b * set.len() + s, c)] = v * weight(a, b);
                        }
                    }
                }
                let m = (cols.adjoint() * weighted).map(|v| v.re);
                let sign = if complement { -1.0 } else { 1.0 };
                for (ci, (ri, _)) in acting.iter().enumerate() {
                    for (cj, (rj, _)) in acting.iter().enumerate() {
                        h[(*ri, *rj)] += sign * m[(ci, cj)];
                    }
                }
            }
            if complement {
                for (ri, a) in &acting {
                    for (rj, b) in &acting {
                        h[(*ri, *rj)] += self.gram(*a, *b);
                    }
                }
            }
        }
        h
    }

    /// `Re <G_a, G_b>` on one block.
    fn gram(&self, a: Row, b: Row) -> f64 {
        let l = self.l();
        let index = |r: Row| match r {
            Row::Diag(d) => Some(d),
            Row::CornerR | Row::CornerT => Some(l),
            Row::Half(_) => None,
        };
        match (a, b) {
            (Row::Half(i), Row::Half(j)) => {
                let (x, y) = (&self.halfspaces[i].0, &self.halfspaces[j].0);
                x.iter().zip(y.iter()).map(|(u, v)| (u.conj() * v).re).sum()
            }
            (Row::Half(i), other) | (other, Row::Half(i)) => {
                let d = index(other).unwrap_or(0);
                -self.halfspaces[i].0[(d, d)].re
            }
            _ => {
                if index(a) == index(b) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Rows `set` of `Q^H e_d e_d^T Q`.
fn outer_rows(q: &CMat, set: &[usize], d: usize) -> CMat {
    let row = q.row(d);
    CMat::from_fn(set.len(), q.ncols(), |s, b| row[set[s]].conj() * row[b])
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const DUAL_MAX_ITER: usize = 200;

/// Projection onto PSD ∩ equalities ∩ halfspaces by semismooth Newton on the
/// dual. Succeeds when the worst constraint residual is at most `tol`, or at
/// most `√tol` once progress stops.
///
/// `warm` holds multipliers from a previous call at a nearby point; it is used
/// as the starting point when its length fits and is overwritten on success.
pub fn project_lifted(x: &MatPair, halfspaces: &[(CMat, f64)], tol: f64, warm: &mut Vec<f64>) -> Result<MatPair> {
    let x = MatPair(hermitian_part(&x.0), hermitian_part(&x.1));
    let dual = LiftedDual::new(&x, halfspaces);
    let dim = dual.rows.len();
    let clamp = |y: &mut [f64]| {
        for (v, row) in y.iter_mut().zip(&dual.rows) {
            if matches!(row, Row::Half(_)) {
                *v = v.max(0.0);
            }
        }
    };
    let mut y = if warm.len() == dim { warm.clone() } else { vec![0.0; dim] };
    clamp(&mut y);
    let mut pt = dual.eval(&y);
    // NaN must not pass for zero, which f64::max would allow
    let stationarity = |y: &[f64], g: &[f64]| {
        dual.free(y, g).iter().map(|&i| g[i].abs()).fold(0.0, |a, v| if v.is_nan() { f64::INFINITY } else { a.max(v) })
    };
    for _ in 0..DUAL_MAX_ITER {
        let res = stationarity(&y, &pt.grad);
        if res <= tol {
            *warm = y;
            return Ok(MatPair(pt.r.proj, pt.t.proj));
        }
        let free = dual.free(&y, &pt.grad);
        let mut h = dual.hessian(&pt, &free);
        let reg = res.min(1e-2).max(1e-12);
        for i in 0..free.len() {
            h[(i, i)] += reg;
        }
        let rhs = DVector::from_iterator(free.len(), free.iter().map(|&i| -pt.grad[i]));
        let mut d = vec![0.0; dim];
        match h.cholesky() {
            Some(ch) => {
                let s = ch.solve(&rhs);
                free.iter().zip(s.iter()).for_each(|(&i, v)| d[i] = *v);
            }
            None => free.iter().for_each(|&i| d[i] = -0.5 * pt.grad[i]),
        }
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..40 {
            let mut yn: Vec<f64> = y.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            clamp(&mut yn);
            let step: Vec<f64> = yn.iter().zip(&y).map(|(a, b)| a - b).collect();
            let cand = dual.eval(&yn);
            // near the solution the cost decrease drowns in rounding, so a
            // step that halves the residual is taken as well
            let armijo = cand.cost <= pt.cost + 1e-4 * dotv(&pt.grad, &step);
            if cand.cost.is_finite() && (armijo || stationarity(&yn, &cand.grad) <= 0.5 * res) {
                next = Some((yn, cand));
                break;
            }
            t *= 0.5;
        }
        let Some((yn, cand)) = next else { break };
        y = yn;
        pt = cand;
    }
    let r = stationarity(&y, &pt.grad);
    if r <= tol.sqrt() {
        *warm = y;
        Ok(MatPair(pt.r.proj, pt.t.proj))
    } else {
        Err(Error::InfeasibleSet(r))
    }
}

/// [`project_lifted`] without outage halfspaces.
pub fn project_psd_equalities(x: &MatPair, tol: f64) -> Result<MatPair> {
    project_lifted(x, &[], tol, &mut Vec::new())
}

#[derive(Debug, Clone, Copy)]
pub struct SdpOptions {
    pub stall_tol: f64,
    pub max_iter: usize,
    pub projection_tol: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { stall_tol: 1e-6, max_iter: 5000, projection_tol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub v: MatPair,
    pub objective: f64,
    pub trace: Vec<f64>,
    pub iterations: usize,
    /// False when the iteration cap was hit; the best iterate is returned.
    pub converged: bool,
    pub residual: f64,
}

/// Maximizes the relaxed objective from a feasible lifted start.
pub fn solve_sdp(prob: &SdpProblem, start: &MatPair, opts: SdpOptions) -> Result<SdpSolution> {
    let f = |x: &MatPair| {
        let z = CMat::zeros(prob.l + 1, prob.l + 1);
        (prob.objective(&x.0), MatPair(prob.gradient(&x.0), z))
    };
    let warm = std::cell::RefCell::new(Vec::new());
    let project = |x: &MatPair| project_lifted(x, &prob.halfspaces, opts.projection_tol, &mut warm.borrow_mut());
    let pg = PgOptions {
        max_iter: opts.max_iter,
        stall_tol: opts.stall_tol,
        // the feasible set has Frobenius diameter at most 2(L + 1)
        max_move: 2.0 * (prob.l + 1) as f64,
        ..Default::default()
    };
    let r = projected_gradient(f, project, start, pg)?;
    if !r.converged {
        log::warn!("SDP ascent stopped at the iteration cap ({} iterations)", r.iterations);
    }
    let residual = prob.residual(&r.x);
    Ok(SdpSolution { objective: r.value, residual, trace: r.trace, iterations: r.iterations, converged: r.converged, v: r.x })
}

/// Fixed quantities for evaluating candidate RICS states.
pub struct PhiContext<'a> {
    pub scenario: &'a Scenario,
    pub ch: &'a ChannelSet,
    pub alpha: &'a SharingMatrix,
    pub rho: &'a OffloadVector,
    pub psi: Vec<f64>,
}

impl PhiContext<'_> {
    /// True `Σ_m S_m` under a candidate state.
    pub fn objective(&self, rics: &RicsState) -> Result<f64> {
        let p = &self.scenario.params;
        let rates = uplink_rates(self.ch, rics, self.alpha, p);
        Ok(safety_from_rates(&self.scenario.tasks, &self.rho.rho, &rates, p)?.iter().sum())
    }

    /// Largest normalized excess of the expected interference over the outage
    /// budget; `<= 0` means feasible.
    pub fn outage_violation(&self, rics: &RicsState) -> Result<f64> {
        let poly = AlphaPolytope::new(self.ch, rics, &self.scenario.params)?;
        let (m, n) = (poly.m, poly.n);
        Ok((0..n)
            .map(|j| (0..m).map(|i| self.alpha.get(i, j) * poly.weights[i * n + j]).sum::<f64>() - 1.0)
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// Rate weights at `rics`, scaled to mean 1.
    /// Weighting the relaxed rate terms by `∂S_m/∂R_m` makes the relaxation
    /// follow `Σ_m S_m` to first order around `rics`.
    pub fn rate_weights(&self, rics: &RicsState, mode: RateWeights) -> Result<Vec<f64>> {
        let p = &self.scenario.params;
        let rates = uplink_rates(self.ch, rics, self.alpha, p);
        if mode == RateWeights::Uniform {
            return Ok(vec![1.0; rates.len()]);
        }
        let mut w = Vec::with_capacity(rates.len());
        for (m, &r) in rates.iter().enumerate() {
            let s = |rate: f64| safety_coefficient(&self.scenario.tasks[m], self.rho.rho[m], rate, p, m);
            // central difference: at τ_l = τ_o the forward one vanishes
            let h = 1e-6 * r.max(1.0);
            w.push(((s(r + h)? - s((r - h).max(0.0))?) / (2.0 * h)).max(0.0));
        }
        let mean = w.iter().sum::<f64>() / w.len().max(1) as f64;
        if !(mean > 0.0 && mean.is_finite()) {
            return Ok(vec![1.0; w.len()]);
        }
        Ok(w.into_iter().map(|x| x / mean).collect())
    }

    fn feasible(&self, rics: &RicsState) -> Result<bool> {
        Ok(self.outage_violation(rics)? <= 1e-9)
    }
}

fn sqrt_factor(v: &CMat) -> CMat {
    let (lams, mut u) = hermitian_eigen(&hermitian_part(v));
    let top = lams.iter().copied().fold(0.0, f64::max);
    for (j, &lam) in lams.iter().enumerate() {
        // numerical noise around a rank-deficient matrix would perturb phases
        let lam = if lam > 1e-12 * top { lam } else { 0.0 };
        u.column_mut(j).scale_mut(lam.sqrt());
    }
    u
}

fn phases_of(z: &DVector<C64>) -> Vec<f64> {
    let l = z.len() - 1;
    // a vanishing reference entry carries no phase; fall back to absolute phases
    let last = if z[l].norm() > 0.0 { z[l] / z[l].norm() } else { C64::new(1.0, 0.0) };
    (0..l).map(|i| (z[i] * last.conj()).arg()).collect()
}

#[derive(Debug, Clone)]
pub struct Randomized {
    pub rics: RicsState,
    pub objective: f64,
    /// Candidates that met the outage constraint.
    pub feasible: usize,
    /// True when no candidate was feasible and the nulling start was used.
    pub fallback: bool,
}

/// Draws `z ~ CN(0, V)` for each lifted matrix, reads phases from `z_l / z_{L+1}`
/// and amplitudes from the diagonal of `V_r`, and keeps the feasible candidate
/// with the best true objective.
pub fn gaussian_randomize(v: &MatPair, ctx: &PhiContext, trials: usize, seed: u64) -> Result<Randomized> {
    let l = v.0.nrows() - 1;
    let beta_r: Vec<f64> = (0..l).map(|i| v.0[(i, i)].re.clamp(0.0, 1.0)).collect();
    let (fr, ft) = (sqrt_factor(&v.0), sqrt_factor(&v.1));
    let candidates: Vec<Result<(f64, bool, RicsState)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, Domain::Randomization, t as u64, 0);
            let r_r = DVector::from_fn(l + 1, |_, _| cn01(&mut rng));
            let r_t = DVector::from_fn(l + 1, |_, _| cn01(&mut rng));
            let state = RicsState::from_parts(phases_of(&(&fr * r_r)), phases_of(&(&ft * r_t)), beta_r.clone(), ctx.psi.clone())?;
            let ok = ctx.feasible(&state)?;
            Ok((ctx.objective(&state)?, ok, state))
        })
        .collect();
    let mut best: Option<(f64, RicsState)> = None;
    let mut feasible = 0;
    for c in candidates {
        let (obj, ok, state) = c?;
        if !ok {
            continue;
        }
        feasible += 1;
        if best.as_ref().is_none_or(|(b, _)| obj > *b) {
            best = Some((obj, state));
        }
    }
    if let Some((objective, rics)) = best {
        return Ok(Randomized { rics, objective, feasible, fallback: false });
    }
    log::warn!("no feasible randomization candidate among {trials}; using nulling phases");
    let rics = nulling_state(ctx.ch, ctx.alpha, &ctx.scenario.params, beta_r, ctx.psi.clone())?;
    Ok(Randomized { objective: ctx.objective(&rics)?, rics, feasible, fallback: true })
}

/// A state whose refraction phases null the strongest expected interferer.
/// With an all-zero sharing matrix the strongest normalized pair is used.
pub fn nulling_state(ch: &ChannelSet, alpha: &SharingMatrix, p: &SystemParams, beta_r: Vec<f64>, psi: Vec<f64>) -> Result<RicsState> {
    let l = ch.l();
    let base = RicsState::from_parts(vec![0.0; l], vec![0.0; l], beta_r, psi)?;
    if ch.m() == 0 || ch.n() == 0 {
        return Ok(base);
    }
    let poly = AlphaPolytope::new(ch, &base, p)?;
    let any = alpha.data.iter().any(|&a| a > 0.0);
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for m in 0..ch.m() {
        for n in 0..ch.n() {
            let w = poly.weights[m * ch.n() + n] * if any { alpha.get(m, n) } else { 1.0 };
            if w > best.0 {
                best = (w, m, n);
            }
        }
    }
    let (_, m, n) = best;
    let (theta_t, _) = interference_nulling_phases(ch.h_mn[m][n].scalar(), &ch.h_rn[n].total, &ch.h_mr[m].total, &base);
    Ok(RicsState { theta_t, ..base })
}

/// How the rate terms of the relaxation are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateWeights {
    /// Plain sum rate.
    Uniform,
    /// `∂S_m/∂R_m` at the current ratios.
    Marginal,
}

#[derive(Debug, Clone, Copy)]
pub struct SdrOptions {
    pub trials: usize,
    pub seed: u64,
    /// Relaxations solved at most, each reweighted at the previous pass's
    /// state. Stops early once a pass does not improve the objective.
    pub passes: usize,
    pub weights: RateWeights,
    pub sdp: SdpOptions,
}

impl Default for SdrOptions {
    fn default() -> Self {
        Self { trials: 200, seed: 0, passes: 4, weights: RateWeights::Marginal, sdp: SdpOptions::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhiReport {
    pub rics: RicsState,
    /// Relaxed objective per ascent iteration.
    pub trace: Vec<f64>,
    pub sdp_objective: f64,
    /// Relaxed objective of the chosen randomized candidate.
    pub candidate_relaxed_objective: f64,
    pub candidate_objective: f64,
    pub init_objective: f64,
    pub objective: f64,
    pub sdp_converged: bool,
    pub sdp_residual: f64,
    pub fallback: bool,
    pub feasible_candidates: usize,
    /// True when a randomized candidate replaced the initial state.
    pub improved: bool,
    /// Relaxations solved.
    pub passes: usize,
}

/// Relaxation, ascent and randomization for fixed ratios and sharing.
/// The rate terms are weighted by their marginal safety at the current state
/// and the relaxation is re-solved while the recovered state improves.
/// Returns the best state seen, which is never worse than `init`. The
/// returned solution and the relaxed figures in the report belong to the
/// last pass.
pub fn solve_phi(
    scenario: &Scenario,
    ch: &ChannelSet,
    alpha: &SharingMatrix,
    rho: &OffloadVector,
    init: &RicsState,
    opts: SdrOptions,
) -> Result<(PhiReport, SdpSolution)> {
    let p = &scenario.params;
    let ctx = PhiContext { scenario, ch, alpha, rho, psi: init.psi.clone() };
    let init_objective = ctx.objective(init)?;
    let base = SdpProblem::new(ch, alpha, p, &init.psi)?;
    let (mut rics, mut objective) = (init.clone(), init_objective);
    let mut pass = 0;
    loop {
        let prob = base.clone().with_weights(ctx.rate_weights(&rics, opts.weights)?)?;
        let start = lifted_state(&rics);
        let start = if prob.residual(&start) <= 1e-9 { start } else { prob.project(&start, opts.sdp.projection_tol)? };
        let sol = solve_sdp(&prob, &start, opts.sdp)?;
        let rnd = gaussian_randomize(&sol.v, &ctx, opts.trials, opts.seed ^ ((pass as u64) << 24))?;
        pass += 1;
        let better = ctx.feasible(&rnd.rics)? && rnd.objective > objective;
        if better {
            (rics, objective) = (rnd.rics.clone(), rnd.objective);
        }
        if !better || pass >= opts.passes.max(1) {
            let report = PhiReport {
                candidate_relaxed_objective: prob.rank_one_objective(&rnd.rics),
                candidate_objective: rnd.objective,
                improved: objective > init_objective,
                objective,
                rics,
                trace: sol.trace.clone(),
                sdp_objective: sol.objective,
                init_objective,
                sdp_converged: sol.converged,
                sdp_residual: sol.residual,
                fallback: rnd.fallback,
                feasible_candidates: rnd.feasible,
                passes: pass,
            };
            return Ok((report, sol));
        }
    }
}

/// Writes `V_r` and `V_t` as CSV rows `matrix,i,j,re,im`.
pub fn write_lifted_csv<W: Write>(v: &MatPair, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["matrix", "i", "j", "re", "im"])?;
    for (name, m) in [("V_r", &v.0), ("V_t", &v.1)] {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                w.write_record([name.to_string(), i.to_string(), j.to_string(), format!("{:e}", z.re), format!("{:e}", z.im)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Uniform random phases and split, used by tests and benchmarks.
pub fn random_state<R: Rng>(rng: &mut R, l: usize, psi: f64) -> RicsState {
    let tau = std::f64::consts::TAU;
    RicsState::from_parts(
        (0..l).map(|_| rng.random::<f64>() * tau).collect(),
        (0..l).map(|_| rng.random::<f64>() * tau).collect(),
        (0..l).map(|_| rng.random::<f64>()).collect(),
        vec![psi; l],
    )
    .expect("equal lengths")
}

pub fn check_dims(ch: &ChannelSet, alpha: &SharingMatrix) -> Result<()> {
    if alpha.m != ch.m() || alpha.n != ch.n() {
        return Err(Error::Dimension(format!("sharing matrix is {}x{}, channels are {}x{}", alpha.m, alpha.n, ch.m(), ch.n())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_channels;
    use crate::link::{expected_interference_gain_with, uplink_signal_power};
    use crate::rics::{phi_r, phi_t};
    use crate::scenario::{generate_scenario, PlacementConfig};

    fn instance(l: usize, m: usize, n: usize, seed: u64) -> (Scenario, ChannelSet) {
        let mut p = SystemParams::default();
        p.l = l;
        p.m = m;
        p.n = n;
        let sc = generate_scenario(&p, &PlacementConfig::default(), seed);
        let ch = draw_channels(&sc, seed).unwrap();
        (sc, ch)
    }

    fn random_hermitian(rng: &mut impl Rng, n: usize) -> CMat {
        hermitian_part(&CMat::from_fn(n, n, |_, _| cn01(rng)))
    }

    #[test]
    fn dual_hessian_matches_finite_differences() {
        let mut rng = stream(2, Domain::Scheme, 0, 0);
        let n = 7;
        for shift in [-1.5, 0.0, 1.5] {
            let eye = CMat::identity(n, n) * C64::new(shift, 0.0);
            let x = MatPair(random_hermitian(&mut rng, n) + &eye, random_hermitian(&mut rng, n) + &eye);
            let halves: Vec<(CMat, f64)> = (0..2).map(|_| (random_hermitian(&mut rng, n), 0.3)).collect();
            let dual = LiftedDual::new(&x, &halves);
            let y: Vec<f64> = (0..dual.rows.len()).map(|_| rng.random_range(0.05..0.4)).collect();
            let all: Vec<usize> = (0..y.len()).collect();
            let h = dual.hessian(&dual.eval(&y), &all);
            let eps = 1e-6;
            for j in 0..y.len() {
                let (mut up, mut dn) = (y.clone(), y.clone());
                up[j] += eps;
                dn[j] -= eps;
                let (gu, gd) = (dual.eval(&up).grad, dual.eval(&dn).grad);
                for i in 0..y.len() {
                    let fd = (gu[i] - gd[i]) / (2.0 * eps);
                    assert!((fd - h[(i, j)]).abs() < 1e-6, "shift {shift} ({i},{j}) {fd} {}", h[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn lifted_projection_satisfies_constraints() {
        let mut rng = stream(3, Domain::Scheme, 0, 0);
        let n = 9;
        let x = MatPair(random_hermitian(&mut rng, n) * C64::new(3.0, 0.0), random_hermitian(&mut rng, n) * C64::new(3.0, 0.0));
        let a = rank_one(&DVector::from_fn(n, |_, _| cn01(&mut rng)));
        let scale = a.norm();
        let halves = vec![(a / C64::new(scale, 0.0), 0.2)];
        let mut warm = Vec::new();
        let v = project_lifted(&x, &halves, 1e-10, &mut warm).unwrap();
        assert!(min_eigenvalue(&v.0) >= -1e-10 && min_eigenvalue(&v.1) >= -1e-10);
        for i in 0..n - 1 {
            assert!((v.0[(i, i)].re + v.1[(i, i)].re - 1.0).abs() < 1e-9);
        }
        assert!((v.0[(n - 1, n - 1)].re - 1.0).abs() < 1e-9);
        assert!((v.1[(n - 1, n - 1)].re - 1.0).abs() < 1e-9);
        assert!(trace_product(&v.1, &halves[0].0) <= 0.2 + 1e-9);
        // projecting the result again is a no-op
        let again = project_lifted(&v, &halves, 1e-10, &mut warm).unwrap();
        assert!((&again.0 - &v.0).norm() + (&again.1 - &v.1).norm() < 1e-7);
    }

    #[test]
    fn zero_reference_entry_gives_absolute_phases() {
        let z = DVector::from_vec(vec![C64::from_polar(1.0, 0.7), C64::from_polar(2.0, -1.2), C64::new(0.0, 0.0)]);
        let ph = phases_of(&z);
        assert!((ph[0] - 0.7).abs() < 1e-12 && (ph[1] + 1.2).abs() < 1e-12);
    }

    #[test]
    fn quadratic_forms_match_link_formulas() {
        let (sc, ch) = instance(6, 2, 2, 3);
        let p = &sc.params;
        let mut rng = stream(1, Domain::Scheme, 0, 0);
        for _ in 0..20 {
            let st = random_state(&mut rng, 6, 1.3);
            for m in 0..2 {
                let r = build_uplink_data(&ch, p, m);
                let v = lift(&st.theta_r, &st.beta_r);
                let want = uplink_signal_power(&ch, &phi_r(&st), p, m);
                assert!((quad_form(&r, &v) - want).abs() <= 1e-12 * want);
                assert!((trace_product(&rank_one(&v), &r) - want).abs() <= 1e-12 * want);
                for n in 0..2 {
                    let rt = build_interference_data(&ch, &st.psi, m, n);
                    let vt = lift(&st.theta_t, &st.beta_t);
                    let want = expected_interference_gain_with(&ch, &phi_t(&st), m, n);
                    assert!((quad_form(&rt, &vt) - want).abs() <= 1e-12 * want);
                    assert!(min_eigenvalue(&rt) >= -1e-12 * rt.norm());
                }
            }
        }
        let r = build_uplink_data(&ch, p, 0);
        let zero = lift(&[0.0; 6], &[0.0; 6]);
        let direct = p.p_m * ch.h_mb[0].scalar().norm_sqr();
        assert!((quad_form(&r, &zero) - direct).abs() <= 1e-12 * direct);
        assert!(min_eigenvalue(&r) >= -1e-12 * r.norm());
    }

    #[test]
    fn rank_one_recovery_is_exact() {
        let (sc, ch) = instance(5, 1, 1, 4);
        let alpha = SharingMatrix::zeros(1, 1);
        let rho = OffloadVector::uniform(1, 0.5);
        let ctx = PhiContext { scenario: &sc, ch: &ch, alpha: &alpha, rho: &rho, psi: vec![1.2; 5] };
        let mut rng = stream(2, Domain::Scheme, 0, 0);
        let st = random_state(&mut rng, 5, 1.2);
        let v = lifted_state(&st);
        let out = gaussian_randomize(&v, &ctx, 20, 7).unwrap();
        for (a, b) in out.rics.theta_r.iter().zip(&st.theta_r) {
            let d = (a - b).rem_euclid(std::f64::consts::TAU);
            assert!(d.min(std::f64::consts::TAU - d) < 1e-9);
        }
        for (a, b) in out.rics.theta_t.iter().zip(&st.theta_t) {
            let d = (a - b).rem_euclid(std::f64::consts::TAU);
            assert!(d.min(std::f64::consts::TAU - d) < 1e-9);
        }
        assert!(out.rics.split_residual() == 0.0);
    }

    #[test]
    fn more_trials_never_hurt() {
        let (sc, ch) = instance(6, 2, 2, 9);
        let alpha = SharingMatrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]]);
        let rho = OffloadVector::uniform(2, 0.5);
        let init = nulling_state(&ch, &alpha, &sc.params, vec![0.5; 6], vec![1.2; 6]).unwrap();
        let (rep, sol) = solve_phi(&sc, &ch, &alpha, &rho, &init, SdrOptions { trials: 50, seed: 3, ..Default::default() }).unwrap();
        let ctx = PhiContext { scenario: &sc, ch: &ch, alpha: &alpha, rho: &rho, psi: vec![1.2; 6] };
        let one = gaussian_randomize(&sol.v, &ctx, 1, 3).unwrap();
        let many = gaussian_randomize(&sol.v, &ctx, 200, 3).unwrap();
        if !one.fallback {
            assert!(many.objective >= one.objective);
        }
        assert!(rep.objective >= rep.init_objective);
    }

    #[test]
    fn single_element_matches_phase_grid() {
        for seed in 0..4 {
            let (sc, ch) = instance(1, 1, 1, 40 + seed);
            let alpha = SharingMatrix::zeros(1, 1);
            let rho = OffloadVector::uniform(1, 0.6);
            let init = RicsState::identity_split(1, 1.2);
            let (rep, sol) = solve_phi(&sc, &ch, &alpha, &rho, &init, SdrOptions::default()).unwrap();
            let ctx = PhiContext { scenario: &sc, ch: &ch, alpha: &alpha, rho: &rho, psi: vec![1.2] };
            let mut best = f64::NEG_INFINITY;
            for k in 0..10_000 {
                let th = k as f64 * std::f64::consts::TAU / 10_000.0;
                for b in 0..=20 {
                    let st = RicsState::from_parts(vec![th], vec![0.0], vec![b as f64 / 20.0], vec![1.2]).unwrap();
                    best = best.max(ctx.objective(&st).unwrap());
                }
            }
            assert!(rep.objective >= best * (1.0 - 1e-3), "{} {}", rep.objective, best);
            assert!(sol.residual <= 1e-6);
        }
    }

    #[test]
    fn weighted_relaxation_reaches_the_grid_with_several_cvs() {
        let (sc, ch) = instance(1, 2, 1, 701);
        let alpha = SharingMatrix::zeros(2, 1);
        let rho = OffloadVector::uniform(2, 0.6);
        let init = RicsState::identity_split(1, 1.2);
        let ctx = PhiContext { scenario: &sc, ch: &ch, alpha: &alpha, rho: &rho, psi: vec![1.2] };
        let mut best = f64::NEG_INFINITY;
        for k in 0..3600 {
            let th = k as f64 * std::f64::consts::TAU / 3600.0;
            for b in 0..=20 {
                let st = RicsState::from_parts(vec![th], vec![0.0], vec![b as f64 / 20.0], vec![1.2]).unwrap();
                best = best.max(ctx.objective(&st).unwrap());
            }
        }
        let (rep, _) = solve_phi(&sc, &ch, &alpha, &rho, &init, SdrOptions::default()).unwrap();
        assert!(rep.objective >= best * (1.0 - 1e-3), "{} {}", rep.objective, best);
        let w = ctx.rate_weights(&init, RateWeights::Marginal).unwrap();
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-12 && w.iter().all(|&x| x >= 0.0));
        assert_eq!(ctx.rate_weights(&init, RateWeights::Uniform).unwrap(), vec![1.0; 2]);
        let prob = SdpProblem::new(&ch, &alpha, &sc.params, &[1.2]).unwrap();
        assert!(prob.with_weights(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn sandwich_and_constraints() {
        for seed in 0..3 {
            let (sc, ch) = instance(8, 3, 2, 60 + seed);
            let alpha = SharingMatrix::from_rows(&[vec![0.6, 0.0], vec![0.0, 0.7], vec![0.2, 0.2]]);
            let rho = OffloadVector::uniform(3, 0.5);
            let init = nulling_state(&ch, &alpha, &sc.params, vec![0.5; 8], vec![1.2; 8]).unwrap();
            let (rep, sol) = solve_phi(&sc, &ch, &alpha, &rho, &init, SdrOptions { seed, ..Default::default() }).unwrap();
            assert!(sol.residual <= 1e-6, "{}", sol.residual);
            if !rep.fallback {
                assert!(rep.candidate_relaxed_objective <= rep.sdp_objective * (1.0 + 1e-6));
            }
            assert!(rep.rics.split_residual() < 1e-15);
            assert!(rep.objective >= rep.init_objective);
        }
    }

    #[test]
    fn lifted_csv_has_all_entries() {
        let st = RicsState::identity_split(3, 1.0);
        let mut buf = Vec::new();
        write_lifted_csv(&lifted_state(&st), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 2 * 16);
    }
}
