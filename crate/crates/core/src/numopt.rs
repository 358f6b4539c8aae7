//! Numerical-optimization kernels shared by the solver blocks.
//!
//! * [`project_psd`]: Frobenius-nearest PSD matrix via Hermitian eigendecomposition.
//! * [`dykstra`]: projection onto an intersection of closed convex sets.
//! * [`projected_gradient`]: Armijo projected-gradient ascent for concave objectives.
//! * [`logsumexp`]: max-shifted `ln Σ exp(x_i)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::C64;

pub type CMat = DMatrix<C64>;

/// Real inner-product space operations needed by the generic solvers.
pub trait Space: Clone {
    /// `self + a * other`
    fn add_scaled(&self, a: f64, other: &Self) -> Self;
    /// Real inner product.
    fn dot(&self, other: &Self) -> f64;
    fn norm_sq(&self) -> f64 {
        self.dot(self)
    }
}

impl Space for Vec<f64> {
    fn add_scaled(&self, a: f64, other: &Self) -> Self {
        self.iter().zip(other).map(|(x, y)| x + a * y).collect()
    }

    fn dot(&self, other: &Self) -> f64 {
        self.iter().zip(other).map(|(x, y)| x * y).sum()
    }
}

impl Space for CMat {
    fn add_scaled(&self, a: f64, other: &Self) -> Self {
        self + other * C64::new(a, 0.0)
    }

    fn dot(&self, other: &Self) -> f64 {
        self.iter().zip(other.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
    }
}

/// A pair of matrices treated as one point of the product space.
#[derive(Debug, Clone, PartialEq)]
pub struct MatPair(pub CMat, pub CMat);

impl Space for MatPair {
    fn add_scaled(&self, a: f64, other: &Self) -> Self {
        MatPair(Space::add_scaled(&self.0, a, &other.0), Space::add_scaled(&self.1, a, &other.1))
    }

    fn dot(&self, other: &Self) -> f64 {
        Space::dot(&self.0, &other.0) + Space::dot(&self.1, &other.1)
    }
}

/// Stable `ln Σ exp(x_i)`.
pub fn logsumexp(values: &[f64]) -> Result<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        return Err(Error::Empty("logsumexp"));
    }
    if max.is_infinite() {
        return Ok(max);
    }
    Ok(max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln())
}

/// Largest entry of `|A - A^H|`.
pub fn hermitian_asymmetry(a: &CMat) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in i..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// Nearest PSD matrix in Frobenius norm. Errors on inputs that are not
/// Hermitian to within `1e-10` (relative to the largest entry, floor 1).
pub fn project_psd(a: &CMat) -> Result<CMat> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!("{}x{} is not square", a.nrows(), a.ncols())));
    }
    let scale = a.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let asym = hermitian_asymmetry(a);
    if asym > 1e-10 * scale {
        return Err(Error::NotHermitian(asym));
    }
    Ok(project_psd_hermitian(&hermitian_part(a)))
}

/// Cholesky test on the lower triangle: true when every pivot is real and
/// positive.
pub fn is_positive_definite(a: &CMat) -> bool {
    let n = a.nrows();
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        l[(j, j)] = C64::new(d, 0.0);
        for i in j + 1..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = v / d;
        }
    }
    true
}

/// Eigenvalues and eigenvectors of a Hermitian matrix.
///
/// nalgebra's QR iteration occasionally breaks down into NaN on sparse inputs
/// with tiny entries; a diagonal shift, which leaves the eigenvectors
/// unchanged, avoids it.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let finite = |q: &CMat| q.iter().all(|v| v.re.is_finite() && v.im.is_finite());
    let e = a.clone().symmetric_eigen();
    if finite(&e.eigenvectors) {
        return (e.eigenvalues.iter().copied().collect(), e.eigenvectors);
    }
    let n = a.nrows();
    let shift = a.norm().max(1.0);
    let e = (a + CMat::identity(n, n) * C64::new(shift, 0.0)).symmetric_eigen();
    (e.eigenvalues.iter().map(|l| l - shift).collect(), e.eigenvectors)
}

/// PSD projection of an already-Hermitian matrix. Positive-definite inputs
/// are returned as they are.
pub fn project_psd_hermitian(a: &CMat) -> CMat {
    if is_positive_definite(a) {
        return a.clone();
    }
    let (lams, mut u) = hermitian_eigen(a);
    for (j, &lam) in lams.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        u.column_mut(j).scale_mut(s);
    }
    hermitian_part(&(&u * u.adjoint()))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(a: &CMat) -> f64 {
    hermitian_eigen(&hermitian_part(a)).0.into_iter().fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy)]
pub struct DykstraOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    /// Sweeps without a 1% residual improvement before declaring a plateau.
    pub plateau: usize,
    /// Magnitude against which `tol` is measured.
    pub scale: f64,
}

impl Default for DykstraOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_sweeps: 10_000, plateau: 500, scale: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct DykstraResult<T> {
    pub x: T,
    pub sweeps: usize,
    /// Path length travelled by the sub-iterates in the last sweep, over `scale`.
    pub residual: f64,
}

/// Dykstra's alternating projections onto `∩_i C_i`.
///
/// Stops when the sub-iterates of a sweep travel less than `tol * scale`.
/// If that never happens, the iterate is accepted only when it lies within
/// `sqrt(tol) * scale` of every set; otherwise the intersection is reported
/// as empty.
pub fn dykstra<T: Space>(start: &T, projections: &[&dyn Fn(&T) -> T], opts: DykstraOptions) -> Result<DykstraResult<T>> {
    let zero = start.add_scaled(-1.0, start);
    let mut incr: Vec<T> = vec![zero; projections.len()];
    let mut x = start.clone();
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut residual = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        let mut moved = 0.0;
        for (proj, p) in projections.iter().zip(incr.iter_mut()) {
            let y = x.add_scaled(1.0, p);
            let next = proj(&y);
            *p = y.add_scaled(-1.0, &next);
            moved += next.add_scaled(-1.0, &x).norm_sq().sqrt();
            x = next;
        }
        residual = moved / opts.scale;
        if residual < opts.tol {
            return Ok(DykstraResult { x, sweeps: sweep, residual });
        }
        if residual < 0.99 * best {
            best = residual;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opts.plateau {
                break;
            }
        }
    }
    let gap = projections
        .iter()
        .map(|p| x.add_scaled(-1.0, &p(&x)).norm_sq().sqrt() / opts.scale)
        .fold(0.0, f64::max);
    if gap <= opts.tol.sqrt() {
        Ok(DykstraResult { x, sweeps: opts.max_sweeps, residual })
    } else {
        Err(Error::InfeasibleSet(gap))
    }
}

/// Projection of `x` onto `{y : a·y <= b}`.
pub fn project_halfspace(x: &[f64], a: &[f64], b: f64) -> Vec<f64> {
    let v: f64 = x.iter().zip(a).map(|(x, a)| x * a).sum();
    let nn: f64 = a.iter().map(|a| a * a).sum();
    if v <= b || nn == 0.0 {
        return x.to_vec();
    }
    let t = (v - b) / nn;
    x.iter().zip(a).map(|(x, a)| x - t * a).collect()
}

/// Projection of `x` onto `{y : a·y = b}`.
pub fn project_hyperplane(x: &[f64], a: &[f64], b: f64) -> Vec<f64> {
    let v: f64 = x.iter().zip(a).map(|(x, a)| x * a).sum();
    let nn: f64 = a.iter().map(|a| a * a).sum();
    if nn == 0.0 {
        return x.to_vec();
    }
    let t = (v - b) / nn;
    x.iter().zip(a).map(|(x, a)| x - t * a).collect()
}

pub fn project_box(x: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    x.iter().map(|v| v.clamp(lo, hi)).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct PgOptions {
    pub max_iter: usize,
    /// Relative objective stall that ends the ascent.
    pub stall_tol: f64,
    /// Consecutive stalled iterations required to stop.
    pub stall_iters: usize,
    pub initial_step: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Upper bound on `step * |gradient|`, the length of a trial move.
    pub max_move: f64,
}

impl Default for PgOptions {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            stall_tol: 1e-8,
            stall_iters: 3,
            initial_step: 1.0,
            armijo: 1e-4,
            max_backtracks: 40,
            max_move: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PgResult<T> {
    pub x: T,
    pub value: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Projected-gradient ascent with Armijo backtracking along the projection arc
/// and Barzilai-Borwein initial steps.
///
/// `f` returns `(value, gradient)`; non-finite values count as rejected steps.
/// `project` maps onto the feasible set. The start is projected first, and the
/// returned iterate is never worse than that projected start.
pub fn projected_gradient<T, F, P>(f: F, project: P, start: &T, opts: PgOptions) -> Result<PgResult<T>>
where
    T: Space + std::fmt::Debug,
    F: Fn(&T) -> (f64, T),
    P: Fn(&T) -> Result<T>,
{
    let mut x = project(start)?;
    let (mut fx, mut g) = f(&x);
    if !g.norm_sq().is_finite() {
        return Err(Error::NonFiniteGradient(format!("{x:?}")));
    }
    let mut trace = vec![fx];
    let mut step = opts.initial_step;
    let mut prev: Option<(T, T)> = None;
    let mut stalled = 0;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        iterations += 1;
        if let Some((px, pg)) = &prev {
            let s = x.add_scaled(-1.0, px);
            let y = g.add_scaled(-1.0, pg);
            let sy = s.dot(&y);
            let ss = s.norm_sq();
            if sy < 0.0 && ss > 0.0 {
                step = (ss / -sy).clamp(1e-12, 1e12);
            } else {
                step *= 2.0;
            }
        }
        let mut accepted = None;
        let mut t = step.min(opts.max_move / g.norm_sq().sqrt());
        for _ in 0..=opts.max_backtracks {
            let cand = project(&x.add_scaled(t, &g))?;
            let d = cand.add_scaled(-1.0, &x);
            let (fc, gc) = f(&cand);
            if fc.is_finite() && fc >= fx + opts.armijo * g.dot(&d) {
                accepted = Some((cand, fc, gc, d));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc, gc, d)) = accepted else {
            converged = true;
            break;
        };
        if !gc.norm_sq().is_finite() {
            return Err(Error::NonFiniteGradient(format!("{cand:?}")));
        }
        step = t;
        let gain = fc - fx;
        let moved = d.norm_sq().sqrt() / x.norm_sq().sqrt().max(1.0);
        prev = Some((std::mem::replace(&mut x, cand), std::mem::replace(&mut g, gc)));
        fx = fc;
        trace.push(fx);
        if gain.abs() <= opts.stall_tol * fx.abs().max(1e-300) || moved < 1e-14 {
            stalled += 1;
            if stalled >= opts.stall_iters {
                converged = true;
                break;
            }
        } else {
            stalled = 0;
        }
    }
    Ok(PgResult { x, value: fx, iterations, trace, converged })
}
