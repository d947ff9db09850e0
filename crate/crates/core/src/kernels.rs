//! Kernel families: the Bessel kernel, its image under `x ↦ 4/x`, the radial
//! Pickrell kernel and Christoffel–Darboux kernels of the Jacobi weight.
//!
//! Evaluation goes through [`PreparedKernel`], which caches whatever depends
//! only on the parameters. Each point is first reduced to a per-node
//! [`Sample`]; a kernel value is then a cheap function of two samples. Pairs
//! are ordered by abscissa before combining, so `eval(x, y)` and `eval(y, x)`
//! are bitwise equal.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::ProjectionBasis;
use crate::quadrature::{Grading, Interval, Quadrature};
use crate::specfun::{bessel_j_extended, jacobi, jacobi_derivative, jacobi_pair_scaled, jv_pair};

/// Relative distance below which the displayed difference quotients are
/// replaced by the diagonal formula.
pub const DIAGONAL_SWITCH: f64 = 1e-6;

/// A kernel family together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `J_s(x, y)` on `(0, ∞)`, the hard-edge Bessel kernel.
    BesselJ { s: f64 },
    /// `K^(s)(x₁, x₂)`, the Bessel kernel pulled back by `x = 4/x₁`.
    ModifiedBesselK { s: f64 },
    /// `K_n^(s)(λ₁, λ₂)`, the radial kernel of the `n × n` Pickrell measure.
    PickrellRadial { n: usize, s: f64 },
    /// The rank-`n` Christoffel–Darboux kernel of the weight `(1-u)^s`
    /// restricted to `sub ⊆ [-1, 1]`.
    ChristoffelDarbouxJacobi { n: usize, s: f64, sub: Interval },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::BesselJ { s } | KernelSpec::ModifiedBesselK { s } => {
                if !s.is_finite() || s <= -1.0 {
                    return Err(Error::InvalidParameter(format!("Bessel kernels need s > -1, got {s}")));
                }
            }
            KernelSpec::PickrellRadial { n, s } => {
                if n == 0 {
                    return Err(Error::InvalidParameter("radial kernel needs n >= 1".into()));
                }
                if !s.is_finite() || 2.0 * n as f64 + s <= 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "radial kernel needs 2n + s > 1, got n = {n}, s = {s}"
                    )));
                }
            }
            KernelSpec::ChristoffelDarbouxJacobi { n, s, sub } => {
                if n == 0 {
                    return Err(Error::InvalidParameter("Christoffel-Darboux kernel needs N >= 1".into()));
                }
                if sub.lo() < -1.0 || sub.hi() > 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "sub-interval [{}, {}] is not inside [-1, 1]",
                        sub.lo(),
                        sub.hi()
                    )));
                }
                // Below -1 the weight is still integrable away from u = 1.
                if !s.is_finite() || (s <= -1.0 && sub.hi() >= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "weight (1-u)^{s} is not integrable on [{}, {}]",
                        sub.lo(),
                        sub.hi()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Natural domain of the family, as a closure test.
    pub fn in_domain(&self, x: f64) -> bool {
        match *self {
            KernelSpec::BesselJ { .. } | KernelSpec::ModifiedBesselK { .. } | KernelSpec::PickrellRadial { .. } => {
                x.is_finite() && x > 0.0
            }
            KernelSpec::ChristoffelDarbouxJacobi { s, .. } => {
                x.is_finite() && (-1.0..=1.0).contains(&x) && (x < 1.0 || s >= 0.0)
            }
        }
    }

    pub fn prepare(&self) -> Result<PreparedKernel> {
        self.validate()?;
        let inner = match *self {
            KernelSpec::ChristoffelDarbouxJacobi { n, s, sub } if !is_full(sub) => {
                Prepared::CdSub(SubIntervalBasis::new(n, s, sub)?)
            }
            _ => Prepared::Closed,
        };
        Ok(PreparedKernel { spec: *self, inner })
    }
}

/// Pointwise kernel value.
pub fn eval(spec: &KernelSpec, x: f64, y: f64) -> Result<f64> {
    spec.prepare()?.eval(x, y)
}

/// Diagonal value `lim_{y→x} K(x, y)`.
pub fn eval_diag(spec: &KernelSpec, x: f64) -> Result<f64> {
    spec.prepare()?.eval_diag(x)
}

fn is_full(sub: Interval) -> bool {
    sub.lo() == -1.0 && sub.hi() == 1.0
}

/// A validated kernel with its parameter-only precomputations.
#[derive(Debug, Clone)]
pub struct PreparedKernel {
    spec: KernelSpec,
    inner: Prepared,
}

#[derive(Debug, Clone)]
enum Prepared {
    Closed,
    CdSub(SubIntervalBasis),
}

/// Everything a kernel needs to know about one point.
#[derive(Debug, Clone)]
pub(crate) struct Sample {
    x: f64,
    diag: f64,
    pub(crate) vals: Vec<f64>,
}

impl Sample {
    pub(crate) fn diag(&self) -> f64 {
        self.diag
    }
}

impl PreparedKernel {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        let a = self.sample(x)?;
        let b = self.sample(y)?;
        Ok(self.pair(&a, &b))
    }

    pub fn eval_diag(&self, x: f64) -> Result<f64> {
        Ok(self.sample(x)?.diag)
    }

    pub(crate) fn sample(&self, x: f64) -> Result<Sample> {
        if !self.spec.in_domain(x) {
            return Err(Error::Domain(format!("{x} is outside the domain of {:?}", self.spec)));
        }
        Ok(match (self.spec, &self.inner) {
            (KernelSpec::BesselJ { s }, _) => bessel_sample(s, x),
            (KernelSpec::ModifiedBesselK { s }, _) => {
                let inner = bessel_sample(s, 4.0 / x);
                let jac = 4.0 / (x * x);
                Sample { x, diag: inner.diag * jac, vals: inner.vals }
            }
            (KernelSpec::PickrellRadial { n, s }, _) => pickrell_sample(n, s, x),
            (KernelSpec::ChristoffelDarbouxJacobi { n, s, .. }, Prepared::Closed) => {
                let vals = jacobi_functions(n, s, x);
                Sample { x, diag: vals.iter().map(|v| v * v).sum(), vals }
            }
            (KernelSpec::ChristoffelDarbouxJacobi { .. }, Prepared::CdSub(basis)) => {
                let vals = basis.eval(x);
                Sample { x, diag: vals.iter().map(|v| v * v).sum(), vals }
            }
        })
    }

    pub(crate) fn pair(&self, a: &Sample, b: &Sample) -> f64 {
        let (a, b) = if a.x <= b.x { (a, b) } else { (b, a) };
        if let KernelSpec::ChristoffelDarbouxJacobi { .. } = self.spec {
            return a.vals.iter().zip(&b.vals).map(|(p, q)| p * q).sum();
        }
        if near_diagonal(a.x, b.x) {
            // Symmetric in the two points, hence second-order accurate.
            return 0.5 * (a.diag + b.diag);
        }
        match self.spec {
            KernelSpec::BesselJ { .. } => bessel_quotient(&a.vals, &b.vals, a.x, b.x),
            KernelSpec::ModifiedBesselK { .. } => {
                let (ya, yb) = (4.0 / a.x, 4.0 / b.x);
                bessel_quotient(&a.vals, &b.vals, ya, yb) * 4.0 / (a.x * b.x)
            }
            KernelSpec::PickrellRadial { n, s } => pickrell_quotient(n, s, &a.vals, &b.vals, a.x, b.x),
            KernelSpec::ChristoffelDarbouxJacobi { .. } => unreachable!(),
        }
    }
}

fn near_diagonal(x: f64, y: f64) -> bool {
    (x - y).abs() <= DIAGONAL_SWITCH * x.abs().max(1.0)
}

fn bessel_sample(s: f64, x: f64) -> Sample {
    let a = x.sqrt();
    let (j0, j1) = jv_pair(s, a);
    let diag = 0.25 * (j0 * j0 + j1 * j1 - 2.0 * s / a * j0 * j1);
    Sample { x, diag, vals: vec![a, j0, j1] }
}

fn bessel_quotient(a: &[f64], b: &[f64], x: f64, y: f64) -> f64 {
    (a[0] * a[2] * b[1] - b[0] * b[2] * a[1]) / (2.0 * (x - y))
}

/// Bessel kernel `J_s(x, y)` for any real order, via [`bessel_j_extended`].
///
/// Only the recurrence chain for orders below `-1` needs this: there the
/// kernel is no longer a projection but the formula still makes sense.
pub fn bessel_kernel_extended(s: f64, x: f64, y: f64) -> Result<f64> {
    if !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()) {
        return Err(Error::Domain(format!("Bessel kernel needs positive arguments, got ({x}, {y})")));
    }
    let (x, y) = if x <= y { (x, y) } else { (y, x) };
    let (a, b) = (x.sqrt(), y.sqrt());
    let ja = [bessel_j_extended(s, a)?, bessel_j_extended(s + 1.0, a)?];
    if near_diagonal(x, y) {
        let jb = [bessel_j_extended(s, b)?, bessel_j_extended(s + 1.0, b)?];
        let d = |v: [f64; 2], r: f64| 0.25 * (v[0] * v[0] + v[1] * v[1] - 2.0 * s / r * v[0] * v[1]);
        return Ok(0.5 * (d(ja, a) + d(jb, b)));
    }
    let jb = [bessel_j_extended(s, b)?, bessel_j_extended(s + 1.0, b)?];
    Ok((a * ja[1] * jb[0] - b * jb[1] * ja[0]) / (2.0 * (x - y)))
}

/// Residual of the rank-one recurrence
/// `J_s(x,y) = J_{s+2}(x,y) + (s+1)/√(xy) · J_{s+1}(√x) J_{s+1}(√y)`.
pub fn bessel_recurrence_residual(s: f64, x: f64, y: f64) -> Result<f64> {
    let lhs = bessel_kernel_extended(s, x, y)?;
    let rhs = bessel_kernel_extended(s + 2.0, x, y)?
        + (s + 1.0) / (x * y).sqrt() * bessel_j_extended(s + 1.0, x.sqrt())? * bessel_j_extended(s + 1.0, y.sqrt())?;
    Ok(lhs - rhs)
}

/// `P_n` and `P_{n-1}` with a shared scale, normalized so the larger has
/// modulus one.
fn normalized_pair(n: usize, a: f64, b: f64, u: f64) -> (f64, f64, f64) {
    let p = jacobi_pair_scaled(n, a, b, u);
    let m = p.p_n.abs().max(p.p_prev.abs());
    if m > 0.0 && m.is_finite() {
        (p.p_n / m, p.p_prev / m, p.log_scale + m.ln())
    } else {
        (p.p_n, p.p_prev, p.log_scale)
    }
}

fn pickrell_prefactor(n: usize, s: f64) -> f64 {
    let n = n as f64;
    n * (n + s) / (2.0 * n + s)
}

fn pickrell_sample(n: usize, s: f64, lambda: f64) -> Sample {
    let u = (lambda - 1.0) / (lambda + 1.0);
    let log_w = -0.5 * s * (1.0 + lambda).ln();
    let (pn, pp, lp) = normalized_pair(n, s, 0.0, u);

    // P_n' = (n+s+1)/2 · P^{(s+1,1)}_{n-1}, P_{n-1}' = (n+s)/2 · P^{(s+1,1)}_{n-2}.
    let (q1, q0, lq) = normalized_pair(n - 1, s + 1.0, 1.0, u);
    let nf = n as f64;
    let bracket = 0.5 * (nf + s + 1.0) * q1 * pp - 0.5 * (nf + s) * q0 * pn;
    let du = 2.0 / ((lambda + 1.0) * (lambda + 1.0));
    let diag = pickrell_prefactor(n, s) * du * bracket * (2.0 * log_w + lp + lq).exp();
    Sample { x: lambda, diag, vals: vec![pn, pp, lp + log_w] }
}

fn pickrell_quotient(n: usize, s: f64, a: &[f64], b: &[f64], x: f64, y: f64) -> f64 {
    let cross = a[0] * b[1] - b[0] * a[1];
    pickrell_prefactor(n, s) * cross * (a[2] + b[2]).exp() / (x - y)
}

/// `h_k = ∫ P_k^{(s,0)}(u)² (1-u)^s du` over `[-1, 1]`.
fn jacobi_norm_sq(k: usize, s: f64) -> f64 {
    2f64.powf(s + 1.0) / (2.0 * k as f64 + s + 1.0)
}

/// `P_k^{(s,0)}(u) (1-u)^{s/2} / √h_k` for `k < n`: orthonormal on `[-1, 1]`.
fn jacobi_functions(n: usize, s: f64, u: f64) -> Vec<f64> {
    let w = (1.0 - u).powf(0.5 * s);
    (0..n).map(|k| jacobi(k, s, 0.0, u) * w / jacobi_norm_sq(k, s).sqrt()).collect()
}

/// Closed Christoffel–Darboux form of the full-interval kernel, kept as an
/// independent cross-check of the orthonormal-sum representation.
pub fn cd_jacobi_closed_form(n: usize, s: f64, u: f64, v: f64) -> Result<f64> {
    KernelSpec::ChristoffelDarbouxJacobi { n, s, sub: Interval::new(-1.0, 1.0)? }.validate()?;
    for t in [u, v] {
        if !(-1.0..1.0).contains(&t) {
            return Err(Error::Domain(format!("closed form needs u in [-1, 1), got {t}")));
        }
    }
    let nf = n as f64;
    let pref = nf * (nf + s) / ((2.0 * nf + s) * 2f64.powf(s));
    let w = ((1.0 - u) * (1.0 - v)).powf(0.5 * s);
    let (u, v) = if u <= v { (u, v) } else { (v, u) };
    if near_diagonal(u, v) {
        let d = |t: f64| {
            let p = jacobi(n, s, 0.0, t);
            let q = jacobi(n - 1, s, 0.0, t);
            let dp = jacobi_derivative(n, s, 0.0, t);
            let dq = jacobi_derivative(n - 1, s, 0.0, t);
            dp * q - dq * p
        };
        return Ok(pref * w * 0.5 * (d(u) + d(v)));
    }
    let cross = jacobi(n, s, 0.0, u) * jacobi(n - 1, s, 0.0, v) - jacobi(n - 1, s, 0.0, u) * jacobi(n, s, 0.0, v);
    Ok(pref * w * cross / (u - v))
}

/// Orthonormal basis of `{p(u)(1-u)^{s/2} : deg p < n}` on a sub-interval,
/// expressed through shifted Legendre polynomials.
#[derive(Debug, Clone)]
struct SubIntervalBasis {
    n: usize,
    s: f64,
    sub: Interval,
    /// Columns: coefficients of each orthonormal function in the Legendre basis.
    coef: DMatrix<f64>,
}

impl SubIntervalBasis {
    fn new(n: usize, s: f64, sub: Interval) -> Result<Self> {
        let rule = Quadrature::build(sub, 24, 32, Grading::GeometricTowardHi)?;
        let mut raw = DMatrix::zeros(rule.len(), n);
        for (i, &u) in rule.nodes().iter().enumerate() {
            let b = legendre_weighted(n, s, sub, u);
            for k in 0..n {
                raw[(i, k)] = b[k] * rule.sqrt_weights()[i];
            }
        }
        let gram = raw.transpose() * &raw;
        let chol = gram.cholesky().ok_or_else(|| {
            Error::Singular(format!("Gram matrix of degree-{n} basis on [{}, {}] is not positive definite", sub.lo(), sub.hi()))
        })?;
        let l = chol.l();
        let inv = l
            .try_inverse()
            .ok_or_else(|| Error::Singular("Cholesky factor is not invertible".into()))?;
        Ok(Self { n, s, sub, coef: inv.transpose() })
    }

    fn eval(&self, u: f64) -> Vec<f64> {
        if !self.sub.contains(u) {
            return vec![0.0; self.n];
        }
        let b = legendre_weighted(self.n, self.s, self.sub, u);
        (0..self.n).map(|k| (0..self.n).map(|j| b[j] * self.coef[(j, k)]).sum()).collect()
    }
}

fn legendre_weighted(n: usize, s: f64, sub: Interval, u: f64) -> Vec<f64> {
    let t = (2.0 * u - sub.lo() - sub.hi()) / sub.length();
    let w = (1.0 - u).powf(0.5 * s);
    let mut out = Vec::with_capacity(n);
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..n {
        out.push(cur * w);
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * t * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    out
}

/// The `n` orthonormal functions spanning the rank-`n` Christoffel–Darboux
/// kernel of `(1-u)^s` on `sub`, sampled on `q` and re-orthonormalized in its
/// inner product. Nodes of `q` outside `sub` get zero.
pub fn cd_kernel_functions(n: usize, s: f64, sub: Interval, q: &Quadrature) -> Result<ProjectionBasis> {
    let spec = KernelSpec::ChristoffelDarbouxJacobi { n, s, sub };
    let prepared = spec.prepare()?;
    let mut cols = DMatrix::zeros(q.len(), n);
    for (i, &u) in q.nodes().iter().enumerate() {
        if !sub.contains(u) {
            continue;
        }
        let sample = prepared.sample(u)?;
        for k in 0..n {
            cols[(i, k)] = sample.vals[k] * q.sqrt_weights()[i];
        }
    }
    let gram = cols.transpose() * &cols;
    let chol = gram.cholesky().ok_or_else(|| {
        Error::Singular(format!("quadrature with {} nodes is too coarse for degree {n}", q.len()))
    })?;
    let l = chol.l();
    let min_diag = (0..n).map(|k| l[(k, k)]).fold(f64::INFINITY, f64::min);
    if min_diag < 1e-7 {
        return Err(Error::Singular(format!(
            "quadrature with {} nodes is too coarse for degree {n} (pivot {min_diag:e})",
            q.len()
        )));
    }
    let inv_t = l
        .try_inverse()
        .ok_or_else(|| Error::Singular("Cholesky factor is not invertible".into()))?
        .transpose();
    ProjectionBasis::from_scaled_columns(q.clone(), cols * inv_t)
}

/// `∫_{-1}^{1} (1-u)^s du = 2^{s+1}/(s+1)`.
pub fn jacobi_weight_mass(s: f64) -> Result<f64> {
    if s <= -1.0 {
        return Err(Error::Domain(format!("(1-u)^{s} is not integrable on [-1, 1]")));
    }
    Ok(2f64.powf(s + 1.0) / (s + 1.0))
}
