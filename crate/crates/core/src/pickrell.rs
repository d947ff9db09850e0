//! Pickrell measures: pushforward constants, the radial part and its scaling
//! limit, and the perturbed Bessel spaces `H^(s) = L^(s+2n_s) + V^(s)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infdet::{
    perturbation_convergence, window_projection, ConvergencePoint, InfDetMeasureSpec, LinearPart, DEFAULT_TAU,
};
use crate::kernels::{bessel_kernel_extended, cd_kernel_functions, KernelSpec};
use crate::operators::discretize;
use crate::quadrature::{Grading, Interval, NodeMask, Quadrature};
use crate::sampler::{sample_many, SeededRng};
use crate::specfun::{bessel_j_extended, log_gamma};

/// Candidate radii for the default base set `(lo, R₀]` of `B^(s)`.
pub const DEFAULT_RADII: [f64; 4] = [10.0, 20.0, 40.0, 80.0];
/// Smallest acceptable angle between the windowed `L` and `V` when picking
/// the default radius.
pub const MIN_DEFAULT_ANGLE: f64 = 0.01;

/// Matrix size and exponent of the finite Pickrell measure
/// `det(1 + z*z)^{-2n-s} dz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PickrellParams {
    pub n: usize,
    pub s: f64,
}

impl PickrellParams {
    pub fn new(n: usize, s: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("matrix size must be >= 1".into()));
        }
        if !s.is_finite() || 2.0 * n as f64 + s <= 1.0 {
            return Err(Error::InvalidParameter(format!("need 2n + s > 1, got n = {n}, s = {s}")));
        }
        Ok(Self { n, s })
    }

    /// Whether the measure has finite total mass.
    pub fn is_finite_mass(&self) -> bool {
        self.s > -1.0
    }

    pub fn radial_kernel(&self) -> KernelSpec {
        KernelSpec::PickrellRadial { n: self.n, s: self.s }
    }
}

/// The integer `n_s` with `s/2 + n_s ∈ (-1/2, 1/2)`, for `s < -1`.
pub fn n_s_of(s: f64) -> Result<usize> {
    if !s.is_finite() || s >= -1.0 {
        return Err(Error::InvalidParameter(format!("n_s is defined for s < -1, got {s}")));
    }
    let half = 0.5 * (s + 1.0);
    if half == half.round() {
        return Err(Error::Undefined(format!("s = {s} is of the form -1-2k")));
    }
    let n = (-0.5 * s).round();
    debug_assert!((0.5 * s + n).abs() < 0.5);
    Ok(n as usize)
}

/// `ln` of the constant `c` in `(π_{n-1}^n)_* μ̃_n = c · μ̃_{n-1}`.
pub fn log_pushforward_constant(n: usize, s: f64) -> Result<f64> {
    if n == 0 || !s.is_finite() || n as f64 + s <= 0.0 {
        return Err(Error::Domain(format!("pushforward needs n >= 1 and n + s > 0, got n = {n}, s = {s}")));
    }
    let n = n as f64;
    Ok((2.0 * n - 1.0) * PI.ln() + 2.0 * log_gamma(n + s)?
        - log_gamma(2.0 * n + s)?
        - log_gamma(2.0 * n - 1.0 + s)?)
}

/// `π^{2n-1} Γ(n+s)² / (Γ(2n+s) Γ(2n-1+s))`.
pub fn pushforward_constant(n: usize, s: f64) -> Result<f64> {
    Ok(log_pushforward_constant(n, s)?.exp())
}

/// `ln` of the normalizing product that makes the corner projections of
/// `μ^(s,λ)` consistent from `n₀` to `n`:
/// `Σ_{l=n₀}^{n} [-(2l-1) ln π + ln Γ(2l+s) + ln Γ(2l-1+s) - 2 ln Γ(l+s)]`.
///
/// Each factor is the reciprocal of [`pushforward_constant`]`(l, s)`. For
/// `s > -1` and `n₀ = 1` it is the probability normalization of the corner.
pub fn log_projective_constant(n0: usize, n: usize, s: f64) -> Result<f64> {
    if n0 == 0 || n0 > n {
        return Err(Error::InvalidParameter(format!("need 1 <= n0 <= n, got n0 = {n0}, n = {n}")));
    }
    (n0..=n).map(|l| log_pushforward_constant(l, s).map(|c| -c)).sum()
}

/// Radial density `(1/n!) det[K_n^(s)(λ_i, λ_j)]` of the eigenvalues of
/// `z*z`, up to the kernel's fixed normalization.
pub fn radial_density(n: usize, s: f64, lambdas: &[f64]) -> Result<f64> {
    let params = PickrellParams::new(n, s)?;
    if lambdas.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: lambdas.len() });
    }
    let kernel = params.radial_kernel().prepare()?;
    let samples = lambdas.iter().map(|&l| kernel.sample(l)).collect::<Result<Vec<_>>>()?;
    let m = DMatrix::from_fn(n, n, |i, j| kernel.pair(&samples[i], &samples[j]));
    let log_fact: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
    Ok((m.lu().determinant().max(0.0).ln() - log_fact).exp())
}

/// Default compact grid for the scaling limit: `k × k` points of `[0.5, 4]²`.
pub fn default_scaling_grid(k: usize) -> Vec<(f64, f64)> {
    let pts: Vec<f64> = (0..k).map(|i| 0.5 + 3.5 * i as f64 / (k.max(2) - 1) as f64).collect();
    pts.iter().flat_map(|&x| pts.iter().map(move |&y| (x, y))).collect()
}

/// `max |n² K_n^(s)(n²x, n²y) - K^(s)(x, y)|` over the grid.
pub fn scaling_limit_error(n: usize, s: f64, grid: &[(f64, f64)]) -> Result<f64> {
    if !(s > -1.0) {
        return Err(Error::InvalidParameter(format!("scaling limit needs s > -1, got {s}")));
    }
    let radial = PickrellParams::new(n, s)?.radial_kernel().prepare()?;
    let limit = KernelSpec::ModifiedBesselK { s }.prepare()?;
    let n2 = (n * n) as f64;
    let mut worst: f64 = 0.0;
    for &(x, y) in grid {
        let a = n2 * radial.eval(n2 * x, n2 * y)?;
        let b = limit.eval(x, y)?;
        worst = worst.max((a - b).abs());
    }
    Ok(worst)
}

/// Residual of `n` chained rank-one steps
/// `J_s = J_{s+2n} + Σ_{k<n} (s+2k+1)/√(xy) J_{s+2k+1}(√x) J_{s+2k+1}(√y)`.
pub fn bessel_chain_residual(s: f64, n: usize, x: f64, y: f64) -> Result<f64> {
    let mut rhs = bessel_kernel_extended(s + 2.0 * n as f64, x, y)?;
    for k in 0..n {
        let nu = s + 2.0 * k as f64 + 1.0;
        rhs += nu / (x * y).sqrt() * bessel_j_extended(nu, x.sqrt())? * bessel_j_extended(nu, y.sqrt())?;
    }
    Ok(bessel_kernel_extended(s, x, y)? - rhs)
}

/// The perturbation `V^(s)` of the Bessel space `L^(s+2n_s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BesselPerturbationSpec {
    pub s: f64,
    pub n_s: usize,
    /// Exponents `-s/2 - k`, `k = 1..=n_s`, of the functions spanning `V`.
    pub v_exponents: Vec<f64>,
    /// Parameter `s + 2n_s` of the target kernel `K^(s+2n_s)`.
    pub target_s: f64,
    /// Radius `R` of the base set `(lo, R]`.
    pub radius: f64,
}

impl BesselPerturbationSpec {
    pub fn new(s: f64, radius: f64) -> Result<Self> {
        let n_s = n_s_of(s)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
        }
        Ok(Self {
            s,
            n_s,
            v_exponents: (1..=n_s).map(|k| -0.5 * s - k as f64).collect(),
            target_s: s + 2.0 * n_s as f64,
            radius,
        })
    }

    pub fn target_kernel(&self) -> KernelSpec {
        KernelSpec::ModifiedBesselK { s: self.target_s }
    }
}

/// Discretization of `(lo, hi)` for the Bessel experiments.
///
/// `K^(s)(x, y)` oscillates with phase `2/√x`, so panels shrink near `lo`
/// until each spans at most `max_phase` radians; elsewhere they grow
/// geometrically with `panels_per_decade`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesselGrid {
    pub lo: f64,
    pub hi: f64,
    pub panels_per_decade: usize,
    pub max_phase: f64,
    pub nodes_per_panel: usize,
}

impl Default for BesselGrid {
    fn default() -> Self {
        Self { lo: 1e-5, hi: 160.0, panels_per_decade: 10, max_phase: 30.0, nodes_per_panel: 16 }
    }
}

impl BesselGrid {
    /// Panel endpoints, with a boundary at every break inside `(lo, hi)`.
    pub fn endpoints(&self, breaks: &[f64]) -> Result<Vec<f64>> {
        if !(self.lo > 0.0 && self.hi > self.lo && self.hi.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid needs 0 < lo < hi, got ({}, {})", self.lo, self.hi)));
        }
        if self.panels_per_decade == 0 || !(self.max_phase > 0.0) {
            return Err(Error::InvalidParameter("panel density parameters must be positive".into()));
        }
        let ratio = 10f64.powf(1.0 / self.panels_per_decade as f64) - 1.0;
        let mut ends = vec![self.lo];
        let mut x = self.lo;
        while x < self.hi {
            x += (ratio * x).min(self.max_phase * x.powf(1.5));
            ends.push(x.min(self.hi));
        }
        for &b in breaks {
            if !b.is_finite() {
                return Err(Error::InvalidParameter(format!("non-finite break point {b}")));
            }
            if b > self.lo && b < self.hi {
                ends.push(b);
            }
        }
        ends.sort_by(f64::total_cmp);
        // Merge slivers left by the breaks into their neighbours.
        let mut merged: Vec<f64> = Vec::with_capacity(ends.len());
        for e in ends {
            match merged.last() {
                Some(&last) if e - last <= 0.05 * ratio * last => {
                    if breaks.contains(&e) || e == self.hi {
                        *merged.last_mut().unwrap() = e;
                    }
                }
                _ => merged.push(e),
            }
        }
        if merged[0] != self.lo {
            merged.insert(0, self.lo);
        }
        Ok(merged)
    }

    pub fn rule(&self, breaks: &[f64]) -> Result<Quadrature> {
        Quadrature::from_endpoints(&self.endpoints(breaks)?, self.nodes_per_panel)
    }
}

/// `B^(s) = B(H^(s), (lo, R])` on `q`. With `radius = None` the smallest
/// radius in [`DEFAULT_RADII`] giving an angle of at least
/// [`MIN_DEFAULT_ANGLE`] is used; candidates must be panel boundaries of `q`.
pub fn build_bessel_perturbation(
    s: f64,
    radius: Option<f64>,
    q: &Quadrature,
) -> Result<(BesselPerturbationSpec, InfDetMeasureSpec)> {
    let n_s = n_s_of(s)?;
    if q.interval().lo() <= 0.0 {
        return Err(Error::InvalidParameter("Bessel rules must live in (0, ∞)".into()));
    }
    let target = KernelSpec::ModifiedBesselK { s: s + 2.0 * n_s as f64 };
    let op = discretize(&target, q)?;
    let v: Vec<Vec<f64>> = (1..=n_s).map(|k| q.sample(|x| x.powf(-0.5 * s - k as f64))).collect();
    let make = |r: f64| -> Result<(BesselPerturbationSpec, InfDetMeasureSpec)> {
        check_break(q, r)?;
        let e0 = q.mask_between(f64::NEG_INFINITY, r);
        let infdet = InfDetMeasureSpec::new(LinearPart::Kernel { op: op.clone(), tau: DEFAULT_TAU }, v.clone(), e0)?;
        Ok((BesselPerturbationSpec::new(s, r)?, infdet))
    };
    if let Some(r) = radius {
        return make(r);
    }
    let mut last = None;
    for r in DEFAULT_RADII {
        if r >= q.interval().hi() {
            break;
        }
        let built = make(r)?;
        let angle = window_projection(&built.1, &q.empty_mask())?.angle.unwrap_or(0.0);
        if angle >= MIN_DEFAULT_ANGLE {
            return Ok(built);
        }
        last = Some(angle);
    }
    Err(Error::Undefined(format!(
        "no default radius reaches angle {MIN_DEFAULT_ANGLE} (last angle {})",
        last.map_or("n/a".to_string(), |a| format!("{a:e}"))
    )))
}

fn check_break(q: &Quadrature, r: f64) -> Result<()> {
    let ends = q.endpoints();
    if ends.iter().any(|&e| (e - r).abs() <= 1e-12 * r.abs().max(1.0)) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("radius {r} is not a panel boundary of the rule")))
    }
}

/// Trace-norm distances on `probe` between `Q_R^(s)` and `K^(s+2n_s)` for
/// each radius. With `perturbed = false` the same windows are applied to `L`
/// alone.
pub fn qr_convergence(
    s: f64,
    radii: &[f64],
    probe: Interval,
    grid: &BesselGrid,
    perturbed: bool,
) -> Result<Vec<ConvergencePoint>> {
    if radii.is_empty() {
        return Err(Error::InvalidParameter("need at least one radius".into()));
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("radii must be strictly increasing".into()));
    }
    if probe.hi() > radii[0] || probe.lo() < grid.lo {
        return Err(Error::InvalidParameter("probe must lie inside the smallest base set".into()));
    }
    let mut g = *grid;
    g.hi = g.hi.max(radii[radii.len() - 1]);
    let mut breaks = radii.to_vec();
    breaks.extend([probe.lo(), probe.hi()]);
    let q = g.rule(&breaks)?;
    let (_, spec) = build_bessel_perturbation(s, Some(radii[0]), &q)?;
    let spec = if perturbed { spec } else { spec.without_perturbation() };
    let windows: Vec<NodeMask> = radii.iter().map(|&r| q.mask_between(radii[0], r)).collect();
    perturbation_convergence(&spec, &windows, &q.mask_between(probe.lo(), probe.hi()))
}

/// A point `(γ, x)` of the Pickrell set: `x` nonincreasing, `γ ≥ Σ x_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticPoint {
    pub gamma: f64,
    pub x: Vec<f64>,
}

impl AsymptoticPoint {
    pub fn new(gamma: f64, mut x: Vec<f64>) -> Result<Self> {
        if x.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !(gamma >= 0.0) {
            return Err(Error::Domain("Pickrell set coordinates must be finite and nonnegative".into()));
        }
        x.sort_by(|a, b| b.total_cmp(a));
        let total: f64 = x.iter().sum();
        if gamma < total * (1.0 - 1e-12) {
            return Err(Error::Domain(format!("need γ >= Σ x_i, got γ = {gamma}, Σ = {total}")));
        }
        Ok(Self { gamma, x })
    }

    /// The configuration `(x_1, x_2, …)`: nonzero coordinates with
    /// multiplicity.
    pub fn conf(&self) -> Vec<f64> {
        self.x.iter().copied().filter(|&v| v > 0.0).collect()
    }
}

/// Eigenvalues `λ_i` of `(z^(n))* z^(n)` scaled by `n²`, as a Pickrell-set
/// point with `γ = tr / n²`.
pub fn scaled_point(n: usize, lambdas: &[f64]) -> Result<AsymptoticPoint> {
    let n2 = (n * n) as f64;
    let x: Vec<f64> = lambdas.iter().map(|l| l / n2).collect();
    AsymptoticPoint::new(x.iter().sum(), x)
}

/// Radial samples at one matrix size, as eigenvalues `λ = (1+u)/(1-u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialSamples {
    pub n: usize,
    pub s: f64,
    pub lambdas: Vec<Vec<f64>>,
}

/// Rule on `[-1, 1]` graded toward `u = 1`, where the large eigenvalues live.
pub fn radial_rule(n: usize) -> Result<Quadrature> {
    let panels = 24 + n / 2;
    Quadrature::build(Interval::new(-1.0, 1.0)?, panels, 24, Grading::GeometricTowardHi)
}

/// `draws` radial configurations of the `n × n` Pickrell measure, sampled as
/// the Jacobi projection process in `u` and mapped to `λ`.
pub fn sample_radial(n: usize, s: f64, draws: usize, rng: SeededRng) -> Result<RadialSamples> {
    if !(s > -1.0) {
        return Err(Error::InvalidParameter(format!("radial sampling needs s > -1, got {s}")));
    }
    PickrellParams::new(n, s)?;
    let q = radial_rule(n)?;
    let basis = cd_kernel_functions(n, s, Interval::new(-1.0, 1.0)?, &q)?;
    let lambdas = sample_many(&basis, draws, rng)
        .into_iter()
        .map(|c| c.points.iter().map(|&u| (1.0 + u) / (1.0 - u)).collect())
        .collect();
    Ok(RadialSamples { n, s, lambdas })
}

/// Summary of scaled radial samples at one matrix size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledSummary {
    pub n: usize,
    /// Mean of the `k`-th largest scaled point, `k < top`.
    pub mean_top: Vec<f64>,
    pub mean_gamma: f64,
    /// Sorted largest scaled point of every draw.
    pub top_points: Vec<f64>,
}

/// Diagnostics of the scaled radial samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticDiagnostics {
    pub summaries: Vec<ScaledSummary>,
    /// Two-sample Kolmogorov–Smirnov distances of the largest scaled point
    /// between consecutive sizes.
    pub ks_consecutive: Vec<f64>,
}

/// Top-`k` statistics of `λ/n²` per size and KS distances between
/// consecutive sizes.
pub fn asymptotic_diagnostics(samples: &[RadialSamples], top: usize) -> Result<AsymptoticDiagnostics> {
    let mut summaries = Vec::with_capacity(samples.len());
    for set in samples {
        let draws = set.lambdas.len();
        if draws == 0 {
            return Err(Error::InvalidParameter(format!("no samples at n = {}", set.n)));
        }
        let mut sums = vec![0.0; top];
        let mut gamma = 0.0;
        let mut top_points = Vec::with_capacity(draws);
        for lambdas in &set.lambdas {
            let p = scaled_point(set.n, lambdas)?;
            for (k, v) in p.x.iter().take(top).enumerate() {
                sums[k] += v;
            }
            gamma += p.gamma;
            top_points.push(p.x.first().copied().unwrap_or(0.0));
        }
        top_points.sort_by(f64::total_cmp);
        summaries.push(ScaledSummary {
            n: set.n,
            mean_top: sums.iter().map(|v| v / draws as f64).collect(),
            mean_gamma: gamma / draws as f64,
            top_points,
        });
    }
    let ks_consecutive = summaries.windows(2).map(|w| ks_distance(&w[0].top_points, &w[1].top_points)).collect();
    Ok(AsymptoticDiagnostics { summaries, ks_consecutive })
}

/// Two-sample Kolmogorov–Smirnov statistic of sorted samples.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Exact distribution function of the largest scaled point `λ_max/n²`:
/// `P(λ_max ≤ n² t) = det(I - G)` with `G` the Gram matrix of the Jacobi
/// functions on `(u(n² t), 1)`.
pub fn top_point_cdf(n: usize, s: f64, t: f64) -> Result<f64> {
    if !(s > -1.0) {
        return Err(Error::InvalidParameter(format!("top-point law needs s > -1, got {s}")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("threshold must be positive, got {t}")));
    }
    let lambda = (n * n) as f64 * t;
    let u0 = (lambda - 1.0) / (lambda + 1.0);
    let sub = Interval::new(u0, 1.0)?;
    let q = Quadrature::build(sub, 16, 24, Grading::GeometricTowardHi)?;
    let kernel = KernelSpec::ChristoffelDarbouxJacobi { n, s, sub: Interval::new(-1.0, 1.0)? }.prepare()?;
    let mut cols = DMatrix::zeros(q.len(), n);
    for (i, &u) in q.nodes().iter().enumerate() {
        let vals = kernel.sample(u)?.vals;
        for k in 0..n {
            cols[(i, k)] = vals[k] * q.sqrt_weights()[i];
        }
    }
    let g = cols.transpose() * cols;
    Ok((DMatrix::identity(n, n) - g).determinant().clamp(0.0, 1.0))
}

/// Sup distance between the exact top-point laws at consecutive sizes, over
/// the thresholds `ts`.
pub fn top_point_ks_trend(s: f64, sizes: &[usize], ts: &[f64]) -> Result<Vec<f64>> {
    let cdfs = sizes
        .iter()
        .map(|&n| ts.iter().map(|&t| top_point_cdf(n, s, t)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(cdfs
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .collect())
}
