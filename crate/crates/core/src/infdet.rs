//! Infinite determinantal measures `B(H, E₀)` with `H = L + V`, realized
//! through their normalized restrictions to windows `E₀ ∪ B`.
//!
//! Only ratios of masses are ever computed. On a window the measure is the
//! projection process of `χ_{E₀∪B} H`, so a ratio of masses of nested windows
//! is a gap probability.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{
    gap_probability, orthonormalize, principal_angle, project_span, sorted_eigenvalues, trace_norm_distance,
    DiscretizedOperator, ProjectionBasis, SPAN_DROP_TOLERANCE,
};
use crate::pickrell::n_s_of;
use crate::quadrature::{Grading, Interval, NodeMask, Quadrature};
use crate::sampler::{sample_projection_dpp, Configuration};

/// Default eigenvalue threshold for extracting `χL` from a windowed kernel.
pub const DEFAULT_TAU: f64 = 1e-6;
/// A normalized perturbation whose distance to `χL` falls below this is
/// treated as lying in `χL`.
pub const COLLAPSE_TOLERANCE: f64 = 1e-8;
/// Angles between `χL` and `χV` below this draw a warning.
pub const ANGLE_WARNING: f64 = 1e-6;

/// The closed part `L` of `H = L + V`.
#[derive(Debug, Clone)]
pub enum LinearPart {
    /// An explicit orthonormal basis of `L`.
    Basis(ProjectionBasis),
    /// `L` is the range of a discretized projection kernel; windowed copies
    /// keep the eigenvectors of the compression above `tau`.
    Kernel { op: DiscretizedOperator, tau: f64 },
}

impl LinearPart {
    pub fn quadrature(&self) -> &Quadrature {
        match self {
            LinearPart::Basis(b) => b.quadrature(),
            LinearPart::Kernel { op, .. } => op.quadrature(),
        }
    }
}

/// `B(L + V, E₀)` on a quadrature.
#[derive(Debug, Clone)]
pub struct InfDetMeasureSpec {
    l: LinearPart,
    v: Vec<Vec<f64>>,
    e0: NodeMask,
}

impl InfDetMeasureSpec {
    pub fn new(l: LinearPart, v: Vec<Vec<f64>>, e0: NodeMask) -> Result<Self> {
        let q = l.quadrature();
        e0.check_universe(q.len())?;
        for f in &v {
            q.check_len(f.len())?;
            if f.iter().any(|x| !x.is_finite()) {
                return Err(Error::Domain("perturbation function has non-finite node values".into()));
            }
        }
        if let LinearPart::Kernel { tau, .. } = l {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(Error::InvalidParameter(format!("eigenvalue threshold must lie in (0, 1), got {tau}")));
            }
        }
        Ok(Self { l, v, e0 })
    }

    pub fn quadrature(&self) -> &Quadrature {
        self.l.quadrature()
    }

    pub fn linear_part(&self) -> &LinearPart {
        &self.l
    }

    pub fn perturbation(&self) -> &[Vec<f64>] {
        &self.v
    }

    pub fn e0(&self) -> &NodeMask {
        &self.e0
    }

    /// The same spec with `V` removed.
    pub fn without_perturbation(&self) -> Self {
        Self { l: self.l.clone(), v: Vec::new(), e0: self.e0.clone() }
    }

    /// The unperturbed operator `Q`, the projection onto `L`.
    pub fn unperturbed(&self) -> DiscretizedOperator {
        match &self.l {
            LinearPart::Basis(b) => b.to_operator(),
            LinearPart::Kernel { op, .. } => op.clone(),
        }
    }

    fn check_window(&self, b: &NodeMask) -> Result<()> {
        b.check_universe(self.quadrature().len())?;
        if !b.is_disjoint(&self.e0) {
            return Err(Error::Mask("window overlaps E0".into()));
        }
        Ok(())
    }
}

/// The normalized restriction of `B(H, E₀)` to configurations inside
/// `E₀ ∪ B`: a projection process.
#[derive(Debug, Clone)]
pub struct WindowedMeasure {
    /// Orthonormal basis of `χ_{E₀∪B}(L + V)`.
    pub projection: ProjectionBasis,
    /// `E₀ ∪ B`.
    pub support: NodeMask,
    /// Rank of the windowed `χL` after truncation.
    pub rank_l: usize,
    pub n_v: usize,
    /// Smallest principal angle between `χL` and `χV`; `None` when either is
    /// trivial.
    pub angle: Option<f64>,
    /// Sum of the eigenvalues of the windowed kernel dropped by truncation.
    pub discarded_trace: f64,
}

impl WindowedMeasure {
    pub fn rank(&self) -> usize {
        self.projection.rank()
    }
}

/// Orthonormal basis of `χ_W L` in scaled coordinates, and the discarded
/// trace.
fn windowed_l(l: &LinearPart, w: &NodeMask) -> (DMatrix<f64>, f64) {
    let idx = w.indices();
    match l {
        LinearPart::Basis(b) => {
            let mut cols = b.scaled_columns().clone();
            for i in 0..cols.nrows() {
                if !w.contains(i) {
                    cols.row_mut(i).fill(0.0);
                }
            }
            let (basis, _) = orthonormalize(cols, SPAN_DROP_TOLERANCE, 0.0);
            (basis, 0.0)
        }
        LinearPart::Kernel { op, tau } => {
            let n = op.len();
            if idx.is_empty() {
                return (DMatrix::zeros(n, 0), 0.0);
            }
            let comp = DMatrix::from_fn(idx.len(), idx.len(), |i, j| op.matrix()[(idx[i], idx[j])]);
            let eig = comp.symmetric_eigen();
            let keep: Vec<usize> = (0..idx.len()).filter(|&k| eig.eigenvalues[k] > *tau).collect();
            let discarded: f64 =
                (0..idx.len()).filter(|&k| eig.eigenvalues[k] <= *tau).map(|k| eig.eigenvalues[k].max(0.0)).sum();
            let mut cols = DMatrix::zeros(n, keep.len());
            for (c, &k) in keep.iter().enumerate() {
                for (r, &i) in idx.iter().enumerate() {
                    cols[(i, c)] = eig.eigenvectors[(r, k)];
                }
            }
            (cols, discarded)
        }
    }
}

/// Projection onto `χ_{E₀∪B}(L + V)`.
pub fn window_projection(spec: &InfDetMeasureSpec, b: &NodeMask) -> Result<WindowedMeasure> {
    spec.check_window(b)?;
    let q = spec.quadrature();
    let w = spec.e0.union(b);
    let (l_cols, discarded_trace) = windowed_l(&spec.l, &w);
    let rank_l = l_cols.ncols();
    let n_v = spec.v.len();

    let sw = q.sqrt_weights();
    let mut v_cols = DMatrix::from_fn(q.len(), n_v, |i, k| if w.contains(i) { spec.v[k][i] * sw[i] } else { 0.0 });
    for k in 0..n_v {
        let n = v_cols.column(k).norm();
        if n == 0.0 {
            return Err(Error::Collapse { joint: rank_l, expected: rank_l + n_v });
        }
        v_cols.column_mut(k).unscale_mut(n);
    }

    let angle = if rank_l > 0 && n_v > 0 {
        let (v_basis, _) = orthonormalize(v_cols.clone(), SPAN_DROP_TOLERANCE, 0.0);
        let a = principal_angle(
            &ProjectionBasis::from_orthonormal(q.clone(), l_cols.clone()),
            &ProjectionBasis::from_orthonormal(q.clone(), v_basis),
        )?;
        if a < ANGLE_WARNING {
            log::warn!("angle between windowed L and V is {a:e}; the window is nearly degenerate");
        }
        Some(a)
    } else {
        None
    };

    let residual = if rank_l > 0 { &v_cols - &l_cols * (l_cols.transpose() * &v_cols) } else { v_cols };
    let (v_orth, _) = orthonormalize(residual, 0.0, COLLAPSE_TOLERANCE);
    if v_orth.ncols() < n_v {
        return Err(Error::Collapse { joint: rank_l + v_orth.ncols(), expected: rank_l + n_v });
    }
    let mut joint = DMatrix::zeros(q.len(), rank_l + n_v);
    joint.columns_mut(0, rank_l).copy_from(&l_cols);
    joint.columns_mut(rank_l, n_v).copy_from(&v_orth);
    // The residuals were orthogonalized against L once; a second pass keeps
    // the joint basis orthonormal to working precision.
    let (joint, _) = orthonormalize(joint, 0.0, 0.5);
    if joint.ncols() != rank_l + n_v {
        return Err(Error::Collapse { joint: joint.ncols(), expected: rank_l + n_v });
    }
    Ok(WindowedMeasure {
        projection: ProjectionBasis::from_orthonormal(q.clone(), joint),
        support: w,
        rank_l,
        n_v,
        angle,
        discarded_trace,
    })
}

/// `B(Conf(E; E₀ ∪ B₁)) / B(Conf(E; E₀ ∪ B₂))` for `B₁ ⊆ B₂`.
pub fn relative_mass(spec: &InfDetMeasureSpec, b1: &NodeMask, b2: &NodeMask) -> Result<f64> {
    spec.check_window(b1)?;
    spec.check_window(b2)?;
    if !b1.is_subset_of(b2) {
        return Err(Error::Mask("relative mass needs nested windows B1 ⊆ B2".into()));
    }
    let windowed = window_projection(spec, b2)?;
    gap_probability(&windowed.projection, &spec.e0.union(b1))
}

/// Largest relative violation of `m(i,k) = m(i,j) m(j,k)` over all triples of
/// a nested chain of windows.
pub fn cocycle_residual(spec: &InfDetMeasureSpec, chain: &[NodeMask]) -> Result<f64> {
    let k = chain.len();
    let mut m = vec![vec![1.0; k]; k];
    for j in 0..k {
        let windowed = window_projection(spec, &chain[j])?;
        for i in 0..j {
            if !chain[i].is_subset_of(&chain[j]) {
                return Err(Error::Mask("window chain is not nested".into()));
            }
            m[i][j] = gap_probability(&windowed.projection, &spec.e0.union(&chain[i]))?;
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..k {
        for j in i..k {
            for l in j..k {
                let r = (m[i][l] - m[i][j] * m[j][l]).abs() / m[i][l].abs().max(f64::MIN_POSITIVE);
                worst = worst.max(r);
            }
        }
    }
    Ok(worst)
}

/// One draw from the normalized restriction to `E₀ ∪ B`.
pub fn sample_infdet<R: rand::Rng + ?Sized>(measure: &WindowedMeasure, rng: &mut R) -> Configuration {
    sample_projection_dpp(&measure.projection, rng)
}

/// The infinite orthogonal polynomial ensemble `Π(u_i - u_j)² Π(1 - u_i)^s`
/// on `[-1, 1)` with `N` particles, viewed from `E₀ = [-1, b₁]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpEnsembleSpec {
    pub n: usize,
    pub s: f64,
    pub b1: f64,
}

impl OpEnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("ensemble needs N >= 1".into()));
        }
        if !(self.b1 > -1.0 && self.b1 < 1.0) {
            return Err(Error::InvalidParameter(format!("cut point must lie in (-1, 1), got {}", self.b1)));
        }
        self.n_s()?;
        Ok(())
    }

    /// Number of perturbing directions: `0` for `s > -1`.
    pub fn n_s(&self) -> Result<usize> {
        if !self.s.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite exponent {}", self.s)));
        }
        if self.s > -1.0 {
            Ok(0)
        } else {
            n_s_of(self.s)
        }
    }

    /// `(dim V, dim L)`.
    pub fn split(&self) -> Result<(usize, usize)> {
        let ns = self.n_s()?;
        let dv = ns.min(self.n);
        Ok((dv, self.n - dv))
    }
}

/// The `L + V` presentation of the ensemble on `q`, with
/// `V = span{(1-u)^{(s+2k)/2} : k < n_s}` and
/// `L = span{(1-u)^{(s+2n_s)/2} u^k : k < N - n_s}`.
///
/// `q` must live in `[-1, 1]` and have a panel boundary at `b₁`. When
/// `N ≤ n_s`, `L` is trivial and `H = V`.
pub fn op_ensemble_as_infdet(spec: &OpEnsembleSpec, q: &Quadrature) -> Result<InfDetMeasureSpec> {
    spec.validate()?;
    let iv = q.interval();
    if iv.lo() < -1.0 || iv.hi() > 1.0 {
        return Err(Error::InvalidParameter("ensemble quadrature must lie in [-1, 1]".into()));
    }
    if !q.endpoints().contains(&spec.b1) {
        return Err(Error::InvalidParameter(format!("cut point {} is not a panel boundary of the rule", spec.b1)));
    }
    let ns = spec.n_s()?;
    let (dv, dl) = spec.split()?;
    let s = spec.s;
    let v: Vec<Vec<f64>> = (0..dv).map(|k| q.sample(|u| (1.0 - u).powf(0.5 * (s + 2.0 * k as f64)))).collect();
    let l = if dl == 0 {
        ProjectionBasis::empty(q.clone())
    } else {
        let e = 0.5 * (s + 2.0 * ns as f64);
        let raw: Vec<Vec<f64>> = (0..dl).map(|k| q.sample(|u| (1.0 - u).powf(e) * u.powi(k as i32))).collect();
        let span = project_span(q, &raw)?;
        if span.dropped > 0 {
            return Err(Error::Singular(format!("rule too coarse to resolve {dl} independent L functions")));
        }
        span.basis
    };
    let e0 = q.mask_between(f64::NEG_INFINITY, spec.b1);
    InfDetMeasureSpec::new(LinearPart::Basis(l), v, e0)
}

/// Mass ratio `Z(b₁)/Z(b₂)` of the ensemble restricted to `[-1, b]^N`, from
/// Hankel moment determinants `det M(b)`, `M_jk = ∫_{-1}^b u^{j+k}(1-u)^s du`.
pub fn moment_determinant_ratio(spec: &OpEnsembleSpec, b1: f64, b2: f64) -> Result<f64> {
    spec.validate()?;
    let det_m = |b: f64| -> Result<f64> {
        let q = Quadrature::build(Interval::new(-1.0, b)?, 16, 32, Grading::GeometricTowardHi)?;
        let n = spec.n;
        let moments: Vec<f64> =
            (0..2 * n - 1).map(|p| q.integrate(|u| u.powi(p as i32) * (1.0 - u).powf(spec.s))).collect();
        Ok(DMatrix::from_fn(n, n, |j, k| moments[j + k]).lu().determinant())
    };
    Ok(det_m(b1)? / det_m(b2)?)
}

/// Report attached to a reweighted projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    /// `tr(√(1-g) Q √(1-g))` for the unperturbed projection `Q`.
    pub trace_defect: f64,
    /// `min g` over `E₀ ∪ B`.
    pub min_g: f64,
}

/// Projection onto `√g · χ_{E₀∪B} H` for `g` in `(0, 1]`.
pub fn reweight(spec: &InfDetMeasureSpec, g: &[f64], b: &NodeMask) -> Result<(ProjectionBasis, NormReport)> {
    let q = spec.quadrature();
    q.check_len(g.len())?;
    if let Some(bad) = g.iter().find(|v| !v.is_finite() || **v > 1.0 || **v < 0.0) {
        return Err(Error::Domain(format!("g must take values in [0, 1], got {bad}")));
    }
    let windowed = window_projection(spec, b)?;
    let min_g = windowed.support.indices().iter().map(|&i| g[i]).fold(f64::INFINITY, f64::min);
    if !(min_g > 0.0) {
        return Err(Error::Domain(format!("g must be bounded away from 0 on E0 ∪ B, minimum is {min_g}")));
    }
    let mut cols = windowed.projection.scaled_columns().clone();
    for (i, gi) in g.iter().enumerate() {
        cols.row_mut(i).scale_mut(gi.sqrt());
    }
    let rank = cols.ncols();
    let (basis, _) = orthonormalize(cols, SPAN_DROP_TOLERANCE, 0.0);
    if basis.ncols() < rank {
        return Err(Error::Collapse { joint: basis.ncols(), expected: rank });
    }
    let diag: Vec<f64> = match &spec.l {
        LinearPart::Basis(l) => l.node_intensity(),
        LinearPart::Kernel { op, .. } => (0..op.len()).map(|i| op.matrix()[(i, i)]).collect(),
    };
    let trace_defect = diag.iter().zip(g).map(|(d, gi)| (1.0 - gi) * d).sum();
    Ok((ProjectionBasis::from_orthonormal(q.clone(), basis), NormReport { trace_defect, min_g }))
}

/// One entry of [`perturbation_convergence`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    /// Trace-norm distance on the probe between the windowed projection and
    /// the unperturbed `Q`.
    pub distance: f64,
    pub angle: Option<f64>,
    pub rank: usize,
    pub discarded_trace: f64,
}

/// Distances between the windowed projections and `Q` on `probe`, along an
/// increasing chain of windows.
pub fn perturbation_convergence(
    spec: &InfDetMeasureSpec,
    windows: &[NodeMask],
    probe: &NodeMask,
) -> Result<Vec<ConvergencePoint>> {
    for pair in windows.windows(2) {
        if !pair[0].is_subset_of(&pair[1]) {
            return Err(Error::Mask("windows must be nested and increasing".into()));
        }
    }
    let q_op = spec.unperturbed();
    windows
        .iter()
        .map(|b| {
            let windowed = window_projection(spec, b)?;
            let distance = trace_norm_distance(&windowed.projection.to_operator(), &q_op, probe)?;
            Ok(ConvergencePoint {
                distance,
                angle: windowed.angle,
                rank: windowed.rank(),
                discarded_trace: windowed.discarded_trace,
            })
        })
        .collect()
}

/// Eigenvalues of the compression of `Q` off `E₀`; their sum is the finite
/// trace required of the unperturbed projection away from `E₀`.
pub fn off_e0_spectrum(spec: &InfDetMeasureSpec) -> Vec<f64> {
    let idx = spec.e0.complement().indices();
    let q = spec.unperturbed();
    sorted_eigenvalues(DMatrix::from_fn(idx.len(), idx.len(), |i, j| q.matrix()[(idx[i], idx[j])]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::cd_kernel_functions;
    use crate::operators::{max_principal_angle, transform_bgk};
    use crate::sampler::SeededRng;
    use approx::assert_relative_eq;

    fn ensemble_rule(breaks: &[f64]) -> Quadrature {
        Quadrature::build_with_breaks(Interval::new(-1.0, 1.0).unwrap(), 10, 24, Grading::GeometricTowardHi, breaks)
            .unwrap()
    }

    #[test]
    fn empty_perturbation_returns_l() {
        let q = ensemble_rule(&[0.0]);
        let l = cd_kernel_functions(4, 0.5, Interval::new(-1.0, 1.0).unwrap(), &q).unwrap();
        let spec = InfDetMeasureSpec::new(LinearPart::Basis(l.clone()), vec![], q.mask_between(-2.0, 0.0)).unwrap();
        let w = window_projection(&spec, &q.mask_between(0.0, 2.0)).unwrap();
        assert_eq!(w.rank(), 4);
        assert!(max_principal_angle(&w.projection, &l).unwrap() < 1e-12);
    }

    #[test]
    fn rank_one_span_identity() {
        let q = ensemble_rule(&[]);
        let n = 6;
        for s in [0.0, 0.5] {
            let raw_l: Vec<Vec<f64>> =
                (0..n - 1).map(|k| q.sample(|u| (1.0 - u).powf(0.5 * (s + 2.0)) * u.powi(k as i32))).collect();
            let l = project_span(&q, &raw_l).unwrap().basis;
            let v = vec![q.sample(|u| (1.0 - u).powf(0.5 * s))];
            let spec = InfDetMeasureSpec::new(LinearPart::Basis(l), v, q.full_mask()).unwrap();
            let w = window_projection(&spec, &q.empty_mask()).unwrap();
            assert_eq!(w.rank(), n);
            let raw_h: Vec<Vec<f64>> =
                (0..n).map(|k| q.sample(|u| (1.0 - u).powf(0.5 * s) * u.powi(k as i32))).collect();
            let h = project_span(&q, &raw_h).unwrap().basis;
            assert!(max_principal_angle(&w.projection, &h).unwrap() < 1e-8);
        }
    }

    #[test]
    fn degenerate_perturbation_collapses() {
        let q = ensemble_rule(&[]);
        let raw: Vec<Vec<f64>> = (0..3).map(|k| q.sample(|u| u.powi(k))).collect();
        let l = project_span(&q, &raw).unwrap().basis;
        let v = vec![q.sample(|u| 1.0 - 2.0 * u * u)];
        let spec = InfDetMeasureSpec::new(LinearPart::Basis(l), v, q.full_mask()).unwrap();
        assert!(matches!(window_projection(&spec, &q.empty_mask()), Err(Error::Collapse { .. })));
    }

    #[test]
    fn windows_must_avoid_e0() {
        let q = ensemble_rule(&[0.0]);
        let spec = op_ensemble_as_infdet(&OpEnsembleSpec { n: 2, s: 0.5, b1: 0.0 }, &q).unwrap();
        assert!(window_projection(&spec, &q.mask_between(-0.5, 0.5)).is_err());
        let b = q.mask_between(0.0, 0.5);
        assert_eq!(relative_mass(&spec, &b, &b).unwrap(), 1.0);
        assert!(relative_mass(&spec, &q.mask_between(0.0, 1.0), &b).is_err());
    }

    #[test]
    fn ensemble_split_counts() {
        let q = ensemble_rule(&[0.2]);
        let spec = op_ensemble_as_infdet(&OpEnsembleSpec { n: 5, s: -1.5, b1: 0.2 }, &q).unwrap();
        assert_eq!(spec.perturbation().len(), 1);
        match spec.linear_part() {
            LinearPart::Basis(b) => assert_eq!(b.rank(), 4),
            _ => unreachable!(),
        }
        let spec = op_ensemble_as_infdet(&OpEnsembleSpec { n: 3, s: 0.5, b1: 0.2 }, &q).unwrap();
        assert!(spec.perturbation().is_empty());
        assert!(op_ensemble_as_infdet(&OpEnsembleSpec { n: 3, s: -3.0, b1: 0.2 }, &q).is_err());
        assert!(op_ensemble_as_infdet(&OpEnsembleSpec { n: 3, s: 0.5, b1: 0.25 }, &q).is_err());
    }

    #[test]
    fn normalized_restriction_is_cd_process() {
        for s in [0.5, -1.5] {
            let b1 = 0.3;
            let q = ensemble_rule(&[b1]);
            let spec = op_ensemble_as_infdet(&OpEnsembleSpec { n: 4, s, b1 }, &q).unwrap();
            let w = window_projection(&spec, &q.empty_mask()).unwrap();
            let cd = cd_kernel_functions(4, s, Interval::new(-1.0, b1).unwrap(), &q).unwrap();
            let diff = (w.projection.projection_matrix() - cd.projection_matrix()).amax();
            assert!(diff < 1e-8, "s={s}: {diff:e}");
        }
    }

    #[test]
    fn masses_match_moment_determinants_and_cocycle() {
        let bs = [-0.2, 0.3, 0.6, 0.9];
        let q = ensemble_rule(&bs);
        for s in [0.5, -1.5] {
            for n in 1..=4 {
                let e = OpEnsembleSpec { n, s, b1: bs[0] };
                let spec = op_ensemble_as_infdet(&e, &q).unwrap();
                let chain: Vec<NodeMask> = bs.iter().map(|&b| q.mask_between(bs[0], b)).collect();
                for j in 1..chain.len() {
                    let m = relative_mass(&spec, &chain[0], &chain[j]).unwrap();
                    let oracle = moment_determinant_ratio(&e, bs[0], bs[j]).unwrap();
                    assert_relative_eq!(m, oracle, max_relative = 1e-6);
                }
                assert!(cocycle_residual(&spec, &chain).unwrap() < 1e-8);
            }
        }
    }

    #[test]
    fn reweight_matches_transform() {
        let q = ensemble_rule(&[0.0]);
        let spec = op_ensemble_as_infdet(&OpEnsembleSpec { n: 3, s: 0.5, b1: 0.0 }, &q).unwrap();
        let b = q.mask_between(0.0, 2.0);
        let ones = vec![1.0; q.len()];
        let (p, report) = reweight(&spec, &ones, &b).unwrap();
        let w = window_projection(&spec, &b).unwrap();
        assert!(max_principal_angle(&p, &w.projection).unwrap() < 1e-12);
        assert_eq!(report.trace_defect, 0.0);

        let g = q.sample(|u| 0.3 + 0.7 * (1.0 - u * u));
        let (p, report) = reweight(&spec, &g, &b).unwrap();
        assert!(report.trace_defect > 0.0 && report.min_g > 0.29);
        let t = transform_bgk(&w.projection.to_operator(), &g).unwrap();
        let e = t.b_tilde.matrix().clone().symmetric_eigen();
        let keep: Vec<usize> = (0..q.len()).filter(|&i| e.eigenvalues[i] > 0.5).collect();
        let range = ProjectionBasis::from_scaled_columns(q.clone(), e.eigenvectors.select_columns(&keep)).unwrap();
        assert!(max_principal_angle(&p, &range).unwrap() < 1e-7);

        let floor = q.sample(|u| if u < 0.0 { 1.0 } else { 1e-3 });
        let (p, _) = reweight(&spec, &floor, &b).unwrap();
        assert_eq!(p.rank(), 3);
        let mut zero = ones.clone();
        zero[q.len() - 1] = 0.0;
        assert!(reweight(&spec, &zero, &b).is_err());
    }

    #[test]
    fn perturbation_effect_decays_over_windows() {
        let bs = [-1.0 / 3.0, 1.0 / 3.0, 0.6, 0.9, 0.99];
        let q = ensemble_rule(&bs);
        let spec = op_ensemble_as_infdet(&OpEnsembleSpec { n: 12, s: -1.5, b1: bs[1] }, &q).unwrap();
        let probe = q.mask_between(bs[0], bs[1]);
        let windows: Vec<NodeMask> = bs[2..].iter().map(|&b| q.mask_between(bs[1], b)).collect();
        let points = perturbation_convergence(&spec, &windows, &probe).unwrap();
        for pair in points.windows(2) {
            assert!(pair[1].distance < pair[0].distance, "{points:?}");
        }
        assert!(points.iter().all(|p| p.angle.unwrap() > ANGLE_WARNING), "{points:?}");
        assert!(points.windows(2).all(|w| w[1].angle > w[0].angle), "{points:?}");

        let control = perturbation_convergence(&spec.without_perturbation(), &windows, &probe).unwrap();
        // Without V the windowed projection still conditions on the window,
        // so the control decays to zero instead of vanishing outright.
        assert!(control.windows(2).all(|w| w[1].distance < w[0].distance), "{control:?}");
        assert!(control[control.len() - 1].distance < 1e-2, "{control:?}");
    }

    #[test]
    fn sampled_points_stay_in_window() {
        let q = ensemble_rule(&[0.0, 0.5]);
        let spec = op_ensemble_as_infdet(&OpEnsembleSpec { n: 4, s: -1.5, b1: 0.0 }, &q).unwrap();
        let b = q.mask_between(0.0, 0.5);
        let w = window_projection(&spec, &b).unwrap();
        let mut gen = SeededRng::new(4).generator();
        for _ in 0..200 {
            let c = sample_infdet(&w, &mut gen);
            assert_eq!(c.len(), 4);
            assert!(c.points.iter().all(|&x| x < 0.5));
        }
    }
}
