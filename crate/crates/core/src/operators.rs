//! Discretized integral operators and the determinants built from them.
//!
//! Operators are stored in symmetric Nyström form: a kernel `K` on a rule with
//! weights `w` becomes the matrix `A_ij = √w_i K(x_i, x_j) √w_j`. Projection
//! bases are stored in the same coordinates, so an orthonormal family of
//! functions is a matrix with Euclidean-orthonormal columns and the projection
//! is `V Vᵀ`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::quadrature::{NodeMask, Quadrature};

/// Largest admissible condition number of `I + (g-1)K`.
pub const MAX_CONDITION: f64 = 1e12;
/// Relative pivot below which [`project_span`] drops a column.
pub const SPAN_DROP_TOLERANCE: f64 = 1e-10;
/// Slack on the spectrum `[0, 1]` before an operator is rejected as a
/// non-contraction.
pub const CONTRACTION_SLACK: f64 = 1e-6;

/// A kernel operator discretized on a quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedOperator {
    quadrature: Quadrature,
    matrix: DMatrix<f64>,
    hermitian: bool,
}

impl DiscretizedOperator {
    /// Wraps a Nyström matrix. Symmetric matrices are flagged hermitian.
    pub fn new(quadrature: Quadrature, matrix: DMatrix<f64>) -> Result<Self> {
        let n = quadrature.len();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::LengthMismatch { expected: n, got: matrix.nrows().max(matrix.ncols()) });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("operator matrix has non-finite entries".into()));
        }
        let scale = matrix.amax().max(1.0);
        let hermitian = (&matrix - matrix.transpose()).amax() <= 1e-13 * scale;
        Ok(Self { quadrature, matrix, hermitian })
    }

    pub fn zero(quadrature: Quadrature) -> Self {
        let n = quadrature.len();
        Self { quadrature, matrix: DMatrix::zeros(n, n), hermitian: true }
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quadrature
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// Eigenvalues in ascending order. Requires a hermitian operator.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        if !self.hermitian {
            return Err(Error::InvalidParameter("eigenvalues requested for a non-symmetric operator".into()));
        }
        Ok(sorted_eigenvalues(self.matrix.clone()))
    }

    /// The submatrix on the nodes of `mask`.
    pub fn compress(&self, mask: &NodeMask) -> Result<DMatrix<f64>> {
        mask.check_universe(self.len())?;
        Ok(submatrix(&self.matrix, &mask.indices()))
    }

    fn same_grid(&self, other: &DiscretizedOperator) -> Result<()> {
        if self.quadrature != other.quadrature {
            return Err(Error::QuadratureMismatch);
        }
        Ok(())
    }
}

pub(crate) fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub(crate) fn submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// Nyström discretization of a kernel family on `q`.
pub fn discretize(spec: &KernelSpec, q: &Quadrature) -> Result<DiscretizedOperator> {
    let kernel = spec.prepare()?;
    let samples: Vec<_> = q.nodes().par_iter().map(|&x| kernel.sample(x)).collect::<Result<_>>()?;
    let sw = q.sqrt_weights();
    let n = q.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::with_capacity(n - i);
            row.push(sw[i] * samples[i].diag() * sw[i]);
            for j in (i + 1)..n {
                row.push(sw[i] * kernel.pair(&samples[i], &samples[j]) * sw[j]);
            }
            row
        })
        .collect();
    Ok(DiscretizedOperator { quadrature: q.clone(), matrix: fill_symmetric(n, &rows), hermitian: true })
}

/// Nyström discretization of an arbitrary symmetric kernel. The kernel is
/// evaluated once per unordered node pair, including the diagonal.
pub fn discretize_fn<F>(q: &Quadrature, kernel: F) -> Result<DiscretizedOperator>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let x = q.nodes();
    let sw = q.sqrt_weights();
    let n = q.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| sw[i] * kernel(x[i], x[j]) * sw[j]).collect())
        .collect();
    let matrix = fill_symmetric(n, &rows);
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("kernel produced non-finite values on the grid".into()));
    }
    Ok(DiscretizedOperator { quadrature: q.clone(), matrix, hermitian: true })
}

fn fill_symmetric(n: usize, upper_rows: &[Vec<f64>]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in upper_rows.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            m[(i, i + k)] = v;
            m[(i + k, i)] = v;
        }
    }
    m
}

/// An orthonormal family of functions on a quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBasis {
    quadrature: Quadrature,
    /// `√w_i f_k(x_i)`, one column per function.
    columns: DMatrix<f64>,
}

impl ProjectionBasis {
    /// Wraps columns already in `√w`-scaled coordinates, checking
    /// orthonormality.
    pub fn from_scaled_columns(quadrature: Quadrature, columns: DMatrix<f64>) -> Result<Self> {
        quadrature.check_len(columns.nrows())?;
        let m = columns.ncols();
        let defect = (columns.transpose() * &columns - DMatrix::<f64>::identity(m, m)).amax();
        if m > 0 && !(defect <= 1e-10) {
            return Err(Error::Singular(format!("basis columns are not orthonormal (Gram defect {defect:e})")));
        }
        Ok(Self { quadrature, columns })
    }

    pub fn empty(quadrature: Quadrature) -> Self {
        let n = quadrature.len();
        Self { quadrature, columns: DMatrix::zeros(n, 0) }
    }

    /// For columns orthonormal by construction.
    pub(crate) fn from_orthonormal(quadrature: Quadrature, columns: DMatrix<f64>) -> Self {
        debug_assert_eq!(quadrature.len(), columns.nrows());
        Self { quadrature, columns }
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quadrature
    }

    pub fn rank(&self) -> usize {
        self.columns.ncols()
    }

    pub fn scaled_columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    /// Node values of the `k`-th basis function.
    pub fn function(&self, k: usize) -> Vec<f64> {
        self.columns
            .column(k)
            .iter()
            .zip(self.quadrature.sqrt_weights())
            .map(|(c, sw)| c / sw)
            .collect()
    }

    /// Gram matrix in the quadrature inner product.
    pub fn gram(&self) -> DMatrix<f64> {
        self.columns.transpose() * &self.columns
    }

    /// Nyström matrix of the projection, `V Vᵀ`.
    pub fn projection_matrix(&self) -> DMatrix<f64> {
        &self.columns * self.columns.transpose()
    }

    pub fn to_operator(&self) -> DiscretizedOperator {
        let mut m = self.projection_matrix();
        symmetrize(&mut m);
        DiscretizedOperator { quadrature: self.quadrature.clone(), matrix: m, hermitian: true }
    }

    /// Kernel diagonal `Σ_k f_k(x_i)²` weighted by `w_i`: the one-point
    /// intensity mass at node `i`.
    pub fn node_intensity(&self) -> Vec<f64> {
        self.columns.row_iter().map(|r| r.norm_squared()).collect()
    }

    fn same_grid(&self, other: &ProjectionBasis) -> Result<()> {
        if self.quadrature != other.quadrature {
            return Err(Error::QuadratureMismatch);
        }
        Ok(())
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Either form in which a determinantal kernel is held.
#[derive(Debug, Clone, Copy)]
pub enum OperatorRef<'a> {
    Basis(&'a ProjectionBasis),
    Operator(&'a DiscretizedOperator),
}

impl<'a> From<&'a ProjectionBasis> for OperatorRef<'a> {
    fn from(b: &'a ProjectionBasis) -> Self {
        OperatorRef::Basis(b)
    }
}

impl<'a> From<&'a DiscretizedOperator> for OperatorRef<'a> {
    fn from(a: &'a DiscretizedOperator) -> Self {
        OperatorRef::Operator(a)
    }
}

impl OperatorRef<'_> {
    pub fn quadrature(&self) -> &Quadrature {
        match self {
            OperatorRef::Basis(b) => b.quadrature(),
            OperatorRef::Operator(a) => a.quadrature(),
        }
    }

    pub fn len(&self) -> usize {
        self.quadrature().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn compress(&self, idx: &[usize]) -> DMatrix<f64> {
        match self {
            OperatorRef::Basis(b) => {
                let rows = b.columns.select_rows(idx);
                &rows * rows.transpose()
            }
            OperatorRef::Operator(a) => submatrix(&a.matrix, idx),
        }
    }
}

/// A partition of the nodes into disjoint cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    cells: Vec<NodeMask>,
}

impl Partition {
    pub fn new(cells: Vec<NodeMask>, nodes: usize) -> Result<Self> {
        let mut covered = NodeMask::empty(nodes);
        for cell in &cells {
            cell.check_universe(nodes)?;
            if !cell.is_disjoint(&covered) {
                return Err(Error::Mask("partition cells overlap".into()));
            }
            covered = covered.union(cell);
        }
        if covered.count() != nodes {
            return Err(Error::Mask("partition cells do not cover every node".into()));
        }
        Ok(Self { cells })
    }

    /// Cells cut at the given abscissae.
    pub fn from_breaks(q: &Quadrature, breaks: &[f64]) -> Result<Self> {
        let mut cuts = vec![f64::NEG_INFINITY];
        cuts.extend(breaks.iter().copied());
        cuts.push(f64::INFINITY);
        cuts.sort_by(|a, b| a.total_cmp(b));
        let cells = cuts
            .windows(2)
            .map(|w| NodeMask::from_fn(q.len(), |i| q.nodes()[i] >= w[0] && q.nodes()[i] < w[1]))
            .filter(|m| !m.is_empty())
            .collect();
        Self::new(cells, q.len())
    }

    pub fn single(nodes: usize) -> Self {
        Self { cells: vec![NodeMask::full(nodes)] }
    }

    pub fn cells(&self) -> &[NodeMask] {
        &self.cells
    }
}

pub(crate) fn det(m: DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    m.lu().determinant()
}

/// `det(I + A)` of the Nyström matrix.
pub fn fredholm_det(a: &DiscretizedOperator) -> f64 {
    let n = a.len();
    det(DMatrix::identity(n, n) + &a.matrix)
}

/// The partition-regularized determinant
/// `det((I + A) e^{-A}) · exp(Σ_cells tr(χ A χ))`.
pub fn det_xi(a: &DiscretizedOperator, xi: &Partition) -> Result<f64> {
    let n = a.len();
    let mut traces = 0.0;
    for cell in xi.cells() {
        cell.check_universe(n)?;
        traces += cell.indices().iter().map(|&i| a.matrix[(i, i)]).sum::<f64>();
    }
    let carleman = det((DMatrix::identity(n, n) + &a.matrix) * (-&a.matrix).exp());
    Ok(carleman * traces.exp())
}

/// `det(I - χ_c K χ_c)` with `c` the complement of `mask`: the probability
/// that no particle falls outside `mask`.
pub fn gap_probability<'a>(op: impl Into<OperatorRef<'a>>, mask: &NodeMask) -> Result<f64> {
    let op = op.into();
    mask.check_universe(op.len())?;
    if mask.count() == mask.universe() {
        return Ok(1.0);
    }
    if let OperatorRef::Basis(b) = op {
        // No particle can land where every basis function vanishes.
        let outside = mask.complement().indices();
        if outside.iter().all(|&i| b.columns.row(i).iter().all(|&v| v == 0.0)) {
            return Ok(1.0);
        }
        // det(I_n - V_c V_cᵀ) = det(I_m - V_cᵀ V_c) = det(V_keepᵀ V_keep).
        let keep = b.columns.select_rows(&mask.indices());
        let gram = keep.transpose() * keep;
        return spectral_gap(gram, |lambda| lambda);
    }
    let comp = op.compress(&mask.complement().indices());
    spectral_gap(comp, |lambda| 1.0 - lambda)
}

fn spectral_gap(m: DMatrix<f64>, factor: impl Fn(f64) -> f64) -> Result<f64> {
    let mut p = 1.0;
    for lambda in sorted_eigenvalues(m) {
        if !(-CONTRACTION_SLACK..=1.0 + CONTRACTION_SLACK).contains(&lambda) {
            return Err(Error::NonContraction(lambda));
        }
        // Eigenvalues within the slack of 0 or 1 are rounding noise.
        p *= factor(lambda).clamp(0.0, 1.0);
    }
    Ok(p)
}

/// The same gap probability through an LU determinant of the negated
/// compression; an independent code path for cross-checks.
pub fn gap_probability_lu<'a>(op: impl Into<OperatorRef<'a>>, mask: &NodeMask) -> Result<f64> {
    let op = op.into();
    mask.check_universe(op.len())?;
    let idx = mask.complement().indices();
    let comp = op.compress(&idx);
    Ok(det(DMatrix::identity(idx.len(), idx.len()) - comp))
}

/// `det(I + (g-1)K)`, the expectation of the multiplicative functional `Ψ_g`.
pub fn multiplicative_det<'a>(op: impl Into<OperatorRef<'a>>, g: &[f64]) -> Result<f64> {
    let op = op.into();
    op.quadrature().check_len(g.len())?;
    match op {
        OperatorRef::Basis(b) => {
            // det(I_n + D V Vᵀ) = det(I_m + Vᵀ D V).
            let m = b.rank();
            let dv = DMatrix::from_fn(b.columns.nrows(), m, |i, k| (g[i] - 1.0) * b.columns[(i, k)]);
            Ok(det(DMatrix::identity(m, m) + b.columns.transpose() * dv))
        }
        OperatorRef::Operator(a) => {
            let n = a.len();
            Ok(det(DMatrix::identity(n, n) + scale_rows(&a.matrix, |i| g[i] - 1.0)))
        }
    }
}

/// `E Π_j z_j^{#B_j} = det(I + Σ_j (z_j - 1) χ_{B_j} K χ_U)` with `U = ∪ B_j`.
pub fn counting_generating_det<'a>(op: impl Into<OperatorRef<'a>>, masks: &[NodeMask], z: &[f64]) -> Result<f64> {
    let op = op.into();
    if masks.len() != z.len() {
        return Err(Error::LengthMismatch { expected: masks.len(), got: z.len() });
    }
    let n = op.len();
    let mut union = NodeMask::empty(n);
    let mut factor = vec![0.0; n];
    for (mask, &zj) in masks.iter().zip(z) {
        mask.check_universe(n)?;
        if !mask.is_disjoint(&union) {
            return Err(Error::Mask("counting windows overlap".into()));
        }
        union = union.union(mask);
        for i in mask.indices() {
            factor[i] = zj - 1.0;
        }
    }
    let idx = union.indices();
    let comp = op.compress(&idx);
    let scaled = scale_rows(&comp, |r| factor[idx[r]]);
    Ok(det(DMatrix::identity(idx.len(), idx.len()) + scaled))
}

fn scale_rows(m: &DMatrix<f64>, f: impl Fn(usize) -> f64) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| f(i) * m[(i, j)])
}

fn scale_cols(m: &DMatrix<f64>, f: impl Fn(usize) -> f64) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| f(j) * m[(i, j)])
}

/// Result of [`transform_bgk`].
#[derive(Debug, Clone)]
pub struct Transform {
    /// `B(g, K) = g K (I + (g-1)K)^{-1}`.
    pub b: DiscretizedOperator,
    /// `B̃(g, K) = √g K (I + (g-1)K)^{-1} √g`.
    pub b_tilde: DiscretizedOperator,
    /// `det(I + √(g-1) K √(g-1))` with the signed factorization.
    pub norm_const: f64,
    /// Condition number of `I + (g-1)K`.
    pub condition: f64,
}

/// The transforms `B(g, K)` and `B̃(g, K)` and the normalization constant of
/// the multiplicative functional `Ψ_g`.
pub fn transform_bgk(k: &DiscretizedOperator, g: &[f64]) -> Result<Transform> {
    let n = k.len();
    k.quadrature.check_len(g.len())?;
    if let Some(&bad) = g.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Domain(format!("g must be finite and nonnegative, got {bad}")));
    }
    let a = &k.matrix;
    let system = DMatrix::identity(n, n) + scale_rows(a, |i| g[i] - 1.0);
    let sv = system.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(Error::Singular(format!("I + (g-1)K has condition number {condition:e}")));
    }
    let inv = system
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular("I + (g-1)K is not invertible".into()))?;
    let a_inv = a * inv;
    let b = scale_rows(&a_inv, |i| g[i]);
    let sqrt_g: Vec<f64> = g.iter().map(|v| v.sqrt()).collect();
    let mut bt = scale_cols(&scale_rows(&a_inv, |i| sqrt_g[i]), |j| sqrt_g[j]);
    if k.hermitian {
        symmetrize(&mut bt);
    }

    let root: Vec<f64> = g.iter().map(|v| (v - 1.0).abs().sqrt()).collect();
    let sign: Vec<f64> = g.iter().map(|v| if *v < 1.0 { -1.0 } else { 1.0 }).collect();
    let sas = scale_cols(&scale_rows(a, |i| sign[i] * root[i]), |j| root[j]);
    let norm_const = det(DMatrix::identity(n, n) + sas);

    let q = k.quadrature.clone();
    Ok(Transform {
        b: DiscretizedOperator::new(q.clone(), b)?,
        b_tilde: DiscretizedOperator { quadrature: q, matrix: bt, hermitian: k.hermitian },
        norm_const,
        condition,
    })
}

/// An orthonormal basis of a sampled span, with the number of columns
/// dropped as numerically dependent.
#[derive(Debug, Clone)]
pub struct Span {
    pub basis: ProjectionBasis,
    pub dropped: usize,
}

/// Orthonormal basis of `span(raw)` by pivoted Gram–Schmidt in the quadrature
/// inner product.
pub fn project_span(q: &Quadrature, raw: &[Vec<f64>]) -> Result<Span> {
    if raw.is_empty() {
        return Err(Error::InvalidParameter("project_span needs at least one function".into()));
    }
    for f in raw {
        q.check_len(f.len())?;
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("sampled function has non-finite values".into()));
        }
    }
    let sw = q.sqrt_weights();
    let cols = DMatrix::from_fn(q.len(), raw.len(), |i, k| raw[k][i] * sw[i]);
    let (basis, dropped) = orthonormalize(cols, SPAN_DROP_TOLERANCE, 0.0);
    Ok(Span { basis: ProjectionBasis { quadrature: q.clone(), columns: basis }, dropped })
}

/// Pivoted modified Gram–Schmidt with one reorthogonalization pass. Columns
/// whose residual norm falls below `tol` times the leading pivot, or below
/// `floor`, are dropped.
pub(crate) fn orthonormalize(mut cols: DMatrix<f64>, tol: f64, floor: f64) -> (DMatrix<f64>, usize) {
    let total = cols.ncols();
    let mut remaining: Vec<usize> = (0..total).collect();
    let mut out: Vec<DVector<f64>> = Vec::new();
    let mut leading = None;
    while !remaining.is_empty() {
        let (pos, norm) = remaining
            .iter()
            .enumerate()
            .map(|(p, &c)| (p, cols.column(c).norm()))
            .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        let lead = *leading.get_or_insert(norm);
        let cut = (tol * lead).max(floor);
        if !(norm > cut) || norm == 0.0 {
            break;
        }
        let c = remaining.swap_remove(pos);
        let mut v = cols.column(c).into_owned();
        for _ in 0..2 {
            for u in &out {
                let d = u.dot(&v);
                v.axpy(-d, u, 1.0);
            }
        }
        let vn = v.norm();
        if !(vn > cut) {
            continue;
        }
        v /= vn;
        for &r in &remaining {
            let d = v.dot(&cols.column(r));
            let mut col = cols.column_mut(r);
            col.axpy(-d, &v, 1.0);
        }
        out.push(v);
    }
    let rank = out.len();
    let basis = if rank == 0 {
        DMatrix::zeros(cols.nrows(), 0)
    } else {
        DMatrix::from_columns(&out)
    };
    (basis, total - rank)
}

/// Principal angles between two subspaces, ascending, in `[0, π/2]`.
///
/// Cosines come from the singular values of `V_aᵀ V_b`; angles whose sine is
/// small are recomputed from the residual `V_b - V_a V_aᵀ V_b`, where the
/// arccosine would lose half the digits.
pub fn principal_angles(a: &ProjectionBasis, b: &ProjectionBasis) -> Result<Vec<f64>> {
    a.same_grid(b)?;
    if a.rank() == 0 || b.rank() == 0 {
        return Err(Error::InvalidParameter("principal angles need nonzero dimensions".into()));
    }
    let (big, small) = if a.rank() >= b.rank() { (a, b) } else { (b, a) };
    let cross = big.columns.transpose() * &small.columns;
    let mut cos: Vec<f64> = cross.clone().svd(false, false).singular_values.iter().copied().collect();
    cos.sort_by(|x, y| y.total_cmp(x));
    let residual = &small.columns - &big.columns * cross;
    let mut sin: Vec<f64> = residual.svd(false, false).singular_values.iter().copied().collect();
    sin.sort_by(|x, y| x.total_cmp(y));
    Ok(cos
        .iter()
        .zip(&sin)
        .map(|(&c, &s)| if s * s < 0.5 { s.min(1.0).asin() } else { c.min(1.0).acos() })
        .collect())
}

/// Smallest principal angle: the angle between the two subspaces.
pub fn principal_angle(a: &ProjectionBasis, b: &ProjectionBasis) -> Result<f64> {
    Ok(principal_angles(a, b)?[0])
}

/// Largest principal angle; zero exactly when one subspace contains the other.
pub fn max_principal_angle(a: &ProjectionBasis, b: &ProjectionBasis) -> Result<f64> {
    Ok(*principal_angles(a, b)?.last().unwrap())
}

/// Trace norm of the compression of `A - B` to `mask`.
pub fn trace_norm_distance(a: &DiscretizedOperator, b: &DiscretizedOperator, mask: &NodeMask) -> Result<f64> {
    a.same_grid(b)?;
    mask.check_universe(a.len())?;
    let idx = mask.indices();
    if idx.is_empty() {
        return Ok(0.0);
    }
    let diff = submatrix(&a.matrix, &idx) - submatrix(&b.matrix, &idx);
    Ok(trace_norm(diff))
}

pub(crate) fn trace_norm(m: DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.svd(false, false).singular_values.sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{cd_kernel_functions, eval_diag};
    use crate::quadrature::{Grading, Interval};
    use approx::assert_relative_eq;

    fn rule(lo: f64, hi: f64, panels: usize, npp: usize) -> Quadrature {
        Quadrature::build(Interval::new(lo, hi).unwrap(), panels, npp, Grading::Uniform).unwrap()
    }

    fn unit_vector(q: &Quadrature, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let v = q.sample(f);
        let n = q.inner_product(&v, &v).unwrap().sqrt();
        v.iter().map(|x| x / n).collect()
    }

    #[test]
    fn discretize_separable_kernels() {
        let q = rule(0.0, 1.0, 2, 8);
        let zero = discretize_fn(&q, |_, _| 0.0).unwrap();
        assert_eq!(zero.matrix().amax(), 0.0);
        let phi = |x: f64| (3.0 * x).sin() + 0.5;
        let a = discretize_fn(&q, |x, y| phi(x) * phi(y)).unwrap();
        let v = DVector::from_fn(q.len(), |i, _| q.sqrt_weights()[i] * phi(q.nodes()[i]));
        assert!((a.matrix() - &v * v.transpose()).amax() < 1e-15);
        assert!(a.is_hermitian());
    }

    #[test]
    fn bessel_trace_is_integral_of_diagonal() {
        let q = Quadrature::build(Interval::new(1e-8, 1.0).unwrap(), 16, 16, Grading::GeometricTowardLo).unwrap();
        let spec = KernelSpec::BesselJ { s: 0.0 };
        let a = discretize(&spec, &q).unwrap();
        let fine = Quadrature::build(Interval::new(1e-8, 1.0).unwrap(), 40, 24, Grading::GeometricTowardLo).unwrap();
        let exact = fine.integrate(|x| eval_diag(&spec, x).unwrap());
        assert!((a.trace() - exact).abs() < 1e-10);
        let sym = (a.matrix() - a.matrix().transpose()).amax();
        assert_eq!(sym, 0.0);
    }

    #[test]
    fn fredholm_examples() {
        let q = rule(-1.0, 1.0, 1, 6);
        assert_eq!(fredholm_det(&DiscretizedOperator::zero(q.clone())), 1.0);
        let c = 0.37;
        let a = discretize_fn(&q, |x, y| c * (1.0 + x * x) * (1.0 + y * y) / q.integrate(|t| (1.0 + t * t).powi(2)))
            .unwrap();
        assert_relative_eq!(fredholm_det(&a), 1.0 + c, max_relative = 1e-13);
    }

    #[test]
    fn bessel_gap_self_converges() {
        let spec = KernelSpec::BesselJ { s: 0.0 };
        let gap = |npp| {
            let q = Quadrature::build(Interval::new(0.0, 1.0).unwrap(), 4, npp, Grading::Uniform).unwrap();
            let a = discretize(&spec, &q).unwrap();
            let n = a.len();
            det(DMatrix::identity(n, n) - a.matrix())
        };
        let (coarse, fine) = (gap(12), gap(24));
        assert!(((coarse - fine) / fine).abs() < 1e-10, "{coarse} {fine}");
    }

    fn random_symmetric(q: &Quadrature, rank: usize, seed: u64, scale: f64) -> DiscretizedOperator {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let n = q.len();
        let mut m = DMatrix::zeros(n, n);
        for _ in 0..rank {
            let v = DVector::<f64>::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let v = &v / v.norm();
            let c: f64 = rng.random_range(-scale..scale);
            m += c * &v * v.transpose();
        }
        symmetrize(&mut m);
        DiscretizedOperator::new(q.clone(), m).unwrap()
    }

    #[test]
    fn det_xi_agrees_and_multiplies() {
        let q = rule(0.0, 3.0, 3, 8);
        assert_eq!(det_xi(&DiscretizedOperator::zero(q.clone()), &Partition::single(q.len())).unwrap(), 1.0);
        for seed in 0..5 {
            let a = random_symmetric(&q, 3, seed, 0.9);
            let fd = fredholm_det(&a);
            for xi in [Partition::single(q.len()), Partition::from_breaks(&q, &[1.0, 2.0]).unwrap()] {
                assert_relative_eq!(det_xi(&a, &xi).unwrap(), fd, max_relative = 1e-10);
            }
            let b = random_symmetric(&q, 5, seed + 100, 0.9);
            let n = q.len();
            let prod = (DMatrix::identity(n, n) + a.matrix()) * (DMatrix::identity(n, n) + b.matrix())
                - DMatrix::identity(n, n);
            let ab = DiscretizedOperator::new(q.clone(), prod).unwrap();
            let xi = Partition::from_breaks(&q, &[1.5]).unwrap();
            let lhs = det_xi(&ab, &xi).unwrap();
            let rhs = det_xi(&a, &xi).unwrap() * det_xi(&b, &xi).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-9);
        }
    }

    #[test]
    fn partition_validation() {
        let q = rule(0.0, 1.0, 2, 4);
        let a = q.mask_between(0.0, 0.6);
        let b = q.mask_between(0.4, 1.0);
        assert!(Partition::new(vec![a.clone(), b], q.len()).is_err());
        assert!(Partition::new(vec![a.clone()], q.len()).is_err());
        assert!(Partition::new(vec![a.clone(), a.complement()], q.len()).is_ok());
    }

    #[test]
    fn gap_examples() {
        let q = rule(-1.0, 1.0, 4, 8);
        let v = unit_vector(&q, |x| (2.0 * x).cos() + x);
        let span = project_span(&q, std::slice::from_ref(&v)).unwrap();
        assert_eq!(gap_probability(&span.basis, &q.full_mask()).unwrap(), 1.0);
        let mask = q.mask_between(-1.0, 0.25);
        let outside: f64 = mask
            .complement()
            .indices()
            .iter()
            .map(|&i| q.weights()[i] * v[i] * v[i])
            .sum();
        let p = gap_probability(&span.basis, &mask).unwrap();
        assert_relative_eq!(p, 1.0 - outside, max_relative = 1e-12);
        let op = span.basis.to_operator();
        assert_relative_eq!(gap_probability(&op, &mask).unwrap(), p, max_relative = 1e-12);
        assert_relative_eq!(gap_probability_lu(&op, &mask).unwrap(), p, max_relative = 1e-12);
    }

    #[test]
    fn gap_rejects_non_contractions() {
        let q = rule(0.0, 1.0, 1, 4);
        let a = discretize_fn(&q, |_, _| 2.0).unwrap();
        assert!(matches!(gap_probability(&a, &q.empty_mask()), Err(Error::NonContraction(_))));
    }

    #[test]
    fn transform_examples() {
        let q = rule(-1.0, 1.0, 4, 8);
        let basis = cd_kernel_functions(3, 0.5, Interval::new(-1.0, 1.0).unwrap(), &q).unwrap();
        let k = basis.to_operator();
        let ones = vec![1.0; q.len()];
        let t = transform_bgk(&k, &ones).unwrap();
        assert!((t.b.matrix() - k.matrix()).amax() < 1e-13);
        assert!((t.b_tilde.matrix() - k.matrix()).amax() < 1e-13);
        assert_relative_eq!(t.norm_const, 1.0, max_relative = 1e-13);

        let v = unit_vector(&q, |x| x.exp());
        let one = project_span(&q, std::slice::from_ref(&v)).unwrap().basis.to_operator();
        let g = q.sample(|x| 0.3 + x * x);
        let expect = 1.0 + q.inner_product(&g.iter().map(|gi| gi - 1.0).zip(&v).map(|(a, b)| a * b).collect::<Vec<_>>(), &v).unwrap();
        let t = transform_bgk(&one, &g).unwrap();
        assert_relative_eq!(t.norm_const, expect, max_relative = 1e-12);
        assert_relative_eq!(t.norm_const, multiplicative_det(&one, &g).unwrap(), max_relative = 1e-12);

        let g = q.sample(|x| 0.2 + 0.8 * (1.0 - x * x));
        let t = transform_bgk(&k, &g).unwrap();
        let bt = t.b_tilde.matrix();
        assert!((bt * bt - bt).amax() < 1e-8);
        let scaled: Vec<Vec<f64>> =
            (0..3).map(|c| basis.function(c).iter().zip(&g).map(|(f, gi)| f * gi.sqrt()).collect()).collect();
        let target = project_span(&q, &scaled).unwrap().basis;
        let (vals, vecs) = {
            let e = bt.clone().symmetric_eigen();
            (e.eigenvalues, e.eigenvectors)
        };
        let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 0.5).collect();
        let range = ProjectionBasis::from_scaled_columns(q.clone(), vecs.select_columns(&keep)).unwrap();
        assert!(max_principal_angle(&range, &target).unwrap() < 1e-7);
    }

    #[test]
    fn transform_detects_singularity() {
        let q = rule(0.0, 1.0, 1, 4);
        let v = unit_vector(&q, |_| 1.0);
        let p = project_span(&q, &[v]).unwrap().basis.to_operator();
        let g = vec![0.0; q.len()];
        assert!(matches!(transform_bgk(&p, &g), Err(Error::Singular(_))));
    }

    #[test]
    fn span_examples() {
        let q = rule(-1.0, 1.0, 2, 8);
        let f = q.sample(|u| u.sin() + 2.0);
        assert!(project_span(&q, &[]).is_err());
        let s = project_span(&q, std::slice::from_ref(&f)).unwrap();
        assert_eq!((s.basis.rank(), s.dropped), (1, 0));
        let s = project_span(&q, &[f.clone(), f]).unwrap();
        assert_eq!((s.basis.rank(), s.dropped), (1, 1));
        let raw = vec![q.sample(|_| 1.0), q.sample(|u| u), q.sample(|u| u * u), q.sample(|u| 1.0 + u)];
        let s = project_span(&q, &raw).unwrap();
        assert_eq!((s.basis.rank(), s.dropped), (3, 1));
        assert!((s.basis.gram() - DMatrix::identity(3, 3)).amax() < 1e-13);
    }

    #[test]
    fn angle_examples() {
        let q = rule(-1.0, 1.0, 2, 8);
        let one = project_span(&q, &[q.sample(|_| 1.0)]).unwrap().basis;
        assert!(principal_angle(&one, &one).unwrap() < 1e-15);
        let lin = project_span(&q, &[q.sample(|u| u)]).unwrap().basis;
        assert_relative_eq!(principal_angle(&one, &lin).unwrap(), std::f64::consts::FRAC_PI_2, max_relative = 1e-14);
        for eps in [1e-9, 1e-5, 0.1, 2.0] {
            let tilted = project_span(&q, &[q.sample(|u| 1.0 + eps * u)]).unwrap().basis;
            let want = (eps / 3f64.sqrt()).atan();
            assert_relative_eq!(principal_angle(&one, &tilted).unwrap(), want, max_relative = 1e-9);
        }
        assert!(principal_angle(&one, &ProjectionBasis::empty(q.clone())).is_err());
    }

    #[test]
    fn trace_norm_examples() {
        let q = rule(0.0, 3.0, 3, 8);
        let spec = KernelSpec::BesselJ { s: 0.0 };
        let a = discretize(&spec, &q).unwrap();
        let mask = q.mask_between(1.0, 2.0);
        assert_eq!(trace_norm_distance(&a, &a, &mask).unwrap(), 0.0);

        let c = -0.7;
        let vv = discretize_fn(&q, |x, y| {
            let f = |t: f64| if t > 1.0 && t < 2.0 { (t - 1.5).cos() } else { 0.0 };
            c * f(x) * f(y)
        })
        .unwrap();
        let norm = q.integrate(|t| if t > 1.0 && t < 2.0 { (t - 1.5).cos().powi(2) } else { 0.0 });
        let zero = DiscretizedOperator::zero(q.clone());
        assert_relative_eq!(trace_norm_distance(&vv, &zero, &mask).unwrap(), c.abs() * norm, max_relative = 1e-12);

        let mut last = f64::INFINITY;
        for ds in [0.1, 0.01, 0.001] {
            let b = discretize(&KernelSpec::BesselJ { s: ds }, &q).unwrap();
            let d = trace_norm_distance(&a, &b, &mask).unwrap();
            assert!(d > 0.0 && d < last);
            last = d;
        }
        let other = rule(0.0, 3.0, 3, 9);
        assert!(matches!(
            trace_norm_distance(&a, &DiscretizedOperator::zero(other), &mask),
            Err(Error::QuadratureMismatch)
        ));
    }

    #[test]
    fn counting_det_reduces_to_gap_and_identity() {
        let q = rule(-1.0, 1.0, 4, 8);
        let basis = cd_kernel_functions(3, 0.0, Interval::new(-1.0, 1.0).unwrap(), &q).unwrap();
        let right = q.mask_between(0.0, 1.0);
        assert_eq!(counting_generating_det(&basis, std::slice::from_ref(&right), &[1.0]).unwrap(), 1.0);
        let gap = gap_probability(&basis, &right.complement()).unwrap();
        assert_relative_eq!(counting_generating_det(&basis, std::slice::from_ref(&right), &[0.0]).unwrap(), gap, max_relative = 1e-12);
        assert!(counting_generating_det(&basis, &[right.clone(), right], &[0.0, 2.0]).is_err());
    }
}
