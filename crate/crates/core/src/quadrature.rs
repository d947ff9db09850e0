//! Composite Gauss–Legendre rules on bounded intervals, and node masks.
//!
//! Every operator, mass and sampler in the crate lives on a fixed
//! [`Quadrature`]. Subsets of the phase space are [`NodeMask`]s over its
//! nodes, so set operations on windows are exact.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A bounded interval `[lo, hi]` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!("interval [{lo}, {hi}] is not finite")));
        }
        if lo >= hi {
            return Err(Error::InvalidParameter(format!("degenerate interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

/// How panel endpoints are distributed over the interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grading {
    Uniform,
    /// Panels shrink geometrically toward `lo`. For `lo > 0` the endpoints form
    /// a geometric progression from `lo` to `hi`; otherwise the distances to
    /// `lo` do.
    GeometricTowardLo,
    /// Mirror image of `GeometricTowardLo` (distances to `hi` are geometric).
    GeometricTowardHi,
}

/// A composite Gauss–Legendre rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    interval: Interval,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    sqrt_weights: Vec<f64>,
    panels: Vec<Interval>,
}

const MAX_NODES_PER_PANEL: usize = 64;

impl Quadrature {
    /// Builds a rule with `panels` panels of `nodes_per_panel` Gauss–Legendre
    /// nodes each.
    pub fn build(interval: Interval, panels: usize, nodes_per_panel: usize, grading: Grading) -> Result<Self> {
        Self::build_with_breaks(interval, panels, nodes_per_panel, grading, &[])
    }

    /// Like [`Quadrature::build`], with additional panel boundaries inserted at
    /// `breaks`, so that masks cut at those points are exact.
    pub fn build_with_breaks(
        interval: Interval,
        panels: usize,
        nodes_per_panel: usize,
        grading: Grading,
        breaks: &[f64],
    ) -> Result<Self> {
        if panels == 0 {
            return Err(Error::InvalidParameter("panel count must be >= 1".into()));
        }
        let mut ends = panel_endpoints(interval, panels, grading);
        for &b in breaks {
            if !b.is_finite() {
                return Err(Error::InvalidParameter(format!("non-finite break point {b}")));
            }
            if b > interval.lo && b < interval.hi {
                ends.push(b);
            }
        }
        ends.sort_by(|a, b| a.total_cmp(b));
        let scale = interval.hi.abs().max(interval.lo.abs()).max(1.0);
        ends.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * scale);
        Self::from_endpoints(&ends, nodes_per_panel)
    }

    /// Builds a rule from explicit, strictly increasing panel endpoints.
    pub fn from_endpoints(ends: &[f64], nodes_per_panel: usize) -> Result<Self> {
        if !(2..=MAX_NODES_PER_PANEL).contains(&nodes_per_panel) {
            return Err(Error::InvalidParameter(format!(
                "nodes per panel must lie in [2, {MAX_NODES_PER_PANEL}], got {nodes_per_panel}"
            )));
        }
        if ends.len() < 2 {
            return Err(Error::InvalidParameter("need at least two panel endpoints".into()));
        }
        let interval = Interval::new(ends[0], ends[ends.len() - 1])?;
        let (ref_nodes, ref_weights) = gauss_legendre(nodes_per_panel);
        let mut nodes = Vec::with_capacity((ends.len() - 1) * nodes_per_panel);
        let mut weights = Vec::with_capacity(nodes.capacity());
        let mut panels = Vec::with_capacity(ends.len() - 1);
        for pair in ends.windows(2) {
            let panel = Interval::new(pair[0], pair[1])?;
            let half = 0.5 * panel.length();
            let mid = 0.5 * (panel.lo + panel.hi);
            for (t, w) in ref_nodes.iter().zip(&ref_weights) {
                nodes.push(mid + half * t);
                weights.push(half * w);
            }
            panels.push(panel);
        }
        let sqrt_weights = weights.iter().map(|w| w.sqrt()).collect();
        Ok(Self { interval, nodes, weights, sqrt_weights, panels })
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sqrt_weights(&self) -> &[f64] {
        &self.sqrt_weights
    }

    pub fn panels(&self) -> &[Interval] {
        &self.panels
    }

    /// Panel endpoints, `panels().len() + 1` values.
    pub fn endpoints(&self) -> Vec<f64> {
        let mut ends: Vec<f64> = self.panels.iter().map(|p| p.lo).collect();
        ends.push(self.interval.hi);
        ends
    }

    /// Samples `f` at the nodes.
    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// `Σ_i w_i f_i g_i`.
    pub fn inner_product(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        self.check_len(f.len())?;
        self.check_len(g.len())?;
        Ok(f.iter().zip(g).zip(&self.weights).map(|((a, b), w)| w * a * b).sum())
    }

    pub(crate) fn check_len(&self, got: usize) -> Result<()> {
        if got != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got });
        }
        Ok(())
    }

    /// Nodes strictly inside `(lo, hi)`.
    ///
    /// Nodes never sit on panel boundaries, so when `lo` and `hi` are
    /// boundaries the open/closed distinction is immaterial.
    pub fn mask_between(&self, lo: f64, hi: f64) -> NodeMask {
        NodeMask::from_fn(self.len(), |i| self.nodes[i] > lo && self.nodes[i] < hi)
    }

    pub fn full_mask(&self) -> NodeMask {
        NodeMask::full(self.len())
    }

    pub fn empty_mask(&self) -> NodeMask {
        NodeMask::empty(self.len())
    }
}

/// `⟨f, g⟩ = Σ_i w_i f_i g_i` on the rule `q`.
pub fn inner_product(q: &Quadrature, f: &[f64], g: &[f64]) -> Result<f64> {
    q.inner_product(f, g)
}

fn panel_endpoints(interval: Interval, panels: usize, grading: Grading) -> Vec<f64> {
    let (lo, hi) = (interval.lo, interval.hi);
    let p = panels as f64;
    match grading {
        Grading::Uniform => (0..=panels).map(|k| lo + (hi - lo) * k as f64 / p).collect(),
        Grading::GeometricTowardLo if lo > 0.0 => {
            let ratio = (hi / lo).ln() / p;
            let mut ends: Vec<f64> = (0..=panels).map(|k| lo * (ratio * k as f64).exp()).collect();
            ends[panels] = hi;
            ends
        }
        Grading::GeometricTowardLo => {
            let t = graded_unit(panels, smallest_panel(lo, hi - lo));
            t.iter().map(|&t| lo + (hi - lo) * t).collect()
        }
        Grading::GeometricTowardHi => {
            let t = graded_unit(panels, smallest_panel(hi, hi - lo));
            t.iter().rev().map(|&t| hi - (hi - lo) * t).collect()
        }
    }
}

/// Relative size of the panel touching `end`: as small as possible while its
/// Gauss nodes stay distinguishable from `end` in double precision.
fn smallest_panel(end: f64, length: f64) -> f64 {
    (3e-11 * end.abs() / length).max(1e-14)
}

/// `0 = t_0 < t_1 < ... < t_P = 1` with `t_k = σ^{P-k}` and `t_1 ≥ floor`.
fn graded_unit(panels: usize, floor: f64) -> Vec<f64> {
    if panels == 1 {
        return vec![0.0, 1.0];
    }
    let sigma = floor.powf(1.0 / (panels as f64 - 1.0)).max(0.15);
    let mut t = vec![0.0];
    t.extend((1..=panels).map(|k| sigma.powi((panels - k) as i32)));
    t
}

/// Gauss–Legendre nodes (ascending) and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = 1.0;
    let mut p2 = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
    }
    let dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
    (p1, dp)
}

/// A subset of quadrature nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeMask {
    bits: Vec<bool>,
}

impl NodeMask {
    pub fn empty(n: usize) -> Self {
        Self { bits: vec![false; n] }
    }

    pub fn full(n: usize) -> Self {
        Self { bits: vec![true; n] }
    }

    pub fn from_fn<F: FnMut(usize) -> bool>(n: usize, f: F) -> Self {
        Self { bits: (0..n).map(f).collect() }
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut bits = vec![false; n];
        for &i in indices {
            if i >= n {
                return Err(Error::Mask(format!("node index {i} out of range for {n} nodes")));
            }
            bits[i] = true;
        }
        Ok(Self { bits })
    }

    /// Total number of nodes the mask ranges over.
    pub fn universe(&self) -> usize {
        self.bits.len()
    }

    /// Number of selected nodes.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn contains(&self, i: usize) -> bool {
        self.bits.get(i).copied().unwrap_or(false)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn union(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a && !b)
    }

    pub fn complement(&self) -> Self {
        Self { bits: self.bits.iter().map(|b| !b).collect() }
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !(a && b))
    }

    pub(crate) fn check_universe(&self, n: usize) -> Result<()> {
        if self.bits.len() != n {
            return Err(Error::Mask(format!(
                "mask ranges over {} nodes, quadrature has {n}",
                self.bits.len()
            )));
        }
        Ok(())
    }

    fn zip<F: Fn(bool, bool) -> bool>(&self, other: &Self, f: F) -> Self {
        assert_eq!(self.bits.len(), other.bits.len(), "masks over different node sets");
        Self { bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit() -> Interval {
        Interval::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn two_point_rule() {
        let q = Quadrature::build(unit(), 1, 2, Grading::Uniform).unwrap();
        let d = 0.5 / 3f64.sqrt();
        assert_relative_eq!(q.nodes()[0], 0.5 - d, epsilon = 1e-15);
        assert_relative_eq!(q.nodes()[1], 0.5 + d, epsilon = 1e-15);
        assert_relative_eq!(q.weights()[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(q.weights()[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn weight_sum_is_length() {
        let q = Quadrature::build(Interval::new(0.0, 2.0).unwrap(), 2, 2, Grading::Uniform).unwrap();
        assert_relative_eq!(q.weights().iter().sum::<f64>(), 2.0, max_relative = 1e-14);
        for grading in [Grading::Uniform, Grading::GeometricTowardLo, Grading::GeometricTowardHi] {
            for n in [2, 7, 16, 33, 64] {
                let iv = Interval::new(-1.0, 3.0).unwrap();
                let q = Quadrature::build(iv, 9, n, grading).unwrap();
                assert_relative_eq!(q.weights().iter().sum::<f64>(), 4.0, max_relative = 1e-12);
                assert!(q.weights().iter().all(|&w| w > 0.0));
                assert!(q.nodes().windows(2).all(|p| p[0] < p[1]));
                assert!(q.nodes().iter().all(|&x| x > -1.0 && x < 3.0));
            }
        }
    }

    #[test]
    fn geometric_endpoints_for_positive_lo() {
        let iv = Interval::new(1e-6, 10.0).unwrap();
        let q = Quadrature::build(iv, 8, 16, Grading::GeometricTowardLo).unwrap();
        let ends = q.endpoints();
        assert_eq!(ends.len(), 9);
        let ratio = ends[1] / ends[0];
        for p in ends.windows(2) {
            assert_relative_eq!(p[1] / p[0], ratio, max_relative = 1e-10);
        }
        assert_eq!(q.len(), 128);
    }

    #[test]
    fn invalid_constructions() {
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(0.0, f64::INFINITY).is_err());
        assert!(Quadrature::build(unit(), 0, 4, Grading::Uniform).is_err());
        assert!(Quadrature::build(unit(), 3, 1, Grading::Uniform).is_err());
        assert!(Quadrature::build(unit(), 3, 65, Grading::Uniform).is_err());
    }

    #[test]
    fn inner_product_examples() {
        let q = Quadrature::build(unit(), 1, 32, Grading::Uniform).unwrap();
        let ones = vec![1.0; q.len()];
        assert!((q.inner_product(&ones, &ones).unwrap() - 1.0).abs() < 1e-14);
        let zeros = vec![0.0; q.len()];
        assert_eq!(q.inner_product(&zeros, &ones).unwrap(), 0.0);
        assert!(q.inner_product(&ones[1..], &ones).is_err());

        let q = Quadrature::build(Interval::new(-1.0, 1.0).unwrap(), 3, 8, Grading::Uniform).unwrap();
        let p0 = vec![1.0; q.len()];
        let p1 = q.sample(|u| u);
        assert!(inner_product(&q, &p0, &p1).unwrap().abs() < 1e-12);
    }

    #[test]
    fn polynomial_exactness_per_panel() {
        for n in [2usize, 5, 12, 30, 64] {
            let q = Quadrature::build(Interval::new(0.5, 2.0).unwrap(), 3, n, Grading::GeometricTowardLo).unwrap();
            for d in 0..(2 * n) {
                let exact = (2f64.powi(d as i32 + 1) - 0.5f64.powi(d as i32 + 1)) / (d as f64 + 1.0);
                let got = q.integrate(|x| x.powi(d as i32));
                assert_relative_eq!(got, exact, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn refinement_converges_monotonically_on_endpoint_singularity() {
        let exact = 1.0 / 0.7;
        for grading in [Grading::Uniform, Grading::GeometricTowardLo] {
            let mut last_err = f64::INFINITY;
            let mut last_sign = None;
            for panels in [1, 2, 4, 8, 16, 32] {
                let q = Quadrature::build(unit(), panels, 8, grading).unwrap();
                let err = q.integrate(|x| x.powf(-0.3)) - exact;
                assert!(err.abs() < last_err, "{grading:?} panels={panels}");
                if let Some(s) = last_sign {
                    assert_eq!(s, err.signum());
                }
                last_sign = Some(err.signum());
                last_err = err.abs();
            }
        }
    }

    #[test]
    fn breaks_become_panel_boundaries() {
        let iv = Interval::new(1e-3, 160.0).unwrap();
        let q = Quadrature::build_with_breaks(iv, 12, 8, Grading::GeometricTowardLo, &[1.0, 2.0, 10.0, 40.0, 500.0])
            .unwrap();
        let ends = q.endpoints();
        for b in [1.0, 2.0, 10.0, 40.0] {
            assert!(ends.contains(&b));
        }
        let probe = q.mask_between(1.0, 2.0);
        let len: f64 = probe.indices().iter().map(|&i| q.weights()[i]).sum();
        assert_relative_eq!(len, 1.0, max_relative = 1e-13);
    }

    #[test]
    fn mask_algebra() {
        let a = NodeMask::from_indices(6, &[0, 1, 2]).unwrap();
        let b = NodeMask::from_indices(6, &[2, 3]).unwrap();
        assert_eq!(a.union(&b).indices(), vec![0, 1, 2, 3]);
        assert_eq!(a.intersection(&b).indices(), vec![2]);
        assert_eq!(a.difference(&b).indices(), vec![0, 1]);
        assert_eq!(a.complement().indices(), vec![3, 4, 5]);
        assert!(!a.is_disjoint(&b));
        assert!(a.difference(&b).is_subset_of(&a));
        assert!(NodeMask::from_indices(3, &[3]).is_err());
    }
}
