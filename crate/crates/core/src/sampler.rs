//! Exact sampling of projection determinantal processes on a quadrature, and
//! Monte Carlo estimators built on it.
//!
//! Draws are reproducible: a [`SeededRng`] names a ChaCha20 stream, and every
//! estimator splits its work over a fixed number of sub-streams whose partial
//! sums are pooled in a fixed order. The thread count never affects a result.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::ProjectionBasis;
use crate::quadrature::NodeMask;

/// Number of independent sub-streams a Monte Carlo run is split over.
pub const MC_STREAMS: u64 = 8;
/// Steps between full re-orthonormalizations of the working basis.
const REORTHONORMALIZE_EVERY: usize = 32;

/// A seed and a stream id; equal values give identical sample sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeededRng {
    pub seed: u64,
    pub stream: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// The `k`-th child stream. Children of distinct streams never collide
    /// for `k < 2^20` and parent stream ids below `2^44`.
    pub fn substream(&self, k: u64) -> Self {
        assert!(k < 1 << 20, "sub-stream index out of range");
        Self { seed: self.seed, stream: ((self.stream + 1) << 20) | k }
    }

    pub fn generator(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// A finite configuration of quadrature nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    /// Positions, ascending.
    pub points: Vec<f64>,
    /// Node indices of the points, ascending.
    pub nodes: Vec<usize>,
}

impl Configuration {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of points on the nodes of `mask`.
    pub fn count_in(&self, mask: &NodeMask) -> usize {
        self.nodes.iter().filter(|&&i| mask.contains(i)).count()
    }
}

/// One exact draw from the projection process of `p`, by sequential
/// conditioning on the node set.
pub fn sample_projection_dpp<R: Rng + ?Sized>(p: &ProjectionBasis, rng: &mut R) -> Configuration {
    let m = p.rank();
    let mut v: DMatrix<f64> = p.scaled_columns().clone();
    let mut nodes = Vec::with_capacity(m);
    for step in 0..m {
        let norms: Vec<f64> = v.row_iter().map(|r| r.norm_squared()).collect();
        let total: f64 = norms.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = norms.len() - 1;
        for (i, w) in norms.iter().enumerate() {
            acc += w;
            if acc > target && *w > 0.0 {
                pick = i;
                break;
            }
        }
        nodes.push(pick);
        if step + 1 == m {
            break;
        }
        v = eliminate_row(v, pick);
        if (step + 1) % REORTHONORMALIZE_EVERY == 0 {
            reorthonormalize(&mut v);
        }
    }
    nodes.sort_unstable();
    let x = p.quadrature().nodes();
    Configuration { points: nodes.iter().map(|&i| x[i]).collect(), nodes }
}

/// Rotates the columns so that row `i` becomes a multiple of `e_1`, then
/// drops the first column: the rest span the functions vanishing at node `i`.
fn eliminate_row(v: DMatrix<f64>, i: usize) -> DMatrix<f64> {
    let k = v.ncols();
    let r = v.row(i).transpose();
    let norm = r.norm();
    let alpha = if r[0] >= 0.0 { -norm } else { norm };
    let mut h = r;
    h[0] -= alpha;
    let hh = h.norm_squared();
    let rotated = if hh > 0.0 {
        let vh = &v * &h;
        v - (2.0 / hh) * vh * h.transpose()
    } else {
        v
    };
    rotated.columns(1, k - 1).into_owned()
}

fn reorthonormalize(v: &mut DMatrix<f64>) {
    let k = v.ncols();
    for c in 0..k {
        for _ in 0..2 {
            for prev in 0..c {
                let d = v.column(prev).dot(&v.column(c));
                let u: DVector<f64> = v.column(prev).into_owned();
                v.column_mut(c).axpy(-d, &u, 1.0);
            }
        }
        let n = v.column(c).norm();
        if n > 0.0 {
            v.column_mut(c).unscale_mut(n);
        }
    }
}

/// `draws` independent configurations from one stream.
pub fn sample_many(p: &ProjectionBasis, draws: usize, rng: SeededRng) -> Vec<Configuration> {
    let mut gen = rng.generator();
    (0..draws).map(|_| sample_projection_dpp(p, &mut gen)).collect()
}

/// Mean of a configuration statistic with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub draws: usize,
}

impl McEstimate {
    /// Distance to `value` in standard errors. Exact agreement with zero
    /// spread counts as zero.
    pub fn z_score(&self, value: f64) -> f64 {
        let d = (self.mean - value).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

/// Monte Carlo mean of `stat` over `draws` configurations, split across
/// [`MC_STREAMS`] sub-streams of `rng`.
pub fn mc_estimate<F>(p: &ProjectionBasis, draws: usize, rng: SeededRng, stat: F) -> Result<McEstimate>
where
    F: Fn(&Configuration) -> f64 + Sync,
{
    if draws < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 draws, got {draws}")));
    }
    let streams = MC_STREAMS.min(draws as u64);
    let sums: Vec<(f64, f64)> = (0..streams)
        .into_par_iter()
        .map(|k| {
            let share = draws / streams as usize + usize::from((k as usize) < draws % streams as usize);
            let mut gen = rng.substream(k).generator();
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..share {
                let v = stat(&sample_projection_dpp(p, &mut gen));
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = draws as f64;
    let mean = s / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McEstimate { mean, std_error: (var / n).sqrt(), draws })
}

fn check_draws(draws: usize) -> Result<()> {
    if draws < 100 {
        return Err(Error::InvalidParameter(format!("Monte Carlo needs at least 100 draws, got {draws}")));
    }
    Ok(())
}

/// Monte Carlo estimate of `E Ψ_g = E Π_{x ∈ X} g(x)`.
pub fn mc_expect_mult_functional(p: &ProjectionBasis, g: &[f64], draws: usize, rng: SeededRng) -> Result<McEstimate> {
    check_draws(draws)?;
    if g.len() != p.quadrature().len() {
        return Err(Error::LengthMismatch { expected: p.quadrature().len(), got: g.len() });
    }
    if let Some(bad) = g.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Domain(format!("g must be finite and nonnegative, got {bad}")));
    }
    mc_estimate(p, draws, rng, |c| c.nodes.iter().map(|&i| g[i]).product())
}

/// Monte Carlo estimate of `E Π_j z_j^{#B_j}` over disjoint windows `B_j`.
pub fn mc_counting_moments(
    p: &ProjectionBasis,
    masks: &[NodeMask],
    z: &[f64],
    draws: usize,
    rng: SeededRng,
) -> Result<McEstimate> {
    check_draws(draws)?;
    if masks.len() != z.len() {
        return Err(Error::LengthMismatch { expected: masks.len(), got: z.len() });
    }
    let n = p.quadrature().len();
    let mut union = NodeMask::empty(n);
    let mut factor = vec![1.0; n];
    for (mask, &zj) in masks.iter().zip(z) {
        mask.check_universe(n)?;
        if !mask.is_disjoint(&union) {
            return Err(Error::Mask("counting windows overlap".into()));
        }
        union = union.union(mask);
        for i in mask.indices() {
            factor[i] = zj;
        }
    }
    mc_estimate(p, draws, rng, |c| c.nodes.iter().map(|&i| factor[i]).product())
}
