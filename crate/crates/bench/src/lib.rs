//! Shared fixtures for the benchmarks.

use detmeasure::kernels::cd_kernel_functions;
use detmeasure::{Grading, Interval, ProjectionBasis, Quadrature};

/// Graded rule on the Bessel fixture interval `[1e-4, 4]`.
pub fn bessel_rule(nodes_per_panel: usize) -> Quadrature {
    Quadrature::build(Interval::new(1e-4, 4.0).unwrap(), 8, nodes_per_panel, Grading::GeometricTowardLo).unwrap()
}

/// Rank-`n` Christoffel-Darboux projection for the weight `(1-u)^{1/2}`.
pub fn cd_projection(n: usize) -> ProjectionBasis {
    let full = Interval::new(-1.0, 1.0).unwrap();
    let q = Quadrature::build(full, 12, 16, Grading::GeometricTowardHi).unwrap();
    cd_kernel_functions(n, 0.5, full, &q).unwrap()
}
