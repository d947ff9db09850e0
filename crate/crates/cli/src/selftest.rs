//! Small invariant suites, one per library module, behind `--selftest`.

use std::f64::consts::PI;

use detmeasure::infdet::{cocycle_residual, moment_determinant_ratio, op_ensemble_as_infdet, relative_mass, window_projection, OpEnsembleSpec};
use detmeasure::kernels::{bessel_recurrence_residual, cd_kernel_functions, eval};
use detmeasure::operators::{det_xi, discretize, fredholm_det, gap_probability, gap_probability_lu, multiplicative_det, transform_bgk, Partition};
use detmeasure::pickrell::{bessel_chain_residual, default_scaling_grid, log_pushforward_constant, pushforward_constant, scaling_limit_error};
use detmeasure::sampler::{mc_expect_mult_functional, sample_many, SeededRng};
use detmeasure::specfun::{bessel_j, BesselOrder};
use detmeasure::{Grading, Interval, KernelSpec, NodeMask, Quadrature};
use serde_json::json;

use crate::args::Command;
use crate::output::{cell, CliResult, Report, Table};

struct Check {
    name: &'static str,
    value: f64,
    tolerance: f64,
}

impl Check {
    fn pass(&self) -> bool {
        self.value <= self.tolerance
    }
}

fn check(name: &'static str, value: f64, tolerance: f64) -> Check {
    Check { name, value, tolerance }
}

fn flag(ok: bool) -> f64 {
    if ok {
        0.0
    } else {
        1.0
    }
}

fn module_of(command: &Command) -> &'static str {
    match command {
        Command::KernelEval(_) | Command::KernelRecurrence(_) => "kernels",
        Command::Det(_) | Command::DetXi(_) | Command::Gap(_) | Command::Transform(_) => "operators",
        Command::Sample(_) | Command::McCheck(_) => "sampler",
        Command::MassRatio(_) | Command::OpEnsemble(_) | Command::PerturbationConvergence(_) => "infdet",
        Command::ScalingLimit(_) | Command::QrConvergence(_) | Command::PickrellConst(_) | Command::RadialMc(_) => {
            "pickrell"
        }
    }
}

/// Runs the suite and reports whether every check passed.
pub fn run(command: &Command) -> CliResult<(Report, bool)> {
    let module = module_of(command);
    let checks = match module {
        "kernels" => kernels()?,
        "operators" => operators()?,
        "sampler" => sampler()?,
        "infdet" => infdet()?,
        _ => pickrell()?,
    };
    let all = checks.iter().all(Check::pass);
    let mut table = Table::new(&["check", "value", "tolerance", "pass"]);
    let rows: Vec<_> = checks
        .iter()
        .map(|c| {
            table.push(vec![c.name.into(), cell(c.value), cell(c.tolerance), cell(c.pass())]);
            json!({ "name": c.name, "pass": c.pass(), "tolerance": c.tolerance, "value": c.value })
        })
        .collect();
    let results = json!({ "checks": rows, "module": module, "pass": all });
    let report = Report::new(command.name(), json!({ "selftest": true }), results, table);
    Ok((report, all))
}

fn kernels() -> CliResult<Vec<Check>> {
    let mut bessel: f64 = 0.0;
    let mut kernel: f64 = 0.0;
    let mut symmetry: f64 = 0.0;
    let xs = [0.05, 0.7, 3.0, 11.0, 40.0];
    for nu in [1.0, 2.5] {
        for &x in &xs {
            let j = |v: f64| bessel_j(BesselOrder::new(v).unwrap(), x);
            let r = j(nu + 1.0)? - 2.0 * nu / x * j(nu)? + j(nu - 1.0)?;
            bessel = bessel.max(r.abs() / j(nu)?.abs().max(1.0));
        }
    }
    for s in [0.0, 1.5] {
        let spec = KernelSpec::BesselJ { s };
        for &x in &xs {
            for &y in &xs {
                let k = eval(&spec, x, y)?;
                kernel = kernel.max(bessel_recurrence_residual(s, x, y)?.abs() / (1.0 + k.abs()));
                symmetry = symmetry.max((k - eval(&spec, y, x)?).abs());
            }
        }
    }
    Ok(vec![
        check("bessel_recurrence", bessel, 1e-10),
        check("kernel_recurrence", kernel, 1e-9),
        check("kernel_symmetry", symmetry, 0.0),
    ])
}

fn operators() -> CliResult<Vec<Check>> {
    let q = Quadrature::build(Interval::new(1e-4, 1.0)?, 8, 16, Grading::GeometricTowardLo)?;
    let op = discretize(&KernelSpec::BesselJ { s: 0.0 }, &q)?;
    let ev = op.eigenvalues()?;
    let spill = (-ev[0]).max(ev[ev.len() - 1] - 1.0).max(0.0);
    let xi = Partition::from_breaks(&q, &[0.5])?;
    let fd = fredholm_det(&op);
    let agreement = (det_xi(&op, &xi)? - fd).abs() / fd.abs();
    let keep = q.mask_between(0.0, 0.5);
    let paths = (gap_probability(&op, &keep)? - gap_probability_lu(&op, &keep)?).abs();

    let cq = Quadrature::build(Interval::new(-1.0, 1.0)?, 8, 16, Grading::GeometricTowardHi)?;
    let p = cd_kernel_functions(4, 0.5, Interval::new(-1.0, 1.0)?, &cq)?;
    let g = cq.sample(|u| 0.6 + 0.4 * u);
    let t = transform_bgk(&p.to_operator(), &g)?;
    let bt = t.b_tilde.matrix();
    let idempotency = (bt * bt - bt).amax();
    let basis_vs_matrix = (multiplicative_det(&p, &g)? - multiplicative_det(&p.to_operator(), &g)?).abs();
    Ok(vec![
        check("projection_spectrum_spill", spill, 1e-8),
        check("det_xi_agreement", agreement, 1e-10),
        check("gap_code_paths", paths, 1e-10),
        check("transform_idempotency", idempotency, 1e-8),
        check("functional_basis_vs_matrix", basis_vs_matrix, 1e-10),
    ])
}

fn sampler() -> CliResult<Vec<Check>> {
    let q = Quadrature::build(Interval::new(-1.0, 1.0)?, 8, 16, Grading::GeometricTowardHi)?;
    let p = cd_kernel_functions(4, 0.5, Interval::new(-1.0, 1.0)?, &q)?;
    let a = sample_many(&p, 500, SeededRng::new(3));
    let b = sample_many(&p, 500, SeededRng::new(3));
    let cardinality = a.iter().filter(|c| c.len() != p.rank()).count() as f64;
    let g = q.sample(|u| 0.5 + 0.5 * u * u);
    let est = mc_expect_mult_functional(&p, &g, 4000, SeededRng::new(11))?;
    let z = est.z_score(multiplicative_det(&p, &g)?);
    Ok(vec![
        check("bitwise_determinism", flag(a == b), 0.0),
        check("cardinality_mismatches", cardinality, 0.0),
        check("functional_z_score", z, 4.0),
    ])
}

fn infdet() -> CliResult<Vec<Check>> {
    let bs = [0.0, 0.3, 0.6, 0.9];
    let q = Quadrature::build_with_breaks(Interval::new(-1.0, 1.0)?, 10, 24, Grading::GeometricTowardHi, &bs)?;
    let ens = OpEnsembleSpec { n: 4, s: -1.5, b1: bs[0] };
    let spec = op_ensemble_as_infdet(&ens, &q)?;
    let chain: Vec<NodeMask> = bs.iter().map(|&b| q.mask_between(bs[0], b)).collect();
    let cocycle = cocycle_residual(&spec, &chain)?;
    let m = relative_mass(&spec, &chain[1], &chain[3])?;
    let oracle = moment_determinant_ratio(&ens, bs[1], bs[3])?;
    let w = window_projection(&spec, &chain[2])?;
    let (dim_v, _) = ens.split()?;
    Ok(vec![
        check("cocycle", cocycle, 1e-8),
        check("moment_oracle", (m - oracle).abs() / oracle, 1e-6),
        check("window_rank_defect", (w.rank() as f64 - ens.n as f64).abs(), 0.0),
        check("perturbation_dimension", (w.n_v as f64 - dim_v as f64).abs(), 0.0),
    ])
}

fn pickrell() -> CliResult<Vec<Check>> {
    let mut analytic: f64 = 0.0;
    for s in [0.0, 0.5, 2.0] {
        analytic = analytic.max((pushforward_constant(1, s)? - PI / (1.0 + s)).abs() / (PI / (1.0 + s)));
    }
    let finite = (4..=50).all(|n| log_pushforward_constant(n, -3.5).is_ok_and(f64::is_finite));
    let mut chain: f64 = 0.0;
    for (x, y) in [(0.3, 2.0), (5.0, 7.5), (1.0, 1.0)] {
        chain = chain.max(bessel_chain_residual(-1.5, 1, x, y)?.abs());
    }
    let grid = default_scaling_grid(4);
    let coarse = scaling_limit_error(25, 0.0, &grid)?;
    let fine = scaling_limit_error(100, 0.0, &grid)?;
    Ok(vec![
        check("n1_analytic", analytic, 1e-10),
        check("log_constant_nonfinite", flag(finite), 0.0),
        check("bessel_chain", chain, 1e-8),
        check("scaling_not_decreasing", flag(fine < coarse), 0.0),
    ])
}
