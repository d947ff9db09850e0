use std::f64::consts::PI;

use detmeasure::infdet::{
    cocycle_residual, moment_determinant_ratio, op_ensemble_as_infdet, perturbation_convergence, relative_mass,
    sample_infdet, window_projection, ConvergencePoint, OpEnsembleSpec,
};
use detmeasure::kernels::{bessel_recurrence_residual, cd_kernel_functions, eval};
use detmeasure::operators::{
    det_xi, discretize, fredholm_det, gap_probability, gap_probability_lu, max_principal_angle, multiplicative_det,
    project_span, transform_bgk, DiscretizedOperator, Partition, ProjectionBasis,
};
use detmeasure::pickrell::{
    asymptotic_diagnostics, default_scaling_grid, log_pushforward_constant, pushforward_constant, qr_convergence,
    sample_radial, scaling_limit_error, top_point_ks_trend, BesselGrid,
};
use detmeasure::sampler::{mc_estimate, mc_expect_mult_functional, sample_many, McEstimate, SeededRng};
use detmeasure::{Grading, Interval, KernelSpec, NodeMask, Quadrature};
use serde_json::{json, Value};

use crate::args::*;
use crate::output::{cell, opt_cell, CliResult, Failure, Report, Table};

/// Thresholds `t` of `λ_max / n²` at which the exact top-point laws are compared.
const TOP_POINT_THRESHOLDS: [f64; 6] = [0.05, 0.1, 0.2, 0.5, 1.0, 2.0];

pub fn run(command: &Command) -> CliResult<Report> {
    let name = command.name();
    match command {
        Command::KernelEval(a) => kernel_eval(name, a),
        Command::KernelRecurrence(a) => kernel_recurrence(name, a),
        Command::Det(a) => det(name, a),
        Command::DetXi(a) => det_xi_cmd(name, a),
        Command::Gap(a) => gap(name, a),
        Command::Transform(a) => transform(name, a),
        Command::Sample(a) => sample(name, a),
        Command::McCheck(a) => mc_check(name, a),
        Command::MassRatio(a) => mass_ratio(name, a),
        Command::OpEnsemble(a) => op_ensemble(name, a),
        Command::ScalingLimit(a) => scaling_limit(name, a),
        Command::PerturbationConvergence(a) => perturbation(name, a),
        Command::QrConvergence(a) => qr(name, a),
        Command::PickrellConst(a) => pickrell_const(name, a),
        Command::RadialMc(a) => radial_mc(name, a),
    }
}

fn interval(v: &[f64], what: &str) -> CliResult<Interval> {
    match v {
        [lo, hi] => Ok(Interval::new(*lo, *hi)?),
        _ => Err(Failure::invalid(format!("{what} needs exactly two values lo,hi, got {}", v.len()))),
    }
}

fn seed(s: Option<u64>) -> CliResult<u64> {
    s.ok_or_else(|| Failure::invalid("--seed is required for sampling"))
}

fn positive(v: usize, what: &str) -> CliResult<usize> {
    if v == 0 {
        Err(Failure::invalid(format!("{what} must be positive")))
    } else {
        Ok(v)
    }
}

fn increasing(v: &[f64], what: &str) -> CliResult<()> {
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Failure::invalid(format!("{what} must be a nonempty strictly increasing list")));
    }
    Ok(())
}

fn grading(g: GradingArg) -> Grading {
    match g {
        GradingArg::Uniform => Grading::Uniform,
        GradingArg::TowardLo => Grading::GeometricTowardLo,
        GradingArg::TowardHi => Grading::GeometricTowardHi,
    }
}

fn kernel_spec(k: &KernelArgs, sub: Interval) -> KernelSpec {
    match k.kernel {
        KernelFamily::BesselJ => KernelSpec::BesselJ { s: k.s },
        KernelFamily::ModifiedBesselK => KernelSpec::ModifiedBesselK { s: k.s },
        KernelFamily::PickrellRadial => KernelSpec::PickrellRadial { n: k.n, s: k.s },
        KernelFamily::CdJacobi => KernelSpec::ChristoffelDarbouxJacobi { n: k.n, s: k.s, sub },
    }
}

fn rule(r: &RuleArgs, nodes_per_panel: usize) -> CliResult<Quadrature> {
    let iv = interval(&r.interval, "--interval")?;
    Ok(Quadrature::build(iv, r.panels, nodes_per_panel, grading(r.grading))?)
}

/// `λK` discretized on the rule with `nodes_per_panel` nodes per panel.
fn scaled_operator(k: &KernelArgs, r: &RuleArgs, lambda: f64, nodes_per_panel: usize) -> CliResult<DiscretizedOperator> {
    let q = rule(r, nodes_per_panel)?;
    let spec = kernel_spec(k, q.interval());
    let mut m = discretize(&spec, &q)?.into_matrix();
    m *= lambda;
    Ok(DiscretizedOperator::new(q, m)?)
}

fn cd_projection(cd: &CdArgs) -> CliResult<ProjectionBasis> {
    let sub = interval(&cd.sub, "--sub")?;
    let q = Quadrature::build(sub, cd.panels, cd.nodes_per_panel, Grading::GeometricTowardHi)?;
    Ok(cd_kernel_functions(cd.n, cd.s, sub, &q)?)
}

/// `a + b u²` sampled on the rule.
fn quadratic(q: &Quadrature, ab: &[f64], what: &str) -> CliResult<Vec<f64>> {
    match ab {
        [a, b] => Ok(q.sample(|u| a + b * u * u)),
        _ => Err(Failure::invalid(format!("{what} needs exactly two coefficients a,b"))),
    }
}

fn estimate_json(e: &McEstimate, exact: f64) -> Value {
    json!({ "draws": e.draws, "exact": exact, "mean": e.mean, "std_error": e.std_error, "z_score": e.z_score(exact) })
}

fn kernel_eval(name: &str, a: &KernelEvalArgs) -> CliResult<Report> {
    if a.x.is_empty() || a.y.is_empty() {
        return Err(Failure::invalid("--x and --y need at least one point each"));
    }
    let spec = kernel_spec(&a.kernel, interval(&a.sub, "--sub")?);
    let kernel = spec.prepare()?;
    let mut table = Table::new(&["x", "y", "value"]);
    let mut values = Vec::with_capacity(a.x.len());
    for &x in &a.x {
        let mut row = Vec::with_capacity(a.y.len());
        for &y in &a.y {
            let v = kernel.eval(x, y)?;
            table.push(vec![cell(x), cell(y), cell(v)]);
            row.push(v);
        }
        values.push(row);
    }
    Ok(Report::new(name, a, json!({ "kernel": spec, "values": values }), table))
}

fn recurrence_grid(spec: &str) -> CliResult<Vec<f64>> {
    let (lo, hi, k) = if spec == "default" {
        (0.01, 100.0, 20)
    } else {
        let parts: Vec<&str> = spec.split(',').collect();
        let parsed = match parts.as_slice() {
            [lo, hi, k] => lo.parse::<f64>().ok().zip(hi.parse::<f64>().ok()).zip(k.parse::<usize>().ok()),
            _ => None,
        };
        match parsed {
            Some(((lo, hi), k)) if lo > 0.0 && hi > lo && k >= 2 => (lo, hi, k),
            _ => return Err(Failure::invalid(format!("--grid must be `default` or lo,hi,k with 0 < lo < hi, k >= 2; got {spec}"))),
        }
    };
    Ok((0..k).map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64)).collect())
}

fn kernel_recurrence(name: &str, a: &KernelRecurrenceArgs) -> CliResult<Report> {
    if a.s.is_empty() {
        return Err(Failure::invalid("--s needs at least one exponent"));
    }
    let grid = recurrence_grid(&a.grid)?;
    let mut table = Table::new(&["s", "max_residual"]);
    let mut per_s = Vec::new();
    let mut worst: f64 = 0.0;
    for &s in &a.s {
        let spec = KernelSpec::BesselJ { s };
        let mut m: f64 = 0.0;
        for &x in &grid {
            for &y in &grid {
                let k = eval(&spec, x, y)?;
                m = m.max(bessel_recurrence_residual(s, x, y)?.abs() / (1.0 + k.abs()));
            }
        }
        worst = worst.max(m);
        table.push(vec![cell(s), cell(m)]);
        per_s.push(json!({ "max_residual": m, "s": s }));
    }
    let results = json!({ "grid_points": grid.len(), "max_residual": worst, "per_s": per_s });
    Ok(Report::new(name, a, results, table).residual("recurrence", worst))
}

fn det(name: &str, a: &DetArgs) -> CliResult<Report> {
    positive(a.rule.nodes_per_panel, "--nodes-per-panel")?;
    let op = scaled_operator(&a.kernel, &a.rule, a.lambda, a.rule.nodes_per_panel)?;
    let d = fredholm_det(&op);
    let refined = fredholm_det(&scaled_operator(&a.kernel, &a.rule, a.lambda, 2 * a.rule.nodes_per_panel)?);
    let change = (d - refined).abs() / refined.abs().max(f64::MIN_POSITIVE);
    let mut table = Table::new(&["nodes", "det"]);
    table.push(vec![cell(op.len()), cell(d)]);
    table.push(vec![cell(2 * op.len()), cell(refined)]);
    let results = json!({ "det": d, "det_refined": refined, "nodes": op.len() });
    Ok(Report::new(name, a, results, table).residual("resolution", change))
}

fn det_xi_cmd(name: &str, a: &DetXiArgs) -> CliResult<Report> {
    increasing(&a.breaks, "--breaks")?;
    let op = scaled_operator(&a.det.kernel, &a.det.rule, a.det.lambda, a.det.rule.nodes_per_panel)?;
    let xi = Partition::from_breaks(op.quadrature(), &a.breaks)?;
    let dx = det_xi(&op, &xi)?;
    let fd = fredholm_det(&op);
    let agreement = (dx - fd).abs() / fd.abs().max(f64::MIN_POSITIVE);
    let mut table = Table::new(&["cells", "det_xi", "fredholm"]);
    table.push(vec![cell(xi.cells().len()), cell(dx), cell(fd)]);
    let results = json!({ "cells": xi.cells().len(), "det_xi": dx, "fredholm": fd, "nodes": op.len() });
    Ok(Report::new(name, a, results, table).residual("agreement", agreement))
}

fn gap(name: &str, a: &GapArgs) -> CliResult<Report> {
    let w = interval(&a.window, "--window")?;
    let op = scaled_operator(&a.kernel, &a.rule, 1.0, a.rule.nodes_per_panel)?;
    let window = op.quadrature().mask_between(w.lo(), w.hi());
    if window.is_empty() {
        return Err(Failure::invalid("the window contains no quadrature nodes"));
    }
    let keep = window.complement();
    let p = gap_probability(&op, &keep)?;
    let p_lu = gap_probability_lu(&op, &keep)?;
    let mut table = Table::new(&["window_lo", "window_hi", "gap", "gap_lu"]);
    table.push(vec![cell(w.lo()), cell(w.hi()), cell(p), cell(p_lu)]);
    let results = json!({ "gap": p, "gap_lu": p_lu, "window_nodes": window.count() });
    Ok(Report::new(name, a, results, table).residual("code_paths", (p - p_lu).abs()))
}

/// Largest principal angle between the range of `B̃(g, K)` and `√g · range K`.
fn range_angle(basis: &ProjectionBasis, b_tilde: &DiscretizedOperator, g: &[f64]) -> CliResult<f64> {
    let q = basis.quadrature();
    let raw: Vec<Vec<f64>> = (0..basis.rank())
        .map(|c| basis.function(c).iter().zip(g).map(|(f, gv)| f * gv.sqrt()).collect())
        .collect();
    let target = project_span(q, &raw)?.basis;
    let e = b_tilde.matrix().clone().symmetric_eigen();
    let keep: Vec<usize> = (0..q.len()).filter(|&i| e.eigenvalues[i] > 0.5).collect();
    if keep.len() != basis.rank() {
        return Ok(f64::INFINITY);
    }
    let range = ProjectionBasis::from_scaled_columns(q.clone(), e.eigenvectors.select_columns(&keep))?;
    Ok(max_principal_angle(&range, &target)?)
}

fn transform(name: &str, a: &TransformArgs) -> CliResult<Report> {
    let p = cd_projection(&a.cd)?;
    let q = p.quadrature().clone();
    let g = quadratic(&q, &a.g, "--g")?;
    let f = quadratic(&q, &a.f, "--f")?;
    let k = p.to_operator();
    let t = transform_bgk(&k, &g)?;
    let bt = t.b_tilde.matrix();
    let idempotency = (bt * bt - bt).amax();
    let angle = range_angle(&p, &t.b_tilde, &g)?;
    let fg: Vec<f64> = f.iter().zip(&g).map(|(x, y)| x * y).collect();
    let lhs = multiplicative_det(&t.b, &f)? * multiplicative_det(&k, &g)?;
    let rhs = multiplicative_det(&k, &fg)?;
    let chain = (lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE);
    let mut table = Table::new(&["norm_const", "condition", "trace_b_tilde", "idempotency", "range_angle", "chain"]);
    table.push(vec![cell(t.norm_const), cell(t.condition), cell(t.b_tilde.trace()), cell(idempotency), cell(angle), cell(chain)]);
    let results = json!({
        "condition": t.condition,
        "multiplicative_det": multiplicative_det(&k, &g)?,
        "norm_const": t.norm_const,
        "rank": p.rank(),
        "trace_b_tilde": t.b_tilde.trace(),
    });
    Ok(Report::new(name, a, results, table)
        .residual("chain", chain)
        .residual("idempotency", idempotency)
        .residual("range_angle", angle))
}

fn sample(name: &str, a: &SampleArgs) -> CliResult<Report> {
    let seed = seed(a.seed)?;
    positive(a.draws, "--draws")?;
    let p = cd_projection(&a.cd)?;
    let configs = sample_many(&p, a.draws, SeededRng::new(seed));
    let mut table = Table::new(&["draw", "index", "node", "point"]);
    for (d, c) in configs.iter().enumerate() {
        for (i, (&node, &x)) in c.nodes.iter().zip(&c.points).enumerate() {
            table.push(vec![cell(d), cell(i), cell(node), cell(x)]);
        }
    }
    let wrong = configs.iter().filter(|c| c.len() != p.rank()).count();
    let points: Vec<&Vec<f64>> = configs.iter().map(|c| &c.points).collect();
    let results = json!({ "configurations": points, "rank": p.rank() });
    Ok(Report::new(name, a, results, table).residual("cardinality_mismatches", wrong as f64))
}

fn mc_check(name: &str, a: &McCheckArgs) -> CliResult<Report> {
    let seed = seed(a.seed)?;
    positive(a.draws, "--draws")?;
    let p = cd_projection(&a.cd)?;
    let q = p.quadrature().clone();
    let g = quadratic(&q, &a.g, "--g")?;
    let w = interval(&a.window, "--window")?;
    let window = q.mask_between(w.lo(), w.hi());

    let rng = SeededRng::new(seed);
    let functional = mc_expect_mult_functional(&p, &g, a.draws, rng.substream(0))?;
    let functional_exact = multiplicative_det(&p, &g)?;
    let gap = mc_estimate(&p, a.draws, rng.substream(1), |c| f64::from(u8::from(c.count_in(&window) == 0)))?;
    let gap_exact = gap_probability(&p, &window.complement())?;

    let mut table = Table::new(&["identity", "mean", "std_error", "exact", "z_score"]);
    for (label, e, exact) in [("functional", &functional, functional_exact), ("gap", &gap, gap_exact)] {
        table.push(vec![label.into(), cell(e.mean), cell(e.std_error), cell(exact), cell(e.z_score(exact))]);
    }
    let results = json!({
        "functional": estimate_json(&functional, functional_exact),
        "gap": estimate_json(&gap, gap_exact),
    });
    Ok(Report::new(name, a, results, table)
        .residual("functional_z", functional.z_score(functional_exact))
        .residual("gap_z", gap.z_score(gap_exact)))
}

/// Rule on `[-1, 1]` with panel boundaries at the interior `breaks`.
fn ensemble_rule(r: &EnsembleRuleArgs, breaks: &[f64]) -> CliResult<Quadrature> {
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&b| b > -1.0 && b < 1.0).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    Ok(Quadrature::build_with_breaks(
        Interval::new(-1.0, 1.0)?,
        r.panels,
        r.nodes_per_panel,
        Grading::GeometricTowardHi,
        &inner,
    )?)
}

/// Parses `s=<exponent>,N=<particles>` in either order.
fn parse_ensemble(text: &str) -> CliResult<(f64, usize)> {
    let (mut s, mut n) = (None, None);
    for part in text.split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Failure::invalid(format!("--ensemble entries look like key=value, got `{part}`")))?;
        match key.trim() {
            "s" => s = value.trim().parse::<f64>().ok(),
            "N" | "n" => n = value.trim().parse::<usize>().ok(),
            other => return Err(Failure::invalid(format!("unknown --ensemble key `{other}`"))),
        }
    }
    match (s, n) {
        (Some(s), Some(n)) => Ok((s, n)),
        _ => Err(Failure::invalid(format!("--ensemble needs numeric s and N, got `{text}`"))),
    }
}

fn mass_ratio(name: &str, a: &MassRatioArgs) -> CliResult<Report> {
    let (s, n) = parse_ensemble(&a.ensemble)?;
    increasing(&a.chain, "--chain")?;
    if a.chain.len() < 2 {
        return Err(Failure::invalid("--chain needs at least two cut points"));
    }
    let ens = OpEnsembleSpec { n, s, b1: a.chain[0] };
    ens.validate()?;
    if a.chain[a.chain.len() - 1] >= 1.0 {
        return Err(Failure::invalid("cut points must lie below 1"));
    }
    let q = ensemble_rule(&a.rule, &a.chain)?;
    let spec = op_ensemble_as_infdet(&ens, &q)?;
    let masks: Vec<NodeMask> = a.chain.iter().map(|&b| q.mask_between(a.chain[0], b)).collect();
    let mut table = Table::new(&["b_from", "b_to", "relative_mass", "moment_oracle"]);
    let mut ratios = Vec::new();
    let mut oracle_err: f64 = 0.0;
    for i in 0..a.chain.len() - 1 {
        let m = relative_mass(&spec, &masks[i], &masks[i + 1])?;
        let oracle = moment_determinant_ratio(&ens, a.chain[i], a.chain[i + 1])?;
        oracle_err = oracle_err.max((m - oracle).abs() / oracle.abs());
        table.push(vec![cell(a.chain[i]), cell(a.chain[i + 1]), cell(m), cell(oracle)]);
        ratios.push(json!({ "b_from": a.chain[i], "b_to": a.chain[i + 1], "moment_oracle": oracle, "relative_mass": m }));
    }
    let cocycle = cocycle_residual(&spec, &masks)?;
    let results = json!({ "n": n, "ratios": ratios, "s": s });
    Ok(Report::new(name, a, results, table)
        .residual("cocycle", cocycle)
        .residual("moment_oracle", oracle_err))
}

fn op_ensemble(name: &str, a: &OpEnsembleArgs) -> CliResult<Report> {
    increasing(&a.windows, "--windows")?;
    let ens = OpEnsembleSpec { n: a.n, s: a.s, b1: a.b1 };
    ens.validate()?;
    if a.windows[0] <= a.b1 || a.windows[a.windows.len() - 1] > 1.0 {
        return Err(Failure::invalid("windows must end in (b1, 1]"));
    }
    let seed = if a.draws > 0 { Some(seed(a.seed)?) } else { None };
    let mut breaks = a.windows.clone();
    breaks.push(a.b1);
    let q = ensemble_rule(&a.rule, &breaks)?;
    let spec = op_ensemble_as_infdet(&ens, &q)?;
    let (dim_v, dim_l) = ens.split()?;
    let mut table = Table::new(&["window_hi", "rank", "rank_l", "n_v", "angle", "expected_count", "mean_count"]);
    let mut rows = Vec::new();
    let mut rank_defect: f64 = 0.0;
    for (k, &hi) in a.windows.iter().enumerate() {
        let b = q.mask_between(a.b1, hi);
        let w = window_projection(&spec, &b)?;
        rank_defect = rank_defect.max((w.rank() as f64 - a.n as f64).abs());
        let intensity = w.projection.node_intensity();
        let expected: f64 = b.indices().iter().map(|&i| intensity[i]).sum();
        let mean_count = seed.map(|seed| {
            let mut gen = SeededRng::with_stream(seed, k as u64).generator();
            (0..a.draws).map(|_| sample_infdet(&w, &mut gen).count_in(&b) as f64).sum::<f64>() / a.draws as f64
        });
        table.push(vec![
            cell(hi),
            cell(w.rank()),
            cell(w.rank_l),
            cell(w.n_v),
            opt_cell(w.angle),
            cell(expected),
            opt_cell(mean_count),
        ]);
        rows.push(json!({
            "angle": w.angle,
            "discarded_trace": w.discarded_trace,
            "expected_count": expected,
            "mean_count": mean_count,
            "rank": w.rank(),
            "rank_l": w.rank_l,
            "n_v": w.n_v,
            "window_hi": hi,
        }));
    }
    let results = json!({ "dim_l": dim_l, "dim_v": dim_v, "windows": rows });
    Ok(Report::new(name, a, results, table).residual("rank_defect", rank_defect))
}

fn scaling_limit(name: &str, a: &ScalingLimitArgs) -> CliResult<Report> {
    if a.n.is_empty() || a.n.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Failure::invalid("--n must be a nonempty strictly increasing list"));
    }
    positive(a.grid, "--grid")?;
    let grid = default_scaling_grid(a.grid);
    let mut table = Table::new(&["n", "max_error"]);
    let mut errors = Vec::new();
    for &n in &a.n {
        let e = scaling_limit_error(n, a.s, &grid)?;
        table.push(vec![cell(n), cell(e)]);
        errors.push(json!({ "max_error": e, "n": n }));
    }
    let decreasing = errors.windows(2).all(|w| w[1]["max_error"].as_f64() < w[0]["max_error"].as_f64());
    let results = json!({ "decreasing": decreasing, "errors": errors, "grid_points": grid.len() });
    Ok(Report::new(name, a, results, table))
}

fn convergence_rows(points: &[ConvergencePoint], labels: &[f64], control: bool, table: &mut Table) -> Vec<Value> {
    points
        .iter()
        .zip(labels)
        .map(|(p, &r)| {
            table.push(vec![
                cell(r),
                cell(control),
                cell(p.distance),
                opt_cell(p.angle),
                cell(p.rank),
                cell(p.discarded_trace),
            ]);
            json!({
                "angle": p.angle,
                "discarded_trace": p.discarded_trace,
                "distance": p.distance,
                "rank": p.rank,
                "window": r,
            })
        })
        .collect()
}

fn ratio_last_first(points: &[ConvergencePoint]) -> f64 {
    points[points.len() - 1].distance / points[0].distance
}

fn perturbation(name: &str, a: &PerturbationConvergenceArgs) -> CliResult<Report> {
    increasing(&a.windows, "--windows")?;
    let probe = interval(&a.probe, "--probe")?;
    let ens = OpEnsembleSpec { n: a.n, s: a.s, b1: a.b1 };
    ens.validate()?;
    if a.windows[0] <= a.b1 || a.windows[a.windows.len() - 1] > 1.0 {
        return Err(Failure::invalid("windows must end in (b1, 1]"));
    }
    if probe.hi() > a.b1 {
        return Err(Failure::invalid("the probe must lie inside E0 = [-1, b1]"));
    }
    let mut breaks = a.windows.clone();
    breaks.extend([a.b1, probe.lo(), probe.hi()]);
    let q = ensemble_rule(&a.rule, &breaks)?;
    let spec = op_ensemble_as_infdet(&ens, &q)?;
    let windows: Vec<NodeMask> = a.windows.iter().map(|&w| q.mask_between(a.b1, w)).collect();
    let probe_mask = q.mask_between(probe.lo(), probe.hi());
    let header = ["window", "control", "distance", "angle", "rank", "discarded_trace"];
    let mut table = Table::new(&header);
    let points = perturbation_convergence(&spec, &windows, &probe_mask)?;
    let rows = convergence_rows(&points, &a.windows, false, &mut table);
    let mut report_rows = json!({ "perturbed": rows });
    let mut control_ratio = None;
    if a.control {
        let control = perturbation_convergence(&spec.without_perturbation(), &windows, &probe_mask)?;
        control_ratio = Some(ratio_last_first(&control));
        report_rows["control"] = Value::Array(convergence_rows(&control, &a.windows, true, &mut table));
    }
    let mut report = Report::new(name, a, report_rows, table).residual("final_over_first", ratio_last_first(&points));
    if let Some(r) = control_ratio {
        report = report.residual("control_final_over_first", r);
    }
    Ok(report)
}

fn qr(name: &str, a: &QrConvergenceArgs) -> CliResult<Report> {
    increasing(&a.radii, "--radii")?;
    let probe = interval(&a.probe, "--probe")?;
    positive(a.nodes_per_panel, "--nodes-per-panel")?;
    positive(a.panels_per_decade, "--panels-per-decade")?;
    if !(a.max_phase > 0.0) {
        return Err(Failure::invalid("--max-phase must be positive"));
    }
    let grid = BesselGrid {
        lo: a.grid_lo,
        panels_per_decade: a.panels_per_decade,
        max_phase: a.max_phase,
        nodes_per_panel: a.nodes_per_panel,
        ..BesselGrid::default()
    };
    let points = qr_convergence(a.s, &a.radii, probe, &grid, !a.unperturbed)?;
    let mut table = Table::new(&["window", "control", "distance", "angle", "rank", "discarded_trace"]);
    let rows = convergence_rows(&points, &a.radii, a.unperturbed, &mut table);
    let distances: Vec<f64> = points.iter().map(|p| p.distance).collect();
    let decreasing = distances.windows(2).all(|w| w[1] < w[0]);
    let results = json!({ "decreasing": decreasing, "points": rows });
    Ok(Report::new(name, a, results, table).residual("final_over_first", ratio_last_first(&points)))
}

fn pickrell_const(name: &str, a: &PickrellConstArgs) -> CliResult<Report> {
    if a.n.is_empty() {
        return Err(Failure::invalid("--n needs at least one size"));
    }
    let mut table = Table::new(&["n", "log_constant", "constant"]);
    let mut rows = Vec::new();
    for &n in &a.n {
        let log_c = log_pushforward_constant(n, a.s)?;
        let c = log_c.exp();
        table.push(vec![cell(n), cell(log_c), cell(c)]);
        rows.push(json!({ "constant": c, "log_constant": log_c, "n": n }));
    }
    let mut report = Report::new(name, a, json!({ "constants": rows }), table);
    if a.s > -1.0 {
        let exact = PI / (1.0 + a.s);
        let err = (pushforward_constant(1, a.s)? - exact).abs() / exact;
        report = report.residual("n1_analytic", err);
    }
    Ok(report)
}

fn radial_mc(name: &str, a: &RadialMcArgs) -> CliResult<Report> {
    let seed = seed(a.seed)?;
    positive(a.draws, "--draws")?;
    positive(a.top, "--top")?;
    if a.n.is_empty() || a.n.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Failure::invalid("--n must be a nonempty strictly increasing list"));
    }
    let samples = a
        .n
        .iter()
        .enumerate()
        .map(|(i, &n)| sample_radial(n, a.s, a.draws, SeededRng::with_stream(seed, i as u64)))
        .collect::<detmeasure::Result<Vec<_>>>()?;
    let diag = asymptotic_diagnostics(&samples, a.top)?;
    let exact_ks = top_point_ks_trend(a.s, &a.n, &TOP_POINT_THRESHOLDS)?;
    let mut table = Table::new(&["n", "mean_gamma", "mean_top_1", "ks_to_next", "exact_ks_to_next"]);
    for (i, s) in diag.summaries.iter().enumerate() {
        table.push(vec![
            cell(s.n),
            cell(s.mean_gamma),
            opt_cell(s.mean_top.first().copied()),
            opt_cell(diag.ks_consecutive.get(i).copied()),
            opt_cell(exact_ks.get(i).copied()),
        ]);
    }
    let summaries: Vec<Value> = diag
        .summaries
        .iter()
        .map(|s| json!({ "mean_gamma": s.mean_gamma, "mean_top": s.mean_top, "n": s.n }))
        .collect();
    let results = json!({
        "exact_top_point_ks": exact_ks,
        "ks_consecutive": diag.ks_consecutive,
        "summaries": summaries,
        "thresholds": TOP_POINT_THRESHOLDS,
    });
    Ok(Report::new(name, a, results, table))
}
