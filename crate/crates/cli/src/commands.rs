//! One runner per command. Each runner reads its sections (so schema errors
//! surface before any computation), runs the pipeline and fills a report.

use std::sync::Arc;

use nalgebra::Vector3;
use ndarray::Array2;
use serde_json::{json, Value};
use wavescope_core::covector::{
    build_four_frame, build_i3_frame, build_three_frame, fit_laurent, i3_closed_form, interaction_sums, CovectorFrame,
    FrameKind, LaurentFit,
};
use wavescope_core::field::{self, Covector, SmoothField, SpacetimePoint};
use wavescope_core::gauge::{dn_discrepancy, apply_gauge, DiscrepancyOptions, GaugeFunction, GaugeOptions};
use wavescope_core::linearization::{assemble_multi_wave, fd_mixed_derivative, MultiSource, Target};
use wavescope_core::lorentz::{from_orthonormal_frame, trace_bicharacteristic, AxisBox, Crossing, StepControl};
use wavescope_core::recovery::{recover, verify_gauge_relations, verify_time_independence, RecoveryOptions, SyntheticOracle};
use wavescope_core::tolerances;
use wavescope_core::transport::{FourFrameSweep, SymbolContext};
use wavescope_core::wave::{
    dn_trace, solve_nonlinear, write_dn_csv, write_dump, write_field_csv, BoundarySource, Grid1d, MediumParams,
    PicardOptions, Profile, Wavefield, CONTRACTION_BOUND,
};
use wavescope_core::Error as CoreError;

use crate::config::{CommandKind, ConfigResult, ExperimentConfig, Node};
use crate::error::{CliError, ModuleContext};
use crate::report::{csv_table, num, Artifact, Assertion, RunReport};
use crate::svg::{Plot, Series};

/// Runs the pipeline selected by `config.command`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport, CliError> {
    match config.command {
        CommandKind::Simulate => simulate(config),
        CommandKind::Dn => dn(config),
        CommandKind::Linearize => linearize(config),
        CommandKind::GaugeCheck => gauge_check(config),
        CommandKind::Trace => trace(config),
        CommandKind::Frames => frames(config),
        CommandKind::Coeffs => coeffs(config),
        CommandKind::Recover => recover_command(config),
        CommandKind::TimeIndependence => time_independence(config),
    }
}

// ---------------------------------------------------------------- sections

static EMPTY: std::sync::LazyLock<Value> = std::sync::LazyLock::new(|| json!({}));

/// `tolerances` with the given keys, or an empty object.
fn tolerances_node<'a>(root: &Node<'a>, keys: &[&str]) -> ConfigResult<Node<'a>> {
    match root.get("tolerances") {
        Some(n) => {
            n.expect_keys(&[], keys)?;
            Ok(n)
        }
        None => Ok(Node::root(&EMPTY)),
    }
}

fn optional_section<'a>(root: &Node<'a>, key: &str, keys: &[&str]) -> ConfigResult<Node<'a>> {
    match root.get(key) {
        Some(n) => {
            n.expect_keys(&[], keys)?;
            Ok(n)
        }
        None => Ok(Node::root(&EMPTY)),
    }
}

const MAX_NODES: usize = 1 << 16;

fn parse_grid(node: &Node<'_>, refine: usize) -> ConfigResult<Grid1d> {
    node.expect_keys(&["nx", "t_end"], &["courant"])?;
    let nx = node.req("nx")?.usize_in(4, MAX_NODES)?;
    let t_end = node.req("t_end")?.positive()?;
    let courant = courant(node)?;
    Grid1d::with_courant(nx * refine, t_end, courant).map_err(|e| node.error(e.to_string()))
}

fn courant(node: &Node<'_>) -> ConfigResult<f64> {
    let c = node.opt_positive("courant", 0.5)?;
    if c > 1.0 {
        return Err(node.req("courant")?.error(format!("courant number {c} exceeds the stability limit 1")));
    }
    Ok(c)
}

fn parse_source(node: &Node<'_>) -> ConfigResult<BoundarySource> {
    node.expect_keys(&["amplitude", "width"], &["start", "side", "profile"])?;
    let amplitude = node.req("amplitude")?.f64()?;
    let width = node.req("width")?.positive()?;
    let start = node.opt_f64("start", 0.0)?;
    if start < 0.0 {
        return Err(node.req("start")?.error("start must be non-negative"));
    }
    let profile = match node.get("profile").map_or(Ok("bump"), |n| n.choice(&["bump", "sine-squared"]))? {
        "bump" => Profile::Bump { start, width },
        _ => Profile::SineSquared { start, width },
    };
    let side = node.get("side").map_or(Ok("left"), |n| n.choice(&["left", "right"]))?;
    let profiles = if side == "left" {
        [profile, Profile::Zero]
    } else {
        [Profile::Zero, profile]
    };
    Ok(BoundarySource { amplitude, profiles })
}

fn parse_picard(root: &Node<'_>, default: PicardOptions) -> ConfigResult<PicardOptions> {
    let node = optional_section(root, "picard", &["rtol", "max_iter", "small_data_bound"])?;
    let rtol = node.opt_f64("rtol", default.rtol)?;
    if rtol < 0.0 {
        return Err(node.req("rtol")?.error("rtol must be non-negative"));
    }
    Ok(PicardOptions {
        rtol,
        max_iter: node.opt_usize_in("max_iter", default.max_iter, 1, 10_000)?,
        small_data_bound: node.opt_positive("small_data_bound", default.small_data_bound)?,
    })
}

/// Interior points on an additive low-discrepancy sequence; the seed shifts
/// the starting index.
fn parse_points(node: &Node<'_>, seed: u64) -> ConfigResult<Vec<SpacetimePoint>> {
    node.expect_keys(&["count"], &["lo", "hi", "t"])?;
    let count = node.req("count")?.usize_in(1, 10_000)?;
    let lo = node.opt_f64("lo", 0.25)?;
    let hi = node.opt_f64("hi", 0.75)?;
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(node.error(format!("need 0 < lo < hi < 1, got lo = {lo}, hi = {hi}")));
    }
    let t = node.opt_f64("t", 1.0)?;
    Ok(sample_points(count, lo, hi, t, seed))
}

pub fn sample_points(count: usize, lo: f64, hi: f64, t: f64, seed: u64) -> Vec<SpacetimePoint> {
    // fractional parts of the plastic-number powers: well spread in three dimensions
    const G: [f64; 3] = [0.754_877_666_246_692_7, 0.569_840_290_998_053_2, 0.430_159_709_001_946_8];
    (1..=count as u64)
        .map(|k| {
            let k = (k + seed) as f64;
            SpacetimePoint::new(t, std::array::from_fn(|j| lo + (hi - lo) * (0.5 + k * G[j]).fract()))
        })
        .collect()
}

fn medium(config: &ExperimentConfig) -> Result<MediumParams, CliError> {
    let spec = config
        .medium
        .as_ref()
        .ok_or_else(|| CliError::Config(crate::config::ConfigError::at("/medium", "missing required field")))?;
    spec.build().module("medium")
}

fn core_err(module: &'static str, message: String) -> CliError {
    CliError::Module {
        module,
        source: CoreError::InvalidInput(message),
    }
}

fn to_bytes(f: impl FnOnce(&mut Vec<u8>) -> wavescope_core::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).module("wave_solver")?;
    Ok(buf)
}

// ---------------------------------------------------------- forward solves

struct WaveRun {
    medium: MediumParams,
    field: Wavefield,
    max_contraction: f64,
}

fn solve_from_config<'a>(config: &'a ExperimentConfig, tolerance_keys: &[&str]) -> Result<(WaveRun, Node<'a>), CliError> {
    let root = config.node();
    let grid = parse_grid(&root.req("grid")?, config.grid_refine)?;
    let source = parse_source(&root.req("source")?)?;
    let picard = parse_picard(&root, PicardOptions::default())?;
    let tol = tolerances_node(&root, tolerance_keys)?;
    let max_contraction = tol.opt_positive("max_contraction", CONTRACTION_BOUND)?;
    let medium = medium(config)?;
    let field = solve_nonlinear(&medium, &grid, source, None, picard).module("wave_solver")?;
    Ok((
        WaveRun {
            medium,
            field,
            max_contraction,
        },
        tol,
    ))
}

fn simulate(config: &ExperimentConfig) -> Result<RunReport, CliError> {
    let (run, tol) = solve_from_config(config, &["max_contraction", "max_residual"])?;
    let max_residual = tol.get("max_residual").map(|n| n.positive()).transpose()?;
    let field = &run.field;
    let g = field.grid;
    let trace = dn_trace(&run.medium, field).module("wave_solver")?;
    let mut report = RunReport::new(config);
    report.results = json!({
        "grid": g,
        "sampled_medium_hash": field.medium_hash,
        "sup_norm": field.sup_norm(),
        "picard": field.diagnostics,
        "dn_l2_norm": trace.l2_norm(),
    });
    report
        .assertions
        .push(Assertion::at_most("picard_max_ratio", field.diagnostics.max_ratio(), run.max_contraction));
    if let Some(limit) = max_residual {
        report.assertions.push(Assertion::at_most("residual", field.diagnostics.residual, limit));
    }
    let mut plot = Plot::new("field snapshots", "x", "p");
    for q in 1..=4 {
        let n = q * g.nt / 4;
        let pts = (0..=g.nx).map(|i| (g.x(i), field.at(n, i))).collect();
        plot = plot.with(Series::new(format!("t={}", num(g.t(n))), pts));
    }
    report.artifacts = vec![
        Artifact::new("field.csv", to_bytes(|b| write_field_csv(b, field))?),
        Artifact::new("field.bin", to_bytes(|b| write_dump(b, field))?),
        Artifact::new("field.svg", plot.render()),
    ];
    Ok(report)
}

fn dn(config: &ExperimentConfig) -> Result<RunReport, CliError> {
    let (run, _) = solve_from_config(config, &["max_contraction"])?;
    let field = &run.field;
    let trace = dn_trace(&run.medium, field).module("wave_solver")?;
    let mut report = RunReport::new(config);
    report.results = json!({
        "grid": field.grid,
        "time_samples": field.grid.nt + 1,
        "boundary_nodes": 2,
        "l2_norm": trace.l2_norm(),
        "picard": field.diagnostics,
    });
    report
        .assertions
        .push(Assertion::at_most("picard_max_ratio", field.diagnostics.max_ratio(), run.max_contraction));
    let times = trace.times();
    let series = |side: usize, name: &str| {
        Series::new(name, times.iter().enumerate().map(|(n, &t)| (t, trace.values[(n, side)])).collect())
    };
    let plot = Plot::new("DN trace", "t", "value").with(series(0, "x=0")).with(series(1, "x=1"));
    report.artifacts = vec![
        Artifact::new("dn.csv", to_bytes(|b| write_dn_csv(b, &trace))?),
        Artifact::new("dn.svg", plot.render()),
    ];
    Ok(report)
}

/// Relative discrete `L²` distance `‖a − b‖ / ‖b‖`.
fn rel_l2(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let d = a - b;
    (d.iter().map(|x| x * x).sum::<f64>() / b.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

fn linearize(config: &ExperimentConfig) -> Result<RunReport, CliError> {
    let root = config.node();
    let grid = parse_grid(&root.req("grid")?, config.grid_refine)?;
    let sources_node = root.req("sources")?;
    let items = sources_node.items()?;
    if !(2..=4).contains(&items.len()) {
        return Err(sources_node.error(format!("expected 2 to 4 sources, got {}", items.len())).into());
    }
    let sources: Vec<BoundarySource> = items.iter().map(parse_source).collect::<ConfigResult<_>>()?;
    let epsilon = root.get("epsilon").map_or(Ok(1e-3), |n| n.positive())?;
    // iterate to the round-off plateau: the difference quotients divide by ε^J
    let picard = parse_picard(&root, PicardOptions { rtol: 0.0, ..Default::default() })?;
    let tol = tolerances_node(&root, &["max_relative", "ratio_min", "ratio_max"])?;
    let max_relative = tol.opt_positive("max_relative", 1e-3)?;
    let (ratio_min, ratio_max) = (tol.opt_positive("ratio_min", 3.0)?, tol.opt_positive("ratio_max", 5.0)?);
    let medium = medium(config)?;
    let j = sources.len();
    let mw = assemble_multi_wave(&medium, &grid, &sources).module("linearization")?;
    let want = match j {
        2 => Some(mw.terms.a2(0, 1) * 2.0),
        3 => mw.u3.clone(),
        _ => mw.u4.clone(),
    }
    .ok_or_else(|| core_err("linearization", format!("cascade produced no U_{j}; add beta_{j} to the medium")))?;
    let ms = MultiSource::new(sources, epsilon).module("linearization")?;
    let fd = fd_mixed_derivative(&medium, &grid, &ms, Target::Field, picard).module("linearization")?;
    let fd_half = fd_mixed_derivative(&medium, &grid, &ms.halved(), Target::Field, picard).module("linearization")?;
    let (e1, e2) = (rel_l2(fd.values(), &want), rel_l2(fd_half.values(), &want));
    let ratio = e1 / e2;
    let mut report = RunReport::new(config);
    report.results = json!({
        "order": j,
        "grid": grid,
        "epsilon": epsilon,
        "relative_error": e1,
        "relative_error_half_epsilon": e2,
        "richardson_ratio": ratio,
    });
    report.assertions.push(Assertion::at_most("relative_error", e1, max_relative));
    report.assertions.push(Assertion::between("richardson_ratio", ratio, ratio_min, ratio_max));
    let fdv = fd.values();
    let rows = want.indexed_iter().map(|((n, i), &w)| vec![num(grid.t(n)), num(grid.x(i)), num(w), num(fdv[(n, i)])]);
    let csv = csv_table(&["t", "x", "cascade", "finite_difference"], rows)?;
    let peak = (0..=grid.nt)
        .max_by(|&a, &b| {
            let norm = |n: usize| want.row(n).iter().map(|v| v * v).sum::<f64>();
            norm(a).total_cmp(&norm(b))
        })
        .unwrap_or(0);
    let slice = |a: &Array2<f64>| (0..=grid.nx).map(|i| (grid.x(i), a[(peak, i)])).collect();
    let plot = Plot::new(format!("U_{j} at t={}", num(grid.t(peak))), "x", "mixed derivative")
        .with(Series::new("cascade", slice(&want)))
        .with(Series::new("finite difference", slice(fdv)));
    report.artifacts = vec![Artifact::new("linearize.csv", csv), Artifact::new("linearize.svg", plot.render())];
    Ok(report)
}

fn gauge_check(config: &ExperimentConfig) -> Result<RunReport, CliError> {
    let root = config.node();
    let gauge_node = root.req("gauge")?;
    gauge_node.expect_keys(&["amplitude"], &[])?;
    let amplitude = gauge_node.req("amplitude")?.f64()?;
    let source = parse_source(&root.req("source")?)?;
    let grids_node = root.req("grids")?;
    grids_node.expect_keys(&["nx", "t_end"], &["courant"])?;
    let t_end = grids_node.req("t_end")?.positive()?;
    let courant = courant(&grids_node)?;
    let nxs: Vec<usize> = grids_node
        .req("nx")?
        .items()?
        .iter()
        .map(|n| n.usize_in(4, MAX_NODES).map(|v| v * config.grid_refine))
        .collect::<ConfigResult<_>>()?;
    let grids: Vec<Grid1d> = nxs
        .iter()
        .map(|&nx| Grid1d::with_courant(nx, t_end, courant))
        .collect::<wavescope_core::Result<_>>()
        .map_err(|e| grids_node.error(e.to_string()))?;
    let control = match root.get("control") {
        None => None,
        Some(n) => {
            n.expect_keys(&["h_perturbation"], &["factor"])?;
            Some((n.req("h_perturbation")?.f64()?, n.opt_positive("factor", 10.0)?))
        }
    };
    let picard = parse_picard(&root, PicardOptions::default())?;
    let tol = tolerances_node(&root, &["order", "order_tol", "finest_relative"])?;
    let (order_want, order_tol) = (tol.opt_positive("order", 2.0)?, tol.opt_positive("order_tol", 0.3)?);
    let finest_relative = tol.get("finest_relative").map(|n| n.positive()).transpose()?;
    let medium = medium(config)?;
    let gauge = GaugeFunction::sine_bump(amplitude, 1).module("gauge")?;
    let opts = DiscrepancyOptions {
        picard,
        h_perturbation: 0.0,
        strict: true,
    };
    let gauged = dn_discrepancy(&medium, &gauge, &source, &grids, opts).module("gauge")?;
    let ctrl = control
        .map(|(h, _)| dn_discrepancy(&medium, &gauge, &source, &grids, DiscrepancyOptions { h_perturbation: h, ..opts }))
        .transpose()
        .module("gauge")?;
    let order = gauged.order.as_ref().map_or(f64::NAN, |o| o.order);
    let mut report = RunReport::new(config);
    report.results = json!({
        "gauge_amplitude": amplitude,
        "nx": nxs,
        "discrepancy": gauged,
        "control": ctrl,
    });
    report
        .assertions
        .push(Assertion::between("observed_order", order, order_want - order_tol, order_want + order_tol));
    let finest = gauged.grids.last().map_or(f64::NAN, |g| g.absolute);
    if let Some(limit) = finest_relative {
        let rel = gauged.grids.last().map_or(f64::NAN, |g| g.relative);
        report.assertions.push(Assertion::at_most("finest_relative", rel, limit));
    }
    if let (Some(c), Some((_, factor))) = (&ctrl, control) {
        let cf = c.grids.last().map_or(f64::NAN, |g| g.absolute);
        report.assertions.push(Assertion::at_least("control_over_gauged", cf / finest, factor));
    }
    if config.strict {
        let reliable = gauged.order.as_ref().is_some_and(|o| o.reliable);
        report.assertions.push(Assertion::count("unreliable_order", usize::from(!reliable), 0));
    }
    let mut rows = Vec::new();
    let mut plot = Plot::new("DN discrepancy against grid step", "log10 dx", "log10 L2 discrepancy");
    for (case, rep) in std::iter::once(("gauged", &gauged)).chain(ctrl.as_ref().map(|c| ("control", c))) {
        for (g, nx) in rep.grids.iter().zip(&nxs) {
            rows.push(vec![case.to_string(), nx.to_string(), num(g.dx), num(g.dt), num(g.absolute), num(g.relative)]);
        }
        plot = plot.with(Series::new(case, rep.grids.iter().map(|g| (g.dx.log10(), g.absolute.log10())).collect()));
    }
    report.artifacts = vec![
        Artifact::new("discrepancies.csv", csv_table(&["case", "nx", "dx", "dt", "absolute", "relative"], rows)?),
        Artifact::new("discrepancies.svg", plot.render()),
    ];
    Ok(report)
}

// ------------------------------------------------------------------ geometry

fn crossing_json(c: &Option<Crossing>) -> Value {
    c.as_ref().map_or(Value::Null, |c| {
        json!({"s": c.s, "point": [c.point.t, c.point.x[0], c.point.x[1], c.point.x[2]], "transversal": c.transversal})
    })
}

fn trace(config: &ExperimentConfig) -> Result<RunReport, CliError> {
    let root = config.node();
    let ray = root.req("ray")?;
    ray.expect_keys(&["x0", "direction", "s_max"], &["step"])?;
    let x0 = ray.req("x0")?.f64_array::<4>()?;
    let dir_node = ray.req("direction")?;
    let d = Vector3::from(dir_node.f64_array::<3>()?);
    if d.norm() == 0.0 {
        return Err(dir_node.error("direction must be nonzero").into());
    }
    let d = d.normalize();
    let s_max = ray.req("s_max")?.positive()?;
    let step = ray.opt_positive("step", 1e-2)? / config.grid_refine as f64;
    let tol = tolerances_node(&root, &["null_drift"])?;
    let drift_limit = tol.opt_positive("null_drift", tolerances::NULL_DRIFT)?;
    let metric = medium(config)?.metric;
    let start = SpacetimePoint::new(x0[0], [x0[1], x0[2], x0[3]]);
    let zeta = from_orthonormal_frame(&metric, &Vector3::from(start.x), &Covector::new([-1.0, d[0], d[1], d[2]]));
    let path = trace_bicharacteristic(&metric, &start, &zeta, s_max, StepControl::with_step(step))
        .and_then(|p| p.annotate(&AxisBox::unit_cube(), &metric))
        .module("lorentz_geometry")?;
    let samples = path.samples();
    let crossings = path.crossings.unwrap_or_default();
    let mut report = RunReport::new(config);
    report.results = json!({
        "samples": samples.len(),
        "s_range": [path.s_range().0, path.s_range().1],
        "truncated": path.truncated,
        "max_drift": path.max_drift,
        "max_step_error": path.max_step_error,
        "started_inside": crossings.started_inside,
        "entry": crossing_json(&crossings.entry),
        "exit": crossing_json(&crossings.exit),
        "conjugate": path.conjugate,
    });
    report.assertions.push(Assertion::at_most("max_drift", path.max_drift, drift_limit));
    let rows = samples.iter().map(|r| {
        let mut row = vec![num(r.s), num(r.point.t)];
        row.extend(r.point.x.iter().map(|v| num(*v)));
        row.extend(r.covector.0.iter().map(|v| num(*v)));
        row
    });
    let csv = csv_table(&["s", "t", "x1", "x2", "x3", "zeta_t", "zeta_x1", "zeta_x2", "zeta_x3"], rows)?;
    let mut plot = Plot::new("null bicharacteristic", "s", "position");
    for k in 0..3 {
        plot = plot.with(Series::new(format!("x{}", k + 1), samples.iter().map(|r| (r.s, r.point.x[k])).collect()));
    }
    report.artifacts = vec![Artifact::new("trace.csv", csv), Artifact::new("trace.svg", plot.render())];
    Ok(report)
}

fn frame_params(kind: &FrameKind) -> Value {
    match *kind {
        FrameKind::Three { r0, s } => json!({"kind": "three", "r0": r0, "s": s}),
        FrameKind::I3 { phi, theta, lambda } => json!({"kind": "i3", "phi": phi, "theta": theta, "lambda": lambda}),
        FrameKind::Four { phi, theta } => json!({"kind": "four", "phi": phi, "theta": theta}),
    }
}

fn frames(config: &ExperimentConfig) -> Result<RunReport, CliError> {
    let root = config.node();
    let node = root.req("frames")?;
    let kind = node.req("kind")?.choice(&["three", "i3", "four"])?;
    let frame = if kind == "three" {
        node.expect_keys(&["kind", "r0", "s"], &[])?;
        let (r0, s) = (node.req("r0")?.f64()?, node.req("s")?.f64()?);
        build_three_frame(r0, s)
    } else {
        node.expect_keys(&["kind", "phi", "theta"], &[])?;
        let (phi, theta) = (node.req("phi")?.f64()?, node.req("theta")?.f64()?);
        if kind == "i3" {
            build_i3_frame(phi, theta)
        } else {
            build_four_frame(phi, theta)
        }
    }
    .module("covector_lab")?;
    let [b2, b3, b4] = root.get("betas").map_or(Ok([0.0; 3]), |n| n.f64_array::<3>())?;
    let tol = tolerances_node(&root, &["frame"])?;
    let limit = tol.opt_positive("frame", tolerances::FRAME)?;
    let sums = interaction_sums(&frame, b2, b3, b4).module("covector_lab")?;
    let residual = frame.decomposition_residual();
    let mut report = RunReport::new(config);
    report.results = json!({
        "frame": frame_params(&frame.kind),
        "members": frame.members.iter().map(|m| m.as_slice().to_vec()).collect::<Vec<_>>(),
        "weights": frame.weights,
        "target": frame.target.as_slice(),
        "decomposition_residual": residual,
        "laurent_parameter": frame.laurent_parameter(),
        "betas": [b2, b3, b4],
        "sums": {
            "c": sums.c,
            "d": sums.d,
            "curly_c": sums.curly_c,
            "i3": sums.i3,
            "i3_closed_form": sums.i3_closed_form,
            "sum_identity": sums.sum_identity,
        },
    });
    report.assertions.push(Assertion::at_most("decomposition_residual", residual, limit));
    let rows = frame.members.iter().zip(&frame.weights).enumerate().map(|(j, (m, w))| {
        let mut row = vec![(j + 1).to_string(), num(*w)];
        row.extend(m.iter().map(|v| num(*v)));
        row
    });
    let csv = csv_table(&["member", "weight", "zeta_t", "zeta_x1", "zeta_x2", "zeta_x3"], rows)?;
    report.artifacts = vec![Artifact::new("frames.csv", csv)];
    Ok(report)
}

/// Expected `s⁻³, s⁻², s⁻¹` coefficients of the four-frame sums.
const C_EXPECTED: [f64; 3] = [-2.0, 14.0, 10.0];
const D_EXPECTED: [f64; 3] = [1.5, -10.5, -2.25];
const LAURENT_ORDERS: [i32; 6] = [-3, -2, -1, 0, 1, 2];

fn leading(fit: &LaurentFit) -> [f64; 3] {
    std::array::from_fn(|n| fit.coefficient(n as i32 - 3).unwrap_or(f64::NAN))
}

fn coeffs(config: &ExperimentConfig) -> Result<RunReport, CliError> {
    let root = config.node();
    let node = root.req("frames")?;
    node.expect_keys(&["phi", "theta"], &["four_phi", "s_values"])?;
    let (phi, theta) = (node.req("phi")?.f64()?, node.req("theta")?.f64()?);
    let four_phi = node.opt_f64("four_phi", 0.4)?;
    let s_values = match node.get("s_values") {
        None => FourFrameSweep::default_s_values(),
        Some(n) => {
            let v = n.f64_vec()?;
            if v.len() < LAURENT_ORDERS.len() || v.iter().any(|s| !(*s > 0.0 && *s < 1.0)) {
                return Err(n.error(format!("need at least {} values in (0, 1)", LAURENT_ORDERS.len())).into());
            }
            v
        }
    };
    let tol = tolerances_node(&root, &["i3", "identity", "laurent"])?;
    let i3_tol = tol.opt_positive("i3", 1e-12)?;
    let identity_tol = tol.opt_positive("identity", 1e-12)?;
    let laurent_tol = tol.get("laurent").map_or(Ok([0.02, 0.05, 0.10]), |n| n.f64_array::<3>())?;
    let frame = build_i3_frame(phi, theta).module("covector_lab")?;
    let sums = interaction_sums(&frame, 0.0, 0.0, 0.0).module("covector_lab")?;
    let missing = || core_err("covector_lab", "I3 frame produced no three-wave sums".into());
    let (pair, identity) = (sums.i3.ok_or_else(missing)?, sums.sum_identity.ok_or_else(missing)?);
    let closed = i3_closed_form(phi, theta);
    // the quotient is convention free: both sums share the pair denominators
    let normalised = pair / identity;
    let mut cs = Vec::with_capacity(s_values.len());
    let mut ds = Vec::with_capacity(s_values.len());
    for &s in &s_values {
        let f = build_four_frame(four_phi, 2.0 * s.asin()).module("covector_lab")?;
        let ic = interaction_sums(&f, 1.0, 1.0, 0.0).module("covector_lab")?;
        let missing = || core_err("covector_lab", "four frame produced no four-wave sums".into());
        cs.push((s, ic.c.ok_or_else(missing)?));
        ds.push((s, ic.d.ok_or_else(missing)?));
    }
    let fc = fit_laurent(&cs, &LAURENT_ORDERS).module("covector_lab")?;
    let fd = fit_laurent(&ds, &LAURENT_ORDERS).module("covector_lab")?;
    let (lc, ld) = (leading(&fc), leading(&fd));
    let mut report = RunReport::new(config);
    report.results = json!({
        "phi": phi,
        "theta": theta,
        // the term of (i, j, k) is symmetric in j, k: the ordered sum counts each pair twice
        "i3_permutation_sum": 2.0 * pair,
        "i3_permutation_normalised": 2.0 * normalised,
        "i3_pair_sum": pair,
        "i3_normalised": normalised,
        "i3_closed_form": closed,
        "sum_identity": identity,
        "laurent": {
            "four_phi": four_phi,
            "s_values": s_values,
            "orders": LAURENT_ORDERS,
            "c": fc,
            "d": fd,
            "c_expected": C_EXPECTED,
            "d_expected": D_EXPECTED,
        },
    });
    report.assertions.push(Assertion::at_most("i3_normalised_deviation", (normalised - closed).abs(), i3_tol));
    report.assertions.push(Assertion::at_most("sum_identity_deviation", (identity + 1.0).abs(), identity_tol));
    for (name, got, want) in [("c", lc, C_EXPECTED), ("d", ld, D_EXPECTED)] {
        for n in 0..3 {
            let dev = (got[n] - want[n]).abs() / want[n].abs();
            report.assertions.push(Assertion::at_most(&format!("{name}_s^{}_relative", n as i32 - 3), dev, laurent_tol[n]));
        }
    }
    let rows = cs.iter().zip(&ds).map(|(&(s, c), &(_, d))| vec![num(s), num(c), num(d), num(fc.eval(s)), num(fd.eval(s))]);
    let csv = csv_table(&["s", "c", "d", "c_fit", "d_fit"], rows)?;
    let scaled = |pts: &[(f64, f64)]| pts.iter().map(|&(s, v)| (s, s.powi(3) * v)).collect::<Vec<_>>();
    let fitted = |fit: &LaurentFit| s_values.iter().map(|&s| (s, s.powi(3) * fit.eval(s))).collect::<Vec<_>>();
    let plot = Plot::new("Laurent fits of the four-frame sums", "s", "s^3 x sum")
        .with(Series::new("C", scaled(&cs)))
        .with(Series::new("C fit", fitted(&fc)))
        .with(Series::new("D", scaled(&ds)))
        .with(Series::new("D fit", fitted(&fd)));
    report.artifacts = vec![Artifact::new("coeffs.csv", csv), Artifact::new("coeffs.svg", plot.render())];
    Ok(report)
}

// ------------------------------------------------------------------ recovery

fn recover_command(config: &ExperimentConfig) -> Result<RunReport, CliError> {
    let root = config.node();
    let gauge_node = root.req("gauge")?;
    gauge_node.expect_keys(&["amplitude"], &[])?;
    let amplitude = gauge_node.req("amplitude")?.f64()?;
    let points = parse_points(&root.req("points")?, config.seed)?;
    let rn = optional_section(&root, "recovery", &["ds", "probe_offset", "directions", "m3_frame", "m4_phi", "rho_nodes"])?;
    let defaults = RecoveryOptions::default();
    let m3_frame = rn.get("m3_frame").map_or(Ok([defaults.m3_frame.0, defaults.m3_frame.1]), |n| n.f64_array::<2>())?;
    let opts = RecoveryOptions {
        ds: rn.opt_positive("ds", defaults.ds)?,
        probe_offset: rn.opt_positive("probe_offset", defaults.probe_offset)?,
        directions: rn.opt_usize_in("directions", defaults.directions, 4, 64)?,
        m3_frame: (m3_frame[0], m3_frame[1]),
        m4_phi: rn.opt_f64("m4_phi", defaults.m4_phi)?,
        rho_nodes: rn.opt_usize_in("rho_nodes", defaults.rho_nodes, 1, 64)?,
        ..defaults
    };
    let tol = tolerances_node(&root, &["gauge"])?;
    let limit = tol.opt_positive("gauge", 1e-4)?;
    let reference = medium(config)?;
    let gauge = GaugeFunction::sine_bump(amplitude, 3).module("gauge")?;
    let hidden = apply_gauge(&reference, &gauge, GaugeOptions::default()).module("gauge")?;
    let ctx = SymbolContext {
        metric: reference.metric.clone(),
        domain: Arc::new(AxisBox::unit_cube()),
        control: StepControl::with_step(2e-2 / config.grid_refine as f64),
        s_max: 2.0,
    };
    let result = recover(&ctx, &points, &SyntheticOracle::new(hidden), &reference, &opts);
    let residuals = verify_gauge_relations(&result, &gauge, &reference);
    let mut report = RunReport::new(config);
    report.results = json!({
        "gauge_amplitude": amplitude,
        "options": opts,
        "points": result.points.len(),
        "skipped": result.skipped,
        "max_residuals": residuals.max,
        "rms_residuals": residuals.rms,
    });
    report.assertions.push(Assertion::count("skipped_points", result.skipped.len(), 0));
    let m = residuals.max;
    for (name, v) in [("delta_b", m.delta_b), ("rho", m.rho), ("beta2", m.beta2), ("beta3", m.beta3)] {
        report.assertions.push(Assertion::at_most(&format!("max_{name}_residual"), v, limit));
    }
    let mut json = result.to_json().module("recovery")?;
    json.push('\n');
    let mut csv = Vec::new();
    result.write_csv(&mut csv).module("recovery")?;
    let series = |name: &str, f: fn(&wavescope_core::recovery::GaugeResiduals) -> f64| {
        Series::new(
            name,
            residuals.points.iter().enumerate().map(|(k, r)| (k as f64, f(r).max(1e-300).log10())).collect(),
        )
    };
    let plot = Plot::new("gauge-relation residuals per point", "point index", "log10 residual")
        .with(series("delta_b", |r| r.delta_b))
        .with(series("rho", |r| r.rho))
        .with(series("beta2", |r| r.beta2))
        .with(series("beta3", |r| r.beta3));
    report.artifacts = vec![
        Artifact::new("recovery.json", json),
        Artifact::new("recovery.csv", csv),
        Artifact::new("recovery.svg", plot.render()),
    ];
    Ok(report)
}

/// `ϱ(t, x) = (1 + a Π sin(πx_k)) (1 + r t)`.
fn rho_field(amplitude: f64, rate: f64) -> field::Field {
    let bump = field::sine_bump(amplitude, 3);
    let b2 = Arc::clone(&bump);
    Arc::new(SmoothField::new(
        move |p: &SpacetimePoint| bump.value(p) * (1.0 + rate * p.t),
        move |p: &SpacetimePoint| {
            let mut d = b2.differential(p).0 * (1.0 + rate * p.t);
            d[0] = rate * b2.value(p);
            Covector(d)
        },
    ))
}

fn time_independence(config: &ExperimentConfig) -> Result<RunReport, CliError> {
    let root = config.node();
    let rho_node = root.req("rho")?;
    rho_node.expect_keys(&[], &["amplitude", "time_rate"])?;
    let amplitude = rho_node.opt_f64("amplitude", 0.1)?;
    let rate = rho_node.opt_f64("time_rate", 0.0)?;
    let [b2, b3, b4] = root.req("betas")?.f64_array::<3>()?;
    let points = parse_points(&root.req("points")?, config.seed)?;
    let frames_node = optional_section(&root, "frames", &["pairs"])?;
    let pairs: [[f64; 2]; 2] = match frames_node.get("pairs") {
        None => [[0.3, 1.0], [1.2, 0.6]],
        Some(n) => {
            let items = n.items()?;
            if items.len() != 2 {
                return Err(n.error(format!("expected 2 (phi, theta) pairs, got {}", items.len())).into());
            }
            [items[0].f64_array::<2>()?, items[1].f64_array::<2>()?]
        }
    };
    let expect = root.get("expect").map_or(Ok("independent"), |n| n.choice(&["independent", "dependent"]))?;
    let frames: Vec<CovectorFrame> = pairs
        .iter()
        .map(|[phi, theta]| build_i3_frame(*phi, *theta))
        .collect::<wavescope_core::Result<_>>()
        .module("covector_lab")?;
    let rho = rho_field(amplitude, rate);
    let verdicts = points
        .iter()
        .map(|q| verify_time_independence(q, rho.as_ref(), (b2, b3, b4), [&frames[0], &frames[1]]))
        .collect::<wavescope_core::Result<Vec<_>>>()
        .module("recovery")?;
    let want_independent = expect == "independent";
    let mismatched = verdicts.iter().filter(|v| v.time_independent != want_independent).count();
    let mut report = RunReport::new(config);
    report.results = json!({
        "rho": {"amplitude": amplitude, "time_rate": rate},
        "betas": [b2, b3, b4],
        "frames": pairs,
        "expect": expect,
        "points": points.len(),
        "independent": verdicts.iter().filter(|v| v.time_independent).count(),
        "verdicts": verdicts,
    });
    report.assertions.push(Assertion::count("mismatched_verdicts", mismatched, 0));
    let rows = points.iter().zip(&verdicts).map(|(q, v)| {
        let mut row = vec![num(q.t)];
        row.extend(q.x.iter().map(|x| num(*x)));
        row.extend([num(v.c2_term), num(v.c3_term), v.c4_term.map_or(String::new(), num), v.time_independent.to_string()]);
        row
    });
    let csv = csv_table(
        &["q_t", "q_x1", "q_x2", "q_x3", "c2_term", "c3_term", "c4_term", "time_independent"],
        rows,
    )?;
    report.artifacts = vec![Artifact::new("time_independence.csv", csv)];
    Ok(report)
}
