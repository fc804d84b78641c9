use std::f64::consts::PI;

use clap::Subcommand;
use helikon::expr::{
    classify_fixed_point_with_radius, divisor_audit, function_divisor, log_derivative, residue,
    Divisor, FixedPointClass,
};
use helikon::lab::{
    build_mesh, export_obj, lambda_sweep, probe_self_intersection, SurfaceMesh, Thresholds,
    INTRINSIC_FACTOR, PERIOD_TOL,
};
use helikon::solver::{periodic_g1h_family, solve};
use helikon::surface::{involution_report, straight_route, symmetry_verify, PeriodReport};
use helikon::{Complex64, Error, Result};
use serde_json::{Map, Value};

use crate::report::{cplx, num, nums, vec3, Report};
use crate::scene::{DataEntry, DataSource, Scene};

pub const DEFAULT_TOL: f64 = 1e-10;
/// Offending pairs listed in a probe report; the full count is always given.
pub const MAX_LISTED_PAIRS: usize = 50;
const SYMMETRY_SAMPLES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Period integrals and closure residuals on the data's cycles
    Periods,
    /// Flux vectors and the vertical-flux verdict
    Flux,
    /// The reflection identity F(I(p)) = (F1, -F2, -F3)(p) on sample points
    Symmetry,
    /// Oddness of dh and dg/g under the involution and constancy of g(I(p))g(p)
    Involution,
    /// Residues of dh at the punctures
    Residues,
    /// Divisor audits of dh and g on a torus
    Audit,
    /// Local type of dh and dg/g at the involution's fixed points
    ClassifyFixed,
    /// Period problem of the symmetric periodic family
    Solve,
    /// Immersed sample grid
    Mesh,
    /// Near-pair self-intersection probe
    Probe,
    /// Lopez-Ros sweep with bracket refinement
    Sweep,
}

impl Command {
    pub const ALL: [Command; 11] = [
        Command::Periods,
        Command::Flux,
        Command::Symmetry,
        Command::Involution,
        Command::Residues,
        Command::Audit,
        Command::ClassifyFixed,
        Command::Solve,
        Command::Mesh,
        Command::Probe,
        Command::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Periods => "periods",
            Command::Flux => "flux",
            Command::Symmetry => "symmetry",
            Command::Involution => "involution",
            Command::Residues => "residues",
            Command::Audit => "audit",
            Command::ClassifyFixed => "classify-fixed",
            Command::Solve => "solve",
            Command::Mesh => "mesh",
            Command::Probe => "probe",
            Command::Sweep => "sweep",
        }
    }
}

/// Command-line overrides of scene settings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Flags {
    pub tol: Option<f64>,
    pub lambdas: Option<Vec<f64>>,
    pub resolution: Option<(usize, usize)>,
    pub obj: bool,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub obj: Option<Vec<u8>>,
}

impl Outcome {
    /// 0 when every check passed, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.report.verdict.passed() {
            0
        } else {
            2
        }
    }
}

fn active(scene: &Scene) -> Result<&DataEntry> {
    scene
        .active_data()
        .ok_or_else(|| Error::InvalidData("the scene has no [data] section".into()))
}

fn involution(entry: &DataEntry) -> Result<(&str, &helikon::expr::Involution)> {
    entry
        .involution
        .as_ref()
        .map(|(n, i)| (n.as_str(), i))
        .ok_or_else(|| {
            Error::IncompatibleInvolution(format!("data '{}' declares no involution", entry.name))
        })
}

fn distance(entry: &DataEntry, a: Complex64, b: Complex64) -> f64 {
    match &entry.lattice {
        Some(l) => l.distance_to_lattice(a - b),
        None => (a - b).norm(),
    }
}

/// Radius of a small circle about `p` that stays clear of every other known singular point.
fn small_radius(entry: &DataEntry, p: Complex64) -> f64 {
    let clear = entry
        .special
        .iter()
        .map(|&q| distance(entry, p, q))
        .filter(|d| *d > 1e-9)
        .fold(f64::INFINITY, f64::min);
    (0.25 * clear).min(0.1)
}

fn data_settings(r: &mut Report, entry: &DataEntry, tol: f64) {
    r.setting("tol", num(tol));
    r.setting("data", Value::String(entry.name.clone()));
    match &entry.source {
        DataSource::Explicit { g, dh } => {
            r.setting("g", Value::String(g.clone()));
            r.setting("dh", Value::String(dh.clone()));
        }
        DataSource::Symmetric {
            tau,
            e,
            half,
            log_rho,
        } => {
            r.setting("family", Value::String("symmetric".into()));
            r.setting("tau", cplx(*tau));
            r.setting("e", cplx(*e));
            r.setting("half", Value::String(format!("{half:?}")));
            r.setting("log_rho", num(*log_rho));
        }
    }
    r.setting("basepoint", cplx(entry.data.basepoint()));
    if entry.data.scale() != 1.0 {
        r.setting("scale", num(entry.data.scale()));
    }
}

fn period_json(rep: &PeriodReport) -> Value {
    let mut cycles = Map::new();
    for c in &rep.cycles {
        let mut m = Map::new();
        m.insert("p_plus".into(), cplx(c.p_plus));
        m.insert("p_minus".into(), cplx(c.p_minus));
        m.insert("p3".into(), cplx(c.p3));
        m.insert("r1".into(), num(c.r1));
        m.insert("r2".into(), num(c.r2));
        cycles.insert(c.label.clone(), Value::Object(m));
    }
    Value::Object(cycles)
}

fn divisor_json(d: &Divisor) -> Value {
    Value::Array(
        d.entries
            .iter()
            .map(|(p, k)| {
                let mut m = Map::new();
                m.insert("point".into(), cplx(*p));
                m.insert("order".into(), Value::from(*k));
                Value::Object(m)
            })
            .collect(),
    )
}

fn class_json(c: &FixedPointClass) -> Value {
    let mut m = Map::new();
    m.insert("class".into(), Value::String(c.name().into()));
    match c {
        FixedPointClass::SimplePole { residue } => {
            m.insert("residue".into(), cplx(*residue));
        }
        FixedPointClass::Regular { value } => {
            m.insert("value".into(), cplx(*value));
        }
        _ => {}
    }
    Value::Object(m)
}

fn mesh_json(mesh: &SurfaceMesh, n: usize, m: usize) -> Value {
    let mut o = Map::new();
    o.insert("resolution".into(), Value::String(format!("{n}x{m}")));
    o.insert("vertices".into(), Value::from(mesh.vertices.len()));
    o.insert("faces".into(), Value::from(mesh.faces.len()));
    o.insert("edges".into(), Value::from(mesh.edges.len()));
    o.insert("closure_defect".into(), num(mesh.closure_defect));
    o.insert("max_edge_length".into(), num(mesh.max_edge_length()));
    o.insert(
        "bounding_box_diagonal".into(),
        num(mesh.bounding_box_diagonal()),
    );
    Value::Object(o)
}

/// Deterministic sample points around `p0`, each with a straight route from `p0`.
fn symmetry_samples(
    entry: &DataEntry,
    p0: Complex64,
) -> Vec<(Complex64, helikon::quadrature::PathSpec)> {
    let reach = match &entry.lattice {
        Some(l) => 0.45 * l.tau().norm().min(1.0),
        None => 1.0,
    };
    let mut out = Vec::new();
    for k in 0..SYMMETRY_SAMPLES {
        let theta = 2.0 * PI * (k as f64 + 0.5) / SYMMETRY_SAMPLES as f64 + 0.3;
        let r = reach * (0.3 + 0.7 * (k % 4) as f64 / 3.0);
        let p = p0 + Complex64::from_polar(r, theta);
        if entry.special.iter().any(|&q| distance(entry, p, q) < 0.05)
            || entry.data.integrands(p).is_err()
        {
            continue;
        }
        if let Ok(route) = straight_route(p0, p, &entry.data.singularities_near(p0, p)) {
            out.push((p, route));
        }
    }
    out
}

fn thresholds(scene: &Scene, mesh: &SurfaceMesh) -> Thresholds {
    let base = Thresholds::from_diagonal(mesh.bounding_box_diagonal());
    let delta_ext = scene.probe.delta_ext.unwrap_or(base.delta_ext);
    let delta_int = scene.probe.delta_int.unwrap_or(20.0 * delta_ext);
    Thresholds {
        delta_ext,
        delta_int,
    }
}

/// Runs one command against a loaded scene.
pub fn run(command: Command, scene: &Scene, flags: &Flags) -> Result<Outcome> {
    let tol = flags.tol.or(scene.tol).unwrap_or(DEFAULT_TOL);
    let mut r = Report::new(command.name(), &scene.name);
    let mut obj = None;
    match command {
        Command::Periods => {
            let e = active(scene)?;
            data_settings(&mut r, e, tol);
            r.setting("periodic", Value::Bool(e.periodic));
            let rep = e.data.period_report(&e.basis, tol)?;
            let horizontal = rep.cycles.iter().map(|c| c.r1).fold(0.0, f64::max);
            let vertical = rep.cycles.iter().map(|c| c.r2).fold(0.0, f64::max);
            r.result("cycles", period_json(&rep));
            r.result("max_horizontal", num(horizontal));
            r.result("max_vertical", num(vertical));
            r.result("max_residual", num(rep.max_residual));
            r.verdict.check("horizontal_closed", horizontal < tol);
            if !e.periodic {
                r.verdict.check("vertical_closed", vertical < tol);
            }
        }
        Command::Flux => {
            let e = active(scene)?;
            data_settings(&mut r, e, tol);
            let mut cycles = Map::new();
            for (label, path) in e.basis.iter() {
                let f = e.data.flux(path, tol)?;
                let mut m = Map::new();
                m.insert("flux".into(), vec3(f.0));
                m.insert("horizontal".into(), num(f.horizontal()));
                cycles.insert(label.into(), Value::Object(m));
            }
            let vf = e.data.is_vertical_flux(&e.basis, tol)?;
            r.result("cycles", Value::Object(cycles));
            r.result("vertical", Value::Bool(vf.vertical));
            r.result("vacuous", Value::Bool(vf.vacuous));
            r.result("max_horizontal", num(vf.max_horizontal));
        }
        Command::Symmetry => {
            let e = active(scene)?;
            let (name, inv) = involution(e)?;
            data_settings(&mut r, e, tol);
            r.setting("involution", Value::String(name.into()));
            r.setting("involution_center", cplx(inv.center()));
            let samples = symmetry_samples(e, inv.p0());
            let rep = symmetry_verify(&e.data, inv, &samples, tol)?;
            let mut per = Map::new();
            for (k, ((p, _), d)) in samples.iter().zip(&rep.deviations).enumerate() {
                let mut m = Map::new();
                m.insert("u".into(), cplx(*p));
                m.insert("deviation".into(), num(*d));
                per.insert(format!("S{}", k + 1), Value::Object(m));
            }
            r.result("p0", cplx(inv.p0()));
            r.result("rotation", cplx(rep.rotation));
            r.result("c", cplx(rep.c));
            r.result("samples", Value::Object(per));
            r.result("max_deviation", num(rep.max_deviation));
            r.verdict.check("symmetric", rep.ok);
        }
        Command::Involution => {
            let e = active(scene)?;
            let (name, inv) = involution(e)?;
            data_settings(&mut r, e, tol);
            r.setting("involution", Value::String(name.into()));
            r.setting("involution_center", cplx(inv.center()));
            let rep = involution_report(&e.data, inv, tol)?;
            r.result("p0", cplx(inv.p0()));
            r.result("c", cplx(rep.c));
            r.result("dh_odd", Value::Bool(rep.dh_odd));
            r.result("dgg_odd", Value::Bool(rep.dgg_odd));
            r.result("dh_deviation", num(rep.dh_deviation));
            r.result("dgg_deviation", num(rep.dgg_deviation));
            r.result("product_deviation", num(rep.product_deviation));
            r.result("max_deviation", num(rep.max_deviation));
            r.result(
                "samples",
                Value::Array(rep.samples.iter().map(|p| cplx(*p)).collect()),
            );
            r.verdict
                .check("dh_odd", rep.dh_odd)
                .check("dgg_odd", rep.dgg_odd)
                .check("product_constant", rep.product_deviation < tol);
        }
        Command::Residues => {
            let e = active(scene)?;
            data_settings(&mut r, e, tol);
            let mut per = Map::new();
            let mut total = Complex64::new(0.0, 0.0);
            for (label, p) in &e.punctures {
                let radius = small_radius(e, *p);
                let res = residue(e.data.dh(), *p, radius)?;
                total += res;
                let mut m = Map::new();
                m.insert("point".into(), cplx(*p));
                m.insert("radius".into(), num(radius));
                m.insert("dh".into(), cplx(res));
                per.insert(label.clone(), Value::Object(m));
            }
            r.result("punctures", Value::Object(per));
            r.result("sum", cplx(total));
        }
        Command::Audit => {
            let e = active(scene)?;
            data_settings(&mut r, e, tol);
            if e.lattice.is_none() {
                return Err(Error::DomainError(
                    "divisor audits need a torus domain".into(),
                ));
            }
            let mut dh = Map::new();
            let dh_ok = match divisor_audit(e.data.dh()) {
                Ok(a) => {
                    dh.insert("zeros".into(), Value::from(a.zeros));
                    dh.insert("poles".into(), Value::from(a.poles));
                    dh.insert("divisor".into(), divisor_json(&a.divisor));
                    a.balanced
                }
                Err(err @ (Error::AuditFailed(_) | Error::AbelViolation(_))) => {
                    dh.insert("failure".into(), Value::String(err.to_string()));
                    false
                }
                Err(err) => return Err(err),
            };
            let mut g = Map::new();
            let g_ok = match function_divisor(e.data.g()) {
                Ok(d) => {
                    g.insert("zeros".into(), Value::from(d.zero_count()));
                    g.insert("poles".into(), Value::from(d.pole_count()));
                    g.insert("divisor".into(), divisor_json(&d));
                    true
                }
                Err(err @ (Error::AuditFailed(_) | Error::AbelViolation(_))) => {
                    g.insert("failure".into(), Value::String(err.to_string()));
                    false
                }
                Err(err) => return Err(err),
            };
            r.result("dh", Value::Object(dh));
            r.result("g", Value::Object(g));
            r.verdict
                .check("dh_balanced", dh_ok)
                .check("g_elliptic", g_ok);
        }
        Command::ClassifyFixed => {
            let e = active(scene)?;
            let (name, inv) = involution(e)?;
            data_settings(&mut r, e, tol);
            r.setting("involution", Value::String(name.into()));
            r.setting("involution_center", cplx(inv.center()));
            let dgg = log_derivative(e.data.g());
            let mut per = Map::new();
            for (k, &p) in inv.fixed_points().iter().enumerate() {
                let radius = small_radius(e, p);
                let mut m = Map::new();
                m.insert("point".into(), cplx(p));
                m.insert("radius".into(), num(radius));
                m.insert(
                    "dh".into(),
                    class_json(&classify_fixed_point_with_radius(
                        e.data.dh(),
                        inv,
                        p,
                        radius,
                    )?),
                );
                m.insert(
                    "dgg".into(),
                    class_json(&classify_fixed_point_with_radius(&dgg, inv, p, radius)?),
                );
                per.insert(format!("F{}", k + 1), Value::Object(m));
            }
            r.result("fixed_points", Value::Object(per));
        }
        Command::Solve => {
            let s = scene
                .solver
                .as_ref()
                .ok_or_else(|| Error::InvalidFamily("the scene has no [solver] section".into()))?;
            let solve_tol = flags.tol.unwrap_or(s.tol);
            let names = s.family.param_names();
            r.setting("tol", num(solve_tol));
            r.setting("max_iter", Value::from(s.max_iter));
            r.setting("half", Value::String(format!("{:?}", s.family.half)));
            r.setting("tau_mode", Value::String(format!("{:?}", s.family.tau)));
            r.setting("diagonal", Value::Bool(s.family.diagonal));
            r.setting("free_scale", Value::Bool(s.family.free_scale));
            let mut init = Map::new();
            for (p, x) in names.iter().zip(&s.init) {
                init.insert(p.name.clone(), num(*x));
            }
            r.setting("init", Value::Object(init));
            let spec = s.family.spec()?;
            let res = solve(&spec, &s.init, solve_tol, s.max_iter)?;
            let mut params = Map::new();
            for (p, x) in names.iter().zip(&res.params) {
                params.insert(p.name.clone(), num(*x));
            }
            let (tau, e1, log_rho) = s.family.unpack(&res.params);
            let built = periodic_g1h_family(&s.family.params_at(&res.params)?)?;
            r.result("params", Value::Object(params));
            r.result("tau", cplx(tau));
            r.result("e1", cplx(e1));
            r.result("e2", cplx(-e1));
            r.result("log_rho", num(log_rho));
            r.result("basepoint", cplx(built.data.basepoint()));
            r.result("history", nums(&res.history));
            r.result("iterations", Value::from(res.iterations));
            r.result("lm_steps", Value::from(res.lm_steps));
            r.result("final_norm", num(res.final_norm));
            r.result("final_residual", nums(&res.final_residual));
            r.result("cycles", period_json(&res.report));
            let monotone = res.history.windows(2).all(|w| w[1] < w[0]);
            r.verdict
                .check("converged", res.converged)
                .check("monotone", monotone);
        }
        Command::Mesh | Command::Probe => {
            let e = active(scene)?;
            data_settings(&mut r, e, tol);
            let spec = scene.mesh.sampling(e, flags.resolution)?;
            r.setting(
                "resolution",
                Value::String(format!("{}x{}", spec.n, spec.m)),
            );
            let mesh = build_mesh(&e.data, &spec)?;
            r.result("mesh", mesh_json(&mesh, spec.n, spec.m));
            if command == Command::Mesh {
                r.verdict.check("closes", mesh.closure_defect < PERIOD_TOL);
            } else {
                let th = thresholds(scene, &mesh);
                r.setting("delta_ext", num(th.delta_ext));
                r.setting("delta_int", num(th.delta_int));
                r.setting("intrinsic_factor", num(INTRINSIC_FACTOR));
                let probe = probe_self_intersection(&mesh, th.delta_ext, th.delta_int)?;
                let pairs = probe
                    .pairs
                    .iter()
                    .take(MAX_LISTED_PAIRS)
                    .map(|p| {
                        let mut m = Map::new();
                        m.insert("a".into(), Value::from(p.a));
                        m.insert("b".into(), Value::from(p.b));
                        m.insert("ua".into(), cplx(p.ua));
                        m.insert("ub".into(), cplx(p.ub));
                        m.insert("extrinsic".into(), num(p.extrinsic));
                        m.insert("intrinsic".into(), num(p.intrinsic));
                        Value::Object(m)
                    })
                    .collect();
                r.result("candidates", Value::from(probe.candidates));
                r.result("pair_count", Value::from(probe.pairs.len()));
                r.result("pairs", Value::Array(pairs));
                r.result("embedded", Value::Bool(probe.embedded));
                r.verdict.check("embedded", probe.embedded);
            }
            if flags.obj {
                obj = Some(export_obj(&mesh)?);
            }
        }
        Command::Sweep => {
            let e = active(scene)?;
            data_settings(&mut r, e, tol);
            let lambdas = flags
                .lambdas
                .clone()
                .unwrap_or_else(|| scene.sweep.lambdas.clone());
            let spec = scene.mesh.sampling(e, flags.resolution)?;
            r.setting(
                "resolution",
                Value::String(format!("{}x{}", spec.n, spec.m)),
            );
            r.setting("lambda", nums(&lambdas));
            let inv = if scene.sweep.use_involution {
                Some(involution(e)?.1)
            } else {
                None
            };
            let th = thresholds(scene, &build_mesh(&e.data, &spec)?);
            r.setting("delta_ext", num(th.delta_ext));
            r.setting("delta_int", num(th.delta_int));
            r.setting("period_tol", num(PERIOD_TOL));
            let rep = lambda_sweep(&e.data, inv, &lambdas, &spec, th, &e.basis)?;
            let row_json = |row: &helikon::lab::SweepRow| {
                let mut m = Map::new();
                m.insert("lambda".into(), num(row.lambda));
                m.insert("embedded".into(), Value::Bool(row.embedded));
                m.insert("pair_count".into(), Value::from(row.pair_count));
                m.insert("closest".into(), row.closest.map_or(Value::Null, num));
                m.insert("period_residual".into(), num(row.period_residual));
                m.insert("vertical_period".into(), num(row.vertical_period));
                if let Some(d) = row.involution_deviation {
                    m.insert("involution_deviation".into(), num(d));
                }
                Value::Object(m)
            };
            r.result(
                "rows",
                Value::Array(rep.rows.iter().map(row_json).collect()),
            );
            r.result(
                "bracket",
                match &rep.bracket {
                    None => Value::Null,
                    Some(b) => {
                        let mut m = Map::new();
                        m.insert("lo".into(), num(b.lo));
                        m.insert("hi".into(), num(b.hi));
                        m.insert("lo_embedded".into(), Value::Bool(b.lo_embedded));
                        m.insert(
                            "refinements".into(),
                            Value::Array(b.refinements.iter().map(row_json).collect()),
                        );
                        Value::Object(m)
                    }
                },
            );
            r.result("periods_ok", Value::Bool(rep.periods_ok));
            r.verdict.check("periods_closed", rep.periods_ok);
        }
    }
    Ok(Outcome { report: r, obj })
}
