//! Scene files: `[section name]` headers followed by `key = value` lines.
//! The schema is documented in `docs/scene-format.md`.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use helikon::elliptic::{Lattice, DEFAULT_SERIES_TOL};
use helikon::expr::{parse_expr, parse_form, Domain, Involution};
use helikon::lab::{RoutePolicy, SamplingSpec};
use helikon::quadrature::{Closure, PathSpec, Segment};
use helikon::solver::{
    generator_cycles, periodic_g1h_family, puncture_loops, symmetric_params, HalfPeriod,
    SymmetricFamily, TauMode,
};
use helikon::surface::{CycleBasis, WeierstrassData};
use helikon::{Complex64, Error};

/// Largest accepted mesh dimension per axis.
pub const MAX_RESOLUTION: usize = 4096;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SceneError {
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: validation error: {message}")]
    Validation { line: usize, message: String },
    #[error("line {line}: unresolved {kind} reference '{name}'")]
    UnresolvedReference {
        line: usize,
        kind: &'static str,
        name: String,
    },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

impl SceneError {
    pub fn line(&self) -> Option<usize> {
        match self {
            SceneError::Parse { line, .. }
            | SceneError::Validation { line, .. }
            | SceneError::UnresolvedReference { line, .. } => Some(*line),
            SceneError::Io { .. } => None,
        }
    }
}

type SResult<T> = std::result::Result<T, SceneError>;

fn invalid(line: usize, message: impl Into<String>) -> SceneError {
    SceneError::Validation {
        line,
        message: message.into(),
    }
}

/// Library errors at a given line; syntax errors stay parse errors.
fn lift(line: usize) -> impl Fn(Error) -> SceneError {
    move |e| match e {
        Error::SyntaxError { .. } => SceneError::Parse {
            line,
            message: e.to_string(),
        },
        other => invalid(line, other.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Section {
    kind: String,
    name: Option<String>,
    line: usize,
    entries: Vec<Entry>,
}

fn is_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
}

fn tokenize(text: &str) -> SResult<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let inner = rest.strip_suffix(']').ok_or_else(|| SceneError::Parse {
                line,
                message: "section header is missing ']'".into(),
            })?;
            let mut words = inner.split_whitespace();
            let kind = words
                .next()
                .ok_or_else(|| SceneError::Parse {
                    line,
                    message: "empty section header".into(),
                })?
                .to_string();
            let name = words.next().map(str::to_string);
            if words.next().is_some() {
                return Err(SceneError::Parse {
                    line,
                    message: "section header takes a kind and at most one name".into(),
                });
            }
            if !is_name(&kind) || name.as_deref().is_some_and(|n| !is_name(n)) {
                return Err(SceneError::Parse {
                    line,
                    message: format!("malformed section header '[{inner}]'"),
                });
            }
            if sections.iter().any(|s| s.kind == kind && s.name == name) {
                return Err(invalid(line, format!("duplicate section '[{inner}]'")));
            }
            sections.push(Section {
                kind,
                name,
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| SceneError::Parse {
            line,
            message: format!("expected 'key = value', found '{content}'"),
        })?;
        let key = key.trim();
        if !is_name(key) {
            return Err(SceneError::Parse {
                line,
                message: format!("malformed key '{key}'"),
            });
        }
        let section = sections.last_mut().ok_or_else(|| SceneError::Parse {
            line,
            message: "entry before the first section header".into(),
        })?;
        if section.entries.iter().any(|e| e.key == key) {
            return Err(invalid(line, format!("duplicate key '{key}'")));
        }
        section.entries.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(sections)
}

/// Typed access to one section's entries; tracks which keys were read.
struct Reader<'a> {
    section: &'a Section,
    used: HashSet<&'a str>,
}

impl<'a> Reader<'a> {
    fn new(section: &'a Section) -> Self {
        Reader {
            section,
            used: HashSet::new(),
        }
    }

    fn entry(&mut self, key: &str) -> Option<&'a Entry> {
        let e = self.section.entries.iter().find(|e| e.key == key)?;
        self.used.insert(e.key.as_str());
        Some(e)
    }

    fn has(&self, key: &str) -> bool {
        self.section.entries.iter().any(|e| e.key == key)
    }

    fn text(&mut self, key: &str) -> Option<(String, usize)> {
        self.entry(key).map(|e| (e.value.clone(), e.line))
    }

    fn required(&mut self, key: &str) -> SResult<(String, usize)> {
        let line = self.section.line;
        self.text(key)
            .ok_or_else(|| invalid(line, format!("section [{}] needs '{key}'", self.label())))
    }

    fn complex(&mut self, key: &str) -> SResult<Option<Complex64>> {
        self.entry(key)
            .map(|e| parse_complex(&e.value, e.line))
            .transpose()
    }

    fn real(&mut self, key: &str) -> SResult<Option<f64>> {
        self.entry(key)
            .map(|e| parse_real(&e.value, e.line))
            .transpose()
    }

    fn positive(&mut self, key: &str) -> SResult<Option<f64>> {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => {
                let x = parse_real(&e.value, e.line)?;
                if !(x > 0.0 && x.is_finite()) {
                    return Err(invalid(
                        e.line,
                        format!("'{key}' must be positive and finite"),
                    ));
                }
                Ok(Some(x))
            }
        }
    }

    fn boolean(&mut self, key: &str) -> SResult<Option<bool>> {
        self.entry(key)
            .map(|e| parse_bool(&e.value, e.line))
            .transpose()
    }

    fn count(&mut self, key: &str) -> SResult<Option<usize>> {
        self.entry(key)
            .map(|e| {
                e.value
                    .parse::<usize>()
                    .map_err(|_| invalid(e.line, format!("'{key}' must be a non-negative integer")))
            })
            .transpose()
    }

    fn label(&self) -> String {
        match &self.section.name {
            Some(n) => format!("{} {n}", self.section.kind),
            None => self.section.kind.clone(),
        }
    }

    /// Errors on any key that was never read.
    fn finish(self) -> SResult<()> {
        for e in &self.section.entries {
            if !self.used.contains(e.key.as_str()) {
                return Err(invalid(
                    e.line,
                    format!("unknown key '{}' in [{}]", e.key, self.label()),
                ));
            }
        }
        Ok(())
    }
}

/// A constant in the expression language (`0.5+1.2*i`, `pi/2`, ...).
pub fn parse_complex(text: &str, line: usize) -> SResult<Complex64> {
    let e = parse_expr(text, &Domain::Plane).map_err(lift(line))?;
    if e.node().contains_var() {
        return Err(invalid(line, format!("'{text}' must be a constant")));
    }
    let v = e.eval(Complex64::new(0.0, 0.0)).map_err(lift(line))?;
    if !v.is_finite() {
        return Err(invalid(line, format!("'{text}' is not finite")));
    }
    Ok(v)
}

pub fn parse_real(text: &str, line: usize) -> SResult<f64> {
    let v = parse_complex(text, line)?;
    if v.im != 0.0 {
        return Err(invalid(line, format!("'{text}' must be real")));
    }
    Ok(v.re)
}

fn parse_bool(text: &str, line: usize) -> SResult<bool> {
    match text {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        _ => Err(invalid(
            line,
            format!("expected true or false, found '{text}'"),
        )),
    }
}

fn split_list(text: &str) -> impl Iterator<Item = &str> {
    text.split([',', ';'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
}

fn parse_complex_list(text: &str, line: usize) -> SResult<Vec<Complex64>> {
    split_list(text).map(|s| parse_complex(s, line)).collect()
}

/// Positive reals separated by commas or semicolons.
pub fn parse_real_list(text: &str, line: usize) -> SResult<Vec<f64>> {
    let v: Vec<f64> = split_list(text)
        .map(|s| parse_real(s, line))
        .collect::<SResult<_>>()?;
    if v.is_empty() {
        return Err(invalid(line, "empty list"));
    }
    Ok(v)
}

/// `<n>x<m>` vertex counts.
pub fn parse_resolution(text: &str, line: usize) -> SResult<(usize, usize)> {
    let bad = || {
        invalid(
            line,
            format!("resolution must look like 40x40, found '{text}'"),
        )
    };
    let (a, b) = text.trim().split_once(['x', 'X']).ok_or_else(bad)?;
    let n: usize = a.trim().parse().map_err(|_| bad())?;
    let m: usize = b.trim().parse().map_err(|_| bad())?;
    if n == 0 || m == 0 || n > MAX_RESOLUTION || m > MAX_RESOLUTION {
        return Err(invalid(
            line,
            format!("resolution must lie between 1x1 and {MAX_RESOLUTION}x{MAX_RESOLUTION}"),
        ));
    }
    Ok((n, m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSettings {
    pub tau: Complex64,
    pub series_tol: f64,
}

/// Where a data entry's `g` and `dh` came from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Explicit {
        g: String,
        dh: String,
    },
    Symmetric {
        tau: Complex64,
        e: Complex64,
        half: HalfPeriod,
        log_rho: f64,
    },
}

#[derive(Debug, Clone)]
pub struct DataEntry {
    pub name: String,
    pub line: usize,
    pub source: DataSource,
    pub data: WeierstrassData,
    pub lattice: Option<Arc<Lattice>>,
    /// Labelled punctures in declaration order.
    pub punctures: Vec<(String, Complex64)>,
    /// Punctures plus any known zeros and poles of `g`, for sizing small circles.
    pub special: Vec<Complex64>,
    pub basis: CycleBasis,
    pub involution: Option<(String, Involution)>,
    /// Vertical periods are a screw translation rather than a closure defect.
    pub periodic: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub family: SymmetricFamily,
    pub init: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Rectangle { lo: Complex64, hi: Complex64 },
    Fundamental { origin: Complex64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshSettings {
    pub region: Region,
    pub resolution: (usize, usize),
    pub clip: Option<(Complex64, f64)>,
    pub exclusions: Vec<(Complex64, f64)>,
    pub cuts: Vec<(Complex64, Complex64)>,
    pub exclude_singularities: bool,
    pub route: RoutePolicy,
}

impl Default for MeshSettings {
    fn default() -> Self {
        MeshSettings {
            region: Region::Rectangle {
                lo: Complex64::new(-1.0, -1.0),
                hi: Complex64::new(1.0, 1.0),
            },
            resolution: (40, 40),
            clip: None,
            exclusions: Vec::new(),
            cuts: Vec::new(),
            exclude_singularities: true,
            route: RoutePolicy::Straight,
        }
    }
}

impl MeshSettings {
    pub fn sampling(
        &self,
        entry: &DataEntry,
        resolution: Option<(usize, usize)>,
    ) -> helikon::Result<SamplingSpec> {
        let (n, m) = resolution.unwrap_or(self.resolution);
        let mut spec = match self.region {
            Region::Rectangle { lo, hi } => SamplingSpec::rectangle(lo, hi, n, m),
            Region::Fundamental { origin } => {
                let lat = entry.lattice.as_ref().ok_or_else(|| {
                    Error::InvalidSampling("a fundamental region needs torus data".into())
                })?;
                SamplingSpec::fundamental(lat, origin, n, m)
            }
        };
        for &(c, r) in &self.exclusions {
            spec = spec.with_exclusion(c, r);
        }
        for &(a, b) in &self.cuts {
            spec = spec.with_cut(a, b);
        }
        if let Some((c, r)) = self.clip {
            spec = spec.with_clip(c, r);
        }
        if self.exclude_singularities {
            spec = spec.exclude_singularities(&entry.data);
        }
        Ok(spec.with_route(self.route))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProbeSettings {
    pub delta_ext: Option<f64>,
    pub delta_int: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepSettings {
    pub lambdas: Vec<f64>,
    pub use_involution: bool,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub name: String,
    pub tol: Option<f64>,
    pub lattice: Option<LatticeSettings>,
    pub data: Vec<DataEntry>,
    /// Index into `data` used by the data-driven commands.
    pub active: Option<usize>,
    pub cycle_names: Vec<String>,
    pub involution_names: Vec<String>,
    pub solver: Option<SolverSettings>,
    pub mesh: MeshSettings,
    pub probe: ProbeSettings,
    pub sweep: SweepSettings,
    pub output_dir: Option<PathBuf>,
}

impl Scene {
    pub fn active_data(&self) -> Option<&DataEntry> {
        self.active.map(|k| &self.data[k])
    }
}

#[derive(Debug, Clone)]
enum CycleDef {
    Circle {
        center: Complex64,
        radius: f64,
    },
    Polyline {
        points: Vec<Complex64>,
        closed: bool,
    },
    Generator {
        start: Complex64,
        along_tau: bool,
    },
}

fn build_cycle(def: &CycleDef, lattice: Option<&Lattice>, line: usize) -> SResult<PathSpec> {
    match def {
        CycleDef::Circle { center, radius } => {
            PathSpec::circle(*center, *radius).map_err(lift(line))
        }
        CycleDef::Polyline { points, closed } => {
            let mut pts = points.clone();
            if *closed && pts.first() != pts.last() {
                pts.push(pts[0]);
            }
            PathSpec::polyline(
                &pts,
                if *closed {
                    Closure::Closed
                } else {
                    Closure::Open
                },
            )
            .map_err(lift(line))
        }
        CycleDef::Generator { start, along_tau } => {
            let lat = lattice.ok_or_else(|| invalid(line, "generator cycles need torus data"))?;
            let w = if *along_tau {
                lat.tau()
            } else {
                Complex64::new(1.0, 0.0)
            };
            PathSpec::new(
                vec![Segment::Line {
                    from: *start,
                    to: *start + w,
                }],
                Closure::Period(w),
            )
            .map_err(lift(line))
        }
    }
}

fn read_cycle(section: &Section) -> SResult<CycleDef> {
    let mut r = Reader::new(section);
    let (kind, line) = r.required("kind")?;
    let def = match kind.as_str() {
        "circle" => CycleDef::Circle {
            center: r.complex("center")?.unwrap_or_default(),
            radius: r
                .positive("radius")?
                .ok_or_else(|| invalid(line, "circle cycles need 'radius'"))?,
        },
        "polyline" => {
            let (pts, pl) = r.required("points")?;
            let points = parse_complex_list(&pts, pl)?;
            if points.len() < 2 {
                return Err(invalid(pl, "a polyline needs at least two points"));
            }
            CycleDef::Polyline {
                points,
                closed: r.boolean("closed")?.unwrap_or(true),
            }
        }
        "generator" => {
            let along_tau = match r.text("along") {
                None => false,
                Some((s, l)) => match s.as_str() {
                    "1" => false,
                    "tau" => true,
                    _ => return Err(invalid(l, "'along' must be 1 or tau")),
                },
            };
            CycleDef::Generator {
                start: r.complex("start")?.unwrap_or_default(),
                along_tau,
            }
        }
        other => {
            return Err(invalid(
                line,
                format!("unknown cycle kind '{other}' (circle, polyline, generator)"),
            ))
        }
    };
    r.finish()?;
    Ok(def)
}

fn parse_half(text: &str, line: usize) -> SResult<HalfPeriod> {
    HalfPeriod::parse(text).ok_or_else(|| {
        invalid(
            line,
            format!("'half' must be 1, tau or 1+tau, found '{text}'"),
        )
    })
}

fn names(text: &str) -> Vec<String> {
    split_list(text).map(str::to_string).collect()
}

struct Raw<'a> {
    scene: Option<&'a Section>,
    lattice: Option<&'a Section>,
    data: Vec<&'a Section>,
    cycles: BTreeMap<String, (CycleDef, usize)>,
    involutions: BTreeMap<String, (Complex64, Option<Complex64>, usize)>,
    solver: Option<&'a Section>,
    mesh: Option<&'a Section>,
    probe: Option<&'a Section>,
    sweep: Option<&'a Section>,
    output: Option<&'a Section>,
}

fn classify(sections: &[Section]) -> SResult<Raw<'_>> {
    let mut raw = Raw {
        scene: None,
        lattice: None,
        data: Vec::new(),
        cycles: BTreeMap::new(),
        involutions: BTreeMap::new(),
        solver: None,
        mesh: None,
        probe: None,
        sweep: None,
        output: None,
    };
    for s in sections {
        let named = matches!(s.kind.as_str(), "data" | "cycle" | "involution");
        if named && s.name.is_none() {
            return Err(invalid(
                s.line,
                format!("[{}] sections need a name", s.kind),
            ));
        }
        if !named && s.name.is_some() {
            return Err(invalid(
                s.line,
                format!("[{}] sections take no name", s.kind),
            ));
        }
        let name = s.name.clone().unwrap_or_default();
        match s.kind.as_str() {
            "scene" => raw.scene = Some(s),
            "lattice" => raw.lattice = Some(s),
            "data" => raw.data.push(s),
            "cycle" => {
                raw.cycles.insert(name, (read_cycle(s)?, s.line));
            }
            "involution" => {
                let mut r = Reader::new(s);
                let center = r.complex("center")?.unwrap_or_default();
                let p0 = r.complex("p0")?;
                r.finish()?;
                raw.involutions.insert(name, (center, p0, s.line));
            }
            "solver" => raw.solver = Some(s),
            "mesh" => raw.mesh = Some(s),
            "probe" => raw.probe = Some(s),
            "sweep" => raw.sweep = Some(s),
            "output" => raw.output = Some(s),
            other => return Err(invalid(s.line, format!("unknown section kind '{other}'"))),
        }
    }
    Ok(raw)
}

fn read_lattice(section: Option<&Section>) -> SResult<Option<(LatticeSettings, Arc<Lattice>)>> {
    let Some(s) = section else { return Ok(None) };
    let mut r = Reader::new(s);
    let tau = r
        .complex("tau")?
        .ok_or_else(|| invalid(s.line, "[lattice] needs 'tau'"))?;
    let series_tol = r.positive("series_tol")?.unwrap_or(DEFAULT_SERIES_TOL);
    r.finish()?;
    let lat = Lattice::with_series_tol(tau, series_tol).map_err(lift(s.line))?;
    Ok(Some((LatticeSettings { tau, series_tol }, Arc::new(lat))))
}

fn read_data(
    s: &Section,
    lattice: Option<&(LatticeSettings, Arc<Lattice>)>,
    raw: &Raw<'_>,
) -> SResult<DataEntry> {
    let name = s.name.clone().unwrap_or_default();
    let mut r = Reader::new(s);
    let cycles_ref = r.text("cycles");
    let inv_ref = r.text("involution");
    let scale = r.positive("scale")?;
    let periodic = r.boolean("periodic")?;
    let family = r.text("family");
    let (source, data, lat, punctures, special, mut basis) = if let Some((fam, fl)) = family {
        if fam != "symmetric" {
            return Err(invalid(fl, format!("unknown family '{fam}' (symmetric)")));
        }
        for key in ["g", "dh", "domain", "punctures", "basepoint"] {
            if let Some(e) = r.entry(key) {
                return Err(invalid(
                    e.line,
                    format!("'{key}' cannot be combined with 'family'"),
                ));
            }
        }
        let tau = match r.complex("tau")? {
            Some(t) => t,
            None => lattice
                .map(|l| l.0.tau)
                .ok_or_else(|| invalid(s.line, "family data needs 'tau' or a [lattice]"))?,
        };
        let e = r
            .complex("e")?
            .ok_or_else(|| invalid(s.line, "family data needs 'e'"))?;
        let half = match r.text("half") {
            Some((h, l)) => parse_half(&h, l)?,
            None => HalfPeriod::One,
        };
        let log_rho = r.real("log_rho")?.unwrap_or(0.0);
        let series_tol = lattice.map(|l| l.0.series_tol);
        let mut params = symmetric_params(tau, e, half, series_tol).map_err(lift(s.line))?;
        params.rho *= log_rho.exp();
        let built = periodic_g1h_family(&params).map_err(lift(s.line))?;
        let lat = built.lattice.clone();
        let singular = [params.zeros.as_slice(), params.poles.as_slice()].concat();
        let punctures = vec![("E1".to_string(), params.e1), ("E2".to_string(), params.e2)];
        let mut basis = generator_cycles(&lat, &singular).map_err(lift(s.line))?;
        let others: Vec<Complex64> = singular
            .iter()
            .copied()
            .filter(|z| *z != params.e1 && *z != params.e2)
            .collect();
        for (label, path) in puncture_loops(&lat, &punctures, &others)
            .map_err(lift(s.line))?
            .iter()
        {
            basis.push(label, path.clone()).map_err(lift(s.line))?;
        }
        let data = built.data.with_label(name.clone());
        let mut special = singular.clone();
        special.extend([params.e1, params.e2]);
        (
            DataSource::Symmetric {
                tau,
                e,
                half,
                log_rho,
            },
            data,
            Some(lat),
            punctures,
            special,
            basis,
        )
    } else {
        let (domain_kind, dl) = r.text("domain").unwrap_or(("plane".into(), s.line));
        let pts = match r.text("punctures") {
            Some((t, l)) => parse_complex_list(&t, l)?,
            None => Vec::new(),
        };
        let domain = match domain_kind.as_str() {
            "plane" => if pts.is_empty() {
                Ok(Domain::Plane)
            } else {
                Domain::punctured_plane(pts.clone())
            }
            .map_err(lift(dl))?,
            "torus" => {
                let lat =
                    lattice.ok_or_else(|| invalid(dl, "torus data needs a [lattice] section"))?;
                Domain::torus(lat.1.clone(), pts.clone()).map_err(lift(dl))?
            }
            other => {
                return Err(invalid(
                    dl,
                    format!("unknown domain '{other}' (plane, torus)"),
                ))
            }
        };
        let (g_text, gl) = r.required("g")?;
        let (dh_text, hl) = r.required("dh")?;
        let g = parse_expr(&g_text, &domain).map_err(lift(gl))?;
        let dh = parse_form(&dh_text, &domain).map_err(lift(hl))?;
        let bp_line = r.entry("basepoint").map_or(s.line, |e| e.line);
        let basepoint = r.complex("basepoint")?.unwrap_or_default();
        let data = WeierstrassData::new(g, dh, basepoint, name.clone()).map_err(lift(bp_line))?;
        let punctures = pts
            .iter()
            .enumerate()
            .map(|(k, p)| (format!("P{}", k + 1), *p))
            .collect();
        let lat = domain.lattice().cloned();
        (
            DataSource::Explicit {
                g: g_text,
                dh: dh_text,
            },
            data,
            lat,
            punctures,
            pts,
            CycleBasis::new(),
        )
    };
    let data = match scale {
        Some(sc) => data.with_scale(sc).map_err(lift(s.line))?,
        None => data,
    };
    if let Some((list, line)) = cycles_ref {
        let builtin = std::mem::take(&mut basis);
        for c in names(&list) {
            if let Some(path) = builtin.get(&c) {
                basis.push(c.clone(), path.clone()).map_err(lift(line))?;
                continue;
            }
            let (def, cl) = raw
                .cycles
                .get(&c)
                .ok_or_else(|| SceneError::UnresolvedReference {
                    line,
                    kind: "cycle",
                    name: c.clone(),
                })?;
            let path = build_cycle(def, lat.as_deref(), *cl)?;
            if basis.get(&c).is_some() {
                return Err(invalid(line, format!("cycle '{c}' listed twice")));
            }
            basis.push(c.clone(), path).map_err(lift(*cl))?;
        }
    }
    let involution = match inv_ref {
        None => None,
        Some((n, line)) => {
            let (center, p0, il) =
                raw.involutions
                    .get(&n)
                    .ok_or_else(|| SceneError::UnresolvedReference {
                        line,
                        kind: "involution",
                        name: n.clone(),
                    })?;
            let mut inv = Involution::new(*center, data.domain()).map_err(lift(*il))?;
            if let Some(p) = p0 {
                inv = inv.with_p0(*p).map_err(lift(*il))?;
            }
            Some((n, inv))
        }
    };
    r.finish()?;
    let periodic = periodic.unwrap_or(matches!(source, DataSource::Symmetric { .. }));
    Ok(DataEntry {
        name,
        line: s.line,
        source,
        data,
        lattice: lat,
        punctures,
        special,
        basis,
        involution,
        periodic,
    })
}

fn read_solver(
    s: &Section,
    lattice: Option<&(LatticeSettings, Arc<Lattice>)>,
) -> SResult<SolverSettings> {
    let mut r = Reader::new(s);
    if let Some((fam, l)) = r.text("family") {
        if fam != "symmetric" {
            return Err(invalid(l, format!("unknown family '{fam}' (symmetric)")));
        }
    }
    let half = match r.text("half") {
        Some((h, l)) => parse_half(&h, l)?,
        None => HalfPeriod::One,
    };
    let tau0 = match r.complex("tau")? {
        Some(t) => t,
        None => lattice.map(|l| l.0.tau).unwrap_or(Complex64::new(0.0, 1.0)),
    };
    if tau0.im <= 0.0 {
        return Err(invalid(
            s.line,
            format!("tau = {tau0} must have positive imaginary part"),
        ));
    }
    let tau = match r.text("tau_mode") {
        None => TauMode::Free,
        Some((m, l)) => match m.as_str() {
            "fixed" => TauMode::Fixed(tau0),
            "rectangular" => TauMode::Rectangular,
            "free" => TauMode::Free,
            _ => return Err(invalid(l, "'tau_mode' must be fixed, rectangular or free")),
        },
    };
    let diagonal = r.boolean("diagonal")?.unwrap_or(true);
    let free_scale = r.boolean("free_scale")?.unwrap_or(false);
    let family = SymmetricFamily {
        half,
        tau,
        free_scale,
        diagonal,
        series_tol: lattice.map(|l| l.1.series_tol()),
    };
    let start = if diagonal {
        if r.has("e") {
            return Err(invalid(s.line, "diagonal families start from 's', not 'e'"));
        }
        Complex64::new(r.real("s")?.unwrap_or(0.7), 0.0)
    } else {
        if r.has("s") {
            return Err(invalid(
                s.line,
                "off-diagonal families start from 'e', not 's'",
            ));
        }
        r.complex("e")?
            .ok_or_else(|| invalid(s.line, "[solver] needs 'e' when diagonal = false"))?
    };
    let init = family.pack(tau0, start);
    for (p, x) in family.param_names().iter().zip(&init) {
        if !(p.lo..=p.hi).contains(x) {
            return Err(invalid(
                s.line,
                format!("initial {} = {x} lies outside [{}, {}]", p.name, p.lo, p.hi),
            ));
        }
    }
    let tol = r.positive("tol")?.unwrap_or(1e-8);
    let max_iter = r.count("max_iter")?.unwrap_or(50);
    r.finish()?;
    Ok(SolverSettings {
        family,
        init,
        tol,
        max_iter,
        line: s.line,
    })
}

fn read_mesh(s: &Section) -> SResult<MeshSettings> {
    let mut r = Reader::new(s);
    let mut m = MeshSettings::default();
    let region = r.text("region");
    m.region = match region.as_ref().map(|(t, l)| (t.as_str(), *l)) {
        None | Some(("rectangle", _)) => Region::Rectangle {
            lo: r.complex("lo")?.unwrap_or(Complex64::new(-1.0, -1.0)),
            hi: r.complex("hi")?.unwrap_or(Complex64::new(1.0, 1.0)),
        },
        Some(("fundamental", _)) => Region::Fundamental {
            origin: r.complex("origin")?.unwrap_or_default(),
        },
        Some((other, l)) => {
            return Err(invalid(
                l,
                format!("unknown region '{other}' (rectangle, fundamental)"),
            ))
        }
    };
    if let Region::Rectangle { lo, hi } = m.region {
        if !(lo.re < hi.re && lo.im < hi.im) {
            return Err(invalid(
                s.line,
                "rectangle needs lo below and to the left of hi",
            ));
        }
    }
    if let Some((t, l)) = r.text("resolution") {
        m.resolution = parse_resolution(&t, l)?;
    }
    if let Some(c) = r.complex("clip_center")? {
        let rad = r
            .positive("clip_radius")?
            .ok_or_else(|| invalid(s.line, "'clip_center' needs 'clip_radius'"))?;
        m.clip = Some((c, rad));
    } else if let Some(rad) = r.positive("clip_radius")? {
        m.clip = Some((Complex64::new(0.0, 0.0), rad));
    }
    if let Some((t, l)) = r.text("exclude") {
        // center @ radius, separated by ';'
        for item in t.split(';').map(str::trim).filter(|x| !x.is_empty()) {
            let (c, rad) = item.split_once('@').ok_or_else(|| {
                invalid(
                    l,
                    format!("exclusions look like 'center @ radius', found '{item}'"),
                )
            })?;
            let rad = parse_real(rad.trim(), l)?;
            if !(rad > 0.0 && rad.is_finite()) {
                return Err(invalid(l, "exclusion radius must be positive"));
            }
            m.exclusions.push((parse_complex(c.trim(), l)?, rad));
        }
    }
    if let Some((t, l)) = r.text("cut") {
        for item in t.split(';').map(str::trim).filter(|x| !x.is_empty()) {
            let (a, b) = item.split_once("->").ok_or_else(|| {
                invalid(l, format!("cuts look like 'from -> to', found '{item}'"))
            })?;
            let (a, b) = (parse_complex(a.trim(), l)?, parse_complex(b.trim(), l)?);
            if a == b {
                return Err(invalid(l, "cut endpoints coincide"));
            }
            m.cuts.push((a, b));
        }
    }
    m.exclude_singularities = r.boolean("exclude_singularities")?.unwrap_or(true);
    if let Some((t, l)) = r.text("route") {
        m.route = match t.as_str() {
            "straight" => RoutePolicy::Straight,
            "grid_vertex" => RoutePolicy::GridVertex,
            _ => return Err(invalid(l, "'route' must be straight or grid_vertex")),
        };
    }
    r.finish()?;
    Ok(m)
}

/// Parses and validates scene text; `origin` resolves a relative output directory.
pub fn parse_scene(text: &str, origin: Option<&Path>) -> SResult<Scene> {
    let sections = tokenize(text)?;
    let raw = classify(&sections)?;
    let lattice = read_lattice(raw.lattice)?;

    let mut name = None;
    let mut tol = None;
    let mut active_ref = None;
    if let Some(s) = raw.scene {
        let mut r = Reader::new(s);
        name = r.text("name").map(|t| t.0);
        tol = r.positive("tol")?;
        active_ref = r.text("data");
        r.finish()?;
    }
    let mut data = Vec::new();
    for s in &raw.data {
        data.push(read_data(s, lattice.as_ref(), &raw)?);
    }
    let active = match active_ref {
        Some((n, line)) => Some(data.iter().position(|d| d.name == n).ok_or(
            SceneError::UnresolvedReference {
                line,
                kind: "data",
                name: n,
            },
        )?),
        None if data.len() <= 1 => (!data.is_empty()).then_some(0),
        None => {
            return Err(invalid(
                raw.scene.map_or(1, |s| s.line),
                "several [data] sections; choose one with [scene] data = <name>",
            ))
        }
    };
    let solver = raw
        .solver
        .map(|s| read_solver(s, lattice.as_ref()))
        .transpose()?;
    let mesh = raw.mesh.map(read_mesh).transpose()?.unwrap_or_default();
    let mut probe = ProbeSettings::default();
    if let Some(s) = raw.probe {
        let mut r = Reader::new(s);
        probe.delta_ext = r.positive("delta_ext")?;
        probe.delta_int = r.positive("delta_int")?;
        r.finish()?;
    }
    let mut sweep = SweepSettings {
        lambdas: vec![1.0],
        use_involution: false,
    };
    if let Some(s) = raw.sweep {
        let mut r = Reader::new(s);
        if let Some((t, l)) = r.text("lambda") {
            sweep.lambdas = parse_real_list(&t, l)?;
            if let Some(bad) = sweep.lambdas.iter().find(|x| **x <= 0.0) {
                return Err(invalid(
                    l,
                    format!("lambda values must be positive, found {bad}"),
                ));
            }
        }
        sweep.use_involution = r.boolean("use_involution")?.unwrap_or(false);
        r.finish()?;
    }
    let mut output_dir = None;
    if let Some(s) = raw.output {
        let mut r = Reader::new(s);
        output_dir = r.text("dir").map(|(d, _)| match origin {
            Some(o) if Path::new(&d).is_relative() => o.join(d),
            _ => PathBuf::from(d),
        });
        r.finish()?;
    }
    let name = name.unwrap_or_else(|| match active.map(|k| &data[k]) {
        Some(d) => d.name.clone(),
        None => "scene".into(),
    });
    Ok(Scene {
        name,
        tol,
        lattice: lattice.map(|l| l.0),
        data,
        active,
        cycle_names: raw.cycles.keys().cloned().collect(),
        involution_names: raw.involutions.keys().cloned().collect(),
        solver,
        mesh,
        probe,
        sweep,
        output_dir,
    })
}

/// Reads and validates a scene file.
pub fn load_scene(path: &Path) -> SResult<Scene> {
    let text = std::fs::read_to_string(path).map_err(|e| SceneError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_scene(&text, path.parent())
}
