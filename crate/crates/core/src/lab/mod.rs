//! Meshes of immersed sample grids, OBJ export, near-pair probing and
//! Lopez-Ros sweeps.

mod obj;
mod probe;
mod sweep;

use std::collections::VecDeque;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::elliptic::Lattice;
use crate::error::{Error, Result};
use crate::quadrature::{integrate_path_vec, PathSpec};
use crate::surface::{position, WeierstrassData, IMMERSE_TOL};

pub use obj::{export_obj, format_sig};
pub use probe::{probe_self_intersection, OffendingPair, ProbeReport, INTRINSIC_FACTOR};
pub use sweep::{lambda_sweep, Bracket, SweepReport, SweepRow, Thresholds, PERIOD_TOL};

/// Default exclusion radius as a fraction of the distance to the nearest other singularity.
pub const EXCLUSION_FRACTION: f64 = 0.1;

/// How the basepoint is joined to the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RoutePolicy {
    /// Straight route with detours to the kept vertex nearest the basepoint.
    #[default]
    Straight,
    /// The basepoint must itself be a kept grid vertex.
    GridVertex,
}

/// A parallelogram grid `origin + s·a + t·b`, `s, t ∈ [0, 1]`, with `n × m` vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSpec {
    pub origin: Complex64,
    pub a: Complex64,
    pub b: Complex64,
    pub n: usize,
    pub m: usize,
    /// Disks `(center, radius)` whose closures are removed.
    pub exclusions: Vec<(Complex64, f64)>,
    /// Only vertices in this closed disk are kept.
    pub clip: Option<(Complex64, f64)>,
    /// Segments no mesh edge may cross; they make multiply connected regions simply connected.
    pub cuts: Vec<(Complex64, Complex64)>,
    pub route: RoutePolicy,
}

impl SamplingSpec {
    /// Axis-aligned rectangle with corners `lo` and `hi`.
    pub fn rectangle(lo: Complex64, hi: Complex64, n: usize, m: usize) -> Self {
        SamplingSpec {
            origin: lo,
            a: Complex64::new(hi.re - lo.re, 0.0),
            b: Complex64::new(0.0, hi.im - lo.im),
            n,
            m,
            exclusions: Vec::new(),
            clip: None,
            cuts: Vec::new(),
            route: RoutePolicy::Straight,
        }
    }

    /// The period parallelogram of `lat` based at `origin`.
    pub fn fundamental(lat: &Lattice, origin: Complex64, n: usize, m: usize) -> Self {
        SamplingSpec {
            a: Complex64::new(1.0, 0.0),
            b: lat.tau(),
            ..SamplingSpec::rectangle(origin, origin, n, m)
        }
    }

    pub fn with_exclusion(mut self, center: Complex64, radius: f64) -> Self {
        self.exclusions.push((center, radius));
        self
    }

    pub fn with_clip(mut self, center: Complex64, radius: f64) -> Self {
        self.clip = Some((center, radius));
        self
    }

    pub fn with_cut(mut self, from: Complex64, to: Complex64) -> Self {
        self.cuts.push((from, to));
        self
    }

    pub fn with_route(mut self, route: RoutePolicy) -> Self {
        self.route = route;
        self
    }

    /// Adds default exclusion disks around every puncture of `data` (with lattice
    /// translates) near the parallelogram.
    pub fn exclude_singularities(mut self, data: &WeierstrassData) -> Self {
        let corners = [
            self.origin,
            self.origin + self.a,
            self.origin + self.b,
            self.origin + self.a + self.b,
        ];
        let center = corners.iter().sum::<Complex64>() / 4.0;
        let diam = corners
            .iter()
            .map(|c| (c - center).norm())
            .fold(0.0, f64::max)
            * 2.0;
        let near = data.singularities_within(center, diam + 1.0);
        for (k, &s) in near.iter().enumerate() {
            if (s - center).norm() > diam / 2.0 + 0.5 {
                continue;
            }
            let nearest = near
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, o)| (o - s).norm())
                .fold(diam, f64::min);
            self.exclusions.push((s, EXCLUSION_FRACTION * nearest));
        }
        self
    }

    pub fn vertex(&self, i: usize, j: usize) -> Complex64 {
        let s = if self.n > 1 {
            i as f64 / (self.n - 1) as f64
        } else {
            0.0
        };
        let t = if self.m > 1 {
            j as f64 / (self.m - 1) as f64
        } else {
            0.0
        };
        self.origin + self.a * s + self.b * t
    }

    fn kept(&self, u: Complex64) -> bool {
        self.exclusions.iter().all(|(c, r)| (u - c).norm() > *r)
            && self.clip.is_none_or(|(c, r)| (u - c).norm() <= r)
    }

    fn segment_ok(&self, p: Complex64, q: Complex64) -> bool {
        self.exclusions
            .iter()
            .all(|(c, r)| segment_distance(p, q, *c) > *r)
            && self.cuts.iter().all(|&(a, b)| !segments_meet(p, q, a, b))
    }

    /// Kept vertices, admissible edges and cells; errors when the kept set is
    /// empty or splits into several components.
    pub fn layout(&self) -> Result<Layout> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidSampling(
                "grid resolution must be at least 1x1".into(),
            ));
        }
        if self
            .exclusions
            .iter()
            .any(|(c, r)| !(r.is_finite() && *r > 0.0 && c.re.is_finite() && c.im.is_finite()))
        {
            return Err(Error::InvalidSampling(
                "exclusion radii must be positive and finite".into(),
            ));
        }
        if let Some((_, r)) = self.clip {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::InvalidSampling(
                    "clip radius must be positive and finite".into(),
                ));
            }
        }
        let area = (self.a.conj() * self.b).im;
        if (self.n > 1 && self.a.norm() == 0.0)
            || (self.m > 1 && self.b.norm() == 0.0)
            || (self.n > 1 && self.m > 1 && area.abs() < 1e-14)
        {
            return Err(Error::InvalidSampling(
                "degenerate sampling parallelogram".into(),
            ));
        }
        let (n, m) = (self.n, self.m);
        let mut index = vec![usize::MAX; n * m];
        let mut points = Vec::new();
        let mut grid = Vec::new();
        for j in 0..m {
            for i in 0..n {
                let u = self.vertex(i, j);
                if self.kept(u) {
                    index[j * n + i] = points.len();
                    points.push(u);
                    grid.push((i, j));
                }
            }
        }
        if points.is_empty() {
            return Err(Error::InvalidSampling(
                "no vertex survives the exclusions".into(),
            ));
        }
        let at = |i: usize, j: usize| index[j * n + i];
        let mut edges = Vec::new();
        let mut cells = Vec::new();
        for j in 0..m {
            for i in 0..n {
                let v = at(i, j);
                if v == usize::MAX {
                    continue;
                }
                for (di, dj) in [(1, 0), (0, 1)] {
                    if i + di < n && j + dj < m {
                        let w = at(i + di, j + dj);
                        if w != usize::MAX && self.segment_ok(points[v], points[w]) {
                            edges.push((v, w));
                        }
                    }
                }
            }
        }
        let grid_edges = edges.len();
        for j in 0..m.saturating_sub(1) {
            for i in 0..n.saturating_sub(1) {
                let q = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
                if q.contains(&usize::MAX) {
                    continue;
                }
                let sides = [(q[0], q[1]), (q[1], q[2]), (q[3], q[2]), (q[0], q[3])];
                let ok = sides
                    .iter()
                    .all(|&(x, y)| self.segment_ok(points[x], points[y]))
                    && self.segment_ok(points[q[0]], points[q[2]])
                    && self
                        .exclusions
                        .iter()
                        .all(|(c, _)| !inside_quad(&q.map(|k| points[k]), *c))
                    && self.cuts.iter().all(|&(a, b)| {
                        let quad = q.map(|k| points[k]);
                        !inside_quad(&quad, a) && !inside_quad(&quad, b)
                    });
                if ok {
                    edges.push((q[0], q[2]));
                    cells.push(q);
                }
            }
        }
        let layout = Layout {
            points,
            grid,
            edges,
            grid_edges,
            cells,
        };
        if layout.components(layout.grid_edges) > 1 {
            return Err(Error::DisconnectedSampling);
        }
        Ok(layout)
    }
}

/// The combinatorics of a sampling grid after exclusions.
#[derive(Debug, Clone)]
pub struct Layout {
    pub points: Vec<Complex64>,
    pub grid: Vec<(usize, usize)>,
    /// Grid edges first, then one diagonal per cell.
    pub edges: Vec<(usize, usize)>,
    pub grid_edges: usize,
    /// Counter-clockwise quads `(i,j), (i+1,j), (i+1,j+1), (i,j+1)`.
    pub cells: Vec<[usize; 4]>,
}

impl Layout {
    fn components(&self, upto: usize) -> usize {
        let mut adj = vec![Vec::new(); self.points.len()];
        for &(a, b) in &self.edges[..upto] {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.points.len()];
        let mut count = 0;
        for s in 0..self.points.len() {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            let mut stack = vec![s];
            while let Some(v) = stack.pop() {
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        count
    }
}

fn segment_distance(p: Complex64, q: Complex64, c: Complex64) -> f64 {
    let d = q - p;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (c - p).norm();
    }
    let t = (((c - p) * d.conj()).re / len2).clamp(0.0, 1.0);
    (p + d * t - c).norm()
}

/// Whether the closed segments `pq` and `ab` share a point.
fn segments_meet(p: Complex64, q: Complex64, a: Complex64, b: Complex64) -> bool {
    let orient = |x: Complex64, y: Complex64, z: Complex64| ((y - x).conj() * (z - x)).im;
    let (d1, d2) = (orient(a, b, p), orient(a, b, q));
    let (d3, d4) = (orient(p, q, a), orient(p, q, b));
    if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
        return true;
    }
    let on = |x: Complex64, y: Complex64, z: Complex64, d: f64| {
        d == 0.0 && segment_distance(x, y, z) == 0.0
    };
    on(a, b, p, d1) || on(a, b, q, d2) || on(p, q, a, d3) || on(p, q, b, d4)
}

fn inside_quad(q: &[Complex64; 4], c: Complex64) -> bool {
    let side = |a: Complex64, b: Complex64| ((b - a).conj() * (c - a)).im;
    let s: Vec<f64> = (0..4).map(|k| side(q[k], q[(k + 1) % 4])).collect();
    s.iter().all(|v| *v > 0.0) || s.iter().all(|v| *v < 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshVertex {
    pub u: Complex64,
    pub grid: (usize, usize),
    pub position: [f64; 3],
    pub normal: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshEdge {
    pub a: usize,
    pub b: usize,
    /// Length of the immersed edge curve.
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    pub vertices: Vec<MeshVertex>,
    pub faces: Vec<[usize; 3]>,
    pub edges: Vec<MeshEdge>,
    /// Largest mismatch between cumulative integration and a direct edge integral
    /// over edges outside the spanning tree.
    pub closure_defect: f64,
    /// Vertex joined to the basepoint.
    pub root: usize,
}

impl SurfaceMesh {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn max_edge_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).fold(0.0, f64::max)
    }

    pub fn bounding_box_diagonal(&self) -> f64 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v.position[k]);
                hi[k] = hi[k].max(v.position[k]);
            }
        }
        if self.vertices.is_empty() {
            return 0.0;
        }
        (0..3).map(|k| (hi[k] - lo[k]).powi(2)).sum::<f64>().sqrt()
    }

    /// Weighted adjacency lists over the edge graph.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for e in &self.edges {
            adj[e.a].push((e.b, e.length));
            adj[e.b].push((e.a, e.length));
        }
        adj
    }

    /// Index of the vertex sampled at grid position `(i, j)`.
    pub fn find_grid(&self, i: usize, j: usize) -> Option<usize> {
        self.vertices.iter().position(|v| v.grid == (i, j))
    }
}

pub(crate) fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Immerses the sample grid: the root vertex along a route from the basepoint,
/// every other vertex by accumulating one edge integral along a spanning tree.
pub fn build_mesh(data: &WeierstrassData, spec: &SamplingSpec) -> Result<SurfaceMesh> {
    let layout = spec.layout()?;
    let pts = &layout.points;
    let bp = data.basepoint();
    let root = match spec.route {
        RoutePolicy::GridVertex => pts
            .iter()
            .position(|p| (p - bp).norm() < 1e-12)
            .ok_or_else(|| Error::InvalidSampling("basepoint is not a kept grid vertex".into()))?,
        RoutePolicy::Straight => {
            let mut best = 0;
            for (k, p) in pts.iter().enumerate() {
                if (p - bp).norm() < (pts[best] - bp).norm() {
                    best = k;
                }
            }
            best
        }
    };
    let root_pos = if (pts[root] - bp).norm() < 1e-12 {
        [0.0; 3]
    } else {
        data.immerse(pts[root], &data.route_to(pts[root])?)?
    };

    let scale = data.scale();
    let increments: Vec<([f64; 3], f64)> = layout
        .edges
        .par_iter()
        .map(|&(a, b)| {
            let (p, q) = (pts[a], pts[b]);
            let v = integrate_path_vec(&PathSpec::line(p, q), IMMERSE_TOL / scale, |z| {
                let [x, y, h] = data.integrands(z)?;
                Ok([x, y, h, Complex64::new(0.5 * (x.norm() + y.norm()), 0.0)])
            })?;
            let d = q - p;
            let length = (v[3] * d.norm() / d).re * scale;
            Ok((position([v[0] * scale, v[1] * scale, v[2] * scale]), length))
        })
        .collect::<Result<_>>()?;

    let mut adj = vec![Vec::new(); pts.len()];
    for (k, &(a, b)) in layout.edges.iter().enumerate() {
        adj[a].push((b, k, 1.0));
        adj[b].push((a, k, -1.0));
    }
    let mut pos: Vec<Option<[f64; 3]>> = vec![None; pts.len()];
    let mut tree = vec![false; layout.edges.len()];
    pos[root] = Some(root_pos);
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        let pv = pos[v].expect("queued vertices are placed");
        for &(w, k, sign) in &adj[v] {
            if pos[w].is_none() {
                let inc = increments[k].0;
                pos[w] = Some([
                    pv[0] + sign * inc[0],
                    pv[1] + sign * inc[1],
                    pv[2] + sign * inc[2],
                ]);
                tree[k] = true;
                queue.push_back(w);
            }
        }
    }
    let pos: Vec<[f64; 3]> = pos
        .into_iter()
        .map(|p| p.ok_or(Error::DisconnectedSampling))
        .collect::<Result<_>>()?;
    let closure_defect = layout
        .edges
        .iter()
        .enumerate()
        .filter(|(k, _)| !tree[*k])
        .map(|(k, &(a, b))| {
            let inc = increments[k].0;
            let direct = [pos[a][0] + inc[0], pos[a][1] + inc[1], pos[a][2] + inc[2]];
            distance(&direct, &pos[b])
        })
        .fold(0.0, f64::max);

    let normals: Vec<[f64; 3]> = pts
        .par_iter()
        .map(|&u| data.gauss_normal(u))
        .collect::<Result<_>>()?;
    let vertices = (0..pts.len())
        .map(|k| MeshVertex {
            u: pts[k],
            grid: layout.grid[k],
            position: pos[k],
            normal: normals[k],
        })
        .collect();
    let faces = layout
        .cells
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    let edges = layout
        .edges
        .iter()
        .zip(&increments)
        .map(|(&(a, b), inc)| MeshEdge {
            a,
            b,
            length: inc.1,
        })
        .collect();
    Ok(SurfaceMesh {
        vertices,
        faces,
        edges,
        closure_defect,
        root,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expr, parse_form, Domain};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub(crate) fn helicoid() -> WeierstrassData {
        let d = Domain::Plane;
        WeierstrassData::new(
            parse_expr("exp(i*u)", &d).unwrap(),
            parse_form("1 du", &d).unwrap(),
            c(0.0, 0.0),
            "helicoid",
        )
        .unwrap()
    }

    fn catenoid() -> WeierstrassData {
        let d = Domain::punctured_plane(vec![c(0.0, 0.0)]).unwrap();
        WeierstrassData::new(
            parse_expr("u", &d).unwrap(),
            parse_form("u^-1 du", &d).unwrap(),
            c(1.0, 0.0),
            "catenoid",
        )
        .unwrap()
    }

    #[test]
    fn helicoid_grid_matches_closed_form() {
        let spec = SamplingSpec::rectangle(c(-PI, -1.0), c(PI, 1.0), 41, 41);
        let mesh = build_mesh(&helicoid(), &spec).unwrap();
        let v = &mesh.vertices[mesh.find_grid(30, 40).unwrap()];
        assert!((v.u - c(PI / 2.0, 1.0)).norm() < 1e-14);
        let want = [1f64.sinh(), 0.0, PI / 2.0];
        assert!(distance(&v.position, &want) < 1e-8, "{:?}", v.position);
        for v in &mesh.vertices {
            let n = v.normal;
            assert!(((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0).abs() < 1e-10);
        }
        for e in &mesh.edges {
            let d = distance(&mesh.vertices[e.a].position, &mesh.vertices[e.b].position);
            assert!(e.length >= d - 1e-12);
        }
        assert!(mesh.closure_defect < 1e-10);
        assert_eq!(mesh.faces.len(), 2 * 40 * 40);
    }

    #[test]
    fn single_vertex_grid() {
        let spec = SamplingSpec::rectangle(c(0.0, 0.0), c(1.0, 1.0), 1, 1);
        let mesh = build_mesh(&helicoid(), &spec).unwrap();
        assert_eq!(mesh.vertices.len(), 1);
        assert!(mesh.faces.is_empty());
        assert_eq!(mesh.vertices[0].position, [0.0; 3]);
    }

    #[test]
    fn catenoid_annulus_closes_around_the_hole() {
        let spec = SamplingSpec::rectangle(c(-2.0, -2.0), c(2.0, 2.0), 33, 33)
            .with_exclusion(c(0.0, 0.0), 0.5)
            .with_clip(c(0.0, 0.0), 2.0);
        let mesh = build_mesh(&catenoid(), &spec).unwrap();
        assert!(mesh.closure_defect < 1e-8, "{}", mesh.closure_defect);
        for v in &mesh.vertices {
            let r = v.u.norm();
            assert!((v.position[2] - r.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn cut_removes_the_screw_defect() {
        let d = Domain::punctured_plane(vec![c(0.0, 0.0)]).unwrap();
        let screw = WeierstrassData::new(
            parse_expr("u", &d).unwrap(),
            parse_form("i/u du", &d).unwrap(),
            c(1.0, 0.0),
            "s",
        )
        .unwrap();
        let spec = SamplingSpec::rectangle(c(-2.0, -2.0), c(2.0, 2.0), 33, 33)
            .with_exclusion(c(0.0, 0.0), 0.5)
            .with_clip(c(0.0, 0.0), 2.0);
        let open = build_mesh(&screw, &spec).unwrap();
        assert!(
            (open.closure_defect - 2.0 * PI).abs() < 1e-6,
            "{}",
            open.closure_defect
        );
        let cut = build_mesh(&screw, &spec.with_cut(c(0.0, 0.0), c(-2.5, 0.1))).unwrap();
        assert!(cut.closure_defect < 1e-8, "{}", cut.closure_defect);
        assert!(cut.edges.len() < open.edges.len());
    }

    #[test]
    fn disconnecting_exclusions_are_rejected() {
        let spec = SamplingSpec::rectangle(c(-3.0, -1.0), c(3.0, 1.0), 31, 11)
            .with_exclusion(c(0.0, 0.0), 1.05);
        assert!(matches!(spec.layout(), Err(Error::DisconnectedSampling)));
        let spec = SamplingSpec::rectangle(c(-1.0, -1.0), c(1.0, 1.0), 11, 11)
            .with_exclusion(c(0.0, 0.0), 0.3);
        let lay = spec.layout().unwrap();
        assert!(lay.points.iter().all(|p| p.norm() > 0.3));
    }

    #[test]
    fn default_exclusions_cover_punctures() {
        let spec = SamplingSpec::rectangle(c(-2.0, -2.0), c(2.0, 2.0), 9, 9)
            .exclude_singularities(&catenoid());
        assert_eq!(spec.exclusions.len(), 1);
        assert!(spec.exclusions[0].1 > 0.0);
        assert!(build_mesh(&catenoid(), &spec).is_ok());
    }

    #[test]
    fn grid_vertex_policy_requires_the_basepoint_on_the_grid() {
        let spec = SamplingSpec::rectangle(c(0.1, 0.1), c(1.0, 1.0), 4, 4)
            .with_route(RoutePolicy::GridVertex);
        assert!(matches!(
            build_mesh(&helicoid(), &spec),
            Err(Error::InvalidSampling(_))
        ));
        let spec = SamplingSpec::rectangle(c(0.0, 0.0), c(1.0, 1.0), 4, 4)
            .with_route(RoutePolicy::GridVertex);
        assert!(build_mesh(&helicoid(), &spec).is_ok());
    }
}
