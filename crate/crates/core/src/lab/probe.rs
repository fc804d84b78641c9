use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

use super::{distance, SurfaceMesh};

/// Graph distances overestimate geodesic ones; the intrinsic threshold is
/// multiplied by this before pairs are reported.
pub const INTRINSIC_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub struct OffendingPair {
    pub a: usize,
    pub b: usize,
    pub ua: Complex64,
    pub ub: Complex64,
    pub extrinsic: f64,
    /// Edge-graph distance; infinite when the vertices lie in different components.
    pub intrinsic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    /// Sorted by extrinsic distance, then by vertex indices.
    pub pairs: Vec<OffendingPair>,
    pub delta_ext: f64,
    pub delta_int: f64,
    /// Candidates closer than `delta_ext` in space, before the intrinsic filter.
    pub candidates: usize,
    pub embedded: bool,
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra from `src` until every target is settled; unreachable targets get infinity.
fn graph_distances(adj: &[Vec<(usize, f64)>], src: usize, targets: &[usize]) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut done = vec![false; adj.len()];
    let mut heap = BinaryHeap::from([Item(0.0, src)]);
    dist[src] = 0.0;
    let mut remaining = targets.len();
    while let Some(Item(d, v)) = heap.pop() {
        if done[v] {
            continue;
        }
        done[v] = true;
        if targets.contains(&v) {
            remaining -= 1;
            if remaining == 0 {
                break;
            }
        }
        for &(w, len) in &adj[v] {
            let nd = d + len;
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(Item(nd, w));
            }
        }
    }
    targets
        .iter()
        .map(|&t| if done[t] { dist[t] } else { f64::INFINITY })
        .collect()
}

/// Vertex pairs closer than `delta_ext` in space but farther than
/// `INTRINSIC_FACTOR · delta_int` along the mesh.
pub fn probe_self_intersection(
    mesh: &SurfaceMesh,
    delta_ext: f64,
    delta_int: f64,
) -> Result<ProbeReport> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    if !(delta_ext > 0.0 && delta_ext.is_finite() && delta_int.is_finite()) {
        return Err(Error::InvalidSampling(
            "probe thresholds must be positive and finite".into(),
        ));
    }
    let limit = 2.0 * mesh.max_edge_length();
    if delta_int <= limit {
        return Err(Error::ThresholdOrder { delta_int, limit });
    }
    let cell = |p: &[f64; 3]| p.map(|x| (x / delta_ext).floor() as i64);
    let mut hash: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (k, v) in mesh.vertices.iter().enumerate() {
        hash.entry(cell(&v.position)).or_default().push(k);
    }
    let near: Vec<Vec<usize>> = mesh
        .vertices
        .par_iter()
        .enumerate()
        .map(|(a, v)| {
            let c = cell(&v.position);
            let mut out = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(list) = hash.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                            out.extend(list.iter().copied().filter(|&b| {
                                b > a
                                    && distance(&v.position, &mesh.vertices[b].position) < delta_ext
                            }));
                        }
                    }
                }
            }
            out.sort_unstable();
            out
        })
        .collect();
    let candidates = near.iter().map(Vec::len).sum();
    let adj = mesh.adjacency();
    let threshold = INTRINSIC_FACTOR * delta_int;
    let mut pairs: Vec<OffendingPair> = near
        .par_iter()
        .enumerate()
        .filter(|(_, t)| !t.is_empty())
        .flat_map_iter(|(a, targets)| {
            let d = graph_distances(&adj, a, targets);
            targets
                .iter()
                .zip(d)
                .filter(|(_, d)| *d > threshold)
                .map(|(&b, d)| OffendingPair {
                    a,
                    b,
                    ua: mesh.vertices[a].u,
                    ub: mesh.vertices[b].u,
                    extrinsic: distance(&mesh.vertices[a].position, &mesh.vertices[b].position),
                    intrinsic: d,
                })
                .collect::<Vec<_>>()
        })
        .collect();
    pairs.sort_by(|x, y| {
        x.extrinsic
            .total_cmp(&y.extrinsic)
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
    });
    let embedded = pairs.is_empty();
    Ok(ProbeReport {
        pairs,
        delta_ext,
        delta_int,
        candidates,
        embedded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expr, parse_form, Domain};
    use crate::lab::{build_mesh, SamplingSpec};
    use crate::surface::WeierstrassData;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn data(g: &str, dh: &str) -> WeierstrassData {
        let d = Domain::Plane;
        WeierstrassData::new(
            parse_expr(g, &d).unwrap(),
            parse_form(dh, &d).unwrap(),
            c(0.0, 0.0),
            g,
        )
        .unwrap()
    }

    #[test]
    fn helicoid_is_embedded() {
        let mesh = build_mesh(
            &data("exp(i*u)", "1 du"),
            &SamplingSpec::rectangle(c(-PI, -1.0), c(PI, 1.0), 40, 40),
        )
        .unwrap();
        let r = probe_self_intersection(&mesh, 0.05, 1.0).unwrap();
        assert!(r.embedded && r.pairs.is_empty());
    }

    #[test]
    fn vertical_plane_is_embedded() {
        let mesh = build_mesh(
            &data("1", "1 du"),
            &SamplingSpec::rectangle(c(-1.0, -1.0), c(1.0, 1.0), 21, 21),
        )
        .unwrap();
        assert!(probe_self_intersection(&mesh, 0.02, 0.5).unwrap().embedded);
    }

    #[test]
    fn enneper_beyond_the_critical_radius_is_not() {
        let spec =
            SamplingSpec::rectangle(c(-2.0, -2.0), c(2.0, 2.0), 61, 61).with_clip(c(0.0, 0.0), 2.0);
        let mesh = build_mesh(&data("u", "u du"), &spec).unwrap();
        let r = probe_self_intersection(&mesh, 0.05, 1.0).unwrap();
        assert!(!r.embedded);
        for p in &r.pairs {
            assert!(p.extrinsic < r.delta_ext && p.intrinsic > r.delta_int);
        }
        assert!(r.pairs.windows(2).all(|w| w[0].extrinsic <= w[1].extrinsic));
    }

    #[test]
    fn threshold_order_is_enforced() {
        let mesh = build_mesh(
            &data("exp(i*u)", "1 du"),
            &SamplingSpec::rectangle(c(-1.0, -1.0), c(1.0, 1.0), 5, 5),
        )
        .unwrap();
        assert!(matches!(
            probe_self_intersection(&mesh, 0.05, 0.1),
            Err(Error::ThresholdOrder { .. })
        ));
    }
}
