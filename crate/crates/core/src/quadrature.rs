//! Parametrized paths in the complex plane and adaptive contour quadrature.
//!
//! Every path is a chain of line segments and circular arcs. Integration runs
//! a globally adaptive Gauss-Kronrod 7/15 scheme over the segment parameters:
//! the panel with the largest error estimate is bisected until the summed
//! estimate drops below the requested absolute tolerance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Endpoint mismatch tolerated between consecutive segments.
pub const JOIN_TOL: f64 = 1e-12;

/// Panel budget of a single integration.
pub const MAX_PANELS: usize = 1 << 20;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One piece of a path, parametrized over `t in [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Line {
        from: Complex64,
        to: Complex64,
    },
    /// `center + radius * exp(i theta)` for `theta` running from `start` to `end`.
    Arc {
        center: Complex64,
        radius: f64,
        start: f64,
        end: f64,
    },
}

impl Segment {
    pub fn point(&self, t: f64) -> Complex64 {
        match *self {
            Segment::Line { from, to } => from + (to - from) * t,
            Segment::Arc {
                center,
                radius,
                start,
                end,
            } => center + Complex64::from_polar(radius, start + (end - start) * t),
        }
    }

    /// `dz/dt`.
    pub fn velocity(&self, t: f64) -> Complex64 {
        match *self {
            Segment::Line { from, to } => to - from,
            Segment::Arc {
                radius, start, end, ..
            } => {
                let theta = start + (end - start) * t;
                Complex64::i() * Complex64::from_polar(radius, theta) * (end - start)
            }
        }
    }

    pub fn start(&self) -> Complex64 {
        self.point(0.0)
    }

    pub fn end(&self) -> Complex64 {
        self.point(1.0)
    }

    pub fn length(&self) -> f64 {
        match *self {
            Segment::Line { from, to } => (to - from).norm(),
            Segment::Arc {
                radius, start, end, ..
            } => radius * (end - start).abs(),
        }
    }

    pub fn reversed(&self) -> Segment {
        match *self {
            Segment::Line { from, to } => Segment::Line { from: to, to: from },
            Segment::Arc {
                center,
                radius,
                start,
                end,
            } => Segment::Arc {
                center,
                radius,
                start: end,
                end: start,
            },
        }
    }

    /// Image under `z -> alpha z + beta`.
    pub fn affine(&self, alpha: Complex64, beta: Complex64) -> Segment {
        match *self {
            Segment::Line { from, to } => Segment::Line {
                from: alpha * from + beta,
                to: alpha * to + beta,
            },
            Segment::Arc {
                center,
                radius,
                start,
                end,
            } => {
                let turn = alpha.arg();
                Segment::Arc {
                    center: alpha * center + beta,
                    radius: radius * alpha.norm(),
                    start: start + turn,
                    end: end + turn,
                }
            }
        }
    }

    /// Distance from `p` to the trace of the segment.
    pub fn distance_to(&self, p: Complex64) -> f64 {
        match *self {
            Segment::Line { from, to } => {
                let d = to - from;
                let len2 = d.norm_sqr();
                if len2 == 0.0 {
                    return (p - from).norm();
                }
                let t = ((p - from) * d.conj()).re / len2;
                (p - self.point(t.clamp(0.0, 1.0))).norm()
            }
            Segment::Arc {
                center,
                radius,
                start,
                end,
            } => {
                let rel = p - center;
                let (lo, hi) = if start <= end {
                    (start, end)
                } else {
                    (end, start)
                };
                if hi - lo >= 2.0 * PI || rel.norm() == 0.0 {
                    return (rel.norm() - radius).abs();
                }
                let mut theta = rel.arg();
                while theta < lo {
                    theta += 2.0 * PI;
                }
                while theta > lo + 2.0 * PI {
                    theta -= 2.0 * PI;
                }
                if theta <= hi {
                    (rel.norm() - radius).abs()
                } else {
                    (p - self.start()).norm().min((p - self.end()).norm())
                }
            }
        }
    }

    fn initial_pieces(&self) -> usize {
        match *self {
            Segment::Line { .. } => 2,
            Segment::Arc { start, end, .. } => {
                ((end - start).abs() / (PI / 4.0)).ceil().max(2.0) as usize
            }
        }
    }
}

/// How the end of a path relates to its start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Closure {
    Open,
    /// End coincides with start.
    Closed,
    /// End equals start plus a lattice vector: closed on the quotient torus.
    Period(Complex64),
}

/// A chain of segments with a closure marker.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    segments: Vec<Segment>,
    closure: Closure,
}

impl PathSpec {
    pub fn new(segments: Vec<Segment>, closure: Closure) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidPath("path has no segments".into()));
        }
        for s in &segments {
            let ok = match *s {
                Segment::Line { from, to } => from.is_finite() && to.is_finite(),
                Segment::Arc {
                    center,
                    radius,
                    start,
                    end,
                } => {
                    center.is_finite()
                        && radius.is_finite()
                        && radius > 0.0
                        && start.is_finite()
                        && end.is_finite()
                }
            };
            if !ok {
                return Err(Error::InvalidPath(format!("degenerate segment {s:?}")));
            }
        }
        for (i, pair) in segments.windows(2).enumerate() {
            let gap = (pair[0].end() - pair[1].start()).norm();
            if gap > JOIN_TOL {
                return Err(Error::InvalidPath(format!(
                    "segments {i} and {} do not join (gap {gap:e})",
                    i + 1
                )));
            }
        }
        let start = segments[0].start();
        let end = segments[segments.len() - 1].end();
        match closure {
            Closure::Open => {}
            Closure::Closed => {
                if (end - start).norm() > JOIN_TOL {
                    return Err(Error::InvalidPath(
                        "closed path does not return to its start".into(),
                    ));
                }
            }
            Closure::Period(w) => {
                if (end - start - w).norm() > JOIN_TOL {
                    return Err(Error::InvalidPath(format!("path end is not start + {w}")));
                }
            }
        }
        Ok(PathSpec { segments, closure })
    }

    pub fn line(from: Complex64, to: Complex64) -> Self {
        PathSpec {
            segments: vec![Segment::Line { from, to }],
            closure: Closure::Open,
        }
    }

    /// Positively oriented full circle starting at `center + radius`.
    pub fn circle(center: Complex64, radius: f64) -> Result<Self> {
        Self::new(
            vec![Segment::Arc {
                center,
                radius,
                start: 0.0,
                end: 2.0 * PI,
            }],
            Closure::Closed,
        )
    }

    pub fn polyline(points: &[Complex64], closure: Closure) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidPath(
                "polyline needs at least two points".into(),
            ));
        }
        let segments = points
            .windows(2)
            .map(|w| Segment::Line {
                from: w[0],
                to: w[1],
            })
            .collect();
        Self::new(segments, closure)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn closure(&self) -> Closure {
        self.closure
    }

    pub fn is_closed(&self) -> bool {
        !matches!(self.closure, Closure::Open)
    }

    pub fn start(&self) -> Complex64 {
        self.segments[0].start()
    }

    pub fn end(&self) -> Complex64 {
        self.segments[self.segments.len() - 1].end()
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    pub fn reversed(&self) -> PathSpec {
        let closure = match self.closure {
            Closure::Period(w) => Closure::Period(-w),
            c => c,
        };
        PathSpec {
            segments: self.segments.iter().rev().map(Segment::reversed).collect(),
            closure,
        }
    }

    /// Image under `z -> alpha z + beta`.
    pub fn affine(&self, alpha: Complex64, beta: Complex64) -> PathSpec {
        let closure = match self.closure {
            Closure::Period(w) => Closure::Period(alpha * w),
            c => c,
        };
        PathSpec {
            segments: self
                .segments
                .iter()
                .map(|s| s.affine(alpha, beta))
                .collect(),
            closure,
        }
    }

    /// Concatenation; the result is open.
    pub fn then(&self, next: &PathSpec) -> Result<PathSpec> {
        let mut segments = self.segments.clone();
        segments.extend_from_slice(&next.segments);
        PathSpec::new(segments, Closure::Open)
    }

    /// Same trace traversed `times` times in a row.
    pub fn repeated(&self, times: usize) -> Result<PathSpec> {
        if times == 0 || !matches!(self.closure, Closure::Closed) {
            return Err(Error::InvalidPath(
                "only closed paths can be repeated".into(),
            ));
        }
        let mut segments = Vec::with_capacity(self.segments.len() * times);
        for _ in 0..times {
            segments.extend_from_slice(&self.segments);
        }
        PathSpec::new(segments, Closure::Closed)
    }

    pub fn distance_to(&self, p: Complex64) -> f64 {
        self.segments
            .iter()
            .map(|s| s.distance_to(p))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel<const N: usize> {
    segment: usize,
    a: f64,
    b: f64,
    value: [Complex64; N],
    error: f64,
    floor: f64,
}

struct Ranked {
    error: f64,
    index: usize,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.index.cmp(&self.index))
    }
}

fn kronrod_panel<const N: usize, F>(
    seg: &Segment,
    seg_index: usize,
    a: f64,
    b: f64,
    f: &mut F,
) -> Result<Panel<N>>
where
    F: FnMut(Complex64, Complex64) -> Result<[Complex64; N]>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut samples = [[Complex64::new(0.0, 0.0); N]; 15];
    let mut eval = |t: f64| -> Result<[Complex64; N]> {
        let z = seg.point(t);
        let v = f(z, seg.velocity(t))?;
        if v.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFiniteSample(z));
        }
        Ok(v)
    };
    samples[7] = eval(center)?;
    for j in 0..7 {
        samples[j] = eval(center - half * XGK[j])?;
        samples[14 - j] = eval(center + half * XGK[j])?;
    }
    let mut value = [Complex64::new(0.0, 0.0); N];
    let mut error: f64 = 0.0;
    let mut floor: f64 = 0.0;
    for k in 0..N {
        let mut kron = samples[7][k] * WGK[7];
        let mut gauss = samples[7][k] * WG[3];
        let mut resabs = samples[7][k].norm() * WGK[7];
        for j in 0..7 {
            let pair = samples[j][k] + samples[14 - j][k];
            kron += pair * WGK[j];
            resabs += (samples[j][k].norm() + samples[14 - j][k].norm()) * WGK[j];
            if j % 2 == 1 {
                gauss += pair * WG[j / 2];
            }
        }
        let mean = kron * 0.5;
        let mut resasc = WGK[7] * (samples[7][k] - mean).norm();
        for j in 0..7 {
            resasc += WGK[j] * ((samples[j][k] - mean).norm() + (samples[14 - j][k] - mean).norm());
        }
        let scale = half.abs();
        let mut err = ((kron - gauss) * half).norm();
        let resasc = resasc * scale;
        let resabs = resabs * scale;
        if resasc != 0.0 && err != 0.0 {
            err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
        }
        if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            err = err.max(50.0 * f64::EPSILON * resabs);
            floor = floor.max(50.0 * f64::EPSILON * resabs);
        }
        value[k] = kron * half;
        error = error.max(err);
    }
    Ok(Panel {
        segment: seg_index,
        a,
        b,
        value,
        error,
        floor,
    })
}

/// Integrates `f(z, dz/dt)` over the segment parameters of `path`, i.e.
/// `sum over segments of the integral of f(z(t), z'(t)) dt for t in [0, 1]`.
///
/// The integrand sees the velocity so that both `f(z) dz` and arc-length
/// integrals `m(z) |dz|` go through the same adaptive driver. The error
/// estimate is the maximum over the `N` components.
pub fn integrate_parametric<const N: usize, F>(
    path: &PathSpec,
    tol: f64,
    mut f: F,
) -> Result<[Complex64; N]>
where
    F: FnMut(Complex64, Complex64) -> Result<[Complex64; N]>,
{
    if !(tol > 0.0) {
        return Err(Error::InvalidPath(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let mut panels: Vec<Panel<N>> = Vec::new();
    for (si, seg) in path.segments.iter().enumerate() {
        let pieces = seg.initial_pieces();
        for p in 0..pieces {
            let a = p as f64 / pieces as f64;
            let b = (p + 1) as f64 / pieces as f64;
            panels.push(kronrod_panel(seg, si, a, b, &mut f)?);
        }
    }
    let mut heap: BinaryHeap<Ranked> = panels
        .iter()
        .enumerate()
        .map(|(index, p)| Ranked {
            error: p.error,
            index,
        })
        .collect();
    let mut total: f64 = panels.iter().map(|p| p.error).sum();
    let mut floor: f64 = panels.iter().map(|p| p.floor).sum();
    // Below twice the rounding floor further bisection cannot help.
    while total > tol && total > 2.0 * floor {
        if panels.len() >= MAX_PANELS {
            return Err(Error::NoConvergence {
                estimate: total,
                panels: panels.len(),
            });
        }
        let Some(worst) = heap.pop() else { break };
        let old = panels[worst.index];
        let seg = &path.segments[old.segment];
        let mid = 0.5 * (old.a + old.b);
        if mid <= old.a || mid >= old.b {
            return Err(Error::NoConvergence {
                estimate: total,
                panels: panels.len(),
            });
        }
        let left = kronrod_panel(seg, old.segment, old.a, mid, &mut f)?;
        let right = kronrod_panel(seg, old.segment, mid, old.b, &mut f)?;
        total += left.error + right.error - old.error;
        floor += left.floor + right.floor - old.floor;
        panels[worst.index] = left;
        heap.push(Ranked {
            error: left.error,
            index: worst.index,
        });
        heap.push(Ranked {
            error: right.error,
            index: panels.len(),
        });
        panels.push(right);
        // Re-sum periodically so cancellation drift in `total` cannot stall the loop.
        if panels.len().is_multiple_of(256) {
            total = panels.iter().map(|p| p.error).sum();
            floor = panels.iter().map(|p| p.floor).sum();
        }
    }
    let mut acc = [Complex64::new(0.0, 0.0); N];
    for p in &panels {
        for (a, v) in acc.iter_mut().zip(&p.value) {
            *a += v;
        }
    }
    Ok(acc)
}

/// `integral over path of f(z) dz` for a vector of integrands sharing one
/// adaptive panel set.
pub fn integrate_path_vec<const N: usize, F>(
    path: &PathSpec,
    tol: f64,
    mut f: F,
) -> Result<[Complex64; N]>
where
    F: FnMut(Complex64) -> Result<[Complex64; N]>,
{
    integrate_parametric(path, tol, |z, dz| {
        let mut v = f(z)?;
        for c in v.iter_mut() {
            *c *= dz;
        }
        Ok(v)
    })
}

/// `integral over path of f(z) dz` with absolute error at most `tol`, or at
/// the rounding floor of the sum when that is larger (estimated).
pub fn integrate_path<F>(f: F, path: &PathSpec, tol: f64) -> Result<Complex64>
where
    F: Fn(Complex64) -> Complex64,
{
    let [v] = integrate_path_vec(path, tol, |z| Ok([f(z)]))?;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn exact_form_on_closed_path() {
        let path = PathSpec::polyline(
            &[c(0.0, 0.0), c(2.0, 0.5), c(1.0, 3.0), c(0.0, 0.0)],
            Closure::Closed,
        )
        .unwrap();
        let v = integrate_path(|_| c(1.0, 0.0), &path, 1e-12).unwrap();
        assert!(v.norm() < 1e-12);
    }

    #[test]
    fn residue_theorem_unit_circle() {
        let path = PathSpec::circle(c(0.0, 0.0), 1.0).unwrap();
        let v = integrate_path(|z| 1.0 / z, &path, 1e-12).unwrap();
        assert!((v - c(0.0, 2.0 * PI)).norm() < 1e-10);
    }

    #[test]
    fn exponential_against_antiderivative() {
        // Antiderivative of e^{iz} is e^{iz}/i, so the value on [0, pi] is (e^{i pi} - 1)/i = 2i.
        let path = PathSpec::line(c(0.0, 0.0), c(PI, 0.0));
        let v = integrate_path(|z| (Complex64::i() * z).exp(), &path, 1e-12).unwrap();
        let exact = ((Complex64::i() * PI).exp() - 1.0) / Complex64::i();
        assert!((v - exact).norm() < 1e-12);
        assert!((exact - c(0.0, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn non_finite_sample_is_reported() {
        let path = PathSpec::line(c(-1.0, 0.0), c(1.0, 0.0));
        let f = |z: Complex64| {
            if z.re > 0.3 {
                c(f64::NAN, 0.0)
            } else {
                c(1.0, 0.0)
            }
        };
        let err = integrate_path(f, &path, 1e-10).unwrap_err();
        assert!(matches!(err, Error::NonFiniteSample(_)));
    }

    #[test]
    fn discontinuous_path_rejected() {
        let segs = vec![
            Segment::Line {
                from: c(0.0, 0.0),
                to: c(1.0, 0.0),
            },
            Segment::Line {
                from: c(1.0, 1e-6),
                to: c(2.0, 0.0),
            },
        ];
        assert!(PathSpec::new(segs, Closure::Open).is_err());
        let open = PathSpec::polyline(&[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 1.0)], Closure::Closed);
        assert!(open.is_err());
    }

    #[test]
    fn homotopic_paths_agree() {
        let f = |z: Complex64| (z * z + 1.0) / (z - c(0.0, 3.0));
        let direct = PathSpec::line(c(-1.0, 0.0), c(1.0, 0.0));
        let detour = PathSpec::new(
            vec![Segment::Arc {
                center: c(0.0, 0.0),
                radius: 1.0,
                start: PI,
                end: 2.0 * PI,
            }],
            Closure::Open,
        )
        .unwrap();
        let tol = 1e-11;
        let a = integrate_path(f, &direct, tol).unwrap();
        let b = integrate_path(f, &detour, tol).unwrap();
        assert!((a - b).norm() < 2.0 * tol);
    }

    #[test]
    fn affine_image_of_arc() {
        let arc = Segment::Arc {
            center: c(1.0, 0.0),
            radius: 0.5,
            start: 0.0,
            end: 1.0,
        };
        let img = arc.affine(c(-1.0, 0.0), c(0.0, 0.0));
        for t in [0.0, 0.3, 1.0] {
            assert!((img.point(t) + arc.point(t)).norm() < 1e-14);
        }
    }

    #[test]
    fn distance_to_arc_and_line() {
        let circle = PathSpec::circle(c(0.0, 0.0), 1.0).unwrap();
        assert!((circle.distance_to(c(0.0, 0.0)) - 1.0).abs() < 1e-15);
        assert!((circle.distance_to(c(3.0, 0.0)) - 2.0).abs() < 1e-15);
        let line = PathSpec::line(c(0.0, 0.0), c(1.0, 0.0));
        assert!((line.distance_to(c(2.0, 1.0)) - 2f64.sqrt()).abs() < 1e-15);
    }
}
