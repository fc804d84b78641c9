use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quadrature::{Closure, PathSpec, Segment};

/// Detour radius as a fraction of the distance to the nearest other singularity.
pub const DETOUR_FRACTION: f64 = 0.05;

/// Straight route from `from` to `to` that steps around every singularity
/// lying within its detour radius of the segment by a semicircle on the far side.
pub fn straight_route(
    from: Complex64,
    to: Complex64,
    singularities: &[Complex64],
) -> Result<PathSpec> {
    let length = (to - from).norm();
    if length == 0.0 {
        return Err(Error::InvalidPath("route endpoints coincide".into()));
    }
    let dir = (to - from) / length;
    let mut detours: Vec<(f64, f64, Complex64)> = Vec::new();
    for (k, &s) in singularities.iter().enumerate() {
        let nearest = singularities
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, &o)| (o - s).norm())
            .fold(length, f64::min);
        let r = DETOUR_FRACTION * nearest;
        let local = (s - from) / dir;
        let t = local.re;
        let d = local.im;
        if d.abs() >= r || t < -r || t > length + r {
            continue;
        }
        if t - r <= 0.0 || t + r >= length {
            return Err(Error::PathThroughPole(s));
        }
        detours.push((t, r, s));
    }
    detours.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in detours.windows(2) {
        if w[0].0 + w[0].1 >= w[1].0 - w[1].1 {
            return Err(Error::PathThroughPole(w[1].2));
        }
    }
    let phi = dir.arg();
    let mut segments = Vec::new();
    let mut cursor = from;
    for (t, r, s) in detours {
        let q = from + dir * t;
        let enter = q - dir * r;
        segments.push(Segment::Line {
            from: cursor,
            to: enter,
        });
        let left_of_line = ((s - q) / dir).im > 0.0;
        let end = if left_of_line { phi + 2.0 * PI } else { phi };
        segments.push(Segment::Arc {
            center: q,
            radius: r,
            start: phi + PI,
            end,
        });
        cursor = q + dir * r;
    }
    segments.push(Segment::Line { from: cursor, to });
    // Arc endpoints are computed with trig, so snap line endpoints onto them.
    snap(&mut segments);
    PathSpec::new(segments, Closure::Open)
}

fn snap(segments: &mut [Segment]) {
    for k in 1..segments.len() {
        let prev_end = segments[k - 1].end();
        if let Segment::Line { from, .. } = &mut segments[k] {
            *from = prev_end;
        }
    }
    for k in 0..segments.len().saturating_sub(1) {
        let next_start = segments[k + 1].start();
        if let Segment::Line { to, .. } = &mut segments[k] {
            *to = next_start;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn plain_segment_without_singularities() {
        let r = straight_route(c(0.0, 0.0), c(1.0, 1.0), &[]).unwrap();
        assert_eq!(r.segments().len(), 1);
    }

    #[test]
    fn detour_keeps_distance() {
        let s = [c(0.5, 0.0), c(3.0, 0.0)];
        let r = straight_route(c(-1.0, 0.0), c(2.0, 0.0), &s).unwrap();
        assert_eq!(r.segments().len(), 3);
        assert!(r.distance_to(s[0]) >= 0.05 * 2.5 - 1e-12);
        assert!((r.end() - c(2.0, 0.0)).norm() < 1e-15);
        let off = [c(0.5, 0.01)];
        let r = straight_route(c(-1.0, 0.0), c(2.0, 0.0), &off).unwrap();
        assert!(r.distance_to(off[0]) >= 0.05 * 3.0 - 1e-12);
    }

    #[test]
    fn endpoint_on_singularity_is_rejected() {
        assert!(matches!(
            straight_route(c(0.0, 0.0), c(1.0, 0.0), &[c(1.0, 0.0)]),
            Err(Error::PathThroughPole(_))
        ));
    }
}
