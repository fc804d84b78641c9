use num_complex::Complex64;

use super::Domain;
use crate::error::{Error, Result};

const MATCH_TOL: f64 = 1e-12;

/// The affine involution `u ↦ c − u` with its fixed points.
#[derive(Debug, Clone, PartialEq)]
pub struct Involution {
    center: Complex64,
    fixed_points: Vec<Complex64>,
    p0: Complex64,
    on_torus: Option<crate::elliptic::Lattice>,
}

impl Involution {
    /// Builds the involution and checks that it permutes the punctures of
    /// `domain`. `p0` defaults to the first fixed point that is not a puncture.
    pub fn new(center: Complex64, domain: &Domain) -> Result<Self> {
        if !center.is_finite() {
            return Err(Error::IncompatibleInvolution(format!(
                "center {center} is not finite"
            )));
        }
        let half = center / 2.0;
        let (fixed_points, on_torus) = match domain.lattice() {
            Some(lat) => {
                let tau = lat.tau();
                let pts = [
                    0.0.into(),
                    Complex64::new(0.5, 0.0),
                    tau / 2.0,
                    (tau + 1.0) / 2.0,
                ]
                .into_iter()
                .map(|h: Complex64| half + h)
                .collect();
                (pts, Some(lat.as_ref().clone()))
            }
            None => (vec![half], None),
        };
        for &p in domain.punctures() {
            let image = center - p;
            if domain.puncture_near(image, 1e-9).is_none() {
                return Err(Error::IncompatibleInvolution(format!(
                    "puncture {p} maps to {image}, which is not a puncture"
                )));
            }
        }
        let p0 = fixed_points
            .iter()
            .copied()
            .find(|&f| domain.puncture_near(f, 1e-9).is_none())
            .ok_or_else(|| {
                Error::IncompatibleInvolution("every fixed point is a puncture".into())
            })?;
        Ok(Involution {
            center,
            fixed_points,
            p0,
            on_torus,
        })
    }

    /// Chooses a different distinguished fixed point.
    pub fn with_p0(mut self, p0: Complex64) -> Result<Self> {
        if !self.is_fixed_point(p0) {
            return Err(Error::IncompatibleInvolution(format!(
                "{p0} is not a fixed point"
            )));
        }
        self.p0 = p0;
        Ok(self)
    }

    pub fn center(&self) -> Complex64 {
        self.center
    }

    pub fn fixed_points(&self) -> &[Complex64] {
        &self.fixed_points
    }

    pub fn p0(&self) -> Complex64 {
        self.p0
    }

    pub fn apply(&self, u: Complex64) -> Complex64 {
        self.center - u
    }

    fn same_point(&self, a: Complex64, b: Complex64, tol: f64) -> bool {
        match &self.on_torus {
            Some(lat) => lat.congruent(a, b, tol),
            None => (a - b).norm() < tol,
        }
    }

    pub fn is_fixed_point(&self, p: Complex64) -> bool {
        self.same_point(self.apply(p), p, 1e-9)
    }

    /// Largest deviation of `I∘I` from the identity over `samples`.
    pub fn involutive_defect(&self, samples: &[Complex64]) -> f64 {
        samples
            .iter()
            .map(|&u| {
                let back = self.apply(self.apply(u));
                match &self.on_torus {
                    Some(lat) => lat.distance_to_lattice(back - u),
                    None => (back - u).norm(),
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn is_involutive(&self, samples: &[Complex64]) -> bool {
        self.involutive_defect(samples) < MATCH_TOL
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::Lattice;
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn torus_has_four_fixed_points() {
        let lat = Arc::new(Lattice::new(c(0.1, 1.2)).unwrap());
        let d = Domain::torus(lat, vec![c(0.2, 0.1), c(-0.2, -0.1)]).unwrap();
        let inv = Involution::new(c(0.0, 0.0), &d).unwrap();
        assert_eq!(inv.fixed_points().len(), 4);
        for &p in inv.fixed_points() {
            assert!(inv.is_fixed_point(p));
        }
        assert!(inv.is_fixed_point(inv.p0()));
        assert!(inv.is_involutive(&[c(0.3, 0.4), c(-1.0, 2.0)]));
    }

    #[test]
    fn plane_fixed_point_is_half_center() {
        let inv = Involution::new(c(1.0, 2.0), &Domain::Plane).unwrap();
        assert_eq!(inv.fixed_points(), &[c(0.5, 1.0)]);
        assert_eq!(inv.apply(c(0.0, 0.0)), c(1.0, 2.0));
    }

    #[test]
    fn p0_skips_punctures() {
        let d = Domain::punctured_plane(vec![c(0.0, 0.0)]).unwrap();
        assert!(Involution::new(c(0.0, 0.0), &d).is_err());
        let lat = Arc::new(Lattice::new(c(0.0, 1.0)).unwrap());
        let d = Domain::torus(lat, vec![c(0.0, 0.0)]).unwrap();
        let inv = Involution::new(c(0.0, 0.0), &d).unwrap();
        assert_eq!(inv.p0(), c(0.5, 0.0));
        assert!(inv.clone().with_p0(c(0.0, 0.5)).is_ok());
        assert!(inv.with_p0(c(0.1, 0.0)).is_err());
    }

    #[test]
    fn punctures_must_be_permuted() {
        let d = Domain::punctured_plane(vec![c(1.0, 0.0)]).unwrap();
        assert!(matches!(
            Involution::new(c(0.0, 0.0), &d),
            Err(Error::IncompatibleInvolution(_))
        ));
        let d = Domain::punctured_plane(vec![c(1.5, 0.0), c(0.5, 0.0)]).unwrap();
        assert!(Involution::new(c(2.0, 0.0), &d).is_ok());
    }
}
