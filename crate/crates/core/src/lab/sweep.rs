use crate::error::{Error, Result};
use crate::expr::Involution;
use crate::surface::{involution_report, CycleBasis, WeierstrassData};

use super::{build_mesh, probe_self_intersection, SamplingSpec};

/// Period residual every swept surface has to meet.
pub const PERIOD_TOL: f64 = 1e-8;
/// Relative bracket width at which bisection stops.
const BRACKET_WIDTH: f64 = 0.01;
const MAX_BISECTIONS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub delta_ext: f64,
    pub delta_int: f64,
}

impl Thresholds {
    /// `δ_ext = 0.02 · diagonal`, `δ_int = 20 · δ_ext`.
    pub fn from_diagonal(diagonal: f64) -> Self {
        let delta_ext = 0.02 * diagonal;
        Thresholds {
            delta_ext,
            delta_int: 20.0 * delta_ext,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub embedded: bool,
    pub pair_count: usize,
    pub closest: Option<f64>,
    /// Largest of the horizontal period residuals and the mesh closure defect.
    pub period_residual: f64,
    /// Largest vertical period `|Re P₃|`; `dh` is untouched by the deformation, so
    /// this is the same at every `λ` (the screw translation for periodic data).
    pub vertical_period: f64,
    /// Involution deviation of the deformed data, when an involution was given.
    pub involution_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    /// Verdict at `lo`; `hi` has the other one.
    pub lo_embedded: bool,
    pub refinements: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub bracket: Option<Bracket>,
    pub periods_ok: bool,
}

fn evaluate(
    data: &WeierstrassData,
    inv: Option<&Involution>,
    lambda: f64,
    spec: &SamplingSpec,
    th: Thresholds,
    basis: &CycleBasis,
) -> Result<SweepRow> {
    let deformed = data.lopez_ros(lambda)?;
    let (horizontal, vertical_period) = if basis.is_empty() {
        (0.0, 0.0)
    } else {
        let rep = deformed.period_report(basis, PERIOD_TOL)?;
        rep.cycles
            .iter()
            .fold((0.0f64, 0.0f64), |(h, v), c| (h.max(c.r1), v.max(c.r2)))
    };
    let mesh = build_mesh(&deformed, spec)?;
    let probe = probe_self_intersection(&mesh, th.delta_ext, th.delta_int)?;
    let involution_deviation = match inv {
        Some(inv) => Some(involution_report(&deformed, inv, PERIOD_TOL)?.max_deviation),
        None => None,
    };
    Ok(SweepRow {
        lambda,
        embedded: probe.embedded,
        pair_count: probe.pairs.len(),
        closest: probe.pairs.first().map(|p| p.extrinsic),
        period_residual: horizontal.max(mesh.closure_defect),
        vertical_period,
        involution_deviation,
    })
}

/// Meshes and probes `(λg, dh)` for every `λ`, then bisects the first verdict
/// change down to a relative width below 1%.
pub fn lambda_sweep(
    data: &WeierstrassData,
    inv: Option<&Involution>,
    lambdas: &[f64],
    spec: &SamplingSpec,
    thresholds: Thresholds,
    basis: &CycleBasis,
) -> Result<SweepReport> {
    let vf = data.is_vertical_flux(basis, PERIOD_TOL)?;
    if !vf.vertical {
        return Err(Error::NotVerticalFlux(vf.max_horizontal));
    }
    let mut grid = lambdas.to_vec();
    if let Some(bad) = grid.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::NonpositiveLambda(*bad));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let rows = grid
        .iter()
        .map(|&l| evaluate(data, inv, l, spec, thresholds, basis))
        .collect::<Result<Vec<_>>>()?;
    let mut bracket = None;
    if let Some(k) = rows.windows(2).position(|w| w[0].embedded != w[1].embedded) {
        let (mut lo, mut hi) = (rows[k].lambda, rows[k + 1].lambda);
        let lo_embedded = rows[k].embedded;
        let mut refinements = Vec::new();
        while hi - lo >= BRACKET_WIDTH * lo && refinements.len() < MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            let row = evaluate(data, inv, mid, spec, thresholds, basis)?;
            if row.embedded == lo_embedded {
                lo = mid;
            } else {
                hi = mid;
            }
            refinements.push(row);
        }
        bracket = Some(Bracket {
            lo,
            hi,
            lo_embedded,
            refinements,
        });
    }
    let periods_ok = rows
        .iter()
        .chain(bracket.iter().flat_map(|b| b.refinements.iter()))
        .all(|r| r.period_residual < PERIOD_TOL);
    Ok(SweepReport {
        rows,
        bracket,
        periods_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expr, parse_form, Domain};
    use crate::quadrature::PathSpec;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn enneper() -> WeierstrassData {
        let d = Domain::Plane;
        WeierstrassData::new(
            parse_expr("u", &d).unwrap(),
            parse_form("u du", &d).unwrap(),
            c(0.0, 0.0),
            "enneper",
        )
        .unwrap()
    }

    fn unit_disk(n: usize) -> SamplingSpec {
        SamplingSpec::rectangle(c(-1.0, -1.0), c(1.0, 1.0), n, n).with_clip(c(0.0, 0.0), 1.0)
    }

    #[test]
    fn single_embedded_lambda_has_no_bracket() {
        let th = Thresholds {
            delta_ext: 0.01,
            delta_int: 0.3,
        };
        let r = lambda_sweep(
            &enneper(),
            None,
            &[1.0],
            &unit_disk(31),
            th,
            &CycleBasis::new(),
        )
        .unwrap();
        assert_eq!(r.rows.len(), 1);
        assert!(r.rows[0].embedded && r.bracket.is_none() && r.periods_ok);
    }

    #[test]
    fn enneper_disk_loses_embeddedness() {
        let th = Thresholds {
            delta_ext: 0.01,
            delta_int: 0.3,
        };
        let r = lambda_sweep(
            &enneper(),
            None,
            &[1.0, 3.0],
            &unit_disk(31),
            th,
            &CycleBasis::new(),
        )
        .unwrap();
        let b = r.bracket.unwrap();
        assert!(b.lo_embedded && b.hi - b.lo < 0.01 * b.lo);
        assert!(b.lo > 1.5 && b.hi < 2.5, "{b:?}");
    }

    #[test]
    fn non_vertical_flux_is_refused() {
        let d = Domain::punctured_plane(vec![c(0.0, 0.0)]).unwrap();
        let data = WeierstrassData::new(
            parse_expr("u", &d).unwrap(),
            parse_form("u^-2 du", &d).unwrap(),
            c(1.0, 0.0),
            "x",
        )
        .unwrap();
        let basis = CycleBasis::new()
            .with("C", PathSpec::circle(c(0.0, 0.0), 1.0).unwrap())
            .unwrap();
        let th = Thresholds {
            delta_ext: 0.01,
            delta_int: 0.3,
        };
        assert!(matches!(
            lambda_sweep(&data, None, &[1.0], &unit_disk(5), th, &basis),
            Err(Error::NotVerticalFlux(_))
        ));
    }
}
