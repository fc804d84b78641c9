use helikon::expr::{parse_expr, parse_form, Domain};
use helikon::lab::{build_mesh, lambda_sweep, probe_self_intersection, SamplingSpec, Thresholds};
use helikon::quadrature::PathSpec;
use helikon::surface::{CycleBasis, WeierstrassData};
use helikon::Complex64;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn plane(g: &str, dh: &str, punctures: Vec<Complex64>, base: Complex64) -> WeierstrassData {
    let d = Domain::punctured_plane(punctures).unwrap();
    WeierstrassData::new(
        parse_expr(g, &d).unwrap(),
        parse_form(dh, &d).unwrap(),
        base,
        "t",
    )
    .unwrap()
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[test]
fn pairs_persist_under_refinement() {
    let data = plane("u", "u du", vec![], c(0.0, 0.0));
    let disk =
        |n| SamplingSpec::rectangle(c(-2.0, -2.0), c(2.0, 2.0), n, n).with_clip(c(0.0, 0.0), 2.0);
    let coarse = build_mesh(&data, &disk(30)).unwrap();
    let th = Thresholds::from_diagonal(coarse.bounding_box_diagonal());
    let fine = build_mesh(&data, &disk(60)).unwrap();
    let pc = probe_self_intersection(&coarse, th.delta_ext, th.delta_int).unwrap();
    let pf = probe_self_intersection(&fine, th.delta_ext, th.delta_int).unwrap();
    assert!(!pc.embedded && !pf.embedded);
    for p in pc.pairs.iter().take(20) {
        let (a, b) = (coarse.vertices[p.a].position, coarse.vertices[p.b].position);
        let found = pf.pairs.iter().any(|q| {
            let (x, y) = (fine.vertices[q.a].position, fine.vertices[q.b].position);
            let tol = 2.0 * th.delta_ext;
            (dist(a, x) < tol && dist(b, y) < tol) || (dist(a, y) < tol && dist(b, x) < tol)
        });
        assert!(found, "pair {:?} lost after refinement", (p.ua, p.ub));
    }
}

#[test]
fn heights_do_not_move_across_the_sweep() {
    let data = plane("u", "(u + 0.1/u) du", vec![c(0.0, 0.0)], c(1.0, 0.0));
    let spec = SamplingSpec::rectangle(c(-2.0, -2.0), c(2.0, 2.0), 31, 31)
        .with_clip(c(0.0, 0.0), 2.0)
        .with_exclusion(c(0.0, 0.0), 0.6);
    let base = build_mesh(&data, &spec).unwrap();
    for lambda in [0.5, 0.8, 2.0] {
        let m = build_mesh(&data.lopez_ros(lambda).unwrap(), &spec).unwrap();
        assert_eq!(m.vertices.len(), base.vertices.len());
        for (v, w) in m.vertices.iter().zip(&base.vertices) {
            assert_eq!(v.u, w.u);
            assert!((v.position[2] - w.position[2]).abs() < 1e-10);
        }
    }
}

#[test]
fn enneper_bracket_sits_above_the_exact_threshold() {
    // (λu, u du) on |u| <= 1 is Enneper's surface on |v| <= λ scaled by 1/λ²,
    // which stops being embedded at λ = √3.
    let data = plane("u", "u du", vec![], c(0.0, 0.0));
    let spec =
        SamplingSpec::rectangle(c(-1.0, -1.0), c(1.0, 1.0), 61, 61).with_clip(c(0.0, 0.0), 1.0);
    let th = Thresholds {
        delta_ext: 0.01,
        delta_int: 0.3,
    };
    let r = lambda_sweep(
        &data,
        None,
        &[1.0, 1.5, 2.0, 3.0],
        &spec,
        th,
        &CycleBasis::new(),
    )
    .unwrap();
    let b = r.bracket.unwrap();
    assert!(b.lo_embedded);
    assert!(b.hi > 3f64.sqrt() && b.hi < 2.1, "{} {}", b.lo, b.hi);
}

#[test]
fn hybrid_flux_is_vertical() {
    let data = plane("u", "(u + 0.1/u) du", vec![c(0.0, 0.0)], c(1.0, 0.0));
    let flux = data
        .flux(&PathSpec::circle(c(0.0, 0.0), 1.0).unwrap(), 1e-12)
        .unwrap();
    assert!(flux.horizontal() < 1e-12);
    assert!((flux.0[2] - 0.2 * std::f64::consts::PI).abs() < 1e-10);
}
