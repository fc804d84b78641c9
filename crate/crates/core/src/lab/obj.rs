use std::fmt::Write;

use crate::error::{Error, Result};

use super::SurfaceMesh;

/// Plain decimal rendering of `x` with `sig` significant digits.
pub fn format_sig(x: f64, sig: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x.is_infinite() {
            format!("{x}")
        } else {
            "0".into()
        };
    }
    let mag = x.abs().log10().floor() as i64;
    let decimals = (sig as i64 - 1 - mag).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    // Rounding can carry into a new leading digit (9.99… → 10.0…).
    let digits = s
        .chars()
        .filter(|c| c.is_ascii_digit())
        .skip_while(|c| *c == '0')
        .count();
    if digits > sig && decimals > 0 {
        s = format!("{x:.prec$}", prec = decimals - 1);
    }
    if s.contains('.') {
        s = s.trim_end_matches('0').trim_end_matches('.').to_string();
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// Wavefront OBJ with one normal per vertex, in vertex order.
pub fn export_obj(mesh: &SurfaceMesh) -> Result<Vec<u8>> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let mut out = String::new();
    for v in &mesh.vertices {
        let [x, y, z] = v.position;
        let _ = writeln!(
            out,
            "v {} {} {}",
            format_sig(x, 9),
            format_sig(y, 9),
            format_sig(z, 9)
        );
    }
    for v in &mesh.vertices {
        let [x, y, z] = v.normal;
        let _ = writeln!(
            out,
            "vn {} {} {}",
            format_sig(x, 9),
            format_sig(y, 9),
            format_sig(z, 9)
        );
    }
    for f in &mesh.faces {
        let [a, b, c] = f.map(|k| k + 1);
        let _ = writeln!(out, "f {a}//{a} {b}//{b} {c}//{c}");
    }
    Ok(out.into_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::{MeshEdge, MeshVertex};
    use num_complex::Complex64;

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(1.0, 9), "1");
        assert_eq!(format_sig(-0.0, 9), "0");
        assert_eq!(format_sig(std::f64::consts::PI, 9), "3.14159265");
        assert_eq!(format_sig(123456.789012, 9), "123456.789");
        assert_eq!(format_sig(0.000123456789123, 9), "0.000123456789");
        assert_eq!(format_sig(9.9999999999, 9), "10");
        assert_eq!(format_sig(-2.5e-3, 9), "-0.0025");
        assert_eq!(format_sig(1.5e12, 9), "1500000000000");
    }

    fn vertex(x: f64) -> MeshVertex {
        MeshVertex {
            u: Complex64::new(x, 0.0),
            grid: (0, 0),
            position: [x, 0.0, 0.0],
            normal: [0.0, 0.0, 1.0],
        }
    }

    #[test]
    fn single_triangle() {
        let mesh = SurfaceMesh {
            vertices: vec![vertex(0.0), vertex(1.0), vertex(2.0)],
            faces: vec![[0, 1, 2]],
            edges: vec![MeshEdge {
                a: 0,
                b: 1,
                length: 1.0,
            }],
            closure_defect: 0.0,
            root: 0,
        };
        let text = String::from_utf8(export_obj(&mesh).unwrap()).unwrap();
        let count = |p: &str| text.lines().filter(|l| l.starts_with(p)).count();
        assert_eq!(count("v "), 3);
        assert_eq!(count("vn "), 3);
        assert_eq!(count("f "), 1);
        assert!(text.contains("f 1//1 2//2 3//3"));
    }

    #[test]
    fn empty_mesh_is_an_error() {
        let mesh = SurfaceMesh {
            vertices: vec![],
            faces: vec![],
            edges: vec![],
            closure_defect: 0.0,
            root: 0,
        };
        assert!(matches!(export_obj(&mesh), Err(Error::EmptyMesh)));
    }
}
