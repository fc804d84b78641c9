#![no_main]

use std::sync::{Arc, OnceLock};

use helikon::elliptic::Lattice;
use helikon::expr::{differentiate, parse_expr, Domain};
use helikon::Complex64;
use libfuzzer_sys::fuzz_target;

fn torus() -> &'static Domain {
    static T: OnceLock<Domain> = OnceLock::new();
    T.get_or_init(|| {
        let lat = Lattice::new(Complex64::new(0.1, 1.2)).unwrap();
        Domain::torus(Arc::new(lat), vec![Complex64::new(0.3, 0.2)]).unwrap()
    })
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for domain in [&Domain::Plane, torus()] {
        if let Ok(e) = parse_expr(text, domain) {
            let _ = e.eval(Complex64::new(0.37, 0.41));
            let _ = differentiate(&e).eval(Complex64::new(0.37, 0.41));
        }
    }
});
