#![no_main]

use std::sync::{Arc, OnceLock};

use helikon::elliptic::Lattice;
use helikon::expr::{parse_form, Domain};
use helikon::Complex64;
use libfuzzer_sys::fuzz_target;

fn torus() -> &'static Domain {
    static T: OnceLock<Domain> = OnceLock::new();
    T.get_or_init(|| Domain::torus(Arc::new(Lattice::new(Complex64::new(0.0, 1.0)).unwrap()), vec![]).unwrap())
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for domain in [&Domain::Plane, torus()] {
        if let Ok(w) = parse_form(text, domain) {
            let _ = w.eval(Complex64::new(0.21, 0.33));
        }
    }
});
