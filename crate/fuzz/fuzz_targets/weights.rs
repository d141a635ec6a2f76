#![no_main]

use hopfid::pod::parse_weights;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(w) = parse_weights(text) {
            assert!(w.iter().all(|v| *v >= 0.0 && v.is_finite()));
        }
    }
});
