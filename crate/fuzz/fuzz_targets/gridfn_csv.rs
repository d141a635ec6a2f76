#![no_main]

use hopfid::gridfn::GridFunction;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(g) = GridFunction::parse_csv(text) {
            assert!(g.values().iter().all(|v| v.is_finite()));
        }
    }
});
