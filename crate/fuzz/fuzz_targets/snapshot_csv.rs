#![no_main]

use hopfid::pod::parse_snapshot_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(s) = parse_snapshot_csv(text) {
            assert_eq!(s.values.len(), 2 * s.positions.len());
        }
    }
});
