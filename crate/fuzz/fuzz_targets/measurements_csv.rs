#![no_main]

use hopfid::model::Measurements;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = Measurements::parse_csv(text) {
            let again = Measurements::parse_csv(&m.to_csv_string()).unwrap();
            assert_eq!(again.len(), m.len());
        }
    }
});
