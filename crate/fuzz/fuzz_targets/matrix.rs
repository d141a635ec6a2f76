#![no_main]

use hopfid::pod::{decode_matrix, encode_matrix};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = decode_matrix(data) {
        assert_eq!(encode_matrix(&rows).unwrap(), data);
    }
});
