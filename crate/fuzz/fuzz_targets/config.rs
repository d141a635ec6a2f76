#![no_main]

use hopfid::config::Config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = Config::parse(text) {
            // anything accepted must print and re-parse
            let again = Config::parse(&cfg.to_toml_string()).unwrap();
            assert_eq!(again.to_toml_string(), cfg.to_toml_string());
        }
    }
});
