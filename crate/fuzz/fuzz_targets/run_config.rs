#![no_main]
use libfuzzer_sys::fuzz_target;

// A config that parses must also pass its own validation.
fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(cfg) = dqdrec::harness::RunConfig::from_toml_str(s) {
            cfg.validate().unwrap();
        }
    }
});
