#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = dqdrec::data::parse_scores(data) {
        for (_, _, s) in table.iter() {
            assert!(s > 0.0 && s.is_finite());
        }
    }
});
