#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(store) = dqdrec::data::parse_items_packed(data) {
        assert_eq!(store.to_matrix().unwrap().nrows(), store.len());
    }
});
