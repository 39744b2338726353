#![no_main]
use libfuzzer_sys::fuzz_target;

// Accepted stores must hold finite unit rows of one width.
fuzz_target!(|data: &[u8]| {
    if let Ok(store) = dqdrec::data::parse_items_csv(data) {
        let m = store.to_matrix().unwrap();
        for i in 0..m.nrows() {
            let n: f64 = m.row(i).iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-6);
        }
    }
});
