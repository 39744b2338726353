//! Parser robustness: the fuzz corpus seeds and random byte strings must
//! produce `Ok` or `Err`, never a panic.

use std::path::PathBuf;

use proptest::prelude::*;

use dqdrec::data::{parse_history, parse_items_csv, parse_items_packed, parse_scores};
use dqdrec::harness::RunConfig;

fn feed(target: &str, data: &[u8]) -> bool {
    match target {
        "items_csv" => parse_items_csv(data).is_ok(),
        "items_packed" => parse_items_packed(data).is_ok(),
        "scores" => parse_scores(data).is_ok(),
        "history" => parse_history(data).is_ok(),
        "run_config" => std::str::from_utf8(data).is_ok_and(|s| RunConfig::from_toml_str(s).is_ok()),
        other => panic!("unknown target {other}"),
    }
}

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn corpus_seeds_parse_as_labelled() {
    let rejected = [
        ("items_csv", "ragged"),
        ("items_csv", "non_finite"),
        ("items_packed", "empty"),
        ("items_packed", "truncated"),
        ("items_packed", "zero_row"),
        ("scores", "zero_score"),
        ("history", "bad_line"),
        ("run_config", "mmr_alpha"),
    ];
    for target in ["items_csv", "items_packed", "scores", "history", "run_config"] {
        let seeds = corpus(target);
        assert!(!seeds.is_empty(), "{target} has no seeds");
        for (name, data) in seeds {
            let expect_ok = !rejected.contains(&(target, name.as_str()));
            assert_eq!(feed(target, &data), expect_ok, "{target}/{name}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn arbitrary_bytes_never_panic(data in proptest::collection::vec(any::<u8>(), 0..256)) {
        for target in ["items_csv", "items_packed", "scores", "history", "run_config"] {
            feed(target, &data);
        }
    }

    #[test]
    fn csv_like_text_never_panics(s in "[0-9eE.,+\\- \n]{0,120}") {
        feed("items_csv", s.as_bytes());
        feed("scores", s.as_bytes());
        feed("history", s.as_bytes());
    }

    #[test]
    fn packed_headers_never_panic(n in 0u32..4, d in 0u32..4, extra in 0usize..40, fill in any::<u8>()) {
        let mut bytes = n.to_le_bytes().to_vec();
        bytes.extend(d.to_le_bytes());
        bytes.extend(std::iter::repeat_n(fill, (n * d) as usize * 8 + extra % 9));
        feed("items_packed", &bytes);
    }
}
