#![no_main]
use libfuzzer_sys::fuzz_target;

use zsl_core::dataset::parse_labels;

fuzz_target!(|data: &[u8]| {
    let names: Vec<String> = ["seen_00", "seen_01", "seen_02", "unseen_00"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let n = data.iter().filter(|&&b| b == b'\n').count().saturating_sub(1);
    if let Ok(labels) = parse_labels(data, n, &names) {
        assert_eq!(labels.len(), n);
        assert!(labels.iter().all(|&l| l < names.len()));
    }
});
