#![no_main]
use libfuzzer_sys::fuzz_target;

use zsl_core::dataset::parse_split;

fuzz_target!(|data: &[u8]| {
    if let Ok(split) = parse_split(data) {
        let json = serde_json::to_vec(&split).unwrap();
        assert_eq!(parse_split(&json).unwrap(), split);
    }
});
