#![no_main]
use libfuzzer_sys::fuzz_target;

use zsl_core::steering::parse_weights;

fuzz_target!(|data: &[u8]| {
    if let Ok(w) = parse_weights(data, None) {
        assert!(w.iter().all(|v| (0.0..=1.0).contains(v)));
        let _ = parse_weights(data, Some(w.len())).expect("length check agrees");
    }
});
