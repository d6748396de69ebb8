#![no_main]
use libfuzzer_sys::fuzz_target;

use zsl_core::dataset::{decode_features, encode_features};

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = decode_features(data) {
        let bytes = encode_features(&m);
        let again = decode_features(&bytes).expect("re-encoded features decode");
        assert_eq!(m.rows(), again.rows());
        assert_eq!(m.cols(), again.cols());
        assert!(m.as_slice().iter().zip(again.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
});
