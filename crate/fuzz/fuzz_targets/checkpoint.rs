#![no_main]
use libfuzzer_sys::fuzz_target;

use zsl_core::model::{decode_checkpoint, encode_checkpoint};

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = decode_checkpoint(data) {
        let bytes = encode_checkpoint(&ck.model, &ck.weights, &ck.config, ck.split.as_ref())
            .expect("decoded checkpoint re-encodes");
        let again = decode_checkpoint(&bytes).expect("re-encoded checkpoint decodes");
        assert_eq!(again.weights.len(), ck.weights.len());
        assert_eq!(again.config, ck.config);
    }
});
