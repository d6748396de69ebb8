#![no_main]
use libfuzzer_sys::fuzz_target;

use zsl_core::dataset::parse_attributes;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = parse_attributes(data) {
        assert_eq!(table.values.rows(), table.class_names.len());
        assert_eq!(table.values.cols(), table.attribute_names.len());
        assert!(table.values.is_finite());
    }
});
