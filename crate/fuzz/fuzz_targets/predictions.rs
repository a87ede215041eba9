#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(rows) = pdm_core::ensemble::read_predictions(text) {
            let again = pdm_core::ensemble::read_predictions(&pdm_core::ensemble::write_predictions(&rows, &[])).unwrap();
            assert_eq!(again.len(), rows.len());
        }
    }
});
