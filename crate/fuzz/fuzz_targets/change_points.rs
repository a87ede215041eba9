#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cps) = pdm_core::data_io::parse_change_points(text) {
            let again = pdm_core::data_io::parse_change_points(&pdm_core::data_io::format_change_points(&cps, &[])).unwrap();
            assert_eq!(cps, again);
        }
    }
});
