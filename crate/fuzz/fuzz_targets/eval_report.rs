#![no_main]

use libfuzzer_sys::fuzz_target;

use pdm_core::ensemble::EvalReport;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(report) = EvalReport::from_csv(text) {
            let again = EvalReport::from_csv(&report.to_csv(&[])).unwrap();
            assert_eq!(again.confusion, report.confusion);
        }
    }
});
