#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(frame) = pdm_core::data_io::parse_frame_str(text, "timestamp") {
            assert_eq!(frame.timestamps().len(), frame.n_samples());
        }
    }
});
