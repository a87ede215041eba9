#![no_main]

use libfuzzer_sys::fuzz_target;

use pdm_core::tuner::ParamGrid;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(grid) = ParamGrid::from_text(text) {
            assert_eq!(ParamGrid::from_text(&grid.to_document().to_text()).unwrap(), grid);
        }
    }
});
