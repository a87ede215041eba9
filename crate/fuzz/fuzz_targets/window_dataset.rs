#![no_main]

use libfuzzer_sys::fuzz_target;

use pdm_core::windowing::WindowDataset;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = WindowDataset::read_csv(data) {
        assert_eq!(ds.features.len(), ds.labels.len());
        assert_eq!(ds.features.len(), ds.meta.len());
    }
});
