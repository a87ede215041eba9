#![no_main]

use libfuzzer_sys::fuzz_target;

use pdm_core::config::PipelineConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(config) = PipelineConfig::from_text(text) {
            assert_eq!(PipelineConfig::from_text(&config.to_text()).unwrap(), config);
        }
    }
});
