#![no_main]

use libfuzzer_sys::fuzz_target;

use pdm_core::kvtext::Document;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(doc) = Document::parse(text) {
            assert_eq!(Document::parse(&doc.to_text()).unwrap(), doc);
            let _ = pdm_core::data_io::SynthConfig::from_document(&doc);
            let _ = pdm_core::changefinder::ChangeFinderConfig::from_document(&doc);
            let _ = pdm_core::detectors::TrainConfig::from_document(&doc);
        }
    }
});
