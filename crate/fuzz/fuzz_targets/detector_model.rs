#![no_main]

use libfuzzer_sys::fuzz_target;

use pdm_core::detectors::DetectorModel;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(model) = DetectorModel::from_text(text) {
            let row = vec![0.5; model.n_features()];
            let p = model.predict_proba(&row);
            assert!((0.0..=1.0).contains(&p));
        }
    }
});
