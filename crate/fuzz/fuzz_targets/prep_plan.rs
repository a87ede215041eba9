#![no_main]

use libfuzzer_sys::fuzz_target;

use pdm_core::prep::PrepPlan;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(plan) = PrepPlan::from_text(text) {
            assert_eq!(PrepPlan::from_text(&plan.to_text()).unwrap(), plan);
        }
    }
});
