#![no_main]

use libfuzzer_sys::fuzz_target;
use popbo::instances::GroundTruth;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(truth) = GroundTruth::from_json(text) else { return };
    let again = GroundTruth::from_json(&truth.to_json().unwrap()).unwrap();
    assert_eq!(truth, again);
    let _ = truth.eval(&truth.argmax);
});
