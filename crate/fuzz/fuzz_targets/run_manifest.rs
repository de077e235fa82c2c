#![no_main]

use libfuzzer_sys::fuzz_target;
use popbo::bench::RunManifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(manifest) = RunManifest::from_json(text) else { return };
    let again = RunManifest::from_json(&serde_json::to_string(&manifest).unwrap()).unwrap();
    assert_eq!(manifest, again);
});
