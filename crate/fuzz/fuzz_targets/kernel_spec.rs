#![no_main]

use libfuzzer_sys::fuzz_target;
use popbo::kernel::KernelSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = KernelSpec::from_json(text) else { return };
    // accepted specs must survive a round trip and evaluate to finite values
    let again = KernelSpec::from_json(&serde_json::to_string(&spec).unwrap()).unwrap();
    assert_eq!(spec, again);
    if spec.dim <= 16 {
        let x = vec![0.5; spec.dim];
        let y = vec![-0.25; spec.dim];
        assert!(spec.eval(&x, &y).unwrap().is_finite());
    }
});
