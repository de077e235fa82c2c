#![no_main]

use libfuzzer_sys::fuzz_target;
use popbo::likelihood::History;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok((kernel, history)) = History::from_jsonl(text) else { return };
    let written = history.to_jsonl(&kernel).unwrap();
    let (k2, h2) = History::from_jsonl(&written).unwrap();
    assert_eq!(kernel, k2);
    assert_eq!(history, h2);
});
