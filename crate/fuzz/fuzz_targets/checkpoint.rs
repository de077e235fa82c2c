#![no_main]

use libfuzzer_sys::fuzz_target;
use popbo::session::{Checkpoint, Session};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cp) = Checkpoint::from_json(text) else { return };
    // replay is a full solve per step; keep it to short, low-dimensional ones
    if cp.history.len() <= 2 && cp.config.kernel.dim <= 2 {
        if let Ok(session) = Session::restore(&cp) {
            assert_eq!(session.checkpoint(), cp);
        }
    }
});
