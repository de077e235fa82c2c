#![no_main]

use libfuzzer_sys::fuzz_target;
use popbo_cli::protocol::{CreateRequest, PreferenceRequest};

fuzz_target!(|data: &[u8]| {
    if let Ok(req) = CreateRequest::parse(data) {
        assert!(req.config.is_some() != req.instance.is_some());
        if let Some(config) = &req.config {
            let _ = config.validate();
        }
    }
    let _ = PreferenceRequest::parse(data);
});
