#![no_main]

use curate_core::sampling::{Acceptance, SamplingRequest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(req) = serde_json::from_slice::<SamplingRequest>(data) {
        let back: SamplingRequest = serde_json::from_str(&serde_json::to_string(&req).unwrap()).unwrap();
        assert_eq!(back.algorithm, req.algorithm);
        assert_eq!(back.scope, req.scope);
    }
    if let Ok(acc) = serde_json::from_slice::<Acceptance>(data) {
        let _ = serde_json::to_string(&acc).unwrap();
    }
});
