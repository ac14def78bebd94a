#![no_main]

use curate_core::dataset::parse_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = parse_csv(data, "class") {
        assert!(ds.len() > 0);
        assert_eq!(ds.labels().len(), ds.len());
        assert!(ds.labels().iter().all(|&l| l < ds.n_classes()));
        let _ = ds.content_hash();
    }
});
