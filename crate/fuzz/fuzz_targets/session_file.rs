#![no_main]

use curate_core::session::SessionFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(file) = SessionFile::parse(text) {
        let again = SessionFile::parse(&file.to_json()).expect("a written file parses");
        assert_eq!(again.to_json(), file.to_json());
    }
});
