#![no_main]

use kancfd_cli::artifacts::parse_manifest_json;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_manifest_json(text);
    }
});
