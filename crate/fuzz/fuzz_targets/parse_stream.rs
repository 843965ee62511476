#![no_main]

use kancfd::synthbench::{parse_stream, write_stream};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(stream) = parse_stream(text) {
        let mut out = Vec::new();
        write_stream(&mut out, &stream).expect("accepted stream must serialize");
        let again = parse_stream(std::str::from_utf8(&out).unwrap()).expect("serialized stream must parse");
        assert_eq!(again, stream);
    }
});
