#![no_main]

use kancfd::fskdcp::{read_snapshot, write_snapshot};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(mem) = read_snapshot(data) {
        let mut out = Vec::new();
        write_snapshot(&mut out, &mem).expect("accepted snapshot must serialize");
        let again = read_snapshot(out.as_slice()).expect("serialized snapshot must parse");
        assert_eq!(again.features(), mem.features());
        assert_eq!(again.labels(), mem.labels());
    }
});
