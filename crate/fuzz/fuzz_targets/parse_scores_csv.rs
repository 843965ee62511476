#![no_main]

use kancfd::continual::{Metric, ScoreMatrix};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(scores) = ScoreMatrix::parse_csv(text) {
        for t in 1..=scores.steps() {
            let _ = scores.average(Metric::Acc, t);
            let _ = scores.forgetting(Metric::Auc, t);
        }
        let mut out = Vec::new();
        scores.write_csv(&mut out).expect("accepted scores must serialize");
    }
});
