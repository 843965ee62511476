#![no_main]

use kancfd_cli::artifacts::load_model_json;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = load_model_json(text) {
        let f = vec![0.0; model.extractor.feature_dim()];
        model.head.forward(&f).expect("validated head must accept feature_dim inputs");
    }
});
