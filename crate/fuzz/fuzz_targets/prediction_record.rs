#![no_main]

use libfuzzer_sys::fuzz_target;
use measex::pipeline::{parse_prediction_line, PredictionFile};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let records: Vec<_> = text
        .lines()
        .enumerate()
        .filter_map(|(i, l)| parse_prediction_line(l, i + 1).ok())
        .collect();
    let _ = PredictionFile::new(records);
});
