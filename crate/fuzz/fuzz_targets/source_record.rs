#![no_main]

use libfuzzer_sys::fuzz_target;
use measex::corpus::{convert_source, parse_source_line, ConvertOptions};

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(source) = parse_source_line(line, 1) {
        let _ = convert_source(&source, 1, &ConvertOptions::default());
    }
});
