//! Canonical corpus lines: parsing must not panic, and anything accepted
//! must survive a write/read cycle unchanged.

#![no_main]

use libfuzzer_sys::fuzz_target;
use measex::corpus::{document_to_line, parse_document_line};

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(doc) = parse_document_line(line, 1) {
        let again = parse_document_line(&document_to_line(&doc), 1).expect("written line parses");
        assert_eq!(again, doc);
    }
});
