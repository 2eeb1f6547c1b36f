//! Tokens must be ordered, non-empty, in bounds and equal to the text they
//! point at.

#![no_main]

use libfuzzer_sys::fuzz_target;
use measex::tags::tokenize;
use measex::text::slice_chars;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let mut last = 0;
    for token in tokenize(&text) {
        let span = token.span.expect("tokens of raw text carry offsets");
        assert!(span.start >= last && span.start < span.end);
        assert_eq!(slice_chars(&text, span), Some(token.text.as_str()));
        last = span.end;
    }
});
