#![no_main]

use libfuzzer_sys::fuzz_target;
use measex::corpus::segment_sentences;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let len = text.chars().count();
    let mut last = 0;
    for (i, s) in segment_sentences(&text).iter().enumerate() {
        assert_eq!(s.index, i);
        assert!(s.span.start >= last && s.span.start <= s.span.end && s.span.end <= len);
        last = s.span.end;
    }
});
