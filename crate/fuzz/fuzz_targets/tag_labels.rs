//! First line is a sentence, the rest whitespace-separated labels. Decoded
//! spans must stay inside the sentence.

#![no_main]

use libfuzzer_sys::fuzz_target;
use measex::tags::{decode_tags, enrich_tokens, tokenize, Scheme, TagSequence};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (sentence, labels) = text.split_once('\n').unwrap_or((text, ""));
    let labels: Vec<&str> = labels.split_whitespace().collect();
    let tokens = tokenize(sentence);
    let len = sentence.chars().count();

    if let Ok(seq) = TagSequence::from_labels(tokens.clone(), &labels, Scheme::IoQ, None) {
        for (_, span) in decode_tags(&seq).expect("checked sequence decodes") {
            assert!(span.start < span.end && span.end <= len);
        }
    }
    if let Some(first) = tokens.first().and_then(|t| t.span) {
        let (enriched, markers) = enrich_tokens(&tokens, first).expect("token covers itself");
        if let Ok(seq) = TagSequence::from_labels(enriched, &labels, Scheme::BioUmemp, Some(markers)) {
            for (_, span) in decode_tags(&seq).expect("checked sequence decodes") {
                assert!(span.start < span.end && span.end <= len);
            }
        }
    }
});
