//! Replays the checked-in fuzz seeds through the same entry points the fuzz
//! targets exercise, so the seeds stay valid on a stable toolchain.

use std::fs;
use std::path::{Path, PathBuf};

use proptest::prelude::*;

use measex::config::Config;
use measex::corpus::{
    convert_source, document_to_line, parse_document_line, parse_source_line, segment_sentences, ConvertOptions,
};
use measex::pipeline::parse_prediction_line;
use measex::tags::{decode_tags, tokenize, Scheme, TagSequence};
use measex::text::slice_chars;

fn seeds(target: &str) -> Vec<String> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut files: Vec<PathBuf> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds in {}", dir.display());
    files.iter().map(|f| fs::read_to_string(f).unwrap()).collect()
}

fn check_tokens(text: &str) {
    let mut last = 0;
    for token in tokenize(text) {
        let span = token.span.unwrap();
        assert!(span.start >= last && span.start < span.end);
        assert_eq!(slice_chars(text, span), Some(token.text.as_str()));
        last = span.end;
    }
}

#[test]
fn corpus_seeds_round_trip() {
    for line in seeds("corpus_record") {
        let doc = parse_document_line(line.trim_end(), 1).unwrap();
        assert_eq!(parse_document_line(&document_to_line(&doc), 1).unwrap(), doc);
    }
}

#[test]
fn source_and_prediction_seeds_parse() {
    for line in seeds("source_record") {
        let source = parse_source_line(line.trim_end(), 1).unwrap();
        convert_source(&source, 1, &ConvertOptions::default()).unwrap();
    }
    for text in seeds("prediction_record") {
        for (i, line) in text.lines().enumerate() {
            parse_prediction_line(line, i + 1).unwrap();
        }
    }
}

#[test]
fn text_seeds_hold_invariants() {
    for text in seeds("tokenize").into_iter().chain(seeds("segment")) {
        check_tokens(&text);
        let len = text.chars().count();
        assert!(segment_sentences(&text).iter().all(|s| s.span.end <= len));
    }
    for text in seeds("tag_labels") {
        let (sentence, labels) = text.split_once('\n').unwrap();
        let labels: Vec<&str> = labels.split_whitespace().collect();
        let scheme = if labels.iter().any(|l| l.contains('-')) {
            Scheme::BioUmemp
        } else {
            Scheme::IoQ
        };
        let seq = TagSequence::from_labels(tokenize(sentence), &labels, scheme, None).unwrap();
        assert!(!decode_tags(&seq).unwrap().is_empty());
    }
    let outcomes: Vec<bool> = seeds("config_toml")
        .iter()
        .map(|t| Config::from_toml(t, Path::new(".")).is_ok())
        .collect();
    assert_eq!(outcomes, [true, false, false]);
}

proptest! {
    #[test]
    fn tokens_point_at_their_text(text in "\\PC{0,80}") {
        check_tokens(&text);
    }

    #[test]
    fn sentences_are_ordered(text in "[a-zA-Z0-9 .!?,]{0,120}") {
        let mut last = 0;
        for (i, s) in segment_sentences(&text).iter().enumerate() {
            prop_assert_eq!(s.index, i);
            prop_assert!(s.span.start >= last && s.span.start <= s.span.end);
            last = s.span.end;
        }
        prop_assert!(last <= text.len());
    }
}
