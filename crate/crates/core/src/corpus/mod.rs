//! Document ingestion, content-word tagging and tf-idf featurisation.

mod document;
mod tagger;
mod tfidf;

pub use document::{ingest, label_from_rating, parse_documents, write_documents, Document, Label};
pub use tagger::{content_words, ContentTagger, LexiconTagger, Pos};
pub use tfidf::{dense_batch, terms, BowVector, BowVocab, BIGRAM_SEPARATOR};

/// Lowercased alphanumeric runs; everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("The software came!"), vec!["the", "software", "came"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("screen-savers are OK"), vec!["screen", "savers", "are", "ok"]);
    }

    proptest! {
        #[test]
        fn tokens_are_lowercase_alphanumeric(s in ".{0,64}") {
            for t in tokenize(&s) {
                prop_assert!(!t.is_empty());
                prop_assert!(t.chars().all(char::is_alphanumeric));
                prop_assert_eq!(t.to_lowercase(), t.clone());
            }
        }

        #[test]
        fn content_words_subset_of_tokens(words in proptest::collection::vec("[a-zA-Z]{1,8}", 0..20)) {
            let tagger = LexiconTagger::bundled();
            let doc = Document::from_text("d", "x", words.join(" "));
            let toks: std::collections::BTreeSet<String> = doc.tokens().into_iter().collect();
            for w in content_words(&doc, &tagger) {
                prop_assert!(toks.contains(&w));
            }
        }

        #[test]
        fn featurized_norm_is_one_or_zero(words in proptest::collection::vec("[a-e]{1,2}", 0..12)) {
            let train = [Document::from_text("t", "x", "a b c d e aa bb")];
            let vocab = BowVocab::fit(&train, 50).unwrap();
            let size = vocab.len();
            let v = vocab.featurize(&Document::from_text("q", "x", words.join(" ")));
            let n = v.norm();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
            prop_assert!(v.entries().iter().all(|&(i, w)| i < v.dim() && w >= 0.0));
            prop_assert_eq!(vocab.len(), size);
        }
    }
}
