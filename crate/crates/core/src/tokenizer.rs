//! Document tokenization and dictionary filtering.

use crate::embeddings::EmbeddingTable;

/// A labeled text document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub label: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, label: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            label: label.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CasePolicy {
    #[default]
    Lowercase,
    Keep,
}

/// Tokens in reading order, plus how many were dropped as out-of-vocabulary.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub oov_count: usize,
}

impl TokenSequence {
    pub fn new(tokens: Vec<String>) -> Self {
        Self {
            tokens,
            oov_count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Split `text` into maximal runs of Unicode letters and digits.
pub fn tokenize_text(text: &str, case: CasePolicy) -> TokenSequence {
    let tokens = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| match case {
            CasePolicy::Lowercase => t.to_lowercase(),
            CasePolicy::Keep => t.to_string(),
        })
        .collect();
    TokenSequence::new(tokens)
}

pub fn tokenize(doc: &Document) -> TokenSequence {
    tokenize_text(&doc.text, CasePolicy::Lowercase)
}

/// Keep only tokens present in `table`; the number removed is added to
/// `oov_count`.
pub fn filter_in_vocabulary(seq: TokenSequence, table: &EmbeddingTable) -> TokenSequence {
    let before = seq.tokens.len();
    let tokens: Vec<String> = seq
        .tokens
        .into_iter()
        .filter(|t| table.contains(t))
        .collect();
    TokenSequence {
        oov_count: seq.oov_count + before - tokens.len(),
        tokens,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(seq: &TokenSequence) -> Vec<&str> {
        seq.tokens.iter().map(String::as_str).collect()
    }

    #[test]
    fn product_title() {
        let seq = tokenize_text("Kidco Safeway white G2000", CasePolicy::Lowercase);
        assert_eq!(words(&seq), ["kidco", "safeway", "white", "g2000"]);
    }

    #[test]
    fn punctuation_separates() {
        let seq = tokenize_text("U.S.-based, 2nd!", CasePolicy::Lowercase);
        assert_eq!(words(&seq), ["u", "s", "based", "2nd"]);
        assert!(tokenize_text("", CasePolicy::Lowercase).is_empty());
        assert!(tokenize_text(" --!? ", CasePolicy::Lowercase).is_empty());
    }

    #[test]
    fn keep_case_and_unicode() {
        let seq = tokenize_text("Zürich café_Ωmega", CasePolicy::Keep);
        assert_eq!(words(&seq), ["Zürich", "café", "Ωmega"]);
        let seq = tokenize_text("ÉCOLE", CasePolicy::Lowercase);
        assert_eq!(words(&seq), ["école"]);
    }

    #[test]
    fn filter_counts_oov() {
        let table =
            EmbeddingTable::from_entries([("a", vec![0.0; 3]), ("b", vec![1.0; 3])]).unwrap();
        let seq = TokenSequence::new(vec!["a".into(), "zzz".into(), "b".into()]);
        let out = filter_in_vocabulary(seq, &table);
        assert_eq!(words(&out), ["a", "b"]);
        assert_eq!(out.oov_count, 1);

        let seq = TokenSequence::new(vec!["x".into(), "y".into()]);
        let out = filter_in_vocabulary(seq, &table);
        assert!(out.is_empty());
        assert_eq!(out.oov_count, 2);

        let seq = TokenSequence::new(vec!["b".into(), "a".into()]);
        let out = filter_in_vocabulary(seq.clone(), &table);
        assert_eq!(out, seq);
    }
}
