//! Seeded synthetic vocabularies and corpora for benchmarks and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CorpusRecord, Split};
use crate::embeddings::EmbeddingTable;
use crate::tokenizer::Document;

/// `n` words `w0, w1, ...` with components uniform in `[-1, 1)`.
pub fn random_table(n: usize, dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EmbeddingTable::from_entries((0..n).map(|i| {
        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        (format!("w{i}"), v)
    }))
    .expect("non-empty synthetic table")
}

/// Documents of `min_len..=max_len` words drawn uniformly from `table`.
pub fn random_corpus(
    table: &EmbeddingTable,
    docs: usize,
    min_len: usize,
    max_len: usize,
    labels: usize,
    seed: u64,
) -> Vec<CorpusRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..docs)
        .map(|i| {
            let len = rng.random_range(min_len..=max_len);
            let words: Vec<&str> = (0..len)
                .map(|_| table.word(rng.random_range(0..table.len())))
                .collect();
            let split = if i % 5 == 4 { Split::Test } else { Split::Train };
            CorpusRecord {
                document: Document::new(
                    format!("doc{i:06}"),
                    (1 + i % labels.max(1)).to_string(),
                    words.join(" "),
                ),
                split,
            }
        })
        .collect()
}
