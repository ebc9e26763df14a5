//! Encode text documents as RGB images.
//!
//! Each in-vocabulary word becomes a *visual word*: its embedding vector is
//! normalized per dimension to `0..=255`, cut into RGB triplets and drawn as a
//! block of `P x P` superpixels. Visual words are laid out in reading order
//! on a `W x H` canvas with `s` pixels of blank space between them. The
//! resulting images can be fed to ordinary image classifiers.
//!
//! The pipeline is
//! [`tokenize`](tokenizer::tokenize_text) →
//! [`filter_in_vocabulary`](tokenizer::filter_in_vocabulary) →
//! [`plan_layout`](layout::plan_layout) → [`render`](raster::render), and
//! [`decode_document`](decode::decode_document) inverts it.

pub mod cli;
pub mod corpus;
pub mod decode;
pub mod digest;
pub mod embeddings;
pub mod error;
pub mod layout;
pub mod par;
pub mod raster;
pub mod synthetic;
pub mod tokenizer;

pub use corpus::{
    encode_corpus, read_20news, read_csv_corpus, CorpusRecord, CsvFieldSpec, EncodeOptions,
    EncodeReport, Manifest, ManifestEntry, Split,
};
pub use decode::{decode_document, extract_superpixels, nearest_word, DecodedDocument, QuantizedIndex};
pub use embeddings::{
    compute_normalization, dequantize, quantize, EmbeddingFormat, EmbeddingTable,
    NormalizationStats, QuantizedVector, Strictness,
};
pub use error::{Error, Result};
pub use layout::{
    capacity, plan_layout, word_geometry, EncodingParams, LayoutPlan, Placement, ShapeVariant,
    WordGeometry,
};
pub use raster::{
    compose_multimodal, crop_offsets, crops, read_png, render, write_png, CropMode, CropPolicy,
    EncodedImage, ImageMeta,
};
pub use tokenizer::{filter_in_vocabulary, tokenize, tokenize_text, CasePolicy, Document, TokenSequence};
