use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced by the encoding pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("embedding parse error at line {line}: {msg}")]
    ParseLine { line: usize, msg: String },

    #[error("embedding parse error at byte {offset}: {msg}")]
    ParseBinary { offset: usize, msg: String },

    #[error("duplicate word `{word}` at record {record}")]
    DuplicateWord { word: String, record: usize },

    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("feature count must be a multiple of 3 (got {0})")]
    FeatureCountNotMultipleOf3(usize),

    #[error("feature count {requested} exceeds embedding dimension {available}")]
    FeatureCountTooLarge { requested: usize, available: usize },

    #[error("statistics cover {stats} dimensions but {needed} are required")]
    StatsDimension { stats: usize, needed: usize },

    #[error("invalid encoding parameters: {0}")]
    InvalidParams(String),

    #[error("shape {shape} is inconsistent with the parameters: {msg}")]
    ShapeMismatch { shape: String, msg: String },

    #[error("no visual word fits on a {width}x{height} canvas")]
    ZeroCapacity { width: u32, height: u32 },

    #[error("token `{0}` is not in the embedding table")]
    MissingToken(String),

    #[error("layout plan does not match image or parameters: {0}")]
    PlanMismatch(String),

    #[error("text needs {needed} visual words but only {capacity} fit ({overflow} overflow)")]
    TextOverflow {
        needed: usize,
        capacity: usize,
        overflow: usize,
    },

    #[error("crop of {crop} px does not fit a {width}x{height} image")]
    CropTooLarge { crop: u32, width: u32, height: u32 },

    #[error("invalid crop policy: {0}")]
    InvalidCropPolicy(String),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("png decode error: {0}")]
    PngDecode(#[from] png::DecodingError),

    #[error("png encode error: {0}")]
    PngEncode(#[from] png::EncodingError),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("csv error at row {row}: {msg}")]
    Csv { row: usize, msg: String },

    #[error("sidecar parse error at line {line}: {msg}")]
    Sidecar { line: usize, msg: String },

    #[error("path not found: {0}")]
    MissingPath(PathBuf),

    #[error("{failed} of {total} records failed to encode; first: {first}")]
    RecordsFailed {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}
