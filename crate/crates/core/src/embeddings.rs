//! Word-embedding tables: parsing, normalization statistics and byte
//! quantization of vectors into RGB components.
//!
//! Two on-disk formats are supported:
//!
//! * text: UTF-8, one `word v_1 ... v_D` record per line, optionally preceded
//!   by a `N D` header line;
//! * binary: an ASCII `N D\n` header followed, per record, by the word bytes,
//!   a single space and `D` little-endian `f32` values.
//!
//! Every vector component `j` is mapped onto `0..=255` using the minimum and
//! maximum of that component across the whole vocabulary.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::digest::sha256_hex;
use crate::error::{Error, Result};

/// How to treat bytes a binary file carries beyond its declared records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Text,
    Binary,
}

impl EmbeddingFormat {
    /// `.bin` files are binary, everything else is text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => EmbeddingFormat::Binary,
            _ => EmbeddingFormat::Text,
        }
    }
}

/// Per-dimension extrema over a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    min: Vec<f32>,
    max: Vec<f32>,
}

impl NormalizationStats {
    pub fn new(min: Vec<f32>, max: Vec<f32>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(Error::StatsDimension {
                stats: min.len().min(max.len()),
                needed: min.len().max(max.len()),
            });
        }
        for (j, (lo, hi)) in min.iter().zip(&max).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::Sidecar {
                    line: j + 1,
                    msg: format!("invalid range [{lo}, {hi}] for dimension {j}"),
                });
            }
        }
        Ok(Self { min, max })
    }

    /// Extrema of each of the `dim` components over `count` row-major vectors.
    fn from_flat(vectors: &[f32], dim: usize) -> Self {
        let mut min = vec![f32::INFINITY; dim];
        let mut max = vec![f32::NEG_INFINITY; dim];
        for row in vectors.chunks_exact(dim) {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Self { min, max }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn min(&self) -> &[f32] {
        &self.min
    }

    pub fn max(&self) -> &[f32] {
        &self.max
    }

    /// Write the `j min_j max_j` sidecar.
    pub fn write_sidecar<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (j, (lo, hi)) in self.min.iter().zip(&self.max).enumerate() {
            writeln!(out, "{j} {lo} {hi}")?;
        }
        out.flush()
    }

    pub fn to_sidecar_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_sidecar(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("sidecar is ASCII")
    }

    pub fn read_sidecar<R: BufRead>(input: R) -> Result<Self> {
        let mut min = Vec::new();
        let mut max = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_ascii_whitespace().collect();
            let bad = |msg: String| Error::Sidecar { line: lineno, msg };
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", fields.len())));
            }
            let j: usize = fields[0]
                .parse()
                .map_err(|_| bad(format!("bad dimension index `{}`", fields[0])))?;
            if j != min.len() {
                return Err(bad(format!("expected dimension {}, found {j}", min.len())));
            }
            let parse = |s: &str| -> Result<f32> {
                s.parse::<f32>()
                    .map_err(|_| bad(format!("bad number `{s}`")))
            };
            min.push(parse(fields[1])?);
            max.push(parse(fields[2])?);
        }
        if min.is_empty() {
            return Err(Error::Sidecar {
                line: 0,
                msg: "no dimensions".into(),
            });
        }
        Self::new(min, max)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => Error::MissingPath(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::read_sidecar(BufReader::new(file))
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.to_sidecar_string().as_bytes())
    }
}

/// Byte-valued sub-vector: consecutive triplets are RGB colors.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuantizedVector(Vec<u8>);

impl QuantizedVector {
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        if bytes.len() % 3 != 0 {
            return Err(Error::FeatureCountNotMultipleOf3(bytes.len()));
        }
        Ok(Self(bytes))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// RGB color of superpixel `i`.
    pub fn color(&self, i: usize) -> [u8; 3] {
        [self.0[3 * i], self.0[3 * i + 1], self.0[3 * i + 2]]
    }

    pub fn superpixels(&self) -> usize {
        self.0.len() / 3
    }
}

/// Check that `d` features can be taken from vectors of length `available`.
pub fn check_feature_count(d: usize, available: usize) -> Result<()> {
    if d == 0 || d % 3 != 0 {
        return Err(Error::FeatureCountNotMultipleOf3(d));
    }
    if d > available {
        return Err(Error::FeatureCountTooLarge {
            requested: d,
            available,
        });
    }
    Ok(())
}

/// Map the first `d` components of `v` to bytes.
///
/// Component `j` becomes `round((v_j - min_j) / (max_j - min_j) * 255)` with
/// ties rounded away from zero. Constant dimensions map to 0 and values outside
/// the recorded range are clamped.
pub fn quantize(v: &[f32], stats: &NormalizationStats, d: usize) -> Result<QuantizedVector> {
    check_feature_count(d, v.len())?;
    if stats.dim() < d {
        return Err(Error::StatsDimension {
            stats: stats.dim(),
            needed: d,
        });
    }
    let mut bytes = Vec::with_capacity(d);
    quantize_into(&v[..d], stats, &mut bytes);
    Ok(QuantizedVector(bytes))
}

pub(crate) fn quantize_into(v: &[f32], stats: &NormalizationStats, out: &mut Vec<u8>) {
    for (j, &x) in v.iter().enumerate() {
        out.push(quantize_component(x, stats.min[j], stats.max[j]));
    }
}

#[inline]
fn quantize_component(x: f32, lo: f32, hi: f32) -> u8 {
    let (x, lo, hi) = (f64::from(x), f64::from(lo), f64::from(hi));
    let range = hi - lo;
    if range <= 0.0 {
        return 0;
    }
    // f64::round rounds half away from zero.
    let scaled = ((x - lo) / range * 255.0).round();
    scaled.clamp(0.0, 255.0) as u8
}

/// Inverse of [`quantize`]: byte `b` of dimension `j` maps back to
/// `min_j + b / 255 * (max_j - min_j)`.
pub fn dequantize(q: &QuantizedVector, stats: &NormalizationStats) -> Vec<f64> {
    q.0.iter()
        .enumerate()
        .map(|(j, &b)| {
            let lo = f64::from(stats.min[j]);
            let hi = f64::from(stats.max[j]);
            if hi <= lo {
                lo
            } else {
                lo + f64::from(b) / 255.0 * (hi - lo)
            }
        })
        .collect()
}

/// Vocabulary of unique words with fixed-length vectors, in insertion order.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<f32>,
    dim: usize,
    stats: NormalizationStats,
}

impl PartialEq for EmbeddingTable {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.words == other.words
            && self.vectors.len() == other.vectors.len()
            && self
                .vectors
                .iter()
                .zip(&other.vectors)
                .all(|(a, b)| a.to_bits() == b.to_bits())
            && self.stats == other.stats
    }
}

struct TableBuilder {
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<f32>,
    dim: usize,
}

impl TableBuilder {
    fn new(dim: usize) -> Self {
        Self {
            words: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
            dim,
        }
    }

    fn push(&mut self, word: String, vector: &[f32]) -> Result<(), String> {
        debug_assert_eq!(vector.len(), self.dim);
        if let Some(bad) = vector.iter().position(|v| !v.is_finite()) {
            return Err(format!("non-finite value at component {bad}"));
        }
        if self.index.contains_key(&word) {
            return Err(format!("duplicate word `{word}`"));
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.vectors.extend_from_slice(vector);
        Ok(())
    }

    fn finish(self) -> Result<EmbeddingTable> {
        if self.words.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let stats = NormalizationStats::from_flat(&self.vectors, self.dim);
        Ok(EmbeddingTable {
            words: self.words,
            index: self.index,
            vectors: self.vectors,
            dim: self.dim,
            stats,
        })
    }
}

impl EmbeddingTable {
    /// Build a table from `(word, vector)` pairs; statistics are computed over
    /// all of them.
    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        let mut builder: Option<TableBuilder> = None;
        for (record, (word, vector)) in entries.into_iter().enumerate() {
            let b = builder.get_or_insert_with(|| TableBuilder::new(vector.len()));
            if vector.is_empty() || vector.len() != b.dim {
                return Err(Error::ParseLine {
                    line: record + 1,
                    msg: format!("expected {} components, found {}", b.dim, vector.len()),
                });
            }
            let word = word.into();
            if b.index.contains_key(&word) {
                return Err(Error::DuplicateWord {
                    word,
                    record: record + 1,
                });
            }
            b.push(word, &vector).map_err(|msg| Error::ParseLine {
                line: record + 1,
                msg,
            })?;
        }
        builder.ok_or(Error::EmptyVocabulary)?.finish()
    }

    /// Parse the text format, with or without a `N D` header line.
    pub fn parse_text<R: BufRead>(input: R) -> Result<Self> {
        let mut builder: Option<TableBuilder> = None;
        let mut declared: Option<(usize, usize)> = None;
        let mut values = Vec::new();
        let mut first = true;
        for (i, line) in input.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::ParseLine {
                line: lineno,
                msg: e.to_string(),
            })?;
            let mut fields = line.split_ascii_whitespace();
            let Some(word) = fields.next() else {
                continue;
            };
            let rest: Vec<&str> = fields.collect();
            if first {
                first = false;
                if rest.len() == 1 {
                    if let (Ok(n), Ok(d)) = (word.parse::<usize>(), rest[0].parse::<usize>()) {
                        if n == 0 || d == 0 {
                            return Err(Error::ParseLine {
                                line: lineno,
                                msg: format!("header declares {n} words of dimension {d}"),
                            });
                        }
                        declared = Some((n, d));
                        builder = Some(TableBuilder::new(d));
                        continue;
                    }
                }
            }
            let b = builder.get_or_insert_with(|| TableBuilder::new(rest.len()));
            if rest.is_empty() || rest.len() != b.dim {
                return Err(Error::ParseLine {
                    line: lineno,
                    msg: format!("expected {} components, found {}", b.dim, rest.len()),
                });
            }
            values.clear();
            for s in &rest {
                let v: f32 = s.parse().map_err(|_| Error::ParseLine {
                    line: lineno,
                    msg: format!("bad number `{s}`"),
                })?;
                values.push(v);
            }
            if b.index.contains_key(word) {
                return Err(Error::DuplicateWord {
                    word: word.to_string(),
                    record: b.words.len() + 1,
                });
            }
            b.push(word.to_string(), &values)
                .map_err(|msg| Error::ParseLine { line: lineno, msg })?;
        }
        let builder = builder.ok_or(Error::EmptyVocabulary)?;
        if let Some((n, _)) = declared {
            if builder.words.len() != n {
                return Err(Error::ParseLine {
                    line: 1,
                    msg: format!(
                        "header declares {n} words, found {}",
                        builder.words.len()
                    ),
                });
            }
        }
        builder.finish()
    }

    /// Parse the binary format.
    pub fn parse_binary<R: Read>(mut input: R, strictness: Strictness) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let bad = |offset: usize, msg: String| Error::ParseBinary { offset, msg };

        let header_end = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad(0, "missing header line".into()))?;
        let header = std::str::from_utf8(&bytes[..header_end])
            .map_err(|_| bad(0, "header is not ASCII".into()))?;
        let mut parts = header.split_ascii_whitespace();
        let (n, d) = match (parts.next(), parts.next(), parts.next()) {
            (Some(n), Some(d), None) => {
                let n: i64 = n.parse().map_err(|_| bad(0, format!("bad count `{n}`")))?;
                let d: i64 = d
                    .parse()
                    .map_err(|_| bad(0, format!("bad dimension `{d}`")))?;
                (n, d)
            }
            _ => return Err(bad(0, format!("malformed header `{header}`"))),
        };
        if n <= 0 || d <= 0 {
            return Err(bad(0, format!("header declares {n} words of dimension {d}")));
        }
        let (n, d) = (n as usize, d as usize);

        let mut builder = TableBuilder::new(d);
        let mut pos = header_end + 1;
        let mut values = vec![0f32; d];
        for record in 0..n {
            // Writers commonly terminate each vector with a newline.
            while pos < bytes.len() && bytes[pos] == b'\n' {
                pos += 1;
            }
            let start = pos;
            let space = bytes[start..]
                .iter()
                .position(|&b| b == b' ')
                .ok_or_else(|| bad(bytes.len(), format!("truncated word in record {}", record + 1)))?;
            let word = std::str::from_utf8(&bytes[start..start + space])
                .map_err(|_| bad(start, "word is not valid UTF-8".into()))?
                .to_string();
            if word.is_empty() {
                return Err(bad(start, "empty word".into()));
            }
            pos = start + space + 1;
            let need = 4 * d;
            if bytes.len() - pos < need {
                return Err(bad(
                    bytes.len(),
                    format!(
                        "truncated vector in record {}: need {need} bytes, {} left",
                        record + 1,
                        bytes.len() - pos
                    ),
                ));
            }
            for (v, chunk) in values.iter_mut().zip(bytes[pos..pos + need].chunks_exact(4)) {
                *v = f32::from_le_bytes(chunk.try_into().expect("chunk of 4"));
            }
            if builder.index.contains_key(&word) {
                return Err(Error::DuplicateWord {
                    word,
                    record: record + 1,
                });
            }
            builder.push(word, &values).map_err(|msg| bad(pos, msg))?;
            pos += need;
        }
        let trailing = &bytes[pos..];
        if !trailing.iter().all(|b| b.is_ascii_whitespace()) {
            let msg = format!(
                "{} trailing bytes after {n} declared records",
                trailing.len()
            );
            match strictness {
                Strictness::Strict => return Err(bad(pos, msg)),
                Strictness::Lenient => log::warn!("{msg}"),
            }
        }
        builder.finish()
    }

    pub fn load(path: &Path, format: EmbeddingFormat, strictness: Strictness) -> Result<Self> {
        let file = File::open(path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => Error::MissingPath(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let reader = BufReader::new(file);
        match format {
            EmbeddingFormat::Text => Self::parse_text(reader),
            EmbeddingFormat::Binary => Self::parse_binary(reader, strictness),
        }
    }

    /// Write the text format with a header line. Floats use the shortest
    /// representation that parses back to the same bits.
    pub fn write_text<W: Write>(&self, out: W) -> io::Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (word, vector) in self.iter() {
            write!(out, "{word}")?;
            for v in vector {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    }

    pub fn write_binary<W: Write>(&self, out: W) -> io::Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (word, vector) in self.iter() {
            out.write_all(word.as_bytes())?;
            out.write_all(b" ")?;
            for v in vector {
                out.write_all(&v.to_le_bytes())?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn lookup(&self, word: &str) -> Option<&[f32]> {
        self.index.get(word).map(|&i| self.vector(i))
    }

    pub fn position(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> + '_ {
        self.words
            .iter()
            .map(String::as_str)
            .zip(self.vectors.chunks_exact(self.dim))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn stats(&self) -> &NormalizationStats {
        &self.stats
    }

    /// Replace the statistics, e.g. with ones computed on a training split.
    pub fn with_stats(mut self, stats: NormalizationStats) -> Result<Self> {
        if stats.dim() != self.dim {
            return Err(Error::StatsDimension {
                stats: stats.dim(),
                needed: self.dim,
            });
        }
        self.stats = stats;
        Ok(self)
    }

    /// Digest of the canonical text serialization.
    pub fn digest(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to a Vec cannot fail");
        sha256_hex(&buf)
    }
}

/// Statistics over every vector of `table`.
pub fn compute_normalization(table: &EmbeddingTable) -> NormalizationStats {
    NormalizationStats::from_flat(&table.vectors, table.dim)
}
