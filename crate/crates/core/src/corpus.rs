//! Corpus ingestion and batch encoding.
//!
//! Encoding writes `<root>/<split>/<label>/<id>.png` (plus a `.plan` layout
//! sidecar next to each image), `params.txt`, `stats.txt` and finally
//! `manifest.tsv`. Records are processed independently, so the number of
//! workers never changes a single output byte.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::layout::{plan_layout, EncodingParams};
use crate::par::map_ordered;
use crate::raster::{crop_offsets, render, write_png, CropMode, CropPolicy};
use crate::tokenizer::{filter_in_vocabulary, tokenize_text, CasePolicy, Document};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidParams(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRecord {
    pub document: Document,
    pub split: Split,
}

/// Which CSV columns hold the label and the text (1-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvFieldSpec {
    pub label_field: usize,
    pub text_fields: Vec<usize>,
}

impl Default for CsvFieldSpec {
    /// `class index, title, description`.
    fn default() -> Self {
        Self {
            label_field: 1,
            text_fields: vec![2, 3],
        }
    }
}

/// Streaming reader over a headerless, double-quoted CSV corpus.
pub struct CsvCorpusReader<R: Read> {
    records: csv::StringRecordsIntoIter<R>,
    spec: CsvFieldSpec,
    split: Split,
    row: usize,
}

impl<R: Read> Iterator for CsvCorpusReader<R> {
    type Item = Result<CorpusRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let record = self.records.next()?;
        self.row += 1;
        let row = self.row;
        let err = |msg: String| Error::Csv { row, msg };
        Some(record.map_err(|e| err(e.to_string())).and_then(|rec| {
            let field = |i: usize| {
                rec.get(i - 1)
                    .ok_or_else(|| err(format!("no field {i} (row has {})", rec.len())))
            };
            let raw_label = field(self.spec.label_field)?.trim();
            let label: u32 = raw_label
                .parse()
                .ok()
                .filter(|&l| l >= 1)
                .ok_or_else(|| err(format!("class index `{raw_label}` is not a positive integer")))?;
            let mut text = String::new();
            for &i in &self.spec.text_fields {
                let part = field(i)?.trim();
                if part.is_empty() {
                    continue;
                }
                if !text.is_empty() {
                    text.push(' ');
                }
                text.push_str(part);
            }
            Ok(CorpusRecord {
                document: Document::new(
                    format!("{}-{row:08}", self.split),
                    label.to_string(),
                    text,
                ),
                split: self.split,
            })
        }))
    }
}

pub fn read_csv_corpus<R: Read>(
    source: R,
    spec: CsvFieldSpec,
    split: Split,
) -> Result<CsvCorpusReader<R>> {
    if spec.label_field == 0 || spec.text_fields.iter().any(|&f| f == 0) {
        return Err(Error::InvalidParams("CSV field indices are 1-based".into()));
    }
    let reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source);
    Ok(CsvCorpusReader {
        records: reader.into_records(),
        spec,
        split,
        row: 0,
    })
}

/// Coarse category of a 20 Newsgroups group name.
pub fn news20_category(group: &str) -> &str {
    if group.starts_with("comp.") {
        "comp"
    } else if group.starts_with("talk.politics.") {
        "politics"
    } else if group.starts_with("rec.") {
        "rec"
    } else if group == "alt.atheism" || group.contains("religion") {
        "religion"
    } else if group.starts_with("sci.") {
        "sci"
    } else {
        "misc"
    }
}

#[derive(Debug, Default)]
pub struct News20Corpus {
    pub records: Vec<CorpusRecord>,
    /// Files that could not be read.
    pub skipped: usize,
}

/// Read the by-date tree: `<root>/*train*/<group>/<message>` and
/// `<root>/*test*/<group>/<message>`.
///
/// With a non-empty `categories` filter, groups are labeled by their coarse
/// category and groups outside the filter are skipped; with an empty filter
/// every group is its own label.
pub fn read_20news(root: &Path, categories: &[String]) -> Result<News20Corpus> {
    if !root.is_dir() {
        return Err(Error::MissingPath(root.to_path_buf()));
    }
    let mut split_dirs = Vec::new();
    for entry in fs::read_dir(root)? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        let split = if name.ends_with("train") {
            Split::Train
        } else if name.ends_with("test") {
            Split::Test
        } else {
            continue;
        };
        split_dirs.push((split, entry.path()));
    }
    if split_dirs.is_empty() {
        return Err(Error::MissingPath(root.join("20news-bydate-train")));
    }
    split_dirs.sort();

    let mut corpus = News20Corpus::default();
    for (split, dir) in split_dirs {
        let mut groups: Vec<_> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        groups.sort();
        for group in groups {
            let label = if categories.is_empty() {
                group.clone()
            } else {
                let cat = news20_category(&group);
                if !categories.iter().any(|c| c == cat) {
                    continue;
                }
                cat.to_string()
            };
            let mut files: Vec<PathBuf> = walkdir::WalkDir::new(dir.join(&group))
                .min_depth(1)
                .max_depth(1)
                .into_iter()
                .filter_map(|e| e.ok())
                .filter(|e| e.file_type().is_file())
                .map(|e| e.into_path())
                .collect();
            // message files are numbered
            files.sort_by_key(|p| {
                let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
                (name.parse::<u64>().unwrap_or(u64::MAX), name)
            });
            for path in files {
                let bytes = match fs::read(&path) {
                    Ok(b) => b,
                    Err(e) => {
                        log::warn!("skipping {}: {e}", path.display());
                        corpus.skipped += 1;
                        continue;
                    }
                };
                let file = path.file_name().unwrap_or_default().to_string_lossy();
                corpus.records.push(CorpusRecord {
                    document: Document::new(
                        format!("{split}-{group}-{file}"),
                        label.clone(),
                        String::from_utf8_lossy(&bytes).into_owned(),
                    ),
                    split,
                });
            }
        }
    }
    Ok(corpus)
}

#[derive(Debug, Clone)]
pub struct EncodeOptions {
    pub workers: usize,
    pub strict: bool,
    pub case: CasePolicy,
    /// Crops written under `<root>/crops/`: random crops for the training
    /// split, one center crop for the test split.
    pub crop: Option<CropPolicy>,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self {
            workers: crate::par::default_workers(),
            strict: true,
            case: CasePolicy::Lowercase,
            crop: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub label: String,
    pub split: Split,
    /// Relative to the output root.
    pub path: String,
    pub token_count: usize,
    pub oov_count: usize,
    pub overflow_count: usize,
    pub crops: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub params_digest: String,
    pub table_digest: String,
    pub stats_digest: String,
    pub entries: Vec<ManifestEntry>,
}

const MANIFEST_MAGIC: &str = "# wordpix manifest v1";
const MANIFEST_COLUMNS: &str = "id\tlabel\tsplit\tpath\ttokens\toov\toverflow\tcrops\terror";

impl Manifest {
    pub fn write<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(
            out,
            "{MANIFEST_MAGIC} params={} table={} stats={} records={}",
            self.params_digest,
            self.table_digest,
            self.stats_digest,
            self.entries.len()
        )?;
        writeln!(out, "{MANIFEST_COLUMNS}")?;
        for e in &self.entries {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                e.id,
                e.label,
                e.split,
                e.path,
                e.token_count,
                e.oov_count,
                e.overflow_count,
                e.crops,
                e.error.as_deref().map(one_line).unwrap_or_default()
            )?;
        }
        out.flush()
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let bad = |line: usize, msg: String| Error::Sidecar { line, msg };
        let header = lines.next().ok_or_else(|| bad(1, "empty manifest".into()))??;
        let rest = header
            .strip_prefix(MANIFEST_MAGIC)
            .ok_or_else(|| bad(1, "not a manifest".into()))?;
        let mut digests = [String::new(), String::new(), String::new()];
        for field in rest.split_ascii_whitespace() {
            match field.split_once('=') {
                Some(("params", v)) => digests[0] = v.to_string(),
                Some(("table", v)) => digests[1] = v.to_string(),
                Some(("stats", v)) => digests[2] = v.to_string(),
                _ => {}
            }
        }
        lines.next().ok_or_else(|| bad(2, "missing column line".into()))??;
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 3;
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 9 {
                return Err(bad(lineno, format!("expected 9 columns, found {}", f.len())));
            }
            let num = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| bad(lineno, format!("bad count `{s}`")))
            };
            entries.push(ManifestEntry {
                id: f[0].to_string(),
                label: f[1].to_string(),
                split: f[2].parse()?,
                path: f[3].to_string(),
                token_count: num(f[4])?,
                oov_count: num(f[5])?,
                overflow_count: num(f[6])?,
                crops: num(f[7])?,
                error: (!f[8].is_empty()).then(|| f[8].to_string()),
            });
        }
        let [params_digest, table_digest, stats_digest] = digests;
        Ok(Self {
            params_digest,
            table_digest,
            stats_digest,
            entries,
        })
    }
}

fn one_line(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

/// Replace anything that is not safe in a file name.
fn path_component(s: &str) -> String {
    let cleaned: String = s
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    match cleaned.as_str() {
        "" | "." | ".." => format!("_{cleaned}"),
        _ => cleaned,
    }
}

#[derive(Debug, Clone)]
pub struct EncodeReport {
    pub manifest: Manifest,
    pub elapsed: Duration,
}

impl EncodeReport {
    pub fn documents_per_second(&self) -> f64 {
        let secs = self.elapsed.as_secs_f64();
        if secs == 0.0 {
            f64::INFINITY
        } else {
            self.manifest.entries.len() as f64 / secs
        }
    }

    pub fn failed(&self) -> usize {
        self.manifest.entries.iter().filter(|e| e.error.is_some()).count()
    }

    pub fn tokens(&self) -> usize {
        self.manifest.entries.iter().map(|e| e.token_count).sum()
    }

    pub fn oov(&self) -> usize {
        self.manifest.entries.iter().map(|e| e.oov_count).sum()
    }

    pub fn overflow(&self) -> usize {
        self.manifest.entries.iter().map(|e| e.overflow_count).sum()
    }
}

/// Tokenize, filter, lay out, render and write every record.
///
/// The table's statistics are used for every split; load training-split
/// statistics into the table before encoding test data.
pub fn encode_corpus(
    records: &[CorpusRecord],
    table: &EmbeddingTable,
    params: &EncodingParams,
    options: &EncodeOptions,
    root: &Path,
) -> Result<EncodeReport> {
    params.validate()?;
    crate::embeddings::check_feature_count(params.feature_count, table.dim())?;
    if let Some(policy) = &options.crop {
        crop_offsets(params.image_width, params.image_height, "", policy)?;
    }
    let start = Instant::now();

    fs::create_dir_all(root)?;
    let dirs: BTreeSet<PathBuf> = records
        .iter()
        .map(|r| entry_dir(r))
        .collect();
    for dir in &dirs {
        fs::create_dir_all(root.join(dir))?;
        if options.crop.is_some() {
            fs::create_dir_all(root.join("crops").join(dir))?;
        }
    }

    let entries = map_ordered(records, options.workers, |_, record| {
        encode_record(record, table, params, options, root)
    });

    let failures: Vec<&ManifestEntry> = entries.iter().filter(|e| e.error.is_some()).collect();
    if let Some(first) = failures.first() {
        if options.strict {
            return Err(Error::RecordsFailed {
                failed: failures.len(),
                total: entries.len(),
                first: format!("{}: {}", first.id, first.error.as_deref().unwrap_or("")),
            });
        }
        log::warn!("{} of {} records failed", failures.len(), entries.len());
    }

    let manifest = Manifest {
        params_digest: params.digest(),
        table_digest: table.digest(),
        stats_digest: table.stats().digest(),
        entries,
    };
    fs::write(root.join("params.txt"), format!("{}\n", params.canonical()))?;
    let mut stats = File::create(root.join("stats.txt"))?;
    table.stats().write_sidecar(&mut stats)?;
    manifest.write(File::create(root.join("manifest.tsv"))?)?;

    Ok(EncodeReport {
        manifest,
        elapsed: start.elapsed(),
    })
}

fn entry_dir(record: &CorpusRecord) -> PathBuf {
    PathBuf::from(record.split.as_str()).join(path_component(&record.document.label))
}

fn encode_record(
    record: &CorpusRecord,
    table: &EmbeddingTable,
    params: &EncodingParams,
    options: &EncodeOptions,
    root: &Path,
) -> ManifestEntry {
    let doc = &record.document;
    let rel = entry_dir(record).join(format!("{}.png", path_component(&doc.id)));
    let mut entry = ManifestEntry {
        id: doc.id.clone(),
        label: doc.label.clone(),
        split: record.split,
        path: rel.to_string_lossy().replace('\\', "/"),
        token_count: 0,
        oov_count: 0,
        overflow_count: 0,
        crops: 0,
        error: None,
    };
    let raw = tokenize_text(&doc.text, options.case);
    entry.token_count = raw.len();
    let tokens = filter_in_vocabulary(raw, table);
    entry.oov_count = tokens.oov_count;
    if entry.token_count > 0 && tokens.is_empty() {
        log::warn!("{}: all {} tokens are out of vocabulary", doc.id, entry.token_count);
    }

    let result = (|| -> Result<(usize, usize)> {
        let plan = plan_layout(tokens.len(), params)?;
        let mut img = render(&plan, &tokens, table, params)?;
        img.meta.doc_id = doc.id.clone();
        let path = root.join(&rel);
        write_png(&img, File::create(&path)?)?;
        let mut sidecar = BufWriter::new(File::create(path.with_extension("plan"))?);
        plan.write_sidecar(params, &mut sidecar)?;

        let mut written = 0;
        if let Some(policy) = &options.crop {
            let policy = match record.split {
                Split::Train => policy.clone(),
                Split::Test => CropPolicy {
                    mode: CropMode::Center,
                    ..policy.clone()
                },
            };
            let stem = path_component(&doc.id);
            let dir = root.join("crops").join(entry_dir(record));
            for (k, crop) in crate::raster::crops(&img, &policy)?.iter().enumerate() {
                write_png(crop, File::create(dir.join(format!("{stem}_{k}.png")))?)?;
                written += 1;
            }
        }
        Ok((plan.overflow_count, written))
    })();
    match result {
        Ok((overflow, crops)) => {
            entry.overflow_count = overflow;
            entry.crops = crops;
        }
        Err(e) => entry.error = Some(e.to_string()),
    }
    entry
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_records(input: &str) -> Vec<Result<CorpusRecord>> {
        read_csv_corpus(input.as_bytes(), CsvFieldSpec::default(), Split::Train)
            .unwrap()
            .collect()
    }

    #[test]
    fn csv_concatenates_title_and_description() {
        let recs = csv_records("\"3\",\"title words\",\"description words\"\n");
        let r = recs[0].as_ref().unwrap();
        assert_eq!(r.document.label, "3");
        assert_eq!(r.document.text, "title words description words");
        assert_eq!(r.document.id, "train-00000001");
    }

    #[test]
    fn csv_unescapes_quotes_and_skips_empty_fields() {
        let recs = csv_records("\"1\",\"say \"\"hi\"\"\",\"\"\n\"2\",\"only\",\"\"\n");
        assert_eq!(recs[0].as_ref().unwrap().document.text, "say \"hi\"");
        assert_eq!(recs[1].as_ref().unwrap().document.text, "only");
    }

    #[test]
    fn csv_errors_carry_row_numbers() {
        let recs = csv_records("\"1\",\"a\",\"b\"\n\"x\",\"a\",\"b\"\n\"2\",\"a\"\n");
        assert!(recs[0].is_ok());
        assert!(matches!(recs[1], Err(Error::Csv { row: 2, .. })));
        assert!(matches!(recs[2], Err(Error::Csv { row: 3, .. })));
        assert!(read_csv_corpus(
            "".as_bytes(),
            CsvFieldSpec {
                label_field: 0,
                text_fields: vec![]
            },
            Split::Test
        )
        .is_err());
    }

    #[test]
    fn news20_categories() {
        assert_eq!(news20_category("comp.graphics"), "comp");
        assert_eq!(news20_category("talk.politics.guns"), "politics");
        assert_eq!(news20_category("rec.autos"), "rec");
        assert_eq!(news20_category("alt.atheism"), "religion");
        assert_eq!(news20_category("soc.religion.christian"), "religion");
        assert_eq!(news20_category("talk.religion.misc"), "religion");
        assert_eq!(news20_category("sci.space"), "sci");
        assert_eq!(news20_category("misc.forsale"), "misc");
    }

    #[test]
    fn path_components_are_sanitized() {
        assert_eq!(path_component("a/b c"), "a_b_c");
        assert_eq!(path_component(".."), "_..");
        assert_eq!(path_component("train-00000001"), "train-00000001");
    }

    #[test]
    fn manifest_round_trip() {
        let m = Manifest {
            params_digest: "p".into(),
            table_digest: "t".into(),
            stats_digest: "s".into(),
            entries: vec![ManifestEntry {
                id: "x".into(),
                label: "1".into(),
                split: Split::Test,
                path: "test/1/x.png".into(),
                token_count: 4,
                oov_count: 1,
                overflow_count: 0,
                crops: 0,
                error: Some("bad\tthing".into()),
            }],
        };
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        let back = Manifest::read(&buf[..]).unwrap();
        assert_eq!(back.entries[0].error.as_deref(), Some("bad thing"));
        assert_eq!(back.params_digest, "p");
        assert_eq!(back.entries[0].token_count, 4);
    }
}
