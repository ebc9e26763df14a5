//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for invalid input (flags, files, parameters),
//! 2 for failures while running. Errors are printed to stderr as a single
//! line starting with `error[validation]:` or `error[runtime]:`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::corpus::{
    encode_corpus, read_20news, read_csv_corpus, CorpusRecord, CsvFieldSpec, EncodeOptions, Split,
};
use crate::decode::{decode_document, QuantizedIndex};
use crate::embeddings::{EmbeddingFormat, EmbeddingTable, NormalizationStats, Strictness};
use crate::error::Error;
use crate::layout::{capacity, capacity_sweep, parse_rgb_hex, EncodingParams, LayoutPlan, ShapeVariant};
use crate::raster::{compose_multimodal, load_photo, load_png, resize_photo, save_png, CropPolicy};
use crate::tokenizer::{filter_in_vocabulary, tokenize_text, CasePolicy};

pub const MIRROR_REJECTED: &str =
    "mirror augmentation breaks encoding semantics: it reverses word order and the layout of every visual word";

/// Feature counts swept by `capacity --sweep`.
pub const SWEEP_FEATURES: [usize; 5] = [12, 24, 36, 48, 60];

#[derive(Debug, Parser)]
#[command(name = "wordpix", version, about = "Encode text documents as images of word-embedding colors")]
struct Cli {
    /// Log level for messages on stderr (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode a corpus into a PNG tree plus manifest.
    Encode(EncodeArgs),
    /// Decode an encoded PNG back into words.
    Decode(DecodeArgs),
    /// Print how many visual words fit on the canvas.
    Capacity(CapacityArgs),
    /// Overlay encoded text on the top of a photo.
    Compose(ComposeArgs),
    /// Summarize an embedding file.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Auto,
    Text,
    Binary,
}

#[derive(Debug, Args)]
struct EmbeddingArgs {
    /// Word-embedding file.
    #[arg(long = "emb")]
    emb: PathBuf,

    /// Embedding file format; `auto` treats `.bin` as binary.
    #[arg(long = "emb-format", value_enum, default_value = "auto")]
    format: FormatArg,

    /// Warn instead of failing on trailing bytes in binary files.
    #[arg(long)]
    lenient: bool,
}

impl EmbeddingArgs {
    fn load(&self) -> Result<EmbeddingTable, CliError> {
        let format = match self.format {
            FormatArg::Auto => EmbeddingFormat::from_path(&self.emb),
            FormatArg::Text => EmbeddingFormat::Text,
            FormatArg::Binary => EmbeddingFormat::Binary,
        };
        let strictness = if self.lenient {
            Strictness::Lenient
        } else {
            Strictness::Strict
        };
        EmbeddingTable::load(&self.emb, format, strictness).map_err(|e| {
            CliError::validation(format!("cannot load embeddings {}: {e}", self.emb.display()))
        })
    }
}

#[derive(Debug, Args)]
struct ParamArgs {
    /// Image width and height in pixels.
    #[arg(long, default_value_t = 256)]
    size: u32,

    /// Image width, overriding --size.
    #[arg(long)]
    width: Option<u32>,

    /// Image height, overriding --size.
    #[arg(long)]
    height: Option<u32>,

    /// Superpixel side in pixels.
    #[arg(long = "P", visible_alias = "superpixel", default_value_t = 4)]
    superpixel: u32,

    /// Visual-word width in superpixels.
    #[arg(long = "V", visible_alias = "word-width", default_value_t = 4)]
    word_width: u32,

    /// Blank pixels between visual words.
    #[arg(long = "s", visible_alias = "spacing", default_value_t = 12)]
    spacing: u32,

    /// Embedding features per word (multiple of 3).
    #[arg(long = "d", visible_alias = "features", default_value_t = 36)]
    features: usize,

    /// Visual-word shape: vw1..vw4 (36 features only) or vw5 (rectangle).
    #[arg(long, default_value = "vw5")]
    shape: String,

    /// Background color as rrggbb.
    #[arg(long, default_value = "000000")]
    background: String,

    /// Outer margin in pixels [default: spacing / 2].
    #[arg(long)]
    margin: Option<u32>,
}

impl ParamArgs {
    fn params(&self) -> Result<EncodingParams, CliError> {
        let params = EncodingParams {
            image_width: self.width.unwrap_or(self.size),
            image_height: self.height.unwrap_or(self.size),
            superpixel: self.superpixel,
            word_width: self.word_width,
            spacing: self.spacing,
            feature_count: self.features,
            shape: self.shape.parse::<ShapeVariant>().map_err(CliError::from)?,
            background: parse_rgb_hex(&self.background).map_err(CliError::from)?,
            margin: self.margin,
        };
        params.validate().map_err(CliError::from)?;
        Ok(params)
    }
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[command(flatten)]
    emb: EmbeddingArgs,

    /// Normalization statistics sidecar (`j min max` lines); computed from
    /// the embedding file when absent.
    #[arg(long)]
    stats: Option<PathBuf>,

    /// Training-split CSV corpus.
    #[arg(long = "in")]
    input: Option<PathBuf>,

    /// Test-split CSV corpus.
    #[arg(long = "test-in")]
    test_input: Option<PathBuf>,

    /// 20 Newsgroups by-date root directory.
    #[arg(long)]
    news20: Option<PathBuf>,

    /// Coarse 20 Newsgroups categories to keep; empty keeps every group.
    #[arg(long, value_delimiter = ',', default_value = "comp,politics,rec,religion")]
    categories: Vec<String>,

    /// 1-based CSV column holding the class index.
    #[arg(long, default_value_t = 1)]
    label_field: usize,

    /// 1-based CSV columns joined (with a space) into the document text.
    #[arg(long, value_delimiter = ',', default_value = "2,3")]
    text_fields: Vec<usize>,

    /// Output root directory.
    #[arg(long, env = "WORDPIX_OUT")]
    out: PathBuf,

    /// Worker threads [default: all cores].
    #[arg(long, env = "WORDPIX_WORKERS")]
    workers: Option<usize>,

    /// Record per-record failures in the manifest instead of failing the run.
    #[arg(long = "lenient-records")]
    lenient_records: bool,

    /// Keep token case instead of lowercasing.
    #[arg(long)]
    keep_case: bool,

    /// Also write square crops of this size under <out>/crops/.
    #[arg(long)]
    crop: Option<u32>,

    /// Random crops per training image.
    #[arg(long, default_value_t = 10)]
    crop_count: usize,

    /// Seed for random crops.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Not supported: mirroring breaks encoding semantics.
    #[arg(long)]
    mirror: bool,

    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    /// Encoded PNG.
    #[arg(long)]
    img: PathBuf,

    /// Layout plan sidecar [default: the image path with a .plan extension].
    #[arg(long)]
    plan: Option<PathBuf>,

    #[command(flatten)]
    emb: EmbeddingArgs,

    /// Statistics sidecar used when encoding.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CapacityArgs {
    /// Also print capacity for 12, 24, 36, 48 and 60 features.
    #[arg(long)]
    sweep: bool,

    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Debug, Args)]
struct ComposeArgs {
    /// Photo to draw on; resized (bilinear) to the canvas size.
    #[arg(long)]
    photo: PathBuf,

    /// Text to encode.
    #[arg(long, conflicts_with = "text_file")]
    text: Option<String>,

    /// File holding the text to encode.
    #[arg(long)]
    text_file: Option<PathBuf>,

    #[command(flatten)]
    emb: EmbeddingArgs,

    /// Statistics sidecar.
    #[arg(long)]
    stats: Option<PathBuf>,

    /// Output PNG.
    #[arg(long)]
    out: PathBuf,

    #[arg(long)]
    keep_case: bool,

    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[command(flatten)]
    emb: EmbeddingArgs,

    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Debug)]
pub struct CliError {
    code: i32,
    msg: String,
}

impl CliError {
    fn validation(msg: impl Into<String>) -> Self {
        Self {
            code: 1,
            msg: msg.into(),
        }
    }

    fn runtime(msg: impl Into<String>) -> Self {
        Self {
            code: 2,
            msg: msg.into(),
        }
    }

    pub fn code(&self) -> i32 {
        self.code
    }

    /// Single-line message with a machine-parseable prefix.
    pub fn line(&self) -> String {
        let kind = if self.code == 1 { "validation" } else { "runtime" };
        format!("error[{kind}]: {}", self.msg.replace('\n', " "))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::PngEncode(_) | Error::RecordsFailed { .. } => {
                CliError::runtime(e.to_string())
            }
            _ => CliError::validation(e.to_string()),
        }
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let rendered = e.to_string();
            let first = rendered
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("error[validation]: {first}");
            return 1;
        }
    };
    let _ = env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = match cli.command {
        Command::Encode(a) => cmd_encode(a, &mut out),
        Command::Decode(a) => cmd_decode(a, &mut out),
        Command::Capacity(a) => cmd_capacity(a, &mut out),
        Command::Compose(a) => cmd_compose(a, &mut out),
        Command::Inspect(a) => cmd_inspect(a, &mut out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            e.code()
        }
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::runtime(e.to_string())
}

fn load_stats(table: EmbeddingTable, stats: Option<&Path>) -> Result<EmbeddingTable, CliError> {
    match stats {
        None => Ok(table),
        Some(path) => {
            let stats = NormalizationStats::load(path)?;
            Ok(table.with_stats(stats)?)
        }
    }
}

fn read_csv_file(path: &Path, spec: &CsvFieldSpec, split: Split) -> Result<Vec<CorpusRecord>, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::validation(format!("cannot open {}: {e}", path.display())))?;
    read_csv_corpus(BufReader::new(file), spec.clone(), split)?
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn cmd_encode(a: EncodeArgs, out: &mut impl Write) -> Result<(), CliError> {
    if a.mirror {
        return Err(CliError::validation(MIRROR_REJECTED));
    }
    let params = a.params.params()?;
    if a.input.is_none() && a.test_input.is_none() && a.news20.is_none() {
        return Err(CliError::validation(
            "no corpus given (use --in, --test-in or --news20)",
        ));
    }
    if a.news20.is_some() && (a.input.is_some() || a.test_input.is_some()) {
        return Err(CliError::validation("--news20 cannot be combined with CSV inputs"));
    }
    let crop = match a.crop {
        Some(size) => {
            if size > params.image_width.min(params.image_height) {
                return Err(CliError::validation(format!(
                    "crop of {size} px does not fit a {}x{} image",
                    params.image_width, params.image_height
                )));
            }
            Some(CropPolicy::random(size, a.crop_count, a.seed))
        }
        None => None,
    };
    let table = load_stats(a.emb.load()?, a.stats.as_deref())?;

    let mut records = Vec::new();
    let spec = CsvFieldSpec {
        label_field: a.label_field,
        text_fields: a.text_fields.clone(),
    };
    if let Some(path) = &a.input {
        records.extend(read_csv_file(path, &spec, Split::Train)?);
    }
    if let Some(path) = &a.test_input {
        records.extend(read_csv_file(path, &spec, Split::Test)?);
    }
    if let Some(root) = &a.news20 {
        let categories: Vec<String> = a.categories.iter().filter(|c| !c.is_empty()).cloned().collect();
        let corpus = read_20news(root, &categories)?;
        if corpus.skipped > 0 {
            log::warn!("{} unreadable files skipped", corpus.skipped);
        }
        records.extend(corpus.records);
    }

    let options = EncodeOptions {
        workers: a.workers.unwrap_or_else(crate::par::default_workers).max(1),
        strict: !a.lenient_records,
        case: if a.keep_case {
            CasePolicy::Keep
        } else {
            CasePolicy::Lowercase
        },
        crop,
    };
    let report = encode_corpus(&records, &table, &params, &options, &a.out)?;
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let tokens = report.tokens();
    writeln!(
        out,
        "records {}\nfailed {}\ntokens {}\noov_rate {:.4}\noverflow_rate {:.4}\nelapsed_s {:.3}\ndocs_per_s {:.1}\nparams_digest {}",
        report.manifest.entries.len(),
        report.failed(),
        tokens,
        ratio(report.oov(), tokens),
        ratio(report.overflow(), tokens),
        report.elapsed.as_secs_f64(),
        report.documents_per_second(),
        report.manifest.params_digest,
    )
    .map_err(io_err)
}

fn cmd_decode(a: DecodeArgs, out: &mut impl Write) -> Result<(), CliError> {
    let plan_path = a.plan.clone().unwrap_or_else(|| a.img.with_extension("plan"));
    let plan_file = File::open(&plan_path).map_err(|e| {
        CliError::validation(format!("missing layout plan {}: {e}", plan_path.display()))
    })?;
    let (plan, params) = LayoutPlan::read_sidecar(BufReader::new(plan_file))?;
    let img = load_png(&a.img)?;
    if img.width() != params.image_width || img.height() != params.image_height {
        return Err(CliError::validation(format!(
            "image is {}x{} but was encoded at {}x{}; cropped or resized images cannot be decoded",
            img.width(),
            img.height(),
            params.image_width,
            params.image_height
        )));
    }
    if let Some(digest) = img.meta.params_digest() {
        if digest != plan.params_digest {
            return Err(CliError::validation(
                "layout plan and image were encoded with different parameters",
            ));
        }
    }
    let table = load_stats(a.emb.load()?, a.stats.as_deref())?;
    let index = QuantizedIndex::build(&table, params.feature_count)?;
    let doc = decode_document(&img, &plan, &params, &index, &table)?;
    if doc.mean_distance > 0.0 {
        log::warn!(
            "mean distance {:.4} > 0: statistics or embeddings differ from the ones used to encode",
            doc.mean_distance
        );
    }
    doc.write_text(out).map_err(io_err)
}

fn cmd_capacity(a: CapacityArgs, out: &mut impl Write) -> Result<(), CliError> {
    let params = a.params.params()?;
    let cap = capacity(&params)?;
    writeln!(out, "capacity {cap}").map_err(io_err)?;
    if a.sweep {
        writeln!(out, "d\tcapacity").map_err(io_err)?;
        let base = EncodingParams {
            shape: ShapeVariant::Vw5,
            ..params
        };
        for (d, cap) in capacity_sweep(&base, &SWEEP_FEATURES) {
            match cap {
                Ok(c) => writeln!(out, "{d}\t{c}"),
                Err(e) => writeln!(out, "{d}\t- ({e})"),
            }
            .map_err(io_err)?;
        }
    }
    Ok(())
}

fn cmd_compose(a: ComposeArgs, out: &mut impl Write) -> Result<(), CliError> {
    let params = a.params.params()?;
    let text = match (&a.text, &a.text_file) {
        (Some(t), _) => t.clone(),
        (None, Some(path)) => std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?,
        (None, None) => String::new(),
    };
    let table = load_stats(a.emb.load()?, a.stats.as_deref())?;
    crate::embeddings::check_feature_count(params.feature_count, table.dim())?;
    let photo = load_photo(&a.photo)?;
    let photo = resize_photo(&photo, params.image_width, params.image_height);
    let case = if a.keep_case {
        CasePolicy::Keep
    } else {
        CasePolicy::Lowercase
    };
    let tokens = filter_in_vocabulary(tokenize_text(&text, case), &table);
    let composed = compose_multimodal(&photo, &tokens, &table, &params)?;
    save_png(&composed, &a.out)?;
    writeln!(
        out,
        "tokens {}\noov {}\nwritten {}",
        tokens.len(),
        tokens.oov_count,
        a.out.display()
    )
    .map_err(io_err)
}

fn cmd_inspect(a: InspectArgs, out: &mut impl Write) -> Result<(), CliError> {
    let params = a.params.params()?;
    let table = a.emb.load()?;
    let stats = table.stats();
    // the census never asks for more features than the table has
    let d = params.feature_count.min(table.dim() / 3 * 3);
    let ranges: Vec<f64> = stats
        .min()
        .iter()
        .zip(stats.max())
        .map(|(lo, hi)| f64::from(*hi) - f64::from(*lo))
        .collect();
    let constant = ranges.iter().filter(|&&r| r == 0.0).count();
    let lowest = stats.min().iter().copied().fold(f32::INFINITY, f32::min);
    let highest = stats.max().iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mean_range = ranges.iter().sum::<f64>() / ranges.len() as f64;
    writeln!(out, "vocab {}", table.len()).map_err(io_err)?;
    writeln!(out, "dim {}", table.dim()).map_err(io_err)?;
    writeln!(out, "min {lowest}\nmax {highest}\nmean_range {mean_range:.6}\nconstant_dims {constant}")
        .map_err(io_err)?;
    if d == 0 {
        writeln!(out, "collisions n/a (dimension below 3)").map_err(io_err)?;
    } else {
        let index = QuantizedIndex::build(&table, d)?;
        let collisions = index.collisions();
        writeln!(out, "features {d}\ncollisions {}", collisions.len()).map_err(io_err)?;
        for (a, b) in collisions.iter().take(10) {
            log::info!("collision: `{}` and `{}`", table.word(*a), table.word(*b));
        }
    }
    writeln!(
        out,
        "table_digest {}\nstats_digest {}\nparams_digest {}",
        table.digest(),
        stats.digest(),
        params.digest()
    )
    .map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn defaults_match_the_reference_configuration() {
        let cli = Cli::try_parse_from(["wordpix", "capacity"]).unwrap();
        let Command::Capacity(a) = cli.command else {
            panic!("wrong subcommand");
        };
        let p = a.params.params().unwrap();
        assert_eq!(p.canonical(), EncodingParams::default().canonical());
    }

    #[test]
    fn error_lines_are_prefixed() {
        let e = CliError::from(Error::FeatureCountNotMultipleOf3(35));
        assert_eq!(e.code(), 1);
        assert_eq!(
            e.line(),
            "error[validation]: feature count must be a multiple of 3 (got 35)"
        );
        assert_eq!(CliError::runtime("x\ny").line(), "error[runtime]: x y");
    }
}
