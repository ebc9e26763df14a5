//! Pixel buffers: rendering layout plans, lossless PNG I/O, crop augmentation
//! and text-over-photo composition.
//!
//! There is deliberately no horizontal flip. Mirroring an encoded image
//! reverses reading order and the internal layout of every visual word, so
//! it produces a different document rather than an augmented copy.

use std::io::{BufWriter, Cursor, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::embeddings::{quantize, EmbeddingTable, QuantizedVector};
use crate::error::{Error, Result};
use crate::layout::{plan_layout, EncodingParams, LayoutPlan};
use crate::tokenizer::TokenSequence;

/// Provenance stored alongside the pixels (PNG text chunks).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ImageMeta {
    pub doc_id: String,
    /// Canonical parameter string, empty for images that are not encodings.
    pub params: String,
    pub overflow: usize,
    pub oov: usize,
}

impl ImageMeta {
    pub fn params_digest(&self) -> Option<String> {
        (!self.params.is_empty()).then(|| crate::digest::sha256_hex(self.params.as_bytes()))
    }
}

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
    pub meta: ImageMeta,
}

impl EncodedImage {
    pub fn filled(width: u32, height: u32, color: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&color);
        }
        Self {
            width,
            height,
            pixels,
            meta: ImageMeta::default(),
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::UnsupportedFormat(format!(
                "{width}x{height} RGB needs {expected} bytes, got {}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            meta: ImageMeta::default(),
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.offset(x, y);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Bytes of row `y`.
    pub fn row(&self, y: u32) -> &[u8] {
        let stride = self.width as usize * 3;
        &self.pixels[y as usize * stride..(y as usize + 1) * stride]
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    fn fill_rect(&mut self, x: u32, y: u32, w: u32, h: u32, color: [u8; 3]) {
        for row in y..y + h {
            let start = self.offset(x, row);
            for px in self.pixels[start..start + w as usize * 3].chunks_exact_mut(3) {
                px.copy_from_slice(&color);
            }
        }
    }

    /// Copy of the `size x size` square whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: u32, y: u32, size: u32) -> Result<EncodedImage> {
        if u64::from(x) + u64::from(size) > u64::from(self.width)
            || u64::from(y) + u64::from(size) > u64::from(self.height)
        {
            return Err(Error::CropTooLarge {
                crop: size,
                width: self.width,
                height: self.height,
            });
        }
        let mut pixels = Vec::with_capacity(size as usize * size as usize * 3);
        for row in y..y + size {
            let start = self.offset(x, row);
            pixels.extend_from_slice(&self.pixels[start..start + size as usize * 3]);
        }
        Ok(EncodedImage {
            width: size,
            height: size,
            pixels,
            meta: self.meta.clone(),
        })
    }
}

/// Paint already-quantized visual words at the plan's placements.
///
/// `words[k]` is drawn at `plan.placements[k]`.
pub fn render_quantized(
    plan: &LayoutPlan,
    words: &[QuantizedVector],
    params: &EncodingParams,
) -> Result<EncodedImage> {
    let geom = params.validate()?;
    if plan.params_digest != params.digest() {
        return Err(Error::PlanMismatch("plan was built for other parameters".into()));
    }
    if words.len() != plan.placements.len() {
        return Err(Error::PlanMismatch(format!(
            "{} placements but {} words",
            plan.placements.len(),
            words.len()
        )));
    }
    let mut img = EncodedImage::filled(params.image_width, params.image_height, params.background);
    let p = params.superpixel;
    for (placement, word) in plan.placements.iter().zip(words) {
        if word.len() != params.feature_count {
            return Err(Error::PlanMismatch(format!(
                "word has {} features, expected {}",
                word.len(),
                params.feature_count
            )));
        }
        if placement.x + geom.width_px > img.width || placement.y + geom.height_px > img.height {
            return Err(Error::PlanMismatch(format!(
                "placement ({}, {}) falls outside the canvas",
                placement.x, placement.y
            )));
        }
        for i in 0..word.superpixels() {
            let (dx, dy) = geom.slot_origin(i);
            img.fill_rect(placement.x + dx, placement.y + dy, p, p, word.color(i));
        }
    }
    img.meta = ImageMeta {
        doc_id: String::new(),
        params: params.canonical(),
        overflow: plan.overflow_count,
        oov: 0,
    };
    Ok(img)
}

/// Render the placed tokens of `tokens` with colors from `table`.
pub fn render(
    plan: &LayoutPlan,
    tokens: &TokenSequence,
    table: &EmbeddingTable,
    params: &EncodingParams,
) -> Result<EncodedImage> {
    let words = plan
        .placements
        .iter()
        .map(|p| {
            let token = tokens.tokens.get(p.token_index).ok_or_else(|| {
                Error::PlanMismatch(format!("token index {} out of range", p.token_index))
            })?;
            let vector = table
                .lookup(token)
                .ok_or_else(|| Error::MissingToken(token.clone()))?;
            quantize(vector, table.stats(), params.feature_count)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut img = render_quantized(plan, &words, params)?;
    img.meta.oov = tokens.oov_count;
    Ok(img)
}

const KEY_DOC_ID: &str = "doc_id";
const KEY_PARAMS: &str = "params";
const KEY_OVERFLOW: &str = "overflow";
const KEY_OOV: &str = "oov";

/// Encode as 8-bit RGB non-interlaced PNG with metadata text chunks.
///
/// Compression settings are fixed so identical images give identical bytes.
pub fn write_png<W: Write>(img: &EncodedImage, sink: W) -> Result<()> {
    let mut encoder = png::Encoder::new(BufWriter::new(sink), img.width, img.height);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    encoder.set_compression(png::Compression::Fast);
    encoder.set_filter(png::Filter::Up);
    let meta = &img.meta;
    encoder.add_text_chunk(KEY_DOC_ID.into(), meta.doc_id.clone())?;
    encoder.add_text_chunk(KEY_PARAMS.into(), meta.params.clone())?;
    encoder.add_text_chunk(KEY_OVERFLOW.into(), meta.overflow.to_string())?;
    encoder.add_text_chunk(KEY_OOV.into(), meta.oov.to_string())?;
    let mut writer = encoder.write_header()?;
    writer.write_image_data(&img.pixels)?;
    writer.finish()?;
    Ok(())
}

pub fn png_bytes(img: &EncodedImage) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_png(img, &mut buf)?;
    Ok(buf)
}

/// Decode an 8-bit RGB PNG. Other color types and depths are rejected.
pub fn read_png<R: Read>(mut source: R) -> Result<EncodedImage> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info()?;
    let info = reader.info();
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat(format!(
            "expected 8-bit RGB, found {:?} at {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let (width, height) = (info.width, info.height);
    let mut meta = ImageMeta::default();
    for chunk in &info.uncompressed_latin1_text {
        let text = chunk.text.clone();
        match chunk.keyword.as_str() {
            KEY_DOC_ID => meta.doc_id = text,
            KEY_PARAMS => meta.params = text,
            KEY_OVERFLOW => meta.overflow = text.parse().unwrap_or(0),
            KEY_OOV => meta.oov = text.parse().unwrap_or(0),
            _ => {}
        }
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::UnsupportedFormat("image too large".into()))?;
    let mut pixels = vec![0; size];
    let frame = reader.next_frame(&mut pixels)?;
    pixels.truncate(frame.buffer_size());
    let mut img = EncodedImage::from_pixels(width, height, pixels)?;
    img.meta = meta;
    Ok(img)
}

pub fn save_png(img: &EncodedImage, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_png(img, file)
}

pub fn load_png(path: &Path) -> Result<EncodedImage> {
    let file = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingPath(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    read_png(std::io::BufReader::new(file))
}

/// Load any supported photo format as RGB.
pub fn load_photo(path: &Path) -> Result<EncodedImage> {
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    let rgb = image::open(path)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    EncodedImage::from_pixels(w, h, rgb.into_raw())
}

/// Bilinear resize; returns an unchanged copy when the size already matches.
pub fn resize_photo(photo: &EncodedImage, width: u32, height: u32) -> EncodedImage {
    if photo.width == width && photo.height == height {
        return photo.clone();
    }
    let buf = image::RgbImage::from_raw(photo.width, photo.height, photo.pixels.clone())
        .expect("buffer length checked at construction");
    let resized =
        image::imageops::resize(&buf, width, height, image::imageops::FilterType::Triangle);
    let mut out = EncodedImage::from_pixels(width, height, resized.into_raw())
        .expect("resize produces a full buffer");
    out.meta = photo.meta.clone();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CropMode {
    Random,
    Center,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CropPolicy {
    pub crop_size: u32,
    pub count: usize,
    pub seed: u64,
    pub mode: CropMode,
}

impl CropPolicy {
    /// `count` independent uniformly placed crops.
    pub fn random(crop_size: u32, count: usize, seed: u64) -> Self {
        Self {
            crop_size,
            count,
            seed,
            mode: CropMode::Random,
        }
    }

    pub fn center(crop_size: u32) -> Self {
        Self {
            crop_size,
            count: 1,
            seed: 0,
            mode: CropMode::Center,
        }
    }

    fn validate(&self, width: u32, height: u32) -> Result<()> {
        if self.crop_size == 0 {
            return Err(Error::InvalidCropPolicy("crop size must be positive".into()));
        }
        if self.mode == CropMode::Random && self.count == 0 {
            return Err(Error::InvalidCropPolicy(
                "random mode needs at least one crop".into(),
            ));
        }
        if self.crop_size > width.min(height) {
            return Err(Error::CropTooLarge {
                crop: self.crop_size,
                width,
                height,
            });
        }
        Ok(())
    }
}

/// Generator for the crops of one document, seeded by `(seed, doc_id)`.
fn crop_rng(seed: u64, doc_id: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(doc_id.as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

/// Top-left corners of the crops `policy` takes from a `width x height`
/// image belonging to `doc_id`.
pub fn crop_offsets(
    width: u32,
    height: u32,
    doc_id: &str,
    policy: &CropPolicy,
) -> Result<Vec<(u32, u32)>> {
    policy.validate(width, height)?;
    let max_x = width - policy.crop_size;
    let max_y = height - policy.crop_size;
    Ok(match policy.mode {
        CropMode::Center => vec![(max_x / 2, max_y / 2)],
        CropMode::Random => {
            let mut rng = crop_rng(policy.seed, doc_id);
            (0..policy.count)
                .map(|_| (rng.random_range(0..=max_x), rng.random_range(0..=max_y)))
                .collect()
        }
    })
}

pub fn crops(img: &EncodedImage, policy: &CropPolicy) -> Result<Vec<EncodedImage>> {
    crop_offsets(img.width, img.height, &img.meta.doc_id, policy)?
        .into_iter()
        .map(|(x, y)| img.crop(x, y, policy.crop_size))
        .collect()
}

/// Height of the top band that holds the encoded text of `plan`.
pub fn band_height(plan: &LayoutPlan, params: &EncodingParams) -> Result<u32> {
    let rows = plan.rows_used() as u32;
    if rows == 0 {
        return Ok(0);
    }
    let geom = params.validate()?;
    let pitch = geom.height_px + params.spacing;
    Ok((rows * pitch + params.margin()).min(params.image_height))
}

/// Overwrite the top band of `photo` with the rendered text.
///
/// The photo must already have the canvas size of `params`; see
/// [`resize_photo`].
pub fn compose_multimodal(
    photo: &EncodedImage,
    tokens: &TokenSequence,
    table: &EmbeddingTable,
    params: &EncodingParams,
) -> Result<EncodedImage> {
    if photo.width != params.image_width || photo.height != params.image_height {
        return Err(Error::PlanMismatch(format!(
            "photo is {}x{}, parameters expect {}x{}",
            photo.width, photo.height, params.image_width, params.image_height
        )));
    }
    let plan = plan_layout(tokens.len(), params)?;
    if plan.overflow_count > 0 {
        return Err(Error::TextOverflow {
            needed: tokens.len(),
            capacity: plan.placements.len(),
            overflow: plan.overflow_count,
        });
    }
    let mut out = photo.clone();
    let band = band_height(&plan, params)?;
    if band > 0 {
        let text = render(&plan, tokens, table, params)?;
        let n = band as usize * photo.width as usize * 3;
        out.pixels[..n].copy_from_slice(&text.pixels[..n]);
        out.meta.params = params.canonical();
        out.meta.oov = tokens.oov_count;
    }
    Ok(out)
}
