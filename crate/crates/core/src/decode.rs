//! Inverse of the encoding: read superpixel colors back out of an image and
//! map each visual word to the vocabulary word with the closest quantized
//! vector (Euclidean distance in byte space).

use std::collections::HashMap;
use std::io::{self, Write};

use crate::embeddings::{quantize_into, EmbeddingTable, NormalizationStats, QuantizedVector};
use crate::error::{Error, Result};
use crate::layout::{EncodingParams, LayoutPlan};
use crate::raster::EncodedImage;

/// Quantized copy of a vocabulary, for nearest-word queries.
#[derive(Debug, Clone)]
pub struct QuantizedIndex {
    d: usize,
    codes: Vec<u8>,
    // first vocabulary position of every distinct code
    exact: HashMap<Vec<u8>, usize>,
}

impl QuantizedIndex {
    /// Quantize the first `d` components of every word with the table's stats.
    pub fn build(table: &EmbeddingTable, d: usize) -> Result<Self> {
        Self::with_stats(table, table.stats(), d)
    }

    pub fn with_stats(table: &EmbeddingTable, stats: &NormalizationStats, d: usize) -> Result<Self> {
        crate::embeddings::check_feature_count(d, table.dim())?;
        if stats.dim() < d {
            return Err(Error::StatsDimension {
                stats: stats.dim(),
                needed: d,
            });
        }
        let mut codes = Vec::with_capacity(table.len() * d);
        for (_, v) in table.iter() {
            quantize_into(&v[..d], stats, &mut codes);
        }
        let mut exact = HashMap::with_capacity(table.len());
        for (i, code) in codes.chunks_exact(d).enumerate() {
            exact.entry(code.to_vec()).or_insert(i);
        }
        Ok(Self { d, codes, exact })
    }

    pub fn feature_count(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.codes.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn code(&self, i: usize) -> &[u8] {
        &self.codes[i * self.d..(i + 1) * self.d]
    }

    /// Position and distance of the closest code; ties go to the earliest.
    pub fn nearest(&self, q: &[u8]) -> Result<(usize, f64)> {
        self.check_query(q)?;
        if let Some(&i) = self.exact.get(q) {
            return Ok((i, 0.0));
        }
        Ok(self.scan(q))
    }

    /// [`nearest`](Self::nearest) without the exact-match shortcut.
    pub fn nearest_linear(&self, q: &[u8]) -> Result<(usize, f64)> {
        self.check_query(q)?;
        Ok(self.scan(q))
    }

    fn check_query(&self, q: &[u8]) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        if q.len() != self.d {
            return Err(Error::PlanMismatch(format!(
                "query has {} features, index has {}",
                q.len(),
                self.d
            )));
        }
        Ok(())
    }

    fn scan(&self, q: &[u8]) -> (usize, f64) {
        let mut best = (0, u32::MAX);
        for (i, code) in self.codes.chunks_exact(self.d).enumerate() {
            let mut sum = 0u32;
            for (&a, &b) in code.iter().zip(q) {
                let diff = i32::from(a) - i32::from(b);
                sum += (diff * diff) as u32;
                if sum >= best.1 {
                    break;
                }
            }
            if sum < best.1 {
                best = (i, sum);
                if sum == 0 {
                    break;
                }
            }
        }
        (best.0, f64::from(best.1).sqrt())
    }

    /// `(earlier, later)` vocabulary positions whose codes are identical;
    /// each later duplicate is paired with the first word sharing its code.
    pub fn collisions(&self) -> Vec<(usize, usize)> {
        self.codes
            .chunks_exact(self.d)
            .enumerate()
            .filter_map(|(i, code)| {
                let first = self.exact[code];
                (first != i).then_some((first, i))
            })
            .collect()
    }
}

/// Closest vocabulary word to `q` and its distance.
pub fn nearest_word<'t>(
    q: &QuantizedVector,
    index: &QuantizedIndex,
    table: &'t EmbeddingTable,
) -> Result<(&'t str, f64)> {
    let (i, dist) = index.nearest(q.as_bytes())?;
    Ok((table.word(i), dist))
}

/// Mean color of every superpixel of every placed word.
pub fn extract_superpixels(
    img: &EncodedImage,
    plan: &LayoutPlan,
    params: &EncodingParams,
) -> Result<Vec<QuantizedVector>> {
    let geom = params.validate()?;
    if img.width() != params.image_width || img.height() != params.image_height {
        return Err(Error::PlanMismatch(format!(
            "image is {}x{}, parameters expect {}x{}",
            img.width(),
            img.height(),
            params.image_width,
            params.image_height
        )));
    }
    if plan.params_digest != params.digest() {
        return Err(Error::PlanMismatch("plan was built for other parameters".into()));
    }
    let p = params.superpixel;
    let area = p * p;
    let mut out = Vec::with_capacity(plan.placements.len());
    for placement in &plan.placements {
        if placement.x + geom.width_px > img.width() || placement.y + geom.height_px > img.height()
        {
            return Err(Error::PlanMismatch(format!(
                "placement ({}, {}) falls outside the image",
                placement.x, placement.y
            )));
        }
        let mut bytes = Vec::with_capacity(params.feature_count);
        for i in 0..geom.slots.len() {
            let (dx, dy) = geom.slot_origin(i);
            let (x0, y0) = (placement.x + dx, placement.y + dy);
            let mut sum = [0u32; 3];
            for y in y0..y0 + p {
                let row = img.row(y);
                for px in row[x0 as usize * 3..(x0 + p) as usize * 3].chunks_exact(3) {
                    for c in 0..3 {
                        sum[c] += u32::from(px[c]);
                    }
                }
            }
            for s in sum {
                // non-negative, so adding half rounds half away from zero
                bytes.push(((s + area / 2) / area) as u8);
            }
        }
        out.push(QuantizedVector::from_bytes(bytes)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedToken {
    pub word: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecodedDocument {
    pub tokens: Vec<DecodedToken>,
    pub mean_distance: f64,
}

impl DecodedDocument {
    pub fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.word.as_str()).collect()
    }

    /// `index word distance` per token, then a summary line.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (i, t) in self.tokens.iter().enumerate() {
            writeln!(out, "{i} {} {:.6}", t.word, t.distance)?;
        }
        writeln!(
            out,
            "# tokens={} mean_distance={:.6}",
            self.tokens.len(),
            self.mean_distance
        )?;
        out.flush()
    }
}

pub fn decode_document(
    img: &EncodedImage,
    plan: &LayoutPlan,
    params: &EncodingParams,
    index: &QuantizedIndex,
    table: &EmbeddingTable,
) -> Result<DecodedDocument> {
    if index.feature_count() != params.feature_count {
        return Err(Error::PlanMismatch(format!(
            "index built for {} features, parameters use {}",
            index.feature_count(),
            params.feature_count
        )));
    }
    let tokens = extract_superpixels(img, plan, params)?
        .iter()
        .map(|q| {
            nearest_word(q, index, table).map(|(word, distance)| DecodedToken {
                word: word.to_string(),
                distance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_distance = if tokens.is_empty() {
        0.0
    } else {
        tokens.iter().map(|t| t.distance).sum::<f64>() / tokens.len() as f64
    };
    Ok(DecodedDocument {
        tokens,
        mean_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::plan_layout;
    use crate::raster::render;
    use crate::tokenizer::TokenSequence;

    fn table() -> EmbeddingTable {
        EmbeddingTable::from_entries([
            ("a", vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]),
            ("b", vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]),
            ("c", vec![0.5, 0.2, 0.9, 0.1, 0.7, 0.3]),
            ("a2", vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]),
        ])
        .unwrap()
    }

    fn params() -> EncodingParams {
        EncodingParams {
            image_width: 64,
            image_height: 64,
            superpixel: 3,
            word_width: 2,
            spacing: 4,
            feature_count: 6,
            ..EncodingParams::default()
        }
    }

    #[test]
    fn exact_match_and_tie_rule() {
        let t = table();
        let index = QuantizedIndex::build(&t, 6).unwrap();
        let q = QuantizedVector::from_bytes(index.code(2).to_vec()).unwrap();
        assert_eq!(nearest_word(&q, &index, &t).unwrap(), ("c", 0.0));
        let q = QuantizedVector::from_bytes(index.code(3).to_vec()).unwrap();
        assert_eq!(nearest_word(&q, &index, &t).unwrap().0, "a");
        assert_eq!(index.collisions(), vec![(0, 3)]);
    }

    #[test]
    fn linear_scan_ties_prefer_earliest() {
        let t = EmbeddingTable::from_entries([
            ("a", vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]),
            ("b", vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]),
        ])
        .unwrap();
        let index = QuantizedIndex::build(&t, 6).unwrap();
        // 3 * 127^2 + 3 * 128^2 from both words
        let (i, d) = index.nearest(&[127; 6]).unwrap();
        assert_eq!(i, 0);
        assert_eq!(d, (3.0f64 * (127.0 * 127.0 + 128.0 * 128.0)).sqrt());
    }

    #[test]
    fn query_length_checked() {
        let t = table();
        let index = QuantizedIndex::build(&t, 3).unwrap();
        assert!(index.nearest(&[0, 0, 0, 0, 0, 0]).is_err());
    }

    #[test]
    fn round_trip_on_clean_image() {
        let t = table();
        let p = params();
        let tokens = TokenSequence::new(vec!["c".into(), "b".into(), "a".into(), "c".into()]);
        let plan = plan_layout(tokens.len(), &p).unwrap();
        let img = render(&plan, &tokens, &t, &p).unwrap();
        let index = QuantizedIndex::build(&t, 6).unwrap();
        let doc = decode_document(&img, &plan, &p, &index, &t).unwrap();
        assert_eq!(doc.words(), ["c", "b", "a", "c"]);
        assert_eq!(doc.mean_distance, 0.0);
    }

    #[test]
    fn empty_plan_decodes_to_nothing() {
        let t = table();
        let p = params();
        let plan = plan_layout(0, &p).unwrap();
        let img = EncodedImage::filled(64, 64, [0, 0, 0]);
        assert!(extract_superpixels(&img, &plan, &p).unwrap().is_empty());
        let index = QuantizedIndex::build(&t, 6).unwrap();
        let doc = decode_document(&img, &plan, &p, &index, &t).unwrap();
        assert!(doc.tokens.is_empty());
        assert_eq!(doc.mean_distance, 0.0);
    }

    #[test]
    fn wrong_image_size_rejected() {
        let p = params();
        let plan = plan_layout(1, &p).unwrap();
        let img = EncodedImage::filled(60, 64, [0, 0, 0]);
        assert!(matches!(
            extract_superpixels(&img, &plan, &p),
            Err(Error::PlanMismatch(_))
        ));
    }

    #[test]
    fn decoded_text_format() {
        let doc = DecodedDocument {
            tokens: vec![DecodedToken {
                word: "x".into(),
                distance: 0.0,
            }],
            mean_distance: 0.0,
        };
        let mut buf = Vec::new();
        doc.write_text(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "0 x 0.000000\n# tokens=1 mean_distance=0.000000\n"
        );
    }
}
