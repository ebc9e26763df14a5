//! Visual-word geometry and canvas layout.
//!
//! A visual word is a block of `P x P` superpixels, one per RGB triplet of the
//! quantized vector. Words are placed left to right, top to bottom, starting
//! at `(margin, margin)`, with `s` blank pixels between neighbours in both
//! directions. Words that do not fit are dropped and counted as overflow.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::digest::sha256_hex;
use crate::error::{Error, Result};

/// Arrangement of superpixels inside a visual word.
///
/// `Vw5` is the plain row-major rectangle `V` superpixels wide. `Vw1`..`Vw4`
/// are fixed alternative arrangements for 36 features (12 superpixels); their
/// slot tables approximate the published drawings rather than reproduce them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ShapeVariant {
    Vw1,
    Vw2,
    Vw3,
    Vw4,
    #[default]
    Vw5,
}

/// Feature count the non-rectangular slot tables are defined for.
const SHAPED_FEATURES: usize = 36;

// (row, col) in superpixel units, in superpixel-index order.
const VW1_SLOTS: [(u32, u32); 12] = [
    // hollow 4x4 square
    (0, 0), (0, 1), (0, 2), (0, 3),
    (1, 0), (1, 3),
    (2, 0), (2, 3),
    (3, 0), (3, 1), (3, 2), (3, 3),
];
const VW2_SLOTS: [(u32, u32); 12] = [
    // 4x6 checkerboard
    (0, 0), (0, 2),
    (1, 1), (1, 3),
    (2, 0), (2, 2),
    (3, 1), (3, 3),
    (4, 0), (4, 2),
    (5, 1), (5, 3),
];
const VW3_SLOTS: [(u32, u32); 12] = [
    // 6x4 checkerboard
    (0, 0), (0, 2), (0, 4),
    (1, 1), (1, 3), (1, 5),
    (2, 0), (2, 2), (2, 4),
    (3, 1), (3, 3), (3, 5),
];
const VW4_SLOTS: [(u32, u32); 12] = [
    // two rows of six with an empty row between them
    (0, 0), (0, 1), (0, 2), (0, 3), (0, 4), (0, 5),
    (2, 0), (2, 1), (2, 2), (2, 3), (2, 4), (2, 5),
];

impl ShapeVariant {
    pub const ALL: [ShapeVariant; 5] = [
        ShapeVariant::Vw1,
        ShapeVariant::Vw2,
        ShapeVariant::Vw3,
        ShapeVariant::Vw4,
        ShapeVariant::Vw5,
    ];

    fn slot_table(self) -> Option<&'static [(u32, u32)]> {
        match self {
            ShapeVariant::Vw1 => Some(&VW1_SLOTS),
            ShapeVariant::Vw2 => Some(&VW2_SLOTS),
            ShapeVariant::Vw3 => Some(&VW3_SLOTS),
            ShapeVariant::Vw4 => Some(&VW4_SLOTS),
            ShapeVariant::Vw5 => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeVariant::Vw1 => "vw1",
            ShapeVariant::Vw2 => "vw2",
            ShapeVariant::Vw3 => "vw3",
            ShapeVariant::Vw4 => "vw4",
            ShapeVariant::Vw5 => "vw5",
        }
    }
}

impl fmt::Display for ShapeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "");
        ShapeVariant::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| Error::InvalidParams(format!("unknown shape `{s}` (vw1..vw5)")))
    }
}

/// Every knob of the encoding geometry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodingParams {
    pub image_width: u32,
    pub image_height: u32,
    /// Superpixel side in pixels.
    pub superpixel: u32,
    /// Visual-word width in superpixels.
    pub word_width: u32,
    /// Blank pixels between neighbouring words.
    pub spacing: u32,
    /// Embedding components used per word, a multiple of 3.
    pub feature_count: usize,
    pub shape: ShapeVariant,
    pub background: [u8; 3],
    /// Outer margin; `None` means `spacing / 2`.
    pub margin: Option<u32>,
}

impl Default for EncodingParams {
    /// 256x256 canvas, 4x4 superpixels, words 4 superpixels wide, 12 px
    /// spacing, 36 features.
    fn default() -> Self {
        Self {
            image_width: 256,
            image_height: 256,
            superpixel: 4,
            word_width: 4,
            spacing: 12,
            feature_count: 36,
            shape: ShapeVariant::Vw5,
            background: [0, 0, 0],
            margin: None,
        }
    }
}

/// Pixel footprint of a visual word and where each superpixel sits in it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordGeometry {
    pub width_px: u32,
    pub height_px: u32,
    pub superpixel: u32,
    /// `(row, col)` of each superpixel, in superpixel units.
    pub slots: Vec<(u32, u32)>,
}

impl WordGeometry {
    pub fn cols(&self) -> u32 {
        self.width_px / self.superpixel
    }

    pub fn rows(&self) -> u32 {
        self.height_px / self.superpixel
    }

    /// Pixel offset of superpixel `i` from the word's top-left corner.
    pub fn slot_origin(&self, i: usize) -> (u32, u32) {
        let (row, col) = self.slots[i];
        (col * self.superpixel, row * self.superpixel)
    }
}

impl EncodingParams {
    pub fn margin(&self) -> u32 {
        self.margin.unwrap_or(self.spacing / 2)
    }

    pub fn superpixel_count(&self) -> usize {
        self.feature_count / 3
    }

    /// Check every invariant and return the word geometry.
    pub fn validate(&self) -> Result<WordGeometry> {
        if self.feature_count == 0 || self.feature_count % 3 != 0 {
            return Err(Error::FeatureCountNotMultipleOf3(self.feature_count));
        }
        for (name, v) in [
            ("image width", self.image_width),
            ("image height", self.image_height),
            ("superpixel size", self.superpixel),
            ("word width", self.word_width),
        ] {
            if v == 0 {
                return Err(Error::InvalidParams(format!("{name} must be positive")));
            }
        }
        let geom = self.geometry_unchecked()?;
        let m = u64::from(self.margin());
        if 2 * m + u64::from(geom.width_px) > u64::from(self.image_width)
            || 2 * m + u64::from(geom.height_px) > u64::from(self.image_height)
        {
            return Err(Error::ZeroCapacity {
                width: self.image_width,
                height: self.image_height,
            });
        }
        Ok(geom)
    }

    fn geometry_unchecked(&self) -> Result<WordGeometry> {
        let n = self.superpixel_count();
        let p = self.superpixel;
        match self.shape.slot_table() {
            None => {
                let v = self.word_width;
                let rows = (n as u32).div_ceil(v);
                let slots = (0..n as u32).map(|i| (i / v, i % v)).collect();
                Ok(WordGeometry {
                    width_px: v * p,
                    height_px: rows * p,
                    superpixel: p,
                    slots,
                })
            }
            Some(table) => {
                let mismatch = |msg: String| Error::ShapeMismatch {
                    shape: self.shape.to_string(),
                    msg,
                };
                if self.feature_count != SHAPED_FEATURES || table.len() != n {
                    return Err(mismatch(format!(
                        "defined for {SHAPED_FEATURES} features, got {}",
                        self.feature_count
                    )));
                }
                let cols = table.iter().map(|&(_, c)| c).max().unwrap_or(0) + 1;
                let rows = table.iter().map(|&(r, _)| r).max().unwrap_or(0) + 1;
                if cols != self.word_width {
                    return Err(mismatch(format!(
                        "word width must be {cols}, got {}",
                        self.word_width
                    )));
                }
                Ok(WordGeometry {
                    width_px: cols * p,
                    height_px: rows * p,
                    superpixel: p,
                    slots: table.to_vec(),
                })
            }
        }
    }

    /// Stable one-line serialization; the digest is computed over it.
    pub fn canonical(&self) -> String {
        let [r, g, b] = self.background;
        format!(
            "w={} h={} p={} v={} s={} d={} shape={} bg={r:02x}{g:02x}{b:02x} margin={}",
            self.image_width,
            self.image_height,
            self.superpixel,
            self.word_width,
            self.spacing,
            self.feature_count,
            self.shape,
            self.margin()
        )
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }
}

impl FromStr for EncodingParams {
    type Err = Error;

    /// Parse the output of [`EncodingParams::canonical`].
    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidParams(msg);
        let mut params = EncodingParams::default();
        let mut seen = 0u32;
        for field in s.split_ascii_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, found `{field}`")))?;
            let num = || -> Result<u32> {
                value
                    .parse()
                    .map_err(|_| bad(format!("bad value for {key}: `{value}`")))
            };
            match key {
                "w" => params.image_width = num()?,
                "h" => params.image_height = num()?,
                "p" => params.superpixel = num()?,
                "v" => params.word_width = num()?,
                "s" => params.spacing = num()?,
                "d" => params.feature_count = num()? as usize,
                "margin" => params.margin = Some(num()?),
                "shape" => params.shape = value.parse()?,
                "bg" => params.background = parse_rgb_hex(value)?,
                _ => return Err(bad(format!("unknown key `{key}`"))),
            }
            seen += 1;
        }
        if seen != 9 {
            return Err(bad(format!("expected 9 fields, found {seen}")));
        }
        Ok(params)
    }
}

/// Parse `rrggbb` (an optional leading `#` is accepted).
pub fn parse_rgb_hex(s: &str) -> Result<[u8; 3]> {
    let digits = s.strip_prefix('#').unwrap_or(s);
    let bytes = hex::decode(digits)
        .ok()
        .filter(|b| b.len() == 3)
        .ok_or_else(|| Error::InvalidParams(format!("bad color `{s}`, expected rrggbb")))?;
    Ok([bytes[0], bytes[1], bytes[2]])
}

/// Geometry of the word for `params`.
pub fn word_geometry(params: &EncodingParams) -> Result<WordGeometry> {
    params.validate()
}

/// Top-left pixel of a placed visual word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub token_index: usize,
    pub x: u32,
    pub y: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutPlan {
    pub placements: Vec<Placement>,
    pub overflow_count: usize,
    pub params_digest: String,
}

impl LayoutPlan {
    /// Number of distinct layout rows that hold at least one word.
    pub fn rows_used(&self) -> usize {
        let mut rows = 0;
        let mut last_y = None;
        for p in &self.placements {
            if last_y != Some(p.y) {
                rows += 1;
                last_y = Some(p.y);
            }
        }
        rows
    }

    /// Write the line-delimited sidecar: a header, then `token_index x y` per
    /// placement.
    pub fn write_sidecar<W: Write>(&self, params: &EncodingParams, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# wordpix layout plan")?;
        writeln!(out, "params {}", params.canonical())?;
        writeln!(out, "params_digest {}", self.params_digest)?;
        writeln!(out, "overflow_count {}", self.overflow_count)?;
        writeln!(out, "placements {}", self.placements.len())?;
        for p in &self.placements {
            writeln!(out, "{} {} {}", p.token_index, p.x, p.y)?;
        }
        out.flush()
    }

    /// Parse a sidecar; returns the plan and the parameters recorded with it.
    pub fn read_sidecar<R: BufRead>(input: R) -> Result<(LayoutPlan, EncodingParams)> {
        let mut params = None;
        let mut digest = None;
        let mut overflow = None;
        let mut expected = None;
        let mut placements = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let bad = |msg: String| Error::Sidecar { line: lineno, msg };
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "params" => params = Some(rest.parse::<EncodingParams>()?),
                "params_digest" => digest = Some(rest.trim().to_string()),
                "overflow_count" => {
                    overflow = Some(rest.trim().parse::<usize>().map_err(|_| {
                        bad(format!("bad overflow count `{rest}`"))
                    })?)
                }
                "placements" => {
                    expected = Some(rest.trim().parse::<usize>().map_err(|_| {
                        bad(format!("bad placement count `{rest}`"))
                    })?)
                }
                _ => {
                    let nums: Vec<u64> = line
                        .split_ascii_whitespace()
                        .map(|f| f.parse::<u64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad(format!("bad placement `{line}`")))?;
                    if nums.len() != 3 {
                        return Err(bad(format!("expected `token_index x y`, found `{line}`")));
                    }
                    placements.push(Placement {
                        token_index: nums[0] as usize,
                        x: nums[1] as u32,
                        y: nums[2] as u32,
                    });
                }
            }
        }
        let missing = |what: &str| Error::Sidecar {
            line: 0,
            msg: format!("missing `{what}` header"),
        };
        let params = params.ok_or_else(|| missing("params"))?;
        let params_digest = digest.ok_or_else(|| missing("params_digest"))?;
        let overflow_count = overflow.ok_or_else(|| missing("overflow_count"))?;
        if params.digest() != params_digest {
            return Err(Error::Sidecar {
                line: 0,
                msg: "params digest does not match the recorded params".into(),
            });
        }
        if let Some(n) = expected {
            if n != placements.len() {
                return Err(Error::Sidecar {
                    line: 0,
                    msg: format!("header declares {n} placements, found {}", placements.len()),
                });
            }
        }
        Ok((
            LayoutPlan {
                placements,
                overflow_count,
                params_digest,
            },
            params,
        ))
    }
}

/// Place `token_count` visual words in reading order.
///
/// A word that would cross the right edge starts a new row; the first word
/// that would cross the bottom edge, and every word after it, is overflow.
pub fn plan_layout(token_count: usize, params: &EncodingParams) -> Result<LayoutPlan> {
    let geom = params.validate()?;
    let margin = params.margin();
    let right = params.image_width - margin;
    let bottom = params.image_height - margin;
    let (w, h, s) = (geom.width_px, geom.height_px, params.spacing);

    let mut placements = Vec::new();
    let (mut x, mut y) = (margin, margin);
    for token_index in 0..token_count {
        if u64::from(x) + u64::from(w) > u64::from(right) {
            x = margin;
            y += h + s;
        }
        if u64::from(y) + u64::from(h) > u64::from(bottom) {
            break;
        }
        placements.push(Placement { token_index, x, y });
        x += w + s;
    }
    Ok(LayoutPlan {
        overflow_count: token_count - placements.len(),
        placements,
        params_digest: params.digest(),
    })
}

/// Maximum number of visual words a canvas holds.
pub fn capacity(params: &EncodingParams) -> Result<usize> {
    let geom = params.validate()?;
    let m = u64::from(params.margin());
    let s = u64::from(params.spacing);
    let usable_w = u64::from(params.image_width) - 2 * m;
    let usable_h = u64::from(params.image_height) - 2 * m;
    let cols = (usable_w + s) / (u64::from(geom.width_px) + s);
    let rows = (usable_h + s) / (u64::from(geom.height_px) + s);
    Ok((cols * rows) as usize)
}

/// Capacity for each feature count in `feature_counts`, other parameters fixed.
pub fn capacity_sweep(
    params: &EncodingParams,
    feature_counts: &[usize],
) -> Vec<(usize, Result<usize>)> {
    feature_counts
        .iter()
        .map(|&d| {
            let p = EncodingParams {
                feature_count: d,
                ..params.clone()
            };
            (d, capacity(&p))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(d: usize, v: u32, p: u32) -> EncodingParams {
        EncodingParams {
            feature_count: d,
            word_width: v,
            superpixel: p,
            ..EncodingParams::default()
        }
    }

    #[test]
    fn fifteen_features_at_several_widths() {
        for (v, rows) in [(2, 3), (3, 2), (6, 1)] {
            let g = word_geometry(&params(15, v, 1)).unwrap();
            assert_eq!(g.slots.len(), 5);
            assert_eq!(g.rows(), rows, "V={v}");
            assert_eq!(g.cols(), v);
        }
        let g = word_geometry(&params(15, 2, 1)).unwrap();
        assert_eq!(g.slots[4], (2, 0));
    }

    #[test]
    fn twelve_features_four_wide() {
        let g = word_geometry(&params(12, 4, 4)).unwrap();
        assert_eq!((g.width_px, g.height_px), (16, 4));
        assert_eq!(g.slots.len(), 4);
    }

    #[test]
    fn single_superpixel_word() {
        let g = word_geometry(&params(3, 1, 5)).unwrap();
        assert_eq!((g.width_px, g.height_px), (5, 5));
        assert_eq!(g.slots, vec![(0, 0)]);
    }

    #[test]
    fn shaped_variants_have_distinct_slots() {
        for shape in ShapeVariant::ALL {
            let v = match shape {
                ShapeVariant::Vw1 | ShapeVariant::Vw2 => 4,
                _ => 6,
            };
            let p = EncodingParams {
                shape,
                word_width: v,
                ..EncodingParams::default()
            };
            let g = word_geometry(&p).unwrap();
            assert_eq!(g.slots.len(), 12, "{shape}");
            let mut sorted = g.slots.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), 12, "{shape}");
            assert_eq!(g.cols(), v);
        }
    }

    #[test]
    fn shaped_variant_rejects_other_feature_counts() {
        let p = EncodingParams {
            shape: ShapeVariant::Vw1,
            feature_count: 24,
            ..EncodingParams::default()
        };
        assert!(matches!(word_geometry(&p), Err(Error::ShapeMismatch { .. })));
        let p = EncodingParams {
            shape: ShapeVariant::Vw3,
            word_width: 4,
            ..EncodingParams::default()
        };
        assert!(matches!(word_geometry(&p), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            params(35, 4, 4).validate(),
            Err(Error::FeatureCountNotMultipleOf3(35))
        ));
        let p = EncodingParams {
            superpixel: 0,
            ..EncodingParams::default()
        };
        assert!(matches!(p.validate(), Err(Error::InvalidParams(_))));
        let p = EncodingParams {
            image_width: 10,
            ..EncodingParams::default()
        };
        assert!(matches!(p.validate(), Err(Error::ZeroCapacity { .. })));
    }

    #[test]
    fn single_token_at_margin() {
        let p = EncodingParams::default();
        let plan = plan_layout(1, &p).unwrap();
        assert_eq!(plan.placements, vec![Placement { token_index: 0, x: 6, y: 6 }]);
        assert_eq!(plan.overflow_count, 0);
        let plan = plan_layout(0, &p).unwrap();
        assert!(plan.placements.is_empty());
        assert_eq!(plan.overflow_count, 0);
        assert_eq!(plan.rows_used(), 0);
    }

    #[test]
    fn overflow_past_capacity() {
        let p = EncodingParams::default();
        let cap = capacity(&p).unwrap();
        let plan = plan_layout(cap + 1, &p).unwrap();
        assert_eq!(plan.placements.len(), cap);
        assert_eq!(plan.overflow_count, 1);
    }

    #[test]
    fn exact_fit_canvas_holds_one_word() {
        let p = EncodingParams {
            image_width: 16 + 2 * 3,
            image_height: 12 + 2 * 3,
            spacing: 0,
            margin: Some(3),
            ..EncodingParams::default()
        };
        assert_eq!(capacity(&p).unwrap(), 1);
        assert_eq!(plan_layout(5, &p).unwrap().overflow_count, 4);
    }

    #[test]
    fn default_configuration_capacity() {
        // 16x12 px words, pitch 28x24, 244 usable pixels each way
        let p = EncodingParams::default();
        assert_eq!(capacity(&p).unwrap(), 9 * 10);
    }

    #[test]
    fn canonical_round_trip() {
        let p = EncodingParams {
            shape: ShapeVariant::Vw2,
            background: [1, 200, 255],
            margin: Some(9),
            ..EncodingParams::default()
        };
        let back: EncodingParams = p.canonical().parse().unwrap();
        assert_eq!(back.canonical(), p.canonical());
        assert_eq!(back.digest(), p.digest());
        assert!("w=1 h=2".parse::<EncodingParams>().is_err());
    }

    #[test]
    fn sidecar_round_trip() {
        let p = EncodingParams::default();
        let plan = plan_layout(20, &p).unwrap();
        let mut buf = Vec::new();
        plan.write_sidecar(&p, &mut buf).unwrap();
        let (back, back_params) = LayoutPlan::read_sidecar(&buf[..]).unwrap();
        assert_eq!(back, plan);
        assert_eq!(back_params, EncodingParams { margin: Some(6), ..p });
    }
}
