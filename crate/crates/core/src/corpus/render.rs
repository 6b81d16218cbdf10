//! Page layout and anti-aliased rasterization of the stroke font.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::font::{self, EM_HEIGHT, LETTER_GAP, STROKE_WIDTH};
use super::TextSample;
use crate::error::{Error, Result};
use crate::geometry::PixelBox;
use crate::raster::Raster;

/// Subsamples per pixel side used for coverage estimation.
pub const SUPERSAMPLE: usize = 4;
/// A pixel is a character pixel when at least this many of its
/// `SUPERSAMPLE^2` subsamples are inked (coverage >= 0.5).
pub const INK_THRESHOLD: usize = SUPERSAMPLE * SUPERSAMPLE / 2;

pub const MIN_PAGE_SIDE: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FontClass {
    Tiny,
    Normal,
    Large,
}

impl FontClass {
    /// Range of full glyph heights (ascender to descender) in pixels.
    pub fn height_range(self) -> (f64, f64) {
        match self {
            FontClass::Tiny => (8.0, 11.0),
            FontClass::Normal => (14.0, 20.0),
            FontClass::Large => (28.0, 40.0),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "tiny" => Some(FontClass::Tiny),
            "normal" => Some(FontClass::Normal),
            "large" => Some(FontClass::Large),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FontClass::Tiny => "tiny",
            FontClass::Normal => "normal",
            FontClass::Large => "large",
        }
    }
}

/// Everything needed to render one page; rendering is a pure function of it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PageSpec {
    pub width: usize,
    pub height: usize,
    pub font: FontClass,
    pub text: String,
    pub seed: u64,
}

/// Metrics derived from the page seed.
#[derive(Clone, Copy, Debug)]
pub struct PageMetrics {
    pub glyph_height: f64,
    pub unit: f64,
    pub margin: f64,
    pub line_pitch: f64,
    pub word_gap: f64,
    pub jitter: (f64, f64),
}

impl PageMetrics {
    pub fn for_spec(font: FontClass, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = font.height_range();
        let glyph_height = rng.gen_range(lo..=hi);
        let unit = glyph_height / EM_HEIGHT;
        let jitter = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        Self {
            glyph_height,
            unit,
            margin: (0.4 * glyph_height).max(4.0),
            line_pitch: glyph_height + (5.0 * unit).max(6.0),
            word_gap: (5.0 * unit).max(6.0),
            jitter,
        }
    }

    /// Horizontal extent of a word's glyph advances, excluding the pen radius.
    pub fn word_width(&self, word: &str) -> Result<f64> {
        let mut w = 0.0;
        for (i, c) in word.chars().enumerate() {
            let g = font::lookup(c)
                .ok_or_else(|| Error::InvalidArgument(format!("character {c:?} is not in the font")))?;
            if i > 0 {
                w += LETTER_GAP * self.unit;
            }
            w += g.width * self.unit;
        }
        Ok(w)
    }

    pub fn pen_radius(&self) -> f64 {
        0.5 * STROKE_WIDTH * self.unit
    }
}

/// One pen stroke segment: the set of points within `radius` of segment `a-b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Capsule {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub radius: f64,
}

impl Capsule {
    #[inline]
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let (dx, dy) = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let (qx, qy) = (px - self.a.0, py - self.a.1);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            ((qx * dx + qy * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (ex, ey) = (qx - t * dx, qy - t * dy);
        ex * ex + ey * ey <= self.radius * self.radius
    }

    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (
            self.a.0.min(self.b.0) - self.radius,
            self.a.1.min(self.b.1) - self.radius,
            self.a.0.max(self.b.0) + self.radius,
            self.a.1.max(self.b.1) + self.radius,
        )
    }
}

#[derive(Clone, Debug)]
pub struct WordLayout {
    pub text: String,
    /// Index range into [`PageLayout::capsules`].
    pub capsules: std::ops::Range<usize>,
    /// Ink extent `(x0, y0, x1, y1)` in pixel coordinates.
    pub extent: (f64, f64, f64, f64),
}

/// Glyph outlines placed on a page, in pixel coordinates.
#[derive(Clone, Debug)]
pub struct PageLayout {
    pub width: usize,
    pub height: usize,
    pub metrics: PageMetrics,
    pub capsules: Vec<Capsule>,
    pub words: Vec<WordLayout>,
}

pub fn layout_page(spec: &PageSpec) -> Result<PageLayout> {
    if spec.width < MIN_PAGE_SIDE || spec.height < MIN_PAGE_SIDE {
        return Err(Error::InvalidArgument(format!(
            "page sides must be at least {MIN_PAGE_SIDE}, got {}x{}",
            spec.width, spec.height
        )));
    }
    if spec.text.split_whitespace().next().is_none() {
        return Err(Error::InvalidArgument("text content is empty".into()));
    }
    let m = PageMetrics::for_spec(spec.font, spec.seed);
    let too_small = |reason: String| Error::PageTooSmall {
        width: spec.width,
        height: spec.height,
        reason,
    };
    let right_limit = spec.width as f64 - m.margin;
    let bottom_limit = spec.height as f64 - m.margin;
    let left = m.margin + m.jitter.0;

    let mut capsules = Vec::new();
    let mut words = Vec::new();
    let mut line = 0usize;
    for paragraph in spec.text.lines() {
        let mut pen = left;
        let mut line_used = false;
        for word in paragraph.split_whitespace() {
            let ww = m.word_width(word)?;
            if line_used && pen + ww > right_limit {
                line += 1;
                pen = left;
            }
            if pen + ww > right_limit {
                return Err(too_small(format!(
                    "word {word:?} needs {ww:.1}px at glyph height {:.1}px",
                    m.glyph_height
                )));
            }
            let top = m.margin + m.jitter.1 + line as f64 * m.line_pitch;
            if top + m.glyph_height > bottom_limit {
                return Err(too_small(format!(
                    "text needs more than {} lines at glyph height {:.1}px",
                    line, m.glyph_height
                )));
            }
            let start = capsules.len();
            let mut x = pen;
            for c in word.chars() {
                let g = font::lookup(c).expect("checked by word_width");
                for stroke in &g.strokes {
                    for seg in stroke.windows(2) {
                        capsules.push(Capsule {
                            a: (x + seg[0].0 * m.unit, top + seg[0].1 * m.unit),
                            b: (x + seg[1].0 * m.unit, top + seg[1].1 * m.unit),
                            radius: m.pen_radius(),
                        });
                    }
                }
                x += (g.width + LETTER_GAP) * m.unit;
            }
            let extent = capsules[start..].iter().fold(
                (f64::MAX, f64::MAX, f64::MIN, f64::MIN),
                |acc, c| {
                    let b = c.bounds();
                    (acc.0.min(b.0), acc.1.min(b.1), acc.2.max(b.2), acc.3.max(b.3))
                },
            );
            words.push(WordLayout {
                text: word.to_string(),
                capsules: start..capsules.len(),
                extent,
            });
            pen += ww + m.word_gap;
            line_used = true;
        }
        line += 1;
    }
    Ok(PageLayout {
        width: spec.width,
        height: spec.height,
        metrics: m,
        capsules,
        words,
    })
}

/// Counts inked subsamples per pixel (0..=SUPERSAMPLE^2).
pub fn rasterize_coverage(layout: &PageLayout) -> Raster<u8> {
    let (h, w) = (layout.height, layout.width);
    let (sh, sw) = (h * SUPERSAMPLE, w * SUPERSAMPLE);
    let ss = SUPERSAMPLE as f64;
    let mut inked = vec![false; sh * sw];
    // Subsample j sits at pixel coordinate (j + 0.5) / SUPERSAMPLE.
    let first = |lo: f64| ((lo * ss - 0.5).ceil().max(0.0)) as usize;
    let last = |hi: f64, n: usize| {
        let v = (hi * ss - 0.5).floor();
        if v < 0.0 {
            None
        } else {
            Some((v as usize).min(n - 1))
        }
    };
    for cap in &layout.capsules {
        let (x0, y0, x1, y1) = cap.bounds();
        let (Some(jx1), Some(jy1)) = (last(x1, sw), last(y1, sh)) else {
            continue;
        };
        for jy in first(y0)..=jy1 {
            let py = (jy as f64 + 0.5) / ss;
            for jx in first(x0)..=jx1 {
                let px = (jx as f64 + 0.5) / ss;
                if !inked[jy * sw + jx] && cap.contains(px, py) {
                    inked[jy * sw + jx] = true;
                }
            }
        }
    }
    Raster::from_fn(h, w, |y, x| {
        let mut n = 0u8;
        for sy in 0..SUPERSAMPLE {
            let row = (y * SUPERSAMPLE + sy) * sw + x * SUPERSAMPLE;
            n += inked[row..row + SUPERSAMPLE].iter().filter(|&&b| b).count() as u8;
        }
        n
    })
}

/// Quantized gray value for a pixel with `count` inked subsamples.
pub fn shade(count: u8) -> u8 {
    let total = (SUPERSAMPLE * SUPERSAMPLE) as u32;
    let ink = (count as u32 * 255 * 2 + total) / (2 * total);
    (255 - ink) as u8
}

pub fn render_page(spec: &PageSpec, id: impl Into<String>) -> Result<TextSample> {
    let layout = layout_page(spec)?;
    let coverage = rasterize_coverage(&layout);
    let (h, w) = coverage.dims();
    let image = coverage.map(|c| shade(c) as f32 / 255.0);
    let mask = coverage.map(|c| u8::from((c as usize) < INK_THRESHOLD));

    let mut boxes = Vec::with_capacity(layout.words.len());
    for word in &layout.words {
        let (ex0, ey0, ex1, ey1) = word.extent;
        let xs = (ex0.floor().max(0.0) as usize)..(ex1.ceil().max(0.0) as usize).min(w);
        let ys = (ey0.floor().max(0.0) as usize)..(ey1.ceil().max(0.0) as usize).min(h);
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for y in ys {
            for x in xs.clone() {
                if mask.get(y, x) == 0 {
                    bb = Some(match bb {
                        None => (x, y, x, y),
                        Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x), d.max(y)),
                    });
                }
            }
        }
        let (x0, y0, x1, y1) = bb.ok_or_else(|| Error::PageTooSmall {
            width: w,
            height: h,
            reason: format!("word {:?} rasterizes to no character pixels", word.text),
        })?;
        if x0 == 0 || y0 == 0 || x1 + 2 > w || y1 + 2 > h {
            return Err(Error::PageTooSmall {
                width: w,
                height: h,
                reason: format!("word {:?} touches the page border", word.text),
            });
        }
        boxes.push(PixelBox::new(x0 - 1, y0 - 1, x1 + 2, y1 + 2));
    }
    Ok(TextSample {
        id: id.into(),
        image,
        mask,
        boxes,
    })
}
