//! Synthetic text pages with pixel-exact character masks and word boxes.

mod font;
mod render;
mod words;

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use image::GrayImage;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use font::{lookup as glyph, Glyph, EM_HEIGHT, STROKE_WIDTH};
pub use render::{
    layout_page, rasterize_coverage, render_page, shade, Capsule, FontClass, PageLayout,
    PageMetrics, PageSpec, WordLayout, INK_THRESHOLD, MIN_PAGE_SIDE, SUPERSAMPLE,
};

use crate::error::{Error, Result};
use crate::geometry::PixelBox;
use crate::raster::Raster;

/// A grayscale text image with its non-character mask and word boxes.
///
/// `mask` holds 1 for underpainting pixels and 0 for character pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct TextSample {
    pub id: String,
    pub image: Raster<f32>,
    pub mask: Raster<u8>,
    pub boxes: Vec<PixelBox>,
}

impl TextSample {
    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }

    /// Checks every structural invariant of a sample.
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidArgument(format!("sample {}: {reason}", self.id));
        let (h, w) = self.image.dims();
        if self.mask.dims() != (h, w) {
            return Err(bad("mask and image dimensions differ".into()));
        }
        for (&v, &m) in self.image.as_slice().iter().zip(self.mask.as_slice()) {
            if m > 1 {
                return Err(bad(format!("mask value {m} is not binary")));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(bad(format!("image value {v} outside [0,1]")));
            }
            if m == 0 && v > 0.5 {
                return Err(bad(format!("character pixel value {v} above 0.5")));
            }
        }
        for b in &self.boxes {
            if !b.fits_within(h, w) {
                return Err(bad(format!("box {b:?} outside {h}x{w}")));
            }
            let has_ink = (b.y0..b.y1).any(|y| (b.x0..b.x1).any(|x| self.mask.get(y, x) == 0));
            if !has_ink {
                return Err(bad(format!("box {b:?} holds no character pixel")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub n_train: usize,
    pub n_test: usize,
    /// Inclusive range for both page sides, drawn independently.
    pub min_side: usize,
    pub max_side: usize,
    pub fonts: Vec<FontClass>,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_train: 516,
            n_test: 80,
            min_side: 128,
            max_side: 256,
            fonts: vec![FontClass::Tiny, FontClass::Normal, FontClass::Large],
            seed: 0,
        }
    }
}

/// Manifest line for one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub boxes: Vec<PixelBox>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub train: Vec<TextSample>,
    pub test: Vec<TextSample>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> &[TextSample] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        for split in [Split::Train, Split::Test] {
            let sdir = dir.join(split.name());
            fs::create_dir_all(&sdir).map_err(|e| Error::io(&sdir, e))?;
            let mpath = dir.join(format!("{}.jsonl", split.name()));
            let file = File::create(&mpath).map_err(|e| Error::io(&mpath, e))?;
            let mut out = BufWriter::new(file);
            for s in self.split(split) {
                save_gray(&s.image, &sdir.join(format!("{}.png", s.id)))?;
                let mask = s.mask.map(|m| m * 255);
                save_u8(&mask, &sdir.join(format!("{}.mask.png", s.id)))?;
                let entry = ManifestEntry {
                    id: s.id.clone(),
                    width: s.image.width(),
                    height: s.image.height(),
                    boxes: s.boxes.clone(),
                };
                serde_json::to_writer(&mut out, &entry)?;
                out.write_all(b"\n").map_err(|e| Error::io(&mpath, e))?;
            }
            out.flush().map_err(|e| Error::io(&mpath, e))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Self {
            train: load_split(dir, Split::Train)?,
            test: load_split(dir, Split::Test)?,
        })
    }
}

fn load_split(dir: &Path, split: Split) -> Result<Vec<TextSample>> {
    let mpath = dir.join(format!("{}.jsonl", split.name()));
    let file = File::open(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let mut samples = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(&mpath, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line)?;
        let sdir = dir.join(split.name());
        let sample = load_sample(
            &sdir.join(format!("{}.png", entry.id)),
            &sdir.join(format!("{}.mask.png", entry.id)),
            entry.id.clone(),
            entry.boxes,
        )?;
        if sample.dims() != (entry.height, entry.width) {
            return Err(Error::malformed(&mpath, format!("size mismatch for {}", entry.id)));
        }
        sample.validate()?;
        samples.push(sample);
    }
    Ok(samples)
}

/// Loads an image/mask PNG pair into a sample.
pub fn load_sample(
    image: &Path,
    mask: &Path,
    id: String,
    boxes: Vec<PixelBox>,
) -> Result<TextSample> {
    let img = load_gray(image)?;
    let m = load_u8(mask)?;
    if img.dims() != m.dims() {
        return Err(Error::malformed(mask, "mask size differs from image"));
    }
    Ok(TextSample {
        id,
        image: img,
        mask: m.map(|v| u8::from(v >= 128)),
        boxes,
    })
}

pub fn load_u8(path: &Path) -> Result<Raster<u8>> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    Ok(Raster::from_vec(h as usize, w as usize, img.into_raw()))
}

pub fn load_gray(path: &Path) -> Result<Raster<f32>> {
    Ok(load_u8(path)?.map(|v| v as f32 / 255.0))
}

pub fn save_u8(raster: &Raster<u8>, path: &Path) -> Result<()> {
    let (h, w) = raster.dims();
    let img = GrayImage::from_raw(w as u32, h as u32, raster.as_slice().to_vec())
        .expect("raster length matches dimensions");
    img.save(path)?;
    Ok(())
}

/// Writes a `[0,1]` raster as 8-bit PNG, rounding to nearest.
pub fn save_gray(raster: &Raster<f32>, path: &Path) -> Result<()> {
    save_u8(&raster.map(to_u8), path)
}

pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Generates text that fills a page of the given spec without overflowing.
fn filler_text(width: usize, height: usize, metrics: &PageMetrics, rng: &mut ChaCha8Rng) -> String {
    let avail_w = width as f64 - 2.0 * metrics.margin - 1.0;
    let avail_h = height as f64 - 2.0 * metrics.margin - 1.0;
    let max_lines = ((avail_h - metrics.glyph_height) / metrics.line_pitch).floor() as i64 + 1;
    let lines = if max_lines <= 1 {
        1
    } else {
        rng.gen_range((max_lines / 2).max(1)..=max_lines) as usize
    };
    let mut out = Vec::with_capacity(lines);
    for _ in 0..lines {
        let mut line = String::new();
        let mut used = 0.0;
        // Short trailing lines mimic paragraph ends.
        let target = if rng.gen_bool(0.25) {
            avail_w * rng.gen_range(0.3..0.8)
        } else {
            avail_w
        };
        for _ in 0..64 {
            let word = words::random_word(rng);
            let ww = metrics.word_width(&word).expect("word list uses font glyphs");
            let extra = if line.is_empty() { ww } else { ww + metrics.word_gap };
            if used + extra > target {
                break;
            }
            if !line.is_empty() {
                line.push(' ');
            }
            line.push_str(&word);
            used += extra;
        }
        out.push(line);
    }
    if out.iter().all(|l| l.is_empty()) {
        out[0] = "a".into();
    }
    out.join("\n")
}

fn sample_spec(config: &CorpusConfig, index: usize) -> PageSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64 + 1);
    let width = rng.gen_range(config.min_side..=config.max_side);
    let height = rng.gen_range(config.min_side..=config.max_side);
    // Font classes whose largest glyphs leave room for margins on this page.
    let short = width.min(height) as f64;
    let mut fitting: Vec<FontClass> = config
        .fonts
        .iter()
        .copied()
        .filter(|f| 2.0 * f.height_range().1 <= short)
        .collect();
    if fitting.is_empty() {
        fitting = config.fonts.clone();
        fitting.sort_by(|a, b| a.height_range().1.total_cmp(&b.height_range().1));
        fitting.truncate(1);
    }
    let font = fitting[rng.gen_range(0..fitting.len())];
    let seed = rng.gen::<u64>();
    let metrics = PageMetrics::for_spec(font, seed);
    let text = filler_text(width, height, &metrics, &mut rng);
    PageSpec {
        width,
        height,
        font,
        text,
        seed,
    }
}

/// Renders a corpus in memory. Train samples take indices `0..n_train`,
/// test samples the following `n_test`, so the splits never share a page.
pub fn build_corpus(config: &CorpusConfig) -> Result<Corpus> {
    if config.n_train == 0 || config.n_test == 0 {
        return Err(Error::InvalidArgument("both splits need at least one sample".into()));
    }
    if config.min_side < MIN_PAGE_SIDE || config.min_side > config.max_side {
        return Err(Error::InvalidArgument(format!(
            "invalid size range {}..={}",
            config.min_side, config.max_side
        )));
    }
    if config.fonts.is_empty() {
        return Err(Error::InvalidArgument("no font classes configured".into()));
    }
    let total = config.n_train + config.n_test;
    let mut samples = (0..total)
        .into_par_iter()
        .map(|i| {
            let split = if i < config.n_train { "train" } else { "test" };
            render_page(&sample_spec(config, i), format!("{split}-{i:05}"))
        })
        .collect::<Result<Vec<_>>>()?;
    let test = samples.split_off(config.n_train);
    Ok(Corpus {
        train: samples,
        test,
    })
}

/// Draws `batch_size` distinct samples uniformly from `samples`.
pub fn sample_minibatch<'a, R: Rng>(
    samples: &'a [TextSample],
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<&'a TextSample>> {
    if batch_size == 0 || batch_size > samples.len() {
        return Err(Error::BatchTooLarge {
            requested: batch_size,
            available: samples.len(),
        });
    }
    Ok(index::sample(rng, samples.len(), batch_size)
        .into_iter()
        .map(|i| &samples[i])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(seed: u64) -> CorpusConfig {
        CorpusConfig {
            n_train: 6,
            n_test: 3,
            min_side: 64,
            max_side: 128,
            seed,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn build_is_deterministic_and_valid() {
        let a = build_corpus(&small_config(5)).unwrap();
        let b = build_corpus(&small_config(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.train.len(), a.test.len()), (6, 3));
        for s in a.train.iter().chain(&a.test) {
            s.validate().unwrap();
            assert!(!s.boxes.is_empty());
            let (h, w) = s.dims();
            assert!((64..=128).contains(&h) && (64..=128).contains(&w));
        }
    }

    #[test]
    fn zero_split_is_rejected() {
        let mut c = small_config(1);
        c.n_test = 0;
        assert!(build_corpus(&c).is_err());
    }

    #[test]
    fn save_and_load_round_trip() {
        let corpus = build_corpus(&small_config(9)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        corpus.save(dir.path()).unwrap();
        let back = Corpus::load(dir.path()).unwrap();
        assert_eq!(corpus, back);
    }

    #[test]
    fn minibatch_errors_when_too_large() {
        let corpus = build_corpus(&small_config(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_minibatch(&corpus.train, 7, &mut rng),
            Err(Error::BatchTooLarge { requested: 7, available: 6 })
        ));
    }

    #[test]
    fn full_batch_is_a_permutation() {
        let corpus = build_corpus(&small_config(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batch = sample_minibatch(&corpus.train, 6, &mut rng).unwrap();
        let mut ids: Vec<_> = batch.iter().map(|s| s.id.clone()).collect();
        ids.sort();
        let mut all: Vec<_> = corpus.train.iter().map(|s| s.id.clone()).collect();
        all.sort();
        assert_eq!(ids, all);
    }
}
