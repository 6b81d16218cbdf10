//! Surrogate training: Adam on per-pixel binary cross-entropy against filled
//! word-box regions, with random rescaling.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::sigmoid;
use super::unet::{HeadGrad, UNet, UNetGrad, MIN_SIDE};
use super::Surrogate;
use crate::corpus::{Corpus, TextSample};
use crate::error::{Error, Result};
use crate::eval::{extract_boxes, match_counts, MatchCounts, PostProcess};
use crate::geometry::PixelBox;
use crate::imageops::{resize_bilinear, resize_nearest, scaled_dims};
use crate::raster::Raster;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub widths: [usize; 5],
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Range of the per-sample rescaling applied during training.
    pub scale_min: f64,
    pub scale_max: f64,
    /// Probability of replacing a training sample with a blank page.
    pub blank_fraction: f64,
    /// Probability of remapping a sample to a random background level and
    /// a lower ink contrast.
    pub contrast_fraction: f64,
    /// Smallest ink-to-background contrast produced by the remapping.
    pub min_contrast: f64,
    /// Loss weight of background pixels within two pixels of a word box,
    /// which keeps neighbouring words apart.
    pub halo_weight: f64,
    /// Clean held-out recall below which training counts as failed.
    pub min_recall: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            widths: [8, 16, 24, 32, 32],
            epochs: 12,
            lr: 3e-3,
            batch_size: 8,
            seed: 0,
            scale_min: 0.6,
            scale_max: 1.4,
            blank_fraction: 0.05,
            contrast_fraction: 0.0,
            min_contrast: 0.15,
            halo_weight: 4.0,
            min_recall: 0.9,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.widths.contains(&0) {
            return bad("widths must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max) {
            return bad("need 0 < scale_min <= scale_max");
        }
        if !(0.0..1.0).contains(&self.blank_fraction) {
            return bad("blank_fraction must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.contrast_fraction) {
            return bad("contrast_fraction must be in [0, 1]");
        }
        if !(self.min_contrast > 0.0 && self.min_contrast <= BACKGROUND_MIN) {
            return bad("min_contrast must be in (0, 0.85]");
        }
        if !(self.halo_weight >= 0.0 && self.halo_weight.is_finite()) {
            return bad("halo_weight must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.min_recall) {
            return bad("min_recall must be in [0, 1]");
        }
        Ok(())
    }
}

/// Training target: 1 inside any word box.
pub fn region_target(h: usize, w: usize, boxes: &[PixelBox]) -> Raster<u8> {
    let mut t = Raster::filled(h, w, 0u8);
    for b in boxes {
        for y in b.y0..b.y1.min(h) {
            for x in b.x0..b.x1.min(w) {
                t.set(y, x, 1);
            }
        }
    }
    t
}

const HALO_RADIUS: usize = 2;

/// Per-pixel loss weights: `halo` on background pixels within
/// [`HALO_RADIUS`] (Chebyshev) of the target region, 1 elsewhere.
pub fn halo_weights(target: &Raster<u8>, halo: f32) -> Raster<f32> {
    let (h, w) = target.dims();
    // Separable max filter: rows, then columns.
    let mut rows = Raster::filled(h, w, 0u8);
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(HALO_RADIUS);
            let hi = (x + HALO_RADIUS + 1).min(w);
            rows.set(y, x, (lo..hi).map(|i| target.get(y, i)).max().unwrap_or(0));
        }
    }
    Raster::from_fn(h, w, |y, x| {
        let lo = y.saturating_sub(HALO_RADIUS);
        let hi = (y + HALO_RADIUS + 1).min(h);
        let near = (lo..hi).any(|i| rows.get(i, x) != 0);
        if near && target.get(y, x) == 0 {
            halo
        } else {
            1.0
        }
    })
}

struct Adam {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    step: i32,
}

impl Adam {
    const B1: f32 = 0.9;
    const B2: f32 = 0.999;
    const EPS: f32 = 1e-8;

    fn new(net: &UNet<f32>) -> Self {
        let sizes: Vec<usize> = net
            .convs()
            .iter()
            .flat_map(|c| [c.weight.len(), c.bias.len()])
            .collect();
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    fn update(&mut self, net: &mut UNet<f32>, grad: &UNetGrad<f32>, lr: f32) {
        self.step += 1;
        let c1 = 1.0 - Self::B1.powi(self.step);
        let c2 = 1.0 - Self::B2.powi(self.step);
        for (ci, conv) in net.convs_mut().into_iter().enumerate() {
            let g = &grad.convs[ci];
            for (slot, (params, grads)) in [(&mut conv.weight, &g.weight), (&mut conv.bias, &g.bias)]
                .into_iter()
                .enumerate()
            {
                let k = 2 * ci + slot;
                for (i, p) in params.iter_mut().enumerate() {
                    let gi = grads.get(i).copied().unwrap_or(0.0);
                    let m = &mut self.m[k][i];
                    let v = &mut self.v[k][i];
                    *m = Self::B1 * *m + (1.0 - Self::B1) * gi;
                    *v = Self::B2 * *v + (1.0 - Self::B2) * gi * gi;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
                }
            }
        }
    }
}

/// Loss and gradient contribution of one (image, target) pair, scaled by
/// `weight`.
fn sample_grad(
    net: &UNet<f32>,
    image: &Raster<f32>,
    target: &Raster<u8>,
    pixel_weights: &Raster<f32>,
    weight: f32,
    grad: &mut UNetGrad<f32>,
) -> Result<f64> {
    let (_, logits, _, trace) = net.forward_full(image)?;
    let n = logits.len() as f32;
    let mut loss = 0f64;
    let dz: Vec<f32> = logits
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .zip(pixel_weights.as_slice())
        .map(|((&z, &y), &pw)| {
            let y = f32::from(y);
            // softplus(z) - y z, computed stably.
            loss += f64::from(pw * (z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()));
            (sigmoid(z) - y) * pw * weight / n
        })
        .collect();
    let dz = Raster::from_vec(logits.height(), logits.width(), dz);
    net.backward(&trace, HeadGrad::Logit(&dz), &[], Some(grad));
    Ok(loss / f64::from(n))
}

/// Darkest background level produced by the contrast remapping.
const BACKGROUND_MIN: f64 = 0.85;

/// Random transformation of one training sample.
#[derive(Clone, Copy, Debug)]
struct Augment {
    scale: f64,
    blank: bool,
    /// `(background, ink)` levels replacing white and black.
    levels: Option<(f32, f32)>,
}

impl Augment {
    fn draw<R: Rng>(config: &SurrogateConfig, rng: &mut R) -> Self {
        let scale = rng.gen_range(config.scale_min..=config.scale_max);
        let blank = rng.gen_bool(config.blank_fraction);
        let levels = rng.gen_bool(config.contrast_fraction).then(|| {
            let bg = rng.gen_range(BACKGROUND_MIN..=1.0);
            let contrast = rng.gen_range(config.min_contrast..=bg);
            (bg as f32, (bg - contrast) as f32)
        });
        Self {
            scale,
            blank,
            levels,
        }
    }

    fn apply(&self, sample: &TextSample) -> Result<(Raster<f32>, Raster<u8>)> {
        let (h, w) = sample.dims();
        let (oh, ow) = scaled_dims(h, w, self.scale)?;
        let (oh, ow) = (oh.max(MIN_SIDE), ow.max(MIN_SIDE));
        let (mut image, target) = if self.blank {
            (Raster::filled(oh, ow, 1.0), Raster::filled(oh, ow, 0))
        } else {
            let target = region_target(h, w, &sample.boxes);
            (resize_bilinear(&sample.image, oh, ow)?, resize_nearest(&target, oh, ow)?)
        };
        if let Some((bg, ink)) = self.levels {
            image = image.map(|v| ink + (bg - ink) * v);
        }
        Ok((image, target))
    }
}

/// Clean box counts of a network over a set of samples.
pub fn clean_counts(net: &UNet<f32>, samples: &[TextSample], post: &PostProcess) -> Result<MatchCounts> {
    let mut total = MatchCounts::default();
    for s in samples {
        let prob = net.predict(&s.image)?;
        total.add(match_counts(&extract_boxes(&prob, post), &s.boxes, 0.5));
    }
    Ok(total)
}

/// Trains a surrogate on the train split and measures clean recall on the
/// test split (the train split when there is no test split). The checkpoint
/// is written before the recall check so a failed run can be inspected.
pub fn train_surrogate(
    corpus: &Corpus,
    config: &SurrogateConfig,
    checkpoint: Option<&Path>,
) -> Result<Surrogate> {
    config.validate()?;
    if corpus.train.is_empty() {
        return Err(Error::InvalidArgument("corpus has no train split".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = UNet::<f32>::new(config.widths, &mut rng);
    let mut adam = Adam::new(&net);
    let mut order: Vec<usize> = (0..corpus.train.len()).collect();
    let steps_per_epoch = order.len().div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let mut step = 0usize;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0f64;
        for chunk in order.chunks(config.batch_size) {
            // Cosine decay to a tenth of the base rate.
            let progress = step as f64 / total_steps as f64;
            let lr = config.lr * (0.1 + 0.45 * (1.0 + (std::f64::consts::PI * progress).cos()));
            let mut grad = UNetGrad::default();
            let weight = 1.0 / chunk.len() as f32;
            for &i in chunk {
                let (image, target) = Augment::draw(config, &mut rng).apply(&corpus.train[i])?;
                let pw = halo_weights(&target, config.halo_weight as f32);
                epoch_loss += sample_grad(&net, &image, &target, &pw, weight, &mut grad)?;
            }
            adam.update(&mut net, &grad, lr as f32);
            step += 1;
        }
        log::info!(
            "surrogate epoch {}/{}: bce {:.4}",
            epoch + 1,
            config.epochs,
            epoch_loss / order.len() as f64
        );
    }
    let held_out = if corpus.test.is_empty() {
        &corpus.train
    } else {
        &corpus.test
    };
    let recall = clean_counts(&net, held_out, &PostProcess::default())?.recall();
    log::info!("surrogate clean recall {recall:.4}");
    let surrogate = Surrogate {
        config: config.clone(),
        net,
        clean_recall: Some(recall),
    };
    if let Some(path) = checkpoint {
        surrogate.save(path)?;
    }
    if recall < config.min_recall {
        return Err(Error::InsufficientRecall {
            achieved: recall,
            required: config.min_recall,
        });
    }
    Ok(surrogate)
}
