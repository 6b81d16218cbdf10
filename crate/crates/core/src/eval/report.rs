//! Clean-versus-defended evaluation of a patch on a split.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::boxes::{match_counts, MatchCounts, PostProcess, ScoredBox};
use crate::corpus::TextSample;
use crate::detector::{Detector, MIN_SIDE};
use crate::error::{Error, Result};
use crate::geometry::PixelBox;
use crate::imageops::{compose, jpeg_attack, scale_image, tile_with_phase, Patch};
use crate::raster::Raster;

/// Window size of a crop, either fixed or a random fraction of each side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CropSize {
    Fixed { height: usize, width: usize },
    Fraction { min: f64, max: f64 },
}

/// Random crop windows. The patch is tiled from the page origin before
/// cropping, so each window sees the tiling at an arbitrary phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropSpec {
    pub size: CropSize,
    pub windows_per_sample: usize,
    pub seed: u64,
}

/// Post-fusion transform of an evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum Transform {
    #[default]
    None,
    /// Rescale clean and defended images alike.
    Scale(f64),
    /// JPEG-compress the defended image.
    Jpeg(u8),
    Crop(CropSpec),
}

impl Transform {
    pub fn label(&self) -> String {
        match self {
            Transform::None => "none".into(),
            Transform::Scale(r) => format!("scale={r}"),
            Transform::Jpeg(q) => format!("jpeg={q}"),
            Transform::Crop(c) => match c.size {
                CropSize::Fixed { height, width } => format!("crop={width}x{height}"),
                CropSize::Fraction { min, max } => format!("crop={min}-{max}"),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub post: PostProcess,
    pub iou_threshold: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            post: PostProcess::default(),
            iou_threshold: 0.5,
        }
    }
}

/// Counts for one evaluated view (a sample, or one crop window of it).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleBreakdown {
    pub id: String,
    pub clean: MatchCounts,
    pub defended: MatchCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub transform: String,
    /// Sweep axis and level, when the report belongs to a sweep.
    pub axis: Option<String>,
    pub level: Option<String>,
    pub recall_clean: f64,
    pub recall_defended: f64,
    pub precision_clean: f64,
    pub precision_defended: f64,
    /// `recall_defended / recall_clean`; absent when clean recall is 0.
    pub ratio_r: Option<f64>,
    /// `precision_defended / precision_clean`; absent when clean precision is 0.
    pub ratio_p: Option<f64>,
    pub clean: MatchCounts,
    pub defended: MatchCounts,
    pub samples: Vec<SampleBreakdown>,
}

impl EvalReport {
    pub fn from_breakdown(transform: String, samples: Vec<SampleBreakdown>) -> Self {
        let mut clean = MatchCounts::default();
        let mut defended = MatchCounts::default();
        for s in &samples {
            clean.add(s.clean);
            defended.add(s.defended);
        }
        let ratio = |d: f64, c: f64| (c > 0.0).then(|| d / c);
        // With no truth boxes there is no recall to speak of.
        let recall = |m: &MatchCounts| {
            if m.truth == 0 {
                0.0
            } else {
                m.recall()
            }
        };
        let (rc, rd) = (recall(&clean), recall(&defended));
        let (pc, pd) = (clean.precision(), defended.precision());
        Self {
            transform,
            axis: None,
            level: None,
            recall_clean: rc,
            recall_defended: rd,
            precision_clean: pc,
            precision_defended: pd,
            ratio_r: ratio(rd, rc),
            ratio_p: ratio(pd, pc),
            clean,
            defended,
            samples,
        }
    }

    /// `ratio_r`, or [`Error::UndefinedRatio`].
    pub fn require_ratio_r(&self) -> Result<f64> {
        self.ratio_r.ok_or(Error::UndefinedRatio)
    }

    pub fn summary(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v:.4}"));
        format!(
            "{}: R^c={:.4} R^d={:.4} P^c={:.4} P^d={:.4} R^d/R^c={} P^d/P^c={}",
            self.transform,
            self.recall_clean,
            self.recall_defended,
            self.precision_clean,
            self.precision_defended,
            fmt(self.ratio_r),
            fmt(self.ratio_p)
        )
    }
}

/// One clean/defended image pair with its truth boxes.
pub struct View {
    pub id: String,
    pub clean: Raster<f32>,
    pub defended: Raster<f32>,
    pub truth: Vec<PixelBox>,
}

fn crop_windows(spec: &CropSpec, index: usize, h: usize, w: usize) -> Result<Vec<(usize, usize, usize, usize)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    (0..spec.windows_per_sample)
        .map(|_| {
            let (ch, cw) = match spec.size {
                CropSize::Fixed { height, width } => (height, width),
                CropSize::Fraction { min, max } => {
                    let fh = rng.gen_range(min..=max);
                    let fw = rng.gen_range(min..=max);
                    ((fh * h as f64).round() as usize, (fw * w as f64).round() as usize)
                }
            };
            if ch < MIN_SIDE || cw < MIN_SIDE || ch > h || cw > w {
                return Err(Error::InvalidArgument(format!(
                    "crop {cw}x{ch} does not fit a {w}x{h} page with minimum side {MIN_SIDE}"
                )));
            }
            let y0 = rng.gen_range(0..=h - ch);
            let x0 = rng.gen_range(0..=w - cw);
            Ok((y0, x0, ch, cw))
        })
        .collect()
}

/// Builds the clean/defended views of one sample under a transform. The
/// patch is fused at the original scale, then the transform is applied.
pub fn views(sample: &TextSample, index: usize, patch: &Patch, transform: &Transform) -> Result<Vec<View>> {
    let (h, w) = sample.dims();
    let under = tile_with_phase(patch.values(), h, w, 0, 0);
    let fused = compose(&sample.image, &sample.mask, &under);
    Ok(match transform {
        Transform::None => vec![View {
            id: sample.id.clone(),
            clean: sample.image.clone(),
            defended: fused,
            truth: sample.boxes.clone(),
        }],
        Transform::Scale(r) => {
            let clean = scale_image(&sample.image, *r)?;
            let (oh, ow) = clean.dims();
            vec![View {
                id: sample.id.clone(),
                defended: scale_image(&fused, *r)?,
                truth: sample.boxes.iter().map(|b| b.rescaled(h, w, oh, ow)).collect(),
                clean,
            }]
        }
        Transform::Jpeg(q) => vec![View {
            id: sample.id.clone(),
            clean: sample.image.clone(),
            defended: jpeg_attack(&fused, *q)?,
            truth: sample.boxes.clone(),
        }],
        Transform::Crop(spec) => crop_windows(spec, index, h, w)?
            .into_iter()
            .enumerate()
            .map(|(k, (y0, x0, ch, cw))| {
                let window = PixelBox::new(x0, y0, x0 + cw, y0 + ch);
                View {
                    id: format!("{}#{k}", sample.id),
                    clean: sample.image.crop(y0, x0, ch, cw),
                    defended: fused.crop(y0, x0, ch, cw),
                    truth: sample
                        .boxes
                        .iter()
                        .filter(|b| window.contains_box(b))
                        .map(|b| PixelBox::new(b.x0 - x0, b.y0 - y0, b.x1 - x0, b.y1 - y0))
                        .collect(),
                }
            })
            .collect(),
    })
}

/// Detections on the defended image of every view, for overlays.
pub fn defended_detections(
    detector: &Detector,
    views: &[View],
    options: &EvalOptions,
) -> Result<Vec<Vec<ScoredBox>>> {
    views.iter().map(|v| detector.detect(&v.defended, &options.post)).collect()
}

fn evaluate_view(detector: &Detector, view: &View, options: &EvalOptions) -> Result<SampleBreakdown> {
    let clean = detector.detect(&view.clean, &options.post)?;
    let defended = detector.detect(&view.defended, &options.post)?;
    Ok(SampleBreakdown {
        id: view.id.clone(),
        clean: match_counts(&clean, &view.truth, options.iou_threshold),
        defended: match_counts(&defended, &view.truth, options.iou_threshold),
    })
}

/// Evaluates every sample clean and defended under `transform` and pools the
/// box counts over the split. Samples run in parallel; results keep split
/// order.
pub fn ratio_report(
    detector: &Detector,
    samples: &[TextSample],
    patch: &Patch,
    transform: &Transform,
    options: &EvalOptions,
) -> Result<EvalReport> {
    if let Transform::Jpeg(q) = transform {
        if !(1..=100).contains(q) {
            return Err(Error::InvalidArgument(format!("JPEG quality {q} outside 1..=100")));
        }
    }
    let per_sample: Vec<Result<Vec<SampleBreakdown>>> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            views(s, i, patch, transform)?
                .iter()
                .map(|v| evaluate_view(detector, v, options))
                .collect()
        })
        .collect();
    let mut breakdown = Vec::new();
    for r in per_sample {
        breakdown.extend(r?);
    }
    Ok(EvalReport::from_breakdown(transform.label(), breakdown))
}
