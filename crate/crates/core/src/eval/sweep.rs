//! Sweeps over one evaluation axis, MUI-level patch selection and ablations.

use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::boxes::ScoredBox;
use super::report::{ratio_report, EvalOptions, EvalReport, Transform};
use crate::corpus::TextSample;
use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::imageops::Patch;
use crate::raster::Raster;
use crate::udup::{train, Checkpoint, TrainConfig, TrainOutcome};

/// Text color as 8-bit RGB; the pipeline sees its luma.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Color {
    pub name: &'static str,
    pub rgb: [u8; 3],
}

impl Color {
    /// ITU-R BT.601 luma in `[0,1]`.
    pub fn luma(&self) -> f64 {
        let [r, g, b] = self.rgb.map(f64::from);
        (0.299 * r + 0.587 * g + 0.114 * b) / 255.0
    }

    pub fn parse(name: &str) -> Result<Self> {
        TEXT_COLORS
            .iter()
            .copied()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown color {name:?}")))
    }
}

/// Six text colors for the color axis.
pub const TEXT_COLORS: [Color; 6] = [
    Color { name: "black", rgb: [0, 0, 0] },
    Color { name: "red", rgb: [200, 0, 0] },
    Color { name: "green", rgb: [0, 128, 0] },
    Color { name: "blue", rgb: [0, 0, 200] },
    Color { name: "purple", rgb: [128, 0, 128] },
    Color { name: "brown", rgb: [139, 69, 19] },
];

/// Repaints the ink of a sample in `color`: a pixel with ink coverage `c`
/// (`1 - value`) becomes `1 - c * (1 - luma)`. Background stays white.
pub fn recolor(sample: &TextSample, color: &Color) -> TextSample {
    let keep = (1.0 - color.luma()) as f32;
    TextSample {
        image: sample.image.map(|v| 1.0 - (1.0 - v) * keep),
        ..sample.clone()
    }
}

/// How a requested MUI level was obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MuiSource {
    Checkpoint { t: usize },
    /// Final patch with its contrast scaled by `factor`.
    Rescaled { factor: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MuiSelection {
    pub target: f64,
    pub patch: Patch,
    pub source: MuiSource,
}

pub const MUI_TOLERANCE: f64 = 0.005;

/// Picks the latest checkpoint whose MUI lies within `tolerance` of
/// `target`. Without one, and if `allow_rescale`, rescales the contrast of
/// the final patch to hit the target (widening the bound if needed).
pub fn patch_at_mui(
    checkpoints: &[Checkpoint],
    target: f64,
    tolerance: f64,
    allow_rescale: bool,
) -> Result<MuiSelection> {
    if let Some(c) = checkpoints
        .iter()
        .rev()
        .find(|c| (c.mui() - target).abs() <= tolerance)
    {
        return Ok(MuiSelection {
            target,
            patch: c.patch.clone(),
            source: MuiSource::Checkpoint { t: c.t },
        });
    }
    let last = checkpoints.last().ok_or(Error::MissingCheckpoint(target))?;
    let mui = last.mui();
    if !allow_rescale || mui <= 0.0 {
        return Err(Error::MissingCheckpoint(target));
    }
    let factor = target / mui;
    Ok(MuiSelection {
        target,
        patch: last.patch.with_contrast(factor)?,
        source: MuiSource::Rescaled { factor },
    })
}

/// Levels of one sweep axis.
#[derive(Clone, Debug)]
pub enum SweepAxis {
    /// Scale factors applied to clean and defended images.
    Scale(Vec<f64>),
    /// JPEG qualities; `None` is the uncompressed reference.
    Jpeg(Vec<Option<u8>>),
    Color(Vec<Color>),
    /// Pre-built patches, e.g. MUI levels or patch sizes, under an axis name.
    Patches { axis: String, levels: Vec<(String, Patch)> },
}

impl SweepAxis {
    pub fn name(&self) -> &str {
        match self {
            SweepAxis::Scale(_) => "scale",
            SweepAxis::Jpeg(_) => "jpeg",
            SweepAxis::Color(_) => "color",
            SweepAxis::Patches { axis, .. } => axis,
        }
    }
}

/// One report per level, everything else held fixed.
pub fn sweep(
    detector: &Detector,
    samples: &[TextSample],
    patch: &Patch,
    axis: &SweepAxis,
    options: &EvalOptions,
) -> Result<Vec<EvalReport>> {
    let tag = |mut r: EvalReport, level: String| {
        r.axis = Some(axis.name().to_string());
        r.level = Some(level);
        r
    };
    match axis {
        SweepAxis::Scale(levels) => levels
            .iter()
            .map(|&r| {
                let rep = ratio_report(detector, samples, patch, &Transform::Scale(r), options)?;
                Ok(tag(rep, r.to_string()))
            })
            .collect(),
        SweepAxis::Jpeg(levels) => levels
            .iter()
            .map(|q| {
                let t = q.map_or(Transform::None, Transform::Jpeg);
                let rep = ratio_report(detector, samples, patch, &t, options)?;
                Ok(tag(rep, q.map_or("none".to_string(), |q| q.to_string())))
            })
            .collect(),
        SweepAxis::Color(colors) => colors
            .iter()
            .map(|c| {
                let painted: Vec<TextSample> = samples.iter().map(|s| recolor(s, c)).collect();
                let rep = ratio_report(detector, &painted, patch, &Transform::None, options)?;
                Ok(tag(rep, c.name.to_string()))
            })
            .collect(),
        SweepAxis::Patches { levels, .. } => levels
            .iter()
            .map(|(label, p)| {
                let rep = ratio_report(detector, samples, p, &Transform::None, options)?;
                Ok(tag(rep, label.clone()))
            })
            .collect(),
    }
}

pub const REPORT_CSV_HEADER: &str =
    "axis,level,transform,recall_clean,recall_defended,precision_clean,precision_defended,ratio_r,ratio_p";

/// CSV table of reports; undefined ratios are empty fields.
pub fn reports_csv(reports: &[EvalReport]) -> String {
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{},{}\n",
            r.axis.as_deref().unwrap_or(""),
            r.level.as_deref().unwrap_or(""),
            r.transform,
            r.recall_clean,
            r.recall_defended,
            r.precision_clean,
            r.precision_defended,
            opt(r.ratio_r),
            opt(r.ratio_p)
        ));
    }
    out
}

/// Configurations compared by [`ablate`].
#[derive(Clone, Debug, PartialEq)]
pub enum AblationGrid {
    /// Middle-layer loss on/off crossed with pre-fusion scaling on/off.
    Components,
    /// Balance weights; 0 disables the middle-layer loss.
    Lambda(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct AblationCell {
    pub label: String,
    pub config: TrainConfig,
    /// MUI of the evaluated patch.
    pub mui: f64,
    pub source: Option<MuiSource>,
    pub report: EvalReport,
}

pub fn grid_configs(base: &TrainConfig, grid: &AblationGrid) -> Vec<(String, TrainConfig)> {
    match grid {
        AblationGrid::Components => [(true, true), (true, false), (false, true), (false, false)]
            .into_iter()
            .map(|(m, s)| {
                let label = format!(
                    "middle={},pre_scale={}",
                    if m { "on" } else { "off" },
                    if s { "on" } else { "off" }
                );
                let config = TrainConfig {
                    middle_loss: m,
                    pre_scale: s,
                    ..base.clone()
                };
                (label, config)
            })
            .collect(),
        AblationGrid::Lambda(values) => values
            .iter()
            .map(|&l| {
                let config = TrainConfig {
                    lambda: l,
                    middle_loss: l > 0.0,
                    ..base.clone()
                };
                (format!("lambda={l}"), config)
            })
            .collect(),
    }
}

/// Trains a fresh patch per grid cell (same seed and budget) and evaluates
/// it. With `mui_target`, each cell is evaluated at that MUI level.
pub fn ablate(
    train_samples: &[TextSample],
    eval_samples: &[TextSample],
    detector: &Detector,
    base: &TrainConfig,
    grid: &AblationGrid,
    mui_target: Option<f64>,
    options: &EvalOptions,
) -> Result<Vec<AblationCell>> {
    let net = detector.whitebox()?;
    grid_configs(base, grid)
        .into_iter()
        .map(|(label, config)| {
            let outcome: TrainOutcome = train(train_samples, net, &config, None)?;
            let (patch, source) = match mui_target {
                Some(m) => {
                    let sel = patch_at_mui(&outcome.checkpoints, m, MUI_TOLERANCE, true)?;
                    (sel.patch, Some(sel.source))
                }
                None => (outcome.patch, None),
            };
            let mut report = ratio_report(detector, eval_samples, &patch, &Transform::None, options)?;
            report.axis = Some("ablation".into());
            report.level = Some(label.clone());
            log::info!("ablation {label}: {}", report.summary());
            Ok(AblationCell {
                label,
                config,
                mui: patch.mui(),
                source,
                report,
            })
        })
        .collect()
}

pub const ABLATION_CSV_HEADER: &str = "cell,middle_loss,pre_scale,lambda,mui,ratio_r,ratio_p";

pub fn ablation_csv(cells: &[AblationCell]) -> String {
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    let mut out = String::from(ABLATION_CSV_HEADER);
    out.push('\n');
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{},{}\n",
            c.label,
            c.config.middle_loss,
            c.config.pre_scale,
            c.config.lambda,
            c.mui,
            opt(c.report.ratio_r),
            opt(c.report.ratio_p)
        ));
    }
    out
}

/// Grayscale image with detected boxes outlined in red.
pub fn overlay(image: &Raster<f32>, boxes: &[ScoredBox]) -> RgbImage {
    let (h, w) = image.dims();
    let mut out = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let v = crate::corpus::to_u8(image.get(y as usize, x as usize));
        Rgb([v, v, v])
    });
    let red = Rgb([255, 0, 0]);
    for b in boxes {
        let (x0, y0, x1, y1) = (b.bbox.x0 as u32, b.bbox.y0 as u32, b.bbox.x1 as u32 - 1, b.bbox.y1 as u32 - 1);
        for x in x0..=x1 {
            out.put_pixel(x, y0, red);
            out.put_pixel(x, y1, red);
        }
        for y in y0..=y1 {
            out.put_pixel(x0, y, red);
            out.put_pixel(x1, y, red);
        }
    }
    out
}

pub fn save_overlay(image: &Raster<f32>, boxes: &[ScoredBox], path: &Path) -> Result<()> {
    Ok(overlay(image, boxes).save(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PixelBox;

    fn checkpoint(t: usize, v: f32) -> Checkpoint {
        Checkpoint {
            t,
            patch: Patch::clipped(&Raster::filled(2, 2, v), 30.0 / 255.0).unwrap(),
        }
    }

    #[test]
    fn mui_selection_prefers_latest_checkpoint() {
        let cks = vec![checkpoint(1, 0.99), checkpoint(2, 0.91), checkpoint(3, 0.912), checkpoint(4, 0.89)];
        let s = patch_at_mui(&cks, 0.09, MUI_TOLERANCE, false).unwrap();
        assert_eq!(s.source, MuiSource::Checkpoint { t: 3 });
    }

    #[test]
    fn mui_selection_falls_back_to_contrast() {
        let cks = vec![checkpoint(1, 0.95)];
        assert!(matches!(
            patch_at_mui(&cks, 0.12, MUI_TOLERANCE, false),
            Err(Error::MissingCheckpoint(_))
        ));
        let s = patch_at_mui(&cks, 0.12, MUI_TOLERANCE, true).unwrap();
        assert!((s.patch.mui() - 0.12).abs() < 1e-6);
        assert!(matches!(s.source, MuiSource::Rescaled { .. }));
    }

    #[test]
    fn recolor_keeps_background() {
        let s = TextSample {
            id: "c".into(),
            image: Raster::from_vec(1, 3, vec![1.0, 0.0, 0.5]),
            mask: Raster::from_vec(1, 3, vec![1, 0, 0]),
            boxes: vec![PixelBox::new(1, 0, 3, 1)],
        };
        let black = recolor(&s, &TEXT_COLORS[0]);
        assert_eq!(black.image, s.image);
        let blue = recolor(&s, &Color::parse("blue").unwrap());
        assert_eq!(blue.image.get(0, 0), 1.0);
        assert!((f64::from(blue.image.get(0, 1)) - 200.0 * 0.114 / 255.0).abs() < 1e-6);
    }

    #[test]
    fn overlay_draws_red_outline() {
        let img = Raster::filled(10, 10, 1.0f32);
        let o = overlay(&img, &[ScoredBox { bbox: PixelBox::new(2, 3, 6, 8), score: 0.9 }]);
        assert_eq!(o.get_pixel(2, 3), &Rgb([255, 0, 0]));
        assert_eq!(o.get_pixel(5, 7), &Rgb([255, 0, 0]));
        assert_eq!(o.get_pixel(4, 5), &Rgb([255, 255, 255]));
    }
}
