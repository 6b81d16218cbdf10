//! Box extraction from probability maps and one-to-one box matching.

use serde::{Deserialize, Serialize};

use crate::geometry::PixelBox;
use crate::raster::Raster;

/// Thresholding and component filtering applied to every probability map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostProcess {
    pub threshold: f32,
    pub min_area: usize,
}

impl Default for PostProcess {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            min_area: 6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub bbox: PixelBox,
    pub score: f32,
}

/// Detections for one image.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub sample_id: String,
    pub boxes: Vec<ScoredBox>,
}

/// Bounding boxes of the 8-connected components of `map >= threshold`,
/// sorted by `(y0, x0)`. Scores are the mean probability of each component.
pub fn extract_boxes(map: &Raster<f32>, post: &PostProcess) -> Vec<ScoredBox> {
    let (h, w) = map.dims();
    let values = map.as_slice();
    let mut seen = vec![false; h * w];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    for start in 0..h * w {
        if seen[start] || values[start] < post.threshold {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut y0, mut x0, mut y1, mut x1) = (h, w, 0, 0);
        let mut area = 0usize;
        let mut sum = 0f64;
        while let Some(i) = stack.pop() {
            let (y, x) = (i / w, i % w);
            y0 = y0.min(y);
            x0 = x0.min(x);
            y1 = y1.max(y + 1);
            x1 = x1.max(x + 1);
            area += 1;
            sum += f64::from(values[i]);
            for ny in y.saturating_sub(1)..(y + 2).min(h) {
                for nx in x.saturating_sub(1)..(x + 2).min(w) {
                    let j = ny * w + nx;
                    if !seen[j] && values[j] >= post.threshold {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if area >= post.min_area {
            out.push(ScoredBox {
                bbox: PixelBox::new(x0, y0, x1, y1),
                score: (sum / area as f64) as f32,
            });
        }
    }
    out.sort_by_key(|b| (b.bbox.y0, b.bbox.x0, b.bbox.y1, b.bbox.x1));
    out
}

/// Pooled counts from box matching.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub matched: usize,
    pub predicted: usize,
    pub truth: usize,
}

impl MatchCounts {
    pub fn add(&mut self, other: MatchCounts) {
        self.matched += other.matched;
        self.predicted += other.predicted;
        self.truth += other.truth;
    }

    /// `matched / truth`; 1 when there is nothing to find.
    pub fn recall(&self) -> f64 {
        if self.truth == 0 {
            1.0
        } else {
            self.matched as f64 / self.truth as f64
        }
    }

    /// `matched / predicted`; 1 for an empty prediction on empty truth,
    /// 0 for an empty prediction when truth exists.
    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            if self.truth == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            self.matched as f64 / self.predicted as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub recall: f64,
    pub precision: f64,
}

/// Greedy one-to-one matching: predictions in descending score order each
/// take the unmatched truth box of highest IoU, if that IoU reaches
/// `iou_threshold`. Ties keep the earlier box.
pub fn match_counts(pred: &[ScoredBox], truth: &[PixelBox], iou_threshold: f64) -> MatchCounts {
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&a, &b| pred[b].score.total_cmp(&pred[a].score).then(a.cmp(&b)));
    let mut taken = vec![false; truth.len()];
    let mut matched = 0;
    for i in order {
        let mut best: Option<(usize, f64)> = None;
        for (j, t) in truth.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let iou = pred[i].bbox.iou(t);
            if iou >= iou_threshold && best.map_or(true, |(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        if let Some((j, _)) = best {
            taken[j] = true;
            matched += 1;
        }
    }
    MatchCounts {
        matched,
        predicted: pred.len(),
        truth: truth.len(),
    }
}

pub fn match_metrics(pred: &[ScoredBox], truth: &[PixelBox], iou_threshold: f64) -> Metrics {
    let c = match_counts(pred, truth, iou_threshold);
    Metrics {
        recall: c.recall(),
        precision: c.precision(),
    }
}
