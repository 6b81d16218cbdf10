use serde::{Deserialize, Serialize};

/// Axis-aligned box in pixel units, half-open: covers `x0..x1` by `y0..y1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 4]", into = "[usize; 4]")]
pub struct PixelBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelBox {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        debug_assert!(x0 <= x1 && y0 <= y1);
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn intersection(&self, other: &Self) -> usize {
        let w = self.x1.min(other.x1).saturating_sub(self.x0.max(other.x0));
        let h = self.y1.min(other.y1).saturating_sub(self.y0.max(other.y0));
        w * h
    }

    pub fn iou(&self, other: &Self) -> f64 {
        let inter = self.intersection(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn fits_within(&self, h: usize, w: usize) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1 && self.x1 <= w && self.y1 <= h
    }

    pub fn contains_box(&self, other: &Self) -> bool {
        other.x0 >= self.x0 && other.x1 <= self.x1 && other.y0 >= self.y0 && other.y1 <= self.y1
    }

    /// Maps the box through a resize from `(h, w)` to `(oh, ow)`, rounding outward.
    pub fn rescaled(&self, h: usize, w: usize, oh: usize, ow: usize) -> Self {
        let sx = ow as f64 / w as f64;
        let sy = oh as f64 / h as f64;
        let x0 = ((self.x0 as f64 * sx).floor() as usize).min(ow.saturating_sub(1));
        let y0 = ((self.y0 as f64 * sy).floor() as usize).min(oh.saturating_sub(1));
        let x1 = ((self.x1 as f64 * sx).ceil() as usize).clamp(x0 + 1, ow);
        let y1 = ((self.y1 as f64 * sy).ceil() as usize).clamp(y0 + 1, oh);
        Self { x0, y0, x1, y1 }
    }

    /// Shifts the box into a window starting at `(y, x)`; the caller checks containment.
    pub fn translated(&self, y: usize, x: usize) -> Self {
        Self {
            x0: self.x0 - x,
            y0: self.y0 - y,
            x1: self.x1 - x,
            y1: self.y1 - y,
        }
    }
}

impl From<[usize; 4]> for PixelBox {
    fn from(v: [usize; 4]) -> Self {
        Self {
            x0: v[0],
            y0: v[1],
            x1: v[2],
            y1: v[3],
        }
    }
}

impl From<PixelBox> for [usize; 4] {
    fn from(b: PixelBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}
