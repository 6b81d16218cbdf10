use std::fs;
use std::path::{Path, PathBuf};

use crate::corpus::save_gray;
use crate::error::{Error, Result};
use crate::raster::Raster;

/// Magic header of the patch container.
pub const PATCH_MAGIC: &[u8; 5] = b"UDUP1";

/// A square underpainting patch whose values stay inside `[1 - epsilon, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    values: Raster<f32>,
    epsilon: f32,
}

fn check_epsilon(epsilon: f32) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("epsilon {epsilon} outside (0,1)")))
    }
}

/// Smallest `f32` value `lo` with `1 - lo <= epsilon` when evaluated exactly.
pub fn box_floor(epsilon: f32) -> f32 {
    let mut lo = 1.0f32 - epsilon;
    while 1.0f64 - lo as f64 > epsilon as f64 {
        lo = lo.next_up();
    }
    lo
}

/// Clamps every element into `[1 - epsilon, 1]`.
pub fn clip_to_box(values: &Raster<f32>, epsilon: f32) -> Raster<f32> {
    let lo = box_floor(epsilon);
    values.map(|v| if v.is_nan() { 1.0 } else { v.clamp(lo, 1.0) })
}

impl Patch {
    /// The initial all-ones patch.
    pub fn blank(side: usize, epsilon: f32) -> Result<Self> {
        if side == 0 {
            return Err(Error::InvalidArgument("patch side must be positive".into()));
        }
        check_epsilon(epsilon)?;
        Ok(Self {
            values: Raster::filled(side, side, 1.0),
            epsilon,
        })
    }

    /// Wraps feasible values; rejects non-square input or values outside the box.
    pub fn new(values: Raster<f32>, epsilon: f32) -> Result<Self> {
        check_epsilon(epsilon)?;
        if values.height() != values.width() || values.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "patch must be square, got {:?}",
                values.dims()
            )));
        }
        let lo = box_floor(epsilon);
        if let Some(v) = values.as_slice().iter().find(|v| !(lo..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "patch value {v} outside [{lo}, 1]"
            )));
        }
        Ok(Self { values, epsilon })
    }

    /// Projects arbitrary square values onto the feasible box.
    pub fn clipped(values: &Raster<f32>, epsilon: f32) -> Result<Self> {
        Self::new(clip_to_box(values, epsilon), epsilon)
    }

    pub fn side(&self) -> usize {
        self.values.height()
    }

    pub fn epsilon(&self) -> f32 {
        self.epsilon
    }

    pub fn values(&self) -> &Raster<f32> {
        &self.values
    }

    /// `max |1 - p|`, evaluated in `f64`.
    pub fn max_deviation(&self) -> f64 {
        self.values
            .as_slice()
            .iter()
            .fold(0.0f64, |m, &v| m.max((1.0 - v as f64).abs()))
    }

    /// Mean underpainting intensity: the average of `1 - p`.
    pub fn mui(&self) -> f64 {
        let sum: f64 = self.values.as_slice().iter().map(|&v| 1.0 - v as f64).sum();
        sum / self.values.len() as f64
    }

    /// Scales the darkening `1 - p` by `factor`, widening epsilon if needed.
    pub fn with_contrast(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::InvalidArgument(format!("contrast factor {factor}")));
        }
        let values = self
            .values
            .map(|v| (1.0 - factor * (1.0 - v as f64)) as f32);
        let needed = values
            .as_slice()
            .iter()
            .fold(0.0f32, |m, &v| m.max(1.0 - v));
        let epsilon = self.epsilon.max(needed.next_up());
        check_epsilon(epsilon)?;
        Self::clipped(&values, epsilon)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + 4 * self.values.len());
        out.extend_from_slice(PATCH_MAGIC);
        out.extend_from_slice(&(self.side() as u32).to_le_bytes());
        out.extend_from_slice(&self.epsilon.to_le_bytes());
        for v in self.values.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < 13 || &bytes[..5] != PATCH_MAGIC {
            return Err("missing UDUP1 header".into());
        }
        let side = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let epsilon = f32::from_le_bytes(bytes[9..13].try_into().unwrap());
        let body = &bytes[13..];
        if side == 0 || body.len() != 4 * side * side {
            return Err(format!("expected {} value bytes, found {}", 4 * side * side, body.len()));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Patch::new(Raster::from_vec(side, side, values), epsilon).map_err(|e| e.to_string())
    }

    /// Writes the container and an 8-bit PNG preview next to it.
    pub fn save(&self, path: &Path) -> Result<PathBuf> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))?;
        let preview = path.with_extension("png");
        save_gray(&self.values, &preview)?;
        Ok(preview)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|reason| Error::malformed(path, reason))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f32 = 30.0 / 255.0;

    #[test]
    fn clip_examples() {
        let r = Raster::from_vec(1, 3, vec![1.2, 0.5, 0.95]);
        let c = clip_to_box(&r, EPS);
        assert_eq!(c.get(0, 0), 1.0);
        assert!((c.get(0, 1) as f64 - (1.0 - 30.0 / 255.0)).abs() < 1e-6);
        assert!((c.get(0, 1) - 0.8824).abs() < 1e-4);
        assert_eq!(c.get(0, 2), 0.95);
        assert_eq!(clip_to_box(&c, EPS), c);
    }

    #[test]
    fn clip_meets_bound_exactly() {
        for k in 1..255 {
            let eps = k as f32 / 255.0;
            let lo = box_floor(eps);
            assert!(1.0 - lo as f64 <= eps as f64);
            let p = Patch::clipped(&Raster::filled(2, 2, -3.0), eps).unwrap();
            assert!(p.max_deviation() <= eps as f64);
        }
    }

    #[test]
    fn mui_examples() {
        assert_eq!(Patch::blank(4, EPS).unwrap().mui(), 0.0);
        let lo = Patch::clipped(&Raster::filled(4, 4, 0.0), EPS).unwrap();
        assert!((lo.mui() - 30.0 / 255.0).abs() < 1e-6);
        let half = Raster::from_fn(4, 4, |y, _| if y < 2 { 1.0 } else { 0.0 });
        let half = Patch::clipped(&half, EPS).unwrap();
        assert!((half.mui() - 15.0 / 255.0).abs() < 1e-6);
    }

    #[test]
    fn container_round_trip() {
        let p = Patch::clipped(&Raster::from_fn(3, 3, |y, x| 1.0 - 0.01 * (y * 3 + x) as f32), EPS)
            .unwrap();
        let bytes = p.to_bytes();
        assert_eq!(&bytes[..5], b"UDUP1");
        assert_eq!(bytes.len(), 13 + 36);
        assert_eq!(Patch::from_bytes(&bytes).unwrap(), p);
        assert!(Patch::from_bytes(&bytes[..20]).is_err());
    }

    #[test]
    fn contrast_rescale_hits_target_mui() {
        let p = Patch::clipped(&Raster::from_fn(4, 4, |y, x| 1.0 - 0.02 * ((y + x) % 3) as f32), EPS)
            .unwrap();
        let q = p.with_contrast(2.0).unwrap();
        assert!((q.mui() - 2.0 * p.mui()).abs() < 1e-6);
    }
}
