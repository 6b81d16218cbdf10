use image::codecs::jpeg::JpegEncoder;
use image::{ExtendedColorType, ImageFormat};

use crate::corpus::to_u8;
use crate::error::{Error, Result};
use crate::raster::Raster;

/// Baseline JPEG round trip of a grayscale raster at `quality` (1..=100).
pub fn jpeg_attack(input: &Raster<f32>, quality: u8) -> Result<Raster<f32>> {
    if !(1..=100).contains(&quality) {
        return Err(Error::InvalidArgument(format!("JPEG quality {quality} outside 1..=100")));
    }
    let (h, w) = input.dims();
    let pixels: Vec<u8> = input.as_slice().iter().map(|&v| to_u8(v)).collect();
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, quality).encode(
        &pixels,
        w as u32,
        h as u32,
        ExtendedColorType::L8,
    )?;
    let decoded = image::load_from_memory_with_format(&buf, ImageFormat::Jpeg)?.into_luma8();
    debug_assert_eq!(decoded.dimensions(), (w as u32, h as u32));
    Ok(Raster::from_vec(
        h,
        w,
        decoded.into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quality_100_is_nearly_lossless() {
        let img = Raster::from_fn(40, 56, |y, x| {
            0.5 + 0.4 * ((y as f32 * 0.3).sin() * (x as f32 * 0.21).cos())
        });
        let out = jpeg_attack(&img, 100).unwrap();
        assert!(out.max_abs_diff(&img) <= 0.02);
    }

    #[test]
    fn constant_gray_survives() {
        let img = Raster::filled(24, 24, 128.0 / 255.0);
        for q in [50, 75, 100] {
            let out = jpeg_attack(&img, q).unwrap();
            assert!(out.max_abs_diff(&img) <= 1.0 / 255.0 + 1e-6, "q={q}");
        }
    }

    #[test]
    fn rejects_quality_zero() {
        assert!(jpeg_attack(&Raster::filled(8, 8, 0.5), 0).is_err());
    }
}
