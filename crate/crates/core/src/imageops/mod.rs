//! Image algebra for underpainting: tiling, fusion with the text layer,
//! random scaling, box clipping and the JPEG attack.

mod jpeg;
mod patch;
mod resize;
mod schedule;
mod tile;

pub use jpeg::jpeg_attack;
pub use patch::{box_floor, clip_to_box, Patch, PATCH_MAGIC};
pub use resize::{
    random_scale, resize_bilinear, resize_nearest, scale_image, scale_mask, scaled_dims, Bilinear,
    ScaleKind, MAX_SCALE, MIN_SCALE,
};
pub use schedule::{schedule_range, ScaleSchedule};
pub use tile::{tile, tile_adjoint, tile_with_phase};

use crate::corpus::TextSample;
use crate::error::{Error, Result};
use crate::raster::{Raster, Real};

/// `mask * underpainting + (1 - mask) * image`, pixel by pixel.
///
/// With a binary mask every output pixel is exactly one of its two inputs.
pub fn compose<T: Real>(image: &Raster<T>, mask: &Raster<u8>, underpainting: &Raster<T>) -> Raster<T> {
    assert_eq!(image.dims(), mask.dims(), "compose: mask dims");
    assert_eq!(image.dims(), underpainting.dims(), "compose: underpainting dims");
    let data = image
        .as_slice()
        .iter()
        .zip(mask.as_slice())
        .zip(underpainting.as_slice())
        .map(|((&x, &m), &u)| if m != 0 { u } else { x })
        .collect();
    Raster::from_vec(image.height(), image.width(), data)
}

/// Gradient of [`compose`] with respect to the underpainting.
pub fn compose_adjoint<T: Real>(grad: &Raster<T>, mask: &Raster<u8>) -> Raster<T> {
    let data = grad
        .as_slice()
        .iter()
        .zip(mask.as_slice())
        .map(|(&g, &m)| if m != 0 { g } else { T::zero() })
        .collect();
    Raster::from_vec(grad.height(), grad.width(), data)
}

/// A sample after the first random scaling, ready for fusion.
#[derive(Clone, Debug)]
pub struct ScaledText<T> {
    pub image: Raster<T>,
    pub mask: Raster<u8>,
}

/// Scales image and mask of one sample by the same factor `r`.
pub fn scale_text<T: Real>(image: &Raster<T>, mask: &Raster<u8>, r: f64) -> Result<ScaledText<T>> {
    if image.dims() != mask.dims() {
        return Err(Error::ShapeMismatch(format!(
            "image {:?} vs mask {:?}",
            image.dims(),
            mask.dims()
        )));
    }
    Ok(ScaledText {
        image: scale_image(image, r)?,
        mask: scale_mask(mask, r)?,
    })
}

/// Defended text image: the sample scaled by `r` with the patch tiled under
/// its background pixels.
pub fn fuse(sample: &TextSample, patch: &Patch, r: f64) -> Result<Raster<f32>> {
    let scaled = scale_text(&sample.image, &sample.mask, r)?;
    let (h, w) = scaled.image.dims();
    let under = tile(patch.values(), h, w);
    Ok(compose(&scaled.image, &scaled.mask, &under))
}
