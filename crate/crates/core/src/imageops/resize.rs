use crate::error::{Error, Result};
use crate::raster::{Raster, Real};

/// Bounds of the random scaling factor.
pub const MIN_SCALE: f64 = 0.6;
pub const MAX_SCALE: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScaleKind {
    Image,
    Mask,
}

/// `(round(r*h), round(r*w))`, rejecting empty outputs.
pub fn scaled_dims(h: usize, w: usize, r: f64) -> Result<(usize, usize)> {
    let oh = (r * h as f64).round();
    let ow = (r * w as f64).round();
    if !(oh >= 1.0 && ow >= 1.0) {
        return Err(Error::DegenerateSize {
            h: oh.max(0.0) as usize,
            w: ow.max(0.0) as usize,
        });
    }
    Ok((oh as usize, ow as usize))
}

/// Half-pixel-centred source coordinate taps along one axis.
#[derive(Clone, Debug)]
struct AxisTaps {
    lo: Vec<usize>,
    hi: Vec<usize>,
    frac: Vec<f64>,
}

impl AxisTaps {
    fn new(n_in: usize, n_out: usize) -> Self {
        let scale = n_in as f64 / n_out as f64;
        let mut lo = Vec::with_capacity(n_out);
        let mut hi = Vec::with_capacity(n_out);
        let mut frac = Vec::with_capacity(n_out);
        for i in 0..n_out {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
            let l = src.floor() as usize;
            lo.push(l);
            hi.push((l + 1).min(n_in - 1));
            frac.push(src - l as f64);
        }
        Self { lo, hi, frac }
    }
}

/// A bilinear resize from `(h, w)` to `(oh, ow)`; linear in the input, so
/// it carries an exact adjoint.
#[derive(Clone, Debug)]
pub struct Bilinear {
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    ys: AxisTaps,
    xs: AxisTaps,
}

impl Bilinear {
    pub fn new(h: usize, w: usize, oh: usize, ow: usize) -> Result<Self> {
        if h == 0 || w == 0 || oh == 0 || ow == 0 {
            return Err(Error::DegenerateSize { h: oh, w: ow });
        }
        Ok(Self {
            h,
            w,
            oh,
            ow,
            ys: AxisTaps::new(h, oh),
            xs: AxisTaps::new(w, ow),
        })
    }

    pub fn for_scale(h: usize, w: usize, r: f64) -> Result<Self> {
        let (oh, ow) = scaled_dims(h, w, r)?;
        Self::new(h, w, oh, ow)
    }

    pub fn output_dims(&self) -> (usize, usize) {
        (self.oh, self.ow)
    }

    pub fn apply<T: Real>(&self, input: &Raster<T>) -> Raster<T> {
        assert_eq!(input.dims(), (self.h, self.w), "bilinear input dims");
        if (self.h, self.w) == (self.oh, self.ow) {
            return input.clone();
        }
        let src = input.as_slice();
        let fx: Vec<T> = self.xs.frac.iter().map(|&f| T::lit(f)).collect();
        // Horizontal pass, then vertical; `a + f (b - a)` keeps constants exact.
        let mut tmp = Vec::with_capacity(self.h * self.ow);
        for y in 0..self.h {
            let row = &src[y * self.w..][..self.w];
            for x in 0..self.ow {
                let a = row[self.xs.lo[x]];
                let b = row[self.xs.hi[x]];
                tmp.push(a + fx[x] * (b - a));
            }
        }
        let mut out = Vec::with_capacity(self.oh * self.ow);
        for y in 0..self.oh {
            let f = T::lit(self.ys.frac[y]);
            let r0 = &tmp[self.ys.lo[y] * self.ow..][..self.ow];
            let r1 = &tmp[self.ys.hi[y] * self.ow..][..self.ow];
            out.extend(r0.iter().zip(r1).map(|(&a, &b)| a + f * (b - a)));
        }
        Raster::from_vec(self.oh, self.ow, out)
    }

    /// Transpose of [`Bilinear::apply`] applied to an output-space gradient.
    pub fn adjoint<T: Real>(&self, grad: &Raster<T>) -> Raster<T> {
        assert_eq!(grad.dims(), (self.oh, self.ow), "bilinear adjoint dims");
        if (self.h, self.w) == (self.oh, self.ow) {
            return grad.clone();
        }
        let g = grad.as_slice();
        let mut tmp = vec![T::zero(); self.h * self.ow];
        for y in 0..self.oh {
            let f = T::lit(self.ys.frac[y]);
            let (l, h) = (self.ys.lo[y], self.ys.hi[y]);
            for x in 0..self.ow {
                let v = g[y * self.ow + x];
                tmp[l * self.ow + x] = tmp[l * self.ow + x] + (T::one() - f) * v;
                tmp[h * self.ow + x] = tmp[h * self.ow + x] + f * v;
            }
        }
        let mut out = vec![T::zero(); self.h * self.w];
        for y in 0..self.h {
            for x in 0..self.ow {
                let v = tmp[y * self.ow + x];
                let f = T::lit(self.xs.frac[x]);
                let (l, h) = (self.xs.lo[x], self.xs.hi[x]);
                out[y * self.w + l] = out[y * self.w + l] + (T::one() - f) * v;
                out[y * self.w + h] = out[y * self.w + h] + f * v;
            }
        }
        Raster::from_vec(self.h, self.w, out)
    }
}

pub fn resize_bilinear<T: Real>(input: &Raster<T>, oh: usize, ow: usize) -> Result<Raster<T>> {
    let (h, w) = input.dims();
    Ok(Bilinear::new(h, w, oh, ow)?.apply(input))
}

/// Nearest-neighbour resize; used for binary masks so they stay binary.
pub fn resize_nearest<V: Copy>(input: &Raster<V>, oh: usize, ow: usize) -> Result<Raster<V>> {
    let (h, w) = input.dims();
    if h == 0 || w == 0 || oh == 0 || ow == 0 {
        return Err(Error::DegenerateSize { h: oh, w: ow });
    }
    let pick = |i: usize, n_in: usize, n_out: usize| {
        (((i as f64 + 0.5) * n_in as f64 / n_out as f64).floor() as usize).min(n_in - 1)
    };
    let xs: Vec<usize> = (0..ow).map(|x| pick(x, w, ow)).collect();
    Ok(Raster::from_fn(oh, ow, |y, x| input.get(pick(y, h, oh), xs[x])))
}

fn check_factor(r: f64) -> Result<()> {
    if (MIN_SCALE..=MAX_SCALE).contains(&r) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "scale factor {r} outside [{MIN_SCALE}, {MAX_SCALE}]"
        )))
    }
}

/// Scales an image by `r` with bilinear interpolation.
pub fn scale_image<T: Real>(input: &Raster<T>, r: f64) -> Result<Raster<T>> {
    check_factor(r)?;
    let (h, w) = input.dims();
    Ok(Bilinear::for_scale(h, w, r)?.apply(input))
}

/// Scales a binary mask by `r`: nearest neighbour, then re-binarized.
pub fn scale_mask(mask: &Raster<u8>, r: f64) -> Result<Raster<u8>> {
    check_factor(r)?;
    let (h, w) = mask.dims();
    let (oh, ow) = scaled_dims(h, w, r)?;
    Ok(resize_nearest(mask, oh, ow)?.map(|v| u8::from(v > 0)))
}

/// Scales a raster of either kind; masks come back as 0/1 values.
pub fn random_scale(input: &Raster<f32>, r: f64, kind: ScaleKind) -> Result<Raster<f32>> {
    match kind {
        ScaleKind::Image => scale_image(input, r),
        ScaleKind::Mask => {
            let m = input.map(|v| u8::from(v >= 0.5));
            Ok(scale_mask(&m, r)?.map(f32::from))
        }
    }
}
