//! Channel-major tensors and the handful of layers the surrogate needs,
//! each with a hand-written backward pass.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::raster::Real;

/// `c x h x w` activations, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![T::zero(); c * h * w],
        }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), c * h * w);
        Self { c, h, w, data }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    pub fn plane(&self, c: usize) -> &[T] {
        &self.data[c * self.h * self.w..][..self.h * self.w]
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "tensor add shape");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn concat(&self, other: &Self) -> Self {
        assert_eq!((self.h, self.w), (other.h, other.w), "concat spatial dims");
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Self::from_vec(self.c + other.c, self.h, self.w, data)
    }

    /// Splits along channels at `c`: inverse of [`Tensor::concat`].
    pub fn split(self, c: usize) -> (Self, Self) {
        let (h, w) = (self.h, self.w);
        let rest = self.c - c;
        let mut data = self.data;
        let tail = data.split_off(c * h * w);
        (Self::from_vec(c, h, w, data), Self::from_vec(rest, h, w, tail))
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

/// Square convolution, stride 1, zero padding `k / 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv2d<T> {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    /// `cout x (cin * k * k)`, row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Debug, Default)]
pub struct ConvGrad<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv2d<T> {
    /// He-uniform initialization.
    pub fn init<R: Rng>(cin: usize, cout: usize, k: usize, rng: &mut R) -> Self {
        let fan_in = (cin * k * k) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let weight = (0..cout * cin * k * k)
            .map(|_| T::lit(rng.gen_range(-bound..bound)))
            .collect();
        Self {
            cin,
            cout,
            k,
            weight,
            bias: vec![T::zero(); cout],
        }
    }

    pub fn cast<U: Real>(&self) -> Conv2d<U> {
        Conv2d {
            cin: self.cin,
            cout: self.cout,
            k: self.k,
            weight: self.weight.iter().map(|v| U::lit(v.as_f64())).collect(),
            bias: self.bias.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    fn patch_len(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn im2col(&self, x: &Tensor<T>) -> Vec<T> {
        let (h, w) = (x.h, x.w);
        let k = self.k;
        let pad = (k / 2) as isize;
        let mut cols = vec![T::zero(); self.patch_len() * h * w];
        for c in 0..self.cin {
            let plane = x.plane(c);
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut cols[row * h * w..][..h * w];
                    let dy = ky as isize - pad;
                    let dx = kx as isize - pad;
                    let x_lo = (-dx).max(0) as usize;
                    let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                    if x_lo >= x_hi {
                        continue;
                    }
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let src = &plane[sy as usize * w..][..w];
                        let s0 = (x_lo as isize + dx) as usize;
                        dst[y * w + x_lo..y * w + x_hi]
                            .copy_from_slice(&src[s0..s0 + (x_hi - x_lo)]);
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[T], h: usize, w: usize) -> Tensor<T> {
        let k = self.k;
        let pad = (k / 2) as isize;
        let mut out = Tensor::zeros(self.cin, h, w);
        for c in 0..self.cin {
            let plane = &mut out.data[c * h * w..][..h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &cols[row * h * w..][..h * w];
                    let dy = ky as isize - pad;
                    let dx = kx as isize - pad;
                    let x_lo = (-dx).max(0) as usize;
                    let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                    if x_lo >= x_hi {
                        continue;
                    }
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let s0 = (x_lo as isize + dx) as usize;
                        let dst = &mut plane[sy as usize * w + s0..][..x_hi - x_lo];
                        for (d, &v) in dst.iter_mut().zip(&src[y * w + x_lo..y * w + x_hi]) {
                            *d = *d + v;
                        }
                    }
                }
            }
        }
        out
    }

    /// Returns the output and the column buffer needed by `backward`.
    pub fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, Vec<T>) {
        assert_eq!(x.c, self.cin, "conv input channels");
        let n = x.h * x.w;
        let cols = if self.k == 1 {
            x.data.clone()
        } else {
            self.im2col(x)
        };
        let mut out = Vec::with_capacity(self.cout * n);
        for &b in &self.bias {
            out.extend(std::iter::repeat(b).take(n));
        }
        let kk = self.patch_len();
        T::gemm(
            self.cout,
            kk,
            n,
            T::one(),
            &self.weight,
            kk as isize,
            1,
            &cols,
            n as isize,
            1,
            T::one(),
            &mut out,
            n as isize,
            1,
        );
        (Tensor::from_vec(self.cout, x.h, x.w, out), cols)
    }

    /// Propagates `grad` (w.r.t. the output) back to the input; accumulates
    /// parameter gradients into `param_grad` when given.
    pub fn backward(
        &self,
        grad: &Tensor<T>,
        cols: &[T],
        param_grad: Option<&mut ConvGrad<T>>,
    ) -> Tensor<T> {
        let n = grad.h * grad.w;
        let kk = self.patch_len();
        if let Some(pg) = param_grad {
            if pg.weight.is_empty() {
                pg.weight = vec![T::zero(); self.weight.len()];
                pg.bias = vec![T::zero(); self.bias.len()];
            }
            // dW += dY * cols^T
            T::gemm(
                self.cout,
                n,
                kk,
                T::one(),
                &grad.data,
                n as isize,
                1,
                cols,
                1,
                n as isize,
                T::one(),
                &mut pg.weight,
                kk as isize,
                1,
            );
            for (o, b) in pg.bias.iter_mut().enumerate() {
                *b = *b + grad.plane(o).iter().copied().sum::<T>();
            }
        }
        // dcols = W^T * dY
        let mut dcols = vec![T::zero(); kk * n];
        T::gemm(
            kk,
            self.cout,
            n,
            T::one(),
            &self.weight,
            1,
            kk as isize,
            &grad.data,
            n as isize,
            1,
            T::zero(),
            &mut dcols,
            n as isize,
            1,
        );
        if self.k == 1 {
            Tensor::from_vec(self.cin, grad.h, grad.w, dcols)
        } else {
            self.col2im(&dcols, grad.h, grad.w)
        }
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// SiLU, `x * sigmoid(x)`: smooth, so finite differences stay meaningful.
pub fn silu<T: Real>(pre: &Tensor<T>) -> Tensor<T> {
    let data = pre.data.iter().map(|&x| x * sigmoid(x)).collect();
    Tensor::from_vec(pre.c, pre.h, pre.w, data)
}

pub fn silu_backward<T: Real>(pre: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let data = pre
        .data
        .iter()
        .zip(&grad.data)
        .map(|(&x, &g)| {
            let s = sigmoid(x);
            g * s * (T::one() + x * (T::one() - s))
        })
        .collect();
    Tensor::from_vec(pre.c, pre.h, pre.w, data)
}

/// 2x2 average pooling; odd trailing rows/columns are dropped.
pub fn avg_pool2<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (oh, ow) = (x.h / 2, x.w / 2);
    let quarter = T::lit(0.25);
    let mut out = Tensor::zeros(x.c, oh, ow);
    for c in 0..x.c {
        let src = x.plane(c);
        let dst = &mut out.data[c * oh * ow..][..oh * ow];
        for y in 0..oh {
            let r0 = &src[2 * y * x.w..];
            let r1 = &src[(2 * y + 1) * x.w..];
            for xx in 0..ow {
                dst[y * ow + xx] =
                    (r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1]) * quarter;
            }
        }
    }
    out
}

pub fn avg_pool2_backward<T: Real>(grad: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let quarter = T::lit(0.25);
    let mut out = Tensor::zeros(grad.c, h, w);
    for c in 0..grad.c {
        let g = grad.plane(c);
        let dst = &mut out.data[c * h * w..][..h * w];
        for y in 0..grad.h {
            for xx in 0..grad.w {
                let v = g[y * grad.w + xx] * quarter;
                dst[2 * y * w + 2 * xx] = v;
                dst[2 * y * w + 2 * xx + 1] = v;
                dst[(2 * y + 1) * w + 2 * xx] = v;
                dst[(2 * y + 1) * w + 2 * xx + 1] = v;
            }
        }
    }
    out
}

fn nearest_index(i: usize, n_in: usize, n_out: usize) -> usize {
    ((i * n_in) / n_out).min(n_in - 1)
}

/// Nearest-neighbour upsampling to an explicit size.
pub fn upsample_to<T: Real>(x: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let xs: Vec<usize> = (0..w).map(|i| nearest_index(i, x.w, w)).collect();
    let mut out = Tensor::zeros(x.c, h, w);
    for c in 0..x.c {
        let src = x.plane(c);
        let dst = &mut out.data[c * h * w..][..h * w];
        for y in 0..h {
            let row = &src[nearest_index(y, x.h, h) * x.w..][..x.w];
            for (d, &sx) in dst[y * w..][..w].iter_mut().zip(&xs) {
                *d = row[sx];
            }
        }
    }
    out
}

pub fn upsample_to_backward<T: Real>(grad: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let xs: Vec<usize> = (0..grad.w).map(|i| nearest_index(i, w, grad.w)).collect();
    let mut out = Tensor::zeros(grad.c, h, w);
    for c in 0..grad.c {
        let src = grad.plane(c);
        let dst = &mut out.data[c * h * w..][..h * w];
        for y in 0..grad.h {
            let sy = nearest_index(y, h, grad.h);
            for (x, &sx) in xs.iter().enumerate() {
                dst[sy * w + sx] = dst[sy * w + sx] + src[y * grad.w + x];
            }
        }
    }
    out
}
