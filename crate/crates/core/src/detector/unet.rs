//! Four-level encoder-decoder with skip connections.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    avg_pool2, avg_pool2_backward, sigmoid, silu, silu_backward, upsample_to,
    upsample_to_backward, Conv2d, ConvGrad, Tensor,
};
use super::{Differentiable, Pass};
use crate::error::{Error, Result};
use crate::raster::{Raster, Real};

/// Feature taps: the two deepest encoder stages and the first two decoder stages.
pub const TAP_NAMES: [&str; 4] = ["enc3", "enc4", "dec3", "dec2"];

/// Four 2x poolings need at least 16 pixels per side.
pub const MIN_SIDE: usize = 16;

const LEVELS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage<T> {
    conv1: Conv2d<T>,
    conv2: Conv2d<T>,
}

#[derive(Debug)]
struct StageTrace<T> {
    cols1: Vec<T>,
    pre1: Tensor<T>,
    cols2: Vec<T>,
    pre2: Tensor<T>,
}

impl<T: Real> Stage<T> {
    fn init<R: Rng>(cin: usize, cout: usize, rng: &mut R) -> Self {
        Self {
            conv1: Conv2d::init(cin, cout, 3, rng),
            conv2: Conv2d::init(cout, cout, 3, rng),
        }
    }

    fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, StageTrace<T>) {
        let (pre1, cols1) = self.conv1.forward(x);
        let a1 = silu(&pre1);
        let (pre2, cols2) = self.conv2.forward(&a1);
        let out = silu(&pre2);
        (
            out,
            StageTrace {
                cols1,
                pre1,
                cols2,
                pre2,
            },
        )
    }

    fn backward(
        &self,
        grad: &Tensor<T>,
        trace: &StageTrace<T>,
        mut grads: Option<&mut [ConvGrad<T>]>,
    ) -> Tensor<T> {
        let g2 = silu_backward(&trace.pre2, grad);
        let g = self
            .conv2
            .backward(&g2, &trace.cols2, grads.as_deref_mut().map(|g| &mut g[1]));
        let g1 = silu_backward(&trace.pre1, &g);
        self.conv1
            .backward(&g1, &trace.cols1, grads.map(|g| &mut g[0]))
    }

    fn cast<U: Real>(&self) -> Stage<U> {
        Stage {
            conv1: self.conv1.cast(),
            conv2: self.conv2.cast(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UNet<T> {
    pub widths: [usize; LEVELS],
    enc: Vec<Stage<T>>,
    /// Decoder stages from deepest (`dec3`) to full resolution (`dec0`).
    dec: Vec<Stage<T>>,
    head: Conv2d<T>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug)]
pub struct UNetTrace<T> {
    input_dims: (usize, usize),
    enc_dims: Vec<(usize, usize)>,
    enc: Vec<StageTrace<T>>,
    dec: Vec<StageTrace<T>>,
    head_cols: Vec<T>,
    prob: Vec<T>,
}

/// Parameter gradients, one entry per convolution in [`UNet::convs`] order.
#[derive(Clone, Debug, Default)]
pub struct UNetGrad<T> {
    pub convs: Vec<ConvGrad<T>>,
}

impl<T: Real> UNetGrad<T> {
    pub fn add_assign(&mut self, other: &Self) {
        if self.convs.is_empty() {
            self.convs = other.convs.clone();
            return;
        }
        for (a, b) in self.convs.iter_mut().zip(&other.convs) {
            for (x, &y) in a.weight.iter_mut().zip(&b.weight) {
                *x = *x + y;
            }
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                *x = *x + y;
            }
        }
    }
}

/// Gradient arriving at the network head.
pub enum HeadGrad<'a, T> {
    /// Gradient with respect to the probability map.
    Prob(&'a Raster<T>),
    /// Gradient with respect to the pre-sigmoid logits.
    Logit(&'a Raster<T>),
}

impl<T: Real> UNet<T> {
    pub fn new<R: Rng>(widths: [usize; LEVELS], rng: &mut R) -> Self {
        let mut enc = Vec::with_capacity(LEVELS);
        let mut cin = 1;
        for &w in &widths {
            enc.push(Stage::init(cin, w, rng));
            cin = w;
        }
        let mut dec = Vec::with_capacity(LEVELS - 1);
        let mut below = widths[LEVELS - 1];
        for level in (0..LEVELS - 1).rev() {
            dec.push(Stage::init(below + widths[level], widths[level], rng));
            below = widths[level];
        }
        let head = Conv2d::init(widths[0], 1, 1, rng);
        Self {
            widths,
            enc,
            dec,
            head,
        }
    }

    pub fn cast<U: Real>(&self) -> UNet<U> {
        UNet {
            widths: self.widths,
            enc: self.enc.iter().map(Stage::cast).collect(),
            dec: self.dec.iter().map(Stage::cast).collect(),
            head: self.head.cast(),
        }
    }

    pub fn convs(&self) -> Vec<&Conv2d<T>> {
        let mut v = Vec::with_capacity(2 * (2 * LEVELS - 1) + 1);
        for s in self.enc.iter().chain(&self.dec) {
            v.push(&s.conv1);
            v.push(&s.conv2);
        }
        v.push(&self.head);
        v
    }

    pub fn convs_mut(&mut self) -> Vec<&mut Conv2d<T>> {
        let mut v = Vec::with_capacity(2 * (2 * LEVELS - 1) + 1);
        for s in self.enc.iter_mut().chain(self.dec.iter_mut()) {
            v.push(&mut s.conv1);
            v.push(&mut s.conv2);
        }
        v.push(&mut self.head);
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.convs()
            .iter()
            .map(|c| c.weight.len() + c.bias.len())
            .sum()
    }

    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        if h < MIN_SIDE || w < MIN_SIDE {
            return Err(Error::BelowFootprint { h, w, min: MIN_SIDE });
        }
        Ok(())
    }

    /// Forward pass returning logits, all tap activations and the trace.
    pub fn forward_full(&self, image: &Raster<T>) -> Result<(Raster<T>, Raster<T>, Vec<Tensor<T>>, UNetTrace<T>)> {
        let (h, w) = image.dims();
        self.check_input(h, w)?;
        let mut x = Tensor::from_vec(1, h, w, image.as_slice().to_vec());
        let mut enc_out = Vec::with_capacity(LEVELS);
        let mut enc_tr = Vec::with_capacity(LEVELS);
        let mut enc_dims = Vec::with_capacity(LEVELS);
        for (level, stage) in self.enc.iter().enumerate() {
            if level > 0 {
                x = avg_pool2(&x);
            }
            enc_dims.push((x.h, x.w));
            let (out, tr) = stage.forward(&x);
            enc_tr.push(tr);
            x = out.clone();
            enc_out.push(out);
        }
        let mut dec_tr = Vec::with_capacity(LEVELS - 1);
        let mut dec_out = Vec::with_capacity(LEVELS - 1);
        for (i, stage) in self.dec.iter().enumerate() {
            let level = LEVELS - 2 - i;
            let skip = &enc_out[level];
            let up = upsample_to(&x, skip.h, skip.w);
            let (out, tr) = stage.forward(&up.concat(skip));
            dec_tr.push(tr);
            x = out.clone();
            dec_out.push(out);
        }
        let (logits, head_cols) = self.head.forward(&x);
        let logits = Raster::from_vec(h, w, logits.data);
        let prob: Vec<T> = logits.as_slice().iter().map(|&z| sigmoid(z)).collect();
        let taps = vec![
            enc_out[3].clone(),
            enc_out[4].clone(),
            dec_out[0].clone(),
            dec_out[1].clone(),
        ];
        let trace = UNetTrace {
            input_dims: (h, w),
            enc_dims,
            enc: enc_tr,
            dec: dec_tr,
            head_cols,
            prob: prob.clone(),
        };
        Ok((Raster::from_vec(h, w, prob), logits, taps, trace))
    }

    pub fn predict(&self, image: &Raster<T>) -> Result<Raster<T>> {
        Ok(self.forward_full(image)?.0)
    }

    /// Backward pass. `tap_grads` lines up with [`TAP_NAMES`]; missing
    /// entries contribute nothing. Parameter gradients are accumulated into
    /// `param_grads` when given.
    pub fn backward(
        &self,
        trace: &UNetTrace<T>,
        head: HeadGrad<'_, T>,
        tap_grads: &[Option<Tensor<T>>],
        mut param_grads: Option<&mut UNetGrad<T>>,
    ) -> Raster<T> {
        let (h, w) = trace.input_dims;
        let n_convs = self.convs().len();
        if let Some(pg) = param_grads.as_deref_mut() {
            if pg.convs.len() != n_convs {
                pg.convs = vec![ConvGrad::default(); n_convs];
            }
        }
        let tap = |i: usize| tap_grads.get(i).and_then(|t| t.as_ref());

        let dlogit: Vec<T> = match head {
            HeadGrad::Logit(g) => g.as_slice().to_vec(),
            HeadGrad::Prob(g) => g
                .as_slice()
                .iter()
                .zip(&trace.prob)
                .map(|(&g, &p)| g * p * (T::one() - p))
                .collect(),
        };
        let dlogit = Tensor::from_vec(1, h, w, dlogit);
        let mut g = self.head.backward(
            &dlogit,
            &trace.head_cols,
            param_grads.as_deref_mut().map(|pg| &mut pg.convs[n_convs - 1]),
        );

        // Decoder, from full resolution back to the deepest stage.
        let mut skip_grads: Vec<Option<Tensor<T>>> = (0..LEVELS).map(|_| None).collect();
        for i in (0..self.dec.len()).rev() {
            let level = LEVELS - 2 - i;
            if i == 1 {
                if let Some(t) = tap(3) {
                    g.add_assign(t);
                }
            }
            if i == 0 {
                if let Some(t) = tap(2) {
                    g.add_assign(t);
                }
            }
            let base = 2 * LEVELS + 2 * i;
            let slot = param_grads
                .as_deref_mut()
                .map(|pg| &mut pg.convs[base..base + 2]);
            let gin = self.dec[i].backward(&g, &trace.dec[i], slot);
            let below_c = if i == 0 {
                self.widths[LEVELS - 1]
            } else {
                self.widths[level + 1]
            };
            let (gup, gskip) = gin.split(below_c);
            skip_grads[level] = Some(gskip);
            let (bh, bw) = trace.enc_dims[level + 1];
            g = upsample_to_backward(&gup, bh, bw);
        }

        // Encoder, deepest first; `g` now holds the gradient of enc4's output.
        for level in (0..LEVELS).rev() {
            if let Some(s) = skip_grads[level].take() {
                g.add_assign(&s);
            }
            if level == 4 {
                if let Some(t) = tap(1) {
                    g.add_assign(t);
                }
            }
            if level == 3 {
                if let Some(t) = tap(0) {
                    g.add_assign(t);
                }
            }
            let slot = param_grads
                .as_deref_mut()
                .map(|pg| &mut pg.convs[2 * level..2 * level + 2]);
            let gin = self.enc[level].backward(&g, &trace.enc[level], slot);
            g = if level > 0 {
                let (ph, pw) = trace.enc_dims[level - 1];
                avg_pool2_backward(&gin, ph, pw)
            } else {
                gin
            };
        }
        Raster::from_vec(h, w, g.data)
    }
}

impl<T: Real> Differentiable<T> for UNet<T> {
    type Trace = UNetTrace<T>;

    fn tap_names(&self) -> Vec<String> {
        TAP_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn forward_traced(&self, image: &Raster<T>) -> Result<Pass<T, Self::Trace>> {
        let (prob, _, taps, trace) = self.forward_full(image)?;
        Ok(Pass { prob, taps, trace })
    }

    fn backward_input(
        &self,
        trace: &Self::Trace,
        grad_prob: &Raster<T>,
        tap_grads: &[Option<Tensor<T>>],
    ) -> Raster<T> {
        self.backward(trace, HeadGrad::Prob(grad_prob), tap_grads, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> UNet<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        UNet::new([3, 4, 4, 5, 5], &mut rng)
    }

    fn image(h: usize, w: usize) -> Raster<f64> {
        Raster::from_fn(h, w, |y, x| 0.5 + 0.4 * ((y * 7 + x * 3) % 11) as f64 / 11.0)
    }

    #[test]
    fn fully_convolutional_shapes() {
        let n = net();
        for (h, w) in [(16, 16), (17, 23), (33, 20), (40, 41)] {
            let (p, _, taps, _) = n.forward_full(&image(h, w)).unwrap();
            assert_eq!(p.dims(), (h, w));
            assert_eq!(taps.len(), 4);
            assert!(p.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        assert!(matches!(
            n.forward_full(&image(15, 40)),
            Err(Error::BelowFootprint { .. })
        ));
    }

    /// Scalar objective touching the output and every tap.
    fn objective(n: &UNet<f64>, x: &Raster<f64>, wts: &[f64; 5]) -> f64 {
        let (p, _, taps, _) = n.forward_full(x).unwrap();
        let mut v = wts[0] * p.as_slice().iter().map(|q| q * q).sum::<f64>();
        for (k, t) in taps.iter().enumerate() {
            v += wts[k + 1] * t.data.iter().map(|q| q * q).sum::<f64>();
        }
        v
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let n = net();
        let x = image(18, 21);
        let wts = [1.0, 0.3, 0.2, 0.1, 0.05];
        let (p, _, taps, trace) = n.forward_full(&x).unwrap();
        let gp = p.map(|q| 2.0 * wts[0] * q);
        let tg: Vec<Option<Tensor<f64>>> = taps
            .iter()
            .enumerate()
            .map(|(k, t)| {
                Some(Tensor::from_vec(
                    t.c,
                    t.h,
                    t.w,
                    t.data.iter().map(|q| 2.0 * wts[k + 1] * q).collect(),
                ))
            })
            .collect();
        let g = n.backward(&trace, HeadGrad::Prob(&gp), &tg, None);
        for &(y, xx) in &[(0, 0), (5, 7), (9, 20), (17, 3)] {
            let h = 1e-5;
            let mut a = x.clone();
            a.set(y, xx, a.get(y, xx) + h);
            let mut b = x.clone();
            b.set(y, xx, b.get(y, xx) - h);
            let fd = (objective(&n, &a, &wts) - objective(&n, &b, &wts)) / (2.0 * h);
            let an = g.get(y, xx);
            assert!((fd - an).abs() <= 1e-6 * (1.0 + fd.abs()), "({y},{xx}) fd={fd} an={an}");
        }
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let n = net();
        let x = image(16, 19);
        let (p, _, _, trace) = n.forward_full(&x).unwrap();
        let gp = p.map(|q| 2.0 * q);
        let mut pg = UNetGrad::default();
        n.backward(&trace, HeadGrad::Prob(&gp), &[], Some(&mut pg));
        let loss = |m: &UNet<f64>| m.predict(&x).unwrap().as_slice().iter().map(|q| q * q).sum::<f64>();
        let n_convs = n.convs().len();
        for ci in [0, 3, 9, n_convs - 3, n_convs - 1] {
            for wi in [0usize, 1] {
                let h = 1e-6;
                let mut a = n.clone();
                a.convs_mut()[ci].weight[wi] += h;
                let mut b = n.clone();
                b.convs_mut()[ci].weight[wi] -= h;
                let fd = (loss(&a) - loss(&b)) / (2.0 * h);
                let an = pg.convs[ci].weight[wi];
                assert!((fd - an).abs() <= 1e-5 * (1.0 + fd.abs()), "conv {ci} w{wi}: {fd} vs {an}");
            }
            let h = 1e-6;
            let mut a = n.clone();
            a.convs_mut()[ci].bias[0] += h;
            let mut b = n.clone();
            b.convs_mut()[ci].bias[0] -= h;
            let fd = (loss(&a) - loss(&b)) / (2.0 * h);
            assert!((fd - pg.convs[ci].bias[0]).abs() <= 1e-5 * (1.0 + fd.abs()));
        }
    }
}
