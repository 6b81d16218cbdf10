//! The patch objective: prediction loss, middle-layer loss and their
//! gradients with respect to the patch.

use rand::Rng;
use rayon::prelude::*;

use super::config::TrainConfig;
use crate::corpus::TextSample;
use crate::detector::{Differentiable, Tensor};
use crate::error::{Error, Result};
use crate::imageops::{compose, compose_adjoint, scale_text, tile, tile_adjoint, Bilinear, Patch};
use crate::raster::{Raster, Real};

/// Mean of squares.
pub fn fbar_norm<T: Real>(x: &Raster<T>) -> Result<f64> {
    fbar_slice(x.as_slice())
}

fn fbar_slice<T: Real>(x: &[T]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("mean of squares of an empty raster".into()));
    }
    Ok(x.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>() / x.len() as f64)
}

/// Gradient of [`fbar_norm`]: `2x / n`.
pub fn fbar_gradient<T: Real>(x: &Raster<T>) -> Raster<T> {
    let k = T::lit(2.0 / x.len() as f64);
    x.map(|v| v * k)
}

/// Mean darkening `mean(1 - p)`.
pub fn mui(patch: &Patch) -> f64 {
    patch.mui()
}

/// Scale factors drawn for one sample in one iteration. `r2` is shared by
/// the fused image and the pure underpainting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleDraw {
    pub r1: f64,
    pub r2: f64,
}

/// Per-sample draws from `[a, b]`; `r1` is fixed at 1 when pre-scaling is
/// disabled.
pub fn draw_scales<R: Rng>(rng: &mut R, n: usize, range: (f64, f64), pre_scale: bool) -> Vec<ScaleDraw> {
    let (a, b) = range;
    (0..n)
        .map(|_| {
            let r1 = if pre_scale { rng.gen_range(a..=b) } else { 1.0 };
            let r2 = rng.gen_range(a..=b);
            ScaleDraw { r1, r2 }
        })
        .collect()
}

/// Loss terms of one sample and, if requested, their combined patch
/// gradient `d(L^p + weight * L^m)/dp`.
#[derive(Clone, Debug)]
pub struct SampleTerms<T> {
    pub loss_p: f64,
    pub loss_m: Option<f64>,
    pub grad: Option<Raster<T>>,
}

/// What to evaluate for one sample.
#[derive(Clone, Copy, Debug)]
pub struct TermRequest<'a> {
    /// Tap indices for the middle-layer loss; `None` skips it.
    pub taps: Option<&'a [usize]>,
    /// Weight of the middle-layer loss in the returned gradient.
    pub middle_weight: f64,
    pub gradient: bool,
}

/// Evaluates the prediction loss and optionally the middle-layer loss of a
/// single sample under fixed scale draws.
pub fn sample_terms<T: Real, D: Differentiable<T>>(
    detector: &D,
    sample: &TextSample,
    patch: &Raster<T>,
    draw: ScaleDraw,
    req: TermRequest<'_>,
) -> Result<SampleTerms<T>> {
    let image: Raster<T> = sample.image.cast();
    let scaled = scale_text(&image, &sample.mask, draw.r1)?;
    let (h, w) = scaled.image.dims();
    let under = tile(patch, h, w);
    let fused = compose(&scaled.image, &scaled.mask, &under);
    let resize = Bilinear::for_scale(h, w, draw.r2)?;
    let defended = resize.apply(&fused);
    let pass = detector.forward_traced(&defended)?;
    if pass.prob.dims() != defended.dims() {
        return Err(Error::ShapeMismatch(format!(
            "probability map {:?} for input {:?}",
            pass.prob.dims(),
            defended.dims()
        )));
    }
    let loss_p = fbar_norm(&pass.prob)?;

    let mut loss_m = None;
    let mut under_pass = None;
    let n_taps = pass.taps.len();
    let mut grads_defended: Vec<Option<Tensor<T>>> = vec![None; n_taps];
    let mut grads_under: Vec<Option<Tensor<T>>> = vec![None; n_taps];
    if let Some(taps) = req.taps {
        if taps.is_empty() {
            return Err(Error::InvalidArgument("middle-layer loss needs at least one tap".into()));
        }
        let pure = resize.apply(&under);
        let upass = detector.forward_traced(&pure)?;
        let k = taps.len() as f64;
        let mut total = 0.0;
        for &i in taps {
            let (a, b) = (&pass.taps[i], &upass.taps[i]);
            if a.shape() != b.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "tap {i}: {:?} vs {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
            let diff: Vec<T> = a.data.iter().zip(&b.data).map(|(&x, &y)| x - y).collect();
            total += fbar_slice(&diff)?;
            if req.gradient {
                let c = T::lit(2.0 * req.middle_weight / (k * diff.len() as f64));
                let ga: Vec<T> = diff.iter().map(|&d| d * c).collect();
                let gb: Vec<T> = ga.iter().map(|&g| -g).collect();
                accumulate(&mut grads_defended[i], Tensor::from_vec(a.c, a.h, a.w, ga));
                accumulate(&mut grads_under[i], Tensor::from_vec(a.c, a.h, a.w, gb));
            }
        }
        loss_m = Some(total / k);
        under_pass = Some(upass);
    }

    let grad = if req.gradient {
        let gx = detector.backward_input(&pass.trace, &fbar_gradient(&pass.prob), &grads_defended);
        let mut g_under = compose_adjoint(&resize.adjoint(&gx), &scaled.mask);
        if let Some(upass) = &under_pass {
            let zero = Raster::filled(upass.prob.height(), upass.prob.width(), T::zero());
            let gu = detector.backward_input(&upass.trace, &zero, &grads_under);
            for (a, &b) in g_under.as_mut_slice().iter_mut().zip(resize.adjoint(&gu).as_slice()) {
                *a = *a + b;
            }
        }
        Some(tile_adjoint(&g_under, patch.height()))
    } else {
        None
    };
    Ok(SampleTerms { loss_p, loss_m, grad })
}

fn accumulate<T: Real>(slot: &mut Option<Tensor<T>>, t: Tensor<T>) {
    match slot {
        Some(s) => s.add_assign(&t),
        None => *slot = Some(t),
    }
}

/// Prediction loss of one sample: mean squared probability of the scaled
/// defended image.
pub fn prediction_loss<T: Real, D: Differentiable<T>>(
    detector: &D,
    sample: &TextSample,
    patch: &Raster<T>,
    r1: f64,
    r2: f64,
) -> Result<f64> {
    let req = TermRequest {
        taps: None,
        middle_weight: 0.0,
        gradient: false,
    };
    Ok(sample_terms(detector, sample, patch, ScaleDraw { r1, r2 }, req)?.loss_p)
}

/// Middle-layer loss of one sample over the named taps.
pub fn middle_layer_loss<T: Real, D: Differentiable<T>>(
    detector: &D,
    sample: &TextSample,
    patch: &Raster<T>,
    r1: f64,
    r2: f64,
    taps: &[String],
) -> Result<f64> {
    let idx = detector.tap_indices(taps)?;
    let req = TermRequest {
        taps: Some(&idx),
        middle_weight: 0.0,
        gradient: false,
    };
    let terms = sample_terms(detector, sample, patch, ScaleDraw { r1, r2 }, req)?;
    Ok(terms.loss_m.expect("requested"))
}

/// Batch objective: the sum of prediction losses plus, when the gate is
/// open, `lambda` times the sum of middle-layer losses.
#[derive(Clone, Debug)]
pub struct BatchObjective<T> {
    pub total: f64,
    pub loss_p: f64,
    /// `None` when the middle-layer loss was not evaluated.
    pub loss_m: Option<f64>,
    pub gate_open: bool,
    pub grad: Option<Raster<T>>,
}

/// Whether the middle-layer loss takes part at this patch intensity.
pub fn gate_open(patch_mui: f64, config: &TrainConfig) -> bool {
    config.middle_loss && config.lambda > 0.0 && patch_mui >= config.mui_gate
}

/// Evaluates the batch objective under given draws. Per-sample terms are
/// computed in parallel and reduced in batch order.
pub fn batch_objective<T: Real, D: Differentiable<T>>(
    detector: &D,
    batch: &[&TextSample],
    patch: &Raster<T>,
    patch_mui: f64,
    draws: &[ScaleDraw],
    config: &TrainConfig,
    gradient: bool,
) -> Result<BatchObjective<T>> {
    assert_eq!(batch.len(), draws.len(), "one draw per sample");
    let open = gate_open(patch_mui, config);
    let tap_idx = if open {
        let names = if config.taps.is_empty() {
            detector.tap_names()
        } else {
            config.taps.clone()
        };
        Some(detector.tap_indices(&names)?)
    } else {
        None
    };
    let req = TermRequest {
        taps: tap_idx.as_deref(),
        middle_weight: config.lambda,
        gradient,
    };
    let terms: Vec<Result<SampleTerms<T>>> = batch
        .par_iter()
        .zip(draws.par_iter())
        .map(|(s, &d)| sample_terms(detector, s, patch, d, req))
        .collect();
    let mut loss_p = 0.0;
    let mut loss_m = if open { Some(0.0) } else { None };
    let mut grad: Option<Raster<T>> = None;
    for t in terms {
        let t = t?;
        loss_p += t.loss_p;
        if let (Some(acc), Some(m)) = (loss_m.as_mut(), t.loss_m) {
            *acc += m;
        }
        if let Some(g) = t.grad {
            match grad.as_mut() {
                Some(acc) => {
                    for (a, &b) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *a = *a + b;
                    }
                }
                None => grad = Some(g),
            }
        }
    }
    let total = loss_p + loss_m.map_or(0.0, |m| config.lambda * m);
    Ok(BatchObjective {
        total,
        loss_p,
        loss_m,
        gate_open: open,
        grad,
    })
}

/// `total_loss` for iteration `t`: draws per-sample factors from the
/// schedule range with `rng` and evaluates the batch objective.
pub fn total_loss<T: Real, D: Differentiable<T>, R: Rng>(
    detector: &D,
    batch: &[&TextSample],
    patch: &Patch,
    t: usize,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<BatchObjective<T>> {
    let range = config.schedule().range(t)?;
    let draws = draw_scales(rng, batch.len(), range, config.pre_scale);
    let values: Raster<T> = patch.values().cast();
    batch_objective(detector, batch, &values, patch.mui(), &draws, config, false)
}
