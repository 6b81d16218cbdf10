//! Closed-form detectors for exercising the objective without a network.

use super::{Differentiable, Pass, Tensor};
use crate::error::Result;
use crate::raster::{Raster, Real};

/// Outputs the same probability everywhere; its single tap is all zeros.
#[derive(Clone, Copy, Debug)]
pub struct ConstantDetector(pub f64);

impl<T: Real> Differentiable<T> for ConstantDetector {
    type Trace = ();

    fn tap_names(&self) -> Vec<String> {
        vec!["zero".into()]
    }

    fn forward_traced(&self, image: &Raster<T>) -> Result<Pass<T, ()>> {
        let (h, w) = image.dims();
        Ok(Pass {
            prob: Raster::filled(h, w, T::lit(self.0)),
            taps: vec![Tensor::zeros(1, h, w)],
            trace: (),
        })
    }

    fn backward_input(&self, _: &(), grad_prob: &Raster<T>, _: &[Option<Tensor<T>>]) -> Raster<T> {
        Raster::filled(grad_prob.height(), grad_prob.width(), T::zero())
    }
}

/// Returns its input as the probability map and as the single tap `identity`.
#[derive(Clone, Copy, Debug)]
pub struct IdentityDetector;

impl<T: Real> Differentiable<T> for IdentityDetector {
    type Trace = ();

    fn tap_names(&self) -> Vec<String> {
        vec!["identity".into()]
    }

    fn forward_traced(&self, image: &Raster<T>) -> Result<Pass<T, ()>> {
        let (h, w) = image.dims();
        Ok(Pass {
            prob: image.clone(),
            taps: vec![Tensor::from_vec(1, h, w, image.as_slice().to_vec())],
            trace: (),
        })
    }

    fn backward_input(&self, _: &(), grad_prob: &Raster<T>, tap_grads: &[Option<Tensor<T>>]) -> Raster<T> {
        let mut g = grad_prob.clone();
        if let Some(Some(t)) = tap_grads.first() {
            for (a, &b) in g.as_mut_slice().iter_mut().zip(&t.data) {
                *a = *a + b;
            }
        }
        g
    }
}
