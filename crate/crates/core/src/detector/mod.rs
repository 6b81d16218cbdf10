//! Text detectors: the trainable white-box surrogate and the adapter for
//! external black-box detectors.

pub mod doubles;
mod external;
pub mod layers;
mod train;
pub mod unet;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use external::{register_external, ExternalDetector, ExternalOutput, ExternalSpec, OutputFormat};
pub use layers::Tensor;
pub use train::{train_surrogate, SurrogateConfig};
pub use unet::{HeadGrad, UNet, UNetGrad, MIN_SIDE, TAP_NAMES};

use crate::error::{Error, Result};
use crate::eval::{extract_boxes, PostProcess, ScoredBox};
use crate::raster::{Raster, Real};

/// Per-pixel text probability for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap {
    pub values: Raster<f32>,
    pub source: String,
}

/// Activations at named taps, in request order.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStack {
    pub taps: Vec<(String, Tensor<f32>)>,
}

impl FeatureStack {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

/// Output of a traced forward pass.
pub struct Pass<T, Tr> {
    pub prob: Raster<T>,
    /// One activation per entry of [`Differentiable::tap_names`].
    pub taps: Vec<Tensor<T>>,
    pub trace: Tr,
}

/// A detector whose probability map and taps can be differentiated with
/// respect to the input image.
pub trait Differentiable<T: Real>: Sync {
    type Trace: Send;

    fn tap_names(&self) -> Vec<String>;

    fn forward_traced(&self, image: &Raster<T>) -> Result<Pass<T, Self::Trace>>;

    /// Input gradient given the gradient of the probability map and of any
    /// subset of taps (aligned with [`Differentiable::tap_names`]).
    fn backward_input(
        &self,
        trace: &Self::Trace,
        grad_prob: &Raster<T>,
        tap_grads: &[Option<Tensor<T>>],
    ) -> Raster<T>;

    /// Resolves tap names to indices into [`Pass::taps`].
    fn tap_indices(&self, names: &[String]) -> Result<Vec<usize>> {
        let all = self.tap_names();
        names
            .iter()
            .map(|n| {
                all.iter()
                    .position(|a| a == n)
                    .ok_or_else(|| Error::UnknownTap(n.clone()))
            })
            .collect()
    }
}

/// Trained surrogate plus the configuration that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub config: SurrogateConfig,
    pub net: UNet<f32>,
    /// Clean recall on the held-out split measured right after training.
    pub clean_recall: Option<f64>,
}

const CHECKPOINT_FORMAT: &str = "udup-surrogate-1";

#[derive(Serialize, Deserialize)]
struct Checkpoint<S> {
    format: String,
    surrogate: S,
}

impl Surrogate {
    pub fn save(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            surrogate: self,
        };
        let bytes = serde_json::to_vec(&ck)?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint<Surrogate> = serde_json::from_slice(&bytes)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::malformed(path, format!("unknown checkpoint format {}", ck.format)));
        }
        Ok(ck.surrogate)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectorKind {
    SurrogateWhitebox,
    ExternalBlackbox,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Capabilities {
    pub gradients: bool,
    pub features: bool,
}

/// What an external adapter or the surrogate produced for one image.
pub enum Detection {
    Map(ProbabilityMap),
    Boxes(Vec<ScoredBox>),
}

#[derive(Debug)]
pub enum Detector {
    Surrogate(Surrogate),
    External(ExternalDetector),
}

impl Detector {
    pub fn kind(&self) -> DetectorKind {
        match self {
            Detector::Surrogate(_) => DetectorKind::SurrogateWhitebox,
            Detector::External(_) => DetectorKind::ExternalBlackbox,
        }
    }

    pub fn capabilities(&self) -> Capabilities {
        let white = matches!(self, Detector::Surrogate(_));
        Capabilities {
            gradients: white,
            features: white,
        }
    }

    pub fn id(&self) -> String {
        match self {
            Detector::Surrogate(s) => format!("surrogate(seed={})", s.config.seed),
            Detector::External(e) => format!("external({})", e.spec().command.join(" ")),
        }
    }

    /// The white-box network, if this handle has one.
    pub fn whitebox(&self) -> Result<&UNet<f32>> {
        match self {
            Detector::Surrogate(s) => Ok(&s.net),
            Detector::External(_) => Err(Error::MissingCapability("gradients")),
        }
    }

    /// Runs the detector and returns whatever it natively produces.
    pub fn run(&self, image: &Raster<f32>) -> Result<Detection> {
        match self {
            Detector::Surrogate(s) => Ok(Detection::Map(ProbabilityMap {
                values: s.net.predict(image)?,
                source: self.id(),
            })),
            Detector::External(e) => Ok(match e.invoke(image)? {
                ExternalOutput::Map(values) => Detection::Map(ProbabilityMap {
                    values,
                    source: self.id(),
                }),
                ExternalOutput::Boxes(b) => Detection::Boxes(b),
            }),
        }
    }

    /// Probability map for `image`. External adapters that answer with
    /// boxes have no map to give.
    pub fn forward(&self, image: &Raster<f32>) -> Result<ProbabilityMap> {
        match self.run(image)? {
            Detection::Map(m) => Ok(m),
            Detection::Boxes(_) => Err(Error::MissingCapability("probability map")),
        }
    }

    /// Detected boxes for `image`, post-processing maps with `post`.
    pub fn detect(&self, image: &Raster<f32>, post: &PostProcess) -> Result<Vec<ScoredBox>> {
        Ok(match self.run(image)? {
            Detection::Map(m) => extract_boxes(&m.values, post),
            Detection::Boxes(b) => b,
        })
    }

    pub fn features(&self, image: &Raster<f32>, taps: &[&str]) -> Result<FeatureStack> {
        let net = match self {
            Detector::Surrogate(s) => &s.net,
            Detector::External(_) => return Err(Error::MissingCapability("features")),
        };
        let names: Vec<String> = taps.iter().map(|s| s.to_string()).collect();
        let idx = net.tap_indices(&names)?;
        let (_, _, acts, _) = net.forward_full(image)?;
        Ok(FeatureStack {
            taps: names
                .into_iter()
                .zip(idx)
                .map(|(n, i)| (n, acts[i].clone()))
                .collect(),
        })
    }
}
