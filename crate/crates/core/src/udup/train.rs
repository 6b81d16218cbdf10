//! Momentum sign updates and the patch training loop.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Direction, TrainConfig};
use super::loss::{batch_objective, draw_scales};
use crate::corpus::{sample_minibatch, TextSample};
use crate::detector::Differentiable;
use crate::error::{Error, Result};
use crate::imageops::Patch;
use crate::raster::Raster;

/// One row of the loss history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based iteration index.
    pub t: usize,
    pub loss_total: f64,
    pub loss_p: f64,
    /// Absent when the gate was closed.
    pub loss_m: Option<f64>,
    /// MUI of the patch the gradient was taken at.
    pub mui: f64,
    pub a: f64,
    pub b: f64,
    pub gate_open: bool,
}

pub const LOSS_CSV_HEADER: &str = "t,loss_total,loss_p,loss_m,mui,a,b";

impl IterationRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.t,
            self.loss_total,
            self.loss_p,
            self.loss_m.map(|v| v.to_string()).unwrap_or_default(),
            self.mui,
            self.a,
            self.b
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub patch: Patch,
    pub momentum: Raster<f64>,
    /// Completed iterations.
    pub t: usize,
    pub history: Vec<IterationRecord>,
}

impl TrainState {
    /// Blank patch, zero momentum.
    pub fn new(config: &TrainConfig) -> Result<Self> {
        Ok(Self {
            patch: Patch::blank(config.side, config.epsilon as f32)?,
            momentum: Raster::filled(config.side, config.side, 0.0),
            t: 0,
            history: Vec::new(),
        })
    }
}

fn sign(v: f64) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Applies one momentum sign update with the given patch gradient:
/// `g <- mu g + grad / |grad|_1`, then `p <- clip(p -/+ alpha sign(g))`.
pub fn apply_update(state: &mut TrainState, grad: &Raster<f64>, config: &TrainConfig) -> Result<()> {
    let iteration = state.t + 1;
    if grad.dims() != state.momentum.dims() {
        return Err(Error::ShapeMismatch(format!(
            "gradient {:?} for patch {:?}",
            grad.dims(),
            state.momentum.dims()
        )));
    }
    if grad.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient { iteration });
    }
    let l1: f64 = grad.as_slice().iter().map(|v| v.abs()).sum();
    let inv = if l1 > 0.0 { 1.0 / l1 } else { 0.0 };
    for (m, &g) in state.momentum.as_mut_slice().iter_mut().zip(grad.as_slice()) {
        *m = config.mu * *m + g * inv;
    }
    let alpha = config.alpha as f32;
    let dir = match config.direction {
        Direction::Descent => -1.0f32,
        Direction::Ascent => 1.0,
    };
    let side = config.side;
    let stepped = Raster::from_vec(
        side,
        side,
        state
            .patch
            .values()
            .as_slice()
            .iter()
            .zip(state.momentum.as_slice())
            .map(|(&p, &m)| p + dir * alpha * sign(m))
            .collect(),
    );
    state.patch = Patch::clipped(&stepped, state.patch.epsilon())?;
    if state.patch.max_deviation() > f64::from(state.patch.epsilon()) {
        return Err(Error::InvalidArgument(format!(
            "patch left the box at iteration {iteration}"
        )));
    }
    state.t = iteration;
    Ok(())
}

/// One training iteration on `batch`: draws scale factors, evaluates the
/// objective and its gradient, and updates the state.
pub fn step<D: Differentiable<f32>>(
    state: &mut TrainState,
    batch: &[&TextSample],
    detector: &D,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<IterationRecord> {
    let t = state.t + 1;
    let (a, b) = config.schedule().range(t)?;
    let draws = draw_scales(rng, batch.len(), (a, b), config.pre_scale);
    let mui = state.patch.mui();
    let obj = batch_objective(detector, batch, state.patch.values(), mui, &draws, config, true)?;
    let grad = obj.grad.expect("gradient requested").cast::<f64>();
    apply_update(state, &grad, config)?;
    let record = IterationRecord {
        t,
        loss_total: obj.total,
        loss_p: obj.loss_p,
        loss_m: obj.loss_m,
        mui,
        a,
        b,
        gate_open: obj.gate_open,
    };
    state.history.push(record.clone());
    Ok(record)
}

/// Patch after a given iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub t: usize,
    pub patch: Patch,
}

impl Checkpoint {
    pub fn mui(&self) -> f64 {
        self.patch.mui()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub patch: Patch,
    pub history: Vec<IterationRecord>,
    /// The patch after every iteration, in order.
    pub checkpoints: Vec<Checkpoint>,
}

/// Where a training run persists its progress.
#[derive(Clone, Copy, Debug)]
pub struct Persist<'a> {
    pub dir: &'a Path,
    /// Write a patch file every this many iterations (and after the last).
    pub every: usize,
}

pub fn checkpoint_path(dir: &Path, t: usize) -> std::path::PathBuf {
    dir.join(format!("patch-{t:04}.udup"))
}

/// Runs the full training loop from a blank patch. With `persist`, the loss
/// history is appended to `loss.csv` and patch checkpoints are written as
/// training proceeds, so an aborted run keeps what it had.
pub fn train<D: Differentiable<f32>>(
    samples: &[TextSample],
    detector: &D,
    config: &TrainConfig,
    persist: Option<Persist<'_>>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no training samples".into()));
    }
    let mut csv = match persist {
        Some(p) => {
            fs::create_dir_all(p.dir).map_err(|e| Error::io(p.dir, e))?;
            let path = p.dir.join("loss.csv");
            let mut f = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
            writeln!(f, "{LOSS_CSV_HEADER}").map_err(|e| Error::io(&path, e))?;
            Some((f, path))
        }
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = TrainState::new(config)?;
    let mut checkpoints = Vec::with_capacity(config.iterations);
    for t in 1..=config.iterations {
        let batch = sample_minibatch(samples, config.batch_size, &mut rng)?;
        let record = step(&mut state, &batch, detector, config, &mut rng)?;
        log::debug!(
            "iteration {t}: loss {:.6} (p {:.6}, m {:?}) mui {:.4}",
            record.loss_total,
            record.loss_p,
            record.loss_m,
            record.mui
        );
        if let (Some((f, path)), Some(p)) = (csv.as_mut(), persist) {
            writeln!(f, "{}", record.csv_row()).map_err(|e| Error::io(path.as_path(), e))?;
            f.flush().map_err(|e| Error::io(path.as_path(), e))?;
            if t % p.every.max(1) == 0 || t == config.iterations {
                state.patch.save(&checkpoint_path(p.dir, t))?;
            }
        }
        checkpoints.push(Checkpoint {
            t,
            patch: state.patch.clone(),
        });
    }
    Ok(TrainOutcome {
        patch: state.patch,
        history: state.history,
        checkpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(side: usize, mu: f64) -> TrainConfig {
        TrainConfig {
            mu,
            ..TrainConfig::for_side(side)
        }
    }

    #[test]
    fn positive_gradient_darkens_by_alpha() {
        let c = config(3, 0.0);
        let mut s = TrainState::new(&c).unwrap();
        apply_update(&mut s, &Raster::filled(3, 3, 0.5), &c).unwrap();
        let want = 1.0f32 - c.alpha as f32;
        assert!(s.patch.values().as_slice().iter().all(|&v| v == want));
        assert_eq!(s.t, 1);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let c = config(4, 0.1);
        let mut s = TrainState::new(&c).unwrap();
        let before = s.patch.clone();
        apply_update(&mut s, &Raster::filled(4, 4, 0.0), &c).unwrap();
        assert_eq!(s.patch, before);
        assert!(s.momentum.as_slice().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn momentum_recurrence() {
        let c = config(2, 0.1);
        let mut s = TrainState::new(&c).unwrap();
        let g1 = Raster::from_vec(2, 2, vec![1.0, -3.0, 0.0, 4.0]);
        let g2 = Raster::from_vec(2, 2, vec![-2.0, 1.0, 1.0, 0.0]);
        apply_update(&mut s, &g1, &c).unwrap();
        let m1 = s.momentum.clone();
        for (m, g) in m1.as_slice().iter().zip(g1.as_slice()) {
            assert_eq!(*m, g / 8.0);
        }
        let l1: f64 = m1.as_slice().iter().map(|v| v.abs()).sum();
        assert!((l1 - 1.0).abs() < 1e-15);
        apply_update(&mut s, &g2, &c).unwrap();
        for i in 0..4 {
            let want = 0.1 * m1.as_slice()[i] + g2.as_slice()[i] / 4.0;
            assert_eq!(s.momentum.as_slice()[i], want);
        }
    }

    #[test]
    fn ascent_brightens_into_the_box() {
        let c = TrainConfig {
            direction: Direction::Ascent,
            ..config(2, 0.0)
        };
        let mut s = TrainState::new(&c).unwrap();
        apply_update(&mut s, &Raster::filled(2, 2, -1.0), &c).unwrap();
        // Ascent on a negative gradient darkens; the box keeps it feasible.
        for _ in 0..20 {
            apply_update(&mut s, &Raster::filled(2, 2, -1.0), &c).unwrap();
        }
        assert!(s.patch.max_deviation() <= c.epsilon as f32 as f64);
        assert!(s.patch.mui() > 0.1);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let c = config(2, 0.1);
        let mut s = TrainState::new(&c).unwrap();
        let g = Raster::from_vec(2, 2, vec![1.0, f64::NAN, 0.0, 0.0]);
        assert!(matches!(
            apply_update(&mut s, &g, &c),
            Err(Error::NonFiniteGradient { iteration: 1 })
        ));
    }

    #[test]
    fn csv_row_layout() {
        let r = IterationRecord {
            t: 3,
            loss_total: 1.5,
            loss_p: 1.5,
            loss_m: None,
            mui: 0.0,
            a: 1.0,
            b: 1.0,
            gate_open: false,
        };
        assert_eq!(r.csv_row(), "3,1.5,1.5,,0,1,1");
        assert_eq!(LOSS_CSV_HEADER.split(',').count(), r.csv_row().split(',').count());
    }
}
