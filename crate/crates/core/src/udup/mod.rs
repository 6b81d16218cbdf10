//! The defensive underpainting objective and its training loop.

mod config;
mod loss;
mod train;

pub use config::{lambda_for_side, Direction, TrainConfig, LAMBDA_TABLE};
pub use loss::{
    batch_objective, draw_scales, fbar_gradient, fbar_norm, gate_open, middle_layer_loss, mui,
    prediction_loss, sample_terms, total_loss, BatchObjective, SampleTerms, ScaleDraw, TermRequest,
};
pub use train::{
    apply_update, checkpoint_path, step, train, Checkpoint, IterationRecord, Persist, TrainOutcome,
    TrainState, LOSS_CSV_HEADER,
};
