//! A small feedforward network with hand-written backpropagation, Adam,
//! early stopping, and a finite-difference gradient checker.

mod adam;
mod gradcheck;
mod matrix;
mod network;
mod train;

use rand_chacha::ChaCha8Rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{gradient_check, relative_error, BlockReport, GradCheckReport, DEFAULT_STEP, REL_ERROR_FLOOR};
pub use matrix::Matrix;
pub use network::{Activation, Dense, ForwardPass, Network, NetworkGrads, NetworkSpec};
pub use train::{train_loop, EarlyStopConfig, EpochRecord, MonitoredMetric, TrainLog, TrainOptions};

use crate::error::Result;

/// Named flat views of every trainable array, in a fixed order.
pub trait Parameters {
    fn param_blocks(&self) -> Vec<(String, &[f64])>;
    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.param_blocks().iter().map(|(_, b)| b.len()).sum()
    }
}

/// A model the training loop and gradient checker can drive.
pub trait Trainable: Parameters + Clone {
    type Example;

    /// Mean objective over `batch` (regularisation included) and its gradient,
    /// one vector per parameter block. `dropout` switches on train mode.
    fn loss_and_grad(&self, batch: &[&Self::Example], dropout: Option<&mut ChaCha8Rng>) -> Result<(f64, Vec<Vec<f64>>)>;

    fn dev_metric(&self, dev: &[Self::Example], metric: MonitoredMetric) -> Result<f64>;
}
