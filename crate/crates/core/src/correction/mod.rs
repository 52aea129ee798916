//! Learned corrections of an approximate operator and their training.

mod adam;
mod corrected;
mod net;
mod tensor;
mod train;

pub use adam::Adam;
pub use corrected::{CorrectedOperator, Evaluation, Method};
pub use net::{Activation, CorrectionNet, NetArch, Tape};
pub use train::{
    forward_adjoint_loss, forward_only_loss, train_forward_adjoint, train_forward_only, train_recursive,
    EpochHook, EpochStats, IterateLoss, OperatorPair, TrainConfig, TrainOutcome, Trajectory,
};

#[cfg(test)]
mod tests;
