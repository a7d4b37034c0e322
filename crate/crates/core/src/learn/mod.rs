//! Fitting crowd parameters to observed velocity fields.

pub mod adam;
pub mod init;
pub mod job;
pub mod loss;
pub mod model;
pub mod train;

pub use adam::Adam;
pub use job::{fit_flows, FitConfig, FitOutcome};
pub use loss::{err_flow, err_vel, field_mse, loss_mse, LossReport};
pub use model::{ParamModel, Representation};
pub use train::{
    sequence_gradient, sequence_loss, train, window_gradient, window_loss, GradientMode, TrainConfig, TrainData,
    TrainOutcome,
};
