//! Three-layer LSTM regression of local counts: two recurrent layers over
//! each spatial sequence and a one-unit readout, trained with Adam on the
//! mean squared local-count error.

mod checkpoint;
mod joint;
mod lstm;
mod predict;
mod train;

pub use checkpoint::{Checkpoint, DSRM_MAGIC, DSRM_VERSION};
pub use joint::{joint_backward, train_joint, train_joint_monitored, ImageExample, JointGradients, JointModel};
pub use lstm::{
    backward, loss, lstm_forward, predict_sequences, BatchGradients, ForwardTrace, Gate, LstmLayerParams, Readout,
    RegressorParams, Sample, DEFAULT_HIDDEN,
};
pub use predict::{predict_features, predict_image, Extractor, Prediction};
pub use train::{finetune, train, train_monitored, EpochRecord, ParamGroup, TrainConfig, TrainHistory};
