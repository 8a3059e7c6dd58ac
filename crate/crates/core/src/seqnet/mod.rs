//! Bidirectional LSTM over the family steps with attention or mean pooling and
//! softmax or angular-margin heads.

pub mod adam;
pub mod backward;
pub mod forward;
pub mod gradcheck;
pub mod loss;
pub mod params;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use backward::backward;
pub use forward::{extract_attention, forward, predict, ForwardTrace};
pub use gradcheck::{gradient_check, BlockCheck};
pub use loss::{loss, LossKind, Objective};
pub use params::{Checkpoint, HeadKind, ModelSpec, SeqNetParams};
pub use train::{train, train_from, EarlyStopping, EpochRecord, LabeledSeqs, TrainConfig, TrainOutcome};
