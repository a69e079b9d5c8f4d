//! Recurrent attention captioner with a part-of-speech head.

mod features;
mod model;
mod params;
mod train;

pub use features::ObjectEncoder;
pub use model::{Captioner, ModelConfig, StepContext, TOPK, TOP_LIST};
pub use params::{Block, CaptionerParams, Checkpoint, Dims};
pub use train::{caption_loss, train_mle, Forcing, TrainConfig, TrainItem, TrainReport};
