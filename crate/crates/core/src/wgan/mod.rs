//! Generator and critic models, the WGAN-GP objective, training and
//! checkpoints.

mod arch;
mod checkpoint;
mod loss;
mod model;
mod train;

pub use arch::{arch_hash, upsample_target, CriticArch, GeneratorArch, TraceRow};
pub use checkpoint::{Checkpoint, CheckpointManifest, LayoutEntry, CHECKPOINT_FORMAT, MANIFEST_FILE, PAYLOAD_FILE};
pub use loss::{critic_loss, generator_loss, gradient_penalty_with, interpolate, sample_epsilon, CriticLoss, Penalty};
pub use model::{Critic, Generator};
pub use train::{
    generate, train, write_metrics_csv, IterMetrics, TrainConfig, TrainObserver, TrainOutcome, METRICS_HEADER,
};
