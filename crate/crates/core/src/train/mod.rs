//! Joint training of every sub-network and the bias on one shared loss.

mod augment;
mod checkpoint;
mod kfold;
mod trainer;

pub use augment::{augment_orientation, Orientation};
pub use checkpoint::{checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, FORMAT_VERSION};
pub use kfold::kfold_split;
pub use trainer::{
    bce_loss, cross_validate, evaluate, fit, holdout_split, metrics_tsv, train_epoch, EpochRecord, EpochStats,
    EvalReport, FoldReport, Sample, TrainConfig,
};
