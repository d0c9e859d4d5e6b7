//! Contrastive training: losses, batching, the main loop, and the optional
//! tagging pretrain stage.

pub mod batch;
pub mod loss;
pub mod pos;
pub mod trainer;

pub use batch::make_batches;
pub use loss::{batch_loss_nodes, batch_losses, cosine_sim, denoise, BatchEmbeddings, BatchNodes, LossNodes, LossReport};
pub use pos::{description_corpus, pos_pretrain, pos_step, tag_token, tag_tokens, PosTrainConfig, POS_TAG_NAMES};
pub use trainer::{train, write_epoch_log, EpochReport, TrainConfig, TrainOutcome};
