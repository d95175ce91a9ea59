//! Training, checkpoints, evaluation and analysis exports.

pub mod ablate;
pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod export;
pub mod metrics;
pub mod model;
pub mod train;

pub use ablate::{ablate, plan, AblationCell, AblationOutcome, Axis, SweepValues};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use config::{EvalConfig, RunConfig, Strategy, TrainConfig};
pub use eval::{
    diffusion_trace, evaluate, evaluate_encoded, fused_scores, out_domain_eval, report_from_scores, trace_with,
    EncodedCorpus, EvalReport, TraceRow, TraceTable,
};
pub use metrics::{auroc, fuse_scores, rank_of, Histogram, RetrievalMetrics};
pub use model::Model;
pub use train::{hybrid_loss, train, train_from, BatchNoise, EpochLoss, LossNodes, TrainOutcome};
