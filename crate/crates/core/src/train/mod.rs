//! Parameter initialization, the optimization loop, retrieval evaluation,
//! and hierarchy diagnostics.

mod config;
mod eval;
mod model;
mod run;
mod step;

pub use config::{ExperimentConfig, Objective, CURVATURE_RANGE, TAU_RANGE};
pub use eval::{
    embed_pairs, evaluate_retrieval, export_embeddings, hierarchy_report, hierarchy_stats,
    recall_at_1, EmbeddedPairs, ExportRow, HierarchyReport, HierarchyStats, Metric, MetricsRecord,
};
pub use model::{
    Example, ModelState, ATTN_K, ATTN_OUT, ATTN_Q, ATTN_V, BOX_B, BOX_W, INIT_STD, LOG_TAU, MLP_B1,
    MLP_B2, MLP_W1, MLP_W2, OBJECTS, POS_PROJ, RAW_CURVATURE, TOKENS,
};
pub use run::{is_held_out, run_experiment, Dataset, RunOutput, HOLDOUT_MODULUS};
pub use step::{
    evaluate_loss, learning_rate, loss_and_gradient, train_step, train_step_with_lr, ADAM_BETA1,
    ADAM_BETA2, ADAM_EPS, WARMUP_FRACTION,
};
