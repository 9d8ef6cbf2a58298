//! Pipeline commands for the `wlmsc` binary.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{
    cmd_build_vocab, cmd_correct, cmd_evaluate, cmd_finetune, cmd_pretrain, cmd_simulate, correct_records,
    evaluate_records, CorrectionRecord, TrainSummary,
};
pub use config::{RunConfig, Source, UsageError};
pub use report::{build_report, EvalReport};
