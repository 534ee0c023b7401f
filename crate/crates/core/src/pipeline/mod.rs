//! Offline workflow: train experts, batch inference, augmentation, student
//! training, evaluation; plus the toy and ablation experiments.

mod config;
mod experiments;
mod run;

pub use config::{DataSource, Mode, PipelineConfig, KEYS};
pub use experiments::{
    run_ablation, run_toy_experiment, AblationReport, AblationRow, AblationRun, Metrics, ToyReport, ToySeed,
};
pub use run::{
    augment, component_seed, evaluate_to_reports, expert_seed, load_training, prepare_data, prepared_label_space,
    run_pipeline, step_augment, step_evaluate, step_infer, step_train_experts, step_train_student, train_experts, train_mode_student, write_allocation_report, write_file, write_json, EvalReport,
    Layout, OutputLock, RunManifest, RunOptions, Step, StepTiming, TOOL_VERSION,
};

/// Parses and checks a config file.
pub fn validate_config(path: &std::path::Path) -> crate::Result<PipelineConfig> {
    PipelineConfig::from_file(path)
}
