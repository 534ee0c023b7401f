use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddme_core::experts::ExpertKind;
use ddme_core::pipeline::{
    prepare_data, run_ablation, run_pipeline, run_toy_experiment, step_augment, step_evaluate, step_infer,
    step_train_experts, step_train_student, evaluate_to_reports, Layout, Mode, OutputLock, PipelineConfig, RunOptions,
    Step, DataSource,
};
use ddme_core::student::load_model;
use ddme_core::Error;

#[derive(Parser)]
#[command(name = "ddme", version, about = "Distribution-diverse multi-expert distillation pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Pipeline config file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// baseline, ddme_single or ddme_full.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Root seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Single-worker, bit-reproducible training.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory.
    #[arg(long, global = true, default_value = "ddme-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic corpus into <out>/data.
    Generate,
    /// Train experts on <out>/data/train.tsv.
    TrainExpert(KindArgs),
    /// Batch inference of trained experts over the training queries.
    InferExperts(KindArgs),
    /// Union expert predictions, merge with history and allocate PV.
    Augment(KindArgs),
    /// Train the student (historical data in baseline mode, augmented otherwise).
    TrainStudent,
    /// Evaluate a student; writes eval_<name>.{json,txt} into <out>/reports.
    Evaluate {
        /// Student model (default <out>/models/student.bin).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Evaluation datasets (default <out>/data/eval/*.tsv).
        #[arg(long)]
        data: Vec<PathBuf>,
    },
    /// Run the whole pipeline and write <out>/manifest.json.
    Run {
        /// Resume from this step, reusing earlier outputs.
        #[arg(long)]
        from_step: Option<String>,
    },
    /// Student vs expert on high- and low-overlap held-out sets.
    Toy,
    /// baseline vs ddme_single vs ddme_full over the configured seeds.
    Ablation,
    /// Check a config file and print it with defaults filled in.
    Validate,
}

#[derive(Args)]
struct KindArgs {
    /// Experts to use (default: those of the mode, or all three).
    #[arg(long, value_delimiter = ',')]
    kind: Vec<String>,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            e => Failure::Runtime(e),
        }
    }
}

fn load_config(c: &Common) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::from_file(p).map_err(|e| Failure::Usage(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    if let Some(m) = &c.mode {
        cfg.mode = Some(Mode::parse(m).ok_or_else(|| {
            Failure::Usage(format!("--mode must be baseline, ddme_single or ddme_full, got {m:?}"))
        })?);
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if c.deterministic {
        cfg.deterministic = true;
    }
    cfg.check()?;
    Ok(cfg)
}

fn kinds(cfg: &PipelineConfig, args: &KindArgs) -> Result<Vec<ExpertKind>, Failure> {
    if !args.kind.is_empty() {
        return args
            .kind
            .iter()
            .map(|k| ExpertKind::parse(k).ok_or_else(|| Failure::Usage(format!("unknown expert kind {k:?}"))))
            .collect();
    }
    let mode = cfg.mode.unwrap_or(Mode::DdmeFull);
    if mode == Mode::Baseline {
        return Err(Failure::Usage("baseline mode uses no experts".to_string()));
    }
    Ok(mode.expert_kinds().to_vec())
}

fn require_mode(cfg: &PipelineConfig) -> Result<Mode, Failure> {
    cfg.mode
        .ok_or_else(|| Failure::Usage("this command needs --mode or `mode` in the config".to_string()))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli.common)?;
    let out = cli.common.out.as_path();
    let layout = Layout::new(out);
    match cli.cmd {
        Cmd::Validate => {
            print!("{}", cfg.render());
        }
        Cmd::Run { from_step } => {
            let from = match from_step {
                None => Step::Prepare,
                Some(s) => Step::parse(&s).ok_or_else(|| Failure::Usage(format!("unknown step {s:?}")))?,
            };
            require_mode(&cfg)?;
            let m = run_pipeline(&cfg, out, RunOptions { from })?;
            for s in &m.steps {
                println!("{:<14} {:<8} {:>8.2}s", s.step.as_str(), s.status, s.seconds);
            }
            println!("manifest: {}", layout.manifest().display());
        }
        Cmd::Toy => {
            let _lock = OutputLock::acquire(out)?;
            let r = run_toy_experiment(&cfg)?;
            r.write(&layout.reports())?;
            print!("{}", r.render_table());
        }
        Cmd::Ablation => {
            let _lock = OutputLock::acquire(out)?;
            let r = run_ablation(&cfg)?;
            r.write(&layout.reports())?;
            print!("{}", r.render_table());
        }
        cmd => {
            let _lock = OutputLock::acquire(out)?;
            step_command(cmd, &cfg, &layout)?;
        }
    }
    Ok(())
}

fn step_command(cmd: Cmd, cfg: &PipelineConfig, layout: &Layout) -> Result<(), Failure> {
    match cmd {
        Cmd::Generate => {
            if cfg.data != DataSource::Synthetic {
                return Err(Failure::Usage("generate needs a config without data.* keys".to_string()));
            }
            prepare_data(cfg, layout)?;
            println!("corpus written to {}", layout.root.join("data").display());
        }
        Cmd::TrainExpert(k) => {
            let kinds = kinds(cfg, &k)?;
            step_train_experts(cfg, layout, &kinds)?;
            for k in kinds {
                println!("{}", layout.expert(k).display());
            }
        }
        Cmd::InferExperts(k) => {
            let kinds = kinds(cfg, &k)?;
            step_infer(cfg, layout, &kinds)?;
            for k in kinds {
                println!("{}", layout.inference(k).display());
            }
        }
        Cmd::Augment(k) => {
            let report = step_augment(cfg, layout, &kinds(cfg, &k)?)?;
            print!("{}", report.render_table());
        }
        Cmd::TrainStudent => {
            step_train_student(cfg, layout, require_mode(cfg)?)?;
            println!("{}", layout.student().display());
        }
        Cmd::Evaluate { model, data } => {
            let results = if model.is_none() && data.is_empty() {
                step_evaluate(cfg, layout)?
            } else {
                let model_path = model.unwrap_or_else(|| layout.student());
                let student = load_model(&model_path)?;
                let sets: Vec<(String, PathBuf)> = if data.is_empty() {
                    layout.eval_sets()?
                } else {
                    data.iter().map(|p| (stem(p), p.clone())).collect()
                };
                sets.iter()
                    .map(|(name, p)| {
                        evaluate_to_reports(cfg, &model_path, &student, name, p, &layout.reports())
                            .map(|r| (name.clone(), r))
                    })
                    .collect::<Result<Vec<_>, _>>()?
            };
            for (name, r) in results {
                println!("dataset {name}\n{}", r.render_table());
            }
        }
        Cmd::Validate | Cmd::Run { .. } | Cmd::Toy | Cmd::Ablation => unreachable!("handled by execute"),
    }
    Ok(())
}

fn stem(p: &Path) -> String {
    p.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
