use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{DataSource, Mode, PipelineConfig};
use crate::corpus::{load_dataset, load_label_space, save_dataset, save_label_space, ClickDataset, LabelSpace};
use crate::distill::{
    allocate_pv, emit_augmented, load_augmented, merge_labels, sidecar_path, union_inference, AllocationReport,
    AugmentedDataset, InferenceDataset,
};
use crate::error::{Error, Result};
use crate::eval::{band_report, EvalResult};
use crate::experts::{
    load_expert, load_inference, save_expert, save_inference, train_expert, ExpertKind, ExpertLossMode, ExpertModel,
};
use crate::hashing::{derive_seed, sha256_file};
use crate::student::{load_model, save_model, train_student, StudentModel, TrainStats};

pub const TOOL_VERSION: &str = concat!("ddme ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Prepare,
    TrainExperts,
    InferExperts,
    Augment,
    TrainStudent,
    Evaluate,
}

impl Step {
    pub const ALL: [Step; 6] = [
        Step::Prepare,
        Step::TrainExperts,
        Step::InferExperts,
        Step::Augment,
        Step::TrainStudent,
        Step::Evaluate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Step::Prepare => "prepare",
            Step::TrainExperts => "train_experts",
            Step::InferExperts => "infer_experts",
            Step::Augment => "augment",
            Step::TrainStudent => "train_student",
            Step::Evaluate => "evaluate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.as_str() == s)
    }

    fn wrap<T>(self, r: Result<T>) -> Result<T> {
        r.map_err(|e| Error::Step {
            step: self.as_str().to_string(),
            source: Box::new(e),
        })
    }
}

/// Seed of a named pipeline component: root XOR hash(label).
pub fn component_seed(root: u64, label: &str) -> u64 {
    derive_seed(root, label)
}

pub fn expert_seed(root: u64, kind: ExpertKind) -> u64 {
    component_seed(root, &format!("expert/{}", kind.as_str()))
}

/// File locations under an output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn train(&self) -> PathBuf {
        self.root.join("data/train.tsv")
    }

    pub fn labels(&self) -> PathBuf {
        self.root.join("data/labels.txt")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("data/eval")
    }

    pub fn augmented(&self) -> PathBuf {
        self.root.join("data/augmented.tsv")
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn expert(&self, kind: ExpertKind) -> PathBuf {
        self.models().join(format!("expert_{}.bin", kind.as_str()))
    }

    pub fn student(&self) -> PathBuf {
        self.models().join("student.bin")
    }

    pub fn inference(&self, kind: ExpertKind) -> PathBuf {
        self.root.join(format!("inference/expert_{}.tsv", kind.as_str()))
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn lock(&self) -> PathBuf {
        self.root.join(".ddme.lock")
    }

    /// Evaluation datasets, sorted by name.
    pub fn eval_sets(&self) -> Result<Vec<(String, PathBuf)>> {
        let dir = self.eval_dir();
        let mut sets = Vec::new();
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.extension().is_some_and(|x| x == "tsv") {
                let name = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                sets.push((name, path));
            }
        }
        sets.sort();
        Ok(sets)
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    create_parent(path)?;
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    write_file(path, s)
}

/// Single-instance guard for an output directory; removed on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(out: &Path) -> Result<Self> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let path = Layout::new(out).lock();
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Resource(format!(
                "{} is in use by another run (delete {} if that run is gone)",
                out.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTiming {
    pub step: Step,
    /// `ran`, `skipped` (not part of this mode) or `reused` (before the
    /// resume step).
    pub status: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub mode: Mode,
    pub seed: u64,
    pub deterministic: bool,
    pub config: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub steps: Vec<StepTiming>,
    /// SHA-256 of every artifact, keyed by path relative to the output dir.
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&s).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport<'a> {
    pub dataset: &'a str,
    pub dataset_sha256: String,
    pub model_sha256: String,
    #[serde(flatten)]
    pub result: &'a EvalResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Earlier steps are not rerun; their outputs are read from disk.
    pub from: Step,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { from: Step::Prepare }
    }
}

/// Loads the prepared training set and label space.
pub fn load_training(layout: &Layout) -> Result<ClickDataset> {
    let ls = load_label_space(&layout.labels())?;
    load_dataset(&layout.train(), Some(&ls))
}

/// Step 0: materialize the training and evaluation datasets.
pub fn prepare_data(cfg: &PipelineConfig, layout: &Layout) -> Result<()> {
    match &cfg.data {
        DataSource::Synthetic => {
            let spec = cfg.synthetic_spec(component_seed(cfg.seed, "synthetic"));
            let c = crate::corpus::generate_synthetic(&spec)?;
            write_datasets(
                layout,
                &c.observed,
                &[
                    ("train_full", &c.full),
                    ("heldout_t1", &c.heldout_t1),
                    ("heldout_t30", &c.heldout_t30),
                ],
            )
        }
        DataSource::Files { train, labels, eval } => {
            let ls = labels.as_deref().map(load_label_space).transpose()?;
            let ds = load_dataset(train, ls.as_ref())?;
            let evals = eval
                .iter()
                .map(|p| {
                    let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                    Ok((name, load_dataset(p, Some(ds.label_space()))?))
                })
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<(&str, &ClickDataset)> = evals.iter().map(|(n, d)| (n.as_str(), d)).collect();
            write_datasets(layout, &ds, &refs)
        }
    }
}

fn write_datasets(layout: &Layout, train: &ClickDataset, evals: &[(&str, &ClickDataset)]) -> Result<()> {
    create_parent(&layout.train())?;
    save_label_space(train.label_space(), &layout.labels())?;
    save_dataset(train, &layout.train())?;
    let dir = layout.eval_dir();
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (name, ds) in evals {
        save_dataset(ds, &dir.join(format!("{name}.tsv")))?;
    }
    Ok(())
}

/// Trains one expert per kind with its derived seed.
pub fn train_experts(
    ds: &ClickDataset,
    cfg: &PipelineConfig,
    kinds: &[ExpertKind],
) -> Result<Vec<(ExpertKind, ExpertModel, TrainStats)>> {
    kinds
        .iter()
        .map(|&kind| {
            let mode = ExpertLossMode {
                kind,
                negative_scheme: cfg.expert_scheme,
            };
            let (model, stats) = train_expert(ds, mode, &cfg.expert_config(expert_seed(cfg.seed, kind)))?;
            Ok((kind, model, stats))
        })
        .collect()
}

/// Union, merge and allocate in one go.
pub fn augment(
    ds: &ClickDataset,
    experts: &[&ExpertModel],
    cfg: &PipelineConfig,
) -> Result<(AugmentedDataset, AllocationReport)> {
    let inf = union_inference(ds, experts, cfg.tau as f32, cfg.m_cap)?;
    allocate_pv(ds, &merge_labels(ds, &inf)?, &cfg.allocation)
}

/// The student of `mode`: historical data for the baseline, augmented
/// data otherwise.
pub fn train_mode_student(
    cfg: &PipelineConfig,
    historical: &ClickDataset,
    augmented: Option<&AugmentedDataset>,
) -> Result<(StudentModel, TrainStats)> {
    let scfg = cfg.student_config(component_seed(cfg.seed, "student"));
    match augmented {
        None => train_student(historical, &scfg),
        Some(aug) => train_student(aug, &scfg),
    }
}

/// Step 1: train and save the given experts.
pub fn step_train_experts(cfg: &PipelineConfig, layout: &Layout, kinds: &[ExpertKind]) -> Result<()> {
    let ds = load_training(layout)?;
    for (kind, model, stats) in train_experts(&ds, cfg, kinds)? {
        let path = layout.expert(kind);
        create_parent(&path)?;
        save_expert(&model, &path)?;
        write_json(
            &layout.reports().join(format!("expert_{}_train.json", kind.as_str())),
            &stats,
        )?;
    }
    Ok(())
}

/// Step 2: batch inference of saved experts over the training queries.
pub fn step_infer(cfg: &PipelineConfig, layout: &Layout, kinds: &[ExpertKind]) -> Result<()> {
    let ds = load_training(layout)?;
    let texts: Vec<&str> = ds.records().iter().map(|r| r.text.as_str()).collect();
    for &kind in kinds {
        let model = load_expert(&layout.expert(kind))?;
        if &model.label_space != ds.label_space() {
            return Err(Error::LabelSpaceMismatch(format!("expert {kind} and training data")));
        }
        let preds: Vec<_> = texts.iter().map(|t| model.predict(t, cfg.tau as f32, cfg.m_cap)).collect();
        let path = layout.inference(kind);
        create_parent(&path)?;
        save_inference(&path, &texts, &preds, ds.label_space())?;
    }
    Ok(())
}

/// Step 3: union the inference files, merge and allocate PV.
pub fn step_augment(cfg: &PipelineConfig, layout: &Layout, kinds: &[ExpertKind]) -> Result<AllocationReport> {
    let ds = load_training(layout)?;
    let files = kinds
        .iter()
        .map(|&k| load_inference(&layout.inference(k), ds.label_space()))
        .collect::<Result<Vec<_>>>()?;
    let inf = InferenceDataset::from_inference(&ds, &files)?;
    let (aug, report) = allocate_pv(&ds, &merge_labels(&ds, &inf)?, &cfg.allocation)?;
    emit_augmented(&aug, &layout.augmented())?;
    write_allocation_report(&report, &layout.reports())?;
    Ok(report)
}

pub fn write_allocation_report(report: &AllocationReport, reports: &Path) -> Result<()> {
    write_file(&reports.join("allocation.json"), report.to_json() + "\n")?;
    write_file(&reports.join("allocation.txt"), report.render_table())
}

/// Step 4: train the student on historical (baseline) or augmented data.
pub fn step_train_student(cfg: &PipelineConfig, layout: &Layout, mode: Mode) -> Result<()> {
    let ds = load_training(layout)?;
    let aug = match mode {
        Mode::Baseline => None,
        _ => Some(load_augmented(&layout.augmented(), ds.label_space())?),
    };
    let (model, stats) = train_mode_student(cfg, &ds, aug.as_ref())?;
    create_parent(&layout.student())?;
    save_model(&model, &layout.student())?;
    write_json(&layout.reports().join("student_train.json"), &stats)
}

/// Evaluates a saved student on a dataset file; writes
/// `eval_<name>.{json,txt}` into `reports`.
pub fn evaluate_to_reports(
    cfg: &PipelineConfig,
    model_path: &Path,
    model: &StudentModel,
    name: &str,
    data_path: &Path,
    reports: &Path,
) -> Result<EvalResult> {
    let ds = load_dataset(data_path, Some(model.label_space()))?;
    let result = band_report(model, &ds, &cfg.bands, &cfg.eval)?;
    let report = EvalReport {
        dataset: name,
        dataset_sha256: sha256_file(data_path)?,
        model_sha256: sha256_file(model_path)?,
        result: &result,
    };
    write_json(&reports.join(format!("eval_{name}.json")), &report)?;
    write_file(
        &reports.join(format!("eval_{name}.txt")),
        format!("dataset {name}\n{}", result.render_table()),
    )?;
    Ok(result)
}

/// Step 5: evaluate the saved student on every prepared evaluation set.
pub fn step_evaluate(cfg: &PipelineConfig, layout: &Layout) -> Result<Vec<(String, EvalResult)>> {
    let model = load_model(&layout.student())?;
    let mut sets = layout.eval_sets()?;
    if sets.is_empty() {
        // Nothing held out: report on the training data.
        sets.push(("train".to_string(), layout.train()));
    }
    sets.into_iter()
        .map(|(name, path)| {
            let r = evaluate_to_reports(cfg, &layout.student(), &model, &name, &path, &layout.reports())?;
            Ok((name, r))
        })
        .collect()
}

fn collect_artifacts(root: &Path) -> Result<BTreeMap<String, String>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(&path, root, out)?;
            } else {
                let rel = path.strip_prefix(root).unwrap_or(&path);
                let key = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                out.insert(key, sha256_file(&path)?);
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    for sub in ["data", "models", "inference", "reports"] {
        let dir = root.join(sub);
        if dir.is_dir() {
            walk(&dir, root, &mut out)?;
        }
    }
    Ok(out)
}

/// Removes outputs of `mode`'s steps from `from` onwards that a different
/// earlier run may have left behind.
fn clear_stale(layout: &Layout, from: Step) -> Result<()> {
    let mut stale: Vec<PathBuf> = Vec::new();
    if from <= Step::TrainExperts {
        stale.extend(ExpertKind::ALL.iter().map(|&k| layout.expert(k)));
    }
    if from <= Step::InferExperts {
        stale.extend(ExpertKind::ALL.iter().map(|&k| layout.inference(k)));
    }
    if from <= Step::Augment {
        stale.push(layout.augmented());
        stale.push(sidecar_path(&layout.augmented()));
    }
    if from <= Step::TrainStudent {
        stale.push(layout.student());
    }
    if from <= Step::Prepare {
        let reports = layout.reports();
        if reports.is_dir() {
            stale.push(reports);
        }
    }
    for p in stale {
        let r = if p.is_dir() {
            std::fs::remove_dir_all(&p)
        } else if p.exists() {
            std::fs::remove_file(&p)
        } else {
            Ok(())
        };
        r.map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

/// Runs the offline workflow into `out` and writes `manifest.json`.
pub fn run_pipeline(cfg: &PipelineConfig, out: &Path, opts: RunOptions) -> Result<RunManifest> {
    let mode = cfg
        .mode
        .ok_or_else(|| Error::Config(vec!["missing required key `mode` (or --mode)".to_string()]))?;
    cfg.check()?;
    let _lock = OutputLock::acquire(out)?;
    let layout = Layout::new(out);
    clear_stale(&layout, opts.from)?;

    let mut steps = Vec::new();
    for step in Step::ALL {
        let needed = match step {
            Step::TrainExperts | Step::InferExperts | Step::Augment => mode != Mode::Baseline,
            _ => true,
        };
        let status = if !needed {
            "skipped"
        } else if step < opts.from {
            "reused"
        } else {
            "ran"
        };
        let t = Instant::now();
        if status == "ran" {
            step.wrap(match step {
                Step::Prepare => prepare_data(cfg, &layout),
                Step::TrainExperts => step_train_experts(cfg, &layout, mode.expert_kinds()),
                Step::InferExperts => step_infer(cfg, &layout, mode.expert_kinds()),
                Step::Augment => step_augment(cfg, &layout, mode.expert_kinds()).map(drop),
                Step::TrainStudent => step_train_student(cfg, &layout, mode),
                Step::Evaluate => step_evaluate(cfg, &layout).map(drop),
            })?;
        }
        steps.push(StepTiming {
            step,
            status: status.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
    }

    let mut seeds = BTreeMap::new();
    seeds.insert("student".to_string(), component_seed(cfg.seed, "student"));
    if cfg.data == DataSource::Synthetic {
        seeds.insert("synthetic".to_string(), component_seed(cfg.seed, "synthetic"));
    }
    for &k in mode.expert_kinds() {
        seeds.insert(format!("expert/{}", k.as_str()), expert_seed(cfg.seed, k));
    }
    let manifest = RunManifest {
        tool: TOOL_VERSION.to_string(),
        mode,
        seed: cfg.seed,
        deterministic: cfg.deterministic,
        config: cfg
            .entries()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        seeds,
        steps,
        artifacts: collect_artifacts(out)?,
    };
    write_json(&layout.manifest(), &manifest)?;
    Ok(manifest)
}

/// Label space of a prepared output directory.
pub fn prepared_label_space(layout: &Layout) -> Result<LabelSpace> {
    load_label_space(&layout.labels())
}
