//! Memorize-vs-generalize toy study and the three-way ablation, both on
//! seeded synthetic corpora.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Mode, PipelineConfig};
use super::run::{augment, component_seed, train_experts, train_mode_student, write_file, write_json};
use crate::corpus::{generate_synthetic, Band};
use crate::error::Result;
use crate::eval::{band_report, expert_band_report, EvalResult};
use crate::experts::ExpertKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub p_at_5: f64,
    pub r_at_5: f64,
}

impl From<&EvalResult> for Metrics {
    fn from(r: &EvalResult) -> Self {
        Self {
            p_at_5: r.p_at_5,
            r_at_5: r.r_at_5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySeed {
    pub seed: u64,
    pub student_t1: Metrics,
    pub student_t30: Metrics,
    pub expert_t1: Metrics,
    pub expert_t30: Metrics,
}

impl ToySeed {
    pub fn student_gap(&self) -> f64 {
        self.student_t1.r_at_5 - self.student_t30.r_at_5
    }

    pub fn expert_gap(&self) -> f64 {
        self.expert_t1.r_at_5 - self.expert_t30.r_at_5
    }

    /// The memorizer loses more recall off-distribution than the expert.
    pub fn direction_holds(&self) -> bool {
        self.student_gap() > self.expert_gap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyReport {
    pub seeds: Vec<ToySeed>,
    pub seconds: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

impl ToyReport {
    pub fn seeds_with_direction(&self) -> usize {
        self.seeds.iter().filter(|s| s.direction_holds()).count()
    }

    /// Seed means laid out as (model × split).
    pub fn render_table(&self) -> String {
        let m = |f: fn(&ToySeed) -> Metrics| Metrics {
            p_at_5: mean(self.seeds.iter().map(|s| f(s).p_at_5)),
            r_at_5: mean(self.seeds.iter().map(|s| f(s).r_at_5)),
        };
        let mut out = String::new();
        let _ = writeln!(out, "{:<16} {:>8} {:>8} {:>8} {:>8}", "model", "T1 P@5", "T1 R@5", "T30 P@5", "T30 R@5");
        for (name, t1, t30) in [
            ("student", m(|s| s.student_t1), m(|s| s.student_t30)),
            ("expert_uniform", m(|s| s.expert_t1), m(|s| s.expert_t30)),
        ] {
            let _ = writeln!(
                out,
                "{:<16} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                name, t1.p_at_5, t1.r_at_5, t30.p_at_5, t30.r_at_5
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<8} {:>12} {:>12} {:>10}", "seed", "student gap", "expert gap", "direction");
        for s in &self.seeds {
            let _ = writeln!(
                out,
                "{:<8} {:>12.4} {:>12.4} {:>10}",
                s.seed,
                s.student_gap(),
                s.expert_gap(),
                if s.direction_holds() { "holds" } else { "fails" }
            );
        }
        let _ = writeln!(out, "direction holds in {} of {} seeds", self.seeds_with_direction(), self.seeds.len());
        out
    }

    pub fn write(&self, reports: &Path) -> Result<()> {
        write_json(&reports.join("toy.json"), self)?;
        write_file(&reports.join("toy.txt"), self.render_table())
    }
}

/// Student vs uniform expert, both trained on the observed split and
/// scored against ground truth on the T1 and T30 held-out sets.
pub fn run_toy_experiment(cfg: &PipelineConfig) -> Result<ToyReport> {
    cfg.check()?;
    let start = Instant::now();
    let mut seeds = Vec::new();
    for &root in &cfg.seeds {
        let cfg = PipelineConfig {
            seed: root,
            ..cfg.clone()
        };
        let corpus = generate_synthetic(&cfg.synthetic_spec(component_seed(root, "synthetic")))?;
        let (student, _) = train_mode_student(&cfg, &corpus.observed, None)?;
        let (_, expert, _) = train_experts(&corpus.observed, &cfg, &[ExpertKind::Uniform])?.remove(0);
        let s = |ds| band_report(&student, ds, &cfg.bands, &cfg.eval);
        let e = |ds| expert_band_report(&expert, ds, &cfg.bands, &cfg.eval);
        seeds.push(ToySeed {
            seed: root,
            student_t1: (&s(&corpus.heldout_t1)?).into(),
            student_t30: (&s(&corpus.heldout_t30)?).into(),
            expert_t1: (&e(&corpus.heldout_t1)?).into(),
            expert_t30: (&e(&corpus.heldout_t30)?).into(),
        });
    }
    Ok(ToyReport {
        seeds,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub seed: u64,
    pub mode: Mode,
    pub expert_new_pairs: usize,
    /// Held-out T1 split against ground truth.
    pub heldout_t1: EvalResult,
    /// Training queries against ground truth.
    pub train_full: EvalResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: Mode,
    /// `overall` or a band name.
    pub slice: String,
    pub p_at_5: f64,
    pub r_at_5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub runs: Vec<AblationRun>,
    /// Seed means on the held-out T1 split: 3 modes × (overall + 3 bands).
    pub rows: Vec<AblationRow>,
    pub seconds: f64,
}

impl AblationReport {
    fn from_runs(runs: Vec<AblationRun>, seconds: f64) -> Self {
        let mut rows = Vec::new();
        for mode in Mode::ALL {
            let of_mode: Vec<&EvalResult> = runs.iter().filter(|r| r.mode == mode).map(|r| &r.heldout_t1).collect();
            rows.push(AblationRow {
                mode,
                slice: "overall".to_string(),
                p_at_5: mean(of_mode.iter().map(|r| r.p_at_5)),
                r_at_5: mean(of_mode.iter().map(|r| r.r_at_5)),
            });
            for band in Band::ALL {
                let b: Vec<_> = of_mode.iter().filter_map(|r| r.band(band)).collect();
                rows.push(AblationRow {
                    mode,
                    slice: band.as_str().to_string(),
                    p_at_5: mean(b.iter().map(|m| m.p_at_5)),
                    r_at_5: mean(b.iter().map(|m| m.r_at_5)),
                });
            }
        }
        Self { runs, rows, seconds }
    }

    pub fn row(&self, mode: Mode, slice: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.mode == mode && r.slice == slice)
    }

    fn r5(&self, mode: Mode, slice: &str) -> f64 {
        self.row(mode, slice).map_or(f64::NAN, |r| r.r_at_5)
    }

    /// Seed-averaged overall R@5: ddme_full ≥ ddme_single ≥ baseline.
    pub fn ordering_holds(&self) -> bool {
        let (b, s, f) = (
            self.r5(Mode::Baseline, "overall"),
            self.r5(Mode::DdmeSingle, "overall"),
            self.r5(Mode::DdmeFull, "overall"),
        );
        f >= s && s >= b
    }

    /// Low-band R@5 of ddme_full minus baseline.
    pub fn tail_gain(&self) -> f64 {
        self.r5(Mode::DdmeFull, Band::Low.as_str()) - self.r5(Mode::Baseline, Band::Low.as_str())
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "held-out T1, mean over seeds");
        let _ = writeln!(out, "{:<12} {:<8} {:>8} {:>8}", "mode", "slice", "P@5", "R@5");
        for r in &self.rows {
            let _ = writeln!(out, "{:<12} {:<8} {:>8.4} {:>8.4}", r.mode.as_str(), r.slice, r.p_at_5, r.r_at_5);
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<8} {:<12} {:>10} {:>8} {:>8} {:>10}", "seed", "mode", "new pairs", "R@5", "low R@5", "train R@5");
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{:<8} {:<12} {:>10} {:>8.4} {:>8.4} {:>10.4}",
                r.seed,
                r.mode.as_str(),
                r.expert_new_pairs,
                r.heldout_t1.r_at_5,
                r.heldout_t1.band(Band::Low).map_or(f64::NAN, |b| b.r_at_5),
                r.train_full.r_at_5
            );
        }
        let _ = writeln!(
            out,
            "ordering ddme_full >= ddme_single >= baseline: {}; low-band R@5 gain {:+.4}",
            if self.ordering_holds() { "holds" } else { "fails" },
            self.tail_gain()
        );
        out
    }

    pub fn write(&self, reports: &Path) -> Result<()> {
        write_json(&reports.join("ablation.json"), self)?;
        write_file(&reports.join("ablation.txt"), self.render_table())
    }
}

/// baseline, ddme_single and ddme_full per seed. Every mode of a seed
/// shares the corpus, the student seed and (for the uniform expert) the
/// expert, exactly as separate `run` invocations with that seed would.
pub fn run_ablation(cfg: &PipelineConfig) -> Result<AblationReport> {
    cfg.check()?;
    let start = Instant::now();
    let mut runs = Vec::new();
    for &root in &cfg.seeds {
        let cfg = PipelineConfig {
            seed: root,
            ..cfg.clone()
        };
        let corpus = generate_synthetic(&cfg.synthetic_spec(component_seed(root, "synthetic")))?;
        let experts: BTreeMap<ExpertKind, _> = train_experts(&corpus.observed, &cfg, Mode::DdmeFull.expert_kinds())?
            .into_iter()
            .map(|(k, m, _)| (k, m))
            .collect();
        for mode in Mode::ALL {
            let (student, new_pairs) = if mode == Mode::Baseline {
                (train_mode_student(&cfg, &corpus.observed, None)?.0, 0)
            } else {
                let chosen: Vec<_> = mode.expert_kinds().iter().map(|k| &experts[k]).collect();
                let (aug, _) = augment(&corpus.observed, &chosen, &cfg)?;
                (train_mode_student(&cfg, &corpus.observed, Some(&aug))?.0, aug.expert_new_count())
            };
            runs.push(AblationRun {
                seed: root,
                mode,
                expert_new_pairs: new_pairs,
                heldout_t1: band_report(&student, &corpus.heldout_t1, &cfg.bands, &cfg.eval)?,
                train_full: band_report(&student, &corpus.full, &cfg.bands, &cfg.eval)?,
            });
        }
    }
    Ok(AblationReport::from_runs(runs, start.elapsed().as_secs_f64()))
}
