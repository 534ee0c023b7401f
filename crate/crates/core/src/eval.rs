//! P@5 / R@5 over ranked predictions, pair accuracy on annotation sets, and
//! frequency-band slicing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{assign_bands, Band, BandCuts, ClickDataset};
use crate::error::{Error, Result};
use crate::experts::ExpertModel;
use crate::student::StudentModel;

pub const CUTOFF: usize = 5;

fn top_hits(ranked: &[usize], truth: &BTreeSet<usize>, cutoff: usize) -> (usize, usize) {
    let top = &ranked[..ranked.len().min(cutoff)];
    (top.iter().filter(|j| truth.contains(j)).count(), top.len())
}

/// Mean over queries of `|top ∩ Y| / min(cutoff, |top|)`; a query with no
/// prediction contributes 0.
pub fn precision_at_k(
    predictions: &[Vec<usize>],
    truth: &[BTreeSet<usize>],
    cutoff: usize,
) -> Result<f64> {
    check_aligned(predictions, truth)?;
    let mut sum = 0.0;
    for (p, t) in predictions.iter().zip(truth) {
        let (hits, shown) = top_hits(p, t, cutoff);
        if shown > 0 {
            sum += hits as f64 / shown as f64;
        }
    }
    Ok(sum / predictions.len() as f64)
}

/// Mean over queries with non-empty truth of `|top ∩ Y| / min(cutoff, |Y|)`.
pub fn recall_at_k(
    predictions: &[Vec<usize>],
    truth: &[BTreeSet<usize>],
    cutoff: usize,
) -> Result<f64> {
    check_aligned(predictions, truth)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, t) in predictions.iter().zip(truth) {
        if t.is_empty() {
            continue;
        }
        let (hits, _) = top_hits(p, t, cutoff);
        sum += hits as f64 / t.len().min(cutoff) as f64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("no query has a non-empty truth set"));
    }
    Ok(sum / n as f64)
}

pub fn precision_at_5(predictions: &[Vec<usize>], truth: &[BTreeSet<usize>]) -> Result<f64> {
    precision_at_k(predictions, truth, CUTOFF)
}

pub fn recall_at_5(predictions: &[Vec<usize>], truth: &[BTreeSet<usize>]) -> Result<f64> {
    recall_at_k(predictions, truth, CUTOFF)
}

fn check_aligned(predictions: &[Vec<usize>], truth: &[BTreeSet<usize>]) -> Result<()> {
    if predictions.is_empty() {
        return Err(Error::invalid("empty query set"));
    }
    if predictions.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} prediction lists for {} truth sets",
            predictions.len(),
            truth.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub query: String,
    pub category: String,
    pub relevant: bool,
    pub pv: f64,
}

/// PV-weighted: `Σ pv·rel / Σ pv`; unweighted: mean relevance.
pub fn pair_accuracy(ann: &[Annotation], pv_weighted: bool) -> Result<f64> {
    if ann.is_empty() {
        return Err(Error::invalid("empty annotation set"));
    }
    if pv_weighted {
        let mass: f64 = ann.iter().map(|a| a.pv).sum();
        if mass <= 0.0 {
            return Err(Error::invalid("annotation PV mass is zero"));
        }
        let hit: f64 = ann.iter().filter(|a| a.relevant).map(|a| a.pv).sum();
        Ok(hit / mass)
    } else {
        Ok(ann.iter().filter(|a| a.relevant).count() as f64 / ann.len() as f64)
    }
}

/// `<query> TAB <cat> TAB <rel 0|1> TAB <pv>` per line.
pub fn parse_annotations(src: &str) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    for (line_no, line) in crate::corpus::data_lines(src) {
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let fields: Vec<&str> = line.split('\t').collect();
        let [query, category, rel, pv] = fields[..] else {
            return Err(err(format!("expected 4 TAB-separated fields, got {}", fields.len())));
        };
        let relevant = match rel {
            "0" => false,
            "1" => true,
            _ => return Err(err(format!("relevance must be 0 or 1, got {rel:?}"))),
        };
        let pv: f64 = pv.parse().map_err(|_| err(format!("invalid PV {pv:?}")))?;
        if !(pv >= 0.0 && pv.is_finite()) {
            return Err(err(format!("PV must be a non-negative number, got {pv}")));
        }
        out.push(Annotation {
            query: query.to_string(),
            category: category.to_string(),
            relevant,
            pv,
        });
    }
    Ok(out)
}

pub fn load_annotations(path: &Path) -> Result<Vec<Annotation>> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&src)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Length of the ranked prediction list.
    pub topk: usize,
    /// Minimum sigmoid score to be listed.
    pub threshold: f32,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            topk: CUTOFF,
            threshold: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandMetrics {
    pub n_precision: usize,
    pub n_recall: usize,
    pub p_at_5: f64,
    pub r_at_5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub n_evaluated: usize,
    pub n_recall: usize,
    /// Queries with an empty prediction list (counted as 0 precision).
    pub n_empty_predictions: usize,
    pub p_at_5: f64,
    pub r_at_5: f64,
    /// Bands with no query are absent.
    pub bands: BTreeMap<Band, BandMetrics>,
}

impl EvalResult {
    pub fn band(&self, band: Band) -> Option<&BandMetrics> {
        self.bands.get(&band)
    }

    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<8} {:>7} {:>8} {:>8}", "slice", "n", "P@5", "R@5");
        let _ = writeln!(
            s,
            "{:<8} {:>7} {:>8.4} {:>8.4}",
            "overall", self.n_evaluated, self.p_at_5, self.r_at_5
        );
        for band in Band::ALL {
            match self.bands.get(&band) {
                Some(m) => {
                    let _ = writeln!(
                        s,
                        "{:<8} {:>7} {:>8.4} {:>8.4}",
                        band.as_str(),
                        m.n_precision,
                        m.p_at_5,
                        m.r_at_5
                    );
                }
                None => {
                    let _ = writeln!(s, "{:<8} {:>7} {:>8} {:>8}", band.as_str(), 0, "-", "-");
                }
            }
        }
        s
    }
}

/// Scores ranked label lists against `ds`'s label sets, overall and per
/// frequency band.
pub fn evaluate_rankings(
    rankings: &[Vec<usize>],
    ds: &ClickDataset,
    cuts: &BandCuts,
) -> Result<EvalResult> {
    let truth: Vec<BTreeSet<usize>> = ds.records().iter().map(|r| r.labels().collect()).collect();
    let p = precision_at_5(rankings, &truth)?;
    let r = recall_at_5(rankings, &truth)?;
    let bands = assign_bands(ds, cuts);
    let mut per_band = BTreeMap::new();
    for band in Band::ALL {
        let idx: Vec<usize> = (0..bands.len()).filter(|&i| bands[i] == band).collect();
        if idx.is_empty() {
            continue;
        }
        let preds: Vec<Vec<usize>> = idx.iter().map(|&i| rankings[i].clone()).collect();
        let tr: Vec<BTreeSet<usize>> = idx.iter().map(|&i| truth[i].clone()).collect();
        let n_recall = tr.iter().filter(|t| !t.is_empty()).count();
        per_band.insert(
            band,
            BandMetrics {
                n_precision: idx.len(),
                n_recall,
                p_at_5: precision_at_5(&preds, &tr)?,
                r_at_5: if n_recall > 0 { recall_at_5(&preds, &tr)? } else { 0.0 },
            },
        );
    }
    Ok(EvalResult {
        n_evaluated: rankings.len(),
        n_recall: truth.iter().filter(|t| !t.is_empty()).count(),
        n_empty_predictions: rankings.iter().filter(|p| p.is_empty()).count(),
        p_at_5: p,
        r_at_5: r,
        bands: per_band,
    })
}

fn check_label_space(model: &crate::corpus::LabelSpace, ds: &ClickDataset) -> Result<()> {
    if model != ds.label_space() {
        return Err(Error::LabelSpaceMismatch(
            "model and evaluation dataset use different label spaces".to_string(),
        ));
    }
    Ok(())
}

pub fn student_rankings(model: &StudentModel, ds: &ClickDataset, opts: &EvalOptions) -> Vec<Vec<usize>> {
    ds.records()
        .iter()
        .map(|r| {
            model
                .predict_topk(&r.text, opts.topk, opts.threshold)
                .into_iter()
                .map(|p| p.label)
                .collect()
        })
        .collect()
}

/// Per-band and overall metrics of the student on `eval_ds`.
pub fn band_report(
    model: &StudentModel,
    eval_ds: &ClickDataset,
    cuts: &BandCuts,
    opts: &EvalOptions,
) -> Result<EvalResult> {
    check_label_space(model.label_space(), eval_ds)?;
    evaluate_rankings(&student_rankings(model, eval_ds, opts), eval_ds, cuts)
}

/// Same report for an expert, ranking by its sigmoid scores.
pub fn expert_band_report(
    model: &ExpertModel,
    eval_ds: &ClickDataset,
    cuts: &BandCuts,
    opts: &EvalOptions,
) -> Result<EvalResult> {
    check_label_space(&model.label_space, eval_ds)?;
    let rankings: Vec<Vec<usize>> = eval_ds
        .records()
        .iter()
        .map(|r| {
            model
                .predict(&r.text, opts.threshold, opts.topk)
                .into_iter()
                .map(|p| p.label)
                .collect()
        })
        .collect();
    evaluate_rankings(&rankings, eval_ds, cuts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn documented_single_query() {
        let preds = vec![vec![0, 1, 2]];
        let truth = vec![set(&[0, 3])];
        assert!((precision_at_5(&preds, &truth).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(recall_at_5(&preds, &truth).unwrap(), 0.5);
    }

    #[test]
    fn perfect_predictions() {
        let preds = vec![vec![4, 2], vec![1, 0, 3, 5, 6]];
        let truth = vec![set(&[2, 4]), set(&[0, 1, 3, 5, 6])];
        assert_eq!(precision_at_5(&preds, &truth).unwrap(), 1.0);
        assert_eq!(recall_at_5(&preds, &truth).unwrap(), 1.0);
    }

    #[test]
    fn only_top_five_count() {
        let preds = vec![vec![9, 8, 7, 6, 5, 0]];
        let truth = vec![set(&[0])];
        assert_eq!(precision_at_5(&preds, &truth).unwrap(), 0.0);
        assert_eq!(recall_at_5(&preds, &truth).unwrap(), 0.0);
    }

    #[test]
    fn empty_prediction_and_truth_conventions() {
        let preds = vec![vec![], vec![1]];
        let truth = vec![set(&[1]), set(&[])];
        assert_eq!(precision_at_5(&preds, &truth).unwrap(), 0.0);
        assert_eq!(recall_at_5(&preds, &truth).unwrap(), 0.0);
        assert!(recall_at_5(&[vec![1]], &[set(&[])]).is_err());
        assert!(precision_at_5(&[], &[]).is_err());
    }

    #[test]
    fn pair_accuracy_cases() {
        let a = |pv, relevant| Annotation {
            query: "q".into(),
            category: "c".into(),
            relevant,
            pv,
        };
        let ann = vec![a(9.0, true), a(1.0, false)];
        assert!((pair_accuracy(&ann, true).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(pair_accuracy(&ann, false).unwrap(), 0.5);
        let all = vec![a(3.0, true), a(0.5, true)];
        assert_eq!(pair_accuracy(&all, true).unwrap(), 1.0);
        assert_eq!(pair_accuracy(&all, false).unwrap(), 1.0);
        let uniform = vec![a(2.0, true), a(2.0, false), a(2.0, false), a(2.0, true)];
        assert_eq!(
            pair_accuracy(&uniform, true).unwrap(),
            pair_accuracy(&uniform, false).unwrap()
        );
        assert!(pair_accuracy(&[a(0.0, true)], true).is_err());
        assert!(pair_accuracy(&[], false).is_err());
    }

    #[test]
    fn annotation_parsing() {
        let ann = parse_annotations("red dress\tc1\t1\t9\n# c\nshoe\tc2\t0\t1.5\n").unwrap();
        assert_eq!(ann.len(), 2);
        assert!(ann[0].relevant && ann[0].pv == 9.0);
        assert!(parse_annotations("q\tc\t2\t1").is_err());
        assert!(parse_annotations("q\tc\t1\t-1").is_err());
        assert!(parse_annotations("q\tc\t1").is_err());
    }
}
