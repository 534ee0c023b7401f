//! Training-data generation: union the experts' label sets, merge them with
//! the historical labels, and give each new pair a share of extra PV mass
//! that keeps the category prior intact.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{check_text_for_line, data_lines, parse_line, ClickDataset, LabelResolver, LabelSpace};
use crate::error::{Error, Result};
use crate::experts::{ExpertModel, InferenceLine};
use crate::student::TrainingSource;

/// Per-query union of expert label sets, with each expert's own set kept
/// for diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferenceDataset {
    pub union: Vec<BTreeSet<usize>>,
    pub per_expert: Vec<Vec<BTreeSet<usize>>>,
}

impl InferenceDataset {
    /// Builds the union from per-expert, per-query label sets.
    pub fn from_sets(per_expert: Vec<Vec<BTreeSet<usize>>>, n: usize) -> Result<Self> {
        if per_expert.is_empty() {
            return Err(Error::invalid("at least one expert is required"));
        }
        if let Some(bad) = per_expert.iter().find(|e| e.len() != n) {
            return Err(Error::invalid(format!(
                "expert output covers {} queries, dataset has {n}",
                bad.len()
            )));
        }
        let union = (0..n)
            .map(|i| per_expert.iter().flat_map(|e| e[i].iter().copied()).collect())
            .collect();
        Ok(Self { union, per_expert })
    }

    /// Aligns batch-inference files with `ds` line by line.
    pub fn from_inference(ds: &ClickDataset, files: &[Vec<InferenceLine>]) -> Result<Self> {
        let mut per_expert = Vec::with_capacity(files.len());
        for (e, lines) in files.iter().enumerate() {
            if lines.len() != ds.n() {
                return Err(Error::invalid(format!(
                    "inference file {} has {} lines, dataset has {}",
                    e + 1,
                    lines.len(),
                    ds.n()
                )));
            }
            let mut sets = Vec::with_capacity(lines.len());
            for (line, rec) in lines.iter().zip(ds.records()) {
                if line.text != rec.text {
                    return Err(Error::invalid(format!(
                        "inference file {} is not aligned with the dataset at query {}",
                        e + 1,
                        rec.query_id
                    )));
                }
                if let Some(&(j, _)) = line.predictions.iter().find(|(j, _)| *j >= ds.label_space().k()) {
                    return Err(Error::invalid(format!("category index {j} out of range")));
                }
                sets.push(line.predictions.iter().map(|&(j, _)| j).collect());
            }
            per_expert.push(sets);
        }
        Self::from_sets(per_expert, ds.n())
    }

    pub fn len(&self) -> usize {
        self.union.len()
    }

    pub fn is_empty(&self) -> bool {
        self.union.is_empty()
    }
}

/// Runs every expert over `ds` and unions the predicted label sets.
pub fn union_inference(
    ds: &ClickDataset,
    experts: &[&ExpertModel],
    tau: f32,
    m_cap: usize,
) -> Result<InferenceDataset> {
    if experts.is_empty() {
        return Err(Error::invalid("at least one expert is required"));
    }
    if experts.iter().any(|e| &e.label_space != ds.label_space()) {
        return Err(Error::LabelSpaceMismatch(
            "experts were trained on a different label space".to_string(),
        ));
    }
    let per_expert = experts
        .iter()
        .map(|e| predict_all(e, ds, tau, m_cap))
        .collect();
    InferenceDataset::from_sets(per_expert, ds.n())
}

fn predict_all(e: &ExpertModel, ds: &ClickDataset, tau: f32, m_cap: usize) -> Vec<BTreeSet<usize>> {
    let one = |r: &crate::corpus::QueryRecord| -> BTreeSet<usize> {
        e.predict(&r.text, tau, m_cap).into_iter().map(|p| p.label).collect()
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        ds.records().par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ds.records().iter().map(one).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Historical,
    ExpertNew,
}

/// Ŷ_i = Ȳ_i ∪ Y_i, each label tagged with where it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergedLabels {
    pub sets: Vec<BTreeMap<usize, Provenance>>,
}

impl MergedLabels {
    pub fn expert_new_count(&self) -> usize {
        self.sets
            .iter()
            .flat_map(|s| s.values())
            .filter(|&&p| p == Provenance::ExpertNew)
            .count()
    }
}

pub fn merge_labels(ds: &ClickDataset, inf: &InferenceDataset) -> Result<MergedLabels> {
    if inf.len() != ds.n() {
        return Err(Error::invalid(format!(
            "inference covers {} queries, dataset has {}",
            inf.len(),
            ds.n()
        )));
    }
    let sets = ds
        .records()
        .iter()
        .zip(&inf.union)
        .map(|(r, predicted)| {
            let mut s: BTreeMap<usize, Provenance> =
                r.pv.keys().map(|&j| (j, Provenance::Historical)).collect();
            for &j in predicted {
                s.entry(j).or_insert(Provenance::ExpertNew);
            }
            s
        })
        .collect();
    Ok(MergedLabels { sets })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentedPair {
    pub pv: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedRecord {
    pub query_id: u64,
    pub text: String,
    pub labels: BTreeMap<usize, AugmentedPair>,
}

/// Historical data plus expert-added pairs, with real-valued PVs.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDataset {
    label_space: LabelSpace,
    records: Vec<AugmentedRecord>,
}

impl AugmentedDataset {
    pub fn new(label_space: LabelSpace, records: Vec<AugmentedRecord>) -> Result<Self> {
        let k = label_space.k();
        let mut ids = BTreeSet::new();
        for r in &records {
            if !ids.insert(r.query_id) {
                return Err(Error::invalid(format!("duplicate query id {}", r.query_id)));
            }
            if let Some(&j) = r.labels.keys().find(|&&j| j >= k) {
                return Err(Error::invalid(format!("category index {j} out of range")));
            }
            if r.labels.values().any(|p| !(p.pv >= 0.0 && p.pv.is_finite())) {
                return Err(Error::invalid(format!("query {} has an invalid PV", r.query_id)));
            }
        }
        Ok(Self { label_space, records })
    }

    /// The historical data as-is, with nothing added.
    pub fn from_historical(ds: &ClickDataset) -> Self {
        let records = ds
            .records()
            .iter()
            .map(|r| AugmentedRecord {
                query_id: r.query_id,
                text: r.text.clone(),
                labels: r
                    .pv
                    .iter()
                    .map(|(&j, &v)| {
                        (
                            j,
                            AugmentedPair {
                                pv: v as f64,
                                provenance: Provenance::Historical,
                            },
                        )
                    })
                    .collect(),
            })
            .collect();
        Self {
            label_space: ds.label_space().clone(),
            records,
        }
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn records(&self) -> &[AugmentedRecord] {
        &self.records
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn pair_count(&self) -> usize {
        self.records.iter().map(|r| r.labels.len()).sum()
    }

    pub fn expert_new_count(&self) -> usize {
        self.records
            .iter()
            .flat_map(|r| r.labels.values())
            .filter(|p| p.provenance == Provenance::ExpertNew)
            .count()
    }

    pub fn total_pv(&self) -> f64 {
        self.category_mass().iter().sum()
    }

    pub fn category_mass(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.label_space.k()];
        for r in &self.records {
            for (&j, p) in &r.labels {
                mass[j] += p.pv;
            }
        }
        mass
    }
}

impl TrainingSource for AugmentedDataset {
    fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    fn len(&self) -> usize {
        self.records.len()
    }

    fn query_id(&self, i: usize) -> u64 {
        self.records[i].query_id
    }

    fn text(&self, i: usize) -> &str {
        &self.records[i].text
    }

    fn labels(&self, i: usize) -> Vec<(usize, f64)> {
        self.records[i].labels.iter().map(|(&j, p)| (j, p.pv)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAllocation {
    pub category: String,
    pub prior: f64,
    pub new_pairs: usize,
    /// PV given to each new pair of this category.
    pub unit_pv: f64,
    /// p_j · M when the category received new pairs.
    pub added_mass: f64,
    /// Mass given to new pairs of a zero-prior category.
    pub floor_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationReport {
    pub m: f64,
    pub floor_pv: f64,
    pub historical_pv: f64,
    pub expert_new_pairs: usize,
    pub total_added_mass: f64,
    pub total_floor_mass: f64,
    pub categories: Vec<CategoryAllocation>,
}

impl AllocationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "M = {:.6}  historical PV = {:.6}  new pairs = {}  added = {:.6}  floor = {:.6}",
            self.m, self.historical_pv, self.expert_new_pairs, self.total_added_mass, self.total_floor_mass
        );
        let _ = writeln!(
            out,
            "{:<16} {:>10} {:>8} {:>14} {:>14} {:>12}",
            "category", "prior", "N_j", "unit_pv", "added_mass", "floor_mass"
        );
        for c in &self.categories {
            let _ = writeln!(
                out,
                "{:<16} {:>10.6} {:>8} {:>14.6} {:>14.6} {:>12.6}",
                c.category, c.prior, c.new_pairs, c.unit_pv, c.added_mass, c.floor_mass
            );
        }
        out
    }
}

/// Size M of the supplementary PV mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Supplement {
    Absolute(f64),
    /// Fraction of the total historical PV.
    Fraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationConfig {
    pub supplement: Supplement,
    /// PV of each new pair whose category has no historical PV.
    pub floor_pv: f64,
}

impl Default for AllocationConfig {
    fn default() -> Self {
        Self {
            supplement: Supplement::Fraction(0.2),
            floor_pv: 1.0,
        }
    }
}

impl AllocationConfig {
    pub fn with_m(m: f64) -> Self {
        Self {
            supplement: Supplement::Absolute(m),
            ..Self::default()
        }
    }
}

/// Gives every expert-new pair of category j the unit p_j · M / N_j, where
/// p_j is j's share of historical PV and N_j counts j's new pairs.
/// Historical pairs keep their PV.
pub fn allocate_pv(
    ds: &ClickDataset,
    merged: &MergedLabels,
    cfg: &AllocationConfig,
) -> Result<(AugmentedDataset, AllocationReport)> {
    if ds.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    if merged.sets.len() != ds.n() {
        return Err(Error::invalid("merged labels are not aligned with the dataset"));
    }
    let historical: f64 = ds.total_pv() as f64;
    if historical <= 0.0 {
        return Err(Error::invalid("total historical PV must be > 0"));
    }
    let m = match cfg.supplement {
        Supplement::Absolute(m) => m,
        Supplement::Fraction(x) => x * historical,
    };
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::invalid(format!("M must be > 0, got {m}")));
    }
    if !(cfg.floor_pv >= 0.0 && cfg.floor_pv.is_finite()) {
        return Err(Error::invalid("floor PV must be >= 0"));
    }

    let ls = ds.label_space();
    let k = ls.k();
    let mass = ds.category_mass();
    let mut counts = vec![0usize; k];
    for (r, set) in ds.records().iter().zip(&merged.sets) {
        if r.pv.keys().any(|j| set.get(j) != Some(&Provenance::Historical)) {
            return Err(Error::invalid(format!(
                "merged labels drop historical pairs of query {}",
                r.query_id
            )));
        }
        for (&j, &p) in set {
            if j >= k {
                return Err(Error::invalid(format!("category index {j} out of range")));
            }
            if p == Provenance::ExpertNew {
                counts[j] += 1;
            }
        }
    }

    let mut categories = Vec::with_capacity(k);
    let mut units = vec![0.0; k];
    for j in 0..k {
        let prior = mass[j] as f64 / historical;
        let n_j = counts[j];
        let (unit, added, floor) = match (n_j, prior > 0.0) {
            (0, _) => (0.0, 0.0, 0.0),
            (n, true) => (prior * m / n as f64, prior * m, 0.0),
            (n, false) => (cfg.floor_pv, 0.0, cfg.floor_pv * n as f64),
        };
        units[j] = unit;
        categories.push(CategoryAllocation {
            category: ls.name(j).to_string(),
            prior,
            new_pairs: n_j,
            unit_pv: unit,
            added_mass: added,
            floor_mass: floor,
        });
    }

    let records = ds
        .records()
        .iter()
        .zip(&merged.sets)
        .map(|(r, set)| AugmentedRecord {
            query_id: r.query_id,
            text: r.text.clone(),
            labels: set
                .iter()
                .map(|(&j, &provenance)| {
                    let pv = match provenance {
                        Provenance::Historical => r.pv[&j] as f64,
                        Provenance::ExpertNew => units[j],
                    };
                    (j, AugmentedPair { pv, provenance })
                })
                .collect(),
        })
        .collect();

    let report = AllocationReport {
        m,
        floor_pv: cfg.floor_pv,
        historical_pv: historical,
        expert_new_pairs: counts.iter().sum(),
        total_added_mass: categories.iter().map(|c| c.added_mass).sum(),
        total_floor_mass: categories.iter().map(|c| c.floor_mass).sum(),
        categories,
    };
    Ok((
        AugmentedDataset {
            label_space: ls.clone(),
            records,
        },
        report,
    ))
}

/// Dataset text (PVs with 6 decimals) and provenance sidecar text.
pub fn write_augmented(aug: &AugmentedDataset) -> Result<(String, String)> {
    let ls = &aug.label_space;
    let mut data = String::new();
    let mut sidecar = String::new();
    for r in &aug.records {
        check_text_for_line(&r.text)?;
        if r.labels.is_empty() {
            return Err(Error::invalid(format!("record {} has no labels", r.query_id)));
        }
        data.push_str(&r.text);
        data.push('\t');
        for (i, (&j, p)) in r.labels.iter().enumerate() {
            if i > 0 {
                data.push(',');
            }
            let _ = write!(data, "{}:{:.6}", ls.name(j), p.pv);
            if p.provenance == Provenance::ExpertNew {
                let _ = writeln!(sidecar, "{}\t{}\texpert_new", r.query_id, ls.name(j));
            }
        }
        data.push('\n');
    }
    Ok((data, sidecar))
}

fn parse_real_pv(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("invalid PV {s:?}")),
    }
}

/// Inverse of [`write_augmented`]; query ids are record positions.
pub fn parse_augmented(data: &str, sidecar: &str, label_space: &LabelSpace) -> Result<AugmentedDataset> {
    let mut resolver = LabelResolver::new(Some(label_space));
    let mut records = Vec::new();
    for (line_no, line) in data_lines(data) {
        let raw = parse_line(line_no, line, parse_real_pv)?;
        let mut labels = BTreeMap::new();
        for (cat, pv) in raw.pairs {
            labels.insert(
                resolver.resolve(line_no, cat)?,
                AugmentedPair {
                    pv,
                    provenance: Provenance::Historical,
                },
            );
        }
        records.push(AugmentedRecord {
            query_id: records.len() as u64,
            text: raw.text.to_string(),
            labels,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for (line_no, line) in data_lines(sidecar) {
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let fields: Vec<&str> = line.split('\t').collect();
        let [qid, cat, tag] = fields[..] else {
            return Err(err("expected `<query_id> TAB <cat> TAB expert_new`".to_string()));
        };
        if tag != "expert_new" {
            return Err(err(format!("unknown provenance tag {tag:?}")));
        }
        let qid: usize = qid.parse().map_err(|_| err(format!("invalid query id {qid:?}")))?;
        let j = resolver.resolve(line_no, cat)?;
        let pair = records
            .get_mut(qid)
            .and_then(|r| r.labels.get_mut(&j))
            .ok_or_else(|| err(format!("no pair ({qid}, {cat}) in the dataset")))?;
        pair.provenance = Provenance::ExpertNew;
    }
    AugmentedDataset::new(label_space.clone(), records)
}

pub fn sidecar_path(data_path: &Path) -> std::path::PathBuf {
    let mut s = data_path.as_os_str().to_owned();
    s.push(".provenance");
    s.into()
}

/// Writes the dataset to `path` and provenance to `<path>.provenance`.
pub fn emit_augmented(aug: &AugmentedDataset, path: &Path) -> Result<()> {
    let (data, sidecar) = write_augmented(aug)?;
    std::fs::write(path, data).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    std::fs::write(&side, sidecar).map_err(|e| Error::io(&side, e))
}

pub fn load_augmented(path: &Path, label_space: &LabelSpace) -> Result<AugmentedDataset> {
    let data = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let sidecar = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    parse_augmented(&data, &sidecar, label_space)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_dataset;

    fn set(xs: &[usize]) -> BTreeSet<usize> {
        xs.iter().copied().collect()
    }

    #[test]
    fn union_of_three_sets() {
        let inf = InferenceDataset::from_sets(vec![vec![set(&[0])], vec![set(&[1])], vec![set(&[0, 2])]], 1).unwrap();
        assert_eq!(inf.union[0], set(&[0, 1, 2]));
    }

    #[test]
    fn merge_flags_only_new_pairs() {
        let ds = parse_dataset("q\ta:3\n", Some(&LabelSpace::new(vec!["a".into(), "b".into()]).unwrap())).unwrap();
        let inf = InferenceDataset::from_sets(vec![vec![set(&[0, 1])]], 1).unwrap();
        let m = merge_labels(&ds, &inf).unwrap();
        assert_eq!(m.sets[0][&0], Provenance::Historical);
        assert_eq!(m.sets[0][&1], Provenance::ExpertNew);
        assert_eq!(m.expert_new_count(), 1);
    }

    #[test]
    fn documented_unit_pv() {
        // j holds 200 of 1000 PV, M = 100, four new pairs -> 5.0 each.
        let ls = LabelSpace::new(vec!["j".into(), "o".into()]).unwrap();
        let mut src = String::from("h0\tj:200,o:800\n");
        for i in 0..4 {
            src.push_str(&format!("n{i}\to:0\n"));
        }
        let ds = parse_dataset(&src, Some(&ls)).unwrap();
        let mut per = vec![set(&[])];
        per.extend((0..4).map(|_| set(&[0])));
        let inf = InferenceDataset::from_sets(vec![per], 5).unwrap();
        let merged = merge_labels(&ds, &inf).unwrap();
        let cfg = AllocationConfig::with_m(100.0);
        let (aug, rep) = allocate_pv(&ds, &merged, &cfg).unwrap();
        assert_eq!(rep.categories[0].unit_pv, 5.0);
        assert_eq!(aug.records()[1].labels[&0].pv, 5.0);
        assert_eq!(aug.records()[0].labels[&1].pv, 800.0);
        assert_eq!(rep.total_added_mass, 20.0);
    }

    #[test]
    fn zero_prior_category_gets_floor() {
        let ls = LabelSpace::new(vec!["a".into(), "z".into()]).unwrap();
        let ds = parse_dataset("q\ta:10\n", Some(&ls)).unwrap();
        let inf = InferenceDataset::from_sets(vec![vec![set(&[1])]], 1).unwrap();
        let merged = merge_labels(&ds, &inf).unwrap();
        let (aug, rep) = allocate_pv(&ds, &merged, &AllocationConfig::default()).unwrap();
        assert_eq!(aug.records()[0].labels[&1].pv, 1.0);
        assert_eq!(rep.total_added_mass, 0.0);
        assert_eq!(rep.total_floor_mass, 1.0);
    }

    #[test]
    fn rejects_non_positive_m() {
        let ds = parse_dataset("q\ta:10\n", None).unwrap();
        let merged = merge_labels(&ds, &InferenceDataset::from_sets(vec![vec![set(&[])]], 1).unwrap()).unwrap();
        for m in [0.0, -1.0, f64::NAN] {
            let cfg = AllocationConfig::with_m(m);
            assert!(allocate_pv(&ds, &merged, &cfg).is_err());
        }
    }

    #[test]
    fn sidecar_rejects_unknown_pair() {
        let ls = LabelSpace::new(vec!["a".into(), "b".into()]).unwrap();
        let err = parse_augmented("q\ta:1.000000\n", "0\tb\texpert_new\n", &ls).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }
}
