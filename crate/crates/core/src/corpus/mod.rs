//! Click-log data model: label space, query records with page-view (PV)
//! rows, file I/O, frequency bands and the synthetic long-tail generator.

mod bands;
mod io;
mod synthetic;

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::{Error, Result};

pub use bands::{assign_bands, band_of, Band, BandCuts};
pub(crate) use io::{check_text_for_line, data_lines, parse_line, LabelResolver};
pub use io::{load_dataset, load_label_space, parse_dataset, save_dataset, save_label_space,
    write_dataset};
pub use synthetic::{generate_synthetic, SyntheticCorpus, SyntheticSpec};

/// Ordered category identifiers; position is the category index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpace {
    categories: Vec<String>,
    index: HashMap<String, usize>,
}

fn valid_identifier(id: &str) -> bool {
    !id.is_empty() && !id.contains([',', ':', '\t', '\n', '\r'])
}

impl LabelSpace {
    pub fn new(categories: Vec<String>) -> Result<Self> {
        if categories.is_empty() {
            return Err(Error::invalid("label space needs at least one category"));
        }
        let mut index = HashMap::with_capacity(categories.len());
        for (i, c) in categories.iter().enumerate() {
            if !valid_identifier(c) {
                return Err(Error::invalid(format!("invalid category identifier {c:?}")));
            }
            if index.insert(c.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate category `{c}`")));
            }
        }
        Ok(Self { categories, index })
    }

    pub fn k(&self) -> usize {
        self.categories.len()
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.categories[idx]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }
}

/// One query with its labels; every label carries a PV count (possibly 0).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRecord {
    pub query_id: u64,
    pub text: String,
    pub pv: BTreeMap<usize, u64>,
}

impl QueryRecord {
    pub fn new(query_id: u64, text: impl Into<String>, pv: BTreeMap<usize, u64>) -> Self {
        Self {
            query_id,
            text: text.into(),
            pv,
        }
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.pv.keys().copied()
    }

    pub fn label_set(&self) -> HashSet<usize> {
        self.pv.keys().copied().collect()
    }

    pub fn has_label(&self, j: usize) -> bool {
        self.pv.contains_key(&j)
    }

    pub fn pv_of(&self, j: usize) -> u64 {
        self.pv.get(&j).copied().unwrap_or(0)
    }

    pub fn total_pv(&self) -> u64 {
        self.pv.values().sum()
    }

    /// Label with the largest PV, lowest index on ties.
    pub fn top_label(&self) -> Option<usize> {
        self.pv
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(j, _)| *j)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClickDataset {
    label_space: LabelSpace,
    records: Vec<QueryRecord>,
}

impl ClickDataset {
    pub fn new(label_space: LabelSpace, records: Vec<QueryRecord>) -> Result<Self> {
        let k = label_space.k();
        let mut ids = HashSet::with_capacity(records.len());
        for r in &records {
            if let Some(j) = r.labels().find(|&j| j >= k) {
                return Err(Error::invalid(format!(
                    "record {} has label index {j} >= k = {k}",
                    r.query_id
                )));
            }
            if !ids.insert(r.query_id) {
                return Err(Error::invalid(format!("duplicate query_id {}", r.query_id)));
            }
        }
        Ok(Self {
            label_space,
            records,
        })
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn records(&self) -> &[QueryRecord] {
        &self.records
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_pv(&self) -> u64 {
        self.records.iter().map(QueryRecord::total_pv).sum()
    }

    pub fn pair_count(&self) -> usize {
        self.records.iter().map(|r| r.pv.len()).sum()
    }

    /// Historical PV mass per category.
    pub fn category_mass(&self) -> Vec<u64> {
        let mut mass = vec![0u64; self.label_space.k()];
        for r in &self.records {
            for (&j, &v) in &r.pv {
                mass[j] += v;
            }
        }
        mass
    }

    /// Checks the extra invariants required of a training set.
    pub fn validate_for_training(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(r) = self.records.iter().find(|r| r.pv.is_empty()) {
            return Err(Error::invalid(format!("record {} has no labels", r.query_id)));
        }
        if self.total_pv() == 0 {
            return Err(Error::invalid("training set has zero total PV"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ls(ids: &[&str]) -> LabelSpace {
        LabelSpace::new(ids.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn label_space_bijection() {
        let l = ls(&["a", "b", "c"]);
        assert_eq!(l.k(), 3);
        for (i, c) in l.categories().iter().enumerate() {
            assert_eq!(l.index_of(c), Some(i));
            assert_eq!(l.name(i), c);
        }
        assert!(LabelSpace::new(vec![]).is_err());
        assert!(LabelSpace::new(vec!["a".into(), "a".into()]).is_err());
        assert!(LabelSpace::new(vec!["a:b".into()]).is_err());
    }

    #[test]
    fn dataset_rejects_bad_records() {
        let l = ls(&["a", "b"]);
        let r = |id, j| QueryRecord::new(id, "q", BTreeMap::from([(j, 1)]));
        assert!(ClickDataset::new(l.clone(), vec![r(0, 2)]).is_err());
        assert!(ClickDataset::new(l.clone(), vec![r(0, 0), r(0, 1)]).is_err());
        let ds = ClickDataset::new(l, vec![r(0, 0), r(1, 1)]).unwrap();
        assert_eq!(ds.total_pv(), 2);
        assert_eq!(ds.category_mass(), vec![1, 1]);
    }

    #[test]
    fn top_label_prefers_lowest_index_on_ties() {
        let r = QueryRecord::new(0, "q", BTreeMap::from([(3, 5), (1, 5), (2, 1)]));
        assert_eq!(r.top_label(), Some(1));
    }
}
