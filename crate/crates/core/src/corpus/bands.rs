use serde::{Deserialize, Serialize};

use super::{ClickDataset, QueryRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    High,
    Middle,
    Low,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::High, Band::Middle, Band::Low];

    pub fn as_str(self) -> &'static str {
        match self {
            Band::High => "high",
            Band::Middle => "middle",
            Band::Low => "low",
        }
    }
}

impl std::fmt::Display for Band {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Total-PV quantile cut points: ranks below `low` are low-frequency, ranks at
/// or above `high` are high-frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandCuts {
    pub low: f64,
    pub high: f64,
}

impl Default for BandCuts {
    fn default() -> Self {
        Self {
            low: 0.5,
            high: 0.9,
        }
    }
}

impl BandCuts {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        let cuts = Self { low, high };
        cuts.validate()?;
        Ok(cuts)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.low && self.low < self.high && self.high < 1.0) {
            return Err(Error::invalid(format!(
                "band cuts must satisfy 0 < low < high < 1, got ({}, {})",
                self.low, self.high
            )));
        }
        Ok(())
    }

    /// Band of the record at ascending rank `pos` among `n`.
    pub fn band_at(&self, pos: usize, n: usize) -> Band {
        let low_end = (self.low * n as f64).floor() as usize;
        let high_start = (self.high * n as f64).floor() as usize;
        if pos < low_end {
            Band::Low
        } else if pos < high_start {
            Band::Middle
        } else {
            Band::High
        }
    }
}

/// Bands for every record of `ds`, aligned with `ds.records()`.
///
/// Records are ranked by total PV ascending, ties by `query_id` ascending.
pub fn assign_bands(ds: &ClickDataset, cuts: &BandCuts) -> Vec<Band> {
    assign_bands_by_mass(
        ds.records().iter().map(|r| (r.total_pv() as f64, r.query_id)),
        cuts,
    )
}

pub(crate) fn assign_bands_by_mass(
    keys: impl Iterator<Item = (f64, u64)>,
    cuts: &BandCuts,
) -> Vec<Band> {
    let keys: Vec<(f64, u64)> = keys.collect();
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| {
        keys[a]
            .0
            .total_cmp(&keys[b].0)
            .then(keys[a].1.cmp(&keys[b].1))
    });
    let n = keys.len();
    let mut bands = vec![Band::Low; n];
    for (pos, &i) in order.iter().enumerate() {
        bands[i] = cuts.band_at(pos, n);
    }
    bands
}

pub fn band_of(record: &QueryRecord, ds: &ClickDataset, cuts: &BandCuts) -> Band {
    let key = (record.total_pv(), record.query_id);
    let pos = ds
        .records()
        .iter()
        .filter(|r| (r.total_pv(), r.query_id) < key)
        .count();
    cuts.band_at(pos, ds.n())
}
