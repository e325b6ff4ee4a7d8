//! The analytical store.
//!
//! Facts sit at (quake, regency) grain. Dimensions are normalised snowflake
//! style: regency rows point at province rows, and magnitude bands are
//! their own table. Time is derived from the fact date. The store is only
//! written by [`Warehouse::load_facts`]; cubes are computed on demand.

mod cube;
mod etl;

pub use cube::*;
pub use etl::*;

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{ReferenceDataset, SourceWatermark};
use crate::model::{HistoricalQuake, MagnitudeBands};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WarehouseError {
    #[error("ConflictingDimension: {0}")]
    ConflictingDimension(String),
    #[error("UnknownDimension: {0}")]
    UnknownDimension(String),
    #[error("UnknownLevel: {0}")]
    UnknownLevel(String),
    #[error("UnknownMember: {0}")]
    UnknownMember(String),
    #[error("DuplicateDimension: {0} appears on more than one axis")]
    DuplicateDimension(String),
    #[error("DimensionNotInCube: {0}")]
    DimensionNotInCube(String),
    #[error("AlreadyCoarsest: {0}")]
    AlreadyCoarsest(String),
    #[error("AlreadyFinest: {0}")]
    AlreadyFinest(String),
    #[error("UnmappedQuake: {0} names no regency")]
    UnmappedQuake(String),
    #[error("InvalidQuery: {0}")]
    InvalidQuery(String),
}

impl WarehouseError {
    pub fn kind(&self) -> &'static str {
        match self {
            WarehouseError::ConflictingDimension(_) => "ConflictingDimension",
            WarehouseError::UnknownDimension(_) => "UnknownDimension",
            WarehouseError::UnknownLevel(_) => "UnknownLevel",
            WarehouseError::UnknownMember(_) => "UnknownMember",
            WarehouseError::DuplicateDimension(_) => "DuplicateDimension",
            WarehouseError::DimensionNotInCube(_) => "DimensionNotInCube",
            WarehouseError::AlreadyCoarsest(_) => "AlreadyCoarsest",
            WarehouseError::AlreadyFinest(_) => "AlreadyFinest",
            WarehouseError::UnmappedQuake(_) => "UnmappedQuake",
            WarehouseError::InvalidQuery(_) => "InvalidQuery",
        }
    }
}

/// One fact at base grain: a quake's toll attributed to one regency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactRow {
    pub quake_id: String,
    pub date: NaiveDate,
    pub regency_code: String,
    pub magnitude_band: String,
    pub deaths: u64,
    pub injured: u64,
    pub buildings_destroyed: u64,
    pub event_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProvinceDim {
    pub code: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegencyDim {
    pub code: String,
    pub name: String,
    pub province_code: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandDim {
    pub label: String,
    pub lower: f64,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadStats {
    pub inserted: usize,
    pub updated: usize,
    pub dimensions_upserted: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Warehouse {
    provinces: BTreeMap<String, ProvinceDim>,
    regencies: BTreeMap<String, RegencyDim>,
    bands: BTreeMap<String, BandDim>,
    /// quake id -> regency code -> fact
    facts: BTreeMap<String, BTreeMap<String, FactRow>>,
    watermarks: BTreeMap<String, SourceWatermark>,
}

impl Warehouse {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn facts(&self) -> impl Iterator<Item = &FactRow> {
        self.facts.values().flat_map(|m| m.values())
    }

    pub fn fact_count(&self) -> usize {
        self.facts.values().map(BTreeMap::len).sum()
    }

    pub fn fact(&self, quake_id: &str, regency_code: &str) -> Option<&FactRow> {
        self.facts.get(quake_id)?.get(regency_code)
    }

    pub fn regency(&self, code: &str) -> Option<&RegencyDim> {
        self.regencies.get(code)
    }

    pub fn province(&self, code: &str) -> Option<&ProvinceDim> {
        self.provinces.get(code)
    }

    pub fn band(&self, label: &str) -> Option<&BandDim> {
        self.bands.get(label)
    }

    /// The watermark for a source, or the origin mark if it was never loaded.
    pub fn watermark(&self, source_id: &str) -> SourceWatermark {
        self.watermarks
            .get(source_id)
            .cloned()
            .unwrap_or_else(|| SourceWatermark::origin(source_id))
    }

    pub fn watermarks(&self) -> impl Iterator<Item = &SourceWatermark> {
        self.watermarks.values()
    }

    /// Upserts a batch: dimensions first, then facts keyed by
    /// (quake, regency), then advances the source watermark. The batch is
    /// checked in full before anything is written, so a rejected batch
    /// leaves the store untouched.
    pub fn load_facts(&mut self, batch: &ExtractionBatch) -> Result<LoadStats, WarehouseError> {
        let mut new_provinces = BTreeSet::new();
        let mut new_regencies = BTreeMap::new();
        let mut new_bands = BTreeSet::new();
        for row in &batch.rows {
            match &row.record {
                SourceRecord::Province(p) => {
                    new_provinces.insert(p.code.as_str());
                }
                SourceRecord::Regency(r) => {
                    new_regencies.insert(r.code.as_str(), r.province_code.as_str());
                }
                SourceRecord::Band(b) => {
                    new_bands.insert(b.label.as_str());
                }
                SourceRecord::Fact(_) => {}
            }
        }
        let province_known =
            |code: &str| self.provinces.contains_key(code) || new_provinces.contains(code);
        for (code, province) in &new_regencies {
            if !province_known(province) {
                return Err(WarehouseError::ConflictingDimension(format!(
                    "regency {code} references unknown province {province}"
                )));
            }
        }
        for row in &batch.rows {
            if let SourceRecord::Fact(f) = &row.record {
                if !self.regencies.contains_key(&f.regency_code)
                    && !new_regencies.contains_key(f.regency_code.as_str())
                {
                    return Err(WarehouseError::ConflictingDimension(format!(
                        "fact {} references unknown regency {}",
                        f.quake_id, f.regency_code
                    )));
                }
                if !self.bands.contains_key(&f.magnitude_band)
                    && !new_bands.contains(f.magnitude_band.as_str())
                {
                    return Err(WarehouseError::ConflictingDimension(format!(
                        "fact {} references unknown magnitude band {}",
                        f.quake_id, f.magnitude_band
                    )));
                }
            }
        }

        let mut stats = LoadStats::default();
        for row in &batch.rows {
            match &row.record {
                SourceRecord::Province(p) => {
                    self.provinces.insert(p.code.clone(), p.clone());
                    stats.dimensions_upserted += 1;
                }
                SourceRecord::Regency(r) => {
                    self.regencies.insert(r.code.clone(), r.clone());
                    stats.dimensions_upserted += 1;
                }
                SourceRecord::Band(b) => {
                    self.bands.insert(b.label.clone(), b.clone());
                    stats.dimensions_upserted += 1;
                }
                SourceRecord::Fact(_) => {}
            }
        }
        for row in &batch.rows {
            if let SourceRecord::Fact(f) = &row.record {
                let previous = self
                    .facts
                    .entry(f.quake_id.clone())
                    .or_default()
                    .insert(f.regency_code.clone(), f.clone());
                if previous.is_some() {
                    stats.updated += 1;
                } else {
                    stats.inserted += 1;
                }
            }
        }
        self.watermarks
            .entry(batch.source_id.clone())
            .or_insert_with(|| SourceWatermark::origin(&batch.source_id))
            .advance(batch.max_timestamp);
        Ok(stats)
    }

    /// SHA-256 over the canonical JSON encoding of the whole store.
    pub fn state_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("warehouse serialises");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Splits `total` across `weights` in proportion, exactly: floors first,
/// then the leftover units go to the largest remainders (earlier index
/// wins ties). All-zero weights split evenly.
pub fn apportion(total: u64, weights: &[u64]) -> Vec<u64> {
    if weights.is_empty() {
        return Vec::new();
    }
    let weights: Vec<u128> = if weights.iter().all(|&w| w == 0) {
        vec![1; weights.len()]
    } else {
        weights.iter().map(|&w| w as u128).collect()
    };
    let sum: u128 = weights.iter().sum();
    let total = total as u128;
    let mut shares: Vec<u128> = weights.iter().map(|w| total * w / sum).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = total * weights[a] % sum;
        let rb = total * weights[b] % sum;
        rb.cmp(&ra).then(a.cmp(&b))
    });
    let leftover = total - shares.iter().sum::<u128>();
    for &i in order.iter().take(leftover as usize) {
        shares[i] += 1;
    }
    shares.into_iter().map(|s| s as u64).collect()
}

/// Base-grain facts for one historical quake: one row per affected regency,
/// with deaths, injured and destroyed buildings split by regency population.
pub fn facts_from_historical(
    quake: &HistoricalQuake,
    reference: &ReferenceDataset,
) -> Result<Vec<FactRow>, WarehouseError> {
    let mut codes: Vec<&str> = Vec::new();
    for code in &quake.event.affected_regencies {
        if !codes.contains(&code.as_str()) {
            codes.push(code);
        }
    }
    if codes.is_empty() {
        return Err(WarehouseError::UnmappedQuake(quake.id().to_owned()));
    }
    let mut weights = Vec::with_capacity(codes.len());
    for code in &codes {
        let regency = reference.regency(code).ok_or_else(|| {
            WarehouseError::ConflictingDimension(format!(
                "quake {} references unknown regency {code}",
                quake.id()
            ))
        })?;
        weights.push(regency.population);
    }
    let deaths = apportion(quake.deaths, &weights);
    let injured = apportion(quake.injured, &weights);
    let buildings = apportion(quake.buildings_destroyed, &weights);
    let band = reference
        .bands()
        .band_for(quake.event.magnitude)
        .label
        .clone();
    Ok(codes
        .iter()
        .enumerate()
        .map(|(i, code)| FactRow {
            quake_id: quake.id().to_owned(),
            date: quake.event.date,
            regency_code: (*code).to_owned(),
            magnitude_band: band.clone(),
            deaths: deaths[i],
            injured: injured[i],
            buildings_destroyed: buildings[i],
            event_count: 1,
        })
        .collect())
}

/// Dimension upserts for the province, regency and band tables.
pub fn dimension_records(reference: &ReferenceDataset) -> Vec<SourceRecord> {
    let provinces = reference.provinces.iter().map(|p| {
        SourceRecord::Province(ProvinceDim {
            code: p.code.clone(),
            name: p.name.clone(),
        })
    });
    let regencies = reference.regencies.iter().map(|r| {
        SourceRecord::Regency(RegencyDim {
            code: r.code.clone(),
            name: r.name.clone(),
            province_code: r.parent_code.clone(),
        })
    });
    provinces
        .chain(regencies)
        .chain(band_records(reference.bands()))
        .collect()
}

pub fn band_records(bands: &MagnitudeBands) -> Vec<SourceRecord> {
    bands
        .as_slice()
        .iter()
        .map(|b| {
            SourceRecord::Band(BandDim {
                label: b.label.clone(),
                lower: b.lower,
                upper: b.upper,
            })
        })
        .collect()
}
