//! Deferred extraction by modification timestamp.
//!
//! A source keeps every row with the time it was last modified. Extraction
//! takes the rows strictly newer than the source's watermark; a row stamped
//! exactly at the watermark already went out with the previous batch.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{BandDim, FactRow, ProvinceDim, RegencyDim};
use crate::ingest::SourceWatermark;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "table", rename_all = "snake_case")]
pub enum SourceRecord {
    Province(ProvinceDim),
    Regency(RegencyDim),
    Band(BandDim),
    Fact(FactRow),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestampedRow {
    pub modified_at: DateTime<Utc>,
    pub record: SourceRecord,
}

/// A transactional source table: rows in arrival order with their
/// modification times.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SourceTable {
    pub source_id: String,
    pub rows: Vec<TimestampedRow>,
}

impl SourceTable {
    pub fn new(source_id: impl Into<String>) -> Self {
        SourceTable {
            source_id: source_id.into(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, modified_at: DateTime<Utc>, record: SourceRecord) {
        self.rows.push(TimestampedRow {
            modified_at,
            record,
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionBatch {
    pub source_id: String,
    pub rows: Vec<TimestampedRow>,
    /// Latest modification time in the batch, or the old watermark when the
    /// batch is empty.
    pub max_timestamp: DateTime<Utc>,
}

impl ExtractionBatch {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn fact_count(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| matches!(r.record, SourceRecord::Fact(_)))
            .count()
    }
}

pub fn extract_deferred(source: &SourceTable, watermark: &SourceWatermark) -> ExtractionBatch {
    let rows: Vec<TimestampedRow> = source
        .rows
        .iter()
        .filter(|r| r.modified_at > watermark.last_extracted_at)
        .cloned()
        .collect();
    let max_timestamp = rows
        .iter()
        .map(|r| r.modified_at)
        .max()
        .unwrap_or(watermark.last_extracted_at);
    ExtractionBatch {
        source_id: source.source_id.clone(),
        rows,
        max_timestamp,
    }
}
