//! Domain values shared by every part of the engine: quake events, early
//! warnings, administrative regions, the historical catalog and the
//! magnitude banding used as an analytical dimension.
//!
//! Everything here is a plain value. Validation happens once at the edge
//! (`validate_quake_event`, `HistoricalQuake::new`, `Region::check`) so the
//! rest of the crate can assume well-formed inputs.

use std::fmt;

use chrono::{DateTime, NaiveDate, NaiveTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A seismic event, either observed (historical catalog) or predicted
/// (carried by a [`Warning`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuakeEvent {
    pub id: String,
    pub date: NaiveDate,
    pub time: NaiveTime,
    pub latitude: f64,
    pub longitude: f64,
    /// Richter magnitude in [0, 10].
    pub magnitude: f64,
    pub epicenter_desc: String,
    /// `None` when the source did not report a depth.
    pub depth_km: Option<f64>,
    pub affected_regencies: Vec<String>,
}

/// An unvalidated event record, as text fields straight from a CSV row or a
/// feed line. `affected_regencies` is the comma-joined code list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawQuakeEvent {
    pub id: Option<String>,
    pub date: Option<String>,
    pub time: Option<String>,
    pub latitude: Option<String>,
    pub longitude: Option<String>,
    pub magnitude: Option<String>,
    pub epicenter_desc: Option<String>,
    pub depth_km: Option<String>,
    pub affected_regencies: Option<String>,
}

impl From<&QuakeEvent> for RawQuakeEvent {
    fn from(ev: &QuakeEvent) -> Self {
        RawQuakeEvent {
            id: Some(ev.id.clone()),
            date: Some(ev.date.format("%Y-%m-%d").to_string()),
            time: Some(ev.time.format("%H:%M:%S%.f").to_string()),
            latitude: Some(ev.latitude.to_string()),
            longitude: Some(ev.longitude.to_string()),
            magnitude: Some(ev.magnitude.to_string()),
            epicenter_desc: Some(ev.epicenter_desc.clone()),
            depth_km: ev.depth_km.map(|d| d.to_string()),
            affected_regencies: Some(ev.affected_regencies.join(",")),
        }
    }
}

/// A single field-level problem found while validating a record.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "kind", content = "field")]
pub enum FieldViolation {
    #[error("MissingField({0})")]
    MissingField(&'static str),
    #[error("OutOfRange({0})")]
    OutOfRange(&'static str),
    #[error("InvalidNumber({0})")]
    InvalidNumber(&'static str),
    #[error("MalformedTimestamp({0})")]
    MalformedTimestamp(&'static str),
}

impl FieldViolation {
    pub fn field(&self) -> &'static str {
        match self {
            FieldViolation::MissingField(f)
            | FieldViolation::OutOfRange(f)
            | FieldViolation::InvalidNumber(f)
            | FieldViolation::MalformedTimestamp(f) => f,
        }
    }
}

/// Renders a violation list as `A; B; C` for single-line diagnostics.
pub fn describe_violations(violations: &[FieldViolation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

fn present(value: &Option<String>) -> Option<&str> {
    value.as_deref().map(str::trim).filter(|v| !v.is_empty())
}

fn required<'a>(
    value: &'a Option<String>,
    field: &'static str,
    out: &mut Vec<FieldViolation>,
) -> Option<&'a str> {
    let v = present(value);
    if v.is_none() {
        out.push(FieldViolation::MissingField(field));
    }
    v
}

fn number_in(
    text: Option<&str>,
    field: &'static str,
    lo: f64,
    hi: f64,
    out: &mut Vec<FieldViolation>,
) -> Option<f64> {
    let text = text?;
    match text.parse::<f64>() {
        Ok(v) if !v.is_finite() => {
            out.push(FieldViolation::InvalidNumber(field));
            None
        }
        Ok(v) if v < lo || v > hi => {
            out.push(FieldViolation::OutOfRange(field));
            None
        }
        Ok(v) => Some(v),
        Err(_) => {
            out.push(FieldViolation::InvalidNumber(field));
            None
        }
    }
}

pub fn parse_date(text: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(text.trim(), "%Y-%m-%d").ok()
}

pub fn parse_time(text: &str) -> Option<NaiveTime> {
    let text = text.trim();
    NaiveTime::parse_from_str(text, "%H:%M:%S%.f")
        .or_else(|_| NaiveTime::parse_from_str(text, "%H:%M"))
        .ok()
}

/// Parses an ISO 8601 / RFC 3339 timestamp and normalises it to UTC.
pub fn parse_timestamp(text: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(text.trim())
        .ok()
        .map(|t| t.with_timezone(&Utc))
}

/// Splits a comma-joined code list, dropping empty entries.
pub fn split_codes(text: &str) -> Vec<String> {
    text.split([',', ';'])
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Validates a raw event record, collecting every violation rather than
/// stopping at the first.
pub fn validate_quake_event(raw: &RawQuakeEvent) -> Result<QuakeEvent, Vec<FieldViolation>> {
    let mut errs = Vec::new();

    let id = required(&raw.id, "id", &mut errs);
    let date = required(&raw.date, "date", &mut errs).and_then(|d| {
        let parsed = parse_date(d);
        if parsed.is_none() {
            errs.push(FieldViolation::MalformedTimestamp("date"));
        }
        parsed
    });
    let time = required(&raw.time, "time", &mut errs).and_then(|t| {
        let parsed = parse_time(t);
        if parsed.is_none() {
            errs.push(FieldViolation::MalformedTimestamp("time"));
        }
        parsed
    });
    let latitude = number_in(
        required(&raw.latitude, "latitude", &mut errs),
        "latitude",
        -90.0,
        90.0,
        &mut errs,
    );
    let longitude = number_in(
        required(&raw.longitude, "longitude", &mut errs),
        "longitude",
        -180.0,
        180.0,
        &mut errs,
    );
    let magnitude = number_in(
        required(&raw.magnitude, "magnitude", &mut errs),
        "magnitude",
        0.0,
        10.0,
        &mut errs,
    );
    let depth_km = number_in(present(&raw.depth_km), "depth_km", 0.0, f64::MAX, &mut errs);

    if !errs.is_empty() {
        return Err(errs);
    }

    Ok(QuakeEvent {
        id: id.unwrap_or_default().to_owned(),
        date: date.unwrap_or_default(),
        time: time.unwrap_or_default(),
        latitude: latitude.unwrap_or_default(),
        longitude: longitude.unwrap_or_default(),
        magnitude: magnitude.unwrap_or_default(),
        epicenter_desc: present(&raw.epicenter_desc).unwrap_or_default().to_owned(),
        depth_km,
        affected_regencies: present(&raw.affected_regencies)
            .map(split_codes)
            .unwrap_or_default(),
    })
}

/// An early-warning prediction from the seismic agency feed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub event: QuakeEvent,
    pub issued_at: DateTime<Utc>,
    pub source: String,
    pub risk_note: String,
}

impl Warning {
    pub fn id(&self) -> &str {
        &self.event.id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Province,
    Regency,
}

/// A province or regency from the national administrative tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub code: String,
    pub name: String,
    pub kind: RegionKind,
    /// Province code for regencies; empty for provinces.
    pub parent_code: String,
    pub population: u64,
    pub medics_available: u64,
    pub medics_pledgeable: u64,
    pub centroid_lat: f64,
    pub centroid_lon: f64,
}

impl Region {
    /// Checks the per-row invariants. Referential checks (parent exists)
    /// need the whole dataset and live in `ingest`.
    pub fn check(&self) -> Result<(), String> {
        if self.code.trim().is_empty() {
            return Err("empty region code".into());
        }
        if self.code.contains(['/', ',', ';', '|']) {
            return Err(format!(
                "{}: region code contains a reserved character",
                self.code
            ));
        }
        if !(-90.0..=90.0).contains(&self.centroid_lat) {
            return Err(format!("{}: centroid_lat out of range", self.code));
        }
        if !(-180.0..=180.0).contains(&self.centroid_lon) {
            return Err(format!("{}: centroid_lon out of range", self.code));
        }
        if self.medics_available > self.population {
            return Err(format!(
                "{}: medics_available {} exceeds population {}",
                self.code, self.medics_available, self.population
            ));
        }
        if self.medics_pledgeable > self.medics_available {
            return Err(format!(
                "{}: medics_pledgeable {} exceeds medics_available {}",
                self.code, self.medics_pledgeable, self.medics_available
            ));
        }
        match self.kind {
            RegionKind::Province if !self.parent_code.is_empty() => {
                Err(format!("{}: province with a parent code", self.code))
            }
            RegionKind::Regency if self.parent_code.is_empty() => {
                Err(format!("{}: regency without a province", self.code))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogRowError {
    #[error("{0}")]
    Field(String),
    #[error("exposed_population must be positive")]
    NoExposure,
    #[error("deaths + injured ({0}) exceeds exposed_population ({1})")]
    CasualtiesExceedExposure(u64, u64),
}

/// A past quake with its observed human and material toll.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoricalQuake {
    pub event: QuakeEvent,
    pub region_label: String,
    pub deaths: u64,
    pub injured: u64,
    pub buildings_destroyed: u64,
    pub exposed_population: u64,
}

impl HistoricalQuake {
    pub fn new(
        event: QuakeEvent,
        region_label: impl Into<String>,
        deaths: u64,
        injured: u64,
        buildings_destroyed: u64,
        exposed_population: u64,
    ) -> Result<Self, CatalogRowError> {
        if exposed_population == 0 {
            return Err(CatalogRowError::NoExposure);
        }
        let casualties = deaths.saturating_add(injured);
        if casualties > exposed_population {
            return Err(CatalogRowError::CasualtiesExceedExposure(
                casualties,
                exposed_population,
            ));
        }
        Ok(HistoricalQuake {
            event,
            region_label: region_label.into(),
            deaths,
            injured,
            buildings_destroyed,
            exposed_population,
        })
    }

    pub fn id(&self) -> &str {
        &self.event.id
    }

    pub fn death_rate(&self) -> f64 {
        self.deaths as f64 / self.exposed_population as f64
    }

    pub fn injury_rate(&self) -> f64 {
        self.injured as f64 / self.exposed_population as f64
    }
}

/// One interval of the magnitude dimension: `lower <= m < upper`, with
/// `upper = None` for the open-ended top band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeBand {
    pub label: String,
    pub lower: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

impl MagnitudeBand {
    pub fn contains(&self, m: f64) -> bool {
        m >= self.lower && self.upper.is_none_or(|u| m < u)
    }
}

impl fmt::Display for MagnitudeBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BandError {
    #[error("no magnitude bands configured")]
    Empty,
    #[error("first band must start at 0, got {0}")]
    NotFromZero(String),
    #[error("band {0} does not start where the previous band ends")]
    Gap(String),
    #[error("band {0} is empty or inverted")]
    Inverted(String),
    #[error("only the last band may be unbounded ({0})")]
    EarlyUnbounded(String),
    #[error("last band {0} must be unbounded")]
    BoundedTop(String),
    #[error("duplicate band label {0}")]
    DuplicateLabel(String),
}

/// An ordered set of bands that partitions `[0, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<MagnitudeBand>", into = "Vec<MagnitudeBand>")]
pub struct MagnitudeBands(Vec<MagnitudeBand>);

impl MagnitudeBands {
    pub fn new(bands: Vec<MagnitudeBand>) -> Result<Self, BandError> {
        let first = bands.first().ok_or(BandError::Empty)?;
        if first.lower != 0.0 {
            return Err(BandError::NotFromZero(first.label.clone()));
        }
        let mut labels = std::collections::BTreeSet::new();
        for (i, band) in bands.iter().enumerate() {
            if !labels.insert(band.label.as_str()) {
                return Err(BandError::DuplicateLabel(band.label.clone()));
            }
            let last = i + 1 == bands.len();
            match band.upper {
                None if !last => return Err(BandError::EarlyUnbounded(band.label.clone())),
                Some(_) if last => return Err(BandError::BoundedTop(band.label.clone())),
                Some(u) if u.is_nan() || u <= band.lower => {
                    return Err(BandError::Inverted(band.label.clone()))
                }
                _ => {}
            }
            if let Some(next) = bands.get(i + 1) {
                if band.upper != Some(next.lower) {
                    return Err(BandError::Gap(next.label.clone()));
                }
            }
        }
        Ok(MagnitudeBands(bands))
    }

    pub fn as_slice(&self) -> &[MagnitudeBand] {
        &self.0
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|b| b.label.as_str())
    }

    pub fn contains_label(&self, label: &str) -> bool {
        self.0.iter().any(|b| b.label == label)
    }

    /// The unique band holding `m`. Negative input falls into the first band.
    pub fn band_for(&self, m: f64) -> &MagnitudeBand {
        self.0.iter().find(|b| b.contains(m)).unwrap_or(&self.0[0])
    }
}

impl Default for MagnitudeBands {
    /// Integer Richter edges, lower-inclusive, with `8.0+` open at the top.
    fn default() -> Self {
        let band = |label: &str, lower: f64, upper: Option<f64>| MagnitudeBand {
            label: label.to_owned(),
            lower,
            upper,
        };
        MagnitudeBands(vec![
            band("0.0\u{2013}4.9", 0.0, Some(5.0)),
            band("5.0\u{2013}5.9", 5.0, Some(6.0)),
            band("6.0\u{2013}6.9", 6.0, Some(7.0)),
            band("7.0\u{2013}7.9", 7.0, Some(8.0)),
            band("8.0+", 8.0, None),
        ])
    }
}

impl TryFrom<Vec<MagnitudeBand>> for MagnitudeBands {
    type Error = BandError;

    fn try_from(bands: Vec<MagnitudeBand>) -> Result<Self, Self::Error> {
        MagnitudeBands::new(bands)
    }
}

impl From<MagnitudeBands> for Vec<MagnitudeBand> {
    fn from(bands: MagnitudeBands) -> Self {
        bands.0
    }
}

pub fn magnitude_band(m: f64, bands: &MagnitudeBands) -> &MagnitudeBand {
    bands.band_for(m)
}
