//! Loading external inputs: the administrative reference tables, the
//! operating configuration, the historical quake catalog and the
//! line-delimited early-warning feed.
//!
//! Reference data is cross-validated and rejected as a whole when broken,
//! since every downstream computation keys off it. The catalog and the
//! warning feed are loaded row by row: a bad row is reported with its line
//! number and skipped, and the rest of the input still goes through.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufRead, Read};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::estimator::ResourceCoefficients;
use crate::model::{
    describe_violations, parse_timestamp, validate_quake_event, FieldViolation, HistoricalQuake,
    MagnitudeBands, RawQuakeEvent, Region, RegionKind, Warning,
};

pub const PROVINCES_FILE: &str = "provinces.csv";
pub const REGENCIES_FILE: &str = "regencies.csv";
pub const CONFIG_FILE: &str = "config.toml";

pub const PROVINCE_HEADER: &[&str] = &["code", "name", "centroid_lat", "centroid_lon"];
pub const REGENCY_HEADER: &[&str] = &[
    "code",
    "province_code",
    "name",
    "population",
    "medics_available",
    "medics_pledgeable",
    "centroid_lat",
    "centroid_lon",
];
pub const CATALOG_HEADER: &[&str] = &[
    "id",
    "date",
    "time",
    "latitude",
    "longitude",
    "magnitude",
    "region_label",
    "deaths",
    "injured",
    "buildings_destroyed",
    "exposed_population",
];

/// Default source label for warnings that do not name their origin.
pub const DEFAULT_WARNING_SOURCE: &str = "BMG";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("BadHeader: {file} expected `{expected}`, found `{found}`")]
    BadHeader {
        file: String,
        expected: String,
        found: String,
    },
    #[error("OrphanRegency: regency {regency} references missing province {parent}")]
    OrphanRegency { regency: String, parent: String },
    #[error("DuplicateCode: {0}")]
    DuplicateCode(String),
    #[error("InvalidRow: {file} line {line}: {reason}")]
    InvalidRow {
        file: String,
        line: usize,
        reason: String,
    },
    #[error("InvalidConfig: {0}")]
    Config(String),
}

impl IngestError {
    fn io(path: &Path, source: io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Operating parameters: the national persons-per-medic standard, the
/// analog count, banding and resource coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DssConfig {
    /// Maximum citizens handled per medic during a disaster.
    pub sn: u64,
    /// Number of historical analogs used for casualty prediction.
    pub analog_k: usize,
    /// Minutes an Assessed-with-shortage escalation may wait for SOS-1
    /// approval before it is flagged overdue.
    #[serde(default = "default_sla_minutes")]
    pub sos1_sla_minutes: i64,
    pub magnitude_bands: MagnitudeBands,
    /// Radius per magnitude band used to derive an affected area when a
    /// warning names no regencies.
    #[serde(default)]
    pub fallback_radius_km: BTreeMap<String, f64>,
    pub coefficients: ResourceCoefficients,
}

fn default_sla_minutes() -> i64 {
    60
}

impl DssConfig {
    pub fn check(&self) -> Result<(), IngestError> {
        if self.sn < 1 {
            return Err(IngestError::Config("sn must be at least 1".into()));
        }
        if self.analog_k < 1 {
            return Err(IngestError::Config("analog_k must be at least 1".into()));
        }
        if self.sos1_sla_minutes < 0 {
            return Err(IngestError::Config("sos1_sla_minutes must be >= 0".into()));
        }
        for (label, radius) in &self.fallback_radius_km {
            if !self.magnitude_bands.contains_label(label) {
                return Err(IngestError::Config(format!(
                    "fallback_radius_km names unknown band {label}"
                )));
            }
            if !(radius.is_finite() && *radius >= 0.0) {
                return Err(IngestError::Config(format!(
                    "fallback radius for {label} must be a non-negative number"
                )));
            }
        }
        self.coefficients
            .check(&self.magnitude_bands)
            .map_err(|e| IngestError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, IngestError> {
        let cfg: DssConfig =
            toml::from_str(text).map_err(|e| IngestError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises to TOML")
    }
}

/// The province/regency hierarchy plus the operating configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDataset {
    pub provinces: Vec<Region>,
    pub regencies: Vec<Region>,
    pub config: DssConfig,
}

impl ReferenceDataset {
    /// Cross-validates the tables: unique codes across both levels, every
    /// regency under an existing province, per-row invariants.
    pub fn new(
        provinces: Vec<Region>,
        regencies: Vec<Region>,
        config: DssConfig,
    ) -> Result<Self, IngestError> {
        config.check()?;
        let mut seen = BTreeSet::new();
        for (file, region) in provinces
            .iter()
            .map(|r| (PROVINCES_FILE, r))
            .chain(regencies.iter().map(|r| (REGENCIES_FILE, r)))
        {
            if !seen.insert(region.code.as_str()) {
                return Err(IngestError::DuplicateCode(region.code.clone()));
            }
            region.check().map_err(|reason| IngestError::InvalidRow {
                file: file.into(),
                line: 0,
                reason,
            })?;
        }
        if let Some(p) = provinces.iter().find(|p| p.kind != RegionKind::Province) {
            return Err(IngestError::Config(format!("{} is not a province", p.code)));
        }
        let province_codes: BTreeSet<&str> = provinces.iter().map(|p| p.code.as_str()).collect();
        for r in &regencies {
            if r.kind != RegionKind::Regency {
                return Err(IngestError::Config(format!("{} is not a regency", r.code)));
            }
            if !province_codes.contains(r.parent_code.as_str()) {
                return Err(IngestError::OrphanRegency {
                    regency: r.code.clone(),
                    parent: r.parent_code.clone(),
                });
            }
        }
        Ok(ReferenceDataset {
            provinces,
            regencies,
            config,
        })
    }

    pub fn sn(&self) -> u64 {
        self.config.sn
    }

    pub fn coefficients(&self) -> &ResourceCoefficients {
        &self.config.coefficients
    }

    pub fn bands(&self) -> &MagnitudeBands {
        &self.config.magnitude_bands
    }

    pub fn regency(&self, code: &str) -> Option<&Region> {
        self.regencies.iter().find(|r| r.code == code)
    }

    pub fn province(&self, code: &str) -> Option<&Region> {
        self.provinces.iter().find(|r| r.code == code)
    }

    pub fn region(&self, code: &str) -> Option<&Region> {
        self.regency(code).or_else(|| self.province(code))
    }

    /// All regions, provinces first, in file order.
    pub fn regions(&self) -> impl Iterator<Item = &Region> {
        self.provinces.iter().chain(self.regencies.iter())
    }

    pub fn len(&self) -> usize {
        self.provinces.len() + self.regencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-source high-water mark for deferred extraction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceWatermark {
    pub source_id: String,
    pub last_extracted_at: DateTime<Utc>,
}

impl SourceWatermark {
    pub fn new(source_id: impl Into<String>, at: DateTime<Utc>) -> Self {
        SourceWatermark {
            source_id: source_id.into(),
            last_extracted_at: at,
        }
    }

    /// A watermark older than any row: the first extraction takes everything.
    pub fn origin(source_id: impl Into<String>) -> Self {
        SourceWatermark::new(source_id, DateTime::<Utc>::MIN_UTC)
    }

    /// Moves the mark forward; never backwards.
    pub fn advance(&mut self, to: DateTime<Utc>) {
        if to > self.last_extracted_at {
            self.last_extracted_at = to;
        }
    }
}

/// A diagnostic for one rejected input line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeedParse {
    pub warnings: Vec<Warning>,
    pub errors: Vec<LineError>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CatalogLoad {
    pub quakes: Vec<HistoricalQuake>,
    pub errors: Vec<LineError>,
}

// Feed values may arrive as JSON strings or numbers; both are read as text
// and validated by the same path as CSV input.
fn scalar_text(obj: &Map<String, Value>, key: &str) -> Result<Option<String>, String> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(Value::Number(n)) => Ok(Some(n.to_string())),
        Some(Value::Array(items)) if key == "affected_regencies" => {
            let codes: Option<Vec<&str>> = items.iter().map(Value::as_str).collect();
            codes
                .map(|c| Some(c.join(",")))
                .ok_or_else(|| format!("{key}: expected a list of codes"))
        }
        Some(_) => Err(format!("{key}: expected a string or number")),
    }
}

/// Parses one feed record (a single-line JSON object) into a warning.
pub fn parse_warning_record(line: &str) -> Result<Warning, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("not a JSON record: {e}"))?;
    let obj = value
        .as_object()
        .ok_or_else(|| "record is not an object".to_string())?;
    let field = |k: &str| scalar_text(obj, k);
    let raw = RawQuakeEvent {
        id: field("id")?,
        date: field("date")?,
        time: field("time")?,
        latitude: field("latitude")?,
        longitude: field("longitude")?,
        magnitude: field("magnitude")?,
        epicenter_desc: field("epicenter_desc")?,
        depth_km: field("depth_km")?,
        affected_regencies: field("affected_regencies")?,
    };
    let mut violations = Vec::new();
    let issued_at = match field("issued_at")? {
        None => {
            violations.push(FieldViolation::MissingField("issued_at"));
            None
        }
        Some(text) => {
            let ts = parse_timestamp(&text);
            if ts.is_none() {
                violations.push(FieldViolation::MalformedTimestamp("issued_at"));
            }
            ts
        }
    };
    let event = match validate_quake_event(&raw) {
        Ok(ev) => Some(ev),
        Err(mut errs) => {
            violations.append(&mut errs);
            None
        }
    };
    match (event, issued_at) {
        (Some(event), Some(issued_at)) if violations.is_empty() => Ok(Warning {
            event,
            issued_at,
            source: field("source")?.unwrap_or_else(|| DEFAULT_WARNING_SOURCE.to_string()),
            risk_note: field("risk_note")?.unwrap_or_default(),
        }),
        _ => Err(describe_violations(&violations)),
    }
}

/// Field-level violations for a feed record, for callers that need the
/// structured list rather than a message (the HTTP surface).
pub fn warning_record_violations(line: &str) -> Vec<FieldViolation> {
    let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(line) else {
        return Vec::new();
    };
    let text = |k: &str| scalar_text(&obj, k).ok().flatten();
    let raw = RawQuakeEvent {
        id: text("id"),
        date: text("date"),
        time: text("time"),
        latitude: text("latitude"),
        longitude: text("longitude"),
        magnitude: text("magnitude"),
        epicenter_desc: text("epicenter_desc"),
        depth_km: text("depth_km"),
        affected_regencies: text("affected_regencies"),
    };
    let mut out = Vec::new();
    match text("issued_at") {
        None => out.push(FieldViolation::MissingField("issued_at")),
        Some(t) if parse_timestamp(&t).is_none() => {
            out.push(FieldViolation::MalformedTimestamp("issued_at"))
        }
        Some(_) => {}
    }
    if let Err(mut errs) = validate_quake_event(&raw) {
        out.append(&mut errs);
    }
    out
}

/// Renders a warning as one feed line.
pub fn warning_to_record(w: &Warning) -> String {
    let ev = &w.event;
    let mut obj = Map::new();
    obj.insert("id".into(), Value::from(ev.id.clone()));
    obj.insert(
        "issued_at".into(),
        Value::from(
            w.issued_at
                .to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true),
        ),
    );
    obj.insert(
        "date".into(),
        Value::from(ev.date.format("%Y-%m-%d").to_string()),
    );
    obj.insert(
        "time".into(),
        Value::from(ev.time.format("%H:%M:%S%.f").to_string()),
    );
    obj.insert("latitude".into(), Value::from(ev.latitude));
    obj.insert("longitude".into(), Value::from(ev.longitude));
    obj.insert("magnitude".into(), Value::from(ev.magnitude));
    obj.insert(
        "depth_km".into(),
        ev.depth_km.map(Value::from).unwrap_or(Value::Null),
    );
    obj.insert(
        "epicenter_desc".into(),
        Value::from(ev.epicenter_desc.clone()),
    );
    obj.insert(
        "affected_regencies".into(),
        Value::from(ev.affected_regencies.join(",")),
    );
    obj.insert("risk_note".into(), Value::from(w.risk_note.clone()));
    obj.insert("source".into(), Value::from(w.source.clone()));
    Value::Object(obj).to_string()
}

/// Parses a line-delimited warning feed. Every line is either a warning or
/// a diagnostic; only an unreadable stream fails the whole call.
pub fn parse_warning_feed(stream: impl BufRead) -> io::Result<FeedParse> {
    let mut out = FeedParse::default();
    for (idx, line) in stream.lines().enumerate() {
        let line = line?;
        let number = idx + 1;
        if line.trim().is_empty() {
            out.errors.push(LineError {
                line: number,
                reason: "empty record".into(),
            });
            continue;
        }
        match parse_warning_record(&line) {
            Ok(w) => out.warnings.push(w),
            Err(reason) => out.errors.push(LineError {
                line: number,
                reason,
            }),
        }
    }
    Ok(out)
}

fn csv_reader(input: impl Read) -> csv::Reader<impl Read> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn check_header(
    reader: &mut csv::Reader<impl Read>,
    file: &str,
    expected: &[&str],
) -> Result<(), IngestError> {
    let found = reader.headers().map_err(|e| IngestError::InvalidRow {
        file: file.into(),
        line: 1,
        reason: e.to_string(),
    })?;
    if found.iter().ne(expected.iter().copied()) {
        return Err(IngestError::BadHeader {
            file: file.into(),
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

fn record_line(rec: &csv::StringRecord, fallback: usize) -> usize {
    rec.position().map_or(fallback, |p| p.line() as usize)
}

fn parse_field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    idx: usize,
    name: &str,
) -> Result<T, String> {
    let text = rec.get(idx).unwrap_or("");
    text.parse()
        .map_err(|_| format!("{name}: cannot parse `{text}`"))
}

/// A data line number with its record or a read error.
type NumberedRecord = (usize, Result<csv::StringRecord, String>);

fn rows(input: impl Read, file: &str, header: &[&str]) -> Result<Vec<NumberedRecord>, IngestError> {
    let mut reader = csv_reader(input);
    check_header(&mut reader, file, header)?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let fallback = i + 2;
        let row = match rec {
            Ok(rec) if rec.len() != header.len() => (
                record_line(&rec, fallback),
                Err(format!(
                    "expected {} fields, found {}",
                    header.len(),
                    rec.len()
                )),
            ),
            Ok(rec) => (record_line(&rec, fallback), Ok(rec)),
            Err(e) => (
                e.position().map_or(fallback, |p| p.line() as usize),
                Err(e.to_string()),
            ),
        };
        out.push(row);
    }
    Ok(out)
}

fn parse_province(rec: &csv::StringRecord) -> Result<Region, String> {
    Ok(Region {
        code: rec[0].to_owned(),
        name: rec[1].to_owned(),
        kind: RegionKind::Province,
        parent_code: String::new(),
        population: 0,
        medics_available: 0,
        medics_pledgeable: 0,
        centroid_lat: parse_field(rec, 2, "centroid_lat")?,
        centroid_lon: parse_field(rec, 3, "centroid_lon")?,
    })
}

fn parse_regency(rec: &csv::StringRecord) -> Result<Region, String> {
    Ok(Region {
        code: rec[0].to_owned(),
        parent_code: rec[1].to_owned(),
        name: rec[2].to_owned(),
        kind: RegionKind::Regency,
        population: parse_field(rec, 3, "population")?,
        medics_available: parse_field(rec, 4, "medics_available")?,
        medics_pledgeable: parse_field(rec, 5, "medics_pledgeable")?,
        centroid_lat: parse_field(rec, 6, "centroid_lat")?,
        centroid_lon: parse_field(rec, 7, "centroid_lon")?,
    })
}

fn read_regions(
    input: impl Read,
    file: &str,
    header: &[&str],
    parse: fn(&csv::StringRecord) -> Result<Region, String>,
) -> Result<Vec<Region>, IngestError> {
    let mut out = Vec::new();
    for (line, row) in rows(input, file, header)? {
        let region = row.and_then(|rec| {
            let region = parse(&rec)?;
            region.check()?;
            Ok(region)
        });
        match region {
            Ok(r) => out.push(r),
            Err(reason) => {
                return Err(IngestError::InvalidRow {
                    file: file.into(),
                    line,
                    reason,
                })
            }
        }
    }
    Ok(out)
}

/// Builds a dataset from in-memory readers.
pub fn read_reference_data(
    provinces: impl Read,
    regencies: impl Read,
    config_toml: &str,
) -> Result<ReferenceDataset, IngestError> {
    let provinces = read_regions(provinces, PROVINCES_FILE, PROVINCE_HEADER, parse_province)?;
    let regencies = read_regions(regencies, REGENCIES_FILE, REGENCY_HEADER, parse_regency)?;
    let config = DssConfig::from_toml(config_toml)?;
    ReferenceDataset::new(provinces, regencies, config)
}

fn open(path: &Path) -> Result<fs::File, IngestError> {
    fs::File::open(path).map_err(|e| IngestError::io(path, e))
}

pub fn load_reference_data(
    province_path: &Path,
    regency_path: &Path,
    config_path: &Path,
) -> Result<ReferenceDataset, IngestError> {
    let config = fs::read_to_string(config_path).map_err(|e| IngestError::io(config_path, e))?;
    read_reference_data(open(province_path)?, open(regency_path)?, &config)
}

/// Loads `provinces.csv`, `regencies.csv` and `config.toml` from one directory.
pub fn load_reference_dir(dir: &Path) -> Result<ReferenceDataset, IngestError> {
    load_reference_data(
        &dir.join(PROVINCES_FILE),
        &dir.join(REGENCIES_FILE),
        &dir.join(CONFIG_FILE),
    )
}

/// Writes a dataset in the same three-file layout `load_reference_dir` reads.
pub fn save_reference_dir(ds: &ReferenceDataset, dir: &Path) -> Result<(), IngestError> {
    fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
    let write_csv = |name: &str, header: &[&str], rows: Vec<Vec<String>>| {
        let path = dir.join(name);
        let mut w = csv::Writer::from_path(&path)
            .map_err(|e| IngestError::io(&path, io::Error::other(e)))?;
        let io_err = |e: csv::Error| IngestError::io(&path, io::Error::other(e));
        w.write_record(header).map_err(io_err)?;
        for row in rows {
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush().map_err(|e| IngestError::io(&path, e))
    };
    write_csv(
        PROVINCES_FILE,
        PROVINCE_HEADER,
        ds.provinces
            .iter()
            .map(|p| {
                vec![
                    p.code.clone(),
                    p.name.clone(),
                    p.centroid_lat.to_string(),
                    p.centroid_lon.to_string(),
                ]
            })
            .collect(),
    )?;
    write_csv(
        REGENCIES_FILE,
        REGENCY_HEADER,
        ds.regencies
            .iter()
            .map(|r| {
                vec![
                    r.code.clone(),
                    r.parent_code.clone(),
                    r.name.clone(),
                    r.population.to_string(),
                    r.medics_available.to_string(),
                    r.medics_pledgeable.to_string(),
                    r.centroid_lat.to_string(),
                    r.centroid_lon.to_string(),
                ]
            })
            .collect(),
    )?;
    let path = dir.join(CONFIG_FILE);
    fs::write(&path, ds.config.to_toml()).map_err(|e| IngestError::io(&path, e))
}

fn parse_catalog_row(rec: &csv::StringRecord) -> Result<HistoricalQuake, String> {
    let raw = RawQuakeEvent {
        id: Some(rec[0].to_owned()),
        date: Some(rec[1].to_owned()),
        time: Some(rec[2].to_owned()),
        latitude: Some(rec[3].to_owned()),
        longitude: Some(rec[4].to_owned()),
        magnitude: Some(rec[5].to_owned()),
        epicenter_desc: None,
        depth_km: None,
        affected_regencies: Some(rec[6].to_owned()),
    };
    let event = validate_quake_event(&raw).map_err(|v| describe_violations(&v))?;
    HistoricalQuake::new(
        event,
        &rec[6],
        parse_field(rec, 7, "deaths")?,
        parse_field(rec, 8, "injured")?,
        parse_field(rec, 9, "buildings_destroyed")?,
        parse_field(rec, 10, "exposed_population")?,
    )
    .map_err(|e| e.to_string())
}

/// Reads a historical catalog. `region_label` carries the affected regency
/// codes, `;`-separated. Rows with duplicate ids after the first are
/// rejected.
pub fn read_historical_catalog(input: impl Read) -> Result<CatalogLoad, IngestError> {
    let mut out = CatalogLoad::default();
    let mut ids = BTreeSet::new();
    for (line, row) in rows(input, "historical_quakes.csv", CATALOG_HEADER)? {
        let quake = row.and_then(|rec| parse_catalog_row(&rec));
        match quake {
            Ok(q) if !ids.insert(q.id().to_owned()) => out.errors.push(LineError {
                line,
                reason: format!("duplicate id {}", q.id()),
            }),
            Ok(q) => out.quakes.push(q),
            Err(reason) => out.errors.push(LineError { line, reason }),
        }
    }
    Ok(out)
}

pub fn load_historical_catalog(path: &Path) -> Result<CatalogLoad, IngestError> {
    read_historical_catalog(open(path)?)
}

pub fn write_historical_catalog(
    quakes: &[HistoricalQuake],
    out: impl io::Write,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CATALOG_HEADER)?;
    for q in quakes {
        let ev = &q.event;
        w.write_record([
            ev.id.clone(),
            ev.date.format("%Y-%m-%d").to_string(),
            ev.time.format("%H:%M:%S").to_string(),
            ev.latitude.to_string(),
            ev.longitude.to_string(),
            ev.magnitude.to_string(),
            q.region_label.clone(),
            q.deaths.to_string(),
            q.injured.to_string(),
            q.buildings_destroyed.to_string(),
            q.exposed_population.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
