//! The bundled seed dataset: five provinces with ten regencies and the five
//! reference quakes (Aceh 2004, Nias 2005, Yogyakarta 2006, Sichuan 2008,
//! West Java 2009).
//!
//! Death tolls are the commonly cited figures. Injured counts, destroyed
//! buildings, exposed populations and all medic counts are planning
//! configuration, not ground truth.

use crate::ingest::{read_historical_catalog, read_reference_data, ReferenceDataset};
use crate::model::HistoricalQuake;

pub const PROVINCES_CSV: &str = include_str!("../data/seed/provinces.csv");
pub const REGENCIES_CSV: &str = include_str!("../data/seed/regencies.csv");
pub const CONFIG_TOML: &str = include_str!("../data/seed/config.toml");
pub const CATALOG_CSV: &str = include_str!("../data/seed/historical_quakes.csv");

pub fn reference() -> ReferenceDataset {
    read_reference_data(
        PROVINCES_CSV.as_bytes(),
        REGENCIES_CSV.as_bytes(),
        CONFIG_TOML,
    )
    .expect("bundled reference data is valid")
}

pub fn catalog() -> Vec<HistoricalQuake> {
    let load =
        read_historical_catalog(CATALOG_CSV.as_bytes()).expect("bundled catalog is readable");
    assert!(load.errors.is_empty(), "bundled catalog rows are valid");
    load.quakes
}
