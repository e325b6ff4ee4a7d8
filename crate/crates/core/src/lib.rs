//! Earthquake decision support: reference data and warning ingestion,
//! a casualty and resource estimator, a multidimensional casualty
//! warehouse, and the SOS escalation workflow, driven through an
//! event-sourced service.

pub mod escalation;
pub mod estimator;
pub mod geo;
pub mod ingest;
pub mod model;
pub mod seed;
pub mod service;
pub mod simulate;
pub mod warehouse;
