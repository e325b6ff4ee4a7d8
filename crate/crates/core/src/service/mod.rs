//! The long-running side of the engine: the command log, the in-memory
//! state it folds into, and a transport-independent request handler.

mod api;
mod engine;
mod log;

pub use api::*;
pub use engine::*;
pub use log::*;

use thiserror::Error;

use crate::escalation::EscalationError;
use crate::estimator::EstimatorError;
use crate::ingest::IngestError;
use crate::model::FieldViolation;
use crate::warehouse::WarehouseError;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("UnknownWarning: {0}")]
    UnknownWarning(String),
    #[error("DuplicateWarning: {0} already ingested")]
    DuplicateWarning(String),
    #[error("ValidationError: {message}")]
    Validation {
        message: String,
        violations: Vec<FieldViolation>,
    },
    #[error("BadRequest: {0}")]
    BadRequest(String),
    #[error("Unauthorized: a valid bearer token is required")]
    Unauthorized,
    #[error("NotFound: {0}")]
    NotFound(String),
    #[error("MethodNotAllowed: {0}")]
    MethodNotAllowed(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Escalation(#[from] EscalationError),
    #[error(transparent)]
    Warehouse(#[from] WarehouseError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("LogWrite: {0}")]
    LogWrite(String),
    #[error("CorruptLog: sequence {seq}: {reason}")]
    CorruptLog { seq: u64, reason: String },
}

impl ServiceError {
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::UnknownWarning(_) => "UnknownWarning",
            ServiceError::DuplicateWarning(_) => "DuplicateWarning",
            ServiceError::Validation { .. } => "ValidationError",
            ServiceError::BadRequest(_) => "BadRequest",
            ServiceError::Unauthorized => "Unauthorized",
            ServiceError::NotFound(_) => "NotFound",
            ServiceError::MethodNotAllowed(_) => "MethodNotAllowed",
            ServiceError::Estimator(e) => e.kind(),
            ServiceError::Escalation(e) => e.kind(),
            ServiceError::Warehouse(e) => e.kind(),
            ServiceError::Ingest(_) => "IngestError",
            ServiceError::LogWrite(_) => "LogWrite",
            ServiceError::CorruptLog { .. } => "CorruptLog",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            ServiceError::Validation { .. }
            | ServiceError::BadRequest(_)
            | ServiceError::Warehouse(_) => 400,
            ServiceError::Unauthorized => 401,
            ServiceError::UnknownWarning(_) | ServiceError::NotFound(_) => 404,
            ServiceError::MethodNotAllowed(_) => 405,
            ServiceError::DuplicateWarning(_) => 409,
            ServiceError::Escalation(e) => match e {
                EscalationError::NotEligible(_) | EscalationError::IllegalTransition { .. } => 409,
                EscalationError::MissingApprover(_) => 400,
                EscalationError::InvalidPledge(_) | EscalationError::InvalidSource(_) => 422,
            },
            ServiceError::Estimator(e) => match e {
                EstimatorError::InvalidOverride(_) | EstimatorError::InvalidCoefficient(_) => 400,
                _ => 422,
            },
            ServiceError::Ingest(_) => 422,
            ServiceError::LogWrite(_) | ServiceError::CorruptLog { .. } => 500,
        }
    }
}
