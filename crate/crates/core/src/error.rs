use thiserror::Error;

use crate::model::Arm;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("ROI undefined for {context}: spend is {spend}")]
    UndefinedRoi { context: String, spend: String },

    #[error("campaign {campaign_id} arm {arm}: need at least {needed} parts, found {found}")]
    InsufficientData {
        campaign_id: String,
        arm: Arm,
        needed: usize,
        found: usize,
    },

    #[error("campaign {campaign_id}: zero pooled variance with unequal arm means")]
    DegenerateEffect { campaign_id: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
