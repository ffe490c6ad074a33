//! Evaluation of a treatment bidding model against a control across many
//! advertising campaigns.
//!
//! Each campaign's traffic is split into parts per arm. Per-campaign
//! standardized ROI differences are combined with a random-effects
//! meta-analysis, next to the micro- and macro-averaged baselines with
//! A/A-calibrated thresholds.

pub mod baselines;
pub mod config;
pub mod error;
pub mod io;
pub mod meta;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod report;
pub mod simgen;
pub mod stats;
pub mod subgroup;

pub use error::{Error, Result};
pub use model::{Arm, CampaignExperiment, ExperimentDataset, Money, PartMeasurement};
pub use pipeline::{evaluate, EvaluationConfig, EvaluationReport, PipelineVerdict, Recommendation};
pub use report::{load_report, render_report, ReportFormat};
