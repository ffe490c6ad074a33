//! Part- and campaign-level qualification ahead of any analysis.
//!
//! A part qualifies when it served enough impressions and spent something.
//! A campaign is kept only if strictly more than `min_qualified_fraction`
//! of its parts qualify in each arm separately; kept campaigns retain only
//! their qualified parts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Arm, CampaignExperiment, ExperimentDataset, PartMeasurement};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualificationConfig {
    pub min_impressions_per_part: u64,
    pub min_qualified_fraction: f64,
}

impl Default for QualificationConfig {
    fn default() -> Self {
        Self {
            min_impressions_per_part: 100,
            min_qualified_fraction: 0.9,
        }
    }
}

impl QualificationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_impressions_per_part < 1 {
            return Err(Error::Config(
                "min_impressions_per_part must be at least 1".into(),
            ));
        }
        if !(self.min_qualified_fraction > 0.0 && self.min_qualified_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "min_qualified_fraction must lie in (0, 1], got {}",
                self.min_qualified_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    LowImpressions,
    ZeroSpend,
    /// The part qualified but its campaign did not.
    CampaignDisqualified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedPart {
    pub campaign_id: String,
    pub arm: Arm,
    pub part_id: u32,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisqualifiedCampaign {
    pub campaign_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualificationReport {
    pub qualified: ExperimentDataset,
    pub excluded_parts: Vec<ExcludedPart>,
    pub disqualified_campaigns: Vec<DisqualifiedCampaign>,
    pub disqualified_fraction: f64,
}

impl QualificationReport {
    pub fn qualified_part_count(&self) -> usize {
        self.qualified.part_count()
    }
}

fn part_failure(part: &PartMeasurement, config: &QualificationConfig) -> Option<ExclusionReason> {
    if part.impressions < config.min_impressions_per_part {
        Some(ExclusionReason::LowImpressions)
    } else if !part.spend.is_positive() {
        Some(ExclusionReason::ZeroSpend)
    } else {
        None
    }
}

fn exclusion(part: &PartMeasurement, reason: ExclusionReason) -> ExcludedPart {
    ExcludedPart {
        campaign_id: part.campaign_id.clone(),
        arm: part.arm,
        part_id: part.part_id,
        reason,
    }
}

/// Filters parts and campaigns.
///
/// An empty qualified set is a valid outcome; callers decide whether that is
/// fatal.
pub fn qualify(dataset: &ExperimentDataset, config: &QualificationConfig) -> QualificationReport {
    let mut kept = Vec::new();
    let mut excluded_parts = Vec::new();
    let mut disqualified_campaigns = Vec::new();

    for campaign in &dataset.campaigns {
        let mut part_exclusions = Vec::new();
        let mut survivors: [Vec<PartMeasurement>; 2] = [Vec::new(), Vec::new()];
        let mut shortfalls = Vec::new();

        for (slot, arm) in [Arm::Control, Arm::Treatment].into_iter().enumerate() {
            let parts = campaign.parts(arm);
            for p in parts {
                match part_failure(p, config) {
                    Some(reason) => part_exclusions.push(exclusion(p, reason)),
                    None => survivors[slot].push(p.clone()),
                }
            }
            let needed = config.min_qualified_fraction * parts.len() as f64;
            let have = survivors[slot].len();
            if (have as f64) <= needed {
                shortfalls.push(format!(
                    "arm {arm}: {have} of {} parts qualified, need more than {needed}",
                    parts.len()
                ));
            }
        }

        excluded_parts.extend(part_exclusions);
        if shortfalls.is_empty() {
            let [a, b] = survivors;
            kept.push(CampaignExperiment {
                campaign_id: campaign.campaign_id.clone(),
                parts_a: a,
                parts_b: b,
            });
        } else {
            for p in survivors.iter().flatten() {
                excluded_parts.push(exclusion(p, ExclusionReason::CampaignDisqualified));
            }
            disqualified_campaigns.push(DisqualifiedCampaign {
                campaign_id: campaign.campaign_id.clone(),
                reason: shortfalls.join("; "),
            });
        }
    }

    let disqualified_fraction = if dataset.campaigns.is_empty() {
        0.0
    } else {
        disqualified_campaigns.len() as f64 / dataset.campaigns.len() as f64
    };

    QualificationReport {
        qualified: ExperimentDataset {
            campaigns: kept,
            metadata: dataset.metadata.clone(),
        },
        excluded_parts,
        disqualified_campaigns,
        disqualified_fraction,
    }
}
