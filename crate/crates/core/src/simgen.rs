//! Seeded synthetic experiments and deterministic user bucketing.
//!
//! The generator models part-level ROI directly. Every campaign draws from
//! its own ChaCha8 stream (`seed`, stream `index + 1`), so a campaign's
//! parts do not depend on how many campaigns precede it or on generation
//! order. Defaults are chosen to exercise the statistics, not to mimic any
//! real traffic.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Arm, CampaignExperiment, ExperimentDataset, Money, PartMeasurement};

/// Maps a user to an arm by hashing `salt`, a separator byte and `user_id`
/// with SHA-256 and reading the first 53 bits as a uniform number in [0, 1).
pub fn assign_arm(user_id: &str, treatment_share: f64, salt: &str) -> Arm {
    if bucket_position(user_id, salt) < treatment_share {
        Arm::Treatment
    } else {
        Arm::Control
    }
}

pub fn bucket_position(user_id: &str, salt: &str) -> f64 {
    let digest = Sha256::new()
        .chain_update(salt.as_bytes())
        .chain_update([0x1f])
        .chain_update(user_id.as_bytes())
        .finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    (u64::from_be_bytes(head) >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_campaigns: usize,
    pub m_a: usize,
    pub m_b: usize,
    /// Fraction of each campaign's budget spent through the treatment arm.
    pub treatment_share: f64,
    /// Location and scale of the log-normal campaign budget.
    pub budget_log_mean: f64,
    pub budget_log_sd: f64,
    pub base_roi_mean: f64,
    /// Log-scale spread of the per-campaign ROI multiplier.
    pub campaign_roi_sd: f64,
    /// Log-scale spread of the per-part multiplicative noise.
    pub part_noise_sd: f64,
    pub treatment_lift: f64,
    /// The highest-budget campaigns that get `outlier_lift` instead.
    pub outlier_campaigns: usize,
    pub outlier_lift: f64,
    pub impressions_per_part_mean: u64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_campaigns: 50,
            m_a: 10,
            m_b: 10,
            treatment_share: 0.1,
            budget_log_mean: 9.0,
            budget_log_sd: 1.5,
            base_roi_mean: 1.5,
            campaign_roi_sd: 0.3,
            part_noise_sd: 0.15,
            treatment_lift: 0.0,
            outlier_campaigns: 0,
            outlier_lift: 0.5,
            impressions_per_part_mean: 2000,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_campaigns == 0 {
            return Err(Error::Config("n_campaigns must be at least 1".into()));
        }
        if self.m_a < 2 || self.m_b < 2 {
            return Err(Error::Config("each arm needs at least two parts".into()));
        }
        if !(0.0..=1.0).contains(&self.treatment_share) {
            return Err(Error::Config(format!(
                "treatment_share must lie in [0, 1], got {}",
                self.treatment_share
            )));
        }
        let nonneg = [
            ("budget_log_sd", self.budget_log_sd),
            ("base_roi_mean", self.base_roi_mean),
            ("campaign_roi_sd", self.campaign_roi_sd),
            ("part_noise_sd", self.part_noise_sd),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("treatment_lift", self.treatment_lift),
            ("outlier_lift", self.outlier_lift),
        ] {
            if !(v > -1.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be finite and > -1, got {v}"
                )));
            }
        }
        if !self.budget_log_mean.is_finite() {
            return Err(Error::Config("budget_log_mean must be finite".into()));
        }
        if self.outlier_campaigns > self.n_campaigns {
            return Err(Error::Config(
                "more outlier campaigns than campaigns".into(),
            ));
        }
        Ok(())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Mean-one log-normal multiplier.
fn lognormal_factor(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    let z = normal(rng);
    (sd * z - 0.5 * sd * sd).exp()
}

fn campaign_stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

pub fn campaign_id(index: usize) -> String {
    format!("camp{:04}", index + 1)
}

/// Builds one synthetic experiment.
///
/// Part spends are whole currency units and part ROIs are multiples of
/// 1e-6, so `value = roi * spend` is exact in micro-currency and equal
/// generated ROIs stay bit-identical after `value / spend`.
pub fn generate_experiment(config: &SimConfig) -> Result<ExperimentDataset> {
    config.validate()?;
    let mut streams: Vec<ChaCha8Rng> = (0..config.n_campaigns)
        .map(|i| campaign_stream(config.seed, i))
        .collect();
    let budgets: Vec<f64> = streams
        .iter_mut()
        .map(|rng| (config.budget_log_mean + config.budget_log_sd * normal(rng)).exp())
        .collect();

    let mut by_budget: Vec<usize> = (0..config.n_campaigns).collect();
    by_budget.sort_by(|&a, &b| budgets[b].total_cmp(&budgets[a]).then(a.cmp(&b)));
    let mut lifts = vec![config.treatment_lift; config.n_campaigns];
    for &i in by_budget.iter().take(config.outlier_campaigns) {
        lifts[i] = config.outlier_lift;
    }

    let campaigns = streams
        .iter_mut()
        .enumerate()
        .map(|(i, rng)| {
            let id = campaign_id(i);
            let factor = lognormal_factor(rng, config.campaign_roi_sd);
            let mut arm_parts = |arm: Arm, m: usize, share: f64, lift: f64| {
                let units = (budgets[i] * share / m as f64).round().max(1.0) as i64;
                let spend = Money::from_units(units);
                (0..m)
                    .map(|j| {
                        let impressions = (config.impressions_per_part_mean as f64
                            * lognormal_factor(rng, 0.1))
                        .round() as u64;
                        let noise = lognormal_factor(rng, config.part_noise_sd);
                        let roi = config.base_roi_mean * factor * (1.0 + lift) * noise;
                        let roi_micros = (roi * 1e6).round().max(0.0) as i64;
                        let value = Money::from_micros(roi_micros * units);
                        PartMeasurement::new(id.as_str(), arm, j as u32, impressions, spend, value)
                    })
                    .collect::<Result<Vec<_>>>()
            };
            let parts_a = arm_parts(Arm::Control, config.m_a, 1.0 - config.treatment_share, 0.0)?;
            let parts_b = arm_parts(Arm::Treatment, config.m_b, config.treatment_share, lifts[i])?;
            CampaignExperiment::new(id.as_str(), parts_a, parts_b)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ExperimentDataset::new(campaigns)?
        .with_metadata("generator", "roi-meta simgen v1")
        .with_metadata("seed", config.seed.to_string())
        .with_metadata("treatment_share", config.treatment_share.to_string()))
}
