//! Micro- and macro-averaged ROI comparisons and their A/A-calibrated
//! acceptance thresholds.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    arm_totals, Arm, CampaignExperiment, ExperimentDataset, Money, PartMeasurement,
};
use crate::stats::{compensated_sum, mean, median};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineMethod {
    Micro,
    Macro,
    MacroMedian,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 3] = [Self::Micro, Self::Macro, Self::MacroMedian];

    pub fn label(self) -> &'static str {
        match self {
            Self::Micro => "Micro",
            Self::Macro => "Macro",
            Self::MacroMedian => "Macro (median)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accept,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregator {
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub method: BaselineMethod,
    pub statistic: f64,
    pub threshold_theta: f64,
    pub decision: Verdict,
}

/// Accept only when the statistic strictly exceeds the threshold.
pub fn threshold_decision(statistic: f64, theta: f64) -> Verdict {
    if statistic > theta {
        Verdict::Accept
    } else {
        Verdict::Reject
    }
}

/// Pooled ROI of one arm: total value over total spend across campaigns.
pub fn micro_roi(dataset: &ExperimentDataset, arm: Arm) -> Result<f64> {
    let parts = dataset.campaigns.iter().flat_map(|c| c.parts(arm));
    let (spend, value) = parts.fold((Money::ZERO, Money::ZERO), |(s, v), p| {
        (s + p.spend, v + p.value)
    });
    if !spend.is_positive() {
        return Err(Error::UndefinedRoi {
            context: format!("micro ROI of arm {arm}"),
            spend: spend.to_string(),
        });
    }
    Ok(value.micros() as f64 / spend.micros() as f64)
}

/// The same pooled ROI written as a spend-weighted mean of campaign ROIs.
///
/// Campaigns with no spend in `arm` carry zero weight.
pub fn micro_roi_spend_weighted(dataset: &ExperimentDataset, arm: Arm) -> Result<f64> {
    let mut totals = Vec::new();
    for c in &dataset.campaigns {
        let parts = c.parts(arm);
        if parts.iter().map(|p| p.spend).sum::<Money>().is_positive() {
            totals.push(arm_totals(parts)?);
        }
    }
    let grand: Money = totals.iter().map(|t| t.spend).sum();
    if !grand.is_positive() {
        return Err(Error::UndefinedRoi {
            context: format!("micro ROI of arm {arm}"),
            spend: grand.to_string(),
        });
    }
    let grand = grand.micros() as f64;
    Ok(compensated_sum(
        totals
            .iter()
            .map(|t| t.spend.micros() as f64 / grand * t.roi),
    ))
}

pub fn micro_delta(dataset: &ExperimentDataset) -> Result<f64> {
    Ok(micro_roi(dataset, Arm::Treatment)? - micro_roi(dataset, Arm::Control)?)
}

fn campaign_roi_difference(campaign: &CampaignExperiment) -> Result<f64> {
    let side = |arm: Arm| {
        arm_totals(campaign.parts(arm)).map_err(|_| Error::UndefinedRoi {
            context: format!("campaign {} arm {arm}", campaign.campaign_id),
            spend: campaign
                .parts(arm)
                .iter()
                .map(|p| p.spend)
                .sum::<Money>()
                .to_string(),
        })
    };
    Ok(side(Arm::Treatment)?.roi - side(Arm::Control)?.roi)
}

/// Mean or median over campaigns of the per-campaign ROI difference B - A.
pub fn macro_delta(dataset: &ExperimentDataset, aggregator: Aggregator) -> Result<f64> {
    let diffs = dataset
        .campaigns
        .iter()
        .map(campaign_roi_difference)
        .collect::<Result<Vec<_>>>()?;
    let agg = match aggregator {
        Aggregator::Mean => mean(&diffs),
        Aggregator::Median => median(&diffs),
    };
    agg.ok_or_else(|| Error::Empty("macro average over zero campaigns".into()))
}

pub fn method_statistic(dataset: &ExperimentDataset, method: BaselineMethod) -> Result<f64> {
    match method {
        BaselineMethod::Micro => micro_delta(dataset),
        BaselineMethod::Macro => macro_delta(dataset, Aggregator::Mean),
        BaselineMethod::MacroMedian => macro_delta(dataset, Aggregator::Median),
    }
}

pub fn evaluate_baseline(
    dataset: &ExperimentDataset,
    method: BaselineMethod,
    theta: f64,
) -> Result<BaselineResult> {
    let statistic = method_statistic(dataset, method)?;
    Ok(BaselineResult {
        method,
        statistic,
        threshold_theta: theta,
        decision: threshold_decision(statistic, theta),
    })
}

/// Relative traffic sizes of the two arms, used to size A/A pseudo-arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub control: f64,
    pub treatment: f64,
}

impl SplitRatio {
    pub fn new(control: f64, treatment: f64) -> Result<Self> {
        if !(control > 0.0 && treatment > 0.0 && control.is_finite() && treatment.is_finite()) {
            return Err(Error::Config(format!(
                "split ratio must be two positive finite numbers, got {control}:{treatment}"
            )));
        }
        Ok(Self { control, treatment })
    }

    /// Ratio of total part counts per arm across the dataset.
    pub fn from_dataset(dataset: &ExperimentDataset) -> Result<Self> {
        let a: usize = dataset.campaigns.iter().map(CampaignExperiment::m_a).sum();
        let b: usize = dataset.campaigns.iter().map(CampaignExperiment::m_b).sum();
        Self::new(a as f64, b as f64)
    }

    /// Parts assigned to the pseudo-treatment side out of `m`, kept in `1..m`.
    fn treatment_parts(&self, m: usize) -> usize {
        let share = self.treatment / (self.control + self.treatment);
        ((m as f64 * share).round() as usize).clamp(1, m - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AaCalibration {
    pub method: BaselineMethod,
    pub repeats_k: usize,
    pub split_seed: u64,
    pub per_repeat_stats: Vec<f64>,
    pub theta: f64,
    /// Campaigns left out because they have fewer than two control parts.
    pub skipped_campaigns: Vec<String>,
}

/// Uniform integer in `0..bound` from one 64-bit draw (multiply-shift).
fn bounded(rng: &mut ChaCha8Rng, bound: usize) -> usize {
    ((u128::from(rng.next_u64()) * bound as u128) >> 64) as usize
}

fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = bounded(rng, i + 1);
        items.swap(i, j);
    }
}

fn relabel(parts: Vec<PartMeasurement>, arm: Arm) -> Vec<PartMeasurement> {
    parts
        .into_iter()
        .map(|p| PartMeasurement { arm, ..p })
        .collect()
}

/// One A/A pseudo-experiment: control parts of every eligible campaign are
/// shuffled and cut into a control-sized and a treatment-sized half.
pub fn aa_split(
    eligible: &[&CampaignExperiment],
    split: SplitRatio,
    rng: &mut ChaCha8Rng,
) -> ExperimentDataset {
    let campaigns = eligible
        .iter()
        .map(|c| {
            let mut parts = c.parts_a.clone();
            shuffle(&mut parts, rng);
            let k = split.treatment_parts(parts.len());
            let pseudo_control = parts.split_off(k);
            CampaignExperiment {
                campaign_id: c.campaign_id.clone(),
                parts_a: relabel(pseudo_control, Arm::Control),
                parts_b: relabel(parts, Arm::Treatment),
            }
        })
        .collect();
    ExperimentDataset {
        campaigns,
        metadata: Default::default(),
    }
}

/// Estimates the noise floor of a baseline statistic from control traffic.
///
/// Repeat `r` draws from ChaCha8 seeded with `seed` on stream `r`, so
/// repeats are independent of each other and of evaluation order.
pub fn aa_calibrate(
    dataset: &ExperimentDataset,
    split: SplitRatio,
    repeats_k: usize,
    seed: u64,
    method: BaselineMethod,
) -> Result<AaCalibration> {
    if repeats_k == 0 {
        return Err(Error::Config(
            "A/A calibration needs at least one repeat".into(),
        ));
    }
    let (eligible, skipped): (Vec<&CampaignExperiment>, Vec<&CampaignExperiment>) =
        dataset.campaigns.iter().partition(|c| c.m_a() >= 2);
    if eligible.is_empty() {
        return Err(Error::Empty(
            "no campaign has two or more control parts for A/A calibration".into(),
        ));
    }
    let per_repeat_stats = (0..repeats_k)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            method_statistic(&aa_split(&eligible, split, &mut rng), method)
        })
        .collect::<Result<Vec<_>>>()?;
    let theta = compensated_sum(per_repeat_stats.iter().copied()) / repeats_k as f64;
    Ok(AaCalibration {
        method,
        repeats_k,
        split_seed: seed,
        per_repeat_stats,
        theta,
        skipped_campaigns: skipped.iter().map(|c| c.campaign_id.clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(c: &str, arm: Arm, id: u32, spend: &str, value: &str) -> PartMeasurement {
        PartMeasurement::new(
            c,
            arm,
            id,
            1000,
            spend.parse().unwrap(),
            value.parse().unwrap(),
        )
        .unwrap()
    }

    /// One part per arm with the given spend and ROI.
    fn simple(c: &str, spend: &str, roi_a: &str, roi_b: &str) -> CampaignExperiment {
        let s: Money = spend.parse().unwrap();
        let val = |r: &str| {
            let r: Money = r.parse().unwrap();
            Money::from_micros(s.micros() * r.micros() / 1_000_000).to_string()
        };
        CampaignExperiment::new(
            c,
            vec![part(c, Arm::Control, 0, spend, &val(roi_a))],
            vec![part(c, Arm::Treatment, 0, spend, &val(roi_b))],
        )
        .unwrap()
    }

    #[test]
    fn micro_roi_weights_by_spend() {
        let ds = ExperimentDataset::new(vec![
            simple("x", "10", "1", "1.2"),
            simple("y", "5", "1", "0.8"),
        ])
        .unwrap();
        let b = micro_roi(&ds, Arm::Treatment).unwrap();
        assert!((b - 16.0 / 15.0).abs() < 1e-15);
        assert!((micro_delta(&ds).unwrap() - (16.0 / 15.0 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn micro_of_single_campaign_is_its_roi() {
        let ds = ExperimentDataset::new(vec![simple("x", "7", "1.5", "2")]).unwrap();
        assert_eq!(micro_roi(&ds, Arm::Control).unwrap(), 1.5);
        assert_eq!(micro_roi(&ds, Arm::Treatment).unwrap(), 2.0);
    }

    #[test]
    fn micro_of_constant_roi_is_that_roi() {
        let ds = ExperimentDataset::new(vec![
            simple("x", "3", "1.25", "1.25"),
            simple("y", "40", "1.25", "1.25"),
            simple("z", "0.5", "1.25", "1.25"),
        ])
        .unwrap();
        assert_eq!(micro_roi(&ds, Arm::Control).unwrap(), 1.25);
        assert_eq!(micro_delta(&ds).unwrap(), 0.0);
    }

    #[test]
    fn micro_zero_spend_is_undefined() {
        let ds = ExperimentDataset::new(vec![simple("x", "0", "1", "1")]).unwrap();
        assert!(matches!(micro_delta(&ds), Err(Error::UndefinedRoi { .. })));
    }

    #[test]
    fn swapping_arms_negates_micro_and_macro() {
        let ds = ExperimentDataset::new(vec![
            simple("x", "10", "1", "1.2"),
            simple("y", "5", "1.1", "0.8"),
        ])
        .unwrap();
        let sw = ds.swapped();
        assert!((micro_delta(&ds).unwrap() + micro_delta(&sw).unwrap()).abs() < 1e-15);
        let m = macro_delta(&ds, Aggregator::Mean).unwrap();
        assert!((m + macro_delta(&sw, Aggregator::Mean).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn macro_mean_can_cancel_where_micro_does_not() {
        let ds = ExperimentDataset::new(vec![
            simple("x", "10", "1", "1.2"),
            simple("y", "5", "1", "0.8"),
        ])
        .unwrap();
        assert!(macro_delta(&ds, Aggregator::Mean).unwrap().abs() < 1e-15);
        assert!(micro_delta(&ds).unwrap() > 0.06);
    }

    #[test]
    fn macro_median_resists_outlier() {
        let ds = ExperimentDataset::new(vec![
            simple("x", "1", "1", "1.1"),
            simple("y", "1", "1", "1.2"),
            simple("z", "1", "1", "11"),
        ])
        .unwrap();
        let mean = macro_delta(&ds, Aggregator::Mean).unwrap();
        let med = macro_delta(&ds, Aggregator::Median).unwrap();
        assert!((mean - 10.3 / 3.0).abs() < 1e-12);
        assert!((med - 0.2).abs() < 1e-12);
    }

    #[test]
    fn macro_names_campaign_with_undefined_roi() {
        let ds = ExperimentDataset::new(vec![
            simple("ok", "1", "1", "1"),
            simple("broke", "0", "1", "1"),
        ])
        .unwrap();
        let err = macro_delta(&ds, Aggregator::Mean).unwrap_err().to_string();
        assert!(err.contains("broke"), "{err}");
    }

    #[test]
    fn threshold_is_strict() {
        assert_eq!(threshold_decision(0.17, 0.004), Verdict::Accept);
        assert_eq!(threshold_decision(-0.05, 0.004), Verdict::Reject);
        assert_eq!(threshold_decision(0.004, 0.004), Verdict::Reject);
    }

    fn control_only(c: &str, rois: &[&str]) -> CampaignExperiment {
        let parts = rois
            .iter()
            .enumerate()
            .map(|(i, r)| part(c, Arm::Control, i as u32, "1", r))
            .collect();
        CampaignExperiment::new(c, parts, vec![]).unwrap()
    }

    #[test]
    fn aa_on_constant_roi_gives_zero_theta() {
        let ds = ExperimentDataset::new(vec![
            control_only("x", &["1.5", "1.5", "1.5", "1.5"]),
            control_only("y", &["0.7", "0.7", "0.7", "0.7"]),
        ])
        .unwrap();
        for seed in [0, 1, 99] {
            for method in BaselineMethod::ALL {
                let cal =
                    aa_calibrate(&ds, SplitRatio::new(1.0, 1.0).unwrap(), 5, seed, method).unwrap();
                assert_eq!(cal.theta, 0.0);
                assert_eq!(cal.per_repeat_stats.len(), 5);
            }
        }
    }

    #[test]
    fn aa_two_by_two_split_statistics() {
        // The six ways to split {1,1,2,2} into halves give -1, 0 (x4) or +1.
        let ds = ExperimentDataset::new(vec![control_only("x", &["1", "1", "2", "2"])]).unwrap();
        let cal = aa_calibrate(
            &ds,
            SplitRatio::new(1.0, 1.0).unwrap(),
            200,
            7,
            BaselineMethod::Micro,
        )
        .unwrap();
        let mut seen = [false; 3];
        for s in &cal.per_repeat_stats {
            let k = [-1.0, 0.0, 1.0]
                .iter()
                .position(|v| (s - v).abs() < 1e-12)
                .unwrap_or_else(|| panic!("unexpected statistic {s}"));
            seen[k] = true;
        }
        assert_eq!(seen, [true, true, true]);
    }

    #[test]
    fn aa_is_deterministic_and_skips_small_campaigns() {
        let ds = ExperimentDataset::new(vec![
            control_only("x", &["1", "1.3", "2", "0.4", "0.9"]),
            control_only("tiny", &["3"]),
        ])
        .unwrap();
        let split = SplitRatio::new(9.0, 1.0).unwrap();
        let a = aa_calibrate(&ds, split, 5, 42, BaselineMethod::Macro).unwrap();
        let b = aa_calibrate(&ds, split, 5, 42, BaselineMethod::Macro).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.skipped_campaigns, vec!["tiny".to_string()]);
        let c = aa_calibrate(&ds, split, 5, 43, BaselineMethod::Macro).unwrap();
        assert_ne!(a.per_repeat_stats, c.per_repeat_stats);
    }

    #[test]
    fn aa_split_sizes_follow_ratio() {
        let c = control_only("x", &["1"; 20]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pseudo = aa_split(&[&c], SplitRatio::new(9.0, 1.0).unwrap(), &mut rng);
        assert_eq!(pseudo.campaigns[0].m_b(), 2);
        assert_eq!(pseudo.campaigns[0].m_a(), 18);
        let pseudo = aa_split(&[&c], SplitRatio::new(1.0, 1000.0).unwrap(), &mut rng);
        assert_eq!(pseudo.campaigns[0].m_a(), 1);
    }

    #[test]
    fn aa_requires_eligible_campaigns() {
        let ds = ExperimentDataset::new(vec![control_only("x", &["1"])]).unwrap();
        assert!(aa_calibrate(
            &ds,
            SplitRatio::new(1.0, 1.0).unwrap(),
            5,
            0,
            BaselineMethod::Micro
        )
        .is_err());
        assert!(SplitRatio::new(0.0, 1.0).is_err());
    }
}
