//! Per-campaign standardized effect sizes and their fixed- and
//! random-effects combination.
//!
//! Each campaign is one study. Its effect is the small-sample corrected
//! standardized mean difference of part ROIs (treatment minus control).
//! Studies are pooled by inverse-variance weighting; between-campaign
//! variance is estimated by the method of moments from Cochran's Q and
//! added to every study variance for the random-effects summary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Arm, CampaignExperiment, ExperimentDataset, PartMeasurement};
use crate::stats::{
    chi_square_sf, compensated_sum, mean, normal_quantile, normal_sf, sample_variance,
};

/// Which second-order term goes into the per-study variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceFormula {
    /// `c² · ((m_A + m_B)/(m_A m_B) + d²/(m_A + m_B))`
    #[default]
    Exact,
    /// `c² · ((m_A + m_B)/(m_A m_B) + d²/(2(m_A + m_B)))`, the textbook Hedges form.
    Classical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSampleStats {
    pub mean: f64,
    /// Unbiased, denominator `m - 1`.
    pub variance: f64,
    pub m: usize,
}

impl ArmSampleStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        Some(Self {
            mean: mean(values)?,
            variance: sample_variance(values)?,
            m: values.len(),
        })
    }
}

/// Mean and sample variance of part ROIs for one arm of one campaign.
pub fn arm_stats(parts: &[PartMeasurement]) -> Result<ArmSampleStats> {
    let insufficient = || {
        let (campaign_id, arm) = parts
            .first()
            .map(|p| (p.campaign_id.clone(), p.arm))
            .unwrap_or_else(|| (String::new(), Arm::Control));
        Error::InsufficientData {
            campaign_id,
            arm,
            needed: 2,
            found: parts.len(),
        }
    };
    let rois = parts
        .iter()
        .map(|p| {
            p.roi.ok_or_else(|| Error::UndefinedRoi {
                context: format!(
                    "campaign {} arm {} part {}",
                    p.campaign_id, p.arm, p.part_id
                ),
                spend: p.spend.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ArmSampleStats::from_values(&rois).ok_or_else(insufficient)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub campaign_id: String,
    pub m_a: usize,
    pub m_b: usize,
    /// Standardized mean difference before the small-sample correction.
    pub delta: f64,
    pub pooled_sd: f64,
    pub df: usize,
    pub correction: f64,
    pub d: f64,
    pub v: f64,
    pub w: f64,
}

/// Small-sample bias correction `1 - 3/(4 df - 1)`.
pub fn small_sample_correction(df: usize) -> f64 {
    1.0 - 3.0 / (4.0 * df as f64 - 1.0)
}

fn study_variance(formula: VarianceFormula, correction: f64, m_a: f64, m_b: f64, d: f64) -> f64 {
    let n = m_a + m_b;
    let spread = match formula {
        VarianceFormula::Exact => d * d / n,
        VarianceFormula::Classical => d * d / (2.0 * n),
    };
    correction * correction * (n / (m_a * m_b) + spread)
}

/// Standardized effect of B over A for one campaign.
pub fn effect_size(
    campaign_id: &str,
    a: &ArmSampleStats,
    b: &ArmSampleStats,
    formula: VarianceFormula,
) -> Result<EffectSize> {
    for (arm, s) in [(Arm::Control, a), (Arm::Treatment, b)] {
        if s.m < 2 {
            return Err(Error::InsufficientData {
                campaign_id: campaign_id.to_string(),
                arm,
                needed: 2,
                found: s.m,
            });
        }
    }
    let df = a.m + b.m - 2;
    let pooled_var = ((a.m - 1) as f64 * a.variance + (b.m - 1) as f64 * b.variance) / df as f64;
    let pooled_sd = pooled_var.sqrt();
    let diff = b.mean - a.mean;
    let delta = if pooled_sd > 0.0 {
        diff / pooled_sd
    } else if diff == 0.0 {
        0.0
    } else {
        return Err(Error::DegenerateEffect {
            campaign_id: campaign_id.to_string(),
        });
    };
    if !delta.is_finite() {
        return Err(Error::DegenerateEffect {
            campaign_id: campaign_id.to_string(),
        });
    }
    let correction = small_sample_correction(df);
    let d = correction * delta;
    let v = study_variance(formula, correction, a.m as f64, b.m as f64, d);
    Ok(EffectSize {
        campaign_id: campaign_id.to_string(),
        m_a: a.m,
        m_b: b.m,
        delta,
        pooled_sd,
        df,
        correction,
        d,
        v,
        w: 1.0 / v,
    })
}

pub fn campaign_effect(
    campaign: &CampaignExperiment,
    formula: VarianceFormula,
) -> Result<EffectSize> {
    let a = arm_stats(&campaign.parts_a)?;
    let b = arm_stats(&campaign.parts_b)?;
    effect_size(&campaign.campaign_id, &a, &b, formula)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectExclusion {
    pub campaign_id: String,
    pub reason: String,
}

/// Effect sizes for every campaign that admits one; the rest are reported.
pub fn campaign_effects(
    dataset: &ExperimentDataset,
    formula: VarianceFormula,
) -> (Vec<EffectSize>, Vec<EffectExclusion>) {
    let mut effects = Vec::new();
    let mut excluded = Vec::new();
    for c in &dataset.campaigns {
        match campaign_effect(c, formula) {
            Ok(e) => effects.push(e),
            Err(err) => excluded.push(EffectExclusion {
                campaign_id: c.campaign_id.clone(),
                reason: err.to_string(),
            }),
        }
    }
    (effects, excluded)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedEffectSummary {
    pub mu: f64,
    pub nu: f64,
    pub n: usize,
}

fn check_effects(effects: &[EffectSize]) -> Result<()> {
    if effects.is_empty() {
        return Err(Error::Empty("no effect sizes to combine".into()));
    }
    if let Some(e) = effects.iter().find(|e| !(e.v > 0.0 && e.v.is_finite())) {
        return Err(Error::Domain(format!(
            "campaign {}: study variance must be positive and finite, got {}",
            e.campaign_id, e.v
        )));
    }
    Ok(())
}

/// Weighted mean of `d` and the inverse of the total weight.
fn weighted_summary(effects: &[EffectSize], weights: &[f64]) -> (f64, f64) {
    let total = compensated_sum(weights.iter().copied());
    let weighted = compensated_sum(weights.iter().zip(effects).map(|(w, e)| w * e.d));
    (weighted / total, 1.0 / total)
}

pub fn fixed_effect_summary(effects: &[EffectSize]) -> Result<FixedEffectSummary> {
    check_effects(effects)?;
    let weights: Vec<f64> = effects.iter().map(|e| 1.0 / e.v).collect();
    let (mu, nu) = weighted_summary(effects, &weights);
    Ok(FixedEffectSummary {
        mu,
        nu,
        n: effects.len(),
    })
}

/// Weighted sum of squared deviations from `center`.
pub fn weighted_squared_deviation(effects: &[EffectSize], weights: &[f64], center: f64) -> f64 {
    compensated_sum(
        effects
            .iter()
            .zip(weights)
            .map(|(e, w)| w * (e.d - center) * (e.d - center)),
    )
}

/// Cochran's Q about `mu` and its χ² p-value with `n - 1` degrees of freedom.
///
/// A single study yields `(0, 1)`.
pub fn cochran_q(effects: &[EffectSize], mu: f64) -> Result<(f64, f64)> {
    check_effects(effects)?;
    if effects.len() == 1 {
        return Ok((0.0, 1.0));
    }
    let weights: Vec<f64> = effects.iter().map(|e| e.w).collect();
    let q = weighted_squared_deviation(effects, &weights, mu).max(0.0);
    let p = chi_square_sf(q, (effects.len() - 1) as u32)?;
    Ok((q, p))
}

/// `Σw - Σw²/Σw`.
pub fn lambda(weights: &[f64]) -> f64 {
    let s = compensated_sum(weights.iter().copied());
    let s2 = compensated_sum(weights.iter().map(|w| w * w));
    s - s2 / s
}

/// Method-of-moments between-study variance, floored at zero.
pub fn tau_squared(q: f64, n: usize, weights: &[f64]) -> f64 {
    let df = n.saturating_sub(1) as f64;
    if n < 2 || q < df {
        return 0.0;
    }
    let l = lambda(weights);
    if l > 0.0 {
        ((q - df) / l).max(0.0)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityStats {
    pub q: f64,
    pub df: usize,
    pub p_q: f64,
    pub lambda: f64,
    pub tau2: f64,
}

pub fn heterogeneity(
    effects: &[EffectSize],
    fixed: &FixedEffectSummary,
) -> Result<HeterogeneityStats> {
    let (q, p_q) = cochran_q(effects, fixed.mu)?;
    let weights: Vec<f64> = effects.iter().map(|e| e.w).collect();
    let n = effects.len();
    Ok(HeterogeneityStats {
        q,
        df: n - 1,
        p_q,
        lambda: if n > 1 { lambda(&weights) } else { 0.0 },
        tau2: tau_squared(q, n, &weights),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomEffectSummary {
    pub per_study_w_star: Vec<f64>,
    pub mu_star: f64,
    pub nu_star: f64,
}

pub fn random_weights(effects: &[EffectSize], tau2: f64) -> Vec<f64> {
    effects.iter().map(|e| 1.0 / (e.v + tau2)).collect()
}

pub fn random_effect_summary(effects: &[EffectSize], tau2: f64) -> Result<RandomEffectSummary> {
    check_effects(effects)?;
    if !(tau2 >= 0.0 && tau2.is_finite()) {
        return Err(Error::Domain(format!(
            "tau² must be finite and >= 0, got {tau2}"
        )));
    }
    let w_star = random_weights(effects, tau2);
    let (mu_star, nu_star) = weighted_summary(effects, &w_star);
    Ok(RandomEffectSummary {
        per_study_w_star: w_star,
        mu_star,
        nu_star,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub z: f64,
    /// One-sided tail `1 - Φ(|Z|)`.
    pub p_z: f64,
    pub confidence_level: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `p_z < (1 - confidence_level) / 2`.
    pub significant: bool,
}

pub fn check_level(name: &str, level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{name} must lie in (0, 1), got {level}"
        )))
    }
}

/// Significance rule shared by the Z test and reported `P_z` values.
pub fn is_significant(p_z: f64, confidence_level: f64) -> bool {
    p_z < (1.0 - confidence_level) / 2.0
}

/// Z test of a zero summary effect plus the matching two-sided interval.
pub fn z_significance(
    mu_star: f64,
    nu_star: f64,
    confidence_level: f64,
) -> Result<SignificanceResult> {
    check_level("confidence_level", confidence_level)?;
    if !(nu_star > 0.0 && nu_star.is_finite()) || !mu_star.is_finite() {
        return Err(Error::Domain(format!(
            "summary needs finite mean and positive variance, got {mu_star} and {nu_star}"
        )));
    }
    let alpha = 1.0 - confidence_level;
    let se = nu_star.sqrt();
    let z = mu_star / se;
    let p_z = normal_sf(z.abs());
    let half_width = normal_quantile(1.0 - alpha / 2.0)? * se;
    Ok(SignificanceResult {
        z,
        p_z,
        confidence_level,
        ci_low: mu_star - half_width,
        ci_high: mu_star + half_width,
        significant: is_significant(p_z, confidence_level),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaAnalysis {
    pub fixed: FixedEffectSummary,
    pub heterogeneity: HeterogeneityStats,
    pub random: RandomEffectSummary,
    pub significance: SignificanceResult,
}

/// Fixed summary, heterogeneity, random summary and Z test in one pass.
pub fn meta_analyze(effects: &[EffectSize], confidence_level: f64) -> Result<MetaAnalysis> {
    let fixed = fixed_effect_summary(effects)?;
    let heterogeneity = heterogeneity(effects, &fixed)?;
    let random = random_effect_summary(effects, heterogeneity.tau2)?;
    let significance = z_significance(random.mu_star, random.nu_star, confidence_level)?;
    Ok(MetaAnalysis {
        fixed,
        heterogeneity,
        random,
        significance,
    })
}
