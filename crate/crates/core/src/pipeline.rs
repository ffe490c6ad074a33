//! End-to-end evaluation: qualification, baselines, meta-analysis, optional
//! subgroup diagnostics, the verdict and the next traffic step.
//!
//! Only the random-effects result decides the verdict. Baseline verdicts are
//! reported alongside and disagreements are listed.

use serde::{Deserialize, Serialize};

use crate::baselines::{
    aa_calibrate, evaluate_baseline, AaCalibration, BaselineMethod, BaselineResult, SplitRatio,
    Verdict,
};
use crate::error::{Error, Result};
use crate::meta::{
    campaign_effects, check_level, meta_analyze, EffectExclusion, EffectSize, FixedEffectSummary,
    HeterogeneityStats, RandomEffectSummary, SignificanceResult, VarianceFormula,
};
use crate::model::ExperimentDataset;
use crate::preprocess::{qualify, QualificationConfig, QualificationReport};
use crate::subgroup::{resolve, subgroup_analysis, SubgroupReport, SubgroupSpec, TauMode};

pub const REPORT_SCHEMA_VERSION: &str = "roi-meta/report/v1";

const SHARE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AaSettings {
    pub repeats_k: usize,
    pub seed: u64,
}

impl Default for AaSettings {
    fn default() -> Self {
        Self {
            repeats_k: 5,
            seed: 0,
        }
    }
}

/// Treatment traffic shares of the ramp, and where the experiment is now.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficSchedule {
    pub phases: Vec<f64>,
    pub current_share: f64,
}

impl Default for TrafficSchedule {
    fn default() -> Self {
        Self {
            phases: vec![0.01, 0.10, 0.20, 0.50],
            current_share: 0.01,
        }
    }
}

impl TrafficSchedule {
    pub fn new(phases: Vec<f64>, current_share: f64) -> Result<Self> {
        let s = Self {
            phases,
            current_share,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::Config("traffic schedule has no phases".into()));
        }
        if self.phases.iter().any(|p| !(*p > 0.0 && *p <= 0.5)) {
            return Err(Error::Config(format!(
                "traffic shares must lie in (0, 0.5]: {:?}",
                self.phases
            )));
        }
        if self.phases.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "traffic shares must be strictly increasing: {:?}",
                self.phases
            )));
        }
        self.phase_index()?;
        Ok(())
    }

    fn phase_index(&self) -> Result<usize> {
        self.phases
            .iter()
            .position(|p| (p - self.current_share).abs() <= SHARE_TOLERANCE)
            .ok_or_else(|| {
                Error::Config(format!(
                    "current share {} is not a phase of {:?}",
                    self.current_share, self.phases
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub confidence_level: f64,
    pub homogeneity_level: f64,
    pub qualification: QualificationConfig,
    pub aa: AaSettings,
    /// Explicit thresholds override A/A calibration per method.
    pub micro_theta: Option<f64>,
    pub macro_theta: Option<f64>,
    pub subgroups: SubgroupSpec,
    pub subgroup_tau: TauMode,
    pub variance_formula: VarianceFormula,
    pub skip_subgroup_on_strong_reject: bool,
    pub schedule: TrafficSchedule,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            confidence_level: 0.95,
            homogeneity_level: 0.10,
            qualification: QualificationConfig::default(),
            aa: AaSettings::default(),
            micro_theta: None,
            macro_theta: None,
            subgroups: SubgroupSpec::default(),
            subgroup_tau: TauMode::Global,
            variance_formula: VarianceFormula::Exact,
            skip_subgroup_on_strong_reject: true,
            schedule: TrafficSchedule::default(),
        }
    }
}

impl EvaluationConfig {
    pub fn validate(&self) -> Result<()> {
        check_level("confidence_level", self.confidence_level)?;
        check_level("homogeneity_level", self.homogeneity_level)?;
        self.qualification.validate()?;
        self.schedule.validate()?;
        if self.aa.repeats_k == 0 && (self.micro_theta.is_none() || self.macro_theta.is_none()) {
            return Err(Error::Config("aa_repeats_k must be at least 1".into()));
        }
        for theta in [self.micro_theta, self.macro_theta].into_iter().flatten() {
            if !theta.is_finite() {
                return Err(Error::Config(format!(
                    "threshold must be finite, got {theta}"
                )));
            }
        }
        if let SubgroupSpec::BySpendCumulative { spend_fractions } = &self.subgroups {
            crate::subgroup::validate_fractions(spend_fractions)?;
        }
        Ok(())
    }

    fn explicit_theta(&self, method: BaselineMethod) -> Option<f64> {
        match method {
            BaselineMethod::Micro => self.micro_theta,
            BaselineMethod::Macro | BaselineMethod::MacroMedian => self.macro_theta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PipelineVerdict {
    Accept,
    RejectIneffective,
    RejectHarmful,
}

impl PipelineVerdict {
    pub fn is_accept(self) -> bool {
        self == PipelineVerdict::Accept
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub verdict: PipelineVerdict,
    pub basis: String,
    pub requires_approval: bool,
}

/// Verdict from the random-effects significance test and interval.
///
/// Accept needs a significant effect with the whole interval above zero;
/// a significant effect with the interval below zero is harmful; anything
/// else is ineffective.
pub fn decide(sig: &SignificanceResult) -> Decision {
    let alpha_half = (1.0 - sig.confidence_level) / 2.0;
    let test = format!(
        "Z = {:.4}, P_z = {:.4} vs {:.4}, CI = [{:.4}, {:.4}]",
        sig.z, sig.p_z, alpha_half, sig.ci_low, sig.ci_high
    );
    let (verdict, why) = if sig.significant && sig.ci_low > 0.0 {
        (PipelineVerdict::Accept, "significant positive effect")
    } else if sig.significant && sig.ci_high < 0.0 {
        (
            PipelineVerdict::RejectHarmful,
            "significant negative effect",
        )
    } else if sig.significant {
        (
            PipelineVerdict::RejectIneffective,
            "interval still covers zero",
        )
    } else {
        (PipelineVerdict::RejectIneffective, "effect not significant")
    };
    Decision {
        verdict,
        basis: format!("random-effects Z test: {why} ({test})"),
        requires_approval: verdict.is_accept(),
    }
}

/// Strong rejections make subgroup diagnostics optional.
pub fn is_strong_reject(decision: &Decision) -> bool {
    decision.verdict == PipelineVerdict::RejectHarmful
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Recommendation {
    Ramp {
        next_share: f64,
        requires_approval: bool,
    },
    Halt,
    PromoteToBaseline,
}

pub fn recommend_traffic(
    decision: &Decision,
    schedule: &TrafficSchedule,
) -> Result<Recommendation> {
    let idx = schedule.phase_index()?;
    if !decision.verdict.is_accept() {
        return Ok(Recommendation::Halt);
    }
    Ok(match schedule.phases.get(idx + 1) {
        Some(&next_share) => Recommendation::Ramp {
            next_share,
            requires_approval: true,
        },
        None => Recommendation::PromoteToBaseline,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: String,
    pub config: EvaluationConfig,
    pub metadata: std::collections::BTreeMap<String, String>,
    pub qualification: QualificationReport,
    pub calibrations: Vec<AaCalibration>,
    pub baselines: Vec<BaselineResult>,
    pub effects: Vec<EffectSize>,
    pub effect_exclusions: Vec<EffectExclusion>,
    pub fixed: FixedEffectSummary,
    pub heterogeneity: HeterogeneityStats,
    /// `p_Q` is at or above the homogeneity level.
    pub homogeneous: bool,
    pub random: RandomEffectSummary,
    pub significance: SignificanceResult,
    pub subgroup: Option<SubgroupReport>,
    pub decision: Decision,
    pub recommendation: Recommendation,
    /// Baseline methods whose accept/reject differs from the verdict.
    pub disagreements: Vec<String>,
}

fn baselines(
    qualified: &ExperimentDataset,
    config: &EvaluationConfig,
) -> Result<(Vec<AaCalibration>, Vec<BaselineResult>)> {
    let mut calibrations = Vec::new();
    let mut results = Vec::new();
    let split = if BaselineMethod::ALL
        .iter()
        .any(|m| config.explicit_theta(*m).is_none())
    {
        Some(SplitRatio::from_dataset(qualified)?)
    } else {
        None
    };
    for method in BaselineMethod::ALL {
        let theta = match (config.explicit_theta(method), split) {
            (Some(t), _) => t,
            (None, Some(split)) => {
                let cal = aa_calibrate(
                    qualified,
                    split,
                    config.aa.repeats_k,
                    config.aa.seed,
                    method,
                )?;
                let t = cal.theta;
                calibrations.push(cal);
                t
            }
            (None, None) => unreachable!("split ratio computed whenever a theta is missing"),
        };
        results.push(evaluate_baseline(qualified, method, theta)?);
    }
    Ok((calibrations, results))
}

/// Runs the whole decision sequence on one dataset.
pub fn evaluate(
    dataset: &ExperimentDataset,
    config: &EvaluationConfig,
) -> Result<EvaluationReport> {
    config.validate()?;
    if dataset.campaigns.is_empty() {
        return Err(Error::Empty("dataset has no campaigns".into()));
    }
    let qualification = qualify(dataset, &config.qualification);
    let qualified = &qualification.qualified;
    if qualified.campaigns.is_empty() {
        return Err(Error::Empty(format!(
            "no campaign qualified ({} disqualified)",
            qualification.disqualified_campaigns.len()
        )));
    }

    let (calibrations, baselines) = baselines(qualified, config)?;

    let (effects, effect_exclusions) = campaign_effects(qualified, config.variance_formula);
    if effects.is_empty() {
        return Err(Error::Empty(format!(
            "no campaign produced an effect size ({} excluded)",
            effect_exclusions.len()
        )));
    }
    let meta = meta_analyze(&effects, config.confidence_level)?;
    let decision = decide(&meta.significance);

    let subgroup = if config.skip_subgroup_on_strong_reject && is_strong_reject(&decision) {
        None
    } else {
        let partition = resolve(&config.subgroups, &with_effects(qualified, &effects))?;
        Some(subgroup_analysis(
            &effects,
            meta.heterogeneity.tau2,
            &partition,
            config.confidence_level,
            config.subgroup_tau,
        )?)
    };

    let recommendation = recommend_traffic(&decision, &config.schedule)?;
    let overall = if decision.verdict.is_accept() {
        Verdict::Accept
    } else {
        Verdict::Reject
    };
    let disagreements = baselines
        .iter()
        .filter(|b| b.decision != overall)
        .map(|b| format!("{} says {:?}", b.method.label(), b.decision))
        .collect();

    Ok(EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION.to_string(),
        config: config.clone(),
        metadata: dataset.metadata.clone(),
        homogeneous: meta.heterogeneity.p_q >= config.homogeneity_level,
        qualification,
        calibrations,
        baselines,
        effects,
        effect_exclusions,
        fixed: meta.fixed,
        heterogeneity: meta.heterogeneity,
        random: meta.random,
        significance: meta.significance,
        subgroup,
        decision,
        recommendation,
        disagreements,
    })
}

fn qualified_dataset(
    dataset: &ExperimentDataset,
    config: &EvaluationConfig,
) -> Result<ExperimentDataset> {
    config.validate()?;
    let report = qualify(dataset, &config.qualification);
    if report.qualified.campaigns.is_empty() {
        return Err(Error::Empty(format!(
            "no campaign qualified ({} disqualified)",
            report.disqualified_campaigns.len()
        )));
    }
    Ok(report.qualified)
}

/// A/A thresholds for every baseline on the qualified data, ignoring any
/// explicit thresholds in `config`.
pub fn calibrate(
    dataset: &ExperimentDataset,
    config: &EvaluationConfig,
) -> Result<Vec<AaCalibration>> {
    let qualified = qualified_dataset(dataset, config)?;
    if config.aa.repeats_k == 0 {
        return Err(Error::Config("aa_repeats_k must be at least 1".into()));
    }
    let split = SplitRatio::from_dataset(&qualified)?;
    BaselineMethod::ALL
        .iter()
        .map(|m| aa_calibrate(&qualified, split, config.aa.repeats_k, config.aa.seed, *m))
        .collect()
}

/// Subgroup diagnostics alone, always computed regardless of the verdict.
pub fn subgroups(dataset: &ExperimentDataset, config: &EvaluationConfig) -> Result<SubgroupReport> {
    let qualified = qualified_dataset(dataset, config)?;
    let (effects, excluded) = campaign_effects(&qualified, config.variance_formula);
    if effects.is_empty() {
        return Err(Error::Empty(format!(
            "no campaign produced an effect size ({} excluded)",
            excluded.len()
        )));
    }
    let meta = meta_analyze(&effects, config.confidence_level)?;
    let partition = resolve(&config.subgroups, &with_effects(&qualified, &effects))?;
    subgroup_analysis(
        &effects,
        meta.heterogeneity.tau2,
        &partition,
        config.confidence_level,
        config.subgroup_tau,
    )
}

fn with_effects(qualified: &ExperimentDataset, effects: &[EffectSize]) -> ExperimentDataset {
    ExperimentDataset {
        campaigns: qualified
            .campaigns
            .iter()
            .filter(|c| effects.iter().any(|e| e.campaign_id == c.campaign_id))
            .cloned()
            .collect(),
        metadata: Default::default(),
    }
}
