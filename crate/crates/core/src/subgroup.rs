//! Subgroup construction and decomposition of random-effects heterogeneity
//! into within-group and between-group parts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta::{
    fixed_effect_summary, heterogeneity, random_weights, weighted_squared_deviation,
    z_significance, EffectSize,
};
use crate::model::ExperimentDataset;
use crate::stats::{chi_square_sf, compensated_sum};

const FRACTION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SubgroupSpec {
    /// Campaigns sorted by total spend, cut where cumulative spend crosses
    /// the running sum of `spend_fractions`.
    BySpendCumulative { spend_fractions: Vec<f64> },
    /// Explicit campaign-to-group labels.
    ByLabel { labels: BTreeMap<String, String> },
}

impl Default for SubgroupSpec {
    fn default() -> Self {
        SubgroupSpec::BySpendCumulative {
            spend_fractions: vec![1.0 / 3.0; 3],
        }
    }
}

/// How each subgroup's random-effects weights are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauMode {
    /// Reuse the between-study variance of the full analysis.
    #[default]
    Global,
    /// Re-estimate it inside every group.
    PerGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subgroup {
    pub group_id: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SubgroupPartition {
    pub groups: Vec<Subgroup>,
    pub warnings: Vec<String>,
}

impl SubgroupPartition {
    pub fn group_of(&self, campaign_id: &str) -> Option<usize> {
        self.groups
            .iter()
            .position(|g| g.members.iter().any(|m| m == campaign_id))
    }
}

pub fn validate_fractions(fractions: &[f64]) -> Result<()> {
    if fractions.is_empty() {
        return Err(Error::Config(
            "at least one subgroup fraction is required".into(),
        ));
    }
    if fractions.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
        return Err(Error::Config(format!(
            "subgroup fractions must be positive: {fractions:?}"
        )));
    }
    let total = compensated_sum(fractions.iter().copied());
    if (total - 1.0).abs() > FRACTION_TOLERANCE {
        return Err(Error::Config(format!(
            "subgroup fractions sum to {total}, expected 1"
        )));
    }
    Ok(())
}

/// Splits campaigns into spend tiers, biggest spenders first.
///
/// Walking campaigns by descending total spend (ties by id), a campaign
/// joins the current group while the spend accumulated before it is
/// strictly below that group's cumulative cap. Groups that end up empty
/// are dropped with a warning.
pub fn partition_by_spend(
    dataset: &ExperimentDataset,
    fractions: &[f64],
) -> Result<SubgroupPartition> {
    validate_fractions(fractions)?;
    let mut spends: Vec<(&str, i64)> = dataset
        .campaigns
        .iter()
        .map(|c| (c.campaign_id.as_str(), c.total_spend().micros()))
        .collect();
    if spends.is_empty() {
        return Err(Error::Empty("no campaigns to partition".into()));
    }
    spends.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let total: i64 = spends.iter().map(|s| s.1).sum();
    if total <= 0 {
        return Err(Error::Domain(
            "campaigns have no spend to partition by".into(),
        ));
    }
    let mut caps = Vec::with_capacity(fractions.len());
    let mut running = 0.0;
    for f in fractions {
        running += f;
        caps.push(running * total as f64 * (1.0 - FRACTION_TOLERANCE));
    }

    let mut members: Vec<Vec<String>> = vec![Vec::new(); fractions.len()];
    let mut group = 0;
    let mut before: i64 = 0;
    for (id, spend) in spends {
        while group + 1 < fractions.len() && before as f64 >= caps[group] {
            group += 1;
        }
        members[group].push(id.to_string());
        before += spend;
    }

    let mut warnings = Vec::new();
    let groups = members
        .into_iter()
        .enumerate()
        .filter_map(|(k, m)| {
            if m.is_empty() {
                warnings.push(format!("spend group {} is empty and was dropped", k + 1));
                None
            } else {
                Some(Subgroup {
                    group_id: format!("spend-{}", k + 1),
                    members: m,
                })
            }
        })
        .collect::<Vec<_>>();
    if groups.len() < fractions.len() && dataset.campaigns.len() < fractions.len() {
        warnings.push(format!(
            "{} campaigns cannot fill {} groups",
            dataset.campaigns.len(),
            fractions.len()
        ));
    }
    Ok(SubgroupPartition { groups, warnings })
}

/// Groups campaigns by label; groups are ordered by label name.
pub fn partition_by_label(
    dataset: &ExperimentDataset,
    labels: &BTreeMap<String, String>,
) -> Result<SubgroupPartition> {
    let mut grouped: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for c in &dataset.campaigns {
        let label = labels.get(&c.campaign_id).ok_or_else(|| {
            Error::Config(format!("campaign {} has no subgroup label", c.campaign_id))
        })?;
        grouped
            .entry(label)
            .or_default()
            .push(c.campaign_id.clone());
    }
    Ok(SubgroupPartition {
        groups: grouped
            .into_iter()
            .map(|(g, members)| Subgroup {
                group_id: g.to_string(),
                members,
            })
            .collect(),
        warnings: Vec::new(),
    })
}

pub fn resolve(spec: &SubgroupSpec, dataset: &ExperimentDataset) -> Result<SubgroupPartition> {
    match spec {
        SubgroupSpec::BySpendCumulative { spend_fractions } => {
            partition_by_spend(dataset, spend_fractions)
        }
        SubgroupSpec::ByLabel { labels } => partition_by_label(dataset, labels),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSummary {
    pub group_id: String,
    pub members: Vec<String>,
    pub tau2: f64,
    pub mu_star_k: f64,
    pub nu_star_k: f64,
    pub z_k: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_z_k: f64,
    pub q_star_k: f64,
    pub p_q_star_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub tau_mode: TauMode,
    pub summaries: Vec<SubgroupSummary>,
    pub mu_star: f64,
    pub q_star_total: f64,
    pub q_within: f64,
    pub q_between: f64,
    pub df_between: usize,
    pub p_between: f64,
    pub warnings: Vec<String>,
}

fn chi_square_p(q: f64, df: usize) -> Result<f64> {
    if df == 0 {
        Ok(1.0)
    } else {
        chi_square_sf(q.max(0.0), df as u32)
    }
}

/// Heterogeneity decomposition over a partition of the studies.
///
/// `tau2` is the between-study variance of the full analysis. Under
/// [`TauMode::Global`] every quantity uses the same weights `1/(v + tau2)`,
/// so `q_star_total = q_within + q_between` with a non-negative between part.
pub fn subgroup_analysis(
    effects: &[EffectSize],
    tau2: f64,
    partition: &SubgroupPartition,
    confidence_level: f64,
    tau_mode: TauMode,
) -> Result<SubgroupReport> {
    if effects.is_empty() {
        return Err(Error::Empty("subgroup analysis needs effect sizes".into()));
    }
    let mut warnings = partition.warnings.clone();
    let mut buckets: Vec<Vec<&EffectSize>> = vec![Vec::new(); partition.groups.len()];
    for e in effects {
        let g = partition.group_of(&e.campaign_id).ok_or_else(|| {
            Error::Config(format!("campaign {} is not in any subgroup", e.campaign_id))
        })?;
        buckets[g].push(e);
    }

    let all_weights = random_weights(effects, tau2);
    let total_weight = compensated_sum(all_weights.iter().copied());
    let mu_star =
        compensated_sum(all_weights.iter().zip(effects).map(|(w, e)| w * e.d)) / total_weight;
    let q_star_total = weighted_squared_deviation(effects, &all_weights, mu_star);

    let mut summaries = Vec::new();
    for (group, bucket) in partition.groups.iter().zip(&buckets) {
        if bucket.is_empty() {
            warnings.push(format!(
                "subgroup {} has no effect sizes and was dropped",
                group.group_id
            ));
            continue;
        }
        let members: Vec<EffectSize> = bucket.iter().map(|e| (*e).clone()).collect();
        let group_tau2 = match tau_mode {
            TauMode::Global => tau2,
            TauMode::PerGroup => {
                let fixed = fixed_effect_summary(&members)?;
                heterogeneity(&members, &fixed)?.tau2
            }
        };
        let w = random_weights(&members, group_tau2);
        let w_total = compensated_sum(w.iter().copied());
        let mu_k = compensated_sum(w.iter().zip(&members).map(|(w, e)| w * e.d)) / w_total;
        let nu_k = 1.0 / w_total;
        let q_k = weighted_squared_deviation(&members, &w, mu_k);
        let sig = z_significance(mu_k, nu_k, confidence_level)?;
        summaries.push(SubgroupSummary {
            group_id: group.group_id.clone(),
            members: members.iter().map(|e| e.campaign_id.clone()).collect(),
            tau2: group_tau2,
            mu_star_k: mu_k,
            nu_star_k: nu_k,
            z_k: sig.z,
            ci_low: sig.ci_low,
            ci_high: sig.ci_high,
            p_z_k: sig.p_z,
            q_star_k: q_k,
            p_q_star_k: chi_square_p(q_k, members.len() - 1)?,
        });
    }

    let q_within = compensated_sum(summaries.iter().map(|s| s.q_star_k));
    let q_between = q_star_total - q_within;
    let df_between = summaries.len().saturating_sub(1);
    Ok(SubgroupReport {
        tau_mode,
        mu_star,
        q_star_total,
        q_within,
        q_between,
        df_between,
        p_between: chi_square_p(q_between, df_between)?,
        summaries,
        warnings,
    })
}
