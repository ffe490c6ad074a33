//! Flat `key = value` configuration for evaluations and simulations.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::io::parse_key_values;
use crate::meta::VarianceFormula;
use crate::pipeline::EvaluationConfig;
use crate::simgen::SimConfig;
use crate::subgroup::{SubgroupSpec, TauMode};

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|s| parse(key, s.trim())).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "invalid boolean {value:?} for {key}"
        ))),
    }
}

/// `camp1:g1,camp2:g2` pairs.
fn parse_labels(key: &str, value: &str) -> Result<BTreeMap<String, String>> {
    let mut labels = BTreeMap::new();
    for pair in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (id, group) = pair.split_once(':').ok_or_else(|| {
            Error::Config(format!("{key} expects id:group pairs, found {pair:?}"))
        })?;
        if labels
            .insert(id.trim().to_string(), group.trim().to_string())
            .is_some()
        {
            return Err(Error::Config(format!("{key} labels campaign {id:?} twice")));
        }
    }
    Ok(labels)
}

impl EvaluationConfig {
    pub const KEYS: &'static [&'static str] = &[
        "confidence_level",
        "homogeneity_level",
        "min_impressions_per_part",
        "min_qualified_fraction",
        "aa_repeats_k",
        "aa_seed",
        "micro_theta",
        "macro_theta",
        "subgroup_fractions",
        "subgroup_labels",
        "subgroup_tau",
        "variance_formula",
        "skip_subgroup_on_strong_reject",
        "traffic_phases",
        "current_share",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "confidence_level" => self.confidence_level = parse(key, value)?,
            "homogeneity_level" => self.homogeneity_level = parse(key, value)?,
            "min_impressions_per_part" => {
                self.qualification.min_impressions_per_part = parse(key, value)?
            }
            "min_qualified_fraction" => {
                self.qualification.min_qualified_fraction = parse(key, value)?
            }
            "aa_repeats_k" => self.aa.repeats_k = parse(key, value)?,
            "aa_seed" => self.aa.seed = parse(key, value)?,
            "micro_theta" => self.micro_theta = Some(parse(key, value)?),
            "macro_theta" => self.macro_theta = Some(parse(key, value)?),
            "subgroup_fractions" => {
                self.subgroups = SubgroupSpec::BySpendCumulative {
                    spend_fractions: parse_list(key, value)?,
                }
            }
            "subgroup_labels" => {
                self.subgroups = SubgroupSpec::ByLabel {
                    labels: parse_labels(key, value)?,
                }
            }
            "subgroup_tau" => {
                self.subgroup_tau = match value {
                    "global" => TauMode::Global,
                    "per_group" => TauMode::PerGroup,
                    _ => {
                        return Err(Error::Config(format!(
                            "subgroup_tau must be global or per_group, got {value:?}"
                        )))
                    }
                }
            }
            "variance_formula" => {
                self.variance_formula = match value {
                    "exact" => VarianceFormula::Exact,
                    "classical" => VarianceFormula::Classical,
                    _ => {
                        return Err(Error::Config(format!(
                            "variance_formula must be exact or classical, got {value:?}"
                        )))
                    }
                }
            }
            "skip_subgroup_on_strong_reject" => {
                self.skip_subgroup_on_strong_reject = parse_bool(key, value)?
            }
            "traffic_phases" => self.schedule.phases = parse_list(key, value)?,
            "current_share" => self.schedule.current_share = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown evaluation key {key:?}"))),
        }
        Ok(())
    }

    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (k, v) in parse_key_values(text)? {
            config.set(&k, &v)?;
        }
        config.validate()?;
        Ok(config)
    }
}

impl SimConfig {
    pub const KEYS: &'static [&'static str] = &[
        "n_campaigns",
        "m_a",
        "m_b",
        "treatment_share",
        "budget_log_mean",
        "budget_log_sd",
        "base_roi_mean",
        "campaign_roi_sd",
        "part_noise_sd",
        "treatment_lift",
        "outlier_campaigns",
        "outlier_lift",
        "impressions_per_part_mean",
        "seed",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n_campaigns" => self.n_campaigns = parse(key, value)?,
            "m_a" => self.m_a = parse(key, value)?,
            "m_b" => self.m_b = parse(key, value)?,
            "treatment_share" => self.treatment_share = parse(key, value)?,
            "budget_log_mean" => self.budget_log_mean = parse(key, value)?,
            "budget_log_sd" => self.budget_log_sd = parse(key, value)?,
            "base_roi_mean" => self.base_roi_mean = parse(key, value)?,
            "campaign_roi_sd" => self.campaign_roi_sd = parse(key, value)?,
            "part_noise_sd" => self.part_noise_sd = parse(key, value)?,
            "treatment_lift" => self.treatment_lift = parse(key, value)?,
            "outlier_campaigns" => self.outlier_campaigns = parse(key, value)?,
            "outlier_lift" => self.outlier_lift = parse(key, value)?,
            "impressions_per_part_mean" => self.impressions_per_part_mean = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown simulation key {key:?}"))),
        }
        Ok(())
    }

    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (k, v) in parse_key_values(text)? {
            config.set(&k, &v)?;
        }
        config.validate()?;
        Ok(config)
    }
}
