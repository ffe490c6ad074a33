//! Campaign, arm and part types plus the value and ROI arithmetic.
//!
//! Monetary amounts are held as integer micro-currency units so sums are
//! exact and independent of summation order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const MICROS_PER_UNIT: i64 = 1_000_000;

/// Which of the two bidding models a measurement belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Arm {
    /// Model A, the baseline.
    #[serde(rename = "A")]
    Control,
    /// Model B, the candidate.
    #[serde(rename = "B")]
    Treatment,
}

impl Arm {
    pub fn other(self) -> Arm {
        match self {
            Arm::Control => Arm::Treatment,
            Arm::Treatment => Arm::Control,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Arm::Control => "A",
            Arm::Treatment => "B",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" => Ok(Arm::Control),
            "B" => Ok(Arm::Treatment),
            other => Err(Error::Schema(format!(
                "unknown arm {other:?}, expected A or B"
            ))),
        }
    }
}

/// Fixed-point currency amount with six decimal places.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_micros(micros: i64) -> Self {
        Money(micros)
    }

    pub const fn from_units(units: i64) -> Self {
        Money(units * MICROS_PER_UNIT)
    }

    pub const fn micros(self) -> i64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_UNIT as f64
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn checked_add(self, other: Money) -> Option<Money> {
        self.0.checked_add(other.0).map(Money)
    }

    pub fn checked_mul_count(self, count: u64) -> Option<Money> {
        i64::try_from(count)
            .ok()
            .and_then(|c| self.0.checked_mul(c))
            .map(Money)
    }
}

impl Add for Money {
    type Output = Money;

    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Money> for Money {
    fn sum<I: Iterator<Item = &'a Money>>(iter: I) -> Money {
        iter.copied().sum()
    }
}

impl fmt::Display for Money {
    /// Renders at least two decimals and at most six, trimming trailing zeros.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let units = abs / MICROS_PER_UNIT as u64;
        let frac = format!("{:06}", abs % MICROS_PER_UNIT as u64);
        let trimmed = frac.trim_end_matches('0');
        let frac = if trimmed.len() < 2 {
            &frac[..2]
        } else {
            trimmed
        };
        write!(f, "{sign}{units}.{frac}")
    }
}

impl FromStr for Money {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Schema(format!("invalid decimal amount {s:?}"));
        let t = s.trim();
        let (negative, digits) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t.strip_prefix('+').unwrap_or(t)),
        };
        let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit())
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(bad());
        }
        if frac_part.len() > 6 {
            return Err(Error::Schema(format!(
                "amount {s:?} has more than six decimal places"
            )));
        }
        let units: i64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| bad())?
        };
        let frac: i64 = if frac_part.is_empty() {
            0
        } else {
            format!("{frac_part:0<6}").parse().map_err(|_| bad())?
        };
        let micros = units
            .checked_mul(MICROS_PER_UNIT)
            .and_then(|m| m.checked_add(frac))
            .ok_or_else(bad)?;
        Ok(Money(if negative { -micros } else { micros }))
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Monetary value of one event of each type.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventValueSchedule {
    pub entries: BTreeMap<String, Money>,
}

impl EventValueSchedule {
    pub fn new<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Money)>,
        S: Into<String>,
    {
        let mut map = BTreeMap::new();
        for (name, value) in entries {
            let name = name.into();
            if value.micros() < 0 {
                return Err(Error::Schema(format!(
                    "negative value for event type {name:?}"
                )));
            }
            if map.insert(name.clone(), value).is_some() {
                return Err(Error::Schema(format!("duplicate event type {name:?}")));
            }
        }
        Ok(Self { entries: map })
    }
}

/// Observed number of events of each type.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub counts: BTreeMap<String, u64>,
}

impl EventCounts {
    pub fn new<I, S>(counts: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        Self {
            counts: counts.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }
}

/// Total value generated: the sum over event types of value per event times count.
pub fn campaign_value(counts: &EventCounts, schedule: &EventValueSchedule) -> Result<Money> {
    let mut total = Money::ZERO;
    for (event, &count) in &counts.counts {
        let unit = schedule
            .entries
            .get(event)
            .ok_or_else(|| Error::Schema(format!("event type {event:?} has no scheduled value")))?;
        total = unit
            .checked_mul_count(count)
            .and_then(|v| total.checked_add(v))
            .ok_or_else(|| Error::Domain(format!("value overflow at event type {event:?}")))?;
    }
    Ok(total)
}

/// Return on investment, value divided by spend.
pub fn roi(value: Money, spend: Money) -> Result<f64> {
    if !spend.is_positive() {
        return Err(Error::UndefinedRoi {
            context: "roi".into(),
            spend: spend.to_string(),
        });
    }
    Ok(value.micros() as f64 / spend.micros() as f64)
}

/// One traffic slice of one campaign under one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartMeasurement {
    pub campaign_id: String,
    pub arm: Arm,
    pub part_id: u32,
    pub impressions: u64,
    pub spend: Money,
    pub value: Money,
    /// `None` when spend is zero.
    pub roi: Option<f64>,
}

impl PartMeasurement {
    pub fn new(
        campaign_id: impl Into<String>,
        arm: Arm,
        part_id: u32,
        impressions: u64,
        spend: Money,
        value: Money,
    ) -> Result<Self> {
        let campaign_id = campaign_id.into();
        if spend.micros() < 0 || value.micros() < 0 {
            return Err(Error::Schema(format!(
                "campaign {campaign_id} arm {arm} part {part_id}: negative spend or value"
            )));
        }
        let roi = if spend.is_positive() {
            Some(roi(value, spend)?)
        } else {
            None
        };
        Ok(Self {
            campaign_id,
            arm,
            part_id,
            impressions,
            spend,
            value,
            roi,
        })
    }
}

/// Both arms' parts for a single campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignExperiment {
    pub campaign_id: String,
    pub parts_a: Vec<PartMeasurement>,
    pub parts_b: Vec<PartMeasurement>,
}

impl CampaignExperiment {
    pub fn new(
        campaign_id: impl Into<String>,
        parts_a: Vec<PartMeasurement>,
        parts_b: Vec<PartMeasurement>,
    ) -> Result<Self> {
        let campaign_id = campaign_id.into();
        for (arm, parts) in [(Arm::Control, &parts_a), (Arm::Treatment, &parts_b)] {
            let mut seen = BTreeSet::new();
            for p in parts {
                if p.campaign_id != campaign_id {
                    return Err(Error::Schema(format!(
                        "part {} of campaign {} filed under campaign {campaign_id}",
                        p.part_id, p.campaign_id
                    )));
                }
                if p.arm != arm {
                    return Err(Error::Schema(format!(
                        "campaign {campaign_id}: part {} has arm {} but was filed under {arm}",
                        p.part_id, p.arm
                    )));
                }
                if !seen.insert(p.part_id) {
                    return Err(Error::Schema(format!(
                        "campaign {campaign_id} arm {arm}: duplicate part id {}",
                        p.part_id
                    )));
                }
            }
        }
        Ok(Self {
            campaign_id,
            parts_a,
            parts_b,
        })
    }

    pub fn m_a(&self) -> usize {
        self.parts_a.len()
    }

    pub fn m_b(&self) -> usize {
        self.parts_b.len()
    }

    pub fn parts(&self, arm: Arm) -> &[PartMeasurement] {
        match arm {
            Arm::Control => &self.parts_a,
            Arm::Treatment => &self.parts_b,
        }
    }

    pub fn total_spend(&self) -> Money {
        self.parts_a
            .iter()
            .chain(&self.parts_b)
            .map(|p| p.spend)
            .sum()
    }

    pub fn part_count(&self) -> usize {
        self.parts_a.len() + self.parts_b.len()
    }

    /// The same campaign with the roles of A and B exchanged.
    pub fn swapped(&self) -> Self {
        let flip = |parts: &[PartMeasurement]| {
            parts
                .iter()
                .map(|p| PartMeasurement {
                    arm: p.arm.other(),
                    ..p.clone()
                })
                .collect()
        };
        Self {
            campaign_id: self.campaign_id.clone(),
            parts_a: flip(&self.parts_b),
            parts_b: flip(&self.parts_a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmTotals {
    pub spend: Money,
    pub value: Money,
    pub roi: f64,
}

/// Sums spend and value over the parts of one campaign arm.
pub fn arm_totals(parts: &[PartMeasurement]) -> Result<ArmTotals> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Empty("arm_totals needs at least one part".into()))?;
    if let Some(p) = parts
        .iter()
        .find(|p| p.campaign_id != first.campaign_id || p.arm != first.arm)
    {
        return Err(Error::Schema(format!(
            "mixed parts: {}/{} alongside {}/{}",
            first.campaign_id, first.arm, p.campaign_id, p.arm
        )));
    }
    let spend: Money = parts.iter().map(|p| p.spend).sum();
    let value: Money = parts.iter().map(|p| p.value).sum();
    let roi = roi(value, spend).map_err(|_| Error::UndefinedRoi {
        context: format!("campaign {} arm {}", first.campaign_id, first.arm),
        spend: spend.to_string(),
    })?;
    Ok(ArmTotals { spend, value, roi })
}

/// All campaigns of one experiment run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentDataset {
    pub campaigns: Vec<CampaignExperiment>,
    pub metadata: BTreeMap<String, String>,
}

impl ExperimentDataset {
    pub fn new(campaigns: Vec<CampaignExperiment>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for c in &campaigns {
            if !seen.insert(c.campaign_id.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate campaign id {}",
                    c.campaign_id
                )));
            }
        }
        Ok(Self {
            campaigns,
            metadata: BTreeMap::new(),
        })
    }

    /// Groups loose parts into campaigns, ordered by first appearance.
    pub fn from_parts<I>(parts: I) -> Result<Self>
    where
        I: IntoIterator<Item = PartMeasurement>,
    {
        let mut order: Vec<String> = Vec::new();
        let mut grouped: BTreeMap<String, (Vec<PartMeasurement>, Vec<PartMeasurement>)> =
            BTreeMap::new();
        for p in parts {
            let entry = grouped.entry(p.campaign_id.clone()).or_insert_with(|| {
                order.push(p.campaign_id.clone());
                (Vec::new(), Vec::new())
            });
            match p.arm {
                Arm::Control => entry.0.push(p),
                Arm::Treatment => entry.1.push(p),
            }
        }
        let campaigns = order
            .into_iter()
            .map(|id| {
                let (a, b) = grouped.remove(&id).expect("grouped by id");
                CampaignExperiment::new(id, a, b)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(campaigns)
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn n(&self) -> usize {
        self.campaigns.len()
    }

    pub fn part_count(&self) -> usize {
        self.campaigns
            .iter()
            .map(CampaignExperiment::part_count)
            .sum()
    }

    pub fn campaign(&self, id: &str) -> Option<&CampaignExperiment> {
        self.campaigns.iter().find(|c| c.campaign_id == id)
    }

    pub fn swapped(&self) -> Self {
        Self {
            campaigns: self
                .campaigns
                .iter()
                .map(CampaignExperiment::swapped)
                .collect(),
            metadata: self.metadata.clone(),
        }
    }
}
