//! Human-readable and JSON renderings of an [`EvaluationReport`].

use std::fmt::Write as _;
use std::str::FromStr;

use crate::baselines::AaCalibration;
use crate::error::{Error, Result};
use crate::pipeline::{EvaluationReport, Recommendation, REPORT_SCHEMA_VERSION};
use crate::subgroup::SubgroupReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Human,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "human" => Ok(Self::Human),
            "json" => Ok(Self::Json),
            _ => Err(Error::Config(format!(
                "format must be human or json, got {s:?}"
            ))),
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

pub fn render_report(report: &EvaluationReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => to_json(report),
        ReportFormat::Human => Ok(render_human(report)),
    }
}

/// Reads a JSON report and checks its schema version.
pub fn load_report(text: &str) -> Result<EvaluationReport> {
    let report: EvaluationReport = serde_json::from_str(text)?;
    if report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "report schema {:?} is not {:?}",
            report.schema_version, REPORT_SCHEMA_VERSION
        )));
    }
    Ok(report)
}

fn pct(p: f64) -> String {
    format!("{:.2}%", 100.0 * p)
}

fn recommendation_line(r: &Recommendation) -> String {
    match r {
        Recommendation::Ramp {
            next_share,
            requires_approval,
        } => format!(
            "ramp treatment traffic to {}{}",
            pct(*next_share),
            if *requires_approval {
                " (requires approval)"
            } else {
                ""
            }
        ),
        Recommendation::Halt => "halt the experiment".to_string(),
        Recommendation::PromoteToBaseline => "promote treatment to baseline".to_string(),
    }
}

fn render_human(r: &EvaluationReport) -> String {
    let mut out = String::new();
    let q = &r.qualification;
    let kept = q.qualified.campaigns.len();
    let total = kept + q.disqualified_campaigns.len();
    let level = r.significance.confidence_level;

    let _ = writeln!(out, "ROI evaluation report ({})", r.schema_version);
    for (k, v) in &r.metadata {
        let _ = writeln!(out, "  {k}: {v}");
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Qualification");
    let _ = writeln!(
        out,
        "  campaigns retained   {kept} / {total} ({} disqualified)",
        pct(q.disqualified_fraction)
    );
    let _ = writeln!(out, "  parts excluded       {}", q.excluded_parts.len());
    let _ = writeln!(out);

    let _ = writeln!(
        out,
        "{:<16} {:<18} {:<38} Decision",
        "Method", "Parameter", "Statistic"
    );
    for b in &r.baselines {
        let _ = writeln!(
            out,
            "{:<16} {:<18} {:<38} {:?}",
            b.method.label(),
            format!("theta = {:.4}", b.threshold_theta),
            format!("delta = {:.4}", b.statistic),
            b.decision
        );
    }
    let s = &r.significance;
    let _ = writeln!(
        out,
        "{:<16} {:<18} {:<38} {:?}",
        "Meta-analysis",
        format!("level = {}", pct(level)),
        format!(
            "CI = [{:.4}, {:.4}]  P_z = {}",
            s.ci_low,
            s.ci_high,
            pct(s.p_z)
        ),
        r.decision.verdict
    );
    let _ = writeln!(out);

    let h = &r.heterogeneity;
    let _ = writeln!(
        out,
        "Random-effects meta-analysis (n = {}, {} excluded)",
        r.effects.len(),
        r.effect_exclusions.len()
    );
    let _ = writeln!(
        out,
        "  fixed     mu  = {:.6}  nu  = {:.6}",
        r.fixed.mu, r.fixed.nu
    );
    let _ = writeln!(
        out,
        "  Q = {:.4}  df = {}  p_Q = {}  homogeneous at {}: {}",
        h.q,
        h.df,
        pct(h.p_q),
        pct(r.config.homogeneity_level),
        if r.homogeneous { "yes" } else { "no" }
    );
    let _ = writeln!(out, "  tau^2 = {:.6}", h.tau2);
    let _ = writeln!(
        out,
        "  random    mu* = {:.6}  nu* = {:.6}",
        r.random.mu_star, r.random.nu_star
    );
    let _ = writeln!(
        out,
        "  Z = {:.4}  P_z = {}  CI ({}) = [{:.4}, {:.4}]",
        s.z,
        pct(s.p_z),
        pct(level),
        s.ci_low,
        s.ci_high
    );
    let _ = writeln!(out);

    match &r.subgroup {
        Some(sg) => out.push_str(&render_subgroup(sg)),
        None => {
            let _ = writeln!(out, "Subgroups: skipped");
        }
    }
    let _ = writeln!(out);

    let _ = writeln!(out, "Decision: {:?}", r.decision.verdict);
    let _ = writeln!(out, "  {}", r.decision.basis);
    for d in &r.disagreements {
        let _ = writeln!(out, "  baseline disagreement: {d}");
    }
    let _ = writeln!(
        out,
        "Recommendation: {}",
        recommendation_line(&r.recommendation)
    );
    out
}

/// Table of per-group intervals, `P_z` and `p_Q*` with the Q decomposition.
pub fn render_subgroup(sg: &SubgroupReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Subgroups (tau mode {:?})", sg.tau_mode);
    let _ = writeln!(
        out,
        "  {:<10} {:>4}  {:<22} {:>8}  {:>8}",
        "Group", "n", "CI", "P_z", "p_Q*"
    );
    for g in &sg.summaries {
        let _ = writeln!(
            out,
            "  {:<10} {:>4}  {:<22} {:>8}  {:>8}",
            g.group_id,
            g.members.len(),
            format!("[{:.4}, {:.4}]", g.ci_low, g.ci_high),
            pct(g.p_z_k),
            pct(g.p_q_star_k)
        );
    }
    let _ = writeln!(
        out,
        "  Q* = {:.4}  within = {:.4}  between = {:.4} (df {})  p = {}",
        sg.q_star_total,
        sg.q_within,
        sg.q_between,
        sg.df_between,
        pct(sg.p_between)
    );
    for w in &sg.warnings {
        let _ = writeln!(out, "  warning: {w}");
    }
    out
}

pub fn render_calibrations(calibrations: &[AaCalibration]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>8} {:>12}  per-repeat statistics",
        "Method", "repeats", "theta"
    );
    for c in calibrations {
        let stats: Vec<String> = c
            .per_repeat_stats
            .iter()
            .map(|s| format!("{s:.6}"))
            .collect();
        let _ = writeln!(
            out,
            "{:<16} {:>8} {:>12.6}  {}",
            c.method.label(),
            c.repeats_k,
            c.theta,
            stats.join(" ")
        );
        if !c.skipped_campaigns.is_empty() {
            let _ = writeln!(out, "  skipped: {}", c.skipped_campaigns.join(", "));
        }
    }
    out
}
