use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use roi_meta::io::{dataset_to_csv, ingest, write_atomic, InputFormat};
use roi_meta::pipeline::{self, EvaluationConfig};
use roi_meta::report::{
    load_report, render_calibrations, render_report, render_subgroup, to_json, ReportFormat,
};
use roi_meta::simgen::{generate_experiment, SimConfig};
use roi_meta::{Error, ExperimentDataset, Result};

const EXIT_ACCEPT: u8 = 0;
const EXIT_REJECT: u8 = 1;
const EXIT_ERROR: u8 = 2;

/// Evaluate a treatment bidding model against a control across campaigns.
#[derive(Parser)]
#[command(name = "roi-meta", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full evaluation and print the verdict.
    Evaluate {
        data: PathBuf,
        #[command(flatten)]
        opts: EvalOptions,
        /// Also save the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// A/A thresholds for the baseline methods only.
    Calibrate {
        data: PathBuf,
        #[command(flatten)]
        opts: EvalOptions,
    },
    /// Subgroup heterogeneity diagnostics only.
    Subgroup {
        data: PathBuf,
        #[command(flatten)]
        opts: EvalOptions,
    },
    /// Write a synthetic experiment as delimited text.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Override a simulation key, e.g. `--set treatment_lift=0.1`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Render a saved JSON report.
    Report {
        saved: PathBuf,
        #[arg(long, default_value = "human")]
        format: String,
    },
}

#[derive(Args)]
struct EvalOptions {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "human")]
    format: String,
    #[arg(long = "confidence_level")]
    confidence_level: Option<String>,
    #[arg(long = "homogeneity_level")]
    homogeneity_level: Option<String>,
    #[arg(long = "min_impressions_per_part")]
    min_impressions_per_part: Option<String>,
    #[arg(long = "min_qualified_fraction")]
    min_qualified_fraction: Option<String>,
    #[arg(long = "aa_repeats_k")]
    aa_repeats_k: Option<String>,
    #[arg(long = "aa_seed")]
    aa_seed: Option<String>,
    #[arg(long = "micro_theta", allow_hyphen_values = true)]
    micro_theta: Option<String>,
    #[arg(long = "macro_theta", allow_hyphen_values = true)]
    macro_theta: Option<String>,
    #[arg(long = "subgroup_fractions")]
    subgroup_fractions: Option<String>,
    #[arg(long = "subgroup_labels")]
    subgroup_labels: Option<String>,
    #[arg(long = "subgroup_tau")]
    subgroup_tau: Option<String>,
    #[arg(long = "variance_formula")]
    variance_formula: Option<String>,
    #[arg(long = "skip_subgroup_on_strong_reject")]
    skip_subgroup_on_strong_reject: Option<String>,
    #[arg(long = "traffic_phases")]
    traffic_phases: Option<String>,
    #[arg(long = "current_share")]
    current_share: Option<String>,
}

impl EvalOptions {
    fn flags(&self) -> [(&'static str, &Option<String>); 15] {
        [
            ("confidence_level", &self.confidence_level),
            ("homogeneity_level", &self.homogeneity_level),
            ("min_impressions_per_part", &self.min_impressions_per_part),
            ("min_qualified_fraction", &self.min_qualified_fraction),
            ("aa_repeats_k", &self.aa_repeats_k),
            ("aa_seed", &self.aa_seed),
            ("micro_theta", &self.micro_theta),
            ("macro_theta", &self.macro_theta),
            ("subgroup_fractions", &self.subgroup_fractions),
            ("subgroup_labels", &self.subgroup_labels),
            ("subgroup_tau", &self.subgroup_tau),
            ("variance_formula", &self.variance_formula),
            (
                "skip_subgroup_on_strong_reject",
                &self.skip_subgroup_on_strong_reject,
            ),
            ("traffic_phases", &self.traffic_phases),
            ("current_share", &self.current_share),
        ]
    }

    fn config(&self) -> Result<EvaluationConfig> {
        let mut config = match &self.config {
            Some(path) => EvaluationConfig::from_kv_text(&read_text(path)?)?,
            None => EvaluationConfig::default(),
        };
        for (key, value) in self.flags() {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        config.validate()?;
        Ok(config)
    }

    fn format(&self) -> Result<ReportFormat> {
        self.format.parse()
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn load_dataset(path: &Path) -> Result<ExperimentDataset> {
    ingest(path, InputFormat::from_path(path)).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    })
}

/// Writes to stdout; a closed pipe downstream is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Evaluate { data, opts, out } => {
            let config = opts.config()?;
            let format = opts.format()?;
            let report = pipeline::evaluate(&load_dataset(&data)?, &config)?;
            if let Some(out) = out {
                write_atomic(&out, render_report(&report, ReportFormat::Json)?.as_bytes())?;
            }
            emit(&render_report(&report, format)?)?;
            Ok(verdict_code(&report))
        }
        Command::Calibrate { data, opts } => {
            let config = opts.config()?;
            let calibrations = pipeline::calibrate(&load_dataset(&data)?, &config)?;
            match opts.format()? {
                ReportFormat::Human => emit(&render_calibrations(&calibrations))?,
                ReportFormat::Json => emit(&to_json(&calibrations)?)?,
            }
            Ok(EXIT_ACCEPT)
        }
        Command::Subgroup { data, opts } => {
            let config = opts.config()?;
            let report = pipeline::subgroups(&load_dataset(&data)?, &config)?;
            match opts.format()? {
                ReportFormat::Human => emit(&render_subgroup(&report))?,
                ReportFormat::Json => emit(&to_json(&report)?)?,
            }
            Ok(EXIT_ACCEPT)
        }
        Command::Simulate {
            config,
            seed,
            out,
            overrides,
        } => {
            let mut sim = match config {
                Some(path) => SimConfig::from_kv_text(&read_text(&path)?)?,
                None => SimConfig::default(),
            };
            for kv in &overrides {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
                sim.set(k.trim(), v.trim())?;
            }
            if let Some(seed) = seed {
                sim.seed = seed;
            }
            sim.validate()?;
            let dataset = generate_experiment(&sim)?;
            write_atomic(&out, dataset_to_csv(&dataset)?.as_bytes())?;
            eprintln!(
                "wrote {} campaigns, {} parts to {}",
                dataset.n(),
                dataset.part_count(),
                out.display()
            );
            Ok(EXIT_ACCEPT)
        }
        Command::Report { saved, format } => {
            let format: ReportFormat = format.parse()?;
            let report = load_report(&read_text(&saved)?)?;
            emit(&render_report(&report, format)?)?;
            Ok(verdict_code(&report))
        }
    }
}

fn verdict_code(report: &roi_meta::EvaluationReport) -> u8 {
    if report.decision.verdict.is_accept() {
        EXIT_ACCEPT
    } else {
        EXIT_REJECT
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
