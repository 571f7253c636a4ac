//! Experiment pipelines behind the `fairflip` binary.
//!
//! Each pipeline turns an [`ExperimentConfig`] into a single [`Report`]: JSON for nested results,
//! CSV for tables. A report passes when every bound it asserts holds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use fairflip::attacks::{a_star_certify, a_star_threshold, AttackConfig, AttackerKind, GValues, OracleMode};
use fairflip::estimator::{estimator_experiment, Sampling};
use fairflip::independence::{attack_correlation, AbortTest};
use fairflip::oracle::{is_martingale, jump_threshold, BiasSummary, Conditioning};
use fairflip::protocol::validate;
use fairflip::{zoo, ExactOracle, ForecasterSpec, MeasureMode, PartyId};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    Validate,
    Martingale,
    Attack,
    Estimator,
    Independence,
    Certify,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Theta {
    /// The pipeline's own threshold.
    Auto,
    Value(f64),
}

impl std::str::FromStr for Theta {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(Theta::Auto);
        }
        s.parse().map(Theta::Value).map_err(|_| format!("expected `auto` or a number, got `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleChoice {
    ExactG,
    Estimator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureChoice {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditioningChoice {
    Transcript,
    Forecast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub pipeline: Pipeline,
    /// Zoo entry as `name[:param...]`.
    pub protocol: String,
    pub k: u32,
    pub rho: Option<f64>,
    pub attacker: AttackerKind,
    pub corrupted: PartyId,
    pub target: u8,
    pub oracle: OracleChoice,
    pub sampling: Sampling,
    pub measure: MeasureChoice,
    pub samples: u64,
    pub seed: Option<u64>,
    pub trials: u64,
    pub theta: Theta,
    pub conditioning: ConditioningChoice,
    /// Restricts per-party pipelines to one party.
    pub party: Option<PartyId>,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(pipeline: Pipeline, protocol: impl Into<String>) -> Self {
        ExperimentConfig {
            pipeline,
            protocol: protocol.into(),
            k: fairflip::forecaster::DEFAULT_BITS,
            rho: None,
            attacker: AttackerKind::Ci,
            corrupted: PartyId::A,
            target: 1,
            oracle: OracleChoice::ExactG,
            sampling: Sampling::default(),
            measure: MeasureChoice::Exact,
            samples: 1 << 20,
            seed: None,
            trials: 200,
            theta: Theta::Auto,
            conditioning: ConditioningChoice::Transcript,
            party: None,
            output: None,
        }
    }

    fn sampled(&self) -> bool {
        self.pipeline == Pipeline::Estimator
            || self.oracle == OracleChoice::Estimator
                && matches!(self.pipeline, Pipeline::Attack | Pipeline::Certify)
            || self.measure == MeasureChoice::Sampled && self.pipeline == Pipeline::Attack
    }

    pub fn check(&self) -> Result<()> {
        if self.sampled() && self.seed.is_none() {
            bail!("--seed is required for sampled modes");
        }
        if self.target > 1 {
            bail!("--target must be 0 or 1");
        }
        if self.pipeline == Pipeline::Estimator && self.rho.is_none() {
            bail!("--rho is required for the estimator pipeline");
        }
        if let Theta::Value(t) = self.theta {
            if !(t > 0.0) {
                bail!("--theta must be positive");
            }
        }
        Ok(())
    }

    fn rho(&self) -> f64 {
        self.rho.unwrap_or(0.0)
    }

    fn oracle_mode(&self) -> OracleMode {
        match self.oracle {
            OracleChoice::ExactG => OracleMode::ExactG,
            OracleChoice::Estimator => {
                OracleMode::Estimator { seed: self.seed.unwrap_or_default(), sampling: self.sampling }
            }
        }
    }

    fn parties(&self) -> Vec<PartyId> {
        self.party.map_or(PartyId::BOTH.to_vec(), |p| vec![p])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub format: Format,
    pub body: String,
    /// Whether every asserted bound holds.
    pub passed: bool,
}

impl Report {
    pub fn write_to(&self, path: Option<&Path>) -> Result<()> {
        match path {
            Some(p) => std::fs::write(p, &self.body).with_context(|| format!("writing {}", p.display())),
            None => {
                print!("{}", self.body);
                Ok(())
            }
        }
    }
}

fn json<T: Serialize>(value: &T, passed: bool) -> Result<Report> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    Ok(Report { format: Format::Json, body, passed })
}

fn csv<T: Serialize>(rows: &[T], header: &[&str], passed: bool) -> Result<Report> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    let body = String::from_utf8(w.into_inner()?)?;
    Ok(Report { format: Format::Csv, body, passed })
}

/// Runs the configured pipeline and writes its report to the configured output, or stdout.
pub fn run(config: &ExperimentConfig) -> Result<Report> {
    let report = execute(config)?;
    report.write_to(config.output.as_deref())?;
    Ok(report)
}

/// Runs the configured pipeline without writing anything.
pub fn execute(config: &ExperimentConfig) -> Result<Report> {
    config.check()?;
    let spec = zoo::parse(&config.protocol)?;
    match config.pipeline {
        Pipeline::Validate => validate_pipeline(&spec),
        Pipeline::Martingale => martingale_pipeline(config, &spec),
        Pipeline::Attack => attack_pipeline(config, &spec),
        Pipeline::Estimator => {
            let f = ForecasterSpec::new(&spec, config.k)?;
            let rho = config.rho();
            let res = estimator_experiment(&f, rho, config.trials, config.seed.unwrap_or_default(), config.sampling)?;
            let passed = res.passed();
            csv(&[res], &["protocol", "k", "rho", "v", "trials", "failures", "failure_rate", "seed"], passed)
        }
        Pipeline::Independence => independence_pipeline(config, &spec),
        Pipeline::Certify => {
            let f = ForecasterSpec::new(&spec, config.k)?;
            let rep = a_star_certify(&f, config.rho(), config.oracle_mode())?;
            let passed = rep.passed();
            json(&Versioned { schema_version: SCHEMA_VERSION, report: rep }, passed)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    schema_version: u32,
    #[serde(flatten)]
    report: T,
}

fn validate_pipeline(spec: &fairflip::ProtocolSpec) -> Result<Report> {
    let rep = validate(spec)?;
    let passed = rep.passed();
    json(&Versioned { schema_version: SCHEMA_VERSION, report: rep }, passed)
}

#[derive(Serialize)]
struct MartingaleRow {
    protocol: String,
    conditioning: &'static str,
    k: Option<u32>,
    theta: f64,
    gap_probability: f64,
    gap_probability_exact: String,
    bound: Option<f64>,
    martingale: bool,
    pass: bool,
}

fn martingale_pipeline(config: &ExperimentConfig, spec: &fairflip::ProtocolSpec) -> Result<Report> {
    let oracle = ExactOracle::new(spec)?;
    let r = spec.rounds();
    let (theta, bound) = match config.theta {
        Theta::Auto => (jump_threshold(r), Some(1.0 / 20.0)),
        Theta::Value(t) => (t, None),
    };
    let forecaster;
    let (cond, name, k) = match config.conditioning {
        ConditioningChoice::Transcript => (Conditioning::Transcript, "transcript", None),
        ConditioningChoice::Forecast => {
            forecaster = ForecasterSpec::from_tree(oracle.tree().clone(), config.k)?;
            (Conditioning::Forecast(&forecaster), "forecast", Some(config.k))
        }
    };
    let seqs = oracle.doob_martingale(cond)?;
    let martingale = is_martingale(&seqs);
    let p = oracle.gap_probability(theta, cond)?;
    let pf = fairflip::num::to_f64(&p);
    let pass = martingale && bound.is_none_or(|b| pf >= b - 1e-12);
    let row = MartingaleRow {
        protocol: spec.name(),
        conditioning: name,
        k,
        theta,
        gap_probability: pf,
        gap_probability_exact: fairflip::num::display(&p),
        bound,
        martingale,
        pass,
    };
    csv(
        &[row],
        &["protocol", "conditioning", "k", "theta", "gap_probability", "gap_probability_exact", "bound", "martingale", "pass"],
        pass,
    )
}

/// JSON written by the attack pipeline and read back by `report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub schema_version: u32,
    pub rounds: usize,
    pub attacker: AttackerKind,
    pub k: u32,
    pub rho: f64,
    pub theta: f64,
    pub oracle: OracleMode,
    /// Optimal bias for the same party and target, when the measurement is exact.
    pub optimal_bias: Option<f64>,
    #[serde(flatten)]
    pub summary: BiasSummary,
}

fn attack_pipeline(config: &ExperimentConfig, spec: &fairflip::ProtocolSpec) -> Result<Report> {
    let f = ForecasterSpec::new(spec, config.k)?;
    let mut attack = AttackConfig::new(config.attacker, config.corrupted, config.target);
    attack.rho = config.rho();
    attack.mode = config.oracle_mode();
    if let Theta::Value(t) = config.theta {
        attack.theta = Some(t);
    }
    let strategy = attack.strategy(&f)?;
    let measure = match config.measure {
        MeasureChoice::Exact => MeasureMode::Exact,
        MeasureChoice::Sampled => MeasureMode::Sampled { n: config.samples, seed: config.seed.unwrap_or_default() },
    };
    let report = fairflip::oracle::measure_bias(spec, &strategy, measure)?;
    let (optimal_bias, passed) = if measure == MeasureMode::Exact {
        let (best, _) = ExactOracle::from_tree(f.tree().clone()).optimal_failstop(config.corrupted, config.target)?;
        (Some(fairflip::num::to_f64(&best)), report.bias() <= best)
    } else {
        (None, true)
    };
    let out = AttackReport {
        schema_version: SCHEMA_VERSION,
        rounds: spec.rounds(),
        attacker: config.attacker,
        k: config.k,
        rho: attack.rho,
        theta: attack.threshold(spec.rounds()),
        oracle: attack.mode,
        optimal_bias,
        summary: report.summary(),
    };
    json(&out, passed)
}

fn independence_pipeline(config: &ExperimentConfig, spec: &fairflip::ProtocolSpec) -> Result<Report> {
    let f = ForecasterSpec::new(spec, config.k)?;
    let g = GValues::compute(&f, config.rho(), OracleMode::ExactG)?;
    let theta = match config.theta {
        Theta::Auto => a_star_threshold(spec.rounds()),
        Theta::Value(t) => t,
    };
    let mut rows = Vec::new();
    for party in config.parties() {
        let test = AbortTest::threshold(party, 0, theta);
        for row in attack_correlation(&f, &test, &g)? {
            rows.push(row.row(&spec.name(), config.k, party));
        }
    }
    let passed = rows.iter().all(|r| r.pass);
    #[derive(Serialize)]
    struct Row<'a> {
        protocol: &'a str,
        k: u32,
        round: usize,
        party: PartyId,
        corr: f64,
        bound: f64,
        pass: bool,
    }
    let flat: Vec<Row> = rows
        .iter()
        .map(|r| Row {
            protocol: &r.protocol,
            k: r.k,
            round: r.round,
            party: r.party,
            corr: r.corr,
            bound: r.bound,
            pass: r.pass,
        })
        .collect();
    csv(&flat, &["protocol", "k", "round", "party", "corr", "bound", "pass"], passed)
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub protocol: String,
    pub attacker: String,
    pub corrupted: PartyId,
    pub target: u8,
    pub bias: f64,
    pub floor_640: f64,
    pub pass_640: bool,
    pub floor_6400: f64,
    pub pass_6400: bool,
    pub floor_25600: f64,
    pub pass_25600: bool,
}

const SUMMARY_HEADER: [&str; 11] = [
    "protocol",
    "attacker",
    "corrupted",
    "target",
    "bias",
    "floor_640",
    "pass_640",
    "floor_6400",
    "pass_6400",
    "floor_25600",
    "pass_25600",
];

impl SummaryRow {
    pub fn from_attack(rep: &AttackReport) -> Self {
        let s = (rep.rounds as f64).sqrt();
        let b = rep.summary.bias;
        let [f1, f2, f3] = [640.0, 6400.0, 25600.0].map(|c| 1.0 / (c * s));
        SummaryRow {
            protocol: rep.summary.protocol.clone(),
            attacker: rep.summary.strategy.clone(),
            corrupted: rep.summary.corrupted,
            target: rep.summary.target,
            bias: b,
            floor_640: f1,
            pass_640: b >= f1,
            floor_6400: f2,
            pass_6400: b >= f2,
            floor_25600: f3,
            pass_25600: b >= f3,
        }
    }

    fn passed(&self) -> bool {
        self.pass_640 && self.pass_6400 && self.pass_25600
    }
}

/// Expands shell-style patterns; plain paths are kept even when they do not exist, so that the
/// error names them.
pub fn expand(patterns: &[String]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in patterns {
        if p.contains(['*', '?', '[']) {
            let mut hits: Vec<PathBuf> =
                glob::glob(p).with_context(|| format!("bad pattern {p}"))?.collect::<std::result::Result<_, _>>()?;
            hits.sort();
            out.extend(hits);
        } else {
            out.push(PathBuf::from(p));
        }
    }
    Ok(out)
}

pub fn load_attack(path: &Path) -> Result<AttackReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| anyhow!("{}: not an attack report: {e}", path.display()))
}

/// Summarises attack reports into a table of bias against the three fairness floors.
pub fn report(paths: &[PathBuf], format: Format) -> Result<Report> {
    let rows = paths.iter().map(|p| load_attack(p).map(|r| SummaryRow::from_attack(&r))).collect::<Result<Vec<_>>>()?;
    let passed = rows.iter().all(SummaryRow::passed);
    match format {
        Format::Csv | Format::Json => csv(&rows, &SUMMARY_HEADER, passed),
        Format::Markdown => {
            let mut body = format!("| {} |\n|{}\n", SUMMARY_HEADER.join(" | "), "---|".repeat(SUMMARY_HEADER.len()));
            for r in &rows {
                writeln!(
                    body,
                    "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                    r.protocol,
                    r.attacker,
                    r.corrupted,
                    r.target,
                    r.bias,
                    r.floor_640,
                    r.pass_640,
                    r.floor_6400,
                    r.pass_6400,
                    r.floor_25600,
                    r.pass_25600
                )?;
            }
            Ok(Report { format, body, passed })
        }
    }
}
