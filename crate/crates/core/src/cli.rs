//! Scenario runner behind the `laqkd` binary.
//!
//! Every command is a plain function over a [`ScenarioConfig`] writing to a
//! caller-supplied sink, so the same paths are usable from tests and
//! examples. [`main_with_args`] parses flags and maps errors to exit codes:
//! 0 ok, 1 verification failure, 64 usage or configuration, 65 backup depleted.

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{
    construct_constrained_probe_with_dim, mutual_information, probe_leakage_unchecked,
    AnnouncePolicy, AttackReport, AttackStrategy, BasisPolicy, Eavesdropper, EveRecord,
    LeakageReport, ProbeInstance, DEFAULT_PROBE_DIM,
};
use crate::keymat::{read_key_file, MasterKeyStore};
use crate::metrics::{
    self, Coefficients, MetricsReport, ReferenceRow, TransmissionSchedule, TtcBreakdown,
    REFERENCE_ROWS,
};
use crate::protocols::{self, ProtocolConfig, ProtocolError, TableReport, Transcript};
use crate::qstate::{BellOutcome, Qubit};
use crate::Protocol;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DEPLETED: i32 = 65;

/// Random stream of trial `t` is `TRIAL_STREAM_BASE + t` under the master seed.
pub const TRIAL_STREAM_BASE: u64 = 1 << 32;
const PROBE_STREAM: u64 = 2;
/// Samples drawn by the single-position leakage estimator.
pub const LEAKAGE_SAMPLES: usize = 100_000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("backup key depleted: {0}")]
    BackupDepleted(String),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => EXIT_USAGE,
            CliError::Verification(_) => EXIT_VERIFY,
            CliError::BackupDepleted(_) => EXIT_DEPLETED,
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        if e.is_backup_depleted() {
            CliError::BackupDepleted(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

/// Adversary named on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdversarySpec {
    Passive,
    Intercept(BasisPolicy),
    Tp(AnnouncePolicy),
    ProbeConstrained { dim: usize },
    ProbeRandom { dim: usize },
    ProbeCopy,
}

impl AdversarySpec {
    pub fn is_probe(&self) -> bool {
        matches!(
            self,
            AdversarySpec::ProbeConstrained { .. }
                | AdversarySpec::ProbeRandom { .. }
                | AdversarySpec::ProbeCopy
        )
    }

    /// The probe this spec describes, built from `rng`.
    pub fn probe(&self, protocol: Protocol, rng: &mut ChaCha8Rng) -> Option<ProbeInstance> {
        match *self {
            AdversarySpec::ProbeConstrained { dim } => {
                Some(construct_constrained_probe_with_dim(protocol, dim, rng).ok()?)
            }
            AdversarySpec::ProbeRandom { dim } => {
                Some(ProbeInstance::random_unconstrained(protocol, dim, rng).ok()?)
            }
            AdversarySpec::ProbeCopy => Some(ProbeInstance::copy_probe(protocol)),
            _ => None,
        }
    }

    pub fn strategy(&self, probe: Option<&ProbeInstance>) -> AttackStrategy {
        match (*self, probe) {
            (AdversarySpec::Intercept(basis_policy), _) => {
                AttackStrategy::InterceptResend { basis_policy }
            }
            (AdversarySpec::Tp(announce_policy), _) => {
                AttackStrategy::MaliciousTp { announce_policy }
            }
            (_, Some(p)) => AttackStrategy::EntanglingProbe { probe: p.clone() },
            _ => AttackStrategy::Passive,
        }
    }
}

impl fmt::Display for AdversarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversarySpec::Passive => f.write_str("passive"),
            AdversarySpec::Intercept(p) => write!(f, "intercept-{p}"),
            AdversarySpec::Tp(p) => write!(f, "tp-{p}"),
            AdversarySpec::ProbeConstrained { dim } => write!(f, "probe-constrained:{dim}"),
            AdversarySpec::ProbeRandom { dim } => write!(f, "probe-random:{dim}"),
            AdversarySpec::ProbeCopy => f.write_str("probe-copy"),
        }
    }
}

impl FromStr for AdversarySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        let bad = || format!("unknown adversary `{s}`");
        let dim = |rest: Option<&str>| -> Result<usize, String> {
            rest.map_or(Ok(DEFAULT_PROBE_DIM), |d| d.parse().map_err(|_| bad()))
        };
        if s == "passive" || s == "none" {
            return Ok(AdversarySpec::Passive);
        }
        if let Some(rest) = s.strip_prefix("intercept-") {
            let policy = match rest {
                "z" => BasisPolicy::Z,
                "x" => BasisPolicy::X,
                "random" => BasisPolicy::Random,
                "breidbart" => BasisPolicy::Breidbart,
                other => match other.strip_prefix("angle:") {
                    Some(t) => BasisPolicy::Angle(t.parse().map_err(|_| bad())?),
                    None => return Err(bad()),
                },
            };
            return Ok(AdversarySpec::Intercept(policy));
        }
        if let Some(rest) = s.strip_prefix("tp-") {
            let policy = match rest {
                "truthful" => AnnouncePolicy::Truthful,
                "random" => AnnouncePolicy::UniformRandom,
                "flip" => AnnouncePolicy::FlipWithinPair,
                "drop" => AnnouncePolicy::Drop,
                other => match other.strip_prefix("constant:").and_then(BellOutcome::parse) {
                    Some(o) => AnnouncePolicy::Constant(o),
                    None => return Err(bad()),
                },
            };
            return Ok(AdversarySpec::Tp(policy));
        }
        if let Some(rest) = s.strip_prefix("probe-") {
            let (kind, arg) = match rest.split_once(':') {
                Some((k, a)) => (k, Some(a)),
                None => (rest, None),
            };
            return match kind {
                "constrained" => Ok(AdversarySpec::ProbeConstrained { dim: dim(arg)? }),
                "random" => Ok(AdversarySpec::ProbeRandom { dim: dim(arg)? }),
                "copy" if arg.is_none() => Ok(AdversarySpec::ProbeCopy),
                _ => Err(bad()),
            };
        }
        Err(bad())
    }
}

/// Contents of a `--config` file. Every field is optional; flags override.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub protocol: Option<Protocol>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub n_prime: Option<usize>,
    pub l: Option<usize>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub adversary: Option<String>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub keys: Option<PathBuf>,
    pub grid_protocols: Option<Vec<Protocol>>,
    pub grid_n: Option<Vec<usize>>,
    pub grid_m: Option<Vec<usize>>,
}

/// Fully resolved scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub protocol: Protocol,
    pub n: usize,
    pub m: usize,
    pub n_prime: usize,
    /// Backup bits per master key.
    pub l: usize,
    pub trials: usize,
    pub seed: u64,
    pub adversary: AdversarySpec,
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    /// Key file shared by all trials, which then run in sequence.
    pub keys: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn new(protocol: Protocol, n: usize, m: usize, trials: usize, seed: u64) -> Self {
        Self {
            protocol,
            n,
            m,
            n_prime: ProtocolConfig::default_n_prime(n),
            l: 256,
            trials,
            seed,
            adversary: AdversarySpec::Passive,
            jobs: None,
            out: None,
            keys: None,
        }
    }

    pub fn with_adversary(mut self, adversary: AdversarySpec) -> Self {
        self.adversary = adversary;
        self
    }

    pub fn from_file(file: &ConfigFile) -> Result<Self, CliError> {
        let n = file.n.unwrap_or(128);
        let mut config = Self::new(
            file.protocol.unwrap_or(Protocol::P1),
            n,
            file.m.unwrap_or(64),
            file.trials.unwrap_or(1),
            file.seed.unwrap_or(0),
        );
        config.n_prime = file.n_prime.unwrap_or(ProtocolConfig::default_n_prime(n));
        config.l = file.l.unwrap_or(config.l);
        if let Some(a) = &file.adversary {
            config.adversary = a.parse().map_err(CliError::Usage)?;
        }
        config.jobs = file.jobs;
        config.out = file.out.clone();
        config.keys = file.keys.clone();
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.trials == 0 {
            return Err(CliError::Usage("trials must be at least 1".into()));
        }
        if self.jobs == Some(0) {
            return Err(CliError::Usage("jobs must be at least 1".into()));
        }
        self.protocol_config()?;
        Ok(())
    }

    pub fn protocol_config(&self) -> Result<ProtocolConfig, CliError> {
        ProtocolConfig::new(self.protocol, self.n, self.m, self.n_prime, self.seed)
            .map_err(CliError::from)
    }

    /// Random stream of one trial.
    pub fn trial_rng(&self, trial: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(TRIAL_STREAM_BASE + trial as u64);
        rng
    }

    fn probe(&self) -> Result<Option<ProbeInstance>, CliError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(PROBE_STREAM);
        match self.adversary.probe(self.protocol, &mut rng) {
            None if self.adversary.is_probe() => Err(CliError::Usage(format!(
                "cannot build {} for {}",
                self.adversary, self.protocol
            ))),
            probe => Ok(probe),
        }
    }
}

/// One finished trial.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial: usize,
    pub transcript: Transcript,
    pub record: EveRecord,
}

fn in_pool<T: Send>(jobs: Option<usize>, work: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match jobs {
        None => Ok(work()),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(pool.install(work))
        }
    }
}

/// Runs every trial of `config`. Results are in trial order whatever the
/// thread count.
pub fn run_trials(config: &ScenarioConfig) -> Result<Vec<TrialResult>, CliError> {
    config.validate()?;
    let pc = config.protocol_config()?;
    let probe = config.probe()?;
    let strategy = config.adversary.strategy(probe.as_ref());
    let one = |trial: usize, store: &mut MasterKeyStore, rng: &mut ChaCha8Rng| {
        let mut eve = Eavesdropper::new(strategy.clone());
        let transcript = protocols::run(&pc, store, &mut eve, rng)?;
        Ok::<_, ProtocolError>(TrialResult {
            trial,
            transcript,
            record: eve.take_record(),
        })
    };
    if let Some(path) = &config.keys {
        let (header, mut store) = read_keys(path)?;
        if (header.protocol, header.n, header.m) != (config.protocol, config.n, config.m) {
            return Err(CliError::Usage(format!(
                "key file is for {} n={} m={}",
                header.protocol, header.n, header.m
            )));
        }
        return (0..config.trials)
            .map(|t| one(t, &mut store, &mut config.trial_rng(t)).map_err(CliError::from))
            .collect();
    }
    let results = in_pool(config.jobs, || {
        (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = config.trial_rng(t);
                let mut store = MasterKeyStore::generate(
                    config.protocol,
                    config.n,
                    config.m,
                    config.l,
                    &mut rng,
                );
                one(t, &mut store, &mut rng)
            })
            .collect::<Vec<_>>()
    })?;
    results
        .into_iter()
        .map(|r| r.map_err(CliError::from))
        .collect()
}

fn read_keys(path: &Path) -> Result<(crate::keymat::KeyFileHeader, MasterKeyStore), CliError> {
    let file = File::open(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    read_key_file(BufReader::new(file))
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Aggregate printed by `run`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunAggregate {
    pub protocol: Protocol,
    pub n: usize,
    pub m: usize,
    pub n_prime: usize,
    pub adversary: String,
    pub trials: usize,
    pub seed: u64,
    pub success_rate: f64,
    pub abort_rate: f64,
    /// Fraction of successful runs in which both session keys are equal.
    pub key_agreement_rate: Option<f64>,
    pub decode_error_rate: f64,
}

pub fn aggregate(config: &ScenarioConfig, results: &[TrialResult]) -> RunAggregate {
    let trials = results.len().max(1) as f64;
    let successes = results
        .iter()
        .filter(|r| r.transcript.outcome.is_success())
        .count();
    let agree = results
        .iter()
        .filter(|r| r.transcript.outcome.keys_agree())
        .count();
    let positions: usize = results.iter().map(|r| r.transcript.positions.len()).sum();
    let errors: usize = results.iter().map(|r| r.transcript.decode_errors()).sum();
    RunAggregate {
        protocol: config.protocol,
        n: config.n,
        m: config.m,
        n_prime: config.n_prime,
        adversary: config.adversary.to_string(),
        trials: results.len(),
        seed: config.seed,
        success_rate: successes as f64 / trials,
        abort_rate: (results.len() - successes) as f64 / trials,
        key_agreement_rate: (successes > 0).then(|| agree as f64 / successes as f64),
        decode_error_rate: if positions == 0 {
            0.0
        } else {
            errors as f64 / positions as f64
        },
    }
}

fn open_out(path: &Path) -> Result<io::BufWriter<File>, CliError> {
    File::create(path)
        .map(io::BufWriter::new)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn json_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("report serialises")
}

/// Runs the trials, writes one summary line per trial to `config.out` (or
/// full per-position records when `full` is set) and prints the aggregate.
pub fn cmd_run(
    config: &ScenarioConfig,
    full: bool,
    stdout: &mut dyn Write,
) -> Result<RunAggregate, CliError> {
    let results = run_trials(config)?;
    if let Some(path) = &config.out {
        let mut out = open_out(path)?;
        for r in &results {
            if full {
                out.write_all(r.transcript.to_jsonl(Some(r.trial)).as_bytes())?;
            } else {
                writeln!(out, "{}", r.transcript.summary_json(Some(r.trial)))?;
            }
        }
        out.flush()?;
    }
    let agg = aggregate(config, &results);
    writeln!(stdout, "{}", json_line(&agg))?;
    Ok(agg)
}

/// Prints every table row; fails naming the first mismatching row.
pub fn cmd_verify_tables(
    report: &TableReport,
    json: bool,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    if json {
        writeln!(stdout, "{}", json_line(report))?;
    } else {
        writeln!(stdout, "{report}")?;
    }
    match report.mismatches().next() {
        None => Ok(()),
        Some(row) => Err(CliError::Verification(format!("row mismatch: {row}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsOutput {
    pub reports: Vec<MetricsReport>,
    pub references: Vec<ReferenceRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
}

pub fn cmd_metrics(
    protocols: &[Protocol],
    n: usize,
    m: usize,
    l: usize,
    mode: Coefficients,
    format: OutputFormat,
    stdout: &mut dyn Write,
) -> Result<MetricsOutput, CliError> {
    let reports = protocols
        .iter()
        .map(|&p| metrics::metrics_report(p, n, m, l, mode))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let output = MetricsOutput {
        reports,
        references: REFERENCE_ROWS.to_vec(),
    };
    match format {
        OutputFormat::Json => writeln!(stdout, "{}", json_line(&output))?,
        OutputFormat::Text => write!(stdout, "{}", metrics::render_table(&output.reports, true))?,
    }
    Ok(output)
}

/// TTC of a schedule read from a JSON event list.
pub fn cmd_schedule(
    path: &Path,
    format: OutputFormat,
    stdout: &mut dyn Write,
) -> Result<TtcBreakdown, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
    let schedule: TransmissionSchedule = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CliError::Usage(format!("bad schedule {}: {e}", path.display())))?;
    let b = schedule
        .ttc_breakdown()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    match format {
        OutputFormat::Json => writeln!(stdout, "{}", json_line(&b))?,
        OutputFormat::Text => writeln!(
            stdout,
            "TTC {} = q {} + b {} - shared {}",
            b.ttc, b.quantum_waves, b.classical_waves, b.shared_waves
        )?,
    }
    Ok(b)
}

fn encoded_value(result: &TrialResult, position: usize, qubit: Option<Qubit>) -> Option<u8> {
    let record = result.transcript.positions.get(position)?;
    Some(match qubit {
        Some(Qubit::B) => record.b_bit,
        _ => record.a_bit,
    })
}

/// Builds the attack report from finished trials.
pub fn attack_report(
    config: &ScenarioConfig,
    results: &[TrialResult],
    leakage: Option<&LeakageReport>,
) -> AttackReport {
    let agg = aggregate(config, results);
    let mut table = vec![vec![0.0; 2]; 2];
    let mut hits = 0usize;
    let mut total = 0usize;
    for r in results {
        for i in &r.record.intercepted {
            if let Some(truth) = encoded_value(r, i.position, i.qubit) {
                table[truth as usize][(i.outcome & 1) as usize] += 1.0;
                total += 1;
                hits += usize::from(truth == i.outcome);
            }
        }
    }
    let intercepts = matches!(config.adversary, AdversarySpec::Intercept(_));
    let (mi, td, residual) = match (leakage, config.adversary) {
        (Some(l), _) => (
            Some(l.mi_estimate),
            Some(l.max_trace_distance),
            Some(l.residual),
        ),
        (None, AdversarySpec::Passive) => (Some(0.0), Some(0.0), None),
        (None, _) if intercepts => (Some(mutual_information(&table)), None, None),
        _ => (None, None, None),
    };
    AttackReport {
        strategy: config.adversary.to_string(),
        protocol: config.protocol,
        trials: results.len(),
        detection_rate: agg.abort_rate,
        per_position_disturbance: agg.decode_error_rate,
        mi_estimate: mi,
        max_trace_distance: td,
        residual,
        value_guess_accuracy: (total > 0).then(|| hits as f64 / total as f64),
    }
}

/// Runs the attack scenario and prints an [`AttackReport`]. Probe attacks
/// also get a single-position leakage estimate for the same probe.
pub fn cmd_attack(
    config: &ScenarioConfig,
    stdout: &mut dyn Write,
) -> Result<AttackReport, CliError> {
    let results = run_trials(config)?;
    let leakage = match config.probe()? {
        Some(probe) => {
            let mut rng = config.trial_rng(config.trials);
            Some(
                probe_leakage_unchecked(&probe, LEAKAGE_SAMPLES, &mut rng)
                    .map_err(|e| CliError::Usage(e.to_string()))?,
            )
        }
        None => None,
    };
    let report = attack_report(config, &results, leakage.as_ref());
    let line = json_line(&report);
    writeln!(stdout, "{line}")?;
    if let Some(path) = &config.out {
        let mut out = open_out(path)?;
        writeln!(out, "{line}")?;
        out.flush()?;
    }
    Ok(report)
}

/// Parameter grid for `sweep`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepGrid {
    pub protocols: Vec<Protocol>,
    pub n: Vec<usize>,
    pub m: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub protocol: Protocol,
    pub n: usize,
    pub m: usize,
    pub n_prime: usize,
    pub l: usize,
    pub adversary: String,
    pub trials: usize,
    pub seed: u64,
    pub success_rate: f64,
    pub abort_rate: f64,
    pub key_agreement_rate: Option<f64>,
    pub decode_error_rate: f64,
    pub qe: String,
    pub psk_bits: u64,
    pub ttc: usize,
    pub rate_k1: f64,
    pub rate_k2: Option<f64>,
}

/// Runs `config` at every grid point and writes one CSV row per point.
pub fn cmd_sweep(
    config: &ScenarioConfig,
    grid: &SweepGrid,
    out: &mut dyn Write,
) -> Result<Vec<SweepRow>, CliError> {
    let mut rows = Vec::new();
    for &protocol in &grid.protocols {
        for &n in &grid.n {
            for &m in &grid.m {
                let point = ScenarioConfig {
                    protocol,
                    n,
                    m,
                    n_prime: ProtocolConfig::default_n_prime(n),
                    ..config.clone()
                };
                let agg = aggregate(&point, &run_trials(&point)?);
                let report =
                    metrics::metrics_report(protocol, n, m, point.l, Coefficients::Printed)
                        .map_err(|e| CliError::Usage(e.to_string()))?;
                rows.push(SweepRow {
                    protocol,
                    n,
                    m,
                    n_prime: point.n_prime,
                    l: point.l,
                    adversary: agg.adversary,
                    trials: agg.trials,
                    seed: point.seed,
                    success_rate: agg.success_rate,
                    abort_rate: agg.abort_rate,
                    key_agreement_rate: agg.key_agreement_rate,
                    decode_error_rate: agg.decode_error_rate,
                    qe: report.qe,
                    psk_bits: report.psk_bits,
                    ttc: report.ttc.ttc,
                    rate_k1: report.recycling[0].rate,
                    rate_k2: report.recycling.get(1).map(|r| r.rate),
                });
            }
        }
    }
    let mut writer = csv::Writer::from_writer(out);
    for row in &rows {
        writer
            .serialize(row)
            .map_err(|e| CliError::Io(io::Error::other(e)))?;
    }
    writer.flush()?;
    Ok(rows)
}

#[derive(Debug, Parser)]
#[command(
    name = "laqkd",
    version,
    about = "Simulate and analyse lightweight authenticated QKD protocols"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run protocol trials and print success/abort rates.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Write per-position records as well as summaries to --out.
        #[arg(long)]
        full: bool,
    },
    /// Check every row of the encoding tables against the simulator.
    VerifyTables {
        #[arg(long)]
        json: bool,
    },
    /// Print efficiency, key cost, recycling rate and TTC.
    Metrics {
        /// Defaults to all three protocols.
        #[arg(long)]
        protocol: Option<Protocol>,
        #[arg(long, default_value_t = 128)]
        n: usize,
        #[arg(long, default_value_t = 64)]
        m: usize,
        #[arg(long, default_value_t = 256)]
        l: usize,
        /// Use 0.328m instead of 0.33m for the K1 leakage.
        #[arg(long)]
        exact: bool,
        #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
        format: OutputFormat,
        /// Report the TTC of a JSON schedule file instead.
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Run an attack scenario and print its report.
    Attack {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Run a scenario over a grid of parameters and write CSV.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_delimiter = ',')]
        grid_protocols: Vec<Protocol>,
        #[arg(long, value_delimiter = ',')]
        grid_n: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        grid_m: Vec<usize>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct ScenarioArgs {
    /// JSON scenario file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub protocol: Option<Protocol>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long = "nprime")]
    pub n_prime: Option<usize>,
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub adversary: Option<String>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Key file shared by all trials.
    #[arg(long)]
    pub keys: Option<PathBuf>,
}

impl ScenarioArgs {
    /// Config file contents with the flags applied on top.
    pub fn merged(&self) -> Result<ConfigFile, CliError> {
        let mut file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            }
            None => ConfigFile::default(),
        };
        macro_rules! over {
            ($($f:ident),*) => { $( if self.$f.is_some() { file.$f = self.$f.clone(); } )* };
        }
        over!(protocol, n, m, n_prime, l, trials, seed, adversary, jobs, out, keys);
        Ok(file)
    }
}

fn pick<T: Clone>(flag: &[T], file: Option<&Vec<T>>, fallback: T) -> Vec<T> {
    if !flag.is_empty() {
        flag.to_vec()
    } else {
        file.cloned().unwrap_or_else(|| vec![fallback])
    }
}

/// Parses `args` and runs the command, returning the exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if code == EXIT_OK {
                write!(stdout, "{e}")
            } else {
                write!(stderr, "{e}")
            };
            return code;
        }
    };
    match dispatch(&cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "laqkd: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: &Command, stdout: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Run { scenario, full } => {
            let config = ScenarioConfig::from_file(&scenario.merged()?)?;
            cmd_run(&config, *full, stdout).map(drop)
        }
        Command::VerifyTables { json } => {
            cmd_verify_tables(&protocols::verify_tables(), *json, stdout)
        }
        Command::Metrics {
            protocol,
            n,
            m,
            l,
            exact,
            format,
            schedule,
        } => {
            if let Some(path) = schedule {
                return cmd_schedule(path, *format, stdout).map(drop);
            }
            let list = protocol.map_or(Protocol::ALL.to_vec(), |p| vec![p]);
            let mode = if *exact {
                Coefficients::Exact
            } else {
                Coefficients::Printed
            };
            cmd_metrics(&list, *n, *m, *l, mode, *format, stdout).map(drop)
        }
        Command::Attack { scenario } => {
            let config = ScenarioConfig::from_file(&scenario.merged()?)?;
            cmd_attack(&config, stdout).map(drop)
        }
        Command::Sweep {
            scenario,
            grid_protocols,
            grid_n,
            grid_m,
        } => {
            let file = scenario.merged()?;
            let config = ScenarioConfig::from_file(&file)?;
            let grid = SweepGrid {
                protocols: pick(
                    grid_protocols,
                    file.grid_protocols.as_ref(),
                    config.protocol,
                ),
                n: pick(grid_n, file.grid_n.as_ref(), config.n),
                m: pick(grid_m, file.grid_m.as_ref(), config.m),
            };
            match &config.out {
                Some(path) => {
                    let mut out = open_out(path)?;
                    cmd_sweep(&config, &grid, &mut out)?;
                    out.flush()?;
                    Ok(())
                }
                None => cmd_sweep(&config, &grid, stdout).map(drop),
            }
        }
    }
}
