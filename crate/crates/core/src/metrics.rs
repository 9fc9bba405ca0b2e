//! Closed-form protocol costs: key-recycling rates, qubit efficiency,
//! pre-shared key size and transmission time cost (TTC).

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::PI;
use std::fmt::Write as _;

use num_rational::Ratio;
use petgraph::algo::toposort;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keymat::KeyId;
use crate::qstate::{PhotonState, Unitary2};
use crate::Protocol;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("schedule has a dependency cycle")]
    Cycle,
    #[error("duplicate event id `{0}`")]
    DuplicateId(String),
    #[error("event `{event}` depends on unknown event `{dep}`")]
    UnknownDependency { event: String, dep: String },
    #[error("grid resolution {0} is below 360")]
    Resolution(usize),
    #[error("invalid lengths: {0}")]
    Lengths(String),
}

/// Per-photon leakage figures behind the recycling rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeakageModel {
    /// Bits of a photon's value an eavesdropper can learn.
    pub value_leak_per_photon: f64,
    /// Bits of a photon's basis learnable once its value is known.
    pub basis_leak_per_known_value: f64,
    pub max_value_guess_prob: f64,
}

pub const LEAKAGE_MODEL: LeakageModel = LeakageModel {
    value_leak_per_photon: 0.41,
    basis_leak_per_known_value: 0.40,
    max_value_guess_prob: 0.854,
};

/// Which coefficient to use for the `K1` leakage of the Bell-measurement
/// protocols: `0.33m` as rounded, or the unrounded `0.4 * 0.82m = 0.328m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coefficients {
    #[default]
    Printed,
    Exact,
}

/// Recycling rate of one master key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyRate {
    pub key: KeyId,
    pub key_bits: u64,
    /// Leaked bits, possibly fractional.
    pub leakage: Ratio<i64>,
    /// Rate after clamping to `[0, 1]`.
    pub rate: Ratio<i64>,
    /// Set when the formula went negative and the whole key must go.
    pub clamped: bool,
}

fn ratio_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

impl KeyRate {
    fn new(key: KeyId, key_bits: u64, leakage: Ratio<i64>) -> Self {
        if key_bits == 0 {
            return Self {
                key,
                key_bits,
                leakage,
                rate: Ratio::from_integer(1),
                clamped: false,
            };
        }
        let bits = Ratio::from_integer(key_bits as i64);
        let raw = (bits - leakage) / bits;
        let clamped = raw < Ratio::from_integer(0);
        Self {
            key,
            key_bits,
            leakage,
            rate: if clamped { Ratio::from_integer(0) } else { raw },
            clamped,
        }
    }

    pub fn rate_f64(&self) -> f64 {
        ratio_f64(self.rate)
    }

    pub fn leakage_f64(&self) -> f64 {
        ratio_f64(self.leakage)
    }

    /// Bits to discard after a detected attack: the leakage rounded up,
    /// capped at the key length.
    pub fn discard_bits(&self) -> usize {
        (self.leakage.ceil().to_integer().max(0) as u64).min(self.key_bits) as usize
    }
}

fn k1_leak_coefficient(mode: Coefficients) -> Ratio<i64> {
    match mode {
        Coefficients::Printed => Ratio::new(33, 100),
        Coefficients::Exact => Ratio::new(328, 1000),
    }
}

/// `(n + 0.67m) / (n + m)`, leaking `0.33m` bits of `K1`.
pub fn recycling_rate_p1(n: usize, m: usize) -> KeyRate {
    recycling_rate_p1_with(n, m, Coefficients::Printed)
}

pub fn recycling_rate_p1_with(n: usize, m: usize, mode: Coefficients) -> KeyRate {
    let leak = k1_leak_coefficient(mode) * Ratio::from_integer(m as i64);
    KeyRate::new(KeyId::K1, (n + m) as u64, leak)
}

/// Same rate as [`recycling_rate_p1`].
pub fn recycling_rate_p3(n: usize, m: usize) -> KeyRate {
    recycling_rate_p1(n, m)
}

/// `K1: (n - 0.8m) / n` and `K2: (n - 2m) / n`, each clamped at 0.
pub fn recycling_rate_p2(n: usize, m: usize) -> (KeyRate, KeyRate) {
    let m = Ratio::from_integer(m as i64);
    (
        KeyRate::new(KeyId::K1, n as u64, Ratio::new(4, 5) * m),
        KeyRate::new(KeyId::K2, n as u64, Ratio::from_integer(2) * m),
    )
}

/// Recycling rates for every master key of `protocol`.
pub fn recycling_rates(protocol: Protocol, n: usize, m: usize, mode: Coefficients) -> Vec<KeyRate> {
    match protocol {
        Protocol::P1 | Protocol::P3 => vec![recycling_rate_p1_with(n, m, mode)],
        Protocol::P2 => {
            let (k1, k2) = recycling_rate_p2(n, m);
            vec![k1, k2]
        }
    }
}

/// Key bits to discard and replenish after an abort.
pub fn abort_discard(protocol: Protocol, n: usize, m: usize) -> Vec<(KeyId, usize)> {
    recycling_rates(protocol, n, m, Coefficients::Printed)
        .iter()
        .map(|r| (r.key, r.discard_bits()))
        .collect()
}

/// Raw-key bits per transmitted qubit: `n / (2(n+m))` for the
/// Bell-measurement protocols, `1/2` for the entangled one.
pub fn qubit_efficiency(protocol: Protocol, n: usize, m: usize) -> Ratio<u64> {
    match protocol {
        Protocol::P2 => Ratio::new(1, 2),
        Protocol::P1 | Protocol::P3 => {
            if n + m == 0 {
                Ratio::new(1, 2)
            } else {
                Ratio::new(n as u64, 2 * (n + m) as u64)
            }
        }
    }
}

/// Total pre-shared bits: `n+m+l`, doubled when a second key is used.
pub fn psk_bits(protocol: Protocol, n: usize, m: usize, l: usize) -> u64 {
    let base = (n + m + l) as u64;
    if protocol.uses_k2() {
        2 * base
    } else {
        base
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Quantum,
    Classical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEvent {
    pub id: String,
    pub kind: EventKind,
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub deps: Vec<String>,
}

impl ScheduleEvent {
    pub fn new(id: &str, kind: EventKind, from: &str, to: &str, deps: &[&str]) -> Self {
        Self {
            id: id.to_string(),
            kind,
            from: from.to_string(),
            to: to.to_string(),
            deps: deps.iter().map(|d| d.to_string()).collect(),
        }
    }
}

/// Transmission events and what each must wait for. Serialises as a plain
/// JSON list of events.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransmissionSchedule {
    pub events: Vec<ScheduleEvent>,
}

/// TTC and its split into quantum, classical and shared waves, so that
/// `ttc = quantum_waves + classical_waves - shared_waves`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TtcBreakdown {
    pub ttc: usize,
    pub quantum_waves: usize,
    pub classical_waves: usize,
    pub shared_waves: usize,
}

impl TransmissionSchedule {
    pub fn new(events: Vec<ScheduleEvent>) -> Self {
        Self { events }
    }

    /// Wave index (1-based) of every event: one more than its latest
    /// dependency.
    pub fn waves(&self) -> Result<Vec<usize>, MetricsError> {
        let mut graph = DiGraph::<usize, ()>::new();
        let mut index = HashMap::new();
        for (i, e) in self.events.iter().enumerate() {
            let node = graph.add_node(i);
            if index.insert(e.id.as_str(), node).is_some() {
                return Err(MetricsError::DuplicateId(e.id.clone()));
            }
        }
        for e in &self.events {
            for dep in &e.deps {
                let from =
                    *index
                        .get(dep.as_str())
                        .ok_or_else(|| MetricsError::UnknownDependency {
                            event: e.id.clone(),
                            dep: dep.clone(),
                        })?;
                graph.add_edge(from, index[e.id.as_str()], ());
            }
        }
        let order = toposort(&graph, None).map_err(|_| MetricsError::Cycle)?;
        let mut wave = vec![0usize; self.events.len()];
        for node in order {
            let i = graph[node];
            let level = self.events[i]
                .deps
                .iter()
                .map(|d| wave[graph[index[d.as_str()]]])
                .max()
                .unwrap_or(0)
                + 1;
            wave[i] = level;
        }
        Ok(wave)
    }

    pub fn ttc_breakdown(&self) -> Result<TtcBreakdown, MetricsError> {
        let waves = self.waves()?;
        let levels = |kind: EventKind| -> BTreeSet<usize> {
            self.events
                .iter()
                .zip(&waves)
                .filter(|(e, _)| e.kind == kind)
                .map(|(_, &w)| w)
                .collect()
        };
        let q = levels(EventKind::Quantum);
        let b = levels(EventKind::Classical);
        Ok(TtcBreakdown {
            ttc: waves.iter().copied().max().unwrap_or(0),
            quantum_waves: q.len(),
            classical_waves: b.len(),
            shared_waves: q.intersection(&b).count(),
        })
    }
}

/// Length of the longest chain of waves; simultaneous transmissions count
/// once.
pub fn ttc(schedule: &TransmissionSchedule) -> Result<usize, MetricsError> {
    Ok(schedule.ttc_breakdown()?.ttc)
}

/// Schedule of one protocol run as the simulator executes it.
pub fn bundled_schedule(protocol: Protocol) -> TransmissionSchedule {
    use EventKind::*;
    let ev = ScheduleEvent::new;
    TransmissionSchedule::new(match protocol {
        Protocol::P1 => vec![
            ev("photons_a", Quantum, "alice", "tp", &[]),
            ev("photons_b", Quantum, "bob", "tp", &[]),
            ev(
                "announce_a",
                Classical,
                "tp",
                "alice",
                &["photons_a", "photons_b"],
            ),
            ev(
                "announce_b",
                Classical,
                "tp",
                "bob",
                &["photons_a", "photons_b"],
            ),
        ],
        Protocol::P2 => vec![
            ev("pairs_a", Quantum, "tp", "alice", &[]),
            ev("pairs_b", Quantum, "tp", "bob", &[]),
            ev("digest_ab", Classical, "alice", "bob", &["pairs_a"]),
            ev("digest_ba", Classical, "bob", "alice", &["pairs_b"]),
        ],
        Protocol::P3 => vec![
            ev("out_a", Quantum, "tp", "alice", &[]),
            ev("out_b", Quantum, "tp", "bob", &[]),
            ev("back_a", Quantum, "alice", "tp", &["out_a"]),
            ev("back_b", Quantum, "bob", "tp", &["out_b"]),
            ev(
                "announce_a",
                Classical,
                "tp",
                "alice",
                &["back_a", "back_b"],
            ),
            ev("announce_b", Classical, "tp", "bob", &["back_a", "back_b"]),
        ],
    })
}

/// Every participant sends its own sequence to every other one at once.
pub fn all_to_all_schedule(participants: usize) -> TransmissionSchedule {
    let mut events = Vec::new();
    for i in 0..participants {
        for j in 0..participants {
            if i != j {
                events.push(ScheduleEvent::new(
                    &format!("q_{i}_{j}"),
                    EventKind::Quantum,
                    &format!("p{i}"),
                    &format!("p{j}"),
                    &[],
                ));
            }
        }
    }
    TransmissionSchedule::new(events)
}

/// Every participant's sequence travels around the others one hop at a time.
pub fn relay_schedule(participants: usize) -> TransmissionSchedule {
    let mut events = Vec::new();
    for i in 0..participants {
        for hop in 1..participants {
            let from = (i + hop - 1) % participants;
            let to = (i + hop) % participants;
            let deps = if hop == 1 {
                Vec::new()
            } else {
                vec![format!("seq{i}_hop{}", hop - 1)]
            };
            events.push(ScheduleEvent {
                id: format!("seq{i}_hop{hop}"),
                kind: EventKind::Quantum,
                from: format!("p{from}"),
                to: format!("p{to}"),
                deps,
            });
        }
    }
    TransmissionSchedule::new(events)
}

/// Average probability of guessing the value of a photon drawn uniformly
/// from `{|0>, |1>, |+>, |->}` (values 0, 1, 0, 1) by measuring in the basis
/// rotated by `theta`; the better of the two outcome-to-value maps is taken.
pub fn value_guess_probability(theta: f64) -> f64 {
    let basis = Unitary2::rotation(theta);
    let states = [
        (PhotonState::zero(), 0usize),
        (PhotonState::one(), 1),
        (PhotonState::plus(), 0),
        (PhotonState::minus(), 1),
    ];
    let direct: f64 = states
        .iter()
        .map(|(s, value)| {
            let col = basis.column(*value).amps();
            let a = s.amps();
            (col[0].conj() * a[0] + col[1].conj() * a[1]).norm_sqr()
        })
        .sum::<f64>()
        / 4.0;
    direct.max(1.0 - direct)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BreidbartBound {
    pub max_probability: f64,
    pub argmax: f64,
    pub resolution: usize,
}

/// Sweeps measurement angles over `[0, pi)` and returns the best average
/// value-guess probability.
pub fn breidbart_bound_oracle(grid_resolution: usize) -> Result<BreidbartBound, MetricsError> {
    if grid_resolution < 360 {
        return Err(MetricsError::Resolution(grid_resolution));
    }
    let mut best = BreidbartBound {
        max_probability: 0.0,
        argmax: 0.0,
        resolution: grid_resolution,
    };
    for i in 0..grid_resolution {
        let theta = PI * i as f64 / grid_resolution as f64;
        let p = value_guess_probability(theta);
        if p > best.max_probability {
            best.max_probability = p;
            best.argmax = theta;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateEntry {
    pub key: KeyId,
    pub key_bits: u64,
    pub rate: f64,
    pub leakage_bits: f64,
    pub clamped: bool,
}

impl From<&KeyRate> for RateEntry {
    fn from(r: &KeyRate) -> Self {
        Self {
            key: r.key,
            key_bits: r.key_bits,
            rate: r.rate_f64(),
            leakage_bits: r.leakage_f64(),
            clamped: r.clamped,
        }
    }
}

/// One comparison row for a simulated protocol.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub protocol: Protocol,
    pub n: usize,
    pub m: usize,
    pub l: usize,
    /// Exact ratio, e.g. `"1/3"`.
    pub qe: String,
    pub qe_value: f64,
    pub psk_bits: u64,
    pub ttc: TtcBreakdown,
    pub recycling: Vec<RateEntry>,
    pub quantum_resource: &'static str,
    pub tp_capabilities: &'static str,
    pub participant_capabilities: &'static str,
}

fn profile(protocol: Protocol) -> (&'static str, &'static str, &'static str) {
    match protocol {
        Protocol::P1 => (
            "Single photon",
            "Bell measurement",
            "Unitary operations; Generate",
        ),
        Protocol::P2 => (
            "Bell state",
            "Bell measurement; Generate Bell state",
            "Unitary operations; Measure",
        ),
        Protocol::P3 => (
            "Single photon",
            "Bell measurement; Generate single photon",
            "Unitary operations; Reflect",
        ),
    }
}

pub fn metrics_report(
    protocol: Protocol,
    n: usize,
    m: usize,
    l: usize,
    mode: Coefficients,
) -> Result<MetricsReport, MetricsError> {
    if n == 0 || m == 0 {
        return Err(MetricsError::Lengths(format!(
            "n={n}, m={m}; both must be at least 1"
        )));
    }
    let qe = qubit_efficiency(protocol, n, m);
    let (qr, tp, parts) = profile(protocol);
    Ok(MetricsReport {
        protocol,
        n,
        m,
        l,
        qe: format!("{qe}"),
        qe_value: *qe.numer() as f64 / *qe.denom() as f64,
        psk_bits: psk_bits(protocol, n, m, l),
        ttc: bundled_schedule(protocol)
            .ttc_breakdown()
            .expect("bundled schedules are acyclic"),
        recycling: recycling_rates(protocol, n, m, mode)
            .iter()
            .map(RateEntry::from)
            .collect(),
        quantum_resource: qr,
        tp_capabilities: tp,
        participant_capabilities: parts,
    })
}

/// Published figures for protocols that are not simulated here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReferenceRow {
    pub name: &'static str,
    pub qe: &'static str,
    pub psk: &'static str,
    pub quantum_resource: &'static str,
    pub key_recycling: &'static str,
    pub ttc: u32,
}

pub const REFERENCE_ROWS: [ReferenceRow; 3] = [
    ReferenceRow {
        name: "Hwang et al. (LQKD)",
        qe: "1/9",
        psk: "-",
        quantum_resource: "Bell state",
        key_recycling: "-",
        ttc: 5,
    },
    ReferenceRow {
        name: "Li et al. (AQKD)",
        qe: "2/9 x n/(n+m)",
        psk: "3(n+m)",
        quantum_resource: "Bell state",
        key_recycling: "N/A",
        ttc: 2,
    },
    ReferenceRow {
        name: "Tsai et al. (AQKD)",
        qe: "1/4",
        psk: "2n",
        quantum_resource: "Single photon",
        key_recycling: "N/A",
        ttc: 3,
    },
];

/// Aligned text table of the reports, optionally followed by the reference
/// rows.
pub fn render_table(reports: &[MetricsReport], with_references: bool) -> String {
    let header = ["protocol", "QE", "PSK", "QR", "KR", "TTC"];
    let mut rows: Vec<[String; 6]> = reports
        .iter()
        .map(|r| {
            let kr = r
                .recycling
                .iter()
                .map(|e| {
                    let flag = if e.clamped { " (clamped)" } else { "" };
                    if r.recycling.len() > 1 {
                        format!("{}: {:.4}{flag}", e.key, e.rate)
                    } else {
                        format!("{:.4}{flag}", e.rate)
                    }
                })
                .collect::<Vec<_>>()
                .join(", ");
            [
                r.protocol.to_string(),
                format!("{} ({:.4})", r.qe, r.qe_value),
                r.psk_bits.to_string(),
                r.quantum_resource.to_string(),
                kr,
                r.ttc.ttc.to_string(),
            ]
        })
        .collect();
    if with_references {
        for r in REFERENCE_ROWS {
            rows.push([
                r.name.to_string(),
                r.qe.to_string(),
                r.psk.to_string(),
                r.quantum_resource.to_string(),
                r.key_recycling.to_string(),
                r.ttc.to_string(),
            ]);
        }
    }
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(&header.map(String::from));
    for row in &rows {
        line(row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recycling_examples() {
        let r = recycling_rate_p1(128, 64);
        assert!((r.rate_f64() - 170.88 / 192.0).abs() < 1e-12);
        assert!((r.leakage_f64() - 21.12).abs() < 1e-12);
        assert_eq!(recycling_rate_p1(1000, 0).rate_f64(), 1.0);
        let (k1, k2) = recycling_rate_p2(256, 32);
        assert_eq!(k1.rate_f64(), 0.9);
        assert_eq!(k2.rate_f64(), 0.75);
        let (_, k2) = recycling_rate_p2(128, 64);
        assert_eq!(k2.rate, Ratio::from_integer(0));
        assert!(!k2.clamped);
        let (_, k2) = recycling_rate_p2(64, 64);
        assert_eq!(k2.rate_f64(), 0.0);
        assert!(k2.clamped);
        assert_eq!(recycling_rate_p3(128, 64), recycling_rate_p1(128, 64));
        let exact = recycling_rate_p1_with(128, 64, Coefficients::Exact);
        assert!((exact.leakage_f64() - 0.328 * 64.0).abs() < 1e-12);
    }

    #[test]
    fn discard_counts() {
        assert_eq!(abort_discard(Protocol::P1, 128, 64), vec![(KeyId::K1, 22)]);
        assert_eq!(abort_discard(Protocol::P1, 128, 100), vec![(KeyId::K1, 33)]);
        assert_eq!(
            abort_discard(Protocol::P2, 10, 5),
            vec![(KeyId::K1, 4), (KeyId::K2, 10)]
        );
    }

    #[test]
    fn efficiency_and_psk() {
        assert_eq!(qubit_efficiency(Protocol::P2, 77, 3), Ratio::new(1, 2));
        assert_eq!(qubit_efficiency(Protocol::P1, 128, 64), Ratio::new(1, 3));
        assert_eq!(qubit_efficiency(Protocol::P3, 128, 0), Ratio::new(1, 2));
        assert_eq!(psk_bits(Protocol::P1, 128, 64, 256), 448);
        assert_eq!(psk_bits(Protocol::P2, 128, 64, 256), 896);
        assert_eq!(psk_bits(Protocol::P3, 128, 64, 0), 192);
    }

    #[test]
    fn bundled_ttc() {
        let got: Vec<usize> = Protocol::ALL
            .iter()
            .map(|&p| ttc(&bundled_schedule(p)).unwrap())
            .collect();
        assert_eq!(got, vec![2, 2, 3]);
        assert_eq!(ttc(&TransmissionSchedule::default()).unwrap(), 0);
        for p in Protocol::ALL {
            let b = bundled_schedule(p).ttc_breakdown().unwrap();
            assert_eq!(b.ttc, b.quantum_waves + b.classical_waves - b.shared_waves);
        }
    }

    #[test]
    fn relay_versus_all_to_all() {
        for n in 2..7 {
            assert_eq!(ttc(&all_to_all_schedule(n)).unwrap(), 1);
            assert_eq!(ttc(&relay_schedule(n)).unwrap(), n - 1);
        }
    }

    #[test]
    fn schedule_errors() {
        let ev = ScheduleEvent::new;
        let cyc = TransmissionSchedule::new(vec![
            ev("a", EventKind::Quantum, "x", "y", &["b"]),
            ev("b", EventKind::Quantum, "y", "x", &["a"]),
        ]);
        assert_eq!(ttc(&cyc), Err(MetricsError::Cycle));
        let dup = TransmissionSchedule::new(vec![
            ev("a", EventKind::Quantum, "x", "y", &[]),
            ev("a", EventKind::Classical, "y", "x", &[]),
        ]);
        assert!(matches!(ttc(&dup), Err(MetricsError::DuplicateId(_))));
        let missing =
            TransmissionSchedule::new(vec![ev("a", EventKind::Quantum, "x", "y", &["zz"])]);
        assert!(matches!(
            ttc(&missing),
            Err(MetricsError::UnknownDependency { .. })
        ));
    }

    #[test]
    fn schedule_json_is_a_list() {
        let s = bundled_schedule(Protocol::P1);
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.starts_with('['));
        let back: TransmissionSchedule = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn breidbart_sweep() {
        let b = breidbart_bound_oracle(360).unwrap();
        assert!((b.max_probability - (PI / 8.0).cos().powi(2)).abs() < 1e-4);
        assert!((b.argmax - PI / 8.0).abs() <= PI / 360.0);
        assert!((value_guess_probability(0.0) - 0.75).abs() < 1e-12);
        assert!(breidbart_bound_oracle(100).is_err());
    }

    #[test]
    fn table_rendering() {
        let reports: Vec<MetricsReport> = Protocol::ALL
            .iter()
            .map(|&p| metrics_report(p, 128, 64, 256, Coefficients::Printed).unwrap())
            .collect();
        let text = render_table(&reports, true);
        assert_eq!(text.lines().count(), 7);
        assert!(text.contains("1/3"));
        assert!(text.contains("Tsai"));
        assert!(metrics_report(Protocol::P1, 0, 1, 0, Coefficients::Printed).is_err());
    }
}
