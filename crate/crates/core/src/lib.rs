//! Simulator and analysis toolkit for three lightweight authenticated quantum
//! key distribution (LAQKD) protocols with key recycling.
//!
//! The crate is organised bottom-up:
//!
//! - [`qstate`]: dense statevectors for photons, photon pairs and probe-entangled
//!   pairs, the `I`/`H`/`H'` unitaries and Bell/Z measurements.
//! - [`keymat`]: bit strings, Toeplitz universal hashing, privacy amplification
//!   and the pre-shared master-key store with backup replenishment.
//! - [`protocols`]: the three protocols as Alice/Bob/TP message flows with a
//!   pluggable adversary, plus exhaustive checks of the encoding tables.
//! - [`adversary`]: intercept-resend, malicious-TP and entangling-probe attacks,
//!   the collective-attack condition checker and a leakage estimator.
//! - [`metrics`]: key-recycling rates, qubit efficiency, pre-shared key cost and
//!   transmission time cost over schedule DAGs.
//! - [`cli`]: the scenario runner behind the `laqkd` binary.
//!
//! ```
//! use laqkd::{protocols, Protocol};
//! use laqkd::adversary::Passive;
//! use laqkd::keymat::MasterKeyStore;
//!
//! let config = protocols::ProtocolConfig::new(Protocol::P1, 32, 16, 16, 7).unwrap();
//! let mut rng = config.rng();
//! let mut store = MasterKeyStore::generate(Protocol::P1, 32, 16, 64, &mut rng);
//! let transcript = protocols::run(&config, &mut store, &mut Passive, &mut rng).unwrap();
//! assert!(transcript.outcome.is_success());
//! ```

pub mod adversary;
pub mod cli;
pub mod keymat;
pub mod metrics;
pub mod protocols;
pub mod qstate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The three protocol variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Participants generate Z-basis photons and apply `I`/`H`; TP Bell-measures.
    P1,
    /// TP distributes `|Φ⁻>` pairs; participants apply `I`/`H` and measure in Z.
    P2,
    /// TP sends `|0>` photons; participants apply `H'^j` and reflect them back.
    P3,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::P1, Protocol::P2, Protocol::P3];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::P1 => "p1",
            Protocol::P2 => "p2",
            Protocol::P3 => "p3",
        }
    }

    /// Number of quantum positions per run.
    pub fn positions(self, n: usize, m: usize) -> usize {
        match self {
            Protocol::P1 | Protocol::P3 => n + m,
            Protocol::P2 => n,
        }
    }

    /// Length of the master key `K1`.
    pub fn k1_len(self, n: usize, m: usize) -> usize {
        self.positions(n, m)
    }

    /// Whether a second master key `K2` (and its backup) is pre-shared.
    pub fn uses_k2(self) -> bool {
        self == Protocol::P2
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "p1" | "1" => Ok(Protocol::P1),
            "p2" | "2" => Ok(Protocol::P2),
            "p3" | "3" => Ok(Protocol::P3),
            other => Err(format!(
                "unknown protocol `{other}` (expected p1, p2 or p3)"
            )),
        }
    }
}
