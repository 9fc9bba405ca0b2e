//! The three protocols as Alice/Bob/TP message flows.
//!
//! Each run processes all positions of one step as a batch: every qubit sent
//! in one direction forms a single `QubitBatch`, and every classical exchange
//! of one step is one round. The adversary sits on both channels through the
//! [`Adversary`] hooks.
//!
//! Quantum payloads live in a register of [`JointState`]s, one per position,
//! holding the photon on Alice's channel as qubit `A` and the photon on Bob's
//! channel as qubit `B`. For the product-state flows this is just the tensor
//! product; for the entangled flow and for probe attacks it carries whatever
//! correlations the preparation created.

mod tables;

pub use tables::{verify_tables, verify_tables_with, Decoders, TableId, TableReport, TableRow};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adversary::Adversary;
use crate::keymat::{
    amplification_seed_len, privacy_amplify, universal_hash, universal_hash_framed, BitString,
    HashSpec, KeyError, KeyId, MasterKeyStore, SessionKey,
};
use crate::metrics;
use crate::qstate::{
    hprime_power, tensor, z_photon, BellOutcome, JointState, PairState, PhotonState, Qubit,
    Unitary2,
};
use crate::Protocol;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("expected {expected} bits, got {got}")]
    Length { expected: usize, got: usize },
    #[error(transparent)]
    Key(#[from] KeyError),
}

impl ProtocolError {
    /// True when the key store ran out of backup bits.
    pub fn is_backup_depleted(&self) -> bool {
        matches!(self, ProtocolError::Key(KeyError::BackupDepleted { .. }))
    }
}

/// Parameters of one protocol execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub protocol: Protocol,
    /// Raw-key bits.
    pub n: usize,
    /// Hash-output bits.
    pub m: usize,
    /// Session-key bits after privacy amplification.
    pub n_prime: usize,
    /// Seed of the run's random stream; also fixes the public hash seed.
    pub seed: u64,
    pub hash_spec: HashSpec,
}

impl ProtocolConfig {
    /// Validates lengths and derives the public hash parameters from `seed`.
    pub fn new(
        protocol: Protocol,
        n: usize,
        m: usize,
        n_prime: usize,
        seed: u64,
    ) -> Result<Self, ProtocolError> {
        if n == 0 || m == 0 {
            return Err(ProtocolError::Config(format!(
                "n and m must be at least 1 (n={n}, m={m})"
            )));
        }
        if n_prime == 0 || n_prime > n {
            return Err(ProtocolError::Config(format!(
                "session-key length n'={n_prime} must lie in 1..={n}"
            )));
        }
        let mut setup = ChaCha8Rng::seed_from_u64(seed);
        setup.set_stream(1);
        let hash_spec = match protocol {
            Protocol::P1 | Protocol::P3 => HashSpec::random(n, m, &mut setup)?,
            Protocol::P2 => HashSpec::random_framed(n, m, &mut setup)?,
        };
        Ok(Self {
            protocol,
            n,
            m,
            n_prime,
            seed,
            hash_spec,
        })
    }

    /// Default session-key length `floor(n/2)` (at least 1).
    pub fn default_n_prime(n: usize) -> usize {
        (n / 2).max(1)
    }

    pub fn positions(&self) -> usize {
        self.protocol.positions(self.n, self.m)
    }

    /// Random stream for a run of this config.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Alice,
    Bob,
    Tp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Quantum,
    Classical,
}

/// Direction of a quantum transmission, as seen by the adversary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hop {
    ParticipantsToTp,
    TpToParticipants,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    QubitBatch,
    BellResults,
    HashDigest,
    AbortNotice,
}

impl MessageKind {
    pub fn channel(self) -> ChannelKind {
        match self {
            MessageKind::QubitBatch => ChannelKind::Quantum,
            _ => ChannelKind::Classical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    HashMismatch,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    /// Photons in flight; the states themselves live in the run's register.
    Qubits {
        count: usize,
        qubit: Qubit,
    },
    /// Two-bit outcome codes, one character per position.
    Outcomes(String),
    Digest(BitString),
    Abort(AbortReason),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub round: usize,
    pub kind: MessageKind,
    pub channel: ChannelKind,
    pub from: Role,
    pub to: Vec<Role>,
    pub payload: Payload,
}

impl Message {
    fn new(round: usize, kind: MessageKind, from: Role, to: Vec<Role>, payload: Payload) -> Self {
        Self {
            round,
            kind,
            channel: kind.channel(),
            from,
            to,
            payload,
        }
    }
}

/// Encodes announced outcomes as their `0..=3` codes.
pub fn outcome_codes(outcomes: &[BellOutcome]) -> String {
    outcomes
        .iter()
        .map(|o| char::from(b'0' + o.index() as u8))
        .collect()
}

/// What happened at one position.
///
/// For the Bell-measurement flows `a_bit`/`b_bit` are the bits of
/// `R ∥ h(R)` each participant encoded and `decoded` is the bit of `M`
/// derived from the announcement. For the entangled flow they are the two
/// Z-measurement results and `decoded` is Bob's derived key bit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionRecord {
    pub index: usize,
    pub k1: u8,
    pub a_bit: u8,
    pub b_bit: u8,
    pub outcome: Option<BellOutcome>,
    pub decoded: u8,
}

impl PositionRecord {
    /// Whether the decoded bit disagrees with what honest transmission gives.
    pub fn is_error(&self, protocol: Protocol) -> bool {
        match protocol {
            Protocol::P1 | Protocol::P3 => self.decoded != self.a_bit ^ self.b_bit,
            Protocol::P2 => self.decoded != self.a_bit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum RunOutcome {
    Success {
        alice_key: SessionKey,
        bob_key: SessionKey,
    },
    Abort {
        reason: AbortReason,
    },
}

impl RunOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, RunOutcome::Success { .. })
    }

    pub fn abort_reason(&self) -> Option<AbortReason> {
        match self {
            RunOutcome::Abort { reason } => Some(*reason),
            RunOutcome::Success { .. } => None,
        }
    }

    pub fn keys_agree(&self) -> bool {
        matches!(self, RunOutcome::Success { alice_key, bob_key } if alice_key == bob_key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discard {
    pub key: KeyId,
    pub bits: usize,
}

/// Complete record of one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub config: ProtocolConfig,
    pub messages: Vec<Message>,
    pub positions: Vec<PositionRecord>,
    pub outcome: RunOutcome,
    /// Public Toeplitz seed used for privacy amplification (successful runs).
    pub amplification_seed: Option<BitString>,
    /// Key bits discarded and replenished after an abort.
    pub discarded: Vec<Discard>,
}

#[derive(Serialize)]
struct PositionLine<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    trial: Option<usize>,
    #[serde(flatten)]
    record: &'a PositionRecord,
}

#[derive(Serialize)]
struct SummaryLine<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    trial: Option<usize>,
    protocol: Protocol,
    n: usize,
    m: usize,
    n_prime: usize,
    seed: u64,
    outcome: &'static str,
    abort_reason: Option<AbortReason>,
    alice_key_sha256: Option<String>,
    bob_key_sha256: Option<String>,
    decode_errors: usize,
    discarded: &'a [Discard],
    messages: &'a [Message],
}

fn key_digest(key: &SessionKey) -> String {
    let mut h = Sha256::new();
    h.update((key.bits.len() as u64).to_be_bytes());
    h.update(key.bits.to_bytes());
    hex::encode(h.finalize())
}

impl Transcript {
    pub fn decode_errors(&self) -> usize {
        self.positions
            .iter()
            .filter(|p| p.is_error(self.config.protocol))
            .count()
    }

    /// JSON-lines export: one record per position, then a summary record.
    pub fn to_jsonl(&self, trial: Option<usize>) -> String {
        let mut out = String::new();
        for record in &self.positions {
            let line = PositionLine {
                kind: "position",
                trial,
                record,
            };
            out.push_str(&serde_json::to_string(&line).expect("position serialises"));
            out.push('\n');
        }
        out.push_str(&self.summary_json(trial));
        out.push('\n');
        out
    }

    /// Single-line summary record (outcome, abort reason, key digests).
    pub fn summary_json(&self, trial: Option<usize>) -> String {
        let (outcome, alice, bob) = match &self.outcome {
            RunOutcome::Success { alice_key, bob_key } => (
                "success",
                Some(key_digest(alice_key)),
                Some(key_digest(bob_key)),
            ),
            RunOutcome::Abort { .. } => ("abort", None, None),
        };
        let line = SummaryLine {
            kind: "summary",
            trial,
            protocol: self.config.protocol,
            n: self.config.n,
            m: self.config.m,
            n_prime: self.config.n_prime,
            seed: self.config.seed,
            outcome,
            abort_reason: self.outcome.abort_reason(),
            alice_key_sha256: alice,
            bob_key_sha256: bob,
            decode_errors: self.decode_errors(),
            discarded: &self.discarded,
            messages: &self.messages,
        };
        serde_json::to_string(&line).expect("summary serialises")
    }
}

/// `I` for key bit 0, `H` for key bit 1.
pub fn key_unitary(k1_bit: u8) -> Unitary2 {
    if k1_bit == 0 {
        Unitary2::identity()
    } else {
        Unitary2::hadamard()
    }
}

fn check_len(expected: usize, got: usize) -> Result<(), ProtocolError> {
    if expected == got {
        Ok(())
    } else {
        Err(ProtocolError::Length { expected, got })
    }
}

/// Photons for `R ∥ h(R)`: Z-basis encoding of each bit, then `H` wherever the
/// key bit is 1. The random generator is unused (preparation is
/// deterministic) and kept for interface symmetry with the other roles.
pub fn p1_prepare<R: Rng + ?Sized>(
    party_bits: &BitString,
    hash_spec: &HashSpec,
    k1: &BitString,
    _rng: &mut R,
) -> Result<Vec<PhotonState>, ProtocolError> {
    let digest = universal_hash(hash_spec, party_bits)?;
    let encoded = party_bits.concat(&digest);
    check_len(k1.len(), encoded.len())?;
    Ok(encoded
        .iter()
        .zip(k1.iter())
        .map(|(bit, k)| {
            let photon = z_photon(bit as u8).expect("bit is 0 or 1");
            key_unitary(k as u8).apply(&photon)
        })
        .collect())
}

/// Bit of `M` from the announced outcome: with key bit 0 the Φ pair gives 0
/// and the Ψ pair 1; with key bit 1, `+` outcomes give 0 and `-` outcomes 1.
pub fn p1_decode_m(k1_bit: u8, outcome: BellOutcome) -> u8 {
    use BellOutcome::*;
    match (k1_bit, outcome) {
        (0, PhiPlus | PhiMinus) => 0,
        (0, PsiPlus | PsiMinus) => 1,
        (_, PhiPlus | PsiPlus) => 0,
        (_, PhiMinus | PsiMinus) => 1,
    }
}

/// The same mapping as [`p1_decode_m`]; the support sets of both tables
/// coincide.
pub fn p3_decode_m(k1_bit: u8, outcome: BellOutcome) -> u8 {
    p1_decode_m(k1_bit, outcome)
}

/// Splits `M` into `(partner R', partner hash')` using the party's own
/// `R` and `h(R)`, and accepts iff the partner's hash recomputes.
pub fn p1_verify(
    m_bits: &BitString,
    own_r: &BitString,
    own_hash: &BitString,
    hash_spec: &HashSpec,
) -> Result<Result<BitString, AbortReason>, ProtocolError> {
    let n = own_r.len();
    check_len(n + own_hash.len(), m_bits.len())?;
    let partner_r = m_bits.slice(0, n).xor(own_r);
    let partner_hash = m_bits.slice(n, m_bits.len()).xor(own_hash);
    if universal_hash(hash_spec, &partner_r)? == partner_hash {
        Ok(Ok(partner_r))
    } else {
        Ok(Err(AbortReason::HashMismatch))
    }
}

/// `n` copies of `|Φ⁻> = (|00> - |11>)/sqrt(2)`.
pub fn p2_tp_prepare<R: Rng + ?Sized>(n: usize, _rng: &mut R) -> Vec<PairState> {
    vec![BellOutcome::PhiMinus.state(); n]
}

/// One participant's step on its own photon: apply `I`/`H` by key bit,
/// measure in Z. Returns `(r, R-bit)` where Alice keeps `r` and Bob flips it
/// by the key bit.
pub fn p2_participant_decode<R: Rng + ?Sized>(
    photon: &PhotonState,
    k1_bit: u8,
    role: Role,
    rng: &mut R,
) -> (u8, u8) {
    let (r, _) = key_unitary(k1_bit).apply(photon).measure_z(rng);
    (r, p2_key_bit(r, k1_bit, role))
}

fn p2_key_bit(r: u8, k1_bit: u8, role: Role) -> u8 {
    match role {
        Role::Bob => r ^ k1_bit,
        _ => r,
    }
}

/// Positions with `K2` bit 0 go to `R0`, the rest to `R1`, order preserved.
pub fn p2_split(r: &BitString, k2: &BitString) -> Result<(BitString, BitString), ProtocolError> {
    check_len(r.len(), k2.len())?;
    let mut r0 = BitString::new();
    let mut r1 = BitString::new();
    for (bit, sel) in r.iter().zip(k2.iter()) {
        if sel {
            r1.push(bit);
        } else {
            r0.push(bit);
        }
    }
    Ok((r0, r1))
}

/// Accepts iff the held half hashes to the received digest.
pub fn p2_verify(
    held: &BitString,
    received_digest: &BitString,
    hash_spec: &HashSpec,
) -> Result<bool, ProtocolError> {
    check_len(hash_spec.out_len(), received_digest.len())?;
    Ok(universal_hash_framed(hash_spec, held)? == *received_digest)
}

/// `H'^(k1 + 2r)`.
pub fn p3_unitary(k1_bit: u8, r_bit: u8) -> Unitary2 {
    hprime_power(k1_bit + 2 * r_bit).expect("power is at most 3")
}

pub fn p3_encode(k1_bit: u8, r_bit: u8, photon: &PhotonState) -> PhotonState {
    p3_unitary(k1_bit, r_bit).apply(photon)
}

fn bits_of(s: &BitString) -> impl Iterator<Item = u8> + '_ {
    s.iter().map(|b| b as u8)
}

/// Runs one execution with the config's own random stream.
pub fn run_seeded(
    config: &ProtocolConfig,
    store: &mut MasterKeyStore,
    adversary: &mut dyn Adversary,
) -> Result<Transcript, ProtocolError> {
    let mut rng = config.rng();
    run(config, store, adversary, &mut rng)
}

/// Executes the full message flow with `adversary` on the channels.
///
/// On a hash mismatch the run aborts after discarding the leaked prefix of
/// each master key and topping it up from the backup; a depleted backup is an
/// error. On success both parties amplify their raw keys with a public seed.
pub fn run(
    config: &ProtocolConfig,
    store: &mut MasterKeyStore,
    adversary: &mut dyn Adversary,
    rng: &mut dyn RngCore,
) -> Result<Transcript, ProtocolError> {
    store.validate_for(config.protocol, config.n, config.m)?;
    let mut flow = Flow {
        config,
        messages: Vec::new(),
        positions: Vec::new(),
    };
    let raw = match config.protocol {
        Protocol::P1 => flow.run_p1(store, adversary, rng)?,
        Protocol::P2 => flow.run_p2(store, adversary, rng)?,
        Protocol::P3 => flow.run_p3(store, adversary, rng)?,
    };
    let Flow {
        messages,
        positions,
        ..
    } = flow;
    let mut transcript = Transcript {
        config: config.clone(),
        messages,
        positions,
        outcome: RunOutcome::Abort {
            reason: AbortReason::Malformed,
        },
        amplification_seed: None,
        discarded: Vec::new(),
    };
    match raw {
        Ok((alice_raw, bob_raw)) => {
            let seed = BitString::random(amplification_seed_len(config.n, config.n_prime), rng);
            let alice_key = privacy_amplify(&alice_raw, config.n_prime, &seed)?;
            let bob_key = privacy_amplify(&bob_raw, config.n_prime, &seed)?;
            transcript.outcome = RunOutcome::Success { alice_key, bob_key };
            transcript.amplification_seed = Some(seed);
        }
        Err(reason) => {
            for (key, bits) in metrics::abort_discard(config.protocol, config.n, config.m) {
                store.replenish(key, bits)?;
                transcript.discarded.push(Discard { key, bits });
            }
            transcript.outcome = RunOutcome::Abort { reason };
        }
    }
    Ok(transcript)
}

type RawKeys = Result<(BitString, BitString), AbortReason>;

struct Flow<'a> {
    config: &'a ProtocolConfig,
    messages: Vec<Message>,
    positions: Vec<PositionRecord>,
}

impl Flow<'_> {
    fn send(
        &mut self,
        round: usize,
        kind: MessageKind,
        from: Role,
        to: Vec<Role>,
        payload: Payload,
    ) {
        self.messages
            .push(Message::new(round, kind, from, to, payload));
    }

    fn qubits(&mut self, round: usize, from: Role, to: Role, qubit: Qubit) {
        let count = self.config.positions();
        self.send(
            round,
            MessageKind::QubitBatch,
            from,
            vec![to],
            Payload::Qubits { count, qubit },
        );
    }

    /// TP measures and announces; returns the announcement as received, or
    /// `None` when it has the wrong shape.
    fn announce(
        &mut self,
        round: usize,
        register: &mut [JointState],
        adversary: &mut dyn Adversary,
        rng: &mut dyn RngCore,
    ) -> (Vec<BellOutcome>, Option<Vec<BellOutcome>>) {
        let measured: Vec<BellOutcome> = register.iter_mut().map(|s| s.bell_measure(rng)).collect();
        adversary.after_measurement(self.config.protocol, register, rng);
        let announced = adversary.on_announcement(measured.clone(), rng);
        self.send(
            round,
            MessageKind::BellResults,
            Role::Tp,
            vec![Role::Alice, Role::Bob],
            Payload::Outcomes(outcome_codes(&announced)),
        );
        let ok = announced.len() == register.len();
        (measured, ok.then_some(announced))
    }

    fn abort_notice(&mut self, round: usize, from: Role, reason: AbortReason) {
        let to = match from {
            Role::Alice => vec![Role::Bob],
            Role::Bob => vec![Role::Alice],
            Role::Tp => vec![Role::Alice, Role::Bob],
        };
        self.send(
            round,
            MessageKind::AbortNotice,
            from,
            to,
            Payload::Abort(reason),
        );
    }

    /// Shared tail of the Bell-measurement flows: decode `M`, cross-check the
    /// hashes, and return both raw keys (`R_A` and Bob's reconstruction).
    #[allow(clippy::too_many_arguments)]
    fn bell_tail(
        &mut self,
        round: usize,
        k1: &BitString,
        alice_enc: &BitString,
        bob_enc: &BitString,
        measured: &[BellOutcome],
        announced: Option<Vec<BellOutcome>>,
        decode: fn(u8, BellOutcome) -> u8,
    ) -> Result<RawKeys, ProtocolError> {
        let n = self.config.n;
        let Some(announced) = announced else {
            for (i, (k, o)) in bits_of(k1).zip(measured).enumerate() {
                self.positions.push(PositionRecord {
                    index: i,
                    k1: k,
                    a_bit: alice_enc.bit(i),
                    b_bit: bob_enc.bit(i),
                    outcome: Some(*o),
                    decoded: 0,
                });
            }
            self.abort_notice(round, Role::Alice, AbortReason::Malformed);
            self.abort_notice(round, Role::Bob, AbortReason::Malformed);
            return Ok(Err(AbortReason::Malformed));
        };
        // Alice and Bob hold the same K1 and see the same announcement.
        let m_bits: BitString = bits_of(k1)
            .zip(&announced)
            .map(|(k, &o)| decode(k, o) == 1)
            .collect();
        for (i, o) in announced.iter().enumerate() {
            self.positions.push(PositionRecord {
                index: i,
                k1: k1.bit(i),
                a_bit: alice_enc.bit(i),
                b_bit: bob_enc.bit(i),
                outcome: Some(*o),
                decoded: m_bits.bit(i),
            });
        }
        let spec = &self.config.hash_spec;
        let (r_a, h_a) = (alice_enc.slice(0, n), alice_enc.slice(n, alice_enc.len()));
        let (r_b, h_b) = (bob_enc.slice(0, n), bob_enc.slice(n, bob_enc.len()));
        let alice = p1_verify(&m_bits, &r_a, &h_a, spec)?;
        let bob = p1_verify(&m_bits, &r_b, &h_b, spec)?;
        match (alice, bob) {
            (Ok(_), Ok(r_a_at_bob)) => Ok(Ok((r_a, r_a_at_bob))),
            (a, b) => {
                if let Err(reason) = a {
                    self.abort_notice(round, Role::Alice, reason);
                }
                if let Err(reason) = b {
                    self.abort_notice(round, Role::Bob, reason);
                }
                Ok(Err(AbortReason::HashMismatch))
            }
        }
    }

    fn random_encoding(&self, rng: &mut dyn RngCore) -> Result<BitString, ProtocolError> {
        let r = BitString::random(self.config.n, rng);
        let h = universal_hash(&self.config.hash_spec, &r)?;
        Ok(r.concat(&h))
    }

    fn run_p1(
        &mut self,
        store: &MasterKeyStore,
        adversary: &mut dyn Adversary,
        rng: &mut dyn RngCore,
    ) -> Result<RawKeys, ProtocolError> {
        let k1 = store.k1().clone();
        let alice_enc = self.random_encoding(rng)?;
        let bob_enc = self.random_encoding(rng)?;
        let n = self.config.n;
        let spec = &self.config.hash_spec;
        let qa = p1_prepare(&alice_enc.slice(0, n), spec, &k1, rng)?;
        let qb = p1_prepare(&bob_enc.slice(0, n), spec, &k1, rng)?;
        self.qubits(0, Role::Alice, Role::Tp, Qubit::A);
        self.qubits(0, Role::Bob, Role::Tp, Qubit::B);
        let mut register: Vec<JointState> = qa
            .iter()
            .zip(&qb)
            .map(|(a, b)| JointState::from_pair(&tensor(a, b), 1))
            .collect();
        adversary.on_quantum(Protocol::P1, Hop::ParticipantsToTp, &mut register, rng);
        let (measured, announced) = self.announce(1, &mut register, adversary, rng);
        self.bell_tail(
            2,
            &k1,
            &alice_enc,
            &bob_enc,
            &measured,
            announced,
            p1_decode_m,
        )
    }

    fn run_p3(
        &mut self,
        store: &MasterKeyStore,
        adversary: &mut dyn Adversary,
        rng: &mut dyn RngCore,
    ) -> Result<RawKeys, ProtocolError> {
        let k1 = store.k1().clone();
        let count = self.config.positions();
        let mut register = adversary
            .prepare_source(Protocol::P3, count, rng)
            .unwrap_or_else(|| {
                let z = PhotonState::zero();
                vec![JointState::product(&z, &z); count]
            });
        self.qubits(0, Role::Tp, Role::Alice, Qubit::A);
        self.qubits(0, Role::Tp, Role::Bob, Qubit::B);
        adversary.on_quantum(Protocol::P3, Hop::TpToParticipants, &mut register, rng);
        if register.len() != count {
            return self.malformed_source(1);
        }
        let alice_enc = self.random_encoding(rng)?;
        let bob_enc = self.random_encoding(rng)?;
        for (i, state) in register.iter_mut().enumerate() {
            let k = k1.bit(i);
            state.apply_local(Qubit::A, &p3_unitary(k, alice_enc.bit(i)));
            state.apply_local(Qubit::B, &p3_unitary(k, bob_enc.bit(i)));
        }
        self.qubits(1, Role::Alice, Role::Tp, Qubit::A);
        self.qubits(1, Role::Bob, Role::Tp, Qubit::B);
        adversary.on_quantum(Protocol::P3, Hop::ParticipantsToTp, &mut register, rng);
        let (measured, announced) = self.announce(2, &mut register, adversary, rng);
        self.bell_tail(
            3,
            &k1,
            &alice_enc,
            &bob_enc,
            &measured,
            announced,
            p3_decode_m,
        )
    }

    fn malformed_source(&mut self, round: usize) -> Result<RawKeys, ProtocolError> {
        self.abort_notice(round, Role::Alice, AbortReason::Malformed);
        self.abort_notice(round, Role::Bob, AbortReason::Malformed);
        Ok(Err(AbortReason::Malformed))
    }

    fn run_p2(
        &mut self,
        store: &MasterKeyStore,
        adversary: &mut dyn Adversary,
        rng: &mut dyn RngCore,
    ) -> Result<RawKeys, ProtocolError> {
        let n = self.config.n;
        let m = self.config.m;
        let k1 = store.k1().clone();
        let k2 = store
            .k2()
            .ok_or(ProtocolError::Key(KeyError::MissingKey(KeyId::K2)))?
            .clone();
        let mut register = match adversary.prepare_source(Protocol::P2, n, rng) {
            Some(states) => states,
            None => p2_tp_prepare(n, rng)
                .iter()
                .map(|p| JointState::from_pair(p, 1))
                .collect(),
        };
        self.qubits(0, Role::Tp, Role::Alice, Qubit::A);
        self.qubits(0, Role::Tp, Role::Bob, Qubit::B);
        adversary.on_quantum(Protocol::P2, Hop::TpToParticipants, &mut register, rng);
        if register.len() != n {
            return self.malformed_source(1);
        }
        let mut alice_r = BitString::new();
        let mut bob_r = BitString::new();
        for (i, state) in register.iter_mut().enumerate() {
            let k = k1.bit(i);
            let u = key_unitary(k);
            state.apply_local(Qubit::A, &u);
            let r_a = state.measure_z(Qubit::A, rng);
            state.apply_local(Qubit::B, &u);
            let r_b = state.measure_z(Qubit::B, rng);
            let (ra_bit, rb_bit) = (
                p2_key_bit(r_a, k, Role::Alice),
                p2_key_bit(r_b, k, Role::Bob),
            );
            alice_r.push(ra_bit == 1);
            bob_r.push(rb_bit == 1);
            self.positions.push(PositionRecord {
                index: i,
                k1: k,
                a_bit: r_a,
                b_bit: r_b,
                outcome: None,
                decoded: rb_bit,
            });
        }
        adversary.after_measurement(Protocol::P2, &mut register, rng);
        let spec = self.config.hash_spec.clone();
        let (alice_r0, alice_r1) = p2_split(&alice_r, &k2)?;
        let (bob_r0, bob_r1) = p2_split(&bob_r, &k2)?;
        let digest_a = universal_hash_framed(&spec, &alice_r0)?;
        let digest_b = universal_hash_framed(&spec, &bob_r1)?;
        let at_bob = adversary.on_digest(Role::Alice, digest_a, rng);
        let at_alice = adversary.on_digest(Role::Bob, digest_b, rng);
        self.send(
            1,
            MessageKind::HashDigest,
            Role::Alice,
            vec![Role::Bob],
            Payload::Digest(at_bob.clone()),
        );
        self.send(
            1,
            MessageKind::HashDigest,
            Role::Bob,
            vec![Role::Alice],
            Payload::Digest(at_alice.clone()),
        );
        if at_bob.len() != m || at_alice.len() != m {
            return self.malformed_source(2);
        }
        let alice_ok = p2_verify(&alice_r1, &at_alice, &spec)?;
        let bob_ok = p2_verify(&bob_r0, &at_bob, &spec)?;
        if alice_ok && bob_ok {
            return Ok(Ok((alice_r, bob_r)));
        }
        if !alice_ok {
            self.abort_notice(2, Role::Alice, AbortReason::HashMismatch);
        }
        if !bob_ok {
            self.abort_notice(2, Role::Bob, AbortReason::HashMismatch);
        }
        Ok(Err(AbortReason::HashMismatch))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::Passive;
    use crate::qstate::{bell_probabilities, STATE_TOL};

    fn bits(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn p1_prepare_table_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = HashSpec::new(bits("0"), 1, 1).unwrap();
        // R = 0 → h = 0, so positions encode (0, 0)
        let photons = p1_prepare(&bits("0"), &spec, &bits("01"), &mut rng).unwrap();
        assert!(photons[0].approx_eq(&PhotonState::zero(), STATE_TOL));
        assert!(photons[1].approx_eq(&PhotonState::plus(), STATE_TOL));
        // seed 1 → h(R) = R, so R = 1 encodes (1, 1)
        let spec = HashSpec::new(bits("1"), 1, 1).unwrap();
        let photons = p1_prepare(&bits("1"), &spec, &bits("11"), &mut rng).unwrap();
        assert!(photons[1].approx_eq(&PhotonState::minus(), STATE_TOL));
        assert!(p1_prepare(&bits("1"), &spec, &bits("1"), &mut rng).is_err());
    }

    #[test]
    fn p1_decode_examples() {
        assert_eq!(p1_decode_m(0, BellOutcome::PsiMinus), 1);
        assert_eq!(p1_decode_m(1, BellOutcome::PhiPlus), 0);
        assert_eq!(p1_decode_m(1, BellOutcome::PsiMinus), 1);
        assert_eq!(p3_decode_m(0, BellOutcome::PsiMinus), 1);
        assert_eq!(p3_decode_m(1, BellOutcome::PhiMinus), 1);
        assert_eq!(p3_decode_m(1, BellOutcome::PsiPlus), 0);
    }

    #[test]
    fn p1_verify_honest_and_tampered() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = HashSpec::random(24, 16, &mut rng).unwrap();
        let ra = BitString::random(24, &mut rng);
        let rb = BitString::random(24, &mut rng);
        let ha = universal_hash(&spec, &ra).unwrap();
        let hb = universal_hash(&spec, &rb).unwrap();
        let m = ra.xor(&rb).concat(&ha.xor(&hb));
        assert_eq!(p1_verify(&m, &ra, &ha, &spec).unwrap(), Ok(rb.clone()));
        assert_eq!(p1_verify(&m, &rb, &hb, &spec).unwrap(), Ok(ra.clone()));
        let mut bad = m.clone();
        bad.flip(3);
        // a single flip in the R part always changes the hash: column 3 of a
        // Toeplitz matrix is non-zero unless that seed window is all zeros
        let col_zero = (0..16).all(|i| !spec.seed().get(i + 23 - 3));
        if !col_zero {
            assert_eq!(
                p1_verify(&bad, &ra, &ha, &spec).unwrap(),
                Err(AbortReason::HashMismatch)
            );
        }
        assert!(p1_verify(&m.slice(0, 39), &ra, &ha, &spec).is_err());
    }

    #[test]
    fn p2_source_is_phi_minus() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for pair in p2_tp_prepare(5, &mut rng) {
            assert!((bell_probabilities(&pair)[1] - 1.0).abs() < 1e-12);
            let a = pair.amps();
            assert!((a[0].norm_sqr() - 0.5).abs() < 1e-12 && (a[3].norm_sqr() - 0.5).abs() < 1e-12);
            let x = pair
                .apply_local(&Unitary2::hadamard(), &Unitary2::hadamard())
                .amps();
            assert!((x[1].norm_sqr() - 0.5).abs() < 1e-12 && (x[2].norm_sqr() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn p2_participant_decode_product_halves() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // after Alice's measurement, Bob's half is a definite Z state
        assert_eq!(
            p2_participant_decode(&PhotonState::zero(), 0, Role::Bob, &mut rng),
            (0, 0)
        );
        // k1 = 1: Bob's half is |-> when Alice saw 0 (H|-> = |1>)
        assert_eq!(
            p2_participant_decode(&PhotonState::minus(), 1, Role::Bob, &mut rng),
            (1, 0)
        );
        assert_eq!(
            p2_participant_decode(&PhotonState::plus(), 1, Role::Bob, &mut rng),
            (0, 1)
        );
        assert_eq!(
            p2_participant_decode(&PhotonState::plus(), 1, Role::Alice, &mut rng),
            (0, 0)
        );
    }

    #[test]
    fn p2_split_examples() {
        let r = bits("1011");
        assert_eq!(
            p2_split(&r, &bits("0000")).unwrap(),
            (r.clone(), BitString::new())
        );
        assert_eq!(
            p2_split(&r, &bits("0101")).unwrap(),
            (bits("11"), bits("01"))
        );
        assert_eq!(
            p2_split(&r, &bits("1111")).unwrap(),
            (BitString::new(), r.clone())
        );
        assert!(p2_split(&r, &bits("01")).is_err());
    }

    #[test]
    fn p2_verify_empty_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = HashSpec::random_framed(8, 6, &mut rng).unwrap();
        let empty_digest = universal_hash_framed(&spec, &BitString::new()).unwrap();
        assert!(p2_verify(&BitString::new(), &empty_digest, &spec).unwrap());
        assert!(p2_verify(&BitString::new(), &BitString::zeros(5), &spec).is_err());
    }

    #[test]
    fn p3_encode_examples() {
        let z = PhotonState::zero();
        assert!(p3_encode(1, 1, &z).approx_eq_up_to_phase(&PhotonState::minus(), STATE_TOL));
        assert!(p3_encode(0, 0, &z).approx_eq(&z, 0.0));
        assert!(p3_encode(1, 0, &z).approx_eq(&PhotonState::plus(), STATE_TOL));
        assert!(p3_encode(0, 1, &z).approx_eq(&PhotonState::one(), STATE_TOL));
    }

    #[test]
    fn config_validation() {
        assert!(ProtocolConfig::new(Protocol::P1, 0, 4, 1, 0).is_err());
        assert!(ProtocolConfig::new(Protocol::P1, 4, 0, 1, 0).is_err());
        assert!(ProtocolConfig::new(Protocol::P1, 4, 4, 5, 0).is_err());
        assert!(ProtocolConfig::new(Protocol::P1, 4, 4, 0, 0).is_err());
        assert!(ProtocolConfig::new(Protocol::P2, 4, 4, 4, 0).is_ok());
    }

    #[test]
    fn honest_runs_all_protocols() {
        for protocol in Protocol::ALL {
            for seed in 0..20 {
                let config = ProtocolConfig::new(protocol, 24, 8, 12, seed).unwrap();
                let mut rng = config.rng();
                let mut store = MasterKeyStore::generate(protocol, 24, 8, 64, &mut rng);
                let t = run(&config, &mut store, &mut Passive, &mut rng).unwrap();
                assert!(
                    t.outcome.keys_agree(),
                    "{protocol} seed {seed}: {:?}",
                    t.outcome
                );
                assert_eq!(t.positions.len(), protocol.positions(24, 8));
                assert_eq!(t.decode_errors(), 0);
                assert!(t.discarded.is_empty());
            }
        }
    }

    #[test]
    fn wrong_store_rejected() {
        let config = ProtocolConfig::new(Protocol::P1, 8, 4, 4, 0).unwrap();
        let mut rng = config.rng();
        let mut store = MasterKeyStore::generate(Protocol::P2, 8, 4, 8, &mut rng);
        assert!(run(&config, &mut store, &mut Passive, &mut rng).is_err());
    }

    #[test]
    fn message_flow_rounds() {
        let rounds = |protocol| {
            let config = ProtocolConfig::new(protocol, 8, 4, 4, 1).unwrap();
            let mut rng = config.rng();
            let mut store = MasterKeyStore::generate(protocol, 8, 4, 8, &mut rng);
            let t = run(&config, &mut store, &mut Passive, &mut rng).unwrap();
            assert!(t.messages.iter().all(|m| m.channel == m.kind.channel()));
            t.messages.iter().map(|m| m.round).max().unwrap() + 1
        };
        assert_eq!(rounds(Protocol::P1), 2);
        assert_eq!(rounds(Protocol::P2), 2);
        assert_eq!(rounds(Protocol::P3), 3);
    }

    #[test]
    fn jsonl_has_position_and_summary_records() {
        let config = ProtocolConfig::new(Protocol::P3, 6, 3, 3, 11).unwrap();
        let mut store = MasterKeyStore::generate(Protocol::P3, 6, 3, 8, &mut config.rng());
        let t = run_seeded(&config, &mut store, &mut Passive).unwrap();
        let text = t.to_jsonl(Some(0));
        let lines: Vec<serde_json::Value> = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 10);
        assert!(lines[..9].iter().all(|l| l["type"] == "position"));
        assert_eq!(lines[9]["type"], "summary");
        assert_eq!(lines[9]["outcome"], "success");
        assert_eq!(lines[9]["alice_key_sha256"], lines[9]["bob_key_sha256"]);
    }
}
