//! Attacks on the simulated channels and analysis of entangling probes.
//!
//! Strategies plug into a protocol run through the [`Adversary`] hooks. The
//! probe tools work at single-position scale: [`check_probe_conditions`]
//! evaluates the undetectability conditions for a probe, and
//! [`probe_leakage_experiment`] estimates what the probe reveals about
//! Alice's bit and the pre-shared key bit.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_8, LN_2, TAU};
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::keymat::BitString;
use crate::protocols::{key_unitary, p1_decode_m, p3_decode_m, p3_unitary, Hop, Role};
use crate::qstate::{z_photon, Amplitude, BellOutcome, JointState, PhotonState, Qubit, Unitary2};
use crate::Protocol;

/// Threshold below which a condition residual counts as satisfied.
pub const CONDITION_TOL: f64 = 1e-9;
pub const ISOMETRY_TOL: f64 = 1e-12;
pub const DEFAULT_PROBE_DIM: usize = 4;
pub const MAX_PROBE_DIM: usize = 16;

const ZERO: Amplitude = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdversaryError {
    #[error("probe dimension {0} outside 1..={MAX_PROBE_DIM}")]
    ProbeDim(usize),
    #[error("probe map is not an isometry (deviation {0:e})")]
    NotIsometry(f64),
    #[error("probe is built for {probe}, not {requested}")]
    ProtocolMismatch {
        probe: Protocol,
        requested: Protocol,
    },
    #[error("probe violates the undetectability conditions (residual {0:e})")]
    Detectable(f64),
    #[error("trials must be positive")]
    NoTrials,
}

/// Hooks called by the protocol simulator. Every hook defaults to passing
/// traffic through untouched.
pub trait Adversary {
    /// Replaces the states the TP prepares (entangled pairs or `|0>` photons).
    fn prepare_source(
        &mut self,
        _protocol: Protocol,
        _count: usize,
        _rng: &mut dyn RngCore,
    ) -> Option<Vec<JointState>> {
        None
    }

    /// Photons in flight on `hop`, one register entry per position.
    fn on_quantum(
        &mut self,
        _protocol: Protocol,
        _hop: Hop,
        _register: &mut [JointState],
        _rng: &mut dyn RngCore,
    ) {
    }

    /// Called once the honest parties have measured; probes are still held.
    fn after_measurement(
        &mut self,
        _protocol: Protocol,
        _register: &mut [JointState],
        _rng: &mut dyn RngCore,
    ) {
    }

    fn on_announcement(
        &mut self,
        announced: Vec<BellOutcome>,
        _rng: &mut dyn RngCore,
    ) -> Vec<BellOutcome> {
        announced
    }

    fn on_digest(&mut self, _from: Role, digest: BitString, _rng: &mut dyn RngCore) -> BitString {
        digest
    }
}

/// No eavesdropper.
#[derive(Debug, Clone, Copy, Default)]
pub struct Passive;

impl Adversary for Passive {}

/// Measurement basis used by an intercept-resend attacker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisPolicy {
    Z,
    X,
    /// Z or X with equal probability, drawn once per position.
    Random,
    /// Rotated basis at `pi/8`, between Z and X.
    Breidbart,
    /// Basis whose first vector is `cos(t)|0> + sin(t)|1>`.
    Angle(f64),
}

impl BasisPolicy {
    pub fn basis<R: Rng + ?Sized>(self, rng: &mut R) -> Unitary2 {
        match self {
            BasisPolicy::Z => Unitary2::identity(),
            BasisPolicy::X => Unitary2::hadamard(),
            BasisPolicy::Random => {
                if rng.gen::<bool>() {
                    Unitary2::hadamard()
                } else {
                    Unitary2::identity()
                }
            }
            BasisPolicy::Breidbart => Unitary2::rotation(FRAC_PI_8),
            BasisPolicy::Angle(t) => Unitary2::rotation(t),
        }
    }
}

impl fmt::Display for BasisPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisPolicy::Z => f.write_str("z"),
            BasisPolicy::X => f.write_str("x"),
            BasisPolicy::Random => f.write_str("random"),
            BasisPolicy::Breidbart => f.write_str("breidbart"),
            BasisPolicy::Angle(t) => write!(f, "angle:{t}"),
        }
    }
}

/// What a malicious TP announces (or, in the entangled flow, prepares).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnouncePolicy {
    Truthful,
    UniformRandom,
    /// Swap within each pair: Φ⁺↔Φ⁻ and Ψ⁺↔Ψ⁻.
    FlipWithinPair,
    Constant(BellOutcome),
    /// Announce nothing at all.
    Drop,
}

impl fmt::Display for AnnouncePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnnouncePolicy::Truthful => f.write_str("truthful"),
            AnnouncePolicy::UniformRandom => f.write_str("random"),
            AnnouncePolicy::FlipWithinPair => f.write_str("flip"),
            AnnouncePolicy::Constant(o) => write!(f, "constant:{}", o.label()),
            AnnouncePolicy::Drop => f.write_str("drop"),
        }
    }
}

fn flip_within_pair(o: BellOutcome) -> BellOutcome {
    BellOutcome::from_index(o.index() ^ 1).expect("index below 4")
}

fn random_outcome<R: Rng + ?Sized>(rng: &mut R) -> BellOutcome {
    BellOutcome::ALL[rng.gen_range(0..4)]
}

/// Announcement vector a TP following `policy` sends instead of the truth.
pub fn malicious_tp_announce<R: Rng + ?Sized>(
    policy: AnnouncePolicy,
    true_outcomes: &[BellOutcome],
    rng: &mut R,
) -> Vec<BellOutcome> {
    match policy {
        AnnouncePolicy::Truthful => true_outcomes.to_vec(),
        AnnouncePolicy::UniformRandom => {
            true_outcomes.iter().map(|_| random_outcome(rng)).collect()
        }
        AnnouncePolicy::FlipWithinPair => {
            true_outcomes.iter().map(|&o| flip_within_pair(o)).collect()
        }
        AnnouncePolicy::Constant(c) => vec![c; true_outcomes.len()],
        AnnouncePolicy::Drop => Vec::new(),
    }
}

/// One measured photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Interception {
    pub position: usize,
    pub qubit: Option<Qubit>,
    pub outcome: u8,
}

/// What the eavesdropper kept.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EveRecord {
    pub intercepted: Vec<Interception>,
    /// Computational-basis probe outcome per position.
    pub probe_outcomes: Vec<usize>,
}

impl EveRecord {
    /// Fraction of intercepted values equal to the bit actually encoded.
    pub fn value_accuracy(&self, truth: impl Fn(&Interception) -> u8) -> Option<f64> {
        if self.intercepted.is_empty() {
            return None;
        }
        let hits = self
            .intercepted
            .iter()
            .filter(|i| i.outcome == truth(i))
            .count();
        Some(hits as f64 / self.intercepted.len() as f64)
    }
}

/// Measures every photon in the policy basis and forwards the collapsed state.
pub fn intercept_resend<R: Rng + ?Sized>(
    photons: &[PhotonState],
    policy: BasisPolicy,
    rng: &mut R,
) -> (Vec<PhotonState>, EveRecord) {
    let mut record = EveRecord::default();
    let resent = photons
        .iter()
        .enumerate()
        .map(|(position, photon)| {
            let basis = policy.basis(rng);
            let (outcome, post) = photon.measure_in(&basis, rng);
            record.intercepted.push(Interception {
                position,
                qubit: None,
                outcome,
            });
            post
        })
        .collect();
    (resent, record)
}

#[derive(Debug, Clone)]
pub enum AttackStrategy {
    Passive,
    InterceptResend { basis_policy: BasisPolicy },
    MaliciousTp { announce_policy: AnnouncePolicy },
    EntanglingProbe { probe: ProbeInstance },
}

impl fmt::Display for AttackStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackStrategy::Passive => f.write_str("passive"),
            AttackStrategy::InterceptResend { basis_policy } => {
                write!(f, "intercept-{basis_policy}")
            }
            AttackStrategy::MaliciousTp { announce_policy } => write!(f, "tp-{announce_policy}"),
            AttackStrategy::EntanglingProbe { probe } => {
                write!(f, "probe-{}-d{}", probe.protocol(), probe.probe_dim())
            }
        }
    }
}

/// The hop an intercept-resend attacker sits on: the one carrying encoded
/// photons.
pub fn attacked_hop(protocol: Protocol) -> Hop {
    match protocol {
        Protocol::P2 => Hop::TpToParticipants,
        Protocol::P1 | Protocol::P3 => Hop::ParticipantsToTp,
    }
}

/// An [`Adversary`] driven by an [`AttackStrategy`], keeping an [`EveRecord`].
#[derive(Debug, Clone)]
pub struct Eavesdropper {
    strategy: AttackStrategy,
    record: EveRecord,
}

impl Eavesdropper {
    pub fn new(strategy: AttackStrategy) -> Self {
        Self {
            strategy,
            record: EveRecord::default(),
        }
    }

    pub fn strategy(&self) -> &AttackStrategy {
        &self.strategy
    }

    pub fn record(&self) -> &EveRecord {
        &self.record
    }

    pub fn take_record(&mut self) -> EveRecord {
        std::mem::take(&mut self.record)
    }
}

impl Adversary for Eavesdropper {
    fn prepare_source(
        &mut self,
        protocol: Protocol,
        count: usize,
        rng: &mut dyn RngCore,
    ) -> Option<Vec<JointState>> {
        match &self.strategy {
            AttackStrategy::MaliciousTp { announce_policy } if protocol == Protocol::P2 => {
                let states = match announce_policy {
                    AnnouncePolicy::Drop => Vec::new(),
                    policy => (0..count)
                        .map(|_| {
                            let o = match policy {
                                AnnouncePolicy::UniformRandom => random_outcome(rng),
                                AnnouncePolicy::FlipWithinPair => BellOutcome::PhiPlus,
                                AnnouncePolicy::Constant(c) => *c,
                                _ => BellOutcome::PhiMinus,
                            };
                            JointState::from_pair(&o.state(), 1)
                        })
                        .collect(),
                };
                Some(states)
            }
            AttackStrategy::EntanglingProbe { probe } if probe.protocol() == protocol => {
                match probe {
                    ProbeInstance::P1 { .. } => None,
                    ProbeInstance::P2 { state } => Some(vec![state.clone(); count]),
                    ProbeInstance::P3 { initial, .. } => Some(vec![initial.clone(); count]),
                }
            }
            _ => None,
        }
    }

    fn on_quantum(
        &mut self,
        protocol: Protocol,
        hop: Hop,
        register: &mut [JointState],
        rng: &mut dyn RngCore,
    ) {
        match &self.strategy {
            AttackStrategy::InterceptResend { basis_policy } if hop == attacked_hop(protocol) => {
                for (position, state) in register.iter_mut().enumerate() {
                    let basis = basis_policy.basis(rng);
                    for qubit in [Qubit::A, Qubit::B] {
                        let outcome = state.measure_in(qubit, &basis, rng);
                        self.record.intercepted.push(Interception {
                            position,
                            qubit: Some(qubit),
                            outcome,
                        });
                    }
                }
            }
            AttackStrategy::EntanglingProbe { probe }
                if probe.protocol() == protocol && hop == Hop::ParticipantsToTp =>
            {
                for state in register.iter_mut() {
                    match probe {
                        ProbeInstance::P1 { .. } => *state = probe.attach(state),
                        ProbeInstance::P3 { .. } => *state = probe.second_pass(state),
                        ProbeInstance::P2 { .. } => {}
                    }
                }
            }
            _ => {}
        }
    }

    fn after_measurement(
        &mut self,
        protocol: Protocol,
        register: &mut [JointState],
        rng: &mut dyn RngCore,
    ) {
        if let AttackStrategy::EntanglingProbe { probe } = &self.strategy {
            if probe.protocol() == protocol {
                for state in register.iter_mut() {
                    self.record.probe_outcomes.push(state.measure_probe(rng));
                }
            }
        }
    }

    fn on_announcement(
        &mut self,
        announced: Vec<BellOutcome>,
        rng: &mut dyn RngCore,
    ) -> Vec<BellOutcome> {
        match &self.strategy {
            AttackStrategy::MaliciousTp { announce_policy } => {
                malicious_tp_announce(*announce_policy, &announced, rng)
            }
            _ => announced,
        }
    }
}

/// An eavesdropper's probe together with the maps it applies.
///
/// The joint index is `(2a + b) * d + e` for pair basis state `|ab>` and
/// probe basis state `|e>`.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbeInstance {
    /// Images of `|ab>|E0>` under the probe unitary, for `ab = 00, 01, 10, 11`.
    P1 { columns: Vec<JointState> },
    /// State the TP distributes, entangled with the probe.
    P2 { state: JointState },
    /// Initial state sent out, and the unitary applied to returning photons.
    P3 {
        initial: JointState,
        second_pass: DMatrix<Amplitude>,
    },
}

fn check_dim(d: usize) -> Result<(), AdversaryError> {
    if (1..=MAX_PROBE_DIM).contains(&d) {
        Ok(())
    } else {
        Err(AdversaryError::ProbeDim(d))
    }
}

fn unitarity_deviation(m: &DMatrix<Amplitude>) -> f64 {
    let n = m.ncols();
    let g = m.adjoint() * m - DMatrix::<Amplitude>::identity(n, n);
    g.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn inner(a: &[Amplitude], b: &[Amplitude]) -> Amplitude {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn vnorm(v: &[Amplitude]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn vsub(a: &[Amplitude], b: &[Amplitude], sign: f64) -> Vec<Amplitude> {
    a.iter().zip(b).map(|(x, y)| x - y * sign).collect()
}

/// Joint state with the given (unnormalised) probe vector per Bell outcome.
fn from_bell_components(comps: &[Vec<Amplitude>; 4], d: usize) -> JointState {
    let mut amps = vec![ZERO; 4 * d];
    for (o, g) in BellOutcome::ALL.iter().zip(comps) {
        let v = o.vector();
        for i in 0..4 {
            for e in 0..d {
                amps[i * d + e] += g[e] * v[i];
            }
        }
    }
    JointState::from_raw(d, amps)
}

impl ProbeInstance {
    pub fn p1(columns: [JointState; 4]) -> Result<Self, AdversaryError> {
        let d = columns[0].probe_dim();
        check_dim(d)?;
        if columns.iter().any(|c| c.probe_dim() != d) {
            return Err(AdversaryError::ProbeDim(d));
        }
        let mut dev: f64 = 0.0;
        for (i, a) in columns.iter().enumerate() {
            for (j, b) in columns.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((inner(a.amps(), b.amps()) - want).norm());
            }
        }
        if dev > ISOMETRY_TOL {
            return Err(AdversaryError::NotIsometry(dev));
        }
        Ok(ProbeInstance::P1 {
            columns: columns.to_vec(),
        })
    }

    pub fn p2(state: JointState) -> Result<Self, AdversaryError> {
        check_dim(state.probe_dim())?;
        Ok(ProbeInstance::P2 { state })
    }

    pub fn p3(
        initial: JointState,
        second_pass: DMatrix<Amplitude>,
    ) -> Result<Self, AdversaryError> {
        let d = initial.probe_dim();
        check_dim(d)?;
        if second_pass.nrows() != 4 * d || second_pass.ncols() != 4 * d {
            return Err(AdversaryError::ProbeDim(d));
        }
        let dev = unitarity_deviation(&second_pass);
        if dev > ISOMETRY_TOL {
            return Err(AdversaryError::NotIsometry(dev));
        }
        Ok(ProbeInstance::P3 {
            initial,
            second_pass,
        })
    }

    /// No entanglement at all (`d = 1`).
    pub fn trivial(protocol: Protocol) -> Self {
        match protocol {
            Protocol::P1 => ProbeInstance::P1 {
                columns: (0..4)
                    .map(|i| {
                        let mut amps = vec![ZERO; 4];
                        amps[i] = Complex64::new(1.0, 0.0);
                        JointState::from_raw(1, amps)
                    })
                    .collect(),
            },
            Protocol::P2 => ProbeInstance::P2 {
                state: JointState::from_pair(&BellOutcome::PhiMinus.state(), 1),
            },
            Protocol::P3 => ProbeInstance::P3 {
                initial: JointState::product(&PhotonState::zero(), &PhotonState::zero()),
                second_pass: DMatrix::identity(4, 4),
            },
        }
    }

    /// Probe that copies the Z value of the photon on Alice's channel (`d = 2`).
    /// It learns a lot and is easily detected.
    pub fn copy_probe(protocol: Protocol) -> Self {
        let one = Complex64::new(1.0, 0.0);
        match protocol {
            Protocol::P1 => ProbeInstance::P1 {
                columns: (0..4)
                    .map(|ab| {
                        let mut amps = vec![ZERO; 8];
                        amps[ab * 2 + (ab >> 1)] = one;
                        JointState::from_raw(2, amps)
                    })
                    .collect(),
            },
            Protocol::P2 => {
                let mut amps = vec![ZERO; 8];
                amps[0] = one * FRAC_1_SQRT_2;
                amps[3 * 2 + 1] = -one * FRAC_1_SQRT_2;
                ProbeInstance::P2 {
                    state: JointState::from_raw(2, amps),
                }
            }
            Protocol::P3 => {
                let mut cnot = DMatrix::<Amplitude>::zeros(8, 8);
                for pair in 0..4 {
                    let a = pair >> 1;
                    for e in 0..2 {
                        cnot[(pair * 2 + (e ^ a), pair * 2 + e)] = one;
                    }
                }
                ProbeInstance::P3 {
                    initial: JointState::from_pair(
                        &crate::qstate::tensor(&PhotonState::zero(), &PhotonState::zero()),
                        2,
                    ),
                    second_pass: cnot,
                }
            }
        }
    }

    /// Haar-random probe maps with no regard for detectability.
    pub fn random_unconstrained<R: Rng + ?Sized>(
        protocol: Protocol,
        d: usize,
        rng: &mut R,
    ) -> Result<Self, AdversaryError> {
        check_dim(d)?;
        Ok(match protocol {
            Protocol::P1 => {
                let u = random_unitary(4 * d, rng);
                ProbeInstance::P1 {
                    columns: (0..4)
                        .map(|ab| {
                            JointState::from_raw(d, u.column(ab * d).iter().copied().collect())
                        })
                        .collect(),
                }
            }
            Protocol::P2 => ProbeInstance::P2 {
                state: JointState::from_raw(d, random_unit_vector(4 * d, rng)),
            },
            Protocol::P3 => ProbeInstance::P3 {
                initial: JointState::from_raw(d, random_unit_vector(4 * d, rng)),
                second_pass: random_unitary(4 * d, rng),
            },
        })
    }

    pub fn protocol(&self) -> Protocol {
        match self {
            ProbeInstance::P1 { .. } => Protocol::P1,
            ProbeInstance::P2 { .. } => Protocol::P2,
            ProbeInstance::P3 { .. } => Protocol::P3,
        }
    }

    pub fn probe_dim(&self) -> usize {
        match self {
            ProbeInstance::P1 { columns } => columns[0].probe_dim(),
            ProbeInstance::P2 { state } => state.probe_dim(),
            ProbeInstance::P3 { initial, .. } => initial.probe_dim(),
        }
    }

    /// Applies the attach map to a probe-free pair. States that already
    /// carry a probe, and non-`P1` probes, are returned unchanged.
    pub fn attach(&self, pair: &JointState) -> JointState {
        let ProbeInstance::P1 { columns } = self else {
            return pair.clone();
        };
        if pair.probe_dim() != 1 {
            return pair.clone();
        }
        let d = columns[0].probe_dim();
        let mut amps = vec![ZERO; 4 * d];
        for (c, col) in pair.amps().iter().zip(columns) {
            for (out, x) in amps.iter_mut().zip(col.amps()) {
                *out += c * x;
            }
        }
        JointState::from_raw(d, amps)
    }

    /// Applies the second-pass unitary. Only defined for `P3` probes and
    /// states of matching probe dimension; anything else is returned as is.
    pub fn second_pass(&self, state: &JointState) -> JointState {
        match self {
            ProbeInstance::P3 { second_pass, .. } if second_pass.ncols() == state.amps().len() => {
                let v = nalgebra::DVector::from_column_slice(state.amps());
                let out = second_pass * v;
                JointState::from_raw(state.probe_dim(), out.iter().copied().collect())
            }
            _ => state.clone(),
        }
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Amplitude {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Uniformly random unit vector in `C^d`.
pub fn random_unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<Amplitude> {
    let v: Vec<Amplitude> = (0..d).map(|_| gaussian(rng)).collect();
    let n = vnorm(&v);
    v.into_iter().map(|z| z / n).collect()
}

/// Haar-random `d x d` unitary (QR of a Ginibre matrix with phase fix).
pub fn random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<Amplitude> {
    let g = DMatrix::from_fn(d, d, |_, _| gaussian(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 {
            rjj / rjj.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

fn random_phase<R: Rng + ?Sized>(rng: &mut R) -> Amplitude {
    Complex64::from_polar(1.0, rng.gen_range(0.0..TAU))
}

/// Random probe satisfying the undetectability conditions, with the default
/// probe dimension.
pub fn construct_constrained_probe<R: Rng + ?Sized>(
    protocol: Protocol,
    rng: &mut R,
) -> ProbeInstance {
    construct_constrained_probe_with_dim(protocol, DEFAULT_PROBE_DIM, rng)
        .expect("default dimension is valid")
}

/// Random probe whose free parameters are sampled and whose constrained
/// parameters are fixed by the conditions.
///
/// - `P1`: `|00>,|11> -> Φ⁺v⁺ ± Φ⁻v⁻` and `|01>,|10> -> Ψ⁺w⁺ ± Ψ⁻w⁻` with
///   random `v±, w±` of norm `1/sqrt(2)`.
/// - `P2`: `Φ⁻ ⊗ |e>` for a random probe vector `|e>`.
/// - `P3`: `a1 Φ⁺|e1> + a2 Φ⁻|e2>` sent out, and a Bell-controlled second
///   pass `Σ_x |B_x><B_x| ⊗ V_x` with random unitaries `V_x`.
pub fn construct_constrained_probe_with_dim<R: Rng + ?Sized>(
    protocol: Protocol,
    d: usize,
    rng: &mut R,
) -> Result<ProbeInstance, AdversaryError> {
    check_dim(d)?;
    let half = |rng: &mut R| -> Vec<Amplitude> {
        random_unit_vector(d, rng)
            .into_iter()
            .map(|z| z * FRAC_1_SQRT_2)
            .collect()
    };
    let zero = vec![ZERO; d];
    Ok(match protocol {
        Protocol::P1 => {
            let (vp, vm, wp, wm) = (half(rng), half(rng), half(rng), half(rng));
            let neg = |v: &[Amplitude]| v.iter().map(|z| -z).collect::<Vec<_>>();
            let c00 = [vp.clone(), vm.clone(), zero.clone(), zero.clone()];
            let c11 = [vp, neg(&vm), zero.clone(), zero.clone()];
            let c01 = [zero.clone(), zero.clone(), wp.clone(), wm.clone()];
            let c10 = [zero.clone(), zero, wp, neg(&wm)];
            ProbeInstance::P1 {
                columns: [c00, c01, c10, c11]
                    .iter()
                    .map(|c| from_bell_components(c, d))
                    .collect(),
            }
        }
        Protocol::P2 => {
            let phase = random_phase(rng);
            let e: Vec<Amplitude> = random_unit_vector(d, rng)
                .into_iter()
                .map(|z| z * phase)
                .collect();
            let comps = [zero.clone(), e, zero.clone(), zero];
            ProbeInstance::P2 {
                state: from_bell_components(&comps, d),
            }
        }
        Protocol::P3 => {
            let t = rng.gen_range(0.0..FRAC_PI_2);
            let a1 = Complex64::new(t.cos(), 0.0);
            let a2 = random_phase(rng) * t.sin();
            let e1: Vec<Amplitude> = random_unit_vector(d, rng)
                .into_iter()
                .map(|z| z * a1)
                .collect();
            let e2: Vec<Amplitude> = random_unit_vector(d, rng)
                .into_iter()
                .map(|z| z * a2)
                .collect();
            let initial = from_bell_components(&[e1, e2, zero.clone(), zero], d);
            let vs: Vec<DMatrix<Amplitude>> = (0..4).map(|_| random_unitary(d, rng)).collect();
            let mut m = DMatrix::<Amplitude>::zeros(4 * d, 4 * d);
            for (o, v) in BellOutcome::ALL.iter().zip(&vs) {
                let b = o.vector();
                for i in 0..4 {
                    for j in 0..4 {
                        let p = b[i] * b[j];
                        if p == 0.0 {
                            continue;
                        }
                        for e in 0..d {
                            for f in 0..d {
                                m[(i * d + e, j * d + f)] += v[(e, f)] * p;
                            }
                        }
                    }
                }
            }
            ProbeInstance::p3(initial, m)?
        }
    })
}

/// Result of [`check_probe_conditions`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionReport {
    pub satisfied: bool,
    /// Largest norm among all violated conditions.
    pub residual: f64,
}

impl ConditionReport {
    fn from_residual(residual: f64) -> Self {
        Self {
            satisfied: residual < CONDITION_TOL,
            residual,
        }
    }
}

const PHI_P: usize = 0;
const PHI_M: usize = 1;
const PSI_P: usize = 2;
const PSI_M: usize = 3;

/// Indexing of the eight `P3` cases: `(k1, rA, rB)`.
const P3_CASES: [(u8, u8, u8); 8] = [
    (0, 0, 0),
    (0, 0, 1),
    (0, 1, 0),
    (0, 1, 1),
    (1, 0, 0),
    (1, 0, 1),
    (1, 1, 0),
    (1, 1, 1),
];

/// Coefficients of `(f1, f2, f3, f4)` on `(Φ⁺, Φ⁻, Ψ⁺, Ψ⁻)` for each case.
const P3_PATTERN: [[f64; 4]; 8] = [
    [1.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 1.0],
    [0.0, 0.0, 1.0, -1.0],
    [1.0, -1.0, 0.0, 0.0],
    [1.0, 0.0, 1.0, 0.0],
    [0.0, -1.0, 0.0, 1.0],
    [0.0, -1.0, 0.0, -1.0],
    [1.0, 0.0, -1.0, 0.0],
];

fn p3_final_state(
    initial: &JointState,
    probe: &ProbeInstance,
    k1: u8,
    ra: u8,
    rb: u8,
) -> JointState {
    let mut s = initial.clone();
    s.apply_local(Qubit::A, &p3_unitary(k1, ra));
    s.apply_local(Qubit::B, &p3_unitary(k1, rb));
    probe.second_pass(&s)
}

/// Evaluates the undetectability conditions for `probe`.
///
/// - `P1`: the eight vanishing components, the eight sign-weighted sums for
///   the X-basis cases, and the four pairwise equalities.
/// - `P2`: `|01>,|10>` components vanish, `|00>` and `-|11>` components
///   coincide, and `|00>` carries weight `1/2`.
/// - `P3`: all eight cases have the support and sign pattern of
///   `(f1, f2, f3, f4)` read off the first two cases.
pub fn check_probe_conditions(probe: &ProbeInstance) -> ConditionReport {
    let residual = match probe {
        ProbeInstance::P1 { columns } => {
            let v: Vec<[Vec<Amplitude>; 4]> = columns.iter().map(|c| c.bell_components()).collect();
            let mut worst: f64 = 0.0;
            let zeros = [
                (0, PSI_P),
                (0, PSI_M),
                (1, PHI_P),
                (1, PHI_M),
                (2, PHI_P),
                (2, PHI_M),
                (3, PSI_P),
                (3, PSI_M),
            ];
            for (ab, k) in zeros {
                worst = worst.max(vnorm(&v[ab][k]));
            }
            // X-basis cases: the sign patterns of |++>, |+->, |-+>, |--> on |ab>
            let signs: [(usize, [f64; 4]); 8] = [
                (PHI_M, [1.0, 1.0, 1.0, 1.0]),
                (PSI_M, [1.0, 1.0, 1.0, 1.0]),
                (PHI_P, [1.0, -1.0, 1.0, -1.0]),
                (PSI_P, [1.0, -1.0, 1.0, -1.0]),
                (PHI_P, [1.0, 1.0, -1.0, -1.0]),
                (PSI_P, [1.0, 1.0, -1.0, -1.0]),
                (PHI_M, [1.0, -1.0, -1.0, 1.0]),
                (PSI_M, [1.0, -1.0, -1.0, 1.0]),
            ];
            let d = columns[0].probe_dim();
            for (k, s) in signs {
                let mut sum = vec![ZERO; d];
                for ab in 0..4 {
                    for (acc, x) in sum.iter_mut().zip(&v[ab][k]) {
                        *acc += x * s[ab];
                    }
                }
                worst = worst.max(vnorm(&sum));
            }
            let pairs = [
                (0, 3, PHI_M, -1.0),
                (1, 2, PSI_M, -1.0),
                (0, 3, PHI_P, 1.0),
                (1, 2, PSI_P, 1.0),
            ];
            for (x, y, k, sign) in pairs {
                worst = worst.max(vnorm(&vsub(&v[x][k], &v[y][k], sign)));
            }
            worst
        }
        ProbeInstance::P2 { state } => {
            let d = state.probe_dim();
            let comp = |i: usize| state.amps()[i * d..(i + 1) * d].to_vec();
            let (v00, v01, v10, v11) = (comp(0), comp(1), comp(2), comp(3));
            [
                vnorm(&v01),
                vnorm(&v10),
                vnorm(&vsub(&v00, &v11, -1.0)),
                (vnorm(&v00) - FRAC_1_SQRT_2).abs(),
            ]
            .into_iter()
            .fold(0.0, f64::max)
        }
        ProbeInstance::P3 { initial, .. } => {
            let g: Vec<[Vec<Amplitude>; 4]> = P3_CASES
                .iter()
                .map(|&(k, a, b)| p3_final_state(initial, probe, k, a, b).bell_components())
                .collect();
            let f = [
                g[0][PHI_P].clone(),
                g[0][PHI_M].clone(),
                g[1][PSI_P].clone(),
                g[1][PSI_M].clone(),
            ];
            let mut worst: f64 = 0.0;
            for (case, pattern) in g.iter().zip(P3_PATTERN) {
                for k in 0..4 {
                    worst = worst.max(vnorm(&vsub(&case[k], &f[k], pattern[k])));
                }
            }
            worst
        }
    };
    ConditionReport::from_residual(residual)
}

/// One branch of a single-position experiment: what Eve's probe holds given
/// the secret, the public outcome and whether the parties would notice.
#[derive(Debug, Clone)]
struct Branch {
    /// `2 * rA + k1`.
    secret: usize,
    /// Announced Bell outcome, or 0 when nothing is announced.
    public: usize,
    detected: bool,
    /// Unnormalised probe vector; its squared norm is the branch probability.
    g: Vec<Amplitude>,
}

/// All equally likely `(k1, rA, rB)` cases with their branches.
fn probe_cases(probe: &ProbeInstance) -> Vec<Vec<Branch>> {
    let mut cases = Vec::new();
    match probe {
        ProbeInstance::P1 { .. } | ProbeInstance::P3 { .. } => {
            for (k1, ra, rb) in P3_CASES {
                let (state, decode): (JointState, fn(u8, BellOutcome) -> u8) = match probe {
                    ProbeInstance::P1 { .. } => {
                        let u = key_unitary(k1);
                        let qa = u.apply(&z_photon(ra).expect("bit"));
                        let qb = u.apply(&z_photon(rb).expect("bit"));
                        (probe.attach(&JointState::product(&qa, &qb)), p1_decode_m)
                    }
                    ProbeInstance::P3 { initial, .. } => {
                        (p3_final_state(initial, probe, k1, ra, rb), p3_decode_m)
                    }
                    ProbeInstance::P2 { .. } => unreachable!(),
                };
                let comps = state.bell_components();
                cases.push(
                    BellOutcome::ALL
                        .iter()
                        .zip(comps)
                        .map(|(&o, g)| Branch {
                            secret: (2 * ra + k1) as usize,
                            public: o.index(),
                            detected: decode(k1, o) != ra ^ rb,
                            g,
                        })
                        .collect(),
                );
            }
        }
        ProbeInstance::P2 { state } => {
            let d = state.probe_dim();
            for k1 in 0..2u8 {
                let mut s = state.clone();
                let u = key_unitary(k1);
                s.apply_local(Qubit::A, &u);
                s.apply_local(Qubit::B, &u);
                cases.push(
                    (0..4usize)
                        .map(|ab| {
                            let (ra, rb) = ((ab >> 1) as u8, (ab & 1) as u8);
                            Branch {
                                secret: (2 * ra + k1) as usize,
                                public: 0,
                                detected: ra != rb ^ k1,
                                g: s.amps()[ab * d..(ab + 1) * d].to_vec(),
                            }
                        })
                        .collect(),
                );
            }
        }
    }
    cases
}

/// Single-position leakage estimate for a probe.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakageReport {
    pub protocol: Protocol,
    pub probe_dim: usize,
    pub trials: usize,
    pub residual: f64,
    /// Probability that a position decodes wrongly.
    pub detection_probability: f64,
    /// Plug-in mutual information (bits) between the probe outcome and
    /// `(rA, k1)`, from sampled frequencies.
    pub mi_estimate: f64,
    /// Same with the Miller–Madow bias correction.
    pub mi_miller_madow: f64,
    /// Mutual information of the exact joint distribution.
    pub mi_exact: f64,
    /// Expected plug-in bias under independence, `(Ks-1)(Ke-1)/(2N ln 2)`.
    pub bias_bound: f64,
    /// Largest trace distance between Eve's states (public outcome and
    /// probe) for two different values of `(rA, k1)`.
    pub max_trace_distance: f64,
}

fn entropy_bits(counts: impl Iterator<Item = f64>, total: f64) -> f64 {
    counts
        .filter(|&c| c > 0.0)
        .map(|c| {
            let p = c / total;
            -p * p.log2()
        })
        .sum()
}

/// Plug-in mutual information (bits) of a joint count table.
pub fn mutual_information(table: &[Vec<f64>]) -> f64 {
    let total: f64 = table.iter().flatten().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let cols = table.first().map_or(0, Vec::len);
    let rows = table.iter().map(|r| r.iter().sum::<f64>());
    let col_sums = (0..cols).map(|j| table.iter().map(|r| r[j]).sum::<f64>());
    let joint = table.iter().flatten().copied();
    (entropy_bits(rows, total) + entropy_bits(col_sums, total) - entropy_bits(joint, total))
        .max(0.0)
}

fn nonzero(it: impl Iterator<Item = f64>) -> usize {
    it.filter(|&c| c > 0.0).count()
}

/// Estimates how much a condition-satisfying probe reveals. Unsatisfied
/// probes are rejected since detection and leakage would be conflated.
pub fn probe_leakage_experiment<R: Rng + ?Sized>(
    probe: &ProbeInstance,
    trials: usize,
    rng: &mut R,
) -> Result<LeakageReport, AdversaryError> {
    let conditions = check_probe_conditions(probe);
    if !conditions.satisfied {
        return Err(AdversaryError::Detectable(conditions.residual));
    }
    probe_leakage_unchecked(probe, trials, rng)
}

/// [`probe_leakage_experiment`] without the condition check; reports
/// detection and leakage side by side.
pub fn probe_leakage_unchecked<R: Rng + ?Sized>(
    probe: &ProbeInstance,
    trials: usize,
    rng: &mut R,
) -> Result<LeakageReport, AdversaryError> {
    if trials == 0 {
        return Err(AdversaryError::NoTrials);
    }
    let d = probe.probe_dim();
    let cases = probe_cases(probe);
    let weight = 1.0 / cases.len() as f64;

    let mut exact = vec![vec![0.0; d]; 4];
    let mut detection = 0.0;
    let mut samplers = Vec::with_capacity(cases.len());
    for branches in &cases {
        let mut cells = Vec::new();
        let mut cdf = Vec::new();
        let mut acc = 0.0;
        for b in branches {
            let p_branch: f64 = b.g.iter().map(|z| z.norm_sqr()).sum();
            if b.detected {
                detection += weight * p_branch;
            }
            for (e, z) in b.g.iter().enumerate() {
                let p = z.norm_sqr();
                exact[b.secret][e] += weight * p;
                if p > 0.0 {
                    acc += p;
                    cdf.push(acc);
                    cells.push((b.secret, e));
                }
            }
        }
        samplers.push((cdf, cells));
    }

    let mut counts = vec![vec![0.0; d]; 4];
    for _ in 0..trials {
        let (cdf, cells) = &samplers[rng.gen_range(0..samplers.len())];
        let total = *cdf.last().expect("case has support");
        let u = rng.gen::<f64>() * total;
        let i = cdf.partition_point(|&c| c <= u).min(cells.len() - 1);
        let (s, e) = cells[i];
        counts[s][e] += 1.0;
    }
    let n = trials as f64;
    let mi_estimate = mutual_information(&counts);
    let ks = nonzero(counts.iter().map(|r| r.iter().sum()));
    let ke = nonzero((0..d).map(|e| counts.iter().map(|r| r[e]).sum()));
    let kse = nonzero(counts.iter().flatten().copied());
    let correction = (ks as f64 + ke as f64 - kse as f64 - 1.0) / (2.0 * n * LN_2);
    let bias_bound = (ks.saturating_sub(1) * ke.saturating_sub(1)) as f64 / (2.0 * n * LN_2);

    Ok(LeakageReport {
        protocol: probe.protocol(),
        probe_dim: d,
        trials,
        residual: check_probe_conditions(probe).residual,
        detection_probability: detection,
        mi_estimate,
        mi_miller_madow: (mi_estimate + correction).max(0.0),
        mi_exact: mutual_information(&exact),
        bias_bound,
        max_trace_distance: max_trace_distance(&cases, d),
    })
}

/// Largest trace distance between the classical-quantum states
/// `Σ_o |o><o| ⊗ ρ(o, s)` held by Eve for different secrets `s`.
fn max_trace_distance(cases: &[Vec<Branch>], d: usize) -> f64 {
    let mut blocks: HashMap<(usize, usize), DMatrix<Amplitude>> = HashMap::new();
    let mut prior = [0.0f64; 4];
    for branches in cases {
        for b in branches {
            let v = nalgebra::DVector::from_column_slice(&b.g);
            let rho = &v * v.adjoint();
            prior[b.secret] += b.g.iter().map(|z| z.norm_sqr()).sum::<f64>();
            *blocks
                .entry((b.secret, b.public))
                .or_insert_with(|| DMatrix::zeros(d, d)) += rho;
        }
    }
    let publics: Vec<usize> = {
        let mut p: Vec<usize> = blocks.keys().map(|k| k.1).collect();
        p.sort_unstable();
        p.dedup();
        p
    };
    let zero = DMatrix::<Amplitude>::zeros(d, d);
    let mut worst: f64 = 0.0;
    for s in 0..4 {
        for t in (s + 1)..4 {
            if prior[s] <= 0.0 || prior[t] <= 0.0 {
                continue;
            }
            let mut dist = 0.0;
            for &o in &publics {
                let a = blocks.get(&(s, o)).unwrap_or(&zero) / Complex64::new(prior[s], 0.0);
                let b = blocks.get(&(t, o)).unwrap_or(&zero) / Complex64::new(prior[t], 0.0);
                let diff = a - b;
                let diff = (&diff + diff.adjoint()) * Complex64::new(0.5, 0.0);
                dist += diff
                    .symmetric_eigenvalues()
                    .iter()
                    .map(|x| x.abs())
                    .sum::<f64>();
            }
            worst = worst.max(0.5 * dist);
        }
    }
    worst
}

/// Summary emitted by the `attack` command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    pub strategy: String,
    pub protocol: Protocol,
    pub trials: usize,
    pub detection_rate: f64,
    pub per_position_disturbance: f64,
    pub mi_estimate: Option<f64>,
    pub max_trace_distance: Option<f64>,
    pub residual: Option<f64>,
    /// Fraction of intercepted values matching the encoded bit.
    pub value_guess_accuracy: Option<f64>,
}
