//! Exact small-statevector arithmetic.
//!
//! Everything here works on dense double-precision complex vectors: single
//! photons (dimension 2), photon pairs (dimension 4) and pairs entangled with
//! an eavesdropper's probe (dimension `4 * d`). Pair indices are `2a + b` where
//! `a` is the qubit travelling on Alice's channel and `b` the one on Bob's;
//! joint indices are `(2a + b) * d + e`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Complex probability amplitude.
pub type Amplitude = Complex64;

/// Tolerance for state normalisation and unitarity checks.
pub const STATE_TOL: f64 = 1e-12;
/// Tolerance for comparing probabilities.
pub const PROB_TOL: f64 = 1e-9;

const ZERO: Amplitude = Complex64::new(0.0, 0.0);
const ONE: Amplitude = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QStateError {
    #[error("amplitude is not finite")]
    NonFinite,
    #[error("state is not normalised (norm² = {norm_sq})")]
    NotNormalized { norm_sq: f64 },
    #[error("matrix is not unitary (max |UU† - I| = {deviation:e})")]
    NotUnitary { deviation: f64 },
    #[error("H' power {0} out of range 0..=3")]
    PowerOutOfRange(u8),
    #[error("bit value {0} is not 0 or 1")]
    NotABit(u8),
    #[error("state has {got} amplitudes, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

fn check_finite(amps: &[Amplitude]) -> Result<(), QStateError> {
    if amps.iter().all(|a| a.re.is_finite() && a.im.is_finite()) {
        Ok(())
    } else {
        Err(QStateError::NonFinite)
    }
}

fn norm_sq(amps: &[Amplitude]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}

fn check_normalized(amps: &[Amplitude]) -> Result<(), QStateError> {
    check_finite(amps)?;
    let n = norm_sq(amps);
    if (n - 1.0).abs() > STATE_TOL {
        return Err(QStateError::NotNormalized { norm_sq: n });
    }
    Ok(())
}

/// `|<a|b>|` for two equally sized vectors.
fn overlap(a: &[Amplitude], b: &[Amplitude]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.conj() * y)
        .sum::<Amplitude>()
        .norm()
}

/// Draws an index from a discrete distribution. Weights need not sum to
/// exactly one; the last index with positive weight absorbs rounding.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last = i;
        if u < p {
            return i;
        }
        u -= p;
    }
    last
}

/// Single-photon polarisation state over `(|0>, |1>)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonState {
    amps: [Amplitude; 2],
}

impl PhotonState {
    pub fn new(a0: Amplitude, a1: Amplitude) -> Result<Self, QStateError> {
        let amps = [a0, a1];
        check_normalized(&amps)?;
        Ok(Self { amps })
    }

    pub fn zero() -> Self {
        Self { amps: [ONE, ZERO] }
    }

    pub fn one() -> Self {
        Self { amps: [ZERO, ONE] }
    }

    pub fn plus() -> Self {
        let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
        Self { amps: [s, s] }
    }

    pub fn minus() -> Self {
        let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
        Self { amps: [s, -s] }
    }

    pub fn amps(&self) -> [Amplitude; 2] {
        self.amps
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.amps)
    }

    /// Equality up to a global phase, `| |<self|other>| - 1 | <= tol`.
    pub fn approx_eq_up_to_phase(&self, other: &Self, tol: f64) -> bool {
        (overlap(&self.amps, &other.amps) - 1.0).abs() <= tol
    }

    /// Exact amplitude-wise equality within `tol`.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.amps
            .iter()
            .zip(other.amps.iter())
            .all(|(a, b)| (a - b).norm() <= tol)
    }

    /// Multiplies by a unit-modulus scalar.
    pub fn with_phase(&self, phase: Amplitude) -> Self {
        Self {
            amps: [self.amps[0] * phase, self.amps[1] * phase],
        }
    }

    /// Born-rule Z-basis measurement; returns the bit and the collapsed photon.
    pub fn measure_z<R: Rng + ?Sized>(&self, rng: &mut R) -> (u8, PhotonState) {
        let p = [self.amps[0].norm_sqr(), self.amps[1].norm_sqr()];
        match sample_index(&p, rng) {
            0 => (0, Self::zero()),
            _ => (1, Self::one()),
        }
    }

    /// Measures in the orthonormal basis given by the columns of `basis`.
    /// Outcome `k` means the photon collapsed onto column `k`.
    pub fn measure_in<R: Rng + ?Sized>(&self, basis: &Unitary2, rng: &mut R) -> (u8, PhotonState) {
        let rotated = basis.adjoint().apply(self);
        let (bit, _) = rotated.measure_z(rng);
        (bit, basis.column(bit as usize))
    }
}

/// Z-basis single photon: `|0>` for bit 0, `|1>` for bit 1.
pub fn z_photon(bit: u8) -> Result<PhotonState, QStateError> {
    match bit {
        0 => Ok(PhotonState::zero()),
        1 => Ok(PhotonState::one()),
        b => Err(QStateError::NotABit(b)),
    }
}

/// A 2x2 unitary, stored row-major. Construction validates unitarity, so every
/// value of this type can be applied without further checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unitary2 {
    m: [[Amplitude; 2]; 2],
}

impl Unitary2 {
    /// Rejects matrices with `max |U U† - I| > 1e-12`.
    pub fn new(m: [[Amplitude; 2]; 2]) -> Result<Self, QStateError> {
        check_finite(&[m[0][0], m[0][1], m[1][0], m[1][1]])?;
        let u = Self { m };
        let deviation = u.unitarity_deviation();
        if deviation > STATE_TOL {
            return Err(QStateError::NotUnitary { deviation });
        }
        Ok(u)
    }

    pub fn identity() -> Self {
        Self {
            m: [[ONE, ZERO], [ZERO, ONE]],
        }
    }

    /// Hadamard `H = (|0><0| + |0><1| + |1><0| - |1><1|)/sqrt(2)`.
    pub fn hadamard() -> Self {
        let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
        Self {
            m: [[s, s], [s, -s]],
        }
    }

    /// Real rotation by `theta`: columns `cos|0> + sin|1>` and `-sin|0> + cos|1>`.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            m: [
                [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
                [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
            ],
        }
    }

    /// `H' = (|0><0| - |0><1| + |1><0| + |1><1|)/sqrt(2)`, a rotation by pi/4.
    pub fn hprime() -> Self {
        Self::rotation(std::f64::consts::FRAC_PI_4)
    }

    pub fn entries(&self) -> [[Amplitude; 2]; 2] {
        self.m
    }

    pub fn column(&self, k: usize) -> PhotonState {
        PhotonState {
            amps: [self.m[0][k], self.m[1][k]],
        }
    }

    pub fn adjoint(&self) -> Self {
        let m = self.m;
        Self {
            m: [
                [m[0][0].conj(), m[1][0].conj()],
                [m[0][1].conj(), m[1][1].conj()],
            ],
        }
    }

    /// Matrix product `self * rhs`.
    pub fn compose(&self, rhs: &Self) -> Self {
        let (a, b) = (self.m, rhs.m);
        let mut m = [[ZERO; 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Self { m }
    }

    pub fn unitarity_deviation(&self) -> f64 {
        let p = self.compose(&self.adjoint()).m;
        let mut worst: f64 = 0.0;
        for (i, row) in p.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((v - target).norm());
            }
        }
        worst
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        (0..2).all(|i| (0..2).all(|j| (self.m[i][j] - other.m[i][j]).norm() <= tol))
    }

    pub fn apply(&self, s: &PhotonState) -> PhotonState {
        let [a0, a1] = s.amps;
        PhotonState {
            amps: [
                self.m[0][0] * a0 + self.m[0][1] * a1,
                self.m[1][0] * a0 + self.m[1][1] * a1,
            ],
        }
    }
}

/// Applies `u` to `s`. Non-unitary matrices are rejected when the
/// [`Unitary2`] is constructed, so this cannot fail.
pub fn apply_unitary(u: &Unitary2, s: &PhotonState) -> PhotonState {
    u.apply(s)
}

/// `H'` composed `j` times; `j = 0` is the identity.
pub fn hprime_power(j: u8) -> Result<Unitary2, QStateError> {
    if j > 3 {
        return Err(QStateError::PowerOutOfRange(j));
    }
    let h = Unitary2::hprime();
    Ok((0..j).fold(Unitary2::identity(), |acc, _| h.compose(&acc)))
}

/// The four Bell states. The discriminant is the two-bit announcement code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BellOutcome {
    #[serde(rename = "phi+")]
    PhiPlus = 0,
    #[serde(rename = "phi-")]
    PhiMinus = 1,
    #[serde(rename = "psi+")]
    PsiPlus = 2,
    #[serde(rename = "psi-")]
    PsiMinus = 3,
}

impl BellOutcome {
    pub const ALL: [BellOutcome; 4] = [
        BellOutcome::PhiPlus,
        BellOutcome::PhiMinus,
        BellOutcome::PsiPlus,
        BellOutcome::PsiMinus,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Coefficients over `|00>, |01>, |10>, |11>`.
    pub fn vector(self) -> [f64; 4] {
        let s = FRAC_1_SQRT_2;
        match self {
            BellOutcome::PhiPlus => [s, 0.0, 0.0, s],
            BellOutcome::PhiMinus => [s, 0.0, 0.0, -s],
            BellOutcome::PsiPlus => [0.0, s, s, 0.0],
            BellOutcome::PsiMinus => [0.0, s, -s, 0.0],
        }
    }

    pub fn state(self) -> PairState {
        let v = self.vector();
        PairState {
            amps: v.map(|x| Complex64::new(x, 0.0)),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BellOutcome::PhiPlus => "phi+",
            BellOutcome::PhiMinus => "phi-",
            BellOutcome::PsiPlus => "psi+",
            BellOutcome::PsiMinus => "psi-",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.label() == s)
    }
}

impl fmt::Display for BellOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BellOutcome::PhiPlus => "Φ⁺",
            BellOutcome::PhiMinus => "Φ⁻",
            BellOutcome::PsiPlus => "Ψ⁺",
            BellOutcome::PsiMinus => "Ψ⁻",
        };
        f.write_str(s)
    }
}

/// Two-photon register over `(|00>, |01>, |10>, |11>)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairState {
    amps: [Amplitude; 4],
}

impl PairState {
    pub fn new(amps: [Amplitude; 4]) -> Result<Self, QStateError> {
        check_normalized(&amps)?;
        Ok(Self { amps })
    }

    pub fn amps(&self) -> [Amplitude; 4] {
        self.amps
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.amps)
    }

    pub fn with_phase(&self, phase: Amplitude) -> Self {
        Self {
            amps: self.amps.map(|a| a * phase),
        }
    }

    pub fn approx_eq_up_to_phase(&self, other: &Self, tol: f64) -> bool {
        (overlap(&self.amps, &other.amps) - 1.0).abs() <= tol
    }

    /// `<bell|self>` for each Bell state.
    pub fn bell_amplitudes(&self) -> [Amplitude; 4] {
        BellOutcome::ALL.map(|o| {
            o.vector()
                .iter()
                .zip(self.amps.iter())
                .map(|(b, a)| a * *b)
                .sum()
        })
    }

    /// Applies `ua` to Alice's qubit and `ub` to Bob's.
    pub fn apply_local(&self, ua: &Unitary2, ub: &Unitary2) -> PairState {
        let (a, b) = (ua.entries(), ub.entries());
        let mut out = [ZERO; 4];
        for (i, slot) in out.iter_mut().enumerate() {
            let (ia, ib) = (i >> 1, i & 1);
            for j in 0..4 {
                let (ja, jb) = (j >> 1, j & 1);
                *slot += a[ia][ja] * b[ib][jb] * self.amps[j];
            }
        }
        PairState { amps: out }
    }
}

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &PhotonState, b: &PhotonState) -> PairState {
    let (x, y) = (a.amps, b.amps);
    PairState {
        amps: [x[0] * y[0], x[0] * y[1], x[1] * y[0], x[1] * y[1]],
    }
}

/// Outcome probabilities of a Bell-basis measurement, indexed by
/// [`BellOutcome::index`].
pub fn bell_probabilities(p: &PairState) -> [f64; 4] {
    p.bell_amplitudes().map(|a| a.norm_sqr())
}

/// Samples a Bell measurement and returns the outcome together with the
/// post-measurement Bell state.
pub fn bell_measure<R: Rng + ?Sized>(p: &PairState, rng: &mut R) -> (BellOutcome, PairState) {
    let probs = bell_probabilities(p);
    let k = BellOutcome::ALL[sample_index(&probs, rng)];
    (k, k.state())
}

/// Which half of a pair a channel carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Qubit {
    A,
    B,
}

/// A photon pair possibly entangled with a `probe_dim`-dimensional probe.
///
/// With `probe_dim == 1` this is just a [`PairState`]; the protocol simulator
/// uses it for every position so that an entangling adversary can be dropped
/// in without changing the message flow.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    probe_dim: usize,
    amps: Vec<Amplitude>,
}

impl JointState {
    pub fn new(probe_dim: usize, amps: Vec<Amplitude>) -> Result<Self, QStateError> {
        if probe_dim == 0 || amps.len() != 4 * probe_dim {
            return Err(QStateError::Dimension {
                expected: 4 * probe_dim.max(1),
                got: amps.len(),
            });
        }
        check_normalized(&amps)?;
        Ok(Self { probe_dim, amps })
    }

    /// Pair with the probe in `|0>` (nothing attached when `probe_dim == 1`).
    pub fn from_pair(pair: &PairState, probe_dim: usize) -> Self {
        let d = probe_dim.max(1);
        let mut amps = vec![ZERO; 4 * d];
        for (i, a) in pair.amps.iter().enumerate() {
            amps[i * d] = *a;
        }
        Self { probe_dim: d, amps }
    }

    pub fn product(a: &PhotonState, b: &PhotonState) -> Self {
        Self::from_pair(&tensor(a, b), 1)
    }

    pub fn probe_dim(&self) -> usize {
        self.probe_dim
    }

    pub fn amps(&self) -> &[Amplitude] {
        &self.amps
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.amps)
    }

    /// The pair state when no probe is attached.
    pub fn as_pair(&self) -> Option<PairState> {
        (self.probe_dim == 1).then(|| PairState {
            amps: [self.amps[0], self.amps[1], self.amps[2], self.amps[3]],
        })
    }

    /// Replaces the whole vector; used by adversaries applying joint unitaries.
    pub(crate) fn from_raw(probe_dim: usize, amps: Vec<Amplitude>) -> Self {
        debug_assert_eq!(amps.len(), 4 * probe_dim);
        Self { probe_dim, amps }
    }

    fn bit_of(q: Qubit, pair_index: usize) -> usize {
        match q {
            Qubit::A => pair_index >> 1,
            Qubit::B => pair_index & 1,
        }
    }

    #[allow(clippy::needless_range_loop)]
    pub fn apply_local(&mut self, q: Qubit, u: &Unitary2) {
        let m = u.entries();
        let d = self.probe_dim;
        let old = self.amps.clone();
        for (i, slot) in self.amps.iter_mut().enumerate() {
            let (pi, e) = (i / d, i % d);
            let row = Self::bit_of(q, pi);
            let mut acc = ZERO;
            for col in 0..2 {
                let src = match q {
                    Qubit::A => (col << 1) | (pi & 1),
                    Qubit::B => (pi & 2) | col,
                };
                acc += m[row][col] * old[src * d + e];
            }
            *slot = acc;
        }
    }

    /// Z-basis measurement of one qubit with renormalised collapse.
    pub fn measure_z<R: Rng + ?Sized>(&mut self, q: Qubit, rng: &mut R) -> u8 {
        let d = self.probe_dim;
        let mut p = [0.0; 2];
        for (i, a) in self.amps.iter().enumerate() {
            p[Self::bit_of(q, i / d)] += a.norm_sqr();
        }
        let bit = sample_index(&p, rng);
        let scale = 1.0 / p[bit].sqrt();
        for (i, a) in self.amps.iter_mut().enumerate() {
            if Self::bit_of(q, i / d) == bit {
                *a *= scale;
            } else {
                *a = ZERO;
            }
        }
        bit as u8
    }

    /// Projective measurement of one qubit onto the columns of `basis`;
    /// the qubit is left in the selected column.
    pub fn measure_in<R: Rng + ?Sized>(&mut self, q: Qubit, basis: &Unitary2, rng: &mut R) -> u8 {
        self.apply_local(q, &basis.adjoint());
        let bit = self.measure_z(q, rng);
        self.apply_local(q, basis);
        bit
    }

    /// Unnormalised probe vectors `(<bell| ⊗ I)|self>` for each Bell outcome.
    pub fn bell_components(&self) -> [Vec<Amplitude>; 4] {
        let d = self.probe_dim;
        BellOutcome::ALL.map(|o| {
            let v = o.vector();
            (0..d)
                .map(|e| (0..4).map(|i| self.amps[i * d + e] * v[i]).sum())
                .collect()
        })
    }

    pub fn bell_probabilities(&self) -> [f64; 4] {
        self.bell_components().map(|g| norm_sq(&g))
    }

    /// Bell measurement on the pair; the probe keeps its conditional state.
    #[allow(clippy::needless_range_loop)]
    pub fn bell_measure<R: Rng + ?Sized>(&mut self, rng: &mut R) -> BellOutcome {
        let comps = self.bell_components();
        let probs = comps.clone().map(|g| norm_sq(&g));
        let k = sample_index(&probs, rng);
        let outcome = BellOutcome::ALL[k];
        let scale = 1.0 / probs[k].sqrt();
        let v = outcome.vector();
        let d = self.probe_dim;
        for i in 0..4 {
            for e in 0..d {
                self.amps[i * d + e] = comps[k][e] * (v[i] * scale);
            }
        }
        outcome
    }

    /// Computational-basis measurement of the probe.
    pub fn measure_probe<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let d = self.probe_dim;
        let mut p = vec![0.0; d];
        for (i, a) in self.amps.iter().enumerate() {
            p[i % d] += a.norm_sqr();
        }
        let e = sample_index(&p, rng);
        let scale = 1.0 / p[e].sqrt();
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i % d == e {
                *a *= scale;
            } else {
                *a = ZERO;
            }
        }
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Amplitude {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn z_photon_basis() {
        assert_eq!(z_photon(0).unwrap().amps(), [ONE, ZERO]);
        assert_eq!(z_photon(1).unwrap().amps(), [ZERO, ONE]);
        assert!(z_photon(2).is_err());
        let plus = apply_unitary(&Unitary2::hadamard(), &z_photon(0).unwrap());
        assert!(plus.approx_eq(&PhotonState::plus(), STATE_TOL));
    }

    #[test]
    fn apply_unitary_examples() {
        let one = PhotonState::one();
        assert!(apply_unitary(&Unitary2::identity(), &one).approx_eq(&one, 0.0));
        let out = apply_unitary(&Unitary2::hprime(), &PhotonState::plus());
        assert!(out.approx_eq(&PhotonState::one(), STATE_TOL));
    }

    #[test]
    fn non_unitary_rejected() {
        let m = [[c(1.0), c(1.0)], [c(0.0), c(1.0)]];
        assert!(matches!(
            Unitary2::new(m),
            Err(QStateError::NotUnitary { .. })
        ));
        let nan = [[c(f64::NAN), c(0.0)], [c(0.0), c(1.0)]];
        assert_eq!(Unitary2::new(nan), Err(QStateError::NonFinite));
    }

    #[test]
    fn unnormalized_state_rejected() {
        assert!(PhotonState::new(c(1.0), c(1.0)).is_err());
        assert!(PairState::new([c(0.5); 4]).is_ok());
    }

    #[test]
    fn hprime_powers() {
        let zero = PhotonState::zero();
        let apply = |j| hprime_power(j).unwrap().apply(&zero);
        assert!(apply(0).approx_eq(&zero, 0.0));
        assert!(apply(1).approx_eq(&PhotonState::plus(), STATE_TOL));
        assert!(apply(2).approx_eq(&PhotonState::one(), STATE_TOL));
        // three rotations by pi/4 land on -|->
        assert!(apply(3).approx_eq(&PhotonState::minus().with_phase(c(-1.0)), STATE_TOL));
        assert_eq!(hprime_power(4), Err(QStateError::PowerOutOfRange(4)));
    }

    #[test]
    fn hprime_cycle() {
        let h = Unitary2::hprime();
        let pow = |k: usize| (0..k).fold(Unitary2::identity(), |acc, _| h.compose(&acc));
        assert!(pow(8).approx_eq(&Unitary2::identity(), STATE_TOL));
        let minus_i = Unitary2::new([[c(-1.0), ZERO], [ZERO, c(-1.0)]]).unwrap();
        assert!(pow(4).approx_eq(&minus_i, STATE_TOL));
    }

    #[test]
    fn hprime_transformation_chain() {
        let h = Unitary2::hprime();
        assert!(h
            .apply(&PhotonState::zero())
            .approx_eq(&PhotonState::plus(), STATE_TOL));
        assert!(h
            .apply(&PhotonState::plus())
            .approx_eq(&PhotonState::one(), STATE_TOL));
        assert!(h
            .apply(&PhotonState::minus())
            .approx_eq(&PhotonState::zero(), STATE_TOL));
        let img = h.apply(&PhotonState::one());
        assert!(img.approx_eq_up_to_phase(&PhotonState::minus(), STATE_TOL));
        assert!(!img.approx_eq(&PhotonState::minus(), 1e-3));
    }

    #[test]
    fn tensor_examples() {
        let z = PhotonState::zero();
        let o = PhotonState::one();
        assert_eq!(tensor(&z, &z).amps(), [ONE, ZERO, ZERO, ZERO]);
        assert_eq!(tensor(&o, &z).amps(), [ZERO, ZERO, ONE, ZERO]);
        let pm = tensor(&PhotonState::plus(), &PhotonState::minus()).amps();
        let want = [0.5, -0.5, 0.5, -0.5];
        for (a, w) in pm.iter().zip(want) {
            assert!((a - c(w)).norm() < STATE_TOL);
        }
    }

    fn assert_probs(got: [f64; 4], want: [f64; 4]) {
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < PROB_TOL, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn bell_probability_examples() {
        let z = PhotonState::zero();
        assert_probs(bell_probabilities(&tensor(&z, &z)), [0.5, 0.5, 0.0, 0.0]);
        assert_probs(
            bell_probabilities(&BellOutcome::PhiMinus.state()),
            [0.0, 1.0, 0.0, 0.0],
        );
        let pm = tensor(&PhotonState::plus(), &PhotonState::minus());
        assert_probs(bell_probabilities(&pm), [0.0, 0.5, 0.0, 0.5]);
    }

    #[test]
    fn bell_measure_eigenstate_and_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (o, post) = bell_measure(&BellOutcome::PhiPlus.state(), &mut rng);
            assert_eq!(o, BellOutcome::PhiPlus);
            assert!(post.approx_eq_up_to_phase(&BellOutcome::PhiPlus.state(), STATE_TOL));
        }
        let zo = tensor(&PhotonState::zero(), &PhotonState::one());
        for _ in 0..1000 {
            let (o, post) = bell_measure(&zo, &mut rng);
            assert!(matches!(o, BellOutcome::PsiPlus | BellOutcome::PsiMinus));
            assert!((bell_probabilities(&post)[o.index()] - 1.0).abs() < PROB_TOL);
        }
    }

    #[test]
    fn joint_state_matches_pair_operations() {
        let pair = tensor(&PhotonState::plus(), &PhotonState::one());
        let mut joint = JointState::from_pair(&pair, 3);
        let h = Unitary2::hadamard();
        let hp = Unitary2::hprime();
        joint.apply_local(Qubit::A, &h);
        joint.apply_local(Qubit::B, &hp);
        let expect = pair.apply_local(&h, &hp);
        let comps = joint.bell_components();
        for (k, a) in expect.bell_amplitudes().iter().enumerate() {
            assert!((comps[k][0] - a).norm() < STATE_TOL);
            assert!(comps[k][1].norm() < STATE_TOL && comps[k][2].norm() < STATE_TOL);
        }
    }

    #[test]
    fn joint_bell_measure_collapses() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut joint = JointState::product(&PhotonState::zero(), &PhotonState::one());
        let o = joint.bell_measure(&mut rng);
        assert!(matches!(o, BellOutcome::PsiPlus | BellOutcome::PsiMinus));
        assert!((joint.bell_probabilities()[o.index()] - 1.0).abs() < STATE_TOL);
    }

    #[test]
    fn measure_in_rotated_basis_collapses_to_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let basis = Unitary2::rotation(0.3);
        for _ in 0..50 {
            let (bit, post) = PhotonState::plus().measure_in(&basis, &mut rng);
            assert!(post.approx_eq(&basis.column(bit as usize), STATE_TOL));
        }
    }
}
