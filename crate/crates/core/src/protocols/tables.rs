//! Exhaustive checks of the three encoding tables against the simulator.

use std::fmt;

use serde::Serialize;

use super::{key_unitary, p1_decode_m, p2_key_bit, p3_decode_m, p3_unitary, Role};
use crate::qstate::{bell_probabilities, tensor, z_photon, BellOutcome, PhotonState, STATE_TOL};

const PROB_EXACT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TableId {
    #[serde(rename = "table1")]
    T1,
    #[serde(rename = "table2")]
    T2,
    #[serde(rename = "table3")]
    T3,
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TableId::T1 => "table1",
            TableId::T2 => "table2",
            TableId::T3 => "table3",
        })
    }
}

/// Decoding maps under test. [`Decoders::default`] is the stock set.
#[derive(Clone, Copy)]
pub struct Decoders {
    pub p1: fn(u8, BellOutcome) -> u8,
    pub p3: fn(u8, BellOutcome) -> u8,
    /// Bob's key bit from his Z result and `k1`.
    pub p2_bob: fn(u8, u8) -> u8,
}

impl Default for Decoders {
    fn default() -> Self {
        Self {
            p1: p1_decode_m,
            p3: p3_decode_m,
            p2_bob: |r, k| p2_key_bit(r, k, Role::Bob),
        }
    }
}

impl fmt::Debug for Decoders {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Decoders")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub table: TableId,
    pub k1: u8,
    /// Human-readable inputs, e.g. `r=0,1` or `branch=1`.
    pub inputs: String,
    /// Prepared (or measured) two-photon state label.
    pub state: String,
    pub expected_support: Vec<String>,
    pub observed_support: Vec<String>,
    pub expected_bit: u8,
    pub decoded_bits: Vec<u8>,
    pub ok: bool,
    pub detail: Option<String>,
}

impl fmt::Display for TableRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} k1={} {} {:<10} support={{{}}} bit={} decoded={:?} {}",
            self.table,
            self.k1,
            self.inputs,
            self.state,
            self.observed_support.join(","),
            self.expected_bit,
            self.decoded_bits,
            if self.ok { "ok" } else { "MISMATCH" }
        )?;
        if let Some(d) = &self.detail {
            write!(f, " ({d})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TableReport {
    pub rows: Vec<TableRow>,
}

impl TableReport {
    pub fn count(&self, table: TableId) -> usize {
        self.rows.iter().filter(|r| r.table == table).count()
    }

    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.ok)
    }

    pub fn mismatches(&self) -> impl Iterator<Item = &TableRow> {
        self.rows.iter().filter(|r| !r.ok)
    }
}

impl fmt::Display for TableReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.rows {
            writeln!(f, "{row}")?;
        }
        write!(
            f,
            "verified {}+{}+{} rows: {}",
            self.count(TableId::T1),
            self.count(TableId::T2),
            self.count(TableId::T3),
            if self.all_ok() {
                "all match"
            } else {
                "MISMATCH"
            }
        )
    }
}

fn photon_label(s: &PhotonState) -> &'static str {
    let named = [
        ("|0>", PhotonState::zero()),
        ("|1>", PhotonState::one()),
        ("|+>", PhotonState::plus()),
        ("|->", PhotonState::minus()),
    ];
    named
        .iter()
        .find(|(_, p)| s.approx_eq_up_to_phase(p, STATE_TOL))
        .map_or("?", |(l, _)| l)
}

/// Support sets as printed in Tables 1 and 3, keyed by `k1` and the XOR of
/// the two encoded bits.
fn listed_bell_support(k1: u8, parity: u8) -> [BellOutcome; 2] {
    use BellOutcome::*;
    match (k1, parity) {
        (0, 0) => [PhiPlus, PhiMinus],
        (0, _) => [PsiPlus, PsiMinus],
        (_, 0) => [PhiPlus, PsiPlus],
        (_, _) => [PhiMinus, PsiMinus],
    }
}

fn labels(outcomes: &[BellOutcome]) -> Vec<String> {
    outcomes.iter().map(|o| o.label().to_string()).collect()
}

#[allow(clippy::too_many_arguments)]
fn bell_row(
    table: TableId,
    k1: u8,
    a: u8,
    b: u8,
    qa: PhotonState,
    qb: PhotonState,
    listed_states: (&str, &str),
    decode: fn(u8, BellOutcome) -> u8,
    only: Option<BellOutcome>,
) -> TableRow {
    let probs = bell_probabilities(&tensor(&qa, &qb));
    let support: Vec<BellOutcome> = BellOutcome::ALL
        .into_iter()
        .filter(|o| probs[o.index()] > PROB_EXACT)
        .collect();
    let listed = listed_bell_support(k1, a ^ b);
    let expected_bit = a ^ b;
    let checked: Vec<BellOutcome> = match only {
        Some(o) => vec![o],
        None => listed.to_vec(),
    };
    let decoded: Vec<u8> = checked.iter().map(|&o| decode(k1, o)).collect();
    let state = format!("{}{}", photon_label(&qa), photon_label(&qb));
    let mut problems = Vec::new();
    if (photon_label(&qa), photon_label(&qb)) != listed_states {
        problems.push(format!(
            "state {state} != {}{}",
            listed_states.0, listed_states.1
        ));
    }
    if support.len() != 2 || !listed.iter().all(|o| support.contains(o)) {
        problems.push("support set differs".to_string());
    }
    for o in &checked {
        if (probs[o.index()] - 0.5).abs() > PROB_EXACT {
            problems.push(format!("P({}) = {}", o.label(), probs[o.index()]));
        }
    }
    if decoded.iter().any(|&d| d != expected_bit) {
        problems.push("decoded bit differs".to_string());
    }
    let inputs = match only {
        Some(o) => format!("r={a},{b} outcome={}", o.label()),
        None => format!("r={a},{b}"),
    };
    TableRow {
        table,
        k1,
        inputs,
        state,
        expected_support: labels(&listed),
        observed_support: labels(&support),
        expected_bit,
        decoded_bits: decoded,
        ok: problems.is_empty(),
        detail: (!problems.is_empty()).then(|| problems.join("; ")),
    }
}

const Z_LABELS: [&str; 2] = ["|0>", "|1>"];
const X_LABELS: [&str; 2] = ["|+>", "|->"];

fn table1(decoders: &Decoders, rows: &mut Vec<TableRow>) {
    for k1 in 0..2u8 {
        let names = if k1 == 0 { Z_LABELS } else { X_LABELS };
        for a in 0..2u8 {
            for b in 0..2u8 {
                let u = key_unitary(k1);
                let qa = u.apply(&z_photon(a).expect("bit"));
                let qb = u.apply(&z_photon(b).expect("bit"));
                let listed = (names[a as usize], names[b as usize]);
                rows.push(bell_row(
                    TableId::T1,
                    k1,
                    a,
                    b,
                    qa,
                    qb,
                    listed,
                    decoders.p1,
                    None,
                ));
            }
        }
    }
}

fn table3(decoders: &Decoders, rows: &mut Vec<TableRow>) {
    for k1 in 0..2u8 {
        let names = if k1 == 0 { Z_LABELS } else { X_LABELS };
        for a in 0..2u8 {
            for b in 0..2u8 {
                let zero = PhotonState::zero();
                let qa = p3_unitary(k1, a).apply(&zero);
                let qb = p3_unitary(k1, b).apply(&zero);
                let listed = (names[a as usize], names[b as usize]);
                for outcome in listed_bell_support(k1, a ^ b) {
                    rows.push(bell_row(
                        TableId::T3,
                        k1,
                        a,
                        b,
                        qa,
                        qb,
                        listed,
                        decoders.p3,
                        Some(outcome),
                    ));
                }
            }
        }
    }
}

fn table2(decoders: &Decoders, rows: &mut Vec<TableRow>) {
    let source = BellOutcome::PhiMinus.state();
    for k1 in 0..2u8 {
        let u = key_unitary(k1);
        let after = source.apply_local(&u, &u).amps();
        let probs: Vec<f64> = after.iter().map(|a| a.norm_sqr()).collect();
        let support: Vec<String> = (0..4)
            .filter(|&i| probs[i] > PROB_EXACT)
            .map(|i| format!("{}{}", i >> 1, i & 1))
            .collect();
        for branch in 0..2u8 {
            // listed results: k1 = 0 gives equal bits, k1 = 1 opposite bits
            let r_a = branch;
            let r_b = branch ^ k1;
            let idx = (2 * r_a + r_b) as usize;
            let bob_r = (decoders.p2_bob)(r_b, k1);
            let mut problems = Vec::new();
            if (probs[idx] - 0.5).abs() > PROB_EXACT {
                problems.push(format!("P({r_a}{r_b}) = {}", probs[idx]));
            }
            let listed = if k1 == 0 { ["00", "11"] } else { ["01", "10"] };
            if support != listed {
                problems.push("support set differs".to_string());
            }
            if bob_r != r_a {
                problems.push(format!("Bob derives R={bob_r}, Alice R={r_a}"));
            }
            rows.push(TableRow {
                table: TableId::T2,
                k1,
                inputs: format!("branch={branch}"),
                state: format!("{}{}", Z_LABELS[r_a as usize], Z_LABELS[r_b as usize]),
                expected_support: if k1 == 0 { ["00", "11"] } else { ["01", "10"] }
                    .map(String::from)
                    .to_vec(),
                observed_support: support.clone(),
                expected_bit: r_a,
                decoded_bits: vec![r_a, bob_r],
                ok: problems.is_empty(),
                detail: (!problems.is_empty()).then(|| problems.join("; ")),
            });
        }
    }
}

/// Checks all rows of the three tables with the stock decoders.
pub fn verify_tables() -> TableReport {
    verify_tables_with(&Decoders::default())
}

pub fn verify_tables_with(decoders: &Decoders) -> TableReport {
    let mut rows = Vec::new();
    table1(decoders, &mut rows);
    table2(decoders, &mut rows);
    table3(decoders, &mut rows);
    TableReport { rows }
}
