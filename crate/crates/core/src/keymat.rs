//! Classical key material: bit strings, Toeplitz universal hashing, privacy
//! amplification and the master-key store.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::Protocol;

/// Width of the length prefix used by [`universal_hash_framed`].
pub const FRAME_PREFIX_BITS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("hash input of {len} bits exceeds capacity {capacity}")]
    Oversized { len: usize, capacity: usize },
    #[error("Toeplitz seed has {got} bits, expected {expected}")]
    SeedLength { expected: usize, got: usize },
    #[error("hash output length must be at least 1")]
    EmptyOutput,
    #[error("requested {requested} output bits from a {available}-bit raw key")]
    OutputTooLong { requested: usize, available: usize },
    #[error("backup depleted for {key}: need {needed} bits, {available} left")]
    BackupDepleted {
        key: KeyId,
        needed: usize,
        available: usize,
    },
    #[error("cannot discard {discard} bits from a {len}-bit key")]
    DiscardTooLarge { discard: usize, len: usize },
    #[error("key store has no {0}")]
    MissingKey(KeyId),
    #[error("invalid bit character {0:?}")]
    BadBit(char),
    #[error("key file: {0}")]
    Format(String),
    #[error("key file I/O: {0}")]
    Io(String),
}

/// Ordered bit sequence, index 0 first. Serialised as a `"0101…"` string.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitString {
    bits: Vec<bool>,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            bits: vec![false; len],
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Self {
            bits: (0..len).map(|_| rng.gen::<bool>()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Bit `i` as 0/1. Panics when out of range.
    pub fn bit(&self, i: usize) -> u8 {
        self.bits[i] as u8
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.bits[i] = value;
    }

    pub fn flip(&mut self, i: usize) {
        self.bits[i] = !self.bits[i];
    }

    pub fn push(&mut self, value: bool) {
        self.bits.push(value);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().copied()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Bitwise XOR. Panics on length mismatch.
    pub fn xor(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len(), "xor of unequal-length bit strings");
        Self {
            bits: self.iter().zip(other.iter()).map(|(a, b)| a ^ b).collect(),
        }
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut bits = self.bits.clone();
        bits.extend_from_slice(&other.bits);
        Self { bits }
    }

    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            bits: self.bits[start..end].to_vec(),
        }
    }

    pub fn hamming_distance(&self, other: &Self) -> usize {
        assert_eq!(self.len(), other.len());
        self.iter()
            .zip(other.iter())
            .filter(|(a, b)| a != b)
            .count()
    }

    /// Packs MSB-first into bytes, zero-padding the last byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.bits
            .chunks(8)
            .map(|chunk| {
                chunk
                    .iter()
                    .enumerate()
                    .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i)))
            })
            .collect()
    }

    /// Inverse of [`to_bytes`](Self::to_bytes); padding bits must be zero.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self, KeyError> {
        if bytes.len() != len.div_ceil(8) {
            return Err(KeyError::Format(format!(
                "{} bytes cannot hold exactly {len} bits",
                bytes.len()
            )));
        }
        let bits: Vec<bool> = (0..bytes.len() * 8)
            .map(|i| (bytes[i / 8] >> (7 - i % 8)) & 1 == 1)
            .collect();
        if bits[len..].iter().any(|&b| b) {
            return Err(KeyError::Format("non-zero padding bits".into()));
        }
        Ok(Self {
            bits: bits[..len].to_vec(),
        })
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    pub fn from_hex(s: &str, len: usize) -> Result<Self, KeyError> {
        let bytes = hex::decode(s.trim()).map_err(|e| KeyError::Format(e.to_string()))?;
        Self::from_bytes(&bytes, len)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

impl FromStr for BitString {
    type Err = KeyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(KeyError::BadBit(other)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Self::from_bits)
    }
}

impl FromIterator<bool> for BitString {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self {
            bits: iter.into_iter().collect(),
        }
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Toeplitz-matrix hash over GF(2): `out_len x input_capacity` matrix whose
/// entry `(i, j)` is `seed[i + input_capacity - 1 - j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashSpec {
    seed: BitString,
    input_capacity: usize,
    out_len: usize,
}

impl HashSpec {
    pub fn new(seed: BitString, input_capacity: usize, out_len: usize) -> Result<Self, KeyError> {
        if out_len == 0 {
            return Err(KeyError::EmptyOutput);
        }
        let expected = input_capacity + out_len - 1;
        if seed.len() != expected {
            return Err(KeyError::SeedLength {
                expected,
                got: seed.len(),
            });
        }
        Ok(Self {
            seed,
            input_capacity,
            out_len,
        })
    }

    /// Draws a uniformly random public seed.
    pub fn random<R: Rng + ?Sized>(
        input_capacity: usize,
        out_len: usize,
        rng: &mut R,
    ) -> Result<Self, KeyError> {
        if out_len == 0 {
            return Err(KeyError::EmptyOutput);
        }
        let seed = BitString::random(input_capacity + out_len - 1, rng);
        Self::new(seed, input_capacity, out_len)
    }

    /// Spec sized for [`universal_hash_framed`] payloads of up to `max_payload` bits.
    pub fn random_framed<R: Rng + ?Sized>(
        max_payload: usize,
        out_len: usize,
        rng: &mut R,
    ) -> Result<Self, KeyError> {
        Self::random(max_payload + FRAME_PREFIX_BITS, out_len, rng)
    }

    pub fn seed(&self) -> &BitString {
        &self.seed
    }

    pub fn input_capacity(&self) -> usize {
        self.input_capacity
    }

    pub fn out_len(&self) -> usize {
        self.out_len
    }

    fn entry(&self, i: usize, j: usize) -> bool {
        self.seed.get(i + self.input_capacity - 1 - j)
    }
}

/// Toeplitz hash of `input`, zero-padded to the spec's capacity. GF(2)-linear
/// in the input: `h(a ^ b) = h(a) ^ h(b)` for equal-length `a`, `b`.
pub fn universal_hash(spec: &HashSpec, input: &BitString) -> Result<BitString, KeyError> {
    if input.len() > spec.input_capacity {
        return Err(KeyError::Oversized {
            len: input.len(),
            capacity: spec.input_capacity,
        });
    }
    let ones: Vec<usize> = input
        .iter()
        .enumerate()
        .filter_map(|(j, b)| b.then_some(j))
        .collect();
    Ok((0..spec.out_len)
        .map(|i| ones.iter().fold(false, |acc, &j| acc ^ spec.entry(i, j)))
        .collect())
}

/// Hash of a variable-length input: a 32-bit big-endian length prefix is
/// prepended before hashing, so inputs of different lengths never share an
/// encoding. The empty string hashes the all-zero frame.
pub fn universal_hash_framed(spec: &HashSpec, input: &BitString) -> Result<BitString, KeyError> {
    let payload_cap = spec.input_capacity.saturating_sub(FRAME_PREFIX_BITS);
    if input.len() > payload_cap {
        return Err(KeyError::Oversized {
            len: input.len(),
            capacity: payload_cap,
        });
    }
    let len = input.len() as u32;
    let prefix: BitString = (0..FRAME_PREFIX_BITS)
        .map(|i| (len >> (FRAME_PREFIX_BITS - 1 - i)) & 1 == 1)
        .collect();
    universal_hash(spec, &prefix.concat(input))
}

/// Final shared key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionKey {
    pub bits: BitString,
}

/// Compresses `raw` to `out_len` bits with the Toeplitz matrix defined by
/// `seed`, which must have `raw.len() + out_len - 1` bits.
pub fn privacy_amplify(
    raw: &BitString,
    out_len: usize,
    seed: &BitString,
) -> Result<SessionKey, KeyError> {
    if out_len > raw.len() {
        return Err(KeyError::OutputTooLong {
            requested: out_len,
            available: raw.len(),
        });
    }
    let spec = HashSpec::new(seed.clone(), raw.len(), out_len)?;
    Ok(SessionKey {
        bits: universal_hash(&spec, raw)?,
    })
}

/// Seed length required by [`privacy_amplify`].
pub fn amplification_seed_len(raw_len: usize, out_len: usize) -> usize {
    raw_len + out_len - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KeyId {
    K1,
    K2,
}

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KeyId::K1 => "K1",
            KeyId::K2 => "K2",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct KeySlot {
    key: BitString,
    backup: BitString,
    cursor: usize,
}

impl KeySlot {
    fn replenish(&mut self, id: KeyId, discard: usize) -> Result<(), KeyError> {
        if discard > self.key.len() {
            return Err(KeyError::DiscardTooLarge {
                discard,
                len: self.key.len(),
            });
        }
        let available = self.backup.len() - self.cursor;
        if discard > available {
            return Err(KeyError::BackupDepleted {
                key: id,
                needed: discard,
                available,
            });
        }
        let fresh = self.backup.slice(self.cursor, self.cursor + discard);
        self.key = self.key.slice(discard, self.key.len()).concat(&fresh);
        self.cursor += discard;
        Ok(())
    }
}

/// Pre-shared master keys with their backups.
///
/// Replenishing drops a prefix of the key, shifts the rest down and appends
/// the same number of unused backup bits. Backup bits are consumed strictly in
/// order and never reused.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MasterKeyStore {
    k1: KeySlot,
    k2: Option<KeySlot>,
}

impl MasterKeyStore {
    pub fn new(k1: BitString, backup1: BitString) -> Self {
        Self {
            k1: KeySlot {
                key: k1,
                backup: backup1,
                cursor: 0,
            },
            k2: None,
        }
    }

    pub fn with_k2(mut self, k2: BitString, backup2: BitString) -> Self {
        self.k2 = Some(KeySlot {
            key: k2,
            backup: backup2,
            cursor: 0,
        });
        self
    }

    /// Uniformly random keys sized for `protocol`, with `l`-bit backups.
    pub fn generate<R: Rng + ?Sized>(
        protocol: Protocol,
        n: usize,
        m: usize,
        l: usize,
        rng: &mut R,
    ) -> Self {
        let k1 = BitString::random(protocol.k1_len(n, m), rng);
        let b1 = BitString::random(l, rng);
        let store = Self::new(k1, b1);
        if protocol.uses_k2() {
            let k2 = BitString::random(n, rng);
            let b2 = BitString::random(l, rng);
            store.with_k2(k2, b2)
        } else {
            store
        }
    }

    fn slot(&self, id: KeyId) -> Result<&KeySlot, KeyError> {
        match id {
            KeyId::K1 => Ok(&self.k1),
            KeyId::K2 => self.k2.as_ref().ok_or(KeyError::MissingKey(KeyId::K2)),
        }
    }

    fn slot_mut(&mut self, id: KeyId) -> Result<&mut KeySlot, KeyError> {
        match id {
            KeyId::K1 => Ok(&mut self.k1),
            KeyId::K2 => self.k2.as_mut().ok_or(KeyError::MissingKey(KeyId::K2)),
        }
    }

    pub fn key(&self, id: KeyId) -> Result<&BitString, KeyError> {
        self.slot(id).map(|s| &s.key)
    }

    pub fn k1(&self) -> &BitString {
        &self.k1.key
    }

    pub fn k2(&self) -> Option<&BitString> {
        self.k2.as_ref().map(|s| &s.key)
    }

    pub fn backup(&self, id: KeyId) -> Result<&BitString, KeyError> {
        self.slot(id).map(|s| &s.backup)
    }

    pub fn cursor(&self, id: KeyId) -> Result<usize, KeyError> {
        self.slot(id).map(|s| s.cursor)
    }

    pub fn backup_remaining(&self, id: KeyId) -> Result<usize, KeyError> {
        self.slot(id).map(|s| s.backup.len() - s.cursor)
    }

    /// Checks key lengths against what `protocol` needs.
    pub fn validate_for(&self, protocol: Protocol, n: usize, m: usize) -> Result<(), KeyError> {
        let want = protocol.k1_len(n, m);
        if self.k1.key.len() != want {
            return Err(KeyError::Format(format!(
                "{protocol} needs a {want}-bit K1, store holds {}",
                self.k1.key.len()
            )));
        }
        match (&self.k2, protocol.uses_k2()) {
            (Some(k2), true) if k2.key.len() != n => Err(KeyError::Format(format!(
                "{protocol} needs a {n}-bit K2, store holds {}",
                k2.key.len()
            ))),
            (None, true) => Err(KeyError::MissingKey(KeyId::K2)),
            (Some(_), false) => Err(KeyError::Format(format!("{protocol} does not use K2"))),
            _ => Ok(()),
        }
    }

    /// Drops the first `discard_count` bits of the key and tops it up from the
    /// backup. On error the store is left unchanged.
    pub fn replenish(&mut self, id: KeyId, discard_count: usize) -> Result<(), KeyError> {
        self.slot_mut(id)?.replenish(id, discard_count)
    }
}

/// Free-function form of [`MasterKeyStore::replenish`].
pub fn replenish(
    store: &mut MasterKeyStore,
    key_id: KeyId,
    discard_count: usize,
) -> Result<(), KeyError> {
    store.replenish(key_id, discard_count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyEncoding {
    Hex,
    Binary,
}

/// First line of a key file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyFileHeader {
    pub protocol: Protocol,
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub encoding: KeyEncoding,
}

const KEY_FILE_MAGIC: &str = "LAQKD-KEYS/1";

impl KeyFileHeader {
    fn line(&self) -> String {
        let enc = match self.encoding {
            KeyEncoding::Hex => "hex",
            KeyEncoding::Binary => "bin",
        };
        format!(
            "{KEY_FILE_MAGIC} protocol={} n={} m={} l={} encoding={enc}",
            self.protocol, self.n, self.m, self.l
        )
    }

    fn parse(line: &str) -> Result<Self, KeyError> {
        let mut parts = line.split_whitespace();
        if parts.next() != Some(KEY_FILE_MAGIC) {
            return Err(KeyError::Format(format!(
                "missing `{KEY_FILE_MAGIC}` magic"
            )));
        }
        let (mut protocol, mut n, mut m, mut l, mut encoding) = (None, None, None, None, None);
        for part in parts {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| KeyError::Format(format!("bad header field `{part}`")))?;
            let num = || {
                v.parse::<usize>()
                    .map_err(|_| KeyError::Format(format!("bad number in `{part}`")))
            };
            match k {
                "protocol" => protocol = Some(v.parse::<Protocol>().map_err(KeyError::Format)?),
                "n" => n = Some(num()?),
                "m" => m = Some(num()?),
                "l" => l = Some(num()?),
                "encoding" => {
                    encoding = Some(match v {
                        "hex" => KeyEncoding::Hex,
                        "bin" => KeyEncoding::Binary,
                        _ => return Err(KeyError::Format(format!("unknown encoding `{v}`"))),
                    })
                }
                _ => return Err(KeyError::Format(format!("unknown header field `{k}`"))),
            }
        }
        let missing = |f: &str| KeyError::Format(format!("header lacks `{f}`"));
        Ok(Self {
            protocol: protocol.ok_or_else(|| missing("protocol"))?,
            n: n.ok_or_else(|| missing("n"))?,
            m: m.ok_or_else(|| missing("m"))?,
            l: l.ok_or_else(|| missing("l"))?,
            encoding: encoding.unwrap_or(KeyEncoding::Hex),
        })
    }

    /// `(name, bit length)` of each key in file order.
    fn layout(&self) -> Vec<(&'static str, usize)> {
        let mut v = vec![
            ("k1", self.protocol.k1_len(self.n, self.m)),
            ("backup1", self.l),
        ];
        if self.protocol.uses_k2() {
            v.push(("k2", self.n));
            v.push(("backup2", self.l));
        }
        v
    }
}

/// Writes a freshly initialised store (cursors at zero) as a key file.
pub fn write_key_file<W: Write>(
    store: &MasterKeyStore,
    header: &KeyFileHeader,
    mut out: W,
) -> Result<(), KeyError> {
    let io = |e: std::io::Error| KeyError::Io(e.to_string());
    store.validate_for(header.protocol, header.n, header.m)?;
    let mut keys = vec![&store.k1.key, &store.k1.backup];
    if let Some(k2) = &store.k2 {
        keys.push(&k2.key);
        keys.push(&k2.backup);
    }
    for ((name, len), key) in header.layout().into_iter().zip(&keys) {
        if key.len() != len {
            return Err(KeyError::Format(format!(
                "{name} has {} bits, header says {len}",
                key.len()
            )));
        }
    }
    writeln!(out, "{}", header.line()).map_err(io)?;
    match header.encoding {
        KeyEncoding::Hex => {
            for ((name, _), key) in header.layout().into_iter().zip(keys) {
                writeln!(out, "{name}={}", key.to_hex()).map_err(io)?;
            }
        }
        KeyEncoding::Binary => {
            for key in keys {
                out.write_all(&key.to_bytes()).map_err(io)?;
            }
        }
    }
    Ok(())
}

/// Reads a key file, validating every length against the header's protocol.
pub fn read_key_file<R: BufRead>(
    mut input: R,
) -> Result<(KeyFileHeader, MasterKeyStore), KeyError> {
    let io = |e: std::io::Error| KeyError::Io(e.to_string());
    let mut first = String::new();
    input.read_line(&mut first).map_err(io)?;
    let header = KeyFileHeader::parse(first.trim_end())?;
    let mut keys = Vec::new();
    match header.encoding {
        KeyEncoding::Hex => {
            let mut lines = Vec::new();
            for line in input.lines() {
                let line = line.map_err(io)?;
                if !line.trim().is_empty() {
                    lines.push(line);
                }
            }
            let layout = header.layout();
            if lines.len() != layout.len() {
                return Err(KeyError::Format(format!(
                    "expected {} key lines, found {}",
                    layout.len(),
                    lines.len()
                )));
            }
            for ((name, len), line) in layout.into_iter().zip(&lines) {
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| KeyError::Format(format!("bad key line `{line}`")))?;
                if k.trim() != name {
                    return Err(KeyError::Format(format!("expected `{name}`, found `{k}`")));
                }
                keys.push(BitString::from_hex(v, len)?);
            }
        }
        KeyEncoding::Binary => {
            let mut bytes = Vec::new();
            input.read_to_end(&mut bytes).map_err(io)?;
            let mut at = 0;
            for (name, len) in header.layout() {
                let nbytes = len.div_ceil(8);
                let chunk = bytes
                    .get(at..at + nbytes)
                    .ok_or_else(|| KeyError::Format(format!("file truncated inside `{name}`")))?;
                keys.push(BitString::from_bytes(chunk, len)?);
                at += nbytes;
            }
            if at != bytes.len() {
                return Err(KeyError::Format(format!(
                    "{} trailing bytes after last key",
                    bytes.len() - at
                )));
            }
        }
    }
    let mut keys = keys.into_iter();
    let mut store = MasterKeyStore::new(keys.next().unwrap(), keys.next().unwrap());
    if let (Some(k2), Some(b2)) = (keys.next(), keys.next()) {
        store = store.with_k2(k2, b2);
    }
    store.validate_for(header.protocol, header.n, header.m)?;
    Ok((header, store))
}
