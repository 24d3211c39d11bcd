//! Partially homomorphic encryption with one multiplication level.
//!
//! Two backends implement [`HomomorphicScheme`]:
//!
//! * [`bgn::Bgn`]: Boneh–Goh–Nissim over a composite-order supersingular curve.
//!   Level-1 ciphertexts are curve points, level-2 ciphertexts live in the
//!   pairing target group.
//! * [`transparent::Transparent`]: stores plaintexts in the clear and performs
//!   the same arithmetic directly, with the same level and range rules. Used to
//!   check services against exact arithmetic quickly.
//!
//! Plaintexts are signed integers with `|m| ≤ T`; negative values live at
//! `N − |m|` in the real backend and decode as negative.
//!
//! Wire format of every ciphertext: one level byte (`1` or `2`) followed by
//! the fixed-length element encoding of the backend.

pub mod bgn;
pub mod transparent;

use std::fmt;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::Counter;

/// Default plaintext bound.
pub const DEFAULT_BOUND: u64 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    One = 1,
    Two = 2,
}

impl Level {
    pub fn from_byte(b: u8) -> Option<Level> {
        match b {
            1 => Some(Level::One),
            2 => Some(Level::Two),
            _ => None,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", *self as u8)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PheError {
    #[error("plaintext {value} outside [-{bound}, {bound}]")]
    PlaintextOutOfRange { value: i128, bound: u64 },
    #[error("decrypted value outside [-{bound}, {bound}] (fan-in overflow?)")]
    DecryptOutOfRange { bound: u64 },
    #[error("level mismatch: {left} vs {right}")]
    LevelMismatch { left: Level, right: Level },
    #[error("cannot multiply a level-2 ciphertext")]
    LevelOverflow,
    #[error("invalid ciphertext encoding: {0}")]
    InvalidEncoding(&'static str),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("parameter generation failed after {0} attempts")]
    KeygenFailed(usize),
}

pub trait PheCiphertext: Clone + fmt::Debug + PartialEq + Send + Sync {
    fn level(&self) -> Level;
    /// Level byte followed by the element encoding.
    fn to_bytes(&self) -> Vec<u8>;
}

/// One-level homomorphic encryption over signed integers bounded by `T`.
///
/// `fingerprint(sk, c)` and `tag_for(sk, level, m)` give a blinding-free
/// canonical image of a ciphertext: two ciphertexts of the same level have equal
/// fingerprints exactly when their plaintexts agree. The key holder uses it to
/// answer "is this the plaintext I already decrypted" without a discrete log.
pub trait HomomorphicScheme: Send + Sync {
    type Ciphertext: PheCiphertext;
    type SecretKey: Send + Sync;

    const NAME: &'static str;

    fn bound(&self) -> u64;

    /// Public parameters as published on the bulletin board.
    fn public_params(&self) -> serde_json::Value;

    fn encrypt<R: RngCore + ?Sized>(&self, m: i64, rng: &mut R) -> Result<Self::Ciphertext, PheError>;

    /// Deterministic level-1 encryption of 1 (no blinding), used for padding
    /// and for lifting.
    fn one(&self) -> Self::Ciphertext;

    fn add(&self, a: &Self::Ciphertext, b: &Self::Ciphertext) -> Result<Self::Ciphertext, PheError>;

    fn mul(&self, a: &Self::Ciphertext, b: &Self::Ciphertext) -> Result<Self::Ciphertext, PheError>;

    /// `E(m)^k = E(k·m)` at the ciphertext's own level.
    fn scale(&self, a: &Self::Ciphertext, k: i64) -> Self::Ciphertext;

    fn decode(&self, bytes: &[u8]) -> Result<Self::Ciphertext, PheError>;

    fn decrypt(&self, sk: &Self::SecretKey, c: &Self::Ciphertext) -> Result<i64, PheError>;

    fn fingerprint(&self, sk: &Self::SecretKey, c: &Self::Ciphertext) -> Vec<u8>;

    fn tag_for(&self, sk: &Self::SecretKey, level: Level, m: i64) -> Vec<u8>;

    /// Level 1 → level 2 by multiplying with [`HomomorphicScheme::one`].
    fn lift(&self, a: &Self::Ciphertext) -> Result<Self::Ciphertext, PheError> {
        self.mul(a, &self.one())
    }

    fn check_plaintext(&self, m: i64) -> Result<(), PheError> {
        if m.unsigned_abs() > self.bound() {
            return Err(PheError::PlaintextOutOfRange { value: m as i128, bound: self.bound() });
        }
        Ok(())
    }
}

/// Per-operation counters for homomorphic evaluation.
#[derive(Debug, Default)]
pub struct OpCounters {
    pub encrypt: Counter,
    pub add: Counter,
    pub mul: Counter,
    pub scale: Counter,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub encrypt: u64,
    pub add: u64,
    pub mul: u64,
    pub scale: u64,
}

impl std::ops::Sub for OpCounts {
    type Output = OpCounts;
    fn sub(self, rhs: OpCounts) -> OpCounts {
        OpCounts {
            encrypt: self.encrypt - rhs.encrypt,
            add: self.add - rhs.add,
            mul: self.mul - rhs.mul,
            scale: self.scale - rhs.scale,
        }
    }
}

impl OpCounters {
    pub fn snapshot(&self) -> OpCounts {
        OpCounts { encrypt: self.encrypt.get(), add: self.add.get(), mul: self.mul.get(), scale: self.scale.get() }
    }
}

/// A scheme handle that counts every homomorphic operation it performs.
pub struct Evaluator<'a, S: HomomorphicScheme> {
    pub scheme: &'a S,
    pub counters: OpCounters,
}

impl<'a, S: HomomorphicScheme> Evaluator<'a, S> {
    pub fn new(scheme: &'a S) -> Self {
        Evaluator { scheme, counters: OpCounters::default() }
    }

    pub fn counts(&self) -> OpCounts {
        self.counters.snapshot()
    }

    pub fn encrypt<R: RngCore + ?Sized>(&self, m: i64, rng: &mut R) -> Result<S::Ciphertext, PheError> {
        self.counters.encrypt.incr();
        self.scheme.encrypt(m, rng)
    }

    pub fn add(&self, a: &S::Ciphertext, b: &S::Ciphertext) -> Result<S::Ciphertext, PheError> {
        self.counters.add.incr();
        self.scheme.add(a, b)
    }

    pub fn mul(&self, a: &S::Ciphertext, b: &S::Ciphertext) -> Result<S::Ciphertext, PheError> {
        self.counters.mul.incr();
        self.scheme.mul(a, b)
    }

    pub fn scale(&self, a: &S::Ciphertext, k: i64) -> S::Ciphertext {
        self.counters.scale.incr();
        self.scheme.scale(a, k)
    }

    /// ⊕-fold of a sequence; `None` when it is empty.
    pub fn sum<'c, I>(&self, items: I) -> Result<Option<S::Ciphertext>, PheError>
    where
        I: IntoIterator<Item = &'c S::Ciphertext>,
        S::Ciphertext: 'c,
    {
        let mut acc: Option<S::Ciphertext> = None;
        for c in items {
            acc = Some(match acc {
                None => c.clone(),
                Some(a) => self.add(&a, c)?,
            });
        }
        Ok(acc)
    }
}

/// Representative of `k mod n` in `[0, n)`.
pub(crate) fn signed_residue(k: i64, n: &num_bigint::BigUint) -> num_bigint::BigUint {
    use num_bigint::BigUint;
    let mag = BigUint::from(k.unsigned_abs()) % n;
    if k < 0 && mag != BigUint::from(0u32) {
        n - mag
    } else {
        mag
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;

    #[test]
    fn signed_residue_wraps_negatives() {
        let n = BigUint::from(101u32);
        assert_eq!(signed_residue(-3, &n), BigUint::from(98u32));
        assert_eq!(signed_residue(3, &n), BigUint::from(3u32));
        assert_eq!(signed_residue(-101, &n), BigUint::from(0u32));
        assert_eq!(signed_residue(i64::MIN, &n), BigUint::from(101u32 - (9223372036854775808u64 % 101) as u32));
    }
}
