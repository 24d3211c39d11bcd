//! Debug backend that keeps plaintexts in the clear.
//!
//! It mirrors the real backend's contract (levels, bound, signed decoding,
//! randomised encodings) so services can be tested against exact arithmetic.
//! It provides no confidentiality whatsoever.
//!
//! Encoding: `[level][nonce: u64 BE][value: i128 BE]`, 25 bytes.

use rand_core::RngCore;

use super::{HomomorphicScheme, Level, PheCiphertext, PheError};

pub const CIPHERTEXT_LEN: usize = 25;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClearCiphertext {
    pub level: Level,
    pub nonce: u64,
    pub value: i128,
}

impl PheCiphertext for ClearCiphertext {
    fn level(&self) -> Level {
        self.level
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CIPHERTEXT_LEN);
        out.push(self.level as u8);
        out.extend_from_slice(&self.nonce.to_be_bytes());
        out.extend_from_slice(&self.value.to_be_bytes());
        out
    }
}

#[derive(Clone, Debug)]
pub struct Transparent {
    bound: u64,
}

/// The transparent backend needs no secret; the type exists to keep the
/// interface uniform.
#[derive(Clone, Debug, Default)]
pub struct ClearKey;

impl Transparent {
    pub fn new(bound: u64) -> (Self, ClearKey) {
        (Transparent { bound }, ClearKey)
    }
}

impl HomomorphicScheme for Transparent {
    type Ciphertext = ClearCiphertext;
    type SecretKey = ClearKey;

    const NAME: &'static str = "clear";

    fn bound(&self) -> u64 {
        self.bound
    }

    fn public_params(&self) -> serde_json::Value {
        serde_json::json!({ "bound": self.bound })
    }

    fn encrypt<R: RngCore + ?Sized>(&self, m: i64, rng: &mut R) -> Result<ClearCiphertext, PheError> {
        self.check_plaintext(m)?;
        Ok(ClearCiphertext { level: Level::One, nonce: rng.next_u64(), value: m as i128 })
    }

    fn one(&self) -> ClearCiphertext {
        ClearCiphertext { level: Level::One, nonce: 0, value: 1 }
    }

    fn add(&self, a: &ClearCiphertext, b: &ClearCiphertext) -> Result<ClearCiphertext, PheError> {
        if a.level != b.level {
            return Err(PheError::LevelMismatch { left: a.level, right: b.level });
        }
        Ok(ClearCiphertext {
            level: a.level,
            nonce: a.nonce.wrapping_add(b.nonce),
            value: a.value.saturating_add(b.value),
        })
    }

    fn mul(&self, a: &ClearCiphertext, b: &ClearCiphertext) -> Result<ClearCiphertext, PheError> {
        if a.level == Level::Two || b.level == Level::Two {
            return Err(PheError::LevelOverflow);
        }
        Ok(ClearCiphertext {
            level: Level::Two,
            nonce: a.nonce ^ b.nonce.rotate_left(32),
            value: a.value.saturating_mul(b.value),
        })
    }

    fn scale(&self, a: &ClearCiphertext, k: i64) -> ClearCiphertext {
        ClearCiphertext {
            level: a.level,
            nonce: a.nonce.wrapping_mul(k as u64),
            value: a.value.saturating_mul(k as i128),
        }
    }

    fn decode(&self, bytes: &[u8]) -> Result<ClearCiphertext, PheError> {
        if bytes.len() != CIPHERTEXT_LEN {
            return Err(PheError::InvalidEncoding("wrong length"));
        }
        let level = Level::from_byte(bytes[0]).ok_or(PheError::InvalidEncoding("bad level byte"))?;
        let nonce = u64::from_be_bytes(bytes[1..9].try_into().unwrap());
        let value = i128::from_be_bytes(bytes[9..].try_into().unwrap());
        Ok(ClearCiphertext { level, nonce, value })
    }

    fn decrypt(&self, _sk: &ClearKey, c: &ClearCiphertext) -> Result<i64, PheError> {
        if c.value.unsigned_abs() > self.bound as u128 {
            return Err(PheError::DecryptOutOfRange { bound: self.bound });
        }
        Ok(c.value as i64)
    }

    fn fingerprint(&self, _sk: &ClearKey, c: &ClearCiphertext) -> Vec<u8> {
        let mut out = vec![c.level as u8];
        out.extend_from_slice(&c.value.to_be_bytes());
        out
    }

    fn tag_for(&self, _sk: &ClearKey, level: Level, m: i64) -> Vec<u8> {
        let mut out = vec![level as u8];
        out.extend_from_slice(&(m as i128).to_be_bytes());
        out
    }
}
