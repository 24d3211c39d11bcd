//! Prime-order asymmetric bilinear groups used by the signature layer.
//!
//! One fixed suite is supported: BLS12-381, backed by `blstrs`. Group laws are
//! written additively throughout the crate, so the multiplicative `X^a` of the
//! protocol is `x * a` here and the product `X·Y` is `x + y`. The target group
//! follows the same convention: `GtElem + GtElem` is multiplication in GT.
//!
//! Canonical encodings (the wire format for every other module):
//!
//! | type      | bytes | layout                                                  |
//! |-----------|-------|---------------------------------------------------------|
//! | `Scalar`  | 32    | big-endian integer in `[0, q)`                          |
//! | `G1Elem`  | 48    | ZCash compressed point (flag bits in the top byte)     |
//! | `G2Elem`  | 96    | ZCash compressed point                                  |
//! | `GtElem`  | 289   | `0x00` + torus-compressed Fp6, or `0x01` + 288 zeros for the identity |

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use blstrs::{Compress, G1Affine, G1Projective, G2Affine, G2Projective, Gt};
use ff::Field;
use group::{prime::PrimeCurveAffine, Curve, Group};
use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use sha1::Sha1;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const SCALAR_LEN: usize = 32;
pub const G1_LEN: usize = 48;
pub const G2_LEN: usize = 96;
pub const GT_LEN: usize = 289;

/// Domain separation tag for hashing into G1.
pub const HASH_TO_G1_DST: &[u8] = b"TPDM-V01-CS01-with-BLS12381G1_XMD:SHA-256_SSWU_RO_";

/// Big-endian encoding of the group order q.
pub const GROUP_ORDER_BE: [u8; 32] = [
    0x73, 0xed, 0xa7, 0x53, 0x29, 0x9d, 0x7d, 0x48, 0x33, 0x39, 0xd8, 0x08, 0x09, 0xa1, 0xd8, 0x05, 0x53, 0xbd, 0xa4,
    0x02, 0xff, 0xfe, 0x5b, 0xfe, 0xff, 0xff, 0xff, 0xff, 0x00, 0x00, 0x00, 0x01,
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PairingError {
    #[error("invalid {group} encoding: {reason}")]
    InvalidElement { group: &'static str, reason: &'static str },
}

fn invalid(group: &'static str, reason: &'static str) -> PairingError {
    PairingError::InvalidElement { group, reason }
}

/// Digest used for `h(·)`, the hash of a ciphertext concatenation into Z_q.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DigestKind {
    #[default]
    Sha256,
    /// Compatibility mode with the original 160-bit deployment. SHA-1 is broken.
    Sha1,
}

/// An integer modulo the group order q.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Scalar(pub(crate) blstrs::Scalar);

impl Scalar {
    pub const ZERO: Scalar = Scalar(blstrs::Scalar::ZERO);
    pub const ONE: Scalar = Scalar(blstrs::Scalar::ONE);

    pub fn from_u64(v: u64) -> Self {
        Scalar(blstrs::Scalar::from(v))
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut wide = [0u8; 64];
        rng.fill_bytes(&mut wide);
        Scalar::reduce_be(&wide)
    }

    /// A uniformly random scalar in `[1, q)`.
    pub fn random_nonzero<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        loop {
            let s = Scalar::random(rng);
            if !s.is_zero() {
                return s;
            }
        }
    }

    /// Interprets `bytes` as a big-endian integer and reduces it mod q.
    pub fn reduce_be(bytes: &[u8]) -> Self {
        let radix = blstrs::Scalar::from(256u64);
        let acc = bytes.iter().fold(blstrs::Scalar::ZERO, |acc, b| acc * radix + blstrs::Scalar::from(u64::from(*b)));
        Scalar(acc)
    }

    pub fn is_zero(&self) -> bool {
        bool::from(self.0.is_zero())
    }

    pub fn invert(&self) -> Option<Scalar> {
        Option::from(self.0.invert()).map(Scalar)
    }

    pub fn to_bytes(&self) -> [u8; SCALAR_LEN] {
        self.0.to_bytes_be()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PairingError> {
        let arr: &[u8; SCALAR_LEN] = bytes.try_into().map_err(|_| invalid("scalar", "wrong length"))?;
        Option::from(blstrs::Scalar::from_bytes_be(arr))
            .map(Scalar)
            .ok_or_else(|| invalid("scalar", "not below the group order"))
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({})", hex::encode(self.to_bytes()))
    }
}

impl Add for Scalar {
    type Output = Scalar;
    fn add(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 + rhs.0)
    }
}

impl Sub for Scalar {
    type Output = Scalar;
    fn sub(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 - rhs.0)
    }
}

impl Mul for Scalar {
    type Output = Scalar;
    fn mul(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 * rhs.0)
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-self.0)
    }
}

macro_rules! curve_elem {
    ($name:ident, $proj:ty, $affine:ty, $len:expr, $label:literal) => {
        #[derive(Clone, Copy, PartialEq, Eq)]
        pub struct $name(pub(crate) $proj);

        impl $name {
            pub fn identity() -> Self {
                $name(<$proj>::identity())
            }

            pub fn generator() -> Self {
                $name(<$proj>::generator())
            }

            pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
                $name(<$proj>::generator() * Scalar::random_nonzero(rng).0)
            }

            pub fn is_identity(&self) -> bool {
                bool::from(self.0.is_identity())
            }

            pub fn to_bytes(&self) -> [u8; $len] {
                self.0.to_affine().to_compressed()
            }

            /// Decodes a compressed point, rejecting off-curve and wrong-subgroup inputs.
            pub fn from_bytes(bytes: &[u8]) -> Result<Self, PairingError> {
                let arr: &[u8; $len] = bytes.try_into().map_err(|_| invalid($label, "wrong length"))?;
                let affine: Option<$affine> = <$affine>::from_compressed(arr).into();
                let affine = affine.ok_or_else(|| invalid($label, "not a subgroup point"))?;
                // blst accepts a few non-canonical infinity encodings; only the
                // canonical one is allowed on the wire.
                if affine.to_compressed() != *arr {
                    return Err(invalid($label, "non-canonical encoding"));
                }
                Ok($name(affine.to_curve()))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), hex::encode(self.to_bytes()))
            }
        }

        impl Add for $name {
            type Output = $name;
            fn add(self, rhs: $name) -> $name {
                $name(self.0 + rhs.0)
            }
        }

        impl AddAssign for $name {
            fn add_assign(&mut self, rhs: $name) {
                self.0 += rhs.0;
            }
        }

        impl Sub for $name {
            type Output = $name;
            fn sub(self, rhs: $name) -> $name {
                $name(self.0 - rhs.0)
            }
        }

        impl Neg for $name {
            type Output = $name;
            fn neg(self) -> $name {
                $name(-self.0)
            }
        }

        impl Mul<Scalar> for $name {
            type Output = $name;
            fn mul(self, rhs: Scalar) -> $name {
                $name(self.0 * rhs.0)
            }
        }

        impl<'a> Sum<&'a $name> for $name {
            fn sum<I: Iterator<Item = &'a $name>>(iter: I) -> $name {
                iter.fold($name::identity(), |acc, x| acc + *x)
            }
        }

        impl Sum for $name {
            fn sum<I: Iterator<Item = $name>>(iter: I) -> $name {
                iter.fold($name::identity(), |acc, x| acc + x)
            }
        }
    };
}

/// Serde support: elements travel as lowercase hex of their canonical bytes.
macro_rules! hex_serde {
    ($name:ident) => {
        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&hex::encode(self.to_bytes()))
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let text = String::deserialize(d)?;
                let bytes = hex::decode(&text).map_err(serde::de::Error::custom)?;
                $name::from_bytes(&bytes).map_err(serde::de::Error::custom)
            }
        }
    };
}

curve_elem!(G1Elem, G1Projective, G1Affine, G1_LEN, "G1");
curve_elem!(G2Elem, G2Projective, G2Affine, G2_LEN, "G2");

hex_serde!(Scalar);
hex_serde!(G1Elem);
hex_serde!(G2Elem);
hex_serde!(GtElem);

/// An element of the target group GT, written additively.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct GtElem(pub(crate) Gt);

impl GtElem {
    pub fn identity() -> Self {
        GtElem(Gt::identity())
    }

    pub fn is_identity(&self) -> bool {
        bool::from(self.0.is_identity())
    }

    pub fn to_bytes(&self) -> [u8; GT_LEN] {
        let mut out = [0u8; GT_LEN];
        if self.is_identity() {
            out[0] = 1;
            return out;
        }
        let mut body = Vec::with_capacity(GT_LEN - 1);
        self.0.write_compressed(&mut body).expect("writing to a Vec cannot fail");
        out[1..].copy_from_slice(&body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PairingError> {
        if bytes.len() != GT_LEN {
            return Err(invalid("GT", "wrong length"));
        }
        match bytes[0] {
            1 if bytes[1..].iter().all(|b| *b == 0) => Ok(GtElem::identity()),
            0 => {
                let gt = Gt::read_compressed(&bytes[1..]).map_err(|_| invalid("GT", "not a subgroup element"))?;
                let elem = GtElem(gt);
                if elem.is_identity() || elem.to_bytes()[..] != bytes[..] {
                    return Err(invalid("GT", "non-canonical encoding"));
                }
                Ok(elem)
            }
            _ => Err(invalid("GT", "bad flag byte")),
        }
    }
}

impl fmt::Debug for GtElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GtElem({}..)", hex::encode(&self.to_bytes()[..16]))
    }
}

impl Add for GtElem {
    type Output = GtElem;
    fn add(self, rhs: GtElem) -> GtElem {
        GtElem(self.0 + rhs.0)
    }
}

impl Mul<Scalar> for GtElem {
    type Output = GtElem;
    fn mul(self, rhs: Scalar) -> GtElem {
        GtElem(self.0 * rhs.0)
    }
}

/// Published description of the bilinear group: generators, order and curve name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSuite {
    pub curve: String,
    /// Hex of the big-endian prime order q.
    pub order: String,
    /// Hex of the compressed generators.
    pub g1: String,
    pub g2: String,
}

impl Default for GroupSuite {
    fn default() -> Self {
        GroupSuite::bls12_381()
    }
}

impl GroupSuite {
    pub fn bls12_381() -> Self {
        GroupSuite {
            curve: "BLS12-381".to_string(),
            order: hex::encode(GROUP_ORDER_BE),
            g1: hex::encode(G1Elem::generator().to_bytes()),
            g2: hex::encode(G2Elem::generator().to_bytes()),
        }
    }

    pub fn g1(&self) -> G1Elem {
        G1Elem::generator()
    }

    pub fn g2(&self) -> G2Elem {
        G2Elem::generator()
    }
}

/// The optimal Ate pairing ê: G1 × G2 → GT.
pub fn pair(x: &G1Elem, z: &G2Elem) -> GtElem {
    GtElem(blstrs::pairing(&x.0.to_affine(), &z.0.to_affine()))
}

/// MapToPoint: hash arbitrary bytes into the order-q subgroup of G1.
///
/// Uses the hash-to-curve SSWU random-oracle construction with [`HASH_TO_G1_DST`].
pub fn hash_to_g1(msg: &[u8]) -> G1Elem {
    G1Elem(G1Projective::hash_to_curve(msg, HASH_TO_G1_DST, &[]))
}

/// `h(·)`: digest `msg` and reduce the big-endian result mod q.
pub fn hash_to_scalar(kind: DigestKind, msg: &[u8]) -> Scalar {
    match kind {
        DigestKind::Sha256 => Scalar::reduce_be(&Sha256::digest(msg)),
        DigestKind::Sha1 => Scalar::reduce_be(&Sha1::digest(msg)),
    }
}
