//! Arithmetic in F_p and F_p² = F_p[i]/(i² + 1) for a prime p ≡ 3 (mod 4).

use num_bigint::BigUint;
use num_traits::{One, Zero};

/// Prime field context. Elements are plain `BigUint`s kept in `[0, p)`.
#[derive(Clone, Debug)]
pub struct Fp {
    p: BigUint,
    sqrt_exp: BigUint,
    byte_len: usize,
}

impl Fp {
    pub fn new(p: BigUint) -> Self {
        assert_eq!(&p % 4u32, BigUint::from(3u32), "modulus must be 3 mod 4");
        let sqrt_exp = (&p + 1u32) >> 2;
        let byte_len = p.bits().div_ceil(8) as usize;
        Fp { p, sqrt_exp, byte_len }
    }

    #[cfg(test)]
    pub fn modulus(&self) -> &BigUint {
        &self.p
    }

    /// Fixed length of a big-endian element encoding.
    pub fn byte_len(&self) -> usize {
        self.byte_len
    }

    pub fn reduce(&self, a: &BigUint) -> BigUint {
        a % &self.p
    }

    pub fn add(&self, a: &BigUint, b: &BigUint) -> BigUint {
        let s = a + b;
        if s >= self.p {
            s - &self.p
        } else {
            s
        }
    }

    pub fn sub(&self, a: &BigUint, b: &BigUint) -> BigUint {
        if a >= b {
            a - b
        } else {
            &self.p - (b - a)
        }
    }

    pub fn neg(&self, a: &BigUint) -> BigUint {
        if a.is_zero() {
            BigUint::zero()
        } else {
            &self.p - a
        }
    }

    pub fn dbl(&self, a: &BigUint) -> BigUint {
        self.add(a, a)
    }

    pub fn mul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a * b) % &self.p
    }

    pub fn sqr(&self, a: &BigUint) -> BigUint {
        (a * a) % &self.p
    }

    pub fn small(&self, a: &BigUint, k: u32) -> BigUint {
        (a * k) % &self.p
    }

    /// Inverse of a nonzero element.
    pub fn inv(&self, a: &BigUint) -> BigUint {
        a.modinv(&self.p).expect("inverse of zero")
    }

    pub fn pow(&self, a: &BigUint, e: &BigUint) -> BigUint {
        a.modpow(e, &self.p)
    }

    /// Square root when one exists.
    pub fn sqrt(&self, a: &BigUint) -> Option<BigUint> {
        let r = self.pow(a, &self.sqrt_exp);
        (self.sqr(&r) == self.reduce(a)).then_some(r)
    }

    #[cfg(test)]
    pub fn to_bytes(&self, a: &BigUint) -> Vec<u8> {
        let raw = a.to_bytes_be();
        let mut out = vec![0u8; self.byte_len - raw.len()];
        out.extend_from_slice(&raw);
        out
    }

    /// Parses a fixed-length big-endian element, rejecting values ≥ p.
    pub fn from_bytes(&self, bytes: &[u8]) -> Option<BigUint> {
        if bytes.len() != self.byte_len {
            return None;
        }
        let v = BigUint::from_bytes_be(bytes);
        (v < self.p).then_some(v)
    }

    /// Simultaneous inversion of nonzero elements with one field inversion.
    pub fn batch_inv(&self, xs: &[BigUint]) -> Vec<BigUint> {
        if xs.is_empty() {
            return Vec::new();
        }
        let mut prefix = Vec::with_capacity(xs.len());
        let mut acc = BigUint::one();
        for x in xs {
            acc = self.mul(&acc, x);
            prefix.push(acc.clone());
        }
        let mut inv = self.inv(&acc);
        let mut out = vec![BigUint::zero(); xs.len()];
        for i in (0..xs.len()).rev() {
            if i == 0 {
                out[0] = inv.clone();
            } else {
                out[i] = self.mul(&inv, &prefix[i - 1]);
                inv = self.mul(&inv, &xs[i]);
            }
        }
        out
    }
}

/// Element `re + im·i` of F_p².
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Fp2 {
    pub re: BigUint,
    pub im: BigUint,
}

impl Fp2 {
    pub fn one() -> Self {
        Fp2 { re: BigUint::one(), im: BigUint::zero() }
    }

    pub fn is_one(&self) -> bool {
        self.re.is_one() && self.im.is_zero()
    }
}

impl Fp {
    pub fn mul2(&self, a: &Fp2, b: &Fp2) -> Fp2 {
        let t0 = &a.re * &b.re;
        let t1 = &a.im * &b.im;
        let cross = (&a.re + &a.im) * (&b.re + &b.im);
        let re = (t0.clone() + (&self.p - (&t1 % &self.p))) % &self.p;
        let im = (cross - t0 - t1) % &self.p;
        Fp2 { re, im }
    }

    pub fn sqr2(&self, a: &Fp2) -> Fp2 {
        let sum = &a.re + &a.im;
        let diff = self.sub(&a.re, &a.im);
        let re = (sum * diff) % &self.p;
        let im = ((&a.re * &a.im) << 1u32) % &self.p;
        Fp2 { re, im }
    }

    pub fn conj2(&self, a: &Fp2) -> Fp2 {
        Fp2 { re: a.re.clone(), im: self.neg(&a.im) }
    }

    pub fn inv2(&self, a: &Fp2) -> Fp2 {
        let norm = self.add(&self.sqr(&a.re), &self.sqr(&a.im));
        let n_inv = self.inv(&norm);
        Fp2 { re: self.mul(&a.re, &n_inv), im: self.mul(&self.neg(&a.im), &n_inv) }
    }

    pub fn pow2(&self, a: &Fp2, e: &BigUint) -> Fp2 {
        let mut acc = Fp2::one();
        for i in (0..e.bits()).rev() {
            acc = self.sqr2(&acc);
            if e.bit(i) {
                acc = self.mul2(&acc, a);
            }
        }
        acc
    }

    pub fn from_bytes2(&self, bytes: &[u8]) -> Option<Fp2> {
        if bytes.len() != 2 * self.byte_len {
            return None;
        }
        let (re, im) = bytes.split_at(self.byte_len);
        Some(Fp2 { re: self.from_bytes(re)?, im: self.from_bytes(im)? })
    }
}
