//! BGN encryption over a composite-order supersingular curve.
//!
//! Parameters: primes q1, q2 with N = q1·q2, a prime p = l·N − 1 with
//! 4 | l, the curve y² = x³ + x over F_p (p + 1 = l·N points), a generator g
//! of the order-N subgroup and a blinding element h of order q1.
//!
//! * Level 1: `E(m) = m·g + r·h`, a curve point.
//! * Level 2: `ê(E(a), E(b))`, an element of the order-N subgroup of F_p²*.
//!
//! Multiplying by q1 removes the blinding; what remains is `m·(q1·g)` (or
//! `ê(g, g)^{q1·m}`), and m is recovered by baby-step giant-step over
//! `[−T, T]`.
//!
//! Element encodings (L = byte length of p):
//!
//! * level 1: `[flag][x: L bytes]` with flag 0/1 = parity of y, 2 = infinity
//!   (x all zero);
//! * level 2: `[re: L bytes][im: L bytes]`.
//!
//! Parameters at the 256-bit floor are for testing only and offer no real
//! security.

mod curve;
mod field;

use std::collections::HashMap;
use std::sync::OnceLock;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use self::curve::{Curve, Point};
use self::field::{Fp, Fp2};
use super::{signed_residue, HomomorphicScheme, Level, PheCiphertext, PheError};

/// Smallest accepted bit length of N.
pub const MIN_MODULUS_BITS: usize = 256;

const MAX_COFACTOR_TRIES: u32 = 20_000;
const MAX_POINT_TRIES: usize = 1_000;
const FIXED_BASE_WINDOW: usize = 4;
const GIANT_CHUNK: u64 = 32;

/// Public parameters, serialised with hexadecimal integers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BgnParams {
    pub p: String,
    pub n: String,
    pub cofactor: String,
    pub g: [String; 2],
    pub h: [String; 2],
    pub bound: u64,
    /// Baby-step table size used at decryption.
    pub table_size: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SecretKeyRepr {
    q1: String,
    q2: String,
}

/// The factorisation of N. Decryption tables are built on first use.
#[derive(Debug, Serialize, Deserialize)]
#[serde(from = "SecretKeyRepr", into = "SecretKeyRepr")]
pub struct BgnSecretKey {
    q1: BigUint,
    q2: BigUint,
    tables: OnceLock<DlogTables>,
}

impl Clone for BgnSecretKey {
    fn clone(&self) -> Self {
        BgnSecretKey { q1: self.q1.clone(), q2: self.q2.clone(), tables: OnceLock::new() }
    }
}

impl From<SecretKeyRepr> for BgnSecretKey {
    fn from(r: SecretKeyRepr) -> Self {
        BgnSecretKey { q1: parse_hex(&r.q1), q2: parse_hex(&r.q2), tables: OnceLock::new() }
    }
}

impl From<BgnSecretKey> for SecretKeyRepr {
    fn from(k: BgnSecretKey) -> Self {
        SecretKeyRepr { q1: k.q1.to_str_radix(16), q2: k.q2.to_str_radix(16) }
    }
}

impl BgnSecretKey {
    pub fn q1(&self) -> &BigUint {
        &self.q1
    }
}

#[derive(Debug)]
struct DlogTables {
    base1: Point,
    giant1: Point,
    baby1: HashMap<Vec<u8>, u32>,
    base2: Fp2,
    giant2: Fp2,
    baby2: HashMap<Vec<u8>, u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Elem {
    G(Point),
    T(Fp2),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BgnCiphertext {
    elem: Elem,
    width: usize,
}

impl PheCiphertext for BgnCiphertext {
    fn level(&self) -> Level {
        match self.elem {
            Elem::G(_) => Level::One,
            Elem::T(_) => Level::Two,
        }
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![self.level() as u8];
        out.extend(encode_elem(&self.elem, self.width));
        out
    }
}

fn encode_point(p: &Point, width: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(width + 1);
    match &p.0 {
        None => {
            out.push(2);
            out.resize(width + 1, 0);
        }
        Some((x, y)) => {
            out.push(y.is_odd() as u8);
            let raw = x.to_bytes_be();
            out.resize(width + 1 - raw.len(), 0);
            out.extend_from_slice(&raw);
        }
    }
    out
}

fn encode_fp2(z: &Fp2, width: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(2 * width);
    for v in [&z.re, &z.im] {
        let raw = v.to_bytes_be();
        out.resize(out.len() + width - raw.len(), 0);
        out.extend_from_slice(&raw);
    }
    out
}

fn encode_elem(e: &Elem, width: usize) -> Vec<u8> {
    match e {
        Elem::G(p) => encode_point(p, width),
        Elem::T(z) => encode_fp2(z, width),
    }
}

fn parse_hex(s: &str) -> BigUint {
    BigUint::parse_bytes(s.as_bytes(), 16).unwrap_or_default()
}

/// Fixed-base table: `table[w][j] = (j + 1)·2^{4w}·base`.
#[derive(Debug)]
struct FixedBase {
    table: Vec<Vec<Point>>,
}

impl FixedBase {
    fn new(c: &Curve, base: &Point, bits: u64) -> Self {
        let windows = (bits as usize).div_ceil(FIXED_BASE_WINDOW);
        let mut table = Vec::with_capacity(windows);
        let mut b = base.clone();
        for _ in 0..windows {
            let row = c.multiples(&b, (1 << FIXED_BASE_WINDOW) - 1);
            b = c.double(&row[(1 << (FIXED_BASE_WINDOW - 1)) - 1]);
            table.push(row);
        }
        FixedBase { table }
    }

    fn mul(&self, c: &Curve, k: &BigUint) -> Point {
        let digits = k.to_bytes_le();
        c.sum(self.table.iter().enumerate().filter_map(|(w, row)| {
            let byte = digits.get(w / 2).copied().unwrap_or(0);
            let d = if w % 2 == 0 { byte & 0x0f } else { byte >> 4 } as usize;
            (d != 0).then(|| &row[d - 1])
        }))
    }
}

pub struct Bgn {
    params: BgnParams,
    curve: Curve,
    n: BigUint,
    cofactor: BigUint,
    g: Point,
    g_fixed: FixedBase,
    h_fixed: FixedBase,
    width: usize,
    bound: u64,
    table_size: u64,
}

impl std::fmt::Debug for Bgn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Bgn").field("params", &self.params).finish_non_exhaustive()
    }
}

/// Baby-step table size for a bound: a power of two around 8·√(2T + 1).
pub fn default_table_size(bound: u64) -> u64 {
    let span = 2 * bound as u128 + 1;
    let root = (span as f64).sqrt().ceil() as u64;
    (root.next_power_of_two() * 8).min(span as u64)
}

impl Bgn {
    /// Generates fresh parameters with an N of `modulus_bits` bits.
    pub fn keygen<R: RngCore + ?Sized>(
        modulus_bits: usize,
        bound: u64,
        rng: &mut R,
    ) -> Result<(Bgn, BgnSecretKey), PheError> {
        if modulus_bits < MIN_MODULUS_BITS || modulus_bits % 2 != 0 {
            return Err(PheError::InvalidParams(format!("modulus bits must be even and at least {MIN_MODULUS_BITS}")));
        }
        let half = modulus_bits / 2;
        let gen =
            |rng: &mut R| glass_pumpkin::prime::from_rng(half, rng).map_err(|e| PheError::InvalidParams(e.to_string()));
        let q1 = gen(rng)?;
        let mut q2 = gen(rng)?;
        while q2 == q1 {
            q2 = gen(rng)?;
        }
        if BigUint::from(2 * bound + 1) >= q2 {
            return Err(PheError::InvalidParams("bound too large for the modulus".into()));
        }
        let n = &q1 * &q2;

        let mut found = None;
        for k in 1..=MAX_COFACTOR_TRIES {
            let cofactor = BigUint::from(4 * k);
            let p = &cofactor * &n - 1u32;
            if glass_pumpkin::prime::check_with(&p, rng) {
                found = Some((p, cofactor));
                break;
            }
        }
        let (p, cofactor) = found.ok_or(PheError::KeygenFailed(MAX_COFACTOR_TRIES as usize))?;
        let curve = Curve::new(Fp::new(p.clone()));

        let random_point = |rng: &mut R| -> Result<Point, PheError> {
            for _ in 0..MAX_POINT_TRIES {
                let x = rng.gen_biguint_below(&p);
                if let Some(pt) = curve.lift_x(&x) {
                    let q = curve.mul(&pt, &cofactor);
                    if !q.is_infinity() {
                        return Ok(q);
                    }
                }
            }
            Err(PheError::KeygenFailed(MAX_POINT_TRIES))
        };

        let mut g = None;
        for _ in 0..MAX_POINT_TRIES {
            let cand = random_point(rng)?;
            if !curve.mul(&cand, &q1).is_infinity() && !curve.mul(&cand, &q2).is_infinity() {
                g = Some(cand);
                break;
            }
        }
        let g = g.ok_or(PheError::KeygenFailed(MAX_POINT_TRIES))?;
        let mut h = None;
        for _ in 0..MAX_POINT_TRIES {
            let cand = curve.mul(&random_point(rng)?, &q2);
            if !cand.is_infinity() {
                h = Some(cand);
                break;
            }
        }
        let h = h.ok_or(PheError::KeygenFailed(MAX_POINT_TRIES))?;

        let coords = |pt: &Point| {
            let (x, y) = pt.0.as_ref().expect("finite point");
            [x.to_str_radix(16), y.to_str_radix(16)]
        };
        let params = BgnParams {
            p: p.to_str_radix(16),
            n: n.to_str_radix(16),
            cofactor: cofactor.to_str_radix(16),
            g: coords(&g),
            h: coords(&h),
            bound,
            table_size: default_table_size(bound),
        };
        let scheme = Bgn::from_params(params)?;
        let sk = BgnSecretKey { q1, q2, tables: OnceLock::new() };
        if scheme.gt_pow(&scheme.pairing(&scheme.g, &scheme.g), &sk.q1).is_one() {
            return Err(PheError::KeygenFailed(1));
        }
        Ok((scheme, sk))
    }

    /// Rebuilds a scheme from published parameters, validating them.
    pub fn from_params(params: BgnParams) -> Result<Bgn, PheError> {
        let bad = |what: &str| PheError::InvalidParams(what.to_string());
        let p = parse_hex(&params.p);
        let n = parse_hex(&params.n);
        let cofactor = parse_hex(&params.cofactor);
        if n.is_zero() || &cofactor * &n != &p + 1u32 || !(&cofactor % 4u32).is_zero() {
            return Err(bad("p + 1 must equal cofactor·N with 4 | cofactor"));
        }
        if params.table_size == 0 {
            return Err(bad("table size must be positive"));
        }
        let curve = Curve::new(Fp::new(p));
        let point = |c: &[String; 2]| Point(Some((parse_hex(&c[0]), parse_hex(&c[1]))));
        let (g, h) = (point(&params.g), point(&params.h));
        for pt in [&g, &h] {
            if !curve.is_on_curve(pt) || !curve.mul(pt, &n).is_infinity() {
                return Err(bad("generator not in the order-N subgroup"));
            }
        }
        let width = curve.f.byte_len();
        let g_fixed = FixedBase::new(&curve, &g, n.bits());
        let h_fixed = FixedBase::new(&curve, &h, n.bits());
        Ok(Bgn {
            bound: params.bound,
            table_size: params.table_size,
            params,
            curve,
            n,
            cofactor,
            g,
            g_fixed,
            h_fixed,
            width,
        })
    }

    pub fn params(&self) -> &BgnParams {
        &self.params
    }

    pub fn modulus_bits(&self) -> u64 {
        self.n.bits()
    }

    fn ct(&self, elem: Elem) -> BgnCiphertext {
        BgnCiphertext { elem, width: self.width }
    }

    fn pairing(&self, a: &Point, b: &Point) -> Fp2 {
        self.curve.tate(a, b, &self.n, &self.cofactor)
    }

    fn gt_pow(&self, z: &Fp2, e: &BigUint) -> Fp2 {
        self.curve.f.pow2(z, e)
    }

    /// `k·P` for signed k.
    fn point_scale(&self, p: &Point, k: i64) -> Point {
        let q = self.curve.mul(p, &BigUint::from(k.unsigned_abs()));
        if k < 0 {
            self.curve.neg(&q)
        } else {
            q
        }
    }

    /// `z^k` for signed k; z has norm 1 so its inverse is its conjugate.
    fn gt_scale(&self, z: &Fp2, k: i64) -> Fp2 {
        let r = self.gt_pow(z, &BigUint::from(k.unsigned_abs()));
        if k < 0 {
            self.curve.f.conj2(&r)
        } else {
            r
        }
    }

    fn tables<'k>(&self, sk: &'k BgnSecretKey) -> &'k DlogTables {
        sk.tables.get_or_init(|| {
            let c = &self.curve;
            let m = self.table_size as usize;
            let base1 = c.mul(&self.g, &sk.q1);
            let mut baby1 = HashMap::with_capacity(m);
            baby1.insert(encode_point(&Point::INFINITY, self.width), 0);
            for (j, pt) in c.multiples(&base1, m - 1).iter().enumerate() {
                baby1.insert(encode_point(pt, self.width), j as u32 + 1);
            }
            let giant1 = c.neg(&c.mul(&base1, &BigUint::from(m)));

            let base2 = self.gt_pow(&self.pairing(&self.g, &self.g), &sk.q1);
            let mut baby2 = HashMap::with_capacity(m);
            let mut acc = Fp2::one();
            for j in 0..m {
                baby2.insert(encode_fp2(&acc, self.width), j as u32);
                acc = c.f.mul2(&acc, &base2);
            }
            let giant2 = c.f.conj2(&acc);
            DlogTables { base1, giant1, baby1, base2, giant2, baby2 }
        })
    }

    /// Discrete log of `y = m·base1` with `|m| ≤ T`.
    fn dlog1(&self, t: &DlogTables, y: &Point) -> Option<i64> {
        let c = &self.curve;
        let shift = self.point_scale(&t.base1, self.bound as i64);
        let mut cur = c.add(y, &shift);
        let span = 2 * self.bound + 1;
        let steps = span.div_ceil(self.table_size);
        let mut i = 0;
        while i < steps {
            let chunk = GIANT_CHUNK.min(steps - i);
            let pts = c.progression(&cur, &t.giant1, chunk as usize + 1);
            for (off, pt) in pts[..chunk as usize].iter().enumerate() {
                if let Some(&j) = t.baby1.get(&encode_point(pt, self.width)) {
                    let k = (i + off as u64) * self.table_size + j as u64;
                    return (k < span).then(|| k as i64 - self.bound as i64);
                }
            }
            cur = pts[chunk as usize].clone();
            i += chunk;
        }
        None
    }

    fn dlog2(&self, t: &DlogTables, y: &Fp2) -> Option<i64> {
        let f = &self.curve.f;
        let shift = self.gt_pow(&t.base2, &BigUint::from(self.bound));
        let mut cur = f.mul2(y, &shift);
        let span = 2 * self.bound + 1;
        let steps = span.div_ceil(self.table_size);
        for i in 0..steps {
            if let Some(&j) = t.baby2.get(&encode_fp2(&cur, self.width)) {
                let k = i * self.table_size + j as u64;
                return (k < span).then(|| k as i64 - self.bound as i64);
            }
            cur = f.mul2(&cur, &t.giant2);
        }
        None
    }

    fn strip(&self, sk: &BgnSecretKey, c: &BgnCiphertext) -> Elem {
        match &c.elem {
            Elem::G(p) => Elem::G(self.curve.mul(p, &sk.q1)),
            Elem::T(z) => Elem::T(self.gt_pow(z, &sk.q1)),
        }
    }
}

impl HomomorphicScheme for Bgn {
    type Ciphertext = BgnCiphertext;
    type SecretKey = BgnSecretKey;

    const NAME: &'static str = "bgn";

    fn bound(&self) -> u64 {
        self.bound
    }

    fn public_params(&self) -> serde_json::Value {
        serde_json::to_value(&self.params).expect("params serialise")
    }

    fn encrypt<R: RngCore + ?Sized>(&self, m: i64, rng: &mut R) -> Result<BgnCiphertext, PheError> {
        self.check_plaintext(m)?;
        let r = rng.gen_biguint_below(&self.n);
        let gm = self.g_fixed.mul(&self.curve, &signed_residue(m, &self.n));
        let hr = self.h_fixed.mul(&self.curve, &r);
        Ok(self.ct(Elem::G(self.curve.add(&gm, &hr))))
    }

    fn one(&self) -> BgnCiphertext {
        self.ct(Elem::G(self.g.clone()))
    }

    fn add(&self, a: &BgnCiphertext, b: &BgnCiphertext) -> Result<BgnCiphertext, PheError> {
        match (&a.elem, &b.elem) {
            (Elem::G(x), Elem::G(y)) => Ok(self.ct(Elem::G(self.curve.add(x, y)))),
            (Elem::T(x), Elem::T(y)) => Ok(self.ct(Elem::T(self.curve.f.mul2(x, y)))),
            _ => Err(PheError::LevelMismatch { left: a.level(), right: b.level() }),
        }
    }

    fn mul(&self, a: &BgnCiphertext, b: &BgnCiphertext) -> Result<BgnCiphertext, PheError> {
        match (&a.elem, &b.elem) {
            (Elem::G(x), Elem::G(y)) => Ok(self.ct(Elem::T(self.pairing(x, y)))),
            _ => Err(PheError::LevelOverflow),
        }
    }

    fn scale(&self, a: &BgnCiphertext, k: i64) -> BgnCiphertext {
        match &a.elem {
            Elem::G(p) => self.ct(Elem::G(self.point_scale(p, k))),
            Elem::T(z) => self.ct(Elem::T(self.gt_scale(z, k))),
        }
    }

    fn decode(&self, bytes: &[u8]) -> Result<BgnCiphertext, PheError> {
        let (&lvl, body) = bytes.split_first().ok_or(PheError::InvalidEncoding("empty"))?;
        let f = &self.curve.f;
        match Level::from_byte(lvl) {
            Some(Level::One) => {
                if body.len() != self.width + 1 {
                    return Err(PheError::InvalidEncoding("wrong length"));
                }
                let x = f.from_bytes(&body[1..]).ok_or(PheError::InvalidEncoding("x ≥ p"))?;
                let pt = match body[0] {
                    2 if x.is_zero() => Point::INFINITY,
                    flag @ (0 | 1) => {
                        let pt = self.curve.lift_x(&x).ok_or(PheError::InvalidEncoding("not on curve"))?;
                        let (_, y) = pt.0.as_ref().unwrap();
                        if y.is_odd() == (flag == 1) {
                            pt
                        } else {
                            self.curve.neg(&pt)
                        }
                    }
                    _ => return Err(PheError::InvalidEncoding("bad point flag")),
                };
                if !self.curve.mul(&pt, &self.n).is_infinity() {
                    return Err(PheError::InvalidEncoding("point outside the order-N subgroup"));
                }
                let ct = self.ct(Elem::G(pt));
                if ct.to_bytes() != bytes {
                    return Err(PheError::InvalidEncoding("non-canonical point"));
                }
                Ok(ct)
            }
            Some(Level::Two) => {
                let z = f.from_bytes2(body).ok_or(PheError::InvalidEncoding("bad F_p² element"))?;
                let norm = f.add(&f.sqr(&z.re), &f.sqr(&z.im));
                if !norm.is_one() || !self.gt_pow(&z, &self.n).is_one() {
                    return Err(PheError::InvalidEncoding("element outside the order-N subgroup"));
                }
                Ok(self.ct(Elem::T(z)))
            }
            None => Err(PheError::InvalidEncoding("bad level byte")),
        }
    }

    fn decrypt(&self, sk: &BgnSecretKey, c: &BgnCiphertext) -> Result<i64, PheError> {
        let t = self.tables(sk);
        let found = match self.strip(sk, c) {
            Elem::G(p) => self.dlog1(t, &p),
            Elem::T(z) => self.dlog2(t, &z),
        };
        found.ok_or(PheError::DecryptOutOfRange { bound: self.bound })
    }

    fn fingerprint(&self, sk: &BgnSecretKey, c: &BgnCiphertext) -> Vec<u8> {
        let mut out = vec![c.level() as u8];
        out.extend(encode_elem(&self.strip(sk, c), self.width));
        out
    }

    fn tag_for(&self, sk: &BgnSecretKey, level: Level, m: i64) -> Vec<u8> {
        let t = self.tables(sk);
        let elem = match level {
            Level::One => Elem::G(self.point_scale(&t.base1, m)),
            Level::Two => Elem::T(self.gt_scale(&t.base2, m)),
        };
        let mut out = vec![level as u8];
        out.extend(encode_elem(&elem, self.width));
        out
    }
}
