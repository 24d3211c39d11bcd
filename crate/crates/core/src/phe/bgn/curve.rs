//! The supersingular curve y² = x³ + x over F_p and its symmetric Tate pairing.
//!
//! For p ≡ 3 (mod 4) the curve has p + 1 points and embedding degree 2. The
//! distortion map ψ(x, y) = (−x, i·y) sends a point to a linearly independent
//! one over F_p², which makes the reduced Tate pairing ê(P, ψ(Q)) a symmetric,
//! non-degenerate bilinear map on the order-N subgroup.

use num_bigint::BigUint;
use num_traits::{One, Zero};

use super::field::{Fp, Fp2};

/// Affine point; `None` is the point at infinity.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Point(pub Option<(BigUint, BigUint)>);

impl Point {
    pub const INFINITY: Point = Point(None);

    pub fn is_infinity(&self) -> bool {
        self.0.is_none()
    }
}

#[derive(Clone, Debug)]
struct Jacobian {
    x: BigUint,
    y: BigUint,
    z: BigUint,
}

impl Jacobian {
    fn infinity() -> Self {
        Jacobian { x: BigUint::one(), y: BigUint::one(), z: BigUint::zero() }
    }

    fn from_affine(p: &Point) -> Self {
        match &p.0 {
            None => Self::infinity(),
            Some((x, y)) => Jacobian { x: x.clone(), y: y.clone(), z: BigUint::one() },
        }
    }

    fn is_infinity(&self) -> bool {
        self.z.is_zero()
    }
}

/// Curve context bound to one field.
#[derive(Clone, Debug)]
pub struct Curve {
    pub f: Fp,
}

impl Curve {
    pub fn new(f: Fp) -> Self {
        Curve { f }
    }

    pub fn is_on_curve(&self, p: &Point) -> bool {
        match &p.0 {
            None => true,
            Some((x, y)) => {
                let f = &self.f;
                let rhs = f.add(&f.mul(&f.sqr(x), x), x);
                f.sqr(y) == rhs
            }
        }
    }

    /// The point with abscissa `x` and a square root of `x³ + x`, if any.
    pub fn lift_x(&self, x: &BigUint) -> Option<Point> {
        let f = &self.f;
        let x = f.reduce(x);
        let rhs = f.add(&f.mul(&f.sqr(&x), &x), &x);
        f.sqrt(&rhs).map(|y| Point(Some((x, y))))
    }

    pub fn neg(&self, p: &Point) -> Point {
        Point(p.0.as_ref().map(|(x, y)| (x.clone(), self.f.neg(y))))
    }

    fn double_jac(&self, t: &Jacobian) -> Jacobian {
        let f = &self.f;
        if t.is_infinity() || t.y.is_zero() {
            return Jacobian::infinity();
        }
        let yy = f.sqr(&t.y);
        let zz = f.sqr(&t.z);
        let s = f.small(&f.mul(&t.x, &yy), 4);
        let m = f.add(&f.small(&f.sqr(&t.x), 3), &f.sqr(&zz));
        let x3 = f.sub(&f.sqr(&m), &f.dbl(&s));
        let y3 = f.sub(&f.mul(&m, &f.sub(&s, &x3)), &f.small(&f.sqr(&yy), 8));
        let z3 = f.dbl(&f.mul(&t.y, &t.z));
        Jacobian { x: x3, y: y3, z: z3 }
    }

    fn add_mixed(&self, t: &Jacobian, q: &Point) -> Jacobian {
        let f = &self.f;
        let Some((qx, qy)) = &q.0 else {
            return t.clone();
        };
        if t.is_infinity() {
            return Jacobian::from_affine(q);
        }
        let zz = f.sqr(&t.z);
        let u2 = f.mul(qx, &zz);
        let s2 = f.mul(qy, &f.mul(&zz, &t.z));
        let h = f.sub(&u2, &t.x);
        let r = f.sub(&s2, &t.y);
        if h.is_zero() {
            return if r.is_zero() { self.double_jac(t) } else { Jacobian::infinity() };
        }
        let hh = f.sqr(&h);
        let hhh = f.mul(&hh, &h);
        let v = f.mul(&t.x, &hh);
        let x3 = f.sub(&f.sub(&f.sqr(&r), &hhh), &f.dbl(&v));
        let y3 = f.sub(&f.mul(&r, &f.sub(&v, &x3)), &f.mul(&t.y, &hhh));
        let z3 = f.mul(&t.z, &h);
        Jacobian { x: x3, y: y3, z: z3 }
    }

    fn to_affine(&self, t: &Jacobian) -> Point {
        if t.is_infinity() {
            return Point::INFINITY;
        }
        let zi = self.f.inv(&t.z);
        self.scale_affine(t, &zi)
    }

    fn scale_affine(&self, t: &Jacobian, zi: &BigUint) -> Point {
        let f = &self.f;
        let zi2 = f.sqr(zi);
        Point(Some((f.mul(&t.x, &zi2), f.mul(&t.y, &f.mul(&zi2, zi)))))
    }

    fn batch_to_affine(&self, ts: &[Jacobian]) -> Vec<Point> {
        let finite: Vec<BigUint> = ts.iter().filter(|t| !t.is_infinity()).map(|t| t.z.clone()).collect();
        let mut inv = self.f.batch_inv(&finite).into_iter();
        ts.iter()
            .map(|t| if t.is_infinity() { Point::INFINITY } else { self.scale_affine(t, &inv.next().unwrap()) })
            .collect()
    }

    pub fn add(&self, a: &Point, b: &Point) -> Point {
        self.to_affine(&self.add_mixed(&Jacobian::from_affine(a), b))
    }

    pub fn double(&self, a: &Point) -> Point {
        self.to_affine(&self.double_jac(&Jacobian::from_affine(a)))
    }

    pub fn mul(&self, p: &Point, k: &BigUint) -> Point {
        if p.is_infinity() || k.is_zero() {
            return Point::INFINITY;
        }
        let mut acc = Jacobian::infinity();
        for i in (0..k.bits()).rev() {
            acc = self.double_jac(&acc);
            if k.bit(i) {
                acc = self.add_mixed(&acc, p);
            }
        }
        self.to_affine(&acc)
    }

    /// `[p, 2p, ..., count·p]`, normalised together.
    pub fn multiples(&self, p: &Point, count: usize) -> Vec<Point> {
        self.progression(&Point::INFINITY, p, count + 1).split_off(1)
    }

    /// `[start, start + step, ..., start + (count − 1)·step]`, normalised
    /// together.
    pub fn progression(&self, start: &Point, step: &Point, count: usize) -> Vec<Point> {
        let mut jac = Vec::with_capacity(count);
        let mut acc = Jacobian::from_affine(start);
        for i in 0..count {
            if i > 0 {
                acc = self.add_mixed(&acc, step);
            }
            jac.push(acc.clone());
        }
        self.batch_to_affine(&jac)
    }

    pub fn sum<'a>(&self, points: impl IntoIterator<Item = &'a Point>) -> Point {
        let mut acc = Jacobian::infinity();
        for p in points {
            acc = self.add_mixed(&acc, p);
        }
        self.to_affine(&acc)
    }

    /// Doubles T and returns the tangent at T evaluated at ψ(Q), scaled by
    /// 2·Y·Z³ so that it needs no inversion.
    fn tangent_step(&self, t: &Jacobian, qx: &BigUint, qy: &BigUint) -> (Jacobian, Fp2) {
        let f = &self.f;
        let zz = f.sqr(&t.z);
        let yy = f.sqr(&t.y);
        let m = f.add(&f.small(&f.sqr(&t.x), 3), &f.sqr(&zz));
        let z3 = f.dbl(&f.mul(&t.y, &t.z));
        let re = f.sub(&f.mul(&m, &f.add(&f.mul(&zz, qx), &t.x)), &f.dbl(&yy));
        let im = f.mul(&f.mul(&z3, &zz), qy);

        let s = f.small(&f.mul(&t.x, &yy), 4);
        let x3 = f.sub(&f.sqr(&m), &f.dbl(&s));
        let y3 = f.sub(&f.mul(&m, &f.sub(&s, &x3)), &f.small(&f.sqr(&yy), 8));
        (Jacobian { x: x3, y: y3, z: z3 }, Fp2 { re, im })
    }

    /// Reduced Tate pairing ê(P, ψ(Q)) of order-`n` points, where
    /// `final_exp = (p + 1) / n`.
    pub fn tate(&self, p: &Point, q: &Point, n: &BigUint, cofactor: &BigUint) -> Fp2 {
        let (Some((px, py)), Some((qx, qy))) = (&p.0, &q.0) else {
            return Fp2::one();
        };
        let f = &self.f;
        let mut acc = Fp2::one();
        let mut t = Jacobian::from_affine(p);
        for i in (0..n.bits() - 1).rev() {
            if t.is_infinity() {
                // Only reachable when ord(P) is a proper divisor of n; every
                // remaining line function is trivial.
                acc = f.sqr2(&acc);
                if n.bit(i) {
                    t = Jacobian::from_affine(p);
                }
                continue;
            }
            let (next, line) = self.tangent_step(&t, qx, qy);
            acc = f.mul2(&f.sqr2(&acc), &line);
            t = next;

            if n.bit(i) {
                let zz = f.sqr(&t.z);
                let h = f.sub(&f.mul(px, &zz), &t.x);
                let r = f.sub(&f.mul(py, &f.mul(&zz, &t.z)), &t.y);
                if h.is_zero() {
                    if r.is_zero() {
                        let (next, line) = self.tangent_step(&t, qx, qy);
                        acc = f.mul2(&acc, &line);
                        t = next;
                    } else {
                        // T = −P: the chord is vertical and lies in F_p, which
                        // the final exponentiation kills.
                        t = Jacobian::infinity();
                    }
                    continue;
                }
                let zh = f.mul(&t.z, &h);
                let re = f.sub(&f.mul(&r, &f.add(qx, px)), &f.mul(&zh, py));
                let im = f.mul(&zh, qy);
                acc = f.mul2(&acc, &Fp2 { re, im });

                let hh = f.sqr(&h);
                let hhh = f.mul(&hh, &h);
                let v = f.mul(&t.x, &hh);
                let x3 = f.sub(&f.sub(&f.sqr(&r), &hhh), &f.dbl(&v));
                let y3 = f.sub(&f.mul(&r, &f.sub(&v, &x3)), &f.mul(&t.y, &hhh));
                t = Jacobian { x: x3, y: y3, z: zh };
            }
        }
        // acc^((p² − 1)/n) = (conj(acc)/acc)^((p + 1)/n)
        let unitary = f.mul2(&f.conj2(&acc), &f.inv2(&acc));
        f.pow2(&unitary, cofactor)
    }
}
