//! Encrypt-then-Sign signatures over pseudo identities.
//!
//! A contributor holding `(sk1, sk2)` signs the concatenated ciphertext vector
//! `D` as `σ = sk1 + h(D)·sk2`. Anyone can check
//!
//! ```text
//! ê(σ, g2) = ê(pid1, P1) · ê(h(D)·H(pid2), P2)
//! ```
//!
//! and, for n signatures at once, the product form
//!
//! ```text
//! ê(Σσ_i, g2) = ê(Σpid1_i, P1) · ê(Σ h(D_i)·H(pid2_i), P2)
//! ```
//!
//! which costs three pairings regardless of n. No random small exponents are
//! mixed in, so colluding signers could in principle craft invalid signatures
//! whose errors cancel in the sum; that attack is outside the threat model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identity::{PseudoIdentity, SigningKeyPair, SystemParams};
use crate::metrics::Counter;
use crate::pairing::{hash_to_scalar, pair, G1Elem};
use crate::phe::PheCiphertext;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature(pub G1Elem);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IbsError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("index {0} is not on the bulletin board")]
    UnknownIndex(usize),
}

/// `⟨PID, D, σ⟩`: one submission.
#[derive(Clone, Debug, PartialEq)]
pub struct DataTuple<C> {
    pub pid: PseudoIdentity,
    pub schema: Vec<u8>,
    pub ciphertexts: Vec<C>,
    pub sigma: Signature,
}

/// The signed message for a ciphertext vector: the schema tag (u16 length
/// prefix) followed by every ciphertext encoding in declared order.
pub fn d_concat<C: PheCiphertext>(schema: &[u8], ciphertexts: &[C]) -> Vec<u8> {
    let mut out = Vec::with_capacity(2 + schema.len() + ciphertexts.len() * 64);
    out.extend_from_slice(&(schema.len() as u16).to_be_bytes());
    out.extend_from_slice(schema);
    for c in ciphertexts {
        out.extend(c.to_bytes());
    }
    out
}

impl<C: PheCiphertext> DataTuple<C> {
    /// Encrypt-then-Sign: signs the already encrypted vector.
    pub fn seal(
        params: &SystemParams,
        pid: PseudoIdentity,
        keys: &SigningKeyPair,
        schema: &[u8],
        ciphertexts: Vec<C>,
    ) -> Self {
        let sigma = sign(params, keys, &d_concat(schema, &ciphertexts));
        DataTuple { pid, schema: schema.to_vec(), ciphertexts, sigma }
    }

    pub fn message(&self) -> Vec<u8> {
        d_concat(&self.schema, &self.ciphertexts)
    }
}

pub fn sign(params: &SystemParams, keys: &SigningKeyPair, msg: &[u8]) -> Signature {
    let h = hash_to_scalar(params.digest, msg);
    Signature(keys.sk1 + keys.sk2 * h)
}

/// `σ = Σσ_i` over the listed board indexes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateSignature {
    pub sigma: G1Elem,
    pub indexes: Vec<usize>,
}

pub fn aggregate<'a>(members: impl IntoIterator<Item = (usize, &'a Signature)>) -> AggregateSignature {
    let mut sigma = G1Elem::identity();
    let mut indexes = Vec::new();
    for (i, s) in members {
        sigma += s.0;
        indexes.push(i);
    }
    AggregateSignature { sigma, indexes }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyCounts {
    pub pairings: u64,
    pub hashes_to_g1: u64,
    pub exponentiations: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PreparedSignature {
    sigma: G1Elem,
    pid1: G1Elem,
    hashed: G1Elem,
}

/// Signature verifier bound to published parameters, with operation counters.
pub struct Verifier<'p> {
    params: &'p SystemParams,
    pairings: Counter,
    hashes: Counter,
    exps: Counter,
}

impl<'p> Verifier<'p> {
    pub fn new(params: &'p SystemParams) -> Self {
        Verifier { params, pairings: Counter::default(), hashes: Counter::default(), exps: Counter::default() }
    }

    pub fn counts(&self) -> VerifyCounts {
        VerifyCounts {
            pairings: self.pairings.get(),
            hashes_to_g1: self.hashes.get(),
            exponentiations: self.exps.get(),
        }
    }

    pub fn reset(&self) {
        self.pairings.reset();
        self.hashes.reset();
        self.exps.reset();
    }

    fn hashed_term(&self, pid: &PseudoIdentity, msg: &[u8]) -> G1Elem {
        self.hashes.incr();
        self.exps.incr();
        pid.hashed_pid2() * hash_to_scalar(self.params.digest, msg)
    }

    fn check(&self, sigma: G1Elem, pid1_sum: G1Elem, hashed_sum: G1Elem) -> bool {
        self.pairings.add(3);
        let p = self.params;
        pair(&sigma, &p.g2()) == pair(&pid1_sum, &p.p1) + pair(&hashed_sum, &p.p2)
    }

    pub fn verify_single(&self, pid: &PseudoIdentity, msg: &[u8], sigma: &Signature) -> bool {
        let hashed = self.hashed_term(pid, msg);
        self.check(sigma.0, pid.pid1, hashed)
    }

    pub fn verify_tuple<C: PheCiphertext>(&self, t: &DataTuple<C>) -> bool {
        self.verify_single(&t.pid, &t.message(), &t.sigma)
    }

    /// First-layer batch verification: one equation for all members.
    pub fn verify_batch<'a, I>(&self, items: I) -> Result<bool, IbsError>
    where
        I: IntoIterator<Item = (&'a PseudoIdentity, &'a [u8], &'a Signature)>,
    {
        let mut sigma = G1Elem::identity();
        let mut pid1 = G1Elem::identity();
        let mut hashed = G1Elem::identity();
        let mut n = 0usize;
        for (pid, msg, sig) in items {
            sigma += sig.0;
            pid1 += pid.pid1;
            hashed += self.hashed_term(pid, msg);
            n += 1;
        }
        if n == 0 {
            return Err(IbsError::EmptyBatch);
        }
        Ok(self.check(sigma, pid1, hashed))
    }

    /// Computes the per-signature terms of the verification equation once, so
    /// that repeated batch checks over overlapping ranges cost only group
    /// additions and three pairings.
    pub fn prepare(&self, pid: &PseudoIdentity, msg: &[u8], sigma: &Signature) -> PreparedSignature {
        PreparedSignature { sigma: sigma.0, pid1: pid.pid1, hashed: self.hashed_term(pid, msg) }
    }

    pub fn verify_prepared(&self, items: &[PreparedSignature]) -> Result<bool, IbsError> {
        if items.is_empty() {
            return Err(IbsError::EmptyBatch);
        }
        let mut acc = [G1Elem::identity(); 3];
        for p in items {
            acc[0] += p.sigma;
            acc[1] += p.pid1;
            acc[2] += p.hashed;
        }
        Ok(self.check(acc[0], acc[1], acc[2]))
    }

    pub fn verify_tuples<C: PheCiphertext>(&self, tuples: &[&DataTuple<C>]) -> Result<bool, IbsError> {
        let msgs: Vec<Vec<u8>> = tuples.iter().map(|t| t.message()).collect();
        self.verify_batch(tuples.iter().zip(&msgs).map(|(t, m)| (&t.pid, m.as_slice(), &t.sigma)))
    }

    /// Second-layer verification of an aggregate whose indexes are resolved
    /// to `(PID, D)` pairs by `resolve`.
    pub fn verify_aggregate<F>(&self, agg: &AggregateSignature, resolve: F) -> Result<bool, IbsError>
    where
        F: Fn(usize) -> Option<(PseudoIdentity, Vec<u8>)>,
    {
        if agg.indexes.is_empty() {
            return Err(IbsError::EmptyBatch);
        }
        let mut pid1 = G1Elem::identity();
        let mut hashed = G1Elem::identity();
        for &i in &agg.indexes {
            let (pid, msg) = resolve(i).ok_or(IbsError::UnknownIndex(i))?;
            pid1 += pid.pid1;
            hashed += self.hashed_term(&pid, &msg);
        }
        Ok(self.check(agg.sigma, pid1, hashed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::{MasterKeys, RcConfig, RcStorage, RegistrationCenter, Rid};
    use crate::phe::transparent::{ClearCiphertext, Transparent};
    use crate::phe::HomomorphicScheme;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::sync::Arc;

    fn setup(n: usize) -> (RegistrationCenter<Transparent>, Vec<DataTuple<ClearCiphertext>>) {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let (phe, sk) = Transparent::new(1 << 20);
        let rc = RegistrationCenter::new(
            MasterKeys::generate(&mut rng),
            Arc::new(phe),
            sk,
            RcConfig::default(),
            RcStorage::in_memory(),
        )
        .unwrap();
        let tuples = (0..n)
            .map(|i| {
                let rid = Rid::random(&mut rng);
                rc.register(rid, "pw", &mut rng).unwrap();
                let (pid, keys) = rc.issue_credentials(&rid, "pw", &mut rng).unwrap();
                let cts = vec![rc.phe().encrypt(i as i64, &mut rng).unwrap()];
                DataTuple::seal(rc.params(), pid, &keys, b"test/v1", cts)
            })
            .collect();
        (rc, tuples)
    }

    #[test]
    fn single_and_batch_agree_on_honest_and_corrupted() {
        let (rc, mut tuples) = setup(6);
        let v = Verifier::new(rc.params());
        assert!(tuples.iter().all(|t| v.verify_tuple(t)));
        let refs: Vec<_> = tuples.iter().collect();
        v.reset();
        assert_eq!(v.verify_tuples(&refs), Ok(true));
        assert_eq!(v.counts(), VerifyCounts { pairings: 3, hashes_to_g1: 6, exponentiations: 6 });

        tuples[2].ciphertexts[0].value += 1;
        assert!(!v.verify_tuple(&tuples[2]));
        let refs: Vec<_> = tuples.iter().collect();
        assert_eq!(v.verify_tuples(&refs), Ok(false));
        assert_eq!(v.verify_tuples::<ClearCiphertext>(&[]), Err(IbsError::EmptyBatch));
    }

    #[test]
    fn signature_binds_pid_and_schema() {
        let (rc, tuples) = setup(2);
        let v = Verifier::new(rc.params());
        let mut swapped = tuples[0].clone();
        swapped.pid = tuples[1].pid;
        assert!(!v.verify_tuple(&swapped));
        let mut reschema = tuples[0].clone();
        reschema.schema = b"test/v2".to_vec();
        assert!(!v.verify_tuple(&reschema));
        let empty = DataTuple::<ClearCiphertext> { ciphertexts: vec![], ..tuples[0].clone() };
        assert!(!v.verify_tuple(&empty));
    }

    #[test]
    fn aggregate_roundtrip() {
        let (rc, tuples) = setup(5);
        let v = Verifier::new(rc.params());
        let resolve = |i: usize| tuples.get(i).map(|t| (t.pid, t.message()));
        let agg = aggregate([1usize, 3, 4].iter().map(|&i| (i, &tuples[i].sigma)));
        assert_eq!(v.verify_aggregate(&agg, resolve), Ok(true));
        let single = aggregate([(2usize, &tuples[2].sigma)]);
        assert_eq!(single.sigma, tuples[2].sigma.0);
        let mut bad = agg.clone();
        bad.indexes[0] = 0;
        assert_eq!(v.verify_aggregate(&bad, resolve), Ok(false));
        bad.indexes[0] = 99;
        assert_eq!(v.verify_aggregate(&bad, resolve), Err(IbsError::UnknownIndex(99)));
    }

    #[test]
    fn prepared_terms_give_the_same_verdicts() {
        let (rc, mut tuples) = setup(5);
        tuples[3].sigma = tuples[1].sigma;
        let v = Verifier::new(rc.params());
        let prepared: Vec<_> = tuples.iter().map(|t| v.prepare(&t.pid, &t.message(), &t.sigma)).collect();
        v.reset();
        assert_eq!(v.verify_prepared(&prepared), Ok(false));
        assert_eq!(v.verify_prepared(&prepared[..3]), Ok(true));
        assert_eq!(v.verify_prepared(&prepared[3..4]), Ok(false));
        assert_eq!(v.counts(), VerifyCounts { pairings: 9, hashes_to_g1: 0, exponentiations: 0 });
        assert_eq!(v.verify_prepared(&[]), Err(IbsError::EmptyBatch));
    }
}
