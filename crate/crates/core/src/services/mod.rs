//! Data services run by the service provider over encrypted submissions, and
//! the checks a consumer runs on what comes back.
//!
//! * [`matching`]: fine-grained profile matching by squared Euclidean
//!   distance against a threshold δ.
//! * [`fitting`]: multivariate Gaussian fitting (mean vector and covariance
//!   matrix) in exact rational arithmetic.
//!
//! Every service declares a versioned [`Schema`] whose tag is hashed into the
//! signed message, so a signature binds the ciphertext-vector layout.

pub mod fitting;
pub mod matching;

use std::collections::HashSet;
use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ibs::{AggregateSignature, DataTuple, IbsError, Verifier};
use crate::identity::{IdentityError, PseudoIdentity, RegistrationCenter};
use crate::pairing::G1_LEN;
use crate::phe::{HomomorphicScheme, Level, PheCiphertext, PheError};

/// Decryption-quota names used on the bulletin board.
pub const MATCHING_SERVICE: &str = "matching";
pub const FITTING_SERVICE: &str = "fitting";
pub const REFIT_SERVICE: &str = "fitting-refit";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceKind {
    Matching,
    Fitting,
}

impl fmt::Display for ServiceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ServiceKind::Matching => "matching",
            ServiceKind::Fitting => "fitting",
        })
    }
}

/// Ciphertext-vector layout of one service at a fixed attribute count β.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub kind: ServiceKind,
    pub beta: usize,
}

impl Schema {
    pub fn matching(beta: usize) -> Self {
        Schema { kind: ServiceKind::Matching, beta }
    }

    pub fn fitting(beta: usize) -> Self {
        Schema { kind: ServiceKind::Fitting, beta }
    }

    pub fn tag(&self) -> Vec<u8> {
        format!("tpdm/{}/v1/beta={}", self.kind, self.beta).into_bytes()
    }

    /// `2β` for matching, `β + β(β+1)/2` for fitting.
    pub fn vector_len(&self) -> usize {
        match self.kind {
            ServiceKind::Matching => 2 * self.beta,
            ServiceKind::Fitting => self.beta + self.beta * (self.beta + 1) / 2,
        }
    }

    /// Rejects a tuple whose tag, length or ciphertext levels do not fit.
    pub fn check<C: PheCiphertext>(&self, t: &DataTuple<C>) -> Result<(), ServiceError> {
        if t.schema != self.tag() {
            return Err(ServiceError::Schema(format!(
                "tag {:?}, expected {:?}",
                String::from_utf8_lossy(&t.schema),
                String::from_utf8_lossy(&self.tag())
            )));
        }
        if t.ciphertexts.len() != self.vector_len() {
            return Err(ServiceError::Schema(format!(
                "{} ciphertexts, expected {}",
                t.ciphertexts.len(),
                self.vector_len()
            )));
        }
        if t.ciphertexts.iter().any(|c| c.level() != Level::One) {
            return Err(ServiceError::Schema("submissions must be level-1 ciphertexts".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("rating {value} at attribute {index} outside [0, {theta}]")]
    RatingOutOfRange { index: usize, value: i64, theta: u64 },
    #[error("expected {expected} attributes, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("worst-case sum {worst} exceeds the plaintext bound {bound}")]
    FanIn { worst: u128, bound: u64 },
    #[error("pseudo identity already used in this session")]
    DuplicatePid,
    #[error("nothing to process")]
    Empty,
    #[error(transparent)]
    Phe(#[from] PheError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Ibs(#[from] IbsError),
}

/// One contributor's ratings `u_1..u_β`, each in `[0, θ]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    ratings: Vec<i64>,
}

impl Profile {
    pub fn new(ratings: Vec<i64>, theta: u64) -> Result<Self, ServiceError> {
        for (index, &value) in ratings.iter().enumerate() {
            if value < 0 || value as u64 > theta {
                return Err(ServiceError::RatingOutOfRange { index, value, theta });
            }
        }
        Ok(Profile { ratings })
    }

    pub fn ratings(&self) -> &[i64] {
        &self.ratings
    }

    pub fn beta(&self) -> usize {
        self.ratings.len()
    }
}

/// Refuses a session whose worst-case homomorphic sum could leave `[-T, T]`.
pub fn check_fan_in(worst: u128, bound: u64) -> Result<(), ServiceError> {
    if worst > bound as u128 {
        return Err(ServiceError::FanIn { worst, bound });
    }
    Ok(())
}

/// The provider's intake: schema validation plus the per-session duplicate
/// check on `pid1`.
pub struct SubmissionBox<C> {
    schema: Schema,
    seen: HashSet<[u8; G1_LEN]>,
    tuples: Vec<DataTuple<C>>,
}

impl<C: PheCiphertext> SubmissionBox<C> {
    pub fn new(schema: Schema) -> Self {
        SubmissionBox { schema, seen: HashSet::new(), tuples: Vec::new() }
    }

    /// Accepts a tuple and returns its board index.
    pub fn accept(&mut self, tuple: DataTuple<C>) -> Result<usize, ServiceError> {
        self.schema.check(&tuple)?;
        if !self.seen.insert(tuple.pid.pid1.to_bytes()) {
            return Err(ServiceError::DuplicatePid);
        }
        self.tuples.push(tuple);
        Ok(self.tuples.len() - 1)
    }

    pub fn schema(&self) -> Schema {
        self.schema
    }

    pub fn tuples(&self) -> &[DataTuple<C>] {
        &self.tuples
    }

    pub fn pids(&self) -> Vec<PseudoIdentity> {
        self.tuples.iter().map(|t| t.pid).collect()
    }

    pub fn into_tuples(self) -> Vec<DataTuple<C>> {
        self.tuples
    }
}

/// `ε = 1 − (1 − p)^c`: chance that `c` uniform checks catch at least one
/// corrupted item when a fraction `p` is corrupted.
pub fn detection_probability(p: f64, checks: usize) -> f64 {
    1.0 - (1.0 - p).powi(checks as i32)
}

/// Seeded choice of `min(count, population.len())` distinct members, in
/// population order.
pub fn sample_members(population: &[usize], count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let k = count.min(population.len());
    let mut picks: Vec<usize> = sample(&mut rng, population.len(), k).into_iter().collect();
    picks.sort_unstable();
    picks.into_iter().map(|i| population[i]).collect()
}

/// What the consumer can see and ask for while checking an outcome: the
/// registration center's cache lookups, the board's PID list and a verifier.
///
/// Tuples it has already authenticated are remembered by digest, so asking for
/// the same tuple twice costs one signature check.
pub struct Consumer<'a, S: HomomorphicScheme> {
    pub rc: &'a RegistrationCenter<S>,
    pub session: &'a str,
    pub verifier: Verifier<'a>,
    pids: Vec<PseudoIdentity>,
    authenticated: HashSet<[u8; 32]>,
}

impl<'a, S: HomomorphicScheme> Consumer<'a, S> {
    pub fn new(rc: &'a RegistrationCenter<S>, session: &'a str) -> Self {
        let pids = rc.board().pids(session).map(|p| p.to_vec()).unwrap_or_default();
        Consumer { rc, session, verifier: Verifier::new(rc.params()), pids, authenticated: HashSet::new() }
    }

    pub fn pid(&self, index: usize) -> Option<&PseudoIdentity> {
        self.pids.get(index)
    }

    fn tuple_digest(t: &DataTuple<S::Ciphertext>) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(t.pid.to_bytes());
        h.update(t.message());
        h.update(t.sigma.0.to_bytes());
        h.finalize().into()
    }

    /// Checks that each forwarded tuple carries the PID posted at its board
    /// index and a valid signature. Fresh tuples are batch-verified together.
    pub fn authenticate(&mut self, tuples: &[(usize, &DataTuple<S::Ciphertext>)]) -> bool {
        let mut fresh = Vec::new();
        let mut digests = Vec::new();
        for &(i, t) in tuples {
            if self.pids.get(i) != Some(&t.pid) {
                return false;
            }
            let d = Self::tuple_digest(t);
            if !self.authenticated.contains(&d) {
                fresh.push(t);
                digests.push(d);
            }
        }
        if fresh.is_empty() {
            return true;
        }
        if self.verifier.verify_tuples(&fresh).unwrap_or(false) {
            self.authenticated.extend(digests);
            true
        } else {
            false
        }
    }

    /// Second-layer check of forwarded tuples against an aggregate signature
    /// over exactly their indexes. On success the tuples count as
    /// authenticated for later requests.
    pub fn authenticate_aggregate(
        &mut self,
        agg: &AggregateSignature,
        tuples: &[(usize, &DataTuple<S::Ciphertext>)],
    ) -> Result<bool, ServiceError> {
        if agg.indexes.len() != tuples.len() || agg.indexes.iter().zip(tuples).any(|(a, (i, _))| a != i) {
            return Ok(false);
        }
        let mut by_index = std::collections::HashMap::new();
        for &(i, t) in tuples {
            if self.pids.get(i) != Some(&t.pid) {
                return Ok(false);
            }
            by_index.insert(i, t);
        }
        let ok = self.verifier.verify_aggregate(agg, |i| by_index.get(&i).map(|t| (t.pid, t.message())))?;
        if ok {
            self.authenticated.extend(tuples.iter().map(|(_, t)| Self::tuple_digest(t)));
        }
        Ok(ok)
    }

    pub fn lookup(&self, service: &str, c: &S::Ciphertext) -> Result<Option<i64>, ServiceError> {
        match self.rc.lookup(self.session, service, c) {
            Ok(v) => Ok(Some(v)),
            Err(IdentityError::CacheMiss) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}
