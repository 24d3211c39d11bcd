//! Profile matching by squared Euclidean distance.
//!
//! A contributor submits `(E(u_j), E(u_j²))` per attribute. The consumer's
//! query carries `(E(v_j²), E(−2v_j))`. After padding both sides to three
//! entries with `E(1)`,
//!
//! ```text
//! consumer:    (E(v²),  E(−2v), E(1) )
//! contributor: (E(1),   E(u),   E(u²))
//! ```
//!
//! the homomorphic dot product gives `R_j = E((u_j − v_j)²)` at level 2, and
//! `R = ⊕_j R_j` encrypts `f²`. Contributor `i` matches when `f² < δ²`.
//!
//! The consumer can recompute the same plaintext without any multiplication,
//! since the consumer knows `v` in the clear:
//! `E(v_j²) ⊕ E(u_j)^{−2v_j} ⊕ E(u_j²)`.

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use super::{check_fan_in, sample_members, Consumer, Profile, Schema, ServiceError, MATCHING_SERVICE};
use crate::ibs::{aggregate, AggregateSignature, DataTuple};
use crate::identity::RegistrationCenter;
use crate::phe::{Evaluator, HomomorphicScheme, OpCounts};

/// `β·θ²`, the largest similarity a session can produce.
pub fn worst_case_sum(beta: usize, theta: u64) -> u128 {
    beta as u128 * (theta as u128) * (theta as u128)
}

pub fn check_session(beta: usize, theta: u64, bound: u64) -> Result<(), ServiceError> {
    check_fan_in(worst_case_sum(beta, theta), bound)
}

/// `[E(u_1), E(u_1²), …, E(u_β), E(u_β²)]`.
pub fn encode_profile_matching<S: HomomorphicScheme, R: RngCore + ?Sized>(
    eval: &Evaluator<'_, S>,
    profile: &Profile,
    rng: &mut R,
) -> Result<Vec<S::Ciphertext>, ServiceError> {
    let mut out = Vec::with_capacity(2 * profile.beta());
    for &u in profile.ratings() {
        out.push(eval.encrypt(u, rng)?);
        out.push(eval.encrypt(u * u, rng)?);
    }
    Ok(out)
}

/// The consumer's encrypted query `D_0` with threshold δ.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchingQuery<C> {
    pub d0: Vec<C>,
    pub delta: u64,
}

impl<C> MatchingQuery<C> {
    pub fn beta(&self) -> usize {
        self.d0.len() / 2
    }
}

/// `[E(v_1²), E(−2v_1), …]`.
pub fn make_query<S: HomomorphicScheme, R: RngCore + ?Sized>(
    eval: &Evaluator<'_, S>,
    v: &Profile,
    delta: u64,
    rng: &mut R,
) -> Result<MatchingQuery<S::Ciphertext>, ServiceError> {
    let mut d0 = Vec::with_capacity(2 * v.beta());
    for &x in v.ratings() {
        d0.push(eval.encrypt(x * x, rng)?);
        d0.push(eval.encrypt(-2 * x, rng)?);
    }
    Ok(MatchingQuery { d0, delta })
}

/// `R_i`: the level-2 encryption of `Σ_j (u_ij − v_j)²`, using exactly 3β
/// multiplications.
pub fn similarity<S: HomomorphicScheme>(
    eval: &Evaluator<'_, S>,
    ci: &[S::Ciphertext],
    d0: &[S::Ciphertext],
) -> Result<S::Ciphertext, ServiceError> {
    if ci.len() != d0.len() || ci.is_empty() || ci.len() % 2 != 0 {
        return Err(ServiceError::WrongLength { expected: d0.len(), got: ci.len() });
    }
    let one = eval.scheme.one();
    let mut total: Option<S::Ciphertext> = None;
    for (c, d) in ci.chunks_exact(2).zip(d0.chunks_exact(2)) {
        let consumer = [&d[0], &d[1], &one];
        let contributor = [&one, &c[0], &c[1]];
        for (a, b) in consumer.into_iter().zip(contributor) {
            let term = eval.mul(a, b)?;
            total = Some(match total {
                None => term,
                Some(t) => eval.add(&t, &term)?,
            });
        }
    }
    Ok(total.expect("at least one attribute"))
}

/// The consumer's multiplication-free recomputation at level 1.
pub fn cheap_similarity<S: HomomorphicScheme>(
    eval: &Evaluator<'_, S>,
    ci: &[S::Ciphertext],
    query: &MatchingQuery<S::Ciphertext>,
    v: &Profile,
) -> Result<S::Ciphertext, ServiceError> {
    if ci.len() != 2 * v.beta() || query.d0.len() != ci.len() {
        return Err(ServiceError::WrongLength { expected: 2 * v.beta(), got: ci.len() });
    }
    let mut total: Option<S::Ciphertext> = None;
    for (j, &vj) in v.ratings().iter().enumerate() {
        let scaled = eval.scale(&ci[2 * j], -2 * vj);
        let term = eval.add(&eval.add(&query.d0[2 * j], &scaled)?, &ci[2 * j + 1])?;
        total = Some(match total {
            None => term,
            Some(t) => eval.add(&t, &term)?,
        });
    }
    total.ok_or(ServiceError::Empty)
}

/// What the provider returns to the consumer.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchOutcome<C> {
    /// Board indexes `I` with `f² < δ²`, ascending.
    pub matched: Vec<usize>,
    /// `Σσ_i` over `I`; `None` when nobody matched.
    pub aggregate: Option<AggregateSignature>,
    /// The ciphertext vectors of the matched contributors, aligned with
    /// `matched`.
    pub matched_vectors: Vec<Vec<C>>,
    /// `(index, f²)` for every whitelisted contributor outside `I`.
    pub unmatched: Vec<(usize, i64)>,
}

/// Provider side: evaluates every whitelisted tuple, has the registration
/// center decrypt each similarity under the matching quota, and keeps the
/// strict matches.
pub fn run_matching<S: HomomorphicScheme>(
    rc: &RegistrationCenter<S>,
    eval: &Evaluator<'_, S>,
    session: &str,
    schema: Schema,
    whitelist: &[(usize, &DataTuple<S::Ciphertext>)],
    query: &MatchingQuery<S::Ciphertext>,
) -> Result<MatchOutcome<S::Ciphertext>, ServiceError> {
    if query.d0.len() != schema.vector_len() {
        return Err(ServiceError::WrongLength { expected: schema.vector_len(), got: query.d0.len() });
    }
    let delta_sq = query.delta as i128 * query.delta as i128;
    let mut matched = Vec::new();
    let mut matched_vectors = Vec::new();
    let mut sigs = Vec::new();
    let mut unmatched = Vec::new();
    for &(i, t) in whitelist {
        schema.check(t)?;
        let r = similarity(eval, &t.ciphertexts, &query.d0)?;
        let f2 = rc.quota_decrypt(session, MATCHING_SERVICE, &r)?;
        if (f2 as i128) < delta_sq {
            matched.push(i);
            matched_vectors.push(t.ciphertexts.clone());
            sigs.push((i, &t.sigma));
        } else {
            unmatched.push((i, f2));
        }
    }
    let aggregate = if sigs.is_empty() { None } else { Some(aggregate(sigs)) };
    Ok(MatchOutcome { matched, aggregate, matched_vectors, unmatched })
}

/// Second-layer check: the aggregate signature covers exactly the returned
/// matched vectors under the PIDs posted on the board.
pub fn verify_matched_aggregate<S: HomomorphicScheme>(
    consumer: &Consumer<'_, S>,
    schema: Schema,
    outcome: &MatchOutcome<S::Ciphertext>,
) -> Result<bool, ServiceError> {
    let agg = match &outcome.aggregate {
        None => return Ok(outcome.matched.is_empty()),
        Some(a) => a,
    };
    if agg.indexes != outcome.matched || outcome.matched_vectors.len() != outcome.matched.len() {
        return Ok(false);
    }
    let tag = schema.tag();
    let resolve = |i: usize| {
        let pos = outcome.matched.iter().position(|&m| m == i)?;
        let pid = *consumer.pid(i)?;
        Some((pid, crate::ibs::d_concat(&tag, &outcome.matched_vectors[pos])))
    };
    Ok(consumer.verifier.verify_aggregate(agg, resolve)?)
}

/// Seeded completeness sampling: `checks` unmatched indexes are re-examined.
/// `assumed_corruption` is the fraction `p` used for the reported detection
/// probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub checks: usize,
    pub assumed_corruption: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatchFailure {
    /// A claimed match whose recomputed similarity is not cached.
    MatchedUnknown {
        index: usize,
    },
    MatchedNotBelow {
        index: usize,
        f2: i64,
    },
    DuplicateIndex {
        index: usize,
    },
    UnknownIndex {
        index: usize,
    },
    /// The provider could not or would not hand over a sampled tuple.
    MissingTuple {
        index: usize,
    },
    /// A forwarded tuple with the wrong PID or an invalid signature.
    BadTuple {
        index: usize,
    },
    UnmatchedUnknown {
        index: usize,
    },
    ForwardedMismatch {
        index: usize,
        forwarded: i64,
        recomputed: i64,
    },
    UnmatchedBelow {
        index: usize,
        f2: i64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub accepted: bool,
    pub failure: Option<MatchFailure>,
    pub matched_checked: usize,
    pub sampled: Vec<usize>,
    /// `1 − (1 − p)^c` for the plan's `p` and the number of checks made.
    pub detection_probability: f64,
    pub ops: OpCounts,
}

/// Consumer side: correctness over every matched index, then completeness
/// over a seeded sample of unmatched ones. `fetch(i)` asks the provider for
/// the tuple at board index `i`.
#[allow(clippy::too_many_arguments)]
pub fn verify_matching_outcome<S: HomomorphicScheme>(
    consumer: &mut Consumer<'_, S>,
    eval: &Evaluator<'_, S>,
    outcome: &MatchOutcome<S::Ciphertext>,
    query: &MatchingQuery<S::Ciphertext>,
    v: &Profile,
    plan: &SamplePlan,
    fetch: &mut dyn FnMut(usize) -> Option<DataTuple<S::Ciphertext>>,
) -> Result<MatchReport, ServiceError> {
    let before = eval.counts();
    let delta_sq = query.delta as i128 * query.delta as i128;
    let mut report = MatchReport {
        accepted: false,
        failure: None,
        matched_checked: 0,
        sampled: Vec::new(),
        detection_probability: 0.0,
        ops: OpCounts::default(),
    };
    let failure = check_outcome(consumer, eval, outcome, query, v, plan, fetch, delta_sq, &mut report)?;
    report.accepted = failure.is_none();
    report.failure = failure;
    report.detection_probability = super::detection_probability(plan.assumed_corruption, report.sampled.len());
    report.ops = eval.counts() - before;
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn check_outcome<S: HomomorphicScheme>(
    consumer: &mut Consumer<'_, S>,
    eval: &Evaluator<'_, S>,
    outcome: &MatchOutcome<S::Ciphertext>,
    query: &MatchingQuery<S::Ciphertext>,
    v: &Profile,
    plan: &SamplePlan,
    fetch: &mut dyn FnMut(usize) -> Option<DataTuple<S::Ciphertext>>,
    delta_sq: i128,
    report: &mut MatchReport,
) -> Result<Option<MatchFailure>, ServiceError> {
    let mut seen = std::collections::HashSet::new();
    for &i in outcome.matched.iter().chain(outcome.unmatched.iter().map(|(i, _)| i)) {
        if consumer.pid(i).is_none() {
            return Ok(Some(MatchFailure::UnknownIndex { index: i }));
        }
        if !seen.insert(i) {
            return Ok(Some(MatchFailure::DuplicateIndex { index: i }));
        }
    }

    for (&i, ci) in outcome.matched.iter().zip(&outcome.matched_vectors) {
        let r = cheap_similarity(eval, ci, query, v)?;
        report.matched_checked += 1;
        match consumer.lookup(MATCHING_SERVICE, &r)? {
            None => return Ok(Some(MatchFailure::MatchedUnknown { index: i })),
            Some(f2) if f2 as i128 >= delta_sq => return Ok(Some(MatchFailure::MatchedNotBelow { index: i, f2 })),
            Some(_) => {}
        }
    }

    let population: Vec<usize> = (0..outcome.unmatched.len()).collect();
    let picks = sample_members(&population, plan.checks, plan.seed);
    let mut fetched = Vec::with_capacity(picks.len());
    for &k in &picks {
        let (i, forwarded) = outcome.unmatched[k];
        report.sampled.push(i);
        match fetch(i) {
            Some(t) => fetched.push((i, forwarded, t)),
            None => return Ok(Some(MatchFailure::MissingTuple { index: i })),
        }
    }
    let refs: Vec<(usize, &DataTuple<S::Ciphertext>)> = fetched.iter().map(|(i, _, t)| (*i, t)).collect();
    if !refs.is_empty() && !consumer.authenticate(&refs) {
        let index = refs.iter().find(|(i, t)| !consumer.authenticate(&[(*i, *t)])).map_or(refs[0].0, |(i, _)| *i);
        return Ok(Some(MatchFailure::BadTuple { index }));
    }
    for (i, forwarded, t) in &fetched {
        let r = cheap_similarity(eval, &t.ciphertexts, query, v)?;
        let (index, forwarded) = (*i, *forwarded);
        match consumer.lookup(MATCHING_SERVICE, &r)? {
            None => return Ok(Some(MatchFailure::UnmatchedUnknown { index })),
            Some(f2) if f2 != forwarded => {
                return Ok(Some(MatchFailure::ForwardedMismatch { index, forwarded, recomputed: f2 }))
            }
            Some(f2) if (f2 as i128) < delta_sq => return Ok(Some(MatchFailure::UnmatchedBelow { index, f2 })),
            Some(_) => {}
        }
    }
    Ok(None)
}
