//! Individual protocol steps against an on-disk [`Store`], one per CLI command.

use std::collections::HashSet;

use anyhow::{bail, ensure, Context};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use tpdm::ibs::{DataTuple, Verifier};
use tpdm::identity::board::TraceLists;
use tpdm::identity::{PseudoIdentity, RegistrationCenter, Rid, SigningKeyPair};
use tpdm::phe::{Evaluator, HomomorphicScheme, OpCounts};
use tpdm::services::fitting::{self, FitCheckPlan, FitReport, GaussianFit};
use tpdm::services::matching::{self, MatchReport, SamplePlan};
use tpdm::services::{
    Consumer, Profile, Schema, ServiceKind, SubmissionBox, FITTING_SERVICE, MATCHING_SERVICE, REFIT_SERVICE,
};
use tpdm::tracing::{trace_tuples, TraceResult};

use crate::config::RefitConfig;
use crate::store::{CenterTask, Store};
use crate::wire::WireTuple;

/// What a contributor's device keeps after issuance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Credential {
    pub pid: PseudoIdentity,
    pub keys: SigningKeyPair,
}

pub struct Register {
    pub rid: Rid,
    pub password: String,
    pub rng: ChaCha20Rng,
}

impl CenterTask for Register {
    type Output = Rid;
    fn run<S: HomomorphicScheme>(mut self, rc: &RegistrationCenter<S>, _: &Store) -> anyhow::Result<Rid> {
        rc.register(self.rid, &self.password, &mut self.rng)?;
        Ok(self.rid)
    }
}

pub struct Issue {
    pub rid: Rid,
    pub password: String,
    pub rng: ChaCha20Rng,
}

impl CenterTask for Issue {
    type Output = Credential;
    fn run<S: HomomorphicScheme>(mut self, rc: &RegistrationCenter<S>, _: &Store) -> anyhow::Result<Credential> {
        let (pid, keys) = rc.issue_credentials(&self.rid, &self.password, &mut self.rng)?;
        Ok(Credential { pid, keys })
    }
}

fn load_tuples<S: HomomorphicScheme>(
    rc: &RegistrationCenter<S>,
    store: &Store,
    session: &str,
) -> anyhow::Result<Vec<DataTuple<S::Ciphertext>>> {
    let log = store.submissions(session)?;
    ensure!(!log.is_empty(), "session {session} has no submissions");
    log.bodies().map(|w| Ok(w.decode(rc.phe().as_ref())?)).collect()
}

fn schema_of(tag: &[u8]) -> anyhow::Result<Schema> {
    let tag = std::str::from_utf8(tag).context("schema tag is not UTF-8")?;
    [ServiceKind::Matching, ServiceKind::Fitting]
        .into_iter()
        .find_map(|kind| {
            let beta: usize = tag.strip_prefix(&format!("tpdm/{kind}/v1/beta="))?.parse().ok()?;
            let schema = match kind {
                ServiceKind::Matching => Schema::matching(beta),
                ServiceKind::Fitting => Schema::fitting(beta),
            };
            (schema.tag() == tag.as_bytes()).then_some(schema)
        })
        .with_context(|| format!("unknown schema tag {tag:?}"))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Submitted {
    pub session: String,
    pub index: usize,
    pub schema: String,
}

/// Contributor side: encrypt and sign; provider side: schema and PID checks,
/// then append to the session's intake log.
pub struct Submit {
    pub session: String,
    pub credential: Credential,
    pub service: ServiceKind,
    pub ratings: Vec<i64>,
    pub theta: u64,
    pub rng: ChaCha20Rng,
}

impl CenterTask for Submit {
    type Output = Submitted;
    fn run<S: HomomorphicScheme>(mut self, rc: &RegistrationCenter<S>, store: &Store) -> anyhow::Result<Submitted> {
        let profile = Profile::new(self.ratings, self.theta)?;
        let schema = match self.service {
            ServiceKind::Matching => Schema::matching(profile.beta()),
            ServiceKind::Fitting => Schema::fitting(profile.beta()),
        };
        let eval = Evaluator::new(rc.phe().as_ref());
        let cts = match self.service {
            ServiceKind::Matching => matching::encode_profile_matching(&eval, &profile, &mut self.rng)?,
            ServiceKind::Fitting => fitting::encode_profile_fitting(&eval, &profile, &mut self.rng)?,
        };
        let tuple = DataTuple::seal(rc.params(), self.credential.pid, &self.credential.keys, &schema.tag(), cts);

        let mut log = store.submissions(&self.session)?;
        ensure!(rc.board().pids(&self.session).is_none(), "session {} is closed for submissions", self.session);
        let mut intake = SubmissionBox::new(schema);
        for w in log.bodies() {
            intake.accept(w.decode(rc.phe().as_ref())?).context("existing submissions do not share this schema")?;
        }
        let index = intake.accept(tuple.clone())?;
        log.append(WireTuple::encode(&tuple))?;
        Ok(Submitted { session: self.session, index, schema: String::from_utf8_lossy(&schema.tag()).into_owned() })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Verified {
    pub session: String,
    pub submissions: usize,
    pub accepted: bool,
    pub pairings: u64,
}

fn post_pids_once<S: HomomorphicScheme>(
    rc: &RegistrationCenter<S>,
    session: &str,
    tuples: &[DataTuple<S::Ciphertext>],
) -> anyhow::Result<()> {
    let posted = rc.board().pids(session).map(<[_]>::to_vec);
    match posted {
        None => rc.post_pids(session, tuples.iter().map(|t| t.pid).collect())?,
        Some(p) => ensure!(
            p.len() == tuples.len() && p.iter().zip(tuples).all(|(a, t)| *a == t.pid),
            "posted PIDs of session {session} differ from its submissions"
        ),
    }
    Ok(())
}

/// First-layer batch verification; closes the session to new submissions.
pub struct Verify {
    pub session: String,
}

impl CenterTask for Verify {
    type Output = Verified;
    fn run<S: HomomorphicScheme>(self, rc: &RegistrationCenter<S>, store: &Store) -> anyhow::Result<Verified> {
        let tuples = load_tuples(rc, store, &self.session)?;
        post_pids_once(rc, &self.session, &tuples)?;
        let verifier = Verifier::new(rc.params());
        let refs: Vec<&DataTuple<S::Ciphertext>> = tuples.iter().collect();
        let accepted = verifier.verify_tuples(&refs)?;
        if accepted && rc.board().lists(&self.session).is_none() {
            rc.post_lists(&self.session, TraceLists { whitelist: (0..tuples.len()).collect(), ..Default::default() })?;
        }
        Ok(Verified {
            session: self.session,
            submissions: tuples.len(),
            accepted,
            pairings: verifier.counts().pairings,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Traced {
    pub session: String,
    pub result: TraceResult,
    pub revoked: Vec<Rid>,
}

pub struct Trace {
    pub session: String,
    pub depth: Option<u32>,
    pub revoke: bool,
}

impl CenterTask for Trace {
    type Output = Traced;
    fn run<S: HomomorphicScheme>(self, rc: &RegistrationCenter<S>, store: &Store) -> anyhow::Result<Traced> {
        let tuples = load_tuples(rc, store, &self.session)?;
        post_pids_once(rc, &self.session, &tuples)?;
        let verifier = Verifier::new(rc.params());
        let result = trace_tuples(&verifier, &tuples, self.depth)?;
        rc.post_lists(
            &self.session,
            TraceLists {
                whitelist: result.whitelist.clone(),
                blacklist: result.blacklist.clone(),
                resubmit: result.resubmit.clone(),
            },
        )?;
        let mut revoked = Vec::new();
        if self.revoke {
            for &i in &result.blacklist {
                let rid = rc.trace(&tuples[i].pid)?;
                if rc.revoke(&rid)? {
                    revoked.push(rid);
                }
            }
        }
        Ok(Traced { session: self.session, result, revoked })
    }
}

fn whitelist_of<S: HomomorphicScheme>(rc: &RegistrationCenter<S>, session: &str) -> anyhow::Result<Vec<usize>> {
    match rc.board().lists(session) {
        Some(l) if !l.whitelist.is_empty() => Ok(l.whitelist.clone()),
        Some(_) => bail!("session {session} has an empty whitelist"),
        None => bail!("session {session} has no posted lists; run verify or trace first"),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Matched {
    pub session: String,
    pub matched: Vec<usize>,
    pub aggregate_verified: bool,
    pub report: MatchReport,
    pub provider_ops: OpCounts,
    pub accepted: bool,
}

/// Provider computes the match; the consumer checks the aggregate, the
/// matched similarities and a random sample of the unmatched ones.
pub struct Match {
    pub session: String,
    pub query: Vec<i64>,
    pub theta: u64,
    pub delta: u64,
    pub plan: SamplePlan,
    pub rng: ChaCha20Rng,
}

impl CenterTask for Match {
    type Output = Matched;
    fn run<S: HomomorphicScheme>(mut self, rc: &RegistrationCenter<S>, store: &Store) -> anyhow::Result<Matched> {
        let tuples = load_tuples(rc, store, &self.session)?;
        let schema = schema_of(&tuples[0].schema)?;
        ensure!(schema.kind == ServiceKind::Matching, "session {} holds {} data", self.session, schema.kind);
        let whitelist = whitelist_of(rc, &self.session)?;
        let v = Profile::new(self.query, self.theta)?;
        ensure!(v.beta() == schema.beta, "query has {} ratings, profiles have {}", v.beta(), schema.beta);
        matching::check_session(schema.beta, self.theta, rc.phe().bound())?;
        rc.open_service(&self.session, MATCHING_SERVICE, whitelist.len() as u64)?;

        let provider = Evaluator::new(rc.phe().as_ref());
        let consumer_eval = Evaluator::new(rc.phe().as_ref());
        let query = matching::make_query(&consumer_eval, &v, self.delta, &mut self.rng)?;
        let members: Vec<(usize, &DataTuple<S::Ciphertext>)> = whitelist.iter().map(|&i| (i, &tuples[i])).collect();
        let outcome = matching::run_matching(rc, &provider, &self.session, schema, &members, &query)?;

        let mut consumer = Consumer::new(rc, &self.session);
        let aggregate_verified = matching::verify_matched_aggregate(&consumer, schema, &outcome)?;
        let listed: HashSet<usize> = whitelist.iter().copied().collect();
        let mut fetch = |i: usize| listed.contains(&i).then(|| tuples[i].clone());
        let report = matching::verify_matching_outcome(
            &mut consumer,
            &consumer_eval,
            &outcome,
            &query,
            &v,
            &self.plan,
            &mut fetch,
        )?;
        Ok(Matched {
            session: self.session,
            matched: outcome.matched.clone(),
            aggregate_verified,
            accepted: aggregate_verified && report.accepted,
            report,
            provider_ops: provider.counts(),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Fitted {
    pub session: String,
    pub fit: GaussianFit,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub aggregate_verified: bool,
    pub report: FitReport,
    pub provider_ops: OpCounts,
    pub accepted: bool,
}

pub struct Fit {
    pub session: String,
    pub theta: u64,
    pub random_entries: usize,
    pub refit: Option<RefitConfig>,
    pub seed: u64,
}

impl CenterTask for Fit {
    type Output = Fitted;
    fn run<S: HomomorphicScheme>(self, rc: &RegistrationCenter<S>, store: &Store) -> anyhow::Result<Fitted> {
        let tuples = load_tuples(rc, store, &self.session)?;
        let schema = schema_of(&tuples[0].schema)?;
        ensure!(schema.kind == ServiceKind::Fitting, "session {} holds {} data", self.session, schema.kind);
        let whitelist = whitelist_of(rc, &self.session)?;
        fitting::check_session(whitelist.len(), self.theta, rc.phe().bound())?;
        rc.open_service(&self.session, FITTING_SERVICE, fitting::quota(schema.beta))?;
        if self.refit.is_some() {
            rc.open_service(&self.session, REFIT_SERVICE, fitting::quota(schema.beta))?;
        }
        let provider = Evaluator::new(rc.phe().as_ref());
        let members: Vec<(usize, &DataTuple<S::Ciphertext>)> = whitelist.iter().map(|&i| (i, &tuples[i])).collect();
        let out = fitting::run_fitting(rc, &provider, &self.session, schema, &members)?;

        let consumer_eval = Evaluator::new(rc.phe().as_ref());
        let mut consumer = Consumer::new(rc, &self.session);
        let aggregate_verified = consumer.authenticate_aggregate(&out.aggregate, &members)?;
        let mut plan = FitCheckPlan::diagonal(schema.beta);
        if self.random_entries > 0 {
            plan.cov_entries
                .extend(FitCheckPlan::random_entries(schema.beta, self.random_entries, self.seed).cov_entries);
        }
        plan.refit = self.refit.map(|r| r.with_seed(self.seed.wrapping_add(1)));
        let report = fitting::verify_fitting_outcome(&mut consumer, &consumer_eval, &out.fit, &members, &plan)?;
        Ok(Fitted {
            session: self.session,
            mean: out.fit.mean_f64(),
            cov: out.fit.cov_f64(),
            fit: out.fit,
            aggregate_verified,
            accepted: aggregate_verified && report.accepted,
            report,
            provider_ops: provider.counts(),
        })
    }
}

/// Which pseudo identity the center should open.
pub enum PidRef {
    Direct(PseudoIdentity),
    Submission { session: String, index: usize },
}

pub struct Reveal(pub PidRef);

impl CenterTask for Reveal {
    type Output = Rid;
    fn run<S: HomomorphicScheme>(self, rc: &RegistrationCenter<S>, store: &Store) -> anyhow::Result<Rid> {
        let pid = match self.0 {
            PidRef::Direct(p) => p,
            PidRef::Submission { session, index } => {
                let log = store.submissions(&session)?;
                let pid = log.bodies().nth(index).map(|w| w.pid);
                pid.with_context(|| format!("session {session} has no submission {index}"))?
            }
        };
        Ok(rc.trace(&pid)?)
    }
}

pub struct Revoke(pub Rid);

impl CenterTask for Revoke {
    type Output = bool;
    fn run<S: HomomorphicScheme>(self, rc: &RegistrationCenter<S>, _: &Store) -> anyhow::Result<bool> {
        Ok(rc.revoke(&self.0)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{BackendState, RcState};
    use rand::SeedableRng;
    use tpdm::identity::MasterKeys;

    fn store(dir: &std::path::Path) -> Store {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let state = RcState { master: MasterKeys::generate(&mut rng), backend: BackendState::Clear { bound: 1 << 20 } };
        Store::create(dir, &state).unwrap()
    }

    fn enroll(store: &Store, label: &str, seed: u64) -> Credential {
        let rid = Rid::from_label(label);
        let rng = ChaCha20Rng::seed_from_u64(seed);
        store.with_center(Register { rid, password: "pw".into(), rng: rng.clone() }).unwrap();
        store.with_center(Issue { rid, password: "pw".into(), rng }).unwrap()
    }

    fn submit(store: &Store, credential: Credential, service: ServiceKind, ratings: Vec<i64>, seed: u64) -> usize {
        let rng = ChaCha20Rng::seed_from_u64(seed);
        let task = Submit { session: "s".into(), credential, service, ratings, theta: 10, rng };
        store.with_center(task).unwrap().index
    }

    #[test]
    fn stepwise_matching_across_reopened_stores() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path());
        let profiles = [vec![1, 2], vec![9, 9], vec![2, 2], vec![0, 10]];
        for (i, p) in profiles.iter().enumerate() {
            let cred = enroll(&s, &format!("c{i}"), i as u64);
            assert_eq!(submit(&s, cred, ServiceKind::Matching, p.clone(), 100 + i as u64), i);
        }
        let s = Store::open(dir.path()).unwrap();
        let verified = s.with_center(Verify { session: "s".into() }).unwrap();
        assert!(verified.accepted);
        assert_eq!(verified.pairings, 3);
        let late = enroll(&s, "late", 9);
        let task = Submit {
            session: "s".into(),
            credential: late,
            service: ServiceKind::Matching,
            ratings: vec![1, 1],
            theta: 10,
            rng: ChaCha20Rng::seed_from_u64(9),
        };
        assert!(s.with_center(task).is_err());

        let plan = SamplePlan { checks: 2, assumed_corruption: 0.2, seed: 1 };
        let task = Match {
            session: "s".into(),
            query: vec![2, 2],
            theta: 10,
            delta: 2,
            plan,
            rng: ChaCha20Rng::seed_from_u64(3),
        };
        let m = s.with_center(task).unwrap();
        // Squared distances to (2,2): 1, 98, 0, 68; strict test against δ² = 4.
        assert_eq!(m.matched, vec![0, 2]);
        assert!(m.accepted);
    }

    #[test]
    fn duplicate_pid_is_refused_and_tracing_revokes() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path());
        let a = enroll(&s, "a", 1);
        let mut b = enroll(&s, "b", 2);
        submit(&s, a.clone(), ServiceKind::Fitting, vec![1, 2], 10);
        let dup = Submit {
            session: "s".into(),
            credential: a,
            service: ServiceKind::Fitting,
            ratings: vec![3, 4],
            theta: 10,
            rng: ChaCha20Rng::seed_from_u64(11),
        };
        assert!(s.with_center(dup).is_err());
        b.keys.sk1 = b.keys.sk2;
        submit(&s, b, ServiceKind::Fitting, vec![3, 4], 12);
        submit(&s, enroll(&s, "c", 3), ServiceKind::Fitting, vec![5, 6], 13);
        assert!(!s.with_center(Verify { session: "s".into() }).unwrap().accepted);
        let traced = s.with_center(Trace { session: "s".into(), depth: None, revoke: true }).unwrap();
        assert_eq!(traced.result.blacklist, vec![1]);
        assert_eq!(traced.revoked, vec![Rid::from_label("b")]);
        let rid = s.with_center(Reveal(PidRef::Submission { session: "s".into(), index: 1 })).unwrap();
        assert_eq!(rid, Rid::from_label("b"));

        let fitted =
            s.with_center(Fit { session: "s".into(), theta: 10, random_entries: 1, refit: None, seed: 4 }).unwrap();
        assert!(fitted.accepted);
        assert_eq!(fitted.mean, vec![3.0, 4.0]);
        assert_eq!(fitted.cov, vec![vec![4.0, 4.0], vec![4.0, 4.0]]);
    }
}
