//! One market session with all four roles in process.
//!
//! | phase | what happens |
//! |---|---|
//! | I   | the registration center creates master keys and PHE keys and posts the parameters |
//! | II  | contributors register and obtain pseudo identities and signing keys |
//! | III | contributors encrypt, sign and submit; the provider checks schema and PID reuse |
//! | IV  | batch verification, the service computation, quota decryption and the consumer's checks |
//! | V   | tracing of invalid signatures, resubmission and revocation |
//!
//! Everything exchanged between roles goes through a [`Channel`] and ends up
//! in the transcript. Under the transparent backend a fixed seed reproduces
//! the transcript byte for byte.

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use tpdm::ibs::{DataTuple, Signature, Verifier};
use tpdm::identity::board::TraceLists;
use tpdm::identity::{MasterKeys, RcConfig, RcStorage, RegistrationCenter, Rid};
use tpdm::pairing::G1Elem;
use tpdm::phe::bgn::Bgn;
use tpdm::phe::transparent::Transparent;
use tpdm::phe::{Evaluator, HomomorphicScheme, OpCounts};
use tpdm::services::fitting::{self, FitCheckPlan, FitReport, GaussianFit};
use tpdm::services::matching::{self, MatchReport, SamplePlan};
use tpdm::services::{
    Consumer, Profile, Schema, ServiceKind, SubmissionBox, FITTING_SERVICE, MATCHING_SERVICE, REFIT_SERVICE,
};
use tpdm::tracing::{trace_tuples, TraceResult};

use crate::config::{Backend, ConfigError, DataSource, SessionConfig};
use crate::dataset::{gen_synthetic, Dataset, Distribution};
use crate::wire::{
    Channel, Role, Transcript, TranscriptRecord, TupleRequest, WireFitOutcome, WireMatchOutcome, WireQuery, WireTuple,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub batch_calls: u64,
    pub single_calls: u64,
    pub max_depth: u32,
    pub blacklist: Vec<usize>,
    pub resubmit: Vec<usize>,
}

impl From<&TraceResult> for TraceSummary {
    fn from(r: &TraceResult) -> Self {
        TraceSummary {
            batch_calls: r.batch_calls,
            single_calls: r.single_calls,
            max_depth: r.max_depth,
            blacklist: r.blacklist.clone(),
            resubmit: r.resubmit.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuotaUse {
    pub service: String,
    pub quota: u64,
    pub used: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchingResult {
    pub query: Vec<i64>,
    pub matched: Vec<usize>,
    pub unmatched: usize,
    pub aggregate_verified: bool,
    pub report: MatchReport,
    pub provider_ops: OpCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittingResult {
    pub fit: GaussianFit,
    pub aggregate_verified: bool,
    pub report: FitReport,
    pub provider_ops: OpCounts,
}

/// The deterministic record of a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub session: String,
    pub service: ServiceKind,
    pub backend: Backend,
    pub submitted: usize,
    pub corrupted: Vec<usize>,
    pub first_layer_accepted: bool,
    pub tracing: Option<TraceSummary>,
    pub resubmission: Option<TraceSummary>,
    pub lists: TraceLists,
    pub revoked: usize,
    pub matching: Option<MatchingResult>,
    pub fitting: Option<FittingResult>,
    pub quotas: Vec<QuotaUse>,
    /// `submitted = |whitelist| + |blacklist| + |resubmit|` and every
    /// service stayed within its quota.
    pub ledger_balanced: bool,
    pub accepted: bool,
    pub board_head: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub setup: Duration,
    pub credentials: Duration,
    pub submission: Duration,
    pub verification: Duration,
    pub service: Duration,
    pub outcome_check: Duration,
}

pub struct SessionRun {
    pub outcome: SessionOutcome,
    pub timings: PhaseTimings,
    pub transcript: Transcript,
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("phase {phase} failed: {cause}")]
    Phase { phase: u8, cause: String },
    #[error("transcript: {0}")]
    Transcript(String),
}

fn phase_err(phase: u8) -> impl Fn(String) -> SessionError {
    move |cause| SessionError::Phase { phase, cause }
}

macro_rules! at {
    ($phase:expr, $e:expr) => {
        $e.map_err(|e| phase_err($phase)(e.to_string()))
    };
}

/// Loads or generates the contributors' profiles.
pub fn session_data(cfg: &SessionConfig) -> Result<Dataset, SessionError> {
    let data = match &cfg.data {
        DataSource::Synthetic { distribution } => {
            let dist =
                distribution.clone().unwrap_or_else(|| Distribution::default_for(cfg.service, cfg.beta, cfg.theta));
            at!(3, gen_synthetic(cfg.n, cfg.beta, cfg.theta, &dist, cfg.seed.wrapping_add(1)))?
        }
        DataSource::Csv { path } => {
            let file = at!(3, std::fs::File::open(path))?;
            at!(3, Dataset::read_csv(file, cfg.theta))?
        }
        DataSource::Inline { rows } => Dataset { theta: cfg.theta, rows: rows.clone() },
    };
    if data.rows.len() != cfg.n || data.beta() != cfg.beta {
        return Err(SessionError::Phase {
            phase: 3,
            cause: format!("dataset is {}×{}, config says {}×{}", data.rows.len(), data.beta(), cfg.n, cfg.beta),
        });
    }
    Ok(data)
}

/// Runs a full session, recording into an in-memory transcript.
pub fn run_session(cfg: &SessionConfig) -> Result<SessionRun, SessionError> {
    run_session_into(cfg, Transcript::in_memory())
}

/// Runs a full session and persists the transcript at `path`, which must
/// not exist yet.
pub fn run_session_to(cfg: &SessionConfig, path: &Path) -> Result<SessionRun, SessionError> {
    if path.exists() {
        return Err(SessionError::Transcript(format!("{} already exists", path.display())));
    }
    let log = Transcript::open(path).map_err(|e| SessionError::Transcript(e.to_string()))?;
    run_session_into(cfg, log)
}

pub fn run_session_into(cfg: &SessionConfig, transcript: Transcript) -> Result<SessionRun, SessionError> {
    cfg.validate()?;
    let data = session_data(cfg)?;
    let mut channel = Channel::new(transcript);
    at!(1, channel.transcript.append(TranscriptRecord::Config { config: cfg.clone() }))?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let started = Instant::now();
    let master = MasterKeys::generate(&mut rng);
    let result = match cfg.backend {
        Backend::Clear => {
            let (phe, sk) = Transparent::new(cfg.bound);
            let rc = at!(
                1,
                RegistrationCenter::new(master, Arc::new(phe), sk, RcConfig::default(), RcStorage::in_memory())
            )?;
            drive(cfg, &data, rc, rng, &mut channel, started)
        }
        Backend::Bgn => {
            let (phe, sk) = at!(1, Bgn::keygen(cfg.modulus_bits, cfg.bound, &mut rng))?;
            let rc = at!(
                1,
                RegistrationCenter::new(master, Arc::new(phe), sk, RcConfig::default(), RcStorage::in_memory())
            )?;
            drive(cfg, &data, rc, rng, &mut channel, started)
        }
    };
    match result {
        Ok((outcome, timings)) => {
            at!(5, channel.transcript.append(TranscriptRecord::Outcome { outcome: outcome.clone() }))?;
            Ok(SessionRun { outcome, timings, transcript: channel.transcript })
        }
        Err(e) => {
            let phase = match &e {
                SessionError::Phase { phase, .. } => *phase,
                _ => 0,
            };
            // The transcript keeps the failure cause even though the session aborts.
            let _ = channel.note(phase, format!("session aborted: {e}"));
            Err(e)
        }
    }
}

fn drive<S: HomomorphicScheme>(
    cfg: &SessionConfig,
    data: &Dataset,
    rc: RegistrationCenter<S>,
    mut rng: ChaCha20Rng,
    channel: &mut Channel,
    started: Instant,
) -> Result<(SessionOutcome, PhaseTimings), SessionError> {
    let session = format!("session-{}", cfg.seed);
    let schema = match cfg.service {
        ServiceKind::Matching => Schema::matching(cfg.beta),
        ServiceKind::Fitting => Schema::fitting(cfg.beta),
    };
    let phe = rc.phe().clone();
    let mut timings = PhaseTimings { setup: started.elapsed(), ..Default::default() };
    at!(1, channel.note(1, format!("parameters posted, backend {}", S::NAME)))?;

    // Phase II: registration and credential issuance.
    let t = Instant::now();
    let mut credentials = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let rid = Rid::random(&mut rng);
        let password = format!("contributor-{i}");
        at!(2, rc.register(rid, &password, &mut rng))?;
        let (pid, keys) = at!(2, rc.issue_credentials(&rid, &password, &mut rng))?;
        credentials.push((pid, keys));
    }
    at!(2, channel.note(2, format!("{} pseudo identities issued", cfg.n)))?;
    timings.credentials = t.elapsed();

    // Phase III: encrypt-then-sign and submission.
    let t = Instant::now();
    let n_bad = (cfg.corrupt_fraction * cfg.n as f64).round() as usize;
    let mut corrupted: Vec<usize> = sample(&mut rng, cfg.n, n_bad).into_vec();
    corrupted.sort_unstable();
    let contributor_eval = Evaluator::new(phe.as_ref());
    let mut intake = SubmissionBox::new(schema);
    let mut wire_tuples = Vec::with_capacity(cfg.n);
    for (i, (row, (pid, keys))) in data.rows.iter().zip(&credentials).enumerate() {
        let profile = at!(3, Profile::new(row.clone(), cfg.theta))?;
        let cts = match cfg.service {
            ServiceKind::Matching => matching::encode_profile_matching(&contributor_eval, &profile, &mut rng),
            ServiceKind::Fitting => fitting::encode_profile_fitting(&contributor_eval, &profile, &mut rng),
        };
        let mut tuple = DataTuple::seal(rc.params(), *pid, keys, &schema.tag(), at!(3, cts)?);
        if corrupted.binary_search(&i).is_ok() {
            tuple.sigma = Signature(G1Elem::random(&mut rng));
        }
        let wire = WireTuple::encode(&tuple);
        let received = at!(3, channel.send_bulk(3, Role::Contributor, Role::Provider, "submission", &wire))?;
        at!(3, intake.accept(at!(3, received.decode(phe.as_ref()))?))?;
        wire_tuples.push(wire);
    }
    timings.submission = t.elapsed();

    // Phase IV (first layer) and V (tracing, resubmission, revocation).
    let t = Instant::now();
    at!(4, rc.post_pids(&session, intake.pids()))?;
    at!(4, channel.note(4, format!("{} PIDs posted", cfg.n)))?;
    let tuples = intake.into_tuples();
    let verifier = Verifier::new(rc.params());
    let refs: Vec<&DataTuple<S::Ciphertext>> = tuples.iter().collect();
    let first_layer_accepted = at!(4, verifier.verify_tuples(&refs))?;
    at!(4, channel.note(4, format!("first-layer batch verification: {}", verdict(first_layer_accepted))))?;

    let mut tracing = None;
    let mut resubmission = None;
    let lists = if first_layer_accepted {
        TraceLists { whitelist: (0..tuples.len()).collect(), ..Default::default() }
    } else {
        let first = at!(5, trace_tuples(&verifier, &tuples, cfg.depth))?;
        let mut lists = TraceLists {
            whitelist: first.whitelist.clone(),
            blacklist: first.blacklist.clone(),
            resubmit: first.resubmit.clone(),
        };
        at!(5, rc.post_lists(&session, lists.clone()))?;
        at!(
            5,
            channel.note(
                5,
                format!(
                    "tracing: {} whitelisted, {} blacklisted, {} to resubmit",
                    lists.whitelist.len(),
                    lists.blacklist.len(),
                    lists.resubmit.len()
                )
            )
        )?;
        tracing = Some(TraceSummary::from(&first));
        if !first.resubmit.is_empty() {
            let mut again = Vec::with_capacity(first.resubmit.len());
            for &i in &first.resubmit {
                let received =
                    at!(5, channel.send_bulk(5, Role::Contributor, Role::Provider, "resubmission", &wire_tuples[i]))?;
                again.push(at!(5, received.decode(phe.as_ref()))?);
            }
            let second = at!(5, trace_tuples(&verifier, &again, None))?;
            lists.whitelist.extend(second.whitelist.iter().map(|&j| first.resubmit[j]));
            lists.blacklist.extend(second.blacklist.iter().map(|&j| first.resubmit[j]));
            lists.whitelist.sort_unstable();
            lists.blacklist.sort_unstable();
            lists.resubmit.clear();
            resubmission = Some(TraceSummary::from(&second));
        }
        lists
    };
    if tracing.is_none() || resubmission.is_some() {
        at!(5, rc.post_lists(&session, lists.clone()))?;
    }
    let mut revoked = 0;
    for &i in &lists.blacklist {
        let rid = at!(5, rc.trace(&tuples[i].pid))?;
        if at!(5, rc.revoke(&rid))? {
            revoked += 1;
        }
    }
    if revoked > 0 {
        at!(5, channel.note(5, format!("{revoked} contributors revoked")))?;
    }
    timings.verification = t.elapsed();

    let whitelist: Vec<(usize, &DataTuple<S::Ciphertext>)> = lists.whitelist.iter().map(|&i| (i, &tuples[i])).collect();
    if whitelist.is_empty() {
        return Err(SessionError::Phase { phase: 4, cause: "no valid submissions left".into() });
    }

    let provider_eval = Evaluator::new(phe.as_ref());
    let consumer_eval = Evaluator::new(phe.as_ref());
    let mut consumer = Consumer::new(&rc, &session);
    let (matching_result, fitting_result, accepted) = match cfg.service {
        ServiceKind::Matching => {
            let v: Vec<i64> = match &cfg.query {
                Some(q) => q.clone(),
                None => (0..cfg.beta).map(|_| rng.gen_range(0..=cfg.theta as i64)).collect(),
            };
            let v_profile = at!(4, Profile::new(v.clone(), cfg.theta))?;
            at!(4, rc.open_service(&session, MATCHING_SERVICE, whitelist.len() as u64))?;
            let t = Instant::now();
            let query = at!(4, matching::make_query(&consumer_eval, &v_profile, cfg.delta, &mut rng))?;
            let wq = at!(4, channel.send(4, Role::Consumer, Role::Provider, "query", &WireQuery::encode(&query)))?;
            let provider_query = at!(4, wq.decode(phe.as_ref()))?;
            let outcome =
                at!(4, matching::run_matching(&rc, &provider_eval, &session, schema, &whitelist, &provider_query))?;
            let wo = at!(
                4,
                channel.send(4, Role::Provider, Role::Consumer, "match_outcome", &WireMatchOutcome::encode(&outcome))
            )?;
            let outcome = at!(4, wo.decode(phe.as_ref()))?;
            timings.service = t.elapsed();

            let t = Instant::now();
            let aggregate_verified = at!(4, matching::verify_matched_aggregate(&consumer, schema, &outcome))?;
            let plan = SamplePlan {
                checks: cfg.sampling.checks,
                assumed_corruption: cfg.sampling.assumed_corruption,
                seed: cfg.seed.wrapping_add(2),
            };
            let listed: std::collections::HashSet<usize> = lists.whitelist.iter().copied().collect();
            let mut fetch = |i: usize| -> Option<DataTuple<S::Ciphertext>> {
                let req = channel
                    .send(4, Role::Consumer, Role::Provider, "tuple_request", &TupleRequest { index: i })
                    .ok()?;
                if !listed.contains(&req.index) {
                    return None;
                }
                let wire = WireTuple::encode(&tuples[req.index]);
                channel.send(4, Role::Provider, Role::Consumer, "tuple", &wire).ok()?.decode(phe.as_ref()).ok()
            };
            let report = at!(
                4,
                matching::verify_matching_outcome(
                    &mut consumer,
                    &consumer_eval,
                    &outcome,
                    &query,
                    &v_profile,
                    &plan,
                    &mut fetch
                )
            )?;
            timings.outcome_check = t.elapsed();
            let accepted = aggregate_verified && report.accepted;
            let result = MatchingResult {
                query: v,
                matched: outcome.matched.clone(),
                unmatched: outcome.unmatched.len(),
                aggregate_verified,
                report,
                provider_ops: provider_eval.counts(),
            };
            (Some(result), None, accepted)
        }
        ServiceKind::Fitting => {
            at!(4, rc.open_service(&session, FITTING_SERVICE, fitting::quota(cfg.beta)))?;
            if cfg.fit_checks.refit.is_some() {
                at!(4, rc.open_service(&session, REFIT_SERVICE, fitting::quota(cfg.beta)))?;
            }
            let t = Instant::now();
            let out = at!(4, fitting::run_fitting(&rc, &provider_eval, &session, schema, &whitelist))?;
            let wire = WireFitOutcome {
                fit: out.fit.clone(),
                aggregate: out.aggregate.clone(),
                tuples: whitelist.iter().map(|&(i, t)| (i, WireTuple::encode(t))).collect(),
            };
            let received = at!(4, channel.send_bulk(4, Role::Provider, Role::Consumer, "fit_outcome", &wire))?;
            timings.service = t.elapsed();

            let t = Instant::now();
            let forwarded: Vec<(usize, DataTuple<S::Ciphertext>)> = received
                .tuples
                .iter()
                .map(|(i, w)| Ok((*i, w.decode(phe.as_ref())?)))
                .collect::<Result<_, crate::wire::WireError>>()
                .map_err(|e| phase_err(4)(e.to_string()))?;
            let fwd_refs: Vec<(usize, &DataTuple<S::Ciphertext>)> = forwarded.iter().map(|(i, t)| (*i, t)).collect();
            let aggregate_verified = at!(4, consumer.authenticate_aggregate(&received.aggregate, &fwd_refs))?;
            let mut plan = if cfg.fit_checks.diagonal {
                FitCheckPlan::diagonal(cfg.beta)
            } else {
                FitCheckPlan { mean_entries: vec![], cov_entries: vec![], refit: None }
            };
            if cfg.fit_checks.random_entries > 0 {
                let extra =
                    FitCheckPlan::random_entries(cfg.beta, cfg.fit_checks.random_entries, cfg.seed.wrapping_add(3));
                plan.cov_entries.extend(extra.cov_entries);
            }
            plan.refit = cfg.fit_checks.refit.map(|r| r.with_seed(cfg.seed.wrapping_add(4)));
            let report = at!(
                4,
                fitting::verify_fitting_outcome(&mut consumer, &consumer_eval, &received.fit, &fwd_refs, &plan)
            )?;
            timings.outcome_check = t.elapsed();
            let accepted = aggregate_verified && report.accepted;
            let result =
                FittingResult { fit: received.fit, aggregate_verified, report, provider_ops: provider_eval.counts() };
            (None, Some(result), accepted)
        }
    };
    at!(4, channel.note(4, format!("consumer verdict: {}", verdict(accepted))))?;

    let board = rc.board();
    let quotas: Vec<QuotaUse> = [MATCHING_SERVICE, FITTING_SERVICE, REFIT_SERVICE]
        .iter()
        .filter_map(|&s| {
            board.quota(&session, s).map(|quota| QuotaUse {
                service: s.to_string(),
                quota,
                used: board.decryptions(&session, s),
            })
        })
        .collect();
    let ledger_balanced = lists.whitelist.len() + lists.blacklist.len() + lists.resubmit.len() == tuples.len()
        && quotas.iter().all(|q| q.used <= q.quota);
    let outcome = SessionOutcome {
        session,
        service: cfg.service,
        backend: cfg.backend,
        submitted: tuples.len(),
        corrupted,
        first_layer_accepted,
        tracing,
        resubmission,
        lists,
        revoked,
        matching: matching_result,
        fitting: fitting_result,
        quotas,
        ledger_balanced,
        accepted,
        board_head: hex::encode(board.log().head()),
    };
    Ok((outcome, timings))
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "accept"
    } else {
        "reject"
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub identical_outcome: bool,
    pub identical_transcript: bool,
    pub recorded: Option<SessionOutcome>,
    pub replayed: SessionOutcome,
}

/// Re-runs the session recorded in a transcript file and compares results.
pub fn replay(path: &Path) -> Result<ReplayReport, SessionError> {
    let log = Transcript::open(path).map_err(|e| SessionError::Transcript(e.to_string()))?;
    replay_log(&log)
}

pub fn replay_log(log: &Transcript) -> Result<ReplayReport, SessionError> {
    let config = log
        .bodies()
        .find_map(|r| match r {
            TranscriptRecord::Config { config } => Some(config.clone()),
            _ => None,
        })
        .ok_or_else(|| SessionError::Transcript("no config record".into()))?;
    let recorded = log.bodies().find_map(|r| match r {
        TranscriptRecord::Outcome { outcome } => Some(outcome.clone()),
        _ => None,
    });
    let run = run_session(&config)?;
    Ok(ReplayReport {
        identical_outcome: recorded.as_ref() == Some(&run.outcome),
        identical_transcript: run.transcript.head() == log.head(),
        recorded,
        replayed: run.outcome,
    })
}
