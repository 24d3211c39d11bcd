//! The registration center.
//!
//! It owns the master keys `s1, s2` (public `P0 = s1·g1`, `P1 = s1·g2`,
//! `P2 = s2·g2`), the registration database, the PHE secret key and the
//! bulletin board. Contributors obtain a fresh pseudo identity and signing key
//! per session:
//!
//! ```text
//! PID = (pid1, pid2) = (r·g1, rid ⊕ mask(r·P0))
//! SK  = (sk1, sk2)   = (s1·pid1, s2·H(pid2))
//! ```
//!
//! Since `s1·pid1 = r·P0`, the center recovers `rid = pid2 ⊕ mask(s1·pid1)`.
//! `mask` is SHA-256 over a domain tag and the compressed point.

pub mod board;
pub mod log;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard};
use std::time::{Duration, Instant};

use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::pairing::{hash_to_g1, pair, DigestKind, G1Elem, G2Elem, GroupSuite, Scalar, G1_LEN};
use crate::phe::{HomomorphicScheme, Level, PheCiphertext, PheError};
use board::{BoardError, BoardEvent, BulletinBoard, TraceLists};
use log::{LogError, RecordLog};

pub const RID_LEN: usize = 32;
pub const PID_LEN: usize = G1_LEN + RID_LEN;

const MASK_DST: &[u8] = b"TPDM-V01-PID-MASK";
const REVOKE_DST: &[u8] = b"TPDM-V01-REVOKED";
const SALT_LEN: usize = 16;

mod hex32 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let text = String::deserialize(d)?;
        let bytes = hex::decode(text).map_err(serde::de::Error::custom)?;
        bytes.try_into().map_err(|_| serde::de::Error::custom("expected 32 bytes"))
    }
}

/// A contributor's real identity.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rid(#[serde(with = "hex32")] pub [u8; RID_LEN]);

impl Rid {
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut b = [0u8; RID_LEN];
        rng.fill_bytes(&mut b);
        Rid(b)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        hex::decode(s).ok()?.try_into().ok().map(Rid)
    }

    /// Derives a rid from a human-readable label (SHA-256 of the label).
    pub fn from_label(label: &str) -> Self {
        Rid(Sha256::digest(label.as_bytes()).into())
    }
}

impl fmt::Display for Rid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Rid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Rid({self})")
    }
}

/// `mask(X)`: the 32-byte pad XORed onto a rid.
pub fn mask(x: &G1Elem) -> [u8; RID_LEN] {
    let mut h = Sha256::new();
    h.update(MASK_DST);
    h.update(x.to_bytes());
    h.finalize().into()
}

fn xor32(a: &[u8; 32], b: &[u8; 32]) -> [u8; 32] {
    std::array::from_fn(|i| a[i] ^ b[i])
}

/// Parameters every role reads from the bulletin board.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemParams {
    pub suite: GroupSuite,
    pub p0: G1Elem,
    pub p1: G2Elem,
    pub p2: G2Elem,
    /// Digest behind `h(·)`.
    pub digest: DigestKind,
}

impl SystemParams {
    pub fn g1(&self) -> G1Elem {
        self.suite.g1()
    }

    pub fn g2(&self) -> G2Elem {
        self.suite.g2()
    }

    /// `ê(P0, g2) = ê(g1, P1)`: P0 and P1 share the exponent s1.
    pub fn is_consistent(&self) -> bool {
        pair(&self.p0, &self.g2()) == pair(&self.g1(), &self.p1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoIdentity {
    pub pid1: G1Elem,
    #[serde(with = "hex32")]
    pub pid2: [u8; RID_LEN],
}

impl PseudoIdentity {
    /// `pid1 (48 bytes) || pid2 (32 bytes)`.
    pub fn to_bytes(&self) -> [u8; PID_LEN] {
        let mut out = [0u8; PID_LEN];
        out[..G1_LEN].copy_from_slice(&self.pid1.to_bytes());
        out[G1_LEN..].copy_from_slice(&self.pid2);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != PID_LEN {
            return None;
        }
        let pid1 = G1Elem::from_bytes(&bytes[..G1_LEN]).ok()?;
        Some(PseudoIdentity { pid1, pid2: bytes[G1_LEN..].try_into().ok()? })
    }

    /// `H(pid2)`, the MapToPoint image used by the second key half.
    pub fn hashed_pid2(&self) -> G1Elem {
        hash_to_g1(&self.pid2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SigningKeyPair {
    pub sk1: G1Elem,
    pub sk2: G1Elem,
}

/// The center's master secrets together with their public images.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MasterKeys {
    s1: Scalar,
    s2: Scalar,
}

impl MasterKeys {
    pub fn generate<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        MasterKeys { s1: Scalar::random_nonzero(rng), s2: Scalar::random_nonzero(rng) }
    }

    pub fn system_params(&self, digest: DigestKind) -> SystemParams {
        let suite = GroupSuite::bls12_381();
        SystemParams { p0: suite.g1() * self.s1, p1: suite.g2() * self.s1, p2: suite.g2() * self.s2, suite, digest }
    }
}

#[derive(Debug, Error)]
pub enum IdentityError {
    #[error("rid {0} is already registered")]
    DuplicateRid(Rid),
    #[error("rid {0} is not registered")]
    UnknownRid(Rid),
    #[error("wrong password")]
    BadPassword,
    #[error("account {0} has been revoked")]
    Revoked(Rid),
    #[error("pseudo identity does not trace to a registered contributor")]
    Unregistered,
    #[error("no service {service} declared for session {session}")]
    UnknownService { session: String, service: String },
    #[error("decryption quota of {quota} exhausted for {service} in session {session}")]
    QuotaExhausted { session: String, service: String, quota: u64 },
    #[error("no cached plaintext for this ciphertext")]
    CacheMiss,
    #[error("stored state does not match these master keys")]
    StateMismatch,
    #[error(transparent)]
    Phe(#[from] PheError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Board(#[from] BoardError),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DbRecord {
    Registered { rid: Rid, salt: String, password_hash: String },
    Revoked { rid: Rid },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RcConfig {
    pub digest: DigestKind,
    /// How long decrypted plaintexts stay available for re-queries. `None`
    /// keeps them for the lifetime of the process.
    pub cache_validity: Option<Duration>,
}

/// Backing record logs of a registration center.
pub struct RcStorage {
    pub registry: RecordLog<DbRecord>,
    pub board: RecordLog<BoardEvent>,
}

impl RcStorage {
    pub fn in_memory() -> Self {
        RcStorage { registry: RecordLog::in_memory(), board: RecordLog::in_memory() }
    }

    /// `registry.ndjson` and `board.ndjson` inside `dir`.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, LogError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|source| LogError::Io { path: dir.to_path_buf(), source })?;
        Ok(RcStorage {
            registry: RecordLog::open(dir.join("registry.ndjson"))?,
            board: RecordLog::open(dir.join("board.ndjson"))?,
        })
    }
}

struct Account {
    salt: Vec<u8>,
    password_hash: [u8; 32],
    revoked: bool,
}

struct Registry {
    log: RecordLog<DbRecord>,
    accounts: HashMap<Rid, Account>,
}

#[derive(Clone, Copy)]
struct Cached {
    value: i64,
    at: Instant,
}

struct ServiceLedger {
    quota: u64,
    used: u64,
    by_digest: HashMap<[u8; 32], Cached>,
    by_tag: HashMap<Vec<u8>, Cached>,
}

fn password_hash(salt: &[u8], password: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(salt);
    h.update(password.as_bytes());
    h.finalize().into()
}

pub fn revocation_commitment(rid: &Rid) -> String {
    let mut h = Sha256::new();
    h.update(REVOKE_DST);
    h.update(rid.0);
    hex::encode(h.finalize())
}

pub fn ciphertext_digest(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

pub struct RegistrationCenter<S: HomomorphicScheme> {
    master: MasterKeys,
    params: SystemParams,
    phe: Arc<S>,
    phe_sk: S::SecretKey,
    config: RcConfig,
    registry: Mutex<Registry>,
    board: RwLock<BulletinBoard>,
    ledgers: Mutex<HashMap<(String, String), ServiceLedger>>,
}

impl<S: HomomorphicScheme> RegistrationCenter<S> {
    /// Starts a center on top of existing (possibly empty) storage. An empty
    /// board receives the parameter record; a non-empty one must carry these
    /// master keys' parameters.
    pub fn new(
        master: MasterKeys,
        phe: Arc<S>,
        phe_sk: S::SecretKey,
        config: RcConfig,
        storage: RcStorage,
    ) -> Result<Self, IdentityError> {
        let params = master.system_params(config.digest);
        let mut accounts = HashMap::new();
        for rec in storage.registry.bodies() {
            match rec {
                DbRecord::Registered { rid, salt, password_hash } => {
                    let salt = hex::decode(salt).map_err(|_| IdentityError::StateMismatch)?;
                    let password_hash = hex::decode(password_hash)
                        .ok()
                        .and_then(|v| v.try_into().ok())
                        .ok_or(IdentityError::StateMismatch)?;
                    accounts.insert(*rid, Account { salt, password_hash, revoked: false });
                }
                DbRecord::Revoked { rid } => {
                    if let Some(a) = accounts.get_mut(rid) {
                        a.revoked = true;
                    }
                }
            }
        }
        let mut board = BulletinBoard::new(storage.board);
        match board.params() {
            None => board.append(BoardEvent::Params {
                system: params.clone(),
                phe_backend: S::NAME.to_string(),
                phe_params: phe.public_params(),
            })?,
            Some(posted) if *posted == params => {}
            Some(_) => return Err(IdentityError::StateMismatch),
        }
        Ok(RegistrationCenter {
            master,
            params,
            phe,
            phe_sk,
            config,
            registry: Mutex::new(Registry { log: storage.registry, accounts }),
            board: RwLock::new(board),
            ledgers: Mutex::new(HashMap::new()),
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn phe(&self) -> &Arc<S> {
        &self.phe
    }

    pub fn config(&self) -> &RcConfig {
        &self.config
    }

    /// Read access to a consistent snapshot of the bulletin board.
    pub fn board(&self) -> RwLockReadGuard<'_, BulletinBoard> {
        self.board.read().expect("board lock")
    }

    pub fn register<R: RngCore + ?Sized>(
        &self,
        rid: Rid,
        password: &str,
        rng: &mut R,
    ) -> Result<DbRecord, IdentityError> {
        let mut reg = self.registry.lock().expect("registry lock");
        if reg.accounts.contains_key(&rid) {
            return Err(IdentityError::DuplicateRid(rid));
        }
        let mut salt = vec![0u8; SALT_LEN];
        rng.fill_bytes(&mut salt);
        let hash = password_hash(&salt, password);
        let record = DbRecord::Registered { rid, salt: hex::encode(&salt), password_hash: hex::encode(hash) };
        reg.log.append(record.clone())?;
        reg.accounts.insert(rid, Account { salt, password_hash: hash, revoked: false });
        Ok(record)
    }

    pub fn is_registered(&self, rid: &Rid) -> bool {
        self.registry.lock().expect("registry lock").accounts.contains_key(rid)
    }

    pub fn is_revoked(&self, rid: &Rid) -> bool {
        self.registry.lock().expect("registry lock").accounts.get(rid).is_some_and(|a| a.revoked)
    }

    /// The device function: password-gated issuance of a fresh pseudo identity
    /// and its signing key.
    pub fn issue_credentials<R: RngCore + ?Sized>(
        &self,
        rid: &Rid,
        password: &str,
        rng: &mut R,
    ) -> Result<(PseudoIdentity, SigningKeyPair), IdentityError> {
        {
            let reg = self.registry.lock().expect("registry lock");
            let acct = reg.accounts.get(rid).ok_or(IdentityError::UnknownRid(*rid))?;
            if password_hash(&acct.salt, password) != acct.password_hash {
                return Err(IdentityError::BadPassword);
            }
            if acct.revoked {
                return Err(IdentityError::Revoked(*rid));
            }
        }
        let r = Scalar::random_nonzero(rng);
        let pid1 = self.params.g1() * r;
        let pid2 = xor32(&rid.0, &mask(&(self.params.p0 * r)));
        let pid = PseudoIdentity { pid1, pid2 };
        let keys = SigningKeyPair { sk1: pid1 * self.master.s1, sk2: pid.hashed_pid2() * self.master.s2 };
        Ok((pid, keys))
    }

    /// Reveals the real identity behind a pseudo identity.
    pub fn trace(&self, pid: &PseudoIdentity) -> Result<Rid, IdentityError> {
        let rid = Rid(xor32(&pid.pid2, &mask(&(pid.pid1 * self.master.s1))));
        if self.is_registered(&rid) {
            Ok(rid)
        } else {
            Err(IdentityError::Unregistered)
        }
    }

    /// Revokes an account. Returns `false` when it was already revoked, in
    /// which case nothing is logged.
    pub fn revoke(&self, rid: &Rid) -> Result<bool, IdentityError> {
        let mut reg = self.registry.lock().expect("registry lock");
        let acct = reg.accounts.get(rid).ok_or(IdentityError::UnknownRid(*rid))?;
        if acct.revoked {
            return Ok(false);
        }
        reg.log.append(DbRecord::Revoked { rid: *rid })?;
        reg.accounts.get_mut(rid).unwrap().revoked = true;
        self.board
            .write()
            .expect("board lock")
            .append(BoardEvent::Revoked { commitment: revocation_commitment(rid) })?;
        Ok(true)
    }

    /// Publishes the decryption quota of a service before any decryption.
    pub fn open_service(&self, session: &str, service: &str, quota: u64) -> Result<(), IdentityError> {
        self.board.write().expect("board lock").open_service(session, service, quota)?;
        Ok(())
    }

    pub fn post_pids(&self, session: &str, pids: Vec<PseudoIdentity>) -> Result<(), IdentityError> {
        self.board.write().expect("board lock").post_pids(session, pids)?;
        Ok(())
    }

    pub fn post_lists(&self, session: &str, lists: TraceLists) -> Result<(), IdentityError> {
        self.board.write().expect("board lock").post_lists(session, lists)?;
        Ok(())
    }

    fn with_ledger<T>(
        &self,
        session: &str,
        service: &str,
        f: impl FnOnce(&mut ServiceLedger) -> Result<T, IdentityError>,
    ) -> Result<T, IdentityError> {
        let mut ledgers = self.ledgers.lock().expect("ledger lock");
        let key = (session.to_string(), service.to_string());
        if !ledgers.contains_key(&key) {
            let board = self.board();
            let quota = board.quota(session, service).ok_or_else(|| IdentityError::UnknownService {
                session: session.to_string(),
                service: service.to_string(),
            })?;
            let used = board.decryptions(session, service);
            ledgers
                .insert(key.clone(), ServiceLedger { quota, used, by_digest: HashMap::new(), by_tag: HashMap::new() });
        }
        f(ledgers.get_mut(&key).unwrap())
    }

    fn fresh(&self, c: &Cached) -> bool {
        self.config.cache_validity.map_or(true, |v| c.at.elapsed() <= v)
    }

    /// Decrypts on behalf of a service, consuming one unit of its published
    /// quota. Re-decrypting an identical ciphertext is answered from the cache.
    pub fn quota_decrypt(&self, session: &str, service: &str, c: &S::Ciphertext) -> Result<i64, IdentityError> {
        let bytes = c.to_bytes();
        let digest = ciphertext_digest(&bytes);
        self.with_ledger(session, service, |ledger| {
            if let Some(hit) = ledger.by_digest.get(&digest) {
                if self.fresh(hit) {
                    return Ok(hit.value);
                }
            }
            if ledger.used >= ledger.quota {
                return Err(IdentityError::QuotaExhausted {
                    session: session.to_string(),
                    service: service.to_string(),
                    quota: ledger.quota,
                });
            }
            let value = self.phe.decrypt(&self.phe_sk, c)?;
            ledger.used += 1;
            self.board.write().expect("board lock").append(BoardEvent::Decryption {
                session: session.to_string(),
                service: service.to_string(),
                ciphertext: hex::encode(digest),
            })?;
            let entry = Cached { value, at: Instant::now() };
            ledger.by_digest.insert(digest, entry);
            for level in [Level::One, Level::Two] {
                ledger.by_tag.insert(self.phe.tag_for(&self.phe_sk, level, value), entry);
            }
            Ok(value)
        })
    }

    /// Answers a re-query from the plaintexts already decrypted for this
    /// service, without decrypting and without consuming quota. The ciphertext
    /// may be a fresh, differently randomised (or differently levelled)
    /// encryption of a cached plaintext.
    pub fn lookup(&self, session: &str, service: &str, c: &S::Ciphertext) -> Result<i64, IdentityError> {
        let digest = ciphertext_digest(&c.to_bytes());
        self.with_ledger(session, service, |ledger| {
            if let Some(hit) = ledger.by_digest.get(&digest).filter(|h| self.fresh(h)) {
                return Ok(hit.value);
            }
            let tag = self.phe.fingerprint(&self.phe_sk, c);
            match ledger.by_tag.get(&tag) {
                Some(hit) if self.fresh(hit) => Ok(hit.value),
                _ => Err(IdentityError::CacheMiss),
            }
        })
    }

    pub fn remaining_quota(&self, session: &str, service: &str) -> Result<u64, IdentityError> {
        self.with_ledger(session, service, |l| Ok(l.quota - l.used))
    }

    pub fn master_keys(&self) -> &MasterKeys {
        &self.master
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phe::transparent::Transparent;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn center(rng: &mut ChaCha20Rng) -> RegistrationCenter<Transparent> {
        let (phe, sk) = Transparent::new(1 << 20);
        RegistrationCenter::new(
            MasterKeys::generate(rng),
            Arc::new(phe),
            sk,
            RcConfig::default(),
            RcStorage::in_memory(),
        )
        .unwrap()
    }

    #[test]
    fn register_issue_trace_revoke() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let rc = center(&mut rng);
        assert!(rc.params().is_consistent());
        let rid = Rid::random(&mut rng);
        rc.register(rid, "pw", &mut rng).unwrap();
        assert!(matches!(rc.register(rid, "pw", &mut rng), Err(IdentityError::DuplicateRid(_))));
        assert!(matches!(rc.issue_credentials(&rid, "nope", &mut rng), Err(IdentityError::BadPassword)));

        let (a, ka) = rc.issue_credentials(&rid, "pw", &mut rng).unwrap();
        let (b, _) = rc.issue_credentials(&rid, "pw", &mut rng).unwrap();
        assert_ne!(a.pid1, b.pid1);
        assert_eq!(rc.trace(&a).unwrap(), rid);
        assert_eq!(rc.trace(&b).unwrap(), rid);
        let g2 = rc.params().g2();
        assert_eq!(pair(&ka.sk1, &g2), pair(&a.pid1, &rc.params().p1));
        assert_eq!(pair(&ka.sk2, &g2), pair(&a.hashed_pid2(), &rc.params().p2));

        assert!(rc.revoke(&rid).unwrap());
        assert!(!rc.revoke(&rid).unwrap());
        let revocations = rc.board().events().filter(|e| matches!(e, BoardEvent::Revoked { .. })).count();
        assert_eq!(revocations, 1);
        assert!(rc.board().is_revoked_commitment(&revocation_commitment(&rid)));
        assert!(matches!(rc.issue_credentials(&rid, "pw", &mut rng), Err(IdentityError::Revoked(_))));
        assert!(matches!(rc.revoke(&Rid([9; 32])), Err(IdentityError::UnknownRid(_))));
    }

    #[test]
    fn quota_cache_and_lookup() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let rc = center(&mut rng);
        let phe = rc.phe().clone();
        assert!(matches!(rc.quota_decrypt("s", "svc", &phe.one()), Err(IdentityError::UnknownService { .. })));
        rc.open_service("s", "svc", 3).unwrap();
        assert_eq!(rc.board().quota("s", "svc"), Some(3));
        let cts: Vec<_> = (0..4).map(|m| phe.encrypt(m, &mut rng).unwrap()).collect();
        for (m, c) in cts.iter().take(3).enumerate() {
            assert_eq!(rc.quota_decrypt("s", "svc", c).unwrap(), m as i64);
        }
        assert_eq!(rc.quota_decrypt("s", "svc", &cts[1]).unwrap(), 1);
        assert!(matches!(rc.quota_decrypt("s", "svc", &cts[3]), Err(IdentityError::QuotaExhausted { quota: 3, .. })));
        assert_eq!(rc.board().decryptions("s", "svc"), 3);

        let fresh_two = phe.encrypt(2, &mut rng).unwrap();
        assert_eq!(rc.lookup("s", "svc", &fresh_two).unwrap(), 2);
        assert_eq!(rc.lookup("s", "svc", &phe.lift(&fresh_two).unwrap()).unwrap(), 2);
        assert!(matches!(rc.lookup("s", "svc", &cts[3]), Err(IdentityError::CacheMiss)));
        assert_eq!(rc.remaining_quota("s", "svc").unwrap(), 0);
    }

    #[test]
    fn expired_cache_entries_are_not_served() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (phe, sk) = Transparent::new(1 << 20);
        let config = RcConfig { cache_validity: Some(Duration::ZERO), ..RcConfig::default() };
        let rc = RegistrationCenter::new(
            MasterKeys::generate(&mut rng),
            Arc::new(phe.clone()),
            sk,
            config,
            RcStorage::in_memory(),
        )
        .unwrap();
        rc.open_service("s", "svc", 2).unwrap();
        let c = phe.encrypt(5, &mut rng).unwrap();
        rc.quota_decrypt("s", "svc", &c).unwrap();
        std::thread::sleep(Duration::from_millis(2));
        assert!(matches!(rc.lookup("s", "svc", &c), Err(IdentityError::CacheMiss)));
        rc.quota_decrypt("s", "svc", &c).unwrap();
        assert_eq!(rc.remaining_quota("s", "svc").unwrap(), 0);
    }

    #[test]
    fn state_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let master = MasterKeys::generate(&mut rng);
        let (phe, sk) = Transparent::new(1 << 20);
        let phe = Arc::new(phe);
        let rid = Rid::from_label("alice");
        {
            let rc = RegistrationCenter::new(
                master.clone(),
                phe.clone(),
                sk.clone(),
                RcConfig::default(),
                RcStorage::open(dir.path()).unwrap(),
            )
            .unwrap();
            rc.register(rid, "pw", &mut rng).unwrap();
            rc.revoke(&rid).unwrap();
            rc.open_service("s", "svc", 1).unwrap();
            rc.quota_decrypt("s", "svc", &phe.one()).unwrap();
        }
        let rc = RegistrationCenter::new(
            master,
            phe.clone(),
            sk.clone(),
            RcConfig::default(),
            RcStorage::open(dir.path()).unwrap(),
        )
        .unwrap();
        assert!(rc.is_revoked(&rid));
        assert_eq!(rc.remaining_quota("s", "svc").unwrap(), 0);
        let other = MasterKeys::generate(&mut rng);
        let err = RegistrationCenter::new(other, phe, sk, RcConfig::default(), RcStorage::open(dir.path()).unwrap());
        assert!(matches!(err, Err(IdentityError::StateMismatch)));
    }
}
