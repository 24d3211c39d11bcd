//! Registration-center state on disk, for CLI commands that run one step at
//! a time.
//!
//! ```text
//! <dir>/rc.json                              master keys and PHE keys
//! <dir>/registry.ndjson                      registrations and revocations
//! <dir>/board.ndjson                         the bulletin board
//! <dir>/sessions/<id>/submissions.ndjson     tuples received by the provider
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tpdm::identity::log::{LogError, RecordLog};
use tpdm::identity::{MasterKeys, RcConfig, RcStorage, RegistrationCenter};
use tpdm::phe::bgn::{Bgn, BgnParams, BgnSecretKey};
use tpdm::phe::transparent::Transparent;
use tpdm::phe::HomomorphicScheme;

use crate::wire::WireTuple;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase")]
pub enum BackendState {
    Clear { bound: u64 },
    Bgn { params: BgnParams, secret: BgnSecretKey },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RcState {
    pub master: MasterKeys,
    pub backend: BackendState,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{0} already holds a registration center")]
    Exists(PathBuf),
    #[error("no registration center in {0}; run keygen first")]
    Missing(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("cannot start the registration center: {0}")]
    Center(String),
    #[error("invalid session id {0:?}")]
    SessionId(String),
}

/// Work that needs a running center, whichever PHE backend it uses.
pub trait CenterTask {
    type Output;
    fn run<S: HomomorphicScheme>(self, rc: &RegistrationCenter<S>, store: &Store) -> anyhow::Result<Self::Output>;
}

pub struct Store {
    dir: PathBuf,
}

impl Store {
    fn state_path(dir: &Path) -> PathBuf {
        dir.join("rc.json")
    }

    /// Writes a new center into `dir`, which must not hold one already.
    pub fn create(dir: &Path, state: &RcState) -> Result<Store, StoreError> {
        let path = Self::state_path(dir);
        if path.exists() {
            return Err(StoreError::Exists(dir.to_path_buf()));
        }
        fs::create_dir_all(dir).map_err(|source| StoreError::Io { path: dir.to_path_buf(), source })?;
        let json =
            serde_json::to_vec_pretty(state).map_err(|source| StoreError::Json { path: path.clone(), source })?;
        fs::write(&path, json).map_err(|source| StoreError::Io { path: path.clone(), source })?;
        let store = Store { dir: dir.to_path_buf() };
        // Starting the center once posts the public parameters to the board.
        store.with_center(PostParams)?;
        Ok(store)
    }

    pub fn open(dir: &Path) -> Result<Store, StoreError> {
        if !Self::state_path(dir).exists() {
            return Err(StoreError::Missing(dir.to_path_buf()));
        }
        Ok(Store { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn state(&self) -> Result<RcState, StoreError> {
        let path = Self::state_path(&self.dir);
        let bytes = fs::read(&path).map_err(|source| StoreError::Io { path: path.clone(), source })?;
        serde_json::from_slice(&bytes).map_err(|source| StoreError::Json { path, source })
    }

    pub fn with_center<T: CenterTask>(&self, task: T) -> Result<T::Output, StoreError> {
        let state = self.state()?;
        let storage = RcStorage::open(&self.dir)?;
        let center_err = |e: &dyn std::fmt::Display| StoreError::Center(e.to_string());
        match state.backend {
            BackendState::Clear { bound } => {
                let (phe, sk) = Transparent::new(bound);
                let rc = RegistrationCenter::new(state.master, Arc::new(phe), sk, RcConfig::default(), storage)
                    .map_err(|e| center_err(&e))?;
                task.run(&rc, self).map_err(|e| center_err(&e))
            }
            BackendState::Bgn { params, secret } => {
                let phe = Bgn::from_params(params).map_err(|e| center_err(&e))?;
                let rc = RegistrationCenter::new(state.master, Arc::new(phe), secret, RcConfig::default(), storage)
                    .map_err(|e| center_err(&e))?;
                task.run(&rc, self).map_err(|e| center_err(&e))
            }
        }
    }

    /// The provider's intake log for `session`.
    pub fn submissions(&self, session: &str) -> Result<RecordLog<WireTuple>, StoreError> {
        let valid = !session.is_empty()
            && session.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
            && session != "."
            && session != "..";
        if !valid {
            return Err(StoreError::SessionId(session.to_string()));
        }
        let dir = self.dir.join("sessions").join(session);
        fs::create_dir_all(&dir).map_err(|source| StoreError::Io { path: dir.clone(), source })?;
        Ok(RecordLog::open(dir.join("submissions.ndjson"))?)
    }
}

struct PostParams;

impl CenterTask for PostParams {
    type Output = ();
    fn run<S: HomomorphicScheme>(self, _: &RegistrationCenter<S>, _: &Store) -> anyhow::Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use tpdm::identity::Rid;

    struct Register(Rid);

    impl CenterTask for Register {
        type Output = bool;
        fn run<S: HomomorphicScheme>(self, rc: &RegistrationCenter<S>, _: &Store) -> anyhow::Result<bool> {
            let mut rng = ChaCha20Rng::seed_from_u64(0);
            if !rc.is_registered(&self.0) {
                rc.register(self.0, "pw", &mut rng)?;
            }
            Ok(rc.is_registered(&self.0))
        }
    }

    struct IsRegistered(Rid);

    impl CenterTask for IsRegistered {
        type Output = (bool, &'static str);
        fn run<S: HomomorphicScheme>(self, rc: &RegistrationCenter<S>, _: &Store) -> anyhow::Result<Self::Output> {
            Ok((rc.is_registered(&self.0), S::NAME))
        }
    }

    #[test]
    fn state_survives_reopening() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let state = RcState { master: MasterKeys::generate(&mut rng), backend: BackendState::Clear { bound: 100 } };
        let store = Store::create(dir.path(), &state).unwrap();
        assert!(matches!(Store::create(dir.path(), &state), Err(StoreError::Exists(_))));
        let rid = Rid::from_label("alice");
        assert!(store.with_center(Register(rid)).unwrap());
        let again = Store::open(dir.path()).unwrap();
        assert_eq!(again.with_center(IsRegistered(rid)).unwrap(), (true, "clear"));
        assert!(matches!(Store::open(&dir.path().join("nope")), Err(StoreError::Missing(_))));
    }

    #[test]
    fn session_ids_cannot_escape_the_store() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let state = RcState { master: MasterKeys::generate(&mut rng), backend: BackendState::Clear { bound: 100 } };
        let store = Store::create(dir.path(), &state).unwrap();
        assert!(store.submissions("../x").is_err());
        assert!(store.submissions("").is_err());
        assert!(store.submissions("day-1").is_ok());
    }
}
