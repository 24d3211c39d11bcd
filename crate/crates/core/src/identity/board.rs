//! The certificated bulletin board.
//!
//! The board is a [`RecordLog`] of [`BoardEvent`]s. Everything a participant
//! needs to audit a session is derived from the event sequence: the published
//! parameters, each session's submitted pseudo identities, the
//! whitelist/blacklist/resubmit-list, the declared decryption quotas and the
//! decryptions actually performed.
//!
//! Record layout (one JSON object per line, see [`super::log`]):
//!
//! ```text
//! {"seq":0,"prev":"00..","digest":"..","body":{"kind":"params",...}}
//! {"seq":1,...,"body":{"kind":"service_opened","session":"s1","service":"matching","quota":42}}
//! {"seq":2,...,"body":{"kind":"pids_posted","session":"s1","pids":[{"pid1":"..","pid2":".."}]}}
//! ```

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::log::{LogError, RecordLog};
use super::{PseudoIdentity, SystemParams};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceLists {
    pub whitelist: Vec<usize>,
    pub blacklist: Vec<usize>,
    pub resubmit: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoardEvent {
    Params {
        system: SystemParams,
        phe_backend: String,
        phe_params: serde_json::Value,
    },
    ServiceOpened {
        session: String,
        service: String,
        quota: u64,
    },
    PidsPosted {
        session: String,
        pids: Vec<PseudoIdentity>,
    },
    Lists {
        session: String,
        #[serde(flatten)]
        lists: TraceLists,
    },
    Decryption {
        session: String,
        service: String,
        /// SHA-256 of the decrypted ciphertext's encoding.
        ciphertext: String,
    },
    Revoked {
        /// SHA-256 commitment to the revoked real identity.
        commitment: String,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum BoardError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("session {0} already has posted pseudo identities")]
    PidsAlreadyPosted(String),
    #[error("session {0} has no posted pseudo identities")]
    NoPids(String),
    #[error("lists rejected: {0}")]
    InvalidLists(String),
    #[error("service {service} of session {session} already opened")]
    ServiceExists { session: String, service: String },
}

#[derive(Debug)]
pub struct BulletinBoard {
    log: RecordLog<BoardEvent>,
}

impl BulletinBoard {
    pub fn new(log: RecordLog<BoardEvent>) -> Self {
        BulletinBoard { log }
    }

    pub fn log(&self) -> &RecordLog<BoardEvent> {
        &self.log
    }

    pub fn events(&self) -> impl Iterator<Item = &BoardEvent> {
        self.log.bodies()
    }

    pub(crate) fn append(&mut self, event: BoardEvent) -> Result<(), BoardError> {
        self.log.append(event)?;
        Ok(())
    }

    pub fn params(&self) -> Option<&SystemParams> {
        self.events().find_map(|e| match e {
            BoardEvent::Params { system, .. } => Some(system),
            _ => None,
        })
    }

    pub fn phe_params(&self) -> Option<(&str, &serde_json::Value)> {
        self.events().find_map(|e| match e {
            BoardEvent::Params { phe_backend, phe_params, .. } => Some((phe_backend.as_str(), phe_params)),
            _ => None,
        })
    }

    pub fn quota(&self, session: &str, service: &str) -> Option<u64> {
        self.events().find_map(|e| match e {
            BoardEvent::ServiceOpened { session: s, service: v, quota } if s == session && v == service => Some(*quota),
            _ => None,
        })
    }

    /// Number of decryptions performed for one service.
    pub fn decryptions(&self, session: &str, service: &str) -> u64 {
        self.events()
            .filter(
                |e| matches!(e, BoardEvent::Decryption { session: s, service: v, .. } if s == session && v == service),
            )
            .count() as u64
    }

    pub fn pids(&self, session: &str) -> Option<&[PseudoIdentity]> {
        self.events().find_map(|e| match e {
            BoardEvent::PidsPosted { session: s, pids } if s == session => Some(pids.as_slice()),
            _ => None,
        })
    }

    /// The most recent lists posted for a session.
    pub fn lists(&self, session: &str) -> Option<&TraceLists> {
        self.events()
            .filter_map(|e| match e {
                BoardEvent::Lists { session: s, lists } if s == session => Some(lists),
                _ => None,
            })
            .last()
    }

    pub fn is_revoked_commitment(&self, commitment: &str) -> bool {
        self.events().any(|e| matches!(e, BoardEvent::Revoked { commitment: c } if c == commitment))
    }

    pub(crate) fn post_pids(&mut self, session: &str, pids: Vec<PseudoIdentity>) -> Result<(), BoardError> {
        if self.pids(session).is_some() {
            return Err(BoardError::PidsAlreadyPosted(session.to_string()));
        }
        self.append(BoardEvent::PidsPosted { session: session.to_string(), pids })
    }

    pub(crate) fn open_service(&mut self, session: &str, service: &str, quota: u64) -> Result<(), BoardError> {
        if self.quota(session, service).is_some() {
            return Err(BoardError::ServiceExists { session: session.to_string(), service: service.to_string() });
        }
        self.append(BoardEvent::ServiceOpened { session: session.to_string(), service: service.to_string(), quota })
    }

    pub(crate) fn post_lists(&mut self, session: &str, lists: TraceLists) -> Result<(), BoardError> {
        let n = self.pids(session).ok_or_else(|| BoardError::NoPids(session.to_string()))?.len();
        let mut seen = BTreeSet::new();
        for (name, list) in
            [("whitelist", &lists.whitelist), ("blacklist", &lists.blacklist), ("resubmit", &lists.resubmit)]
        {
            for &i in list {
                if i >= n {
                    return Err(BoardError::InvalidLists(format!("{name} index {i} out of range")));
                }
                if !seen.insert(i) {
                    return Err(BoardError::InvalidLists(format!("index {i} appears twice")));
                }
            }
        }
        self.append(BoardEvent::Lists { session: session.to_string(), lists })
    }
}
