//! Serialized messages between roles and the session transcript.
//!
//! Roles never hand each other Rust values: every message is encoded to JSON
//! bytes, recorded in the transcript and decoded on the receiving side.
//! Ciphertexts travel as hex of their wire encoding and are re-decoded (and
//! thereby validated) by the receiver.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tpdm::ibs::{AggregateSignature, DataTuple, Signature};
use tpdm::identity::log::{LogError, RecordLog};
use tpdm::identity::PseudoIdentity;
use tpdm::phe::{HomomorphicScheme, PheCiphertext, PheError};
use tpdm::services::fitting::GaussianFit;
use tpdm::services::matching::{MatchOutcome, MatchingQuery};

use crate::config::SessionConfig;
use crate::session::SessionOutcome;

/// Messages larger than this are recorded by size and digest only.
pub const BODY_LIMIT: usize = 16 * 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    RegistrationCenter,
    Contributor,
    Provider,
    Consumer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TranscriptRecord {
    Config {
        config: SessionConfig,
    },
    Message {
        phase: u8,
        from: Role,
        to: Role,
        kind: String,
        bytes: usize,
        digest: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        body: Option<serde_json::Value>,
    },
    Event {
        phase: u8,
        note: String,
    },
    Outcome {
        outcome: SessionOutcome,
    },
}

pub type Transcript = RecordLog<TranscriptRecord>;

fn ct_hex<C: PheCiphertext>(cs: &[C]) -> Vec<String> {
    cs.iter().map(|c| hex::encode(c.to_bytes())).collect()
}

fn ct_decode<S: HomomorphicScheme>(scheme: &S, hexes: &[String]) -> Result<Vec<S::Ciphertext>, WireError> {
    hexes
        .iter()
        .map(|h| {
            let bytes = hex::decode(h).map_err(|_| WireError::Malformed("ciphertext hex"))?;
            Ok(scheme.decode(&bytes)?)
        })
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("malformed message: {0}")]
    Malformed(&'static str),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Phe(#[from] PheError),
    #[error(transparent)]
    Log(#[from] LogError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireTuple {
    pub pid: PseudoIdentity,
    pub schema: String,
    pub ciphertexts: Vec<String>,
    pub sigma: Signature,
}

impl WireTuple {
    pub fn encode<C: PheCiphertext>(t: &DataTuple<C>) -> Self {
        WireTuple {
            pid: t.pid,
            schema: String::from_utf8_lossy(&t.schema).into_owned(),
            ciphertexts: ct_hex(&t.ciphertexts),
            sigma: t.sigma,
        }
    }

    pub fn decode<S: HomomorphicScheme>(&self, scheme: &S) -> Result<DataTuple<S::Ciphertext>, WireError> {
        Ok(DataTuple {
            pid: self.pid,
            schema: self.schema.clone().into_bytes(),
            ciphertexts: ct_decode(scheme, &self.ciphertexts)?,
            sigma: self.sigma,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireQuery {
    pub d0: Vec<String>,
    pub delta: u64,
}

impl WireQuery {
    pub fn encode<C: PheCiphertext>(q: &MatchingQuery<C>) -> Self {
        WireQuery { d0: ct_hex(&q.d0), delta: q.delta }
    }

    pub fn decode<S: HomomorphicScheme>(&self, scheme: &S) -> Result<MatchingQuery<S::Ciphertext>, WireError> {
        Ok(MatchingQuery { d0: ct_decode(scheme, &self.d0)?, delta: self.delta })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireMatchOutcome {
    pub matched: Vec<usize>,
    pub aggregate: Option<AggregateSignature>,
    pub matched_vectors: Vec<Vec<String>>,
    pub unmatched: Vec<(usize, i64)>,
}

impl WireMatchOutcome {
    pub fn encode<C: PheCiphertext>(o: &MatchOutcome<C>) -> Self {
        WireMatchOutcome {
            matched: o.matched.clone(),
            aggregate: o.aggregate.clone(),
            matched_vectors: o.matched_vectors.iter().map(|v| ct_hex(v)).collect(),
            unmatched: o.unmatched.clone(),
        }
    }

    pub fn decode<S: HomomorphicScheme>(&self, scheme: &S) -> Result<MatchOutcome<S::Ciphertext>, WireError> {
        Ok(MatchOutcome {
            matched: self.matched.clone(),
            aggregate: self.aggregate.clone(),
            matched_vectors: self.matched_vectors.iter().map(|v| ct_decode(scheme, v)).collect::<Result<_, _>>()?,
            unmatched: self.unmatched.clone(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireFitOutcome {
    pub fit: GaussianFit,
    pub aggregate: AggregateSignature,
    pub tuples: Vec<(usize, WireTuple)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TupleRequest {
    pub index: usize,
}

/// Point-to-point transport that serializes every message and records it.
pub struct Channel {
    pub transcript: Transcript,
}

impl Channel {
    pub fn new(transcript: Transcript) -> Self {
        Channel { transcript }
    }

    /// Encodes `msg`, appends it to the transcript and returns the receiver's
    /// decoded copy.
    pub fn send<T: Serialize + DeserializeOwned>(
        &mut self,
        phase: u8,
        from: Role,
        to: Role,
        kind: &str,
        msg: &T,
    ) -> Result<T, WireError> {
        self.transmit(phase, from, to, kind, msg, true)
    }

    /// Like [`Channel::send`] but records only size and digest, for bulk
    /// traffic such as submissions.
    pub fn send_bulk<T: Serialize + DeserializeOwned>(
        &mut self,
        phase: u8,
        from: Role,
        to: Role,
        kind: &str,
        msg: &T,
    ) -> Result<T, WireError> {
        self.transmit(phase, from, to, kind, msg, false)
    }

    fn transmit<T: Serialize + DeserializeOwned>(
        &mut self,
        phase: u8,
        from: Role,
        to: Role,
        kind: &str,
        msg: &T,
        keep_body: bool,
    ) -> Result<T, WireError> {
        let bytes = serde_json::to_vec(msg)?;
        let digest = hex::encode(Sha256::digest(&bytes));
        let body = if keep_body && bytes.len() <= BODY_LIMIT { Some(serde_json::from_slice(&bytes)?) } else { None };
        self.transcript.append(TranscriptRecord::Message {
            phase,
            from,
            to,
            kind: kind.to_string(),
            bytes: bytes.len(),
            digest,
            body,
        })?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn note(&mut self, phase: u8, note: impl Into<String>) -> Result<(), WireError> {
        self.transcript.append(TranscriptRecord::Event { phase, note: note.into() })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use tpdm::phe::transparent::Transparent;

    #[test]
    fn query_survives_the_wire_and_is_recorded() {
        let (phe, _) = Transparent::new(1000);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let q =
            MatchingQuery { d0: vec![phe.encrypt(4, &mut rng).unwrap(), phe.encrypt(-4, &mut rng).unwrap()], delta: 3 };
        let mut ch = Channel::new(Transcript::in_memory());
        let got = ch.send(4, Role::Consumer, Role::Provider, "query", &WireQuery::encode(&q)).unwrap();
        assert_eq!(got.decode(&phe).unwrap(), q);
        match &ch.transcript.entries()[0].body {
            TranscriptRecord::Message { kind, body: Some(_), from: Role::Consumer, .. } => assert_eq!(kind, "query"),
            other => panic!("unexpected record {other:?}"),
        }
    }

    #[test]
    fn garbage_ciphertexts_are_rejected_on_receipt() {
        let (phe, _) = Transparent::new(1000);
        let w = WireQuery { d0: vec!["00ff".into()], delta: 1 };
        assert!(matches!(w.decode(&phe), Err(WireError::Phe(_))));
        let w = WireQuery { d0: vec!["zz".into()], delta: 1 };
        assert!(matches!(w.decode(&phe), Err(WireError::Malformed(_))));
    }
}
