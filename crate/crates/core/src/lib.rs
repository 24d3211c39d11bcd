//! Truthful and privacy-preserving data market protocol.
//!
//! Contributors obtain anonymous per-session pseudo identities from a
//! registration center, encrypt their raw data under a partially homomorphic
//! cryptosystem, and sign the ciphertexts (Encrypt-then-Sign). A service
//! provider batch-verifies submissions, traces invalid ones, evaluates a data
//! service homomorphically and forwards an aggregate signature; the consumer
//! re-verifies the signatures and spot-checks the outcome.
//!
//! Module map:
//!
//! * [`pairing`]: prime-order bilinear groups, MapToPoint and `h(·)`.
//! * [`phe`]: BGN-style encryption (one multiplication level) plus a transparent
//!   backend for exact-arithmetic testing.
//! * [`identity`]: registration center, pseudo identities, quota decryption and
//!   the bulletin board.
//! * [`ibs`]: signing, single/batch/aggregate verification.
//! * [`tracing`]: depth-limited search for invalid signatures.
//! * [`services`]: profile matching and Gaussian distribution fitting.

pub mod ibs;
pub mod identity;
pub mod metrics;
pub mod pairing;
pub mod phe;
pub mod services;
pub mod tracing;
