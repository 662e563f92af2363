//! Cryptographic building blocks for metering aggregation.
//!
//! - [`paillier`]: additively homomorphic encryption of readings.
//! - [`pairing`]: a pairing-suite abstraction with a BLS12-381 backend and an
//!   insecure, exactly bilinear test backend.
//! - [`signature`]: hash-and-sign signatures with batch verification.
//! - [`codec`]: fixed-point reading encoding and the canonical signed payload.

pub mod codec;
mod error;
pub mod paillier;
pub mod pairing;
pub mod signature;

pub use codec::{canonical_payload, parse_payload, ReadingCodec, READING_SCALE};
pub use error::{CryptoError, Result};
pub use paillier::{keygen, Ciphertext, PaillierPrivateKey, PaillierPublicKey};
pub use pairing::{Bls12Suite, PairingSuite, ToySuite};
pub use signature::{batch_verify, batch_verify_weighted, find_invalid, sign, verify_single, SigKeypair, Signed};
