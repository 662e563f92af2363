//! Bilinear pairing abstraction.
//!
//! Signatures and hashes live in [`PairingSuite::Sig`], public keys in
//! [`PairingSuite::Pub`]. For a symmetric pairing the two coincide; the
//! curve backend uses the asymmetric G1 x G2 setting.

mod bls;
mod toy;

use std::fmt::Debug;

use rand::{CryptoRng, RngCore};

use crate::error::Result;

pub use bls::Bls12Suite;
pub use toy::ToySuite;

pub trait PairingSuite: Clone + Send + Sync + Debug {
    type Scalar: Clone + Debug + PartialEq + Send + Sync;
    type Sig: Clone + Debug + PartialEq + Send + Sync;
    type Pub: Clone + Debug + PartialEq + Send + Sync;
    type Target: Clone + Debug + PartialEq + Send + Sync;

    fn name(&self) -> &'static str;

    /// Uniform non-zero scalar.
    fn random_scalar<R: RngCore + CryptoRng + ?Sized>(&self, rng: &mut R) -> Self::Scalar;
    fn scalar_mul(&self, a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar;

    fn sig_generator(&self) -> Self::Sig;
    /// The public generator `P`.
    fn pub_generator(&self) -> Self::Pub;

    fn sig_mul(&self, point: &Self::Sig, k: &Self::Scalar) -> Self::Sig;
    fn sig_add(&self, a: &Self::Sig, b: &Self::Sig) -> Self::Sig;
    fn sig_identity(&self) -> Self::Sig;
    fn pub_mul(&self, point: &Self::Pub, k: &Self::Scalar) -> Self::Pub;
    fn pub_identity(&self) -> Self::Pub;

    /// `H: {0,1}* -> Sig`
    fn hash_to_group(&self, msg: &[u8]) -> Self::Sig;

    fn pair(&self, a: &Self::Sig, b: &Self::Pub) -> Self::Target;
    /// Product of pairings; backends may share the final exponentiation.
    fn multi_pair(&self, terms: &[(Self::Sig, Self::Pub)]) -> Self::Target;
    fn target_pow(&self, t: &Self::Target, k: &Self::Scalar) -> Self::Target;
    fn target_mul(&self, a: &Self::Target, b: &Self::Target) -> Self::Target;
    fn target_identity(&self) -> Self::Target;

    fn encode_sig(&self, s: &Self::Sig) -> Vec<u8>;
    fn decode_sig(&self, bytes: &[u8]) -> Result<Self::Sig>;
    fn encode_pub(&self, p: &Self::Pub) -> Vec<u8>;
    fn decode_pub(&self, bytes: &[u8]) -> Result<Self::Pub>;
}
