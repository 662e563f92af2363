//! Hash-and-sign signatures `sigma = x H(m)` with batch verification.

use rand::{CryptoRng, RngCore};

use crate::error::{CryptoError, Result};
use crate::pairing::PairingSuite;

#[derive(Clone, Debug, PartialEq)]
pub struct SigKeypair<S: PairingSuite> {
    secret: S::Scalar,
    public: S::Pub,
}

impl<S: PairingSuite> SigKeypair<S> {
    pub fn generate<R: RngCore + CryptoRng + ?Sized>(suite: &S, rng: &mut R) -> Self {
        let secret = suite.random_scalar(rng);
        let public = suite.pub_mul(&suite.pub_generator(), &secret);
        Self { secret, public }
    }

    pub fn secret(&self) -> &S::Scalar {
        &self.secret
    }

    /// `Y = xP`
    pub fn public(&self) -> &S::Pub {
        &self.public
    }

    pub fn sign(&self, suite: &S, payload: &[u8]) -> S::Sig {
        sign(suite, &self.secret, payload)
    }
}

/// One `(sigma, Y, payload)` triple awaiting verification.
#[derive(Debug)]
pub struct Signed<'a, S: PairingSuite> {
    pub sigma: &'a S::Sig,
    pub public: &'a S::Pub,
    pub payload: &'a [u8],
}

impl<S: PairingSuite> Clone for Signed<'_, S> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<S: PairingSuite> Copy for Signed<'_, S> {}

pub fn sign<S: PairingSuite>(suite: &S, secret: &S::Scalar, payload: &[u8]) -> S::Sig {
    suite.sig_mul(&suite.hash_to_group(payload), secret)
}

/// `e(sigma, P) == e(H(payload), Y)`; identity signatures and keys are rejected.
pub fn verify_single<S: PairingSuite>(suite: &S, sigma: &S::Sig, public: &S::Pub, payload: &[u8]) -> bool {
    if *sigma == suite.sig_identity() || *public == suite.pub_identity() {
        return false;
    }
    suite.pair(sigma, &suite.pub_generator()) == suite.pair(&suite.hash_to_group(payload), public)
}

/// `e(sum sigma_i, P) == prod e(H(m_i), Y_i)`.
pub fn batch_verify<S: PairingSuite>(suite: &S, items: &[Signed<'_, S>]) -> Result<bool> {
    if items.is_empty() {
        return Err(CryptoError::Argument("batch verification needs at least one signature".into()));
    }
    if items
        .iter()
        .any(|it| *it.sigma == suite.sig_identity() || *it.public == suite.pub_identity())
    {
        return Ok(false);
    }
    let total = items
        .iter()
        .fold(suite.sig_identity(), |acc, it| suite.sig_add(&acc, it.sigma));
    let terms: Vec<_> = items
        .iter()
        .map(|it| (suite.hash_to_group(it.payload), it.public.clone()))
        .collect();
    Ok(suite.pair(&total, &suite.pub_generator()) == suite.multi_pair(&terms))
}

/// Small-exponent variant: each term is weighted by a fresh random scalar, so
/// errors in different signatures cannot cancel.
pub fn batch_verify_weighted<S: PairingSuite, R: RngCore + CryptoRng + ?Sized>(
    suite: &S,
    items: &[Signed<'_, S>],
    rng: &mut R,
) -> Result<bool> {
    if items.is_empty() {
        return Err(CryptoError::Argument("batch verification needs at least one signature".into()));
    }
    if items
        .iter()
        .any(|it| *it.sigma == suite.sig_identity() || *it.public == suite.pub_identity())
    {
        return Ok(false);
    }
    let mut total = suite.sig_identity();
    let mut terms = Vec::with_capacity(items.len());
    for it in items {
        let d = suite.random_scalar(rng);
        total = suite.sig_add(&total, &suite.sig_mul(it.sigma, &d));
        terms.push((suite.hash_to_group(it.payload), suite.pub_mul(it.public, &d)));
    }
    Ok(suite.pair(&total, &suite.pub_generator()) == suite.multi_pair(&terms))
}

/// Indices whose individual verification fails.
pub fn find_invalid<S: PairingSuite>(suite: &S, items: &[Signed<'_, S>]) -> Vec<usize> {
    items
        .iter()
        .enumerate()
        .filter(|(_, it)| !verify_single(suite, it.sigma, it.public, it.payload))
        .map(|(i, _)| i)
        .collect()
}
