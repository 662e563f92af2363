//! BLS12-381 backend: signatures and hashes in G1, public keys in G2.

use bls12_381::hash_to_curve::{ExpandMsgXmd, HashToCurve};
use bls12_381::{
    multi_miller_loop, pairing, G1Affine, G1Projective, G2Affine, G2Prepared, G2Projective, Gt,
    Scalar,
};
use ff::Field;
use group::Curve;
use rand::{CryptoRng, RngCore};

use super::PairingSuite;
use crate::error::{CryptoError, Result};

const HASH_DST: &[u8] = b"AMIGUARD-V01-CS01-with-BLS12381G1_XMD:SHA-256_SSWU_RO_";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Bls12Suite;

impl PairingSuite for Bls12Suite {
    type Scalar = Scalar;
    type Sig = G1Projective;
    type Pub = G2Projective;
    type Target = Gt;

    fn name(&self) -> &'static str {
        "bls12-381"
    }

    fn random_scalar<R: RngCore + CryptoRng + ?Sized>(&self, mut rng: &mut R) -> Scalar {
        loop {
            let s = Scalar::random(&mut rng);
            if !bool::from(s.is_zero()) {
                return s;
            }
        }
    }

    fn scalar_mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        a * b
    }

    fn sig_generator(&self) -> G1Projective {
        G1Projective::generator()
    }

    fn pub_generator(&self) -> G2Projective {
        G2Projective::generator()
    }

    fn sig_mul(&self, point: &G1Projective, k: &Scalar) -> G1Projective {
        point * k
    }

    fn sig_add(&self, a: &G1Projective, b: &G1Projective) -> G1Projective {
        a + b
    }

    fn sig_identity(&self) -> G1Projective {
        G1Projective::identity()
    }

    fn pub_mul(&self, point: &G2Projective, k: &Scalar) -> G2Projective {
        point * k
    }

    fn pub_identity(&self) -> G2Projective {
        G2Projective::identity()
    }

    fn hash_to_group(&self, msg: &[u8]) -> G1Projective {
        <G1Projective as HashToCurve<ExpandMsgXmd<sha2_09::Sha256>>>::hash_to_curve(msg, HASH_DST)
    }

    fn pair(&self, a: &G1Projective, b: &G2Projective) -> Gt {
        pairing(&a.to_affine(), &b.to_affine())
    }

    fn multi_pair(&self, terms: &[(G1Projective, G2Projective)]) -> Gt {
        let prepared: Vec<(G1Affine, G2Prepared)> = terms
            .iter()
            .map(|(a, b)| (a.to_affine(), G2Prepared::from(b.to_affine())))
            .collect();
        let refs: Vec<(&G1Affine, &G2Prepared)> = prepared.iter().map(|(a, b)| (a, b)).collect();
        multi_miller_loop(&refs).final_exponentiation()
    }

    fn target_pow(&self, t: &Gt, k: &Scalar) -> Gt {
        t * k
    }

    fn target_mul(&self, a: &Gt, b: &Gt) -> Gt {
        a + b
    }

    fn target_identity(&self) -> Gt {
        Gt::identity()
    }

    fn encode_sig(&self, s: &G1Projective) -> Vec<u8> {
        s.to_affine().to_compressed().to_vec()
    }

    fn decode_sig(&self, bytes: &[u8]) -> Result<G1Projective> {
        let arr: [u8; 48] = bytes
            .try_into()
            .map_err(|_| CryptoError::Encoding(format!("G1 point needs 48 bytes, got {}", bytes.len())))?;
        Option::<G1Affine>::from(G1Affine::from_compressed(&arr))
            .map(|p| G1Projective::from(&p))
            .ok_or_else(|| CryptoError::Encoding("not a G1 point".into()))
    }

    fn encode_pub(&self, p: &G2Projective) -> Vec<u8> {
        p.to_affine().to_compressed().to_vec()
    }

    fn decode_pub(&self, bytes: &[u8]) -> Result<G2Projective> {
        let arr: [u8; 96] = bytes
            .try_into()
            .map_err(|_| CryptoError::Encoding(format!("G2 point needs 96 bytes, got {}", bytes.len())))?;
        Option::<G2Affine>::from(G2Affine::from_compressed(&arr))
            .map(|p| G2Projective::from(&p))
            .ok_or_else(|| CryptoError::Encoding("not a G2 point".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairing::suite_tests;

    #[test]
    fn bilinear() {
        suite_tests::bilinearity(&Bls12Suite, 10);
    }

    #[test]
    fn multi_pair() {
        suite_tests::multi_pair_is_product(&Bls12Suite);
    }

    #[test]
    fn encodings() {
        suite_tests::encoding_round_trip(&Bls12Suite);
    }

    #[test]
    fn hashing() {
        suite_tests::hash_is_deterministic(&Bls12Suite);
    }
}
