//! Exactly bilinear, deliberately insecure pairing over an order-q subgroup of
//! `Z_p*`. Group elements are carried as their discrete logs, so
//! `e(aP, bP) = gT^(ab)` is a single exponentiation. For protocol tests only.

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha512};

use super::PairingSuite;
use crate::error::{CryptoError, Result};

const HASH_DOMAIN: &[u8] = b"amiguard/toy-suite/h2g/v1";
const MAX_COFACTOR_ATTEMPTS: usize = 100_000;

/// An element of the source group, held as its exponent relative to `P`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ToyPoint(BigUint);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToySuite {
    q: BigUint,
    p: BigUint,
    gt: BigUint,
    elem_len: usize,
}

impl ToySuite {
    pub const DEFAULT_ORDER_BITS: usize = 160;
    pub const DEFAULT_FIELD_BITS: usize = 512;

    /// Generates `q` (prime), `p = kq + 1` (prime) and a generator of the
    /// order-`q` subgroup of `Z_p*`.
    pub fn generate<R: RngCore + CryptoRng + ?Sized>(
        order_bits: usize,
        field_bits: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if order_bits < 128 || field_bits <= order_bits + 16 {
            return Err(CryptoError::Argument(format!(
                "unsupported toy sizes: order {order_bits}, field {field_bits}"
            )));
        }
        let q = glass_pumpkin::prime::from_rng(order_bits, rng)
            .map_err(|_| CryptoError::PrimeGeneration(1))?;
        let k_bits = (field_bits - order_bits) as u64;
        for _ in 0..MAX_COFACTOR_ATTEMPTS {
            let mut k = rng.gen_biguint(k_bits);
            k.set_bit(k_bits - 1, true);
            k.set_bit(0, false);
            let p = &k * &q + 1u32;
            if p.bits() != field_bits as u64 || !glass_pumpkin::prime::check_with(&p, rng) {
                continue;
            }
            let exp = (&p - 1u32) / &q;
            let gt = loop {
                let h = rng.gen_biguint_range(&BigUint::from(2u32), &(&p - 1u32));
                let g = h.modpow(&exp, &p);
                if !g.is_one() {
                    break g;
                }
            };
            let elem_len = (q.bits() as usize).div_ceil(8);
            return Ok(Self { q, p, gt, elem_len });
        }
        Err(CryptoError::PrimeGeneration(MAX_COFACTOR_ATTEMPTS))
    }

    /// Default-size suite derived from a seed.
    pub fn from_seed(seed: u64) -> Result<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Self::generate(Self::DEFAULT_ORDER_BITS, Self::DEFAULT_FIELD_BITS, &mut rng)
    }

    /// Group order `q1`.
    pub fn order(&self) -> &BigUint {
        &self.q
    }

    pub fn field_modulus(&self) -> &BigUint {
        &self.p
    }

    fn encode(&self, x: &ToyPoint) -> Vec<u8> {
        let raw = x.0.to_bytes_be();
        let mut out = vec![0u8; self.elem_len - raw.len().min(self.elem_len)];
        out.extend_from_slice(&raw);
        out
    }

    fn decode(&self, bytes: &[u8]) -> Result<ToyPoint> {
        if bytes.len() != self.elem_len {
            return Err(CryptoError::Encoding(format!(
                "expected {} bytes, got {}",
                self.elem_len,
                bytes.len()
            )));
        }
        let v = BigUint::from_bytes_be(bytes);
        if v >= self.q {
            return Err(CryptoError::Encoding("element exceeds group order".into()));
        }
        Ok(ToyPoint(v))
    }
}

impl PairingSuite for ToySuite {
    type Scalar = BigUint;
    type Sig = ToyPoint;
    type Pub = ToyPoint;
    type Target = BigUint;

    fn name(&self) -> &'static str {
        "toy-zp"
    }

    fn random_scalar<R: RngCore + CryptoRng + ?Sized>(&self, rng: &mut R) -> BigUint {
        rng.gen_biguint_range(&BigUint::one(), &self.q)
    }

    fn scalar_mul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        a * b % &self.q
    }

    fn sig_generator(&self) -> ToyPoint {
        ToyPoint(BigUint::one())
    }

    fn pub_generator(&self) -> ToyPoint {
        ToyPoint(BigUint::one())
    }

    fn sig_mul(&self, point: &ToyPoint, k: &BigUint) -> ToyPoint {
        ToyPoint(&point.0 * k % &self.q)
    }

    fn sig_add(&self, a: &ToyPoint, b: &ToyPoint) -> ToyPoint {
        ToyPoint((&a.0 + &b.0) % &self.q)
    }

    fn sig_identity(&self) -> ToyPoint {
        ToyPoint(BigUint::zero())
    }

    fn pub_mul(&self, point: &ToyPoint, k: &BigUint) -> ToyPoint {
        self.sig_mul(point, k)
    }

    fn pub_identity(&self) -> ToyPoint {
        self.sig_identity()
    }

    fn hash_to_group(&self, msg: &[u8]) -> ToyPoint {
        let digest = Sha512::new().chain_update(HASH_DOMAIN).chain_update(msg).finalize();
        let e = BigUint::from_bytes_be(&digest) % &self.q;
        ToyPoint(if e.is_zero() { BigUint::one() } else { e })
    }

    fn pair(&self, a: &ToyPoint, b: &ToyPoint) -> BigUint {
        self.gt.modpow(&(&a.0 * &b.0 % &self.q), &self.p)
    }

    fn multi_pair(&self, terms: &[(ToyPoint, ToyPoint)]) -> BigUint {
        let e = terms
            .iter()
            .fold(BigUint::zero(), |acc, (a, b)| (acc + &a.0 * &b.0) % &self.q);
        self.gt.modpow(&e, &self.p)
    }

    fn target_pow(&self, t: &BigUint, k: &BigUint) -> BigUint {
        t.modpow(k, &self.p)
    }

    fn target_mul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        a * b % &self.p
    }

    fn target_identity(&self) -> BigUint {
        BigUint::one()
    }

    fn encode_sig(&self, s: &ToyPoint) -> Vec<u8> {
        self.encode(s)
    }

    fn decode_sig(&self, bytes: &[u8]) -> Result<ToyPoint> {
        self.decode(bytes)
    }

    fn encode_pub(&self, p: &ToyPoint) -> Vec<u8> {
        self.encode(p)
    }

    fn decode_pub(&self, bytes: &[u8]) -> Result<ToyPoint> {
        self.decode(bytes)
    }
}
