//! Paillier cryptosystem with `g = n + 1`.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{CryptoError, Result};

const MAX_KEYGEN_ATTEMPTS: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaillierPublicKey {
    n: BigUint,
    g: BigUint,
    n_squared: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaillierPrivateKey {
    lambda: BigUint,
    mu: BigUint,
}

/// A ciphertext in `Z*_{n^2}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ciphertext(BigUint);

impl Ciphertext {
    pub fn value(&self) -> &BigUint {
        &self.0
    }

    /// Big-endian magnitude bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.to_bytes_be()
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        Ciphertext(BigUint::from_bytes_be(bytes))
    }
}

/// `L(u) = (u - 1) / n`
fn l_function(u: &BigUint, n: &BigUint) -> BigUint {
    (u - 1u32) / n
}

impl PaillierPublicKey {
    /// Builds a key from an arbitrary generator, checking `g` is a unit mod `n^2`.
    pub fn with_generator(n: BigUint, g: BigUint) -> Result<Self> {
        let n_squared = &n * &n;
        if g.is_zero() || g >= n_squared || !g.gcd(&n).is_one() {
            return Err(CryptoError::Argument("generator must lie in Z*_{n^2}".into()));
        }
        Ok(Self { n, g, n_squared })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn bits(&self) -> u64 {
        self.n.bits()
    }

    fn g_pow(&self, m: &BigUint) -> BigUint {
        if self.g == &self.n + 1u32 {
            // (1 + n)^m = 1 + m n (mod n^2)
            (BigUint::one() + m * &self.n) % &self.n_squared
        } else {
            self.g.modpow(m, &self.n_squared)
        }
    }

    /// Encrypts with a fresh nonce; nonces sharing a factor with `n` are redrawn.
    pub fn encrypt<R: RngCore + CryptoRng + ?Sized>(&self, m: &BigUint, rng: &mut R) -> Result<Ciphertext> {
        let nonce = loop {
            let r = rng.gen_biguint_range(&BigUint::one(), &self.n);
            if r.gcd(&self.n).is_one() {
                break r;
            }
        };
        self.encrypt_with_nonce(m, &nonce)
    }

    /// `c = g^m r^n mod n^2` for a caller-chosen `r` in `Z*_n`.
    pub fn encrypt_with_nonce(&self, m: &BigUint, r: &BigUint) -> Result<Ciphertext> {
        if m >= &self.n {
            return Err(CryptoError::Argument("plaintext must lie in [0, n)".into()));
        }
        if r.is_zero() || r >= &self.n || !r.gcd(&self.n).is_one() {
            return Err(CryptoError::Argument("nonce must lie in Z*_n".into()));
        }
        let rn = r.modpow(&self.n, &self.n_squared);
        Ok(Ciphertext(self.g_pow(m) * rn % &self.n_squared))
    }

    /// `E(m1) * E(m2) mod n^2`, an encryption of `m1 + m2 mod n`.
    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
        Ciphertext(&a.0 * &b.0 % &self.n_squared)
    }

    /// Folds any number of ciphertexts; the empty product encrypts zero.
    pub fn sum<'a, I: IntoIterator<Item = &'a Ciphertext>>(&self, items: I) -> Ciphertext {
        Ciphertext(
            items
                .into_iter()
                .fold(BigUint::one(), |acc, c| acc * &c.0 % &self.n_squared),
        )
    }

    /// Whether `c` is a unit modulo `n^2`.
    pub fn is_valid(&self, c: &Ciphertext) -> bool {
        !c.0.is_zero() && c.0 < self.n_squared && c.0.gcd(&self.n).is_one()
    }
}

impl PaillierPrivateKey {
    /// `m = L(c^lambda mod n^2) * mu mod n`
    pub fn decrypt(&self, pk: &PaillierPublicKey, c: &Ciphertext) -> Result<BigUint> {
        if !pk.is_valid(c) {
            return Err(CryptoError::Ciphertext("not coprime to n^2 or out of range".into()));
        }
        let u = c.0.modpow(&self.lambda, &pk.n_squared);
        Ok(l_function(&u, &pk.n) * &self.mu % &pk.n)
    }

    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }
}

/// Generates a key pair whose modulus has exactly `bits` bits, from two
/// primes of `bits / 2` bits each.
pub fn keygen<R: RngCore + CryptoRng + ?Sized>(
    bits: usize,
    rng: &mut R,
) -> Result<(PaillierPublicKey, PaillierPrivateKey)> {
    if bits < 256 || bits % 2 != 0 {
        return Err(CryptoError::Argument("modulus size must be even and at least 256 bits".into()));
    }
    for _ in 0..MAX_KEYGEN_ATTEMPTS {
        let p = glass_pumpkin::prime::from_rng(bits / 2, rng)
            .map_err(|_| CryptoError::PrimeGeneration(1))?;
        let q = glass_pumpkin::prime::from_rng(bits / 2, rng)
            .map_err(|_| CryptoError::PrimeGeneration(1))?;
        if p == q {
            continue;
        }
        let n = &p * &q;
        if n.bits() != bits as u64 {
            continue;
        }
        let (p1, q1) = (&p - 1u32, &q - 1u32);
        if !n.gcd(&(&p1 * &q1)).is_one() {
            continue;
        }
        let lambda = p1.lcm(&q1);
        let pk = PaillierPublicKey::with_generator(n.clone(), &n + 1u32)?;
        let u = pk.g.modpow(&lambda, &pk.n_squared);
        let Some(mu) = l_function(&u, &n).modinv(&n) else {
            continue;
        };
        return Ok((pk, PaillierPrivateKey { lambda, mu }));
    }
    Err(CryptoError::PrimeGeneration(MAX_KEYGEN_ATTEMPTS))
}
