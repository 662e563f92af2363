use std::sync::OnceLock;

use amiguard_crypto::pairing::PairingSuite;
use amiguard_crypto::{
    batch_verify, canonical_payload, keygen, verify_single, Ciphertext, PaillierPrivateKey,
    PaillierPublicKey, SigKeypair, Signed, ToySuite,
};
use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn keys() -> &'static (PaillierPublicKey, PaillierPrivateKey) {
    static KEYS: OnceLock<(PaillierPublicKey, PaillierPrivateKey)> = OnceLock::new();
    KEYS.get_or_init(|| keygen(512, &mut ChaCha20Rng::seed_from_u64(2024)).unwrap())
}

fn suite() -> &'static ToySuite {
    static SUITE: OnceLock<ToySuite> = OnceLock::new();
    SUITE.get_or_init(|| ToySuite::from_seed(77).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip(seed in any::<u64>()) {
        let (pk, sk) = keys();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let m = rng.gen_biguint_below(pk.n());
        let c = pk.encrypt(&m, &mut rng).unwrap();
        prop_assert!(c.value().gcd(pk.n_squared()).is_one());
        prop_assert_eq!(sk.decrypt(pk, &c).unwrap(), m);
    }

    #[test]
    fn fold_decrypts_to_sum_mod_n(seed in any::<u64>(), k in 1usize..60) {
        let (pk, sk) = keys();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let ms: Vec<BigUint> = (0..k).map(|_| rng.gen_biguint_below(pk.n())).collect();
        let cs: Vec<Ciphertext> = ms.iter().map(|m| pk.encrypt(m, &mut rng).unwrap()).collect();
        let expected = ms.iter().fold(BigUint::zero(), |a, m| a + m) % pk.n();
        prop_assert_eq!(sk.decrypt(pk, &pk.sum(&cs)).unwrap(), expected);
    }

    #[test]
    fn equal_plaintexts_rerandomize(m in any::<u64>(), seed in any::<u64>()) {
        let (pk, _) = keys();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let m = BigUint::from(m);
        prop_assert_ne!(pk.encrypt(&m, &mut rng).unwrap(), pk.encrypt(&m, &mut rng).unwrap());
    }

    #[test]
    fn any_byte_flip_breaks_the_batch(seed in any::<u64>(), k in 1usize..12, which in 0usize..3, pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let s = suite();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let keys: Vec<SigKeypair<ToySuite>> = (0..k).map(|_| SigKeypair::generate(s, &mut rng)).collect();
        let payloads: Vec<Vec<u8>> = (0..k)
            .map(|i| canonical_payload(&Ciphertext::from_bytes(&rng.gen_biguint(256).to_bytes_be()), i as u64))
            .collect();
        let mut sigs: Vec<Vec<u8>> = keys.iter().zip(&payloads).map(|(kp, p)| s.encode_sig(&kp.sign(s, p))).collect();
        let mut pubs: Vec<Vec<u8>> = keys.iter().map(|kp| s.encode_pub(kp.public())).collect();
        let mut payloads = payloads;
        let target = pos.index(k);
        let buf = match which {
            0 => &mut sigs[target],
            1 => &mut pubs[target],
            _ => &mut payloads[target],
        };
        let byte = pos.index(buf.len());
        buf[byte] ^= flip;

        let decoded: Option<Vec<_>> = sigs.iter().zip(&pubs)
            .map(|(sg, pb)| Some((s.decode_sig(sg).ok()?, s.decode_pub(pb).ok()?)))
            .collect();
        // Undecodable bytes count as rejection.
        if let Some(decoded) = decoded {
            let items: Vec<Signed<ToySuite>> = decoded.iter().zip(&payloads)
                .map(|((sg, pb), p)| Signed { sigma: sg, public: pb, payload: p })
                .collect();
            prop_assert!(!batch_verify(s, &items).unwrap());
            prop_assert!(!verify_single(s, &decoded[target].0, &decoded[target].1, &payloads[target]));
        }
    }
}
