use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::One;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::primes::{is_safe_prime, search_safe_prime};
use super::AccumulatorError;
use crate::encoding::{b64_bytes, hex_biguint};

/// Smallest modulus `setup` will attempt.
pub const MIN_MODULUS_BITS: u32 = 16;

/// Public accumulator parameters: an RSA modulus built from two safe primes
/// and a quadratic-residue generator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccumulatorParams {
    #[serde(rename = "modulus_hex", with = "hex_biguint")]
    pub modulus: BigUint,
    #[serde(rename = "generator_hex", with = "hex_biguint")]
    pub generator: BigUint,
    pub modulus_bits: u32,
    #[serde(rename = "setup_seed_b64", with = "b64_bytes")]
    pub setup_seed: Vec<u8>,
}

/// `phi(N) = (p - 1)(q - 1)`. Committee-side only.
#[derive(Clone, PartialEq, Eq)]
pub struct Trapdoor {
    phi: BigUint,
}

impl Trapdoor {
    pub fn phi(&self) -> &BigUint {
        &self.phi
    }

    /// `x^-1 mod phi(N)`.
    pub fn inverse_exponent(&self, x: &BigUint) -> Result<BigUint, AccumulatorError> {
        x.modinv(&self.phi).ok_or(AccumulatorError::NotCoprime)
    }

    /// The unique `x`-th root of `z` in the QR subgroup: `z^(x^-1 mod phi)`.
    pub fn root(&self, z: &BigUint, x: &BigUint, modulus: &BigUint) -> Result<BigUint, AccumulatorError> {
        Ok(z.modpow(&self.inverse_exponent(x)?, modulus))
    }
}

impl fmt::Debug for Trapdoor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Trapdoor(..)")
    }
}

/// Deterministic trusted setup: identical `(seed, modulus_bits)` always
/// yields identical `(N, g)` and trapdoor.
pub fn setup(seed: &[u8], modulus_bits: u32) -> Result<(AccumulatorParams, Trapdoor), AccumulatorError> {
    if modulus_bits < MIN_MODULUS_BITS {
        return Err(AccumulatorError::ModulusTooSmall(modulus_bits));
    }
    let mut h = Sha256::new();
    h.update(b"postate/setup/");
    h.update(modulus_bits.to_be_bytes());
    h.update(seed);
    let mut rng = ChaCha20Rng::from_seed(h.finalize().into());

    let p_bits = u64::from(modulus_bits / 2);
    let q_bits = u64::from(modulus_bits) - p_bits;
    let p = search_safe_prime(p_bits, &mut rng, None).ok_or(AccumulatorError::ModulusTooSmall(modulus_bits))?;
    let q = search_safe_prime(q_bits, &mut rng, Some(&p)).ok_or(AccumulatorError::ModulusTooSmall(modulus_bits))?;

    let modulus = &p * &q;
    let phi = (&p - 1u32) * (&q - 1u32);
    let generator = loop {
        let r = rng.gen_biguint_range(&BigUint::from(2u8), &(&modulus - 1u32));
        let g = (&r * &r) % &modulus;
        if g > BigUint::one() && g.gcd(&modulus).is_one() {
            break g;
        }
    };
    debug_assert_eq!(modulus.bits(), u64::from(modulus_bits));
    Ok((AccumulatorParams { modulus, generator, modulus_bits, setup_seed: seed.to_vec() }, Trapdoor { phi }))
}

/// Explicit parameter injection for toy moduli. Checks that `p` and `q` are
/// distinct safe primes and that `g` is a non-trivial quadratic residue.
pub fn from_safe_primes(
    p: &BigUint,
    q: &BigUint,
    generator: &BigUint,
) -> Result<(AccumulatorParams, Trapdoor), AccumulatorError> {
    let invalid = |why: &str| AccumulatorError::InvalidParameters(why.to_string());
    if p == q {
        return Err(invalid("p and q must be distinct"));
    }
    if !is_safe_prime(p) || !is_safe_prime(q) {
        return Err(invalid("p and q must be safe primes"));
    }
    let modulus = p * q;
    if generator <= &BigUint::one() || generator >= &modulus {
        return Err(invalid("generator must lie in [2, N)"));
    }
    // Euler's criterion modulo each factor.
    for f in [p, q] {
        if !generator.modpow(&(f >> 1u32), f).is_one() {
            return Err(invalid("generator must be a quadratic residue mod N"));
        }
    }
    let phi = (p - 1u32) * (q - 1u32);
    let modulus_bits = modulus.bits() as u32;
    Ok((
        AccumulatorParams { modulus, generator: generator.clone(), modulus_bits, setup_seed: Vec::new() },
        Trapdoor { phi },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_parameters() {
        let (params, trapdoor) =
            from_safe_primes(&BigUint::from(23u32), &BigUint::from(47u32), &BigUint::from(4u32)).unwrap();
        assert_eq!(params.modulus, BigUint::from(1081u32));
        assert_eq!(trapdoor.phi(), &BigUint::from(1012u32));
        assert_eq!(params.generator, BigUint::from(4u32));
    }

    #[test]
    fn toy_parameters_rejected() {
        let b = |x: u32| BigUint::from(x);
        assert!(from_safe_primes(&b(23), &b(23), &b(4)).is_err());
        assert!(from_safe_primes(&b(13), &b(47), &b(4)).is_err());
        assert!(from_safe_primes(&b(23), &b(47), &b(1)).is_err());
        // 5 is a non-residue mod 23
        assert!(from_safe_primes(&b(23), &b(47), &b(5)).is_err());
    }

    #[test]
    fn setup_is_deterministic() {
        let (a, ta) = setup(b"seed", 128).unwrap();
        let (b, tb) = setup(b"seed", 128).unwrap();
        assert_eq!(a, b);
        assert!(ta == tb);
        let (c, _) = setup(b"other", 128).unwrap();
        assert_ne!(a.modulus, c.modulus);
    }

    #[test]
    fn setup_invariants() {
        for bits in [64u32, 65, 96, 128] {
            let (params, trapdoor) = setup(b"inv", bits).unwrap();
            assert_eq!(params.modulus.bits(), u64::from(bits));
            assert!(params.generator > BigUint::one());
            assert!(params.generator < params.modulus);
            // g is a square of something, so g^(phi/4) == 1 mod N (QR order divides p'q').
            let quarter = trapdoor.phi() >> 2u32;
            assert!(params.generator.modpow(&quarter, &params.modulus).is_one());
        }
    }

    #[test]
    fn tiny_moduli_fail_or_are_sound() {
        assert!(matches!(setup(b"s", 8), Err(AccumulatorError::ModulusTooSmall(8))));
        for seed in [b"a", b"b", b"c"] {
            if let Ok((params, trapdoor)) = setup(seed, 16) {
                // Recover p and q from N and phi: p + q = N - phi + 1.
                let n = &params.modulus;
                let s = n + 1u32 - trapdoor.phi();
                let disc = &s * &s - n * 4u32;
                let root = disc.sqrt();
                let p = (&s + &root) >> 1u32;
                let q = (&s - &root) >> 1u32;
                assert_ne!(p, q);
                assert!(is_safe_prime(&p) && is_safe_prime(&q));
            }
        }
    }
}
