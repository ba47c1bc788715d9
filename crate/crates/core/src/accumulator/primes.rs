//! Primality testing, hash-to-prime, and deterministic safe-prime search.

use std::sync::OnceLock;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::AccumulatorError;
use crate::encoding::hex_biguint;

/// Miller-Rabin rounds for every primality decision (error below 2^-128).
pub const MILLER_RABIN_ROUNDS: usize = 64;

/// Upper bound on the hash-to-prime nonce search.
pub const MAX_NONCE: u64 = 1 << 32;

const SIEVE_LIMIT: u32 = 2048;

pub(crate) fn small_primes() -> &'static [u32] {
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let n = SIEVE_LIMIT as usize;
        let mut composite = vec![false; n + 1];
        let mut out = Vec::new();
        for i in 2..=n {
            if !composite[i] {
                out.push(i as u32);
                let mut j = i * i;
                while j <= n {
                    composite[j] = true;
                    j += i;
                }
            }
        }
        out
    })
}

/// Probabilistic primality test: trial division by small primes, then
/// `rounds` Miller-Rabin rounds.
///
/// Witness bases are drawn from a ChaCha stream seeded by the candidate
/// itself, so the verdict for a given `n` is reproducible everywhere.
pub fn is_probable_prime(n: &BigUint, rounds: usize) -> bool {
    trial_division(n).unwrap_or_else(|| miller_rabin(n, rounds))
}

/// Verdict of trial division by the sieved primes, if it settles the question.
fn trial_division(n: &BigUint) -> Option<bool> {
    if let Some(small) = n.to_u32() {
        if small < 2 {
            return Some(false);
        }
        if small <= SIEVE_LIMIT {
            return Some(small_primes().binary_search(&small).is_ok());
        }
    }
    small_primes().iter().any(|&p| (n % p).is_zero()).then_some(false)
}

/// Cheap necessary condition for primality.
pub(crate) fn passes_trial_division(n: &BigUint) -> bool {
    trial_division(n) != Some(false)
}

fn miller_rabin(n: &BigUint, rounds: usize) -> bool {
    let one = BigUint::one();
    let two = BigUint::from(2u8);
    let n_minus_one = n - &one;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;

    let mut seed = Sha256::new();
    seed.update(b"postate/miller-rabin/");
    seed.update(n.to_bytes_be());
    let mut rng = ChaCha20Rng::from_seed(seed.finalize().into());

    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_one);
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_one {
                continue 'witness;
            }
            if x == one {
                return false;
            }
        }
        return false;
    }
    true
}

/// Prime representative of an accumulated element.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrimeRepresentation {
    #[serde(rename = "prime_hex", with = "hex_biguint")]
    pub prime: BigUint,
    pub nonce: u64,
}

impl PrimeRepresentation {
    /// Hash binding: `prime` is exactly the candidate derived from
    /// `(element, nonce)`. Primality is checked separately.
    pub fn is_bound_to(&self, element: &[u8]) -> bool {
        hash_candidate(element, self.nonce) == self.prime
    }
}

/// `ForceOdd(SHA-256(element || nonce_be64))`, read big-endian.
pub fn hash_candidate(element: &[u8], nonce: u64) -> BigUint {
    let mut h = Sha256::new();
    h.update(element);
    h.update(nonce.to_be_bytes());
    let mut c = BigUint::from_bytes_be(&h.finalize());
    c.set_bit(0, true);
    c
}

/// Hash-to-prime with an incremental nonce.
///
/// Returns the least nonce whose candidate is prime (and, when `phi` is
/// supplied, coprime to it so that deletes and witnesses stay defined).
pub fn prime_gen(element: &[u8], phi: Option<&BigUint>) -> Result<PrimeRepresentation, AccumulatorError> {
    if element.is_empty() {
        return Err(AccumulatorError::EmptyElement);
    }
    for nonce in 0..MAX_NONCE {
        let candidate = hash_candidate(element, nonce);
        if !is_probable_prime(&candidate, MILLER_RABIN_ROUNDS) {
            continue;
        }
        if phi.is_some_and(|phi| !candidate.gcd(phi).is_one()) {
            log::warn!("hash-to-prime candidate shares a factor with phi(N); skipping nonce {nonce}");
            continue;
        }
        return Ok(PrimeRepresentation { prime: candidate, nonce });
    }
    Err(AccumulatorError::NonceSpaceExhausted(MAX_NONCE))
}

/// True iff `p` and `(p - 1) / 2` are both (probable) primes.
pub fn is_safe_prime(p: &BigUint) -> bool {
    if p < &BigUint::from(5u8) || p.is_even() {
        return false;
    }
    let half = p >> 1u32;
    is_probable_prime(&half, MILLER_RABIN_ROUNDS) && is_probable_prime(p, MILLER_RABIN_ROUNDS)
}

/// Fermat base-2 screen, used to discard most candidates cheaply before the
/// full test.
fn fermat2(n: &BigUint) -> bool {
    BigUint::from(2u8).modpow(&(n - 1u32), n).is_one()
}

/// Deterministic search for a `bits`-bit safe prime `p = 2q + 1` whose two
/// top bits are set, starting from a seeded position and stepping upward
/// (wrapping inside the range). `exclude` skips one value so that two calls
/// can yield distinct primes.
pub(crate) fn search_safe_prime(bits: u64, rng: &mut ChaCha20Rng, exclude: Option<&BigUint>) -> Option<BigUint> {
    debug_assert!(bits >= 8);
    // q has bits-1 bits with its top two bits set; q = 5 mod 6 so that
    // neither q nor 2q+1 is divisible by 2 or 3.
    let qbits = bits - 1;
    let lo = BigUint::from(3u8) << (qbits - 2);
    let hi = BigUint::one() << qbits;
    let align = |x: BigUint| -> BigUint {
        let r = (&x % 6u32).to_u32().unwrap_or(0);
        x + ((5 + 6 - r) % 6)
    };

    let mut q = align(rng.gen_biguint_range(&lo, &hi));
    if q >= hi {
        q = align(lo.clone());
    }
    let span = (&hi - &lo) / 6u32 + 1u32;
    let max_steps = span.to_u64().unwrap_or(u64::MAX).min(1 << 26);

    let primes = small_primes();
    let use_sieve = lo > BigUint::from(SIEVE_LIMIT);
    let mut residues: Vec<u32> =
        if use_sieve { primes.iter().map(|&s| (&q % s).to_u32().unwrap_or(0)).collect() } else { Vec::new() };

    for _ in 0..max_steps {
        let sieved = !use_sieve
            || primes.iter().zip(&residues).skip(2).all(|(&s, &r)| {
                // q != 0 and 2q+1 != 0 (mod s)
                r != 0 && !(2 * r as u64 + 1).is_multiple_of(s as u64)
            });
        if sieved {
            let p = (&q << 1u32) + 1u32;
            if exclude != Some(&p) && fermat2(&q) && fermat2(&p) && is_safe_prime(&p) {
                return Some(p);
            }
        }
        q += 6u32;
        if q >= hi {
            q = align(lo.clone());
            if use_sieve {
                residues = primes.iter().map(|&s| (&q % s).to_u32().unwrap_or(0)).collect();
            }
        } else if use_sieve {
            for (r, &s) in residues.iter_mut().zip(primes) {
                *r = (*r + 6) % s;
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial_division(n: u64) -> bool {
        n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
    }

    #[test]
    fn agrees_with_trial_division_below_20000() {
        for n in 0u64..20_000 {
            assert_eq!(is_probable_prime(&BigUint::from(n), 16), trial_division(n), "n = {n}");
        }
    }

    #[test]
    fn rejects_carmichael_numbers() {
        for n in [561u64, 1105, 1729, 2465, 2821, 6601, 8911, 41041, 825265, 321197185] {
            assert!(!is_probable_prime(&BigUint::from(n), MILLER_RABIN_ROUNDS));
        }
        // 3825123056546413051 fools several fixed small bases
        assert!(!is_probable_prime(&BigUint::from(3825123056546413051u64), MILLER_RABIN_ROUNDS));
    }

    #[test]
    fn known_large_primes() {
        let m127 = (BigUint::one() << 127u32) - 1u32;
        assert!(is_probable_prime(&m127, MILLER_RABIN_ROUNDS));
        let m128 = (BigUint::one() << 128u32) - 1u32;
        assert!(!is_probable_prime(&m128, MILLER_RABIN_ROUNDS));
    }

    #[test]
    fn safe_primes() {
        for p in [5u32, 7, 11, 23, 47, 59, 83, 107, 167, 179, 227] {
            assert!(is_safe_prime(&BigUint::from(p)), "{p}");
        }
        for p in [3u32, 13, 17, 19, 29, 31, 1081] {
            assert!(!is_safe_prime(&BigUint::from(p)), "{p}");
        }
    }

    #[test]
    fn candidate_is_odd_and_256_bit_bounded() {
        for nonce in 0..32 {
            let c = hash_candidate(b"element", nonce);
            assert!(c.is_odd());
            assert!(c.bits() <= 256);
        }
    }

    #[test]
    fn prime_gen_rejects_empty() {
        assert!(matches!(prime_gen(b"", None), Err(AccumulatorError::EmptyElement)));
    }

    #[test]
    fn prime_gen_is_deterministic_and_prime() {
        let a = prime_gen(b"hello", None).unwrap();
        let b = prime_gen(b"hello", None).unwrap();
        assert_eq!(a, b);
        assert!(is_probable_prime(&a.prime, MILLER_RABIN_ROUNDS));
        assert!(a.is_bound_to(b"hello"));
        assert!(!a.is_bound_to(b"hellp"));
    }

    #[test]
    fn safe_prime_search_small_range() {
        let mut rng = ChaCha20Rng::from_seed([7; 32]);
        let p = search_safe_prime(12, &mut rng, None).unwrap();
        assert_eq!(p.bits(), 12);
        assert!(is_safe_prime(&p));
        let q = search_safe_prime(12, &mut rng, Some(&p)).unwrap();
        assert_ne!(p, q);
    }
}
