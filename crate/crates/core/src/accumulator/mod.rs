//! Dynamic RSA accumulator.
//!
//! The accumulated value of a set `{x_1, .., x_n}` of primes is
//! `z = g^(x_1 * .. * x_n) mod N`. Elements are arbitrary byte strings mapped
//! to primes by [`prime_gen`]. Holders of the [`Trapdoor`] can delete
//! elements and produce membership witnesses directly; anyone can verify a
//! witness `w` by checking `w^x == z (mod N)`, and witnesses can be carried
//! across later adds and deletes without the trapdoor.

mod primes;
mod setup;

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use primes::{
    hash_candidate, is_probable_prime, is_safe_prime, prime_gen, PrimeRepresentation, MAX_NONCE, MILLER_RABIN_ROUNDS,
};
pub use setup::{from_safe_primes, setup, AccumulatorParams, Trapdoor, MIN_MODULUS_BITS};

use crate::encoding::hex_biguint;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AccumulatorError {
    #[error("a {0}-bit modulus cannot host two distinct safe primes")]
    ModulusTooSmall(u32),
    #[error("invalid accumulator parameters: {0}")]
    InvalidParameters(String),
    #[error("elements must be non-empty")]
    EmptyElement,
    #[error("element is already accumulated")]
    DuplicateElement,
    #[error("element is not a member of the accumulator")]
    NotAMember,
    #[error("operation requires the accumulator trapdoor")]
    MissingTrapdoor,
    #[error("no prime found within {0} nonces")]
    NonceSpaceExhausted(u64),
    #[error("exponents are not coprime")]
    NotCoprime,
    #[error("integrity failure: {0} is not invertible modulo N, which exposes a factor of N")]
    FactorRevealed(String),
}

/// Membership witness `w` for `subject` against accumulated value `digest`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    #[serde(rename = "witness_hex", with = "hex_biguint")]
    pub value: BigUint,
    pub subject: PrimeRepresentation,
    #[serde(rename = "digest_hex", with = "hex_biguint")]
    pub digest: BigUint,
}

impl Witness {
    /// `w^x == z (mod N)` for the witness's own subject and digest.
    pub fn holds(&self, params: &AccumulatorParams) -> bool {
        self.value.modpow(&self.subject.prime, &params.modulus) == self.digest
    }

    /// Carry the witness across the addition of `added_prime`:
    /// `w' = w^x' mod N`, valid against `new_z = z^x'`.
    pub fn update_on_add(&self, added_prime: &BigUint, new_z: &BigUint, params: &AccumulatorParams) -> Witness {
        Witness {
            value: self.value.modpow(added_prime, &params.modulus),
            subject: self.subject.clone(),
            digest: new_z.clone(),
        }
    }

    /// Carry the witness across the deletion of `deleted_prime` (which must
    /// differ from the subject): with `a*x + b*x' = 1`, `w' = w^b * z'^a`.
    /// Then `w'^x = z'^(b*x') * z'^(a*x) = z'`, using `w^x = z = z'^x'`.
    pub fn update_on_delete(
        &self,
        deleted_prime: &BigUint,
        new_z: &BigUint,
        params: &AccumulatorParams,
    ) -> Result<Witness, AccumulatorError> {
        let (a, b) = bezout(&self.subject.prime, deleted_prime)?;
        let n = &params.modulus;
        let value = (pow_signed(&self.value, &b, n)? * pow_signed(new_z, &a, n)?) % n;
        Ok(Witness { value, subject: self.subject.clone(), digest: new_z.clone() })
    }
}

/// Coefficients `(a, b)` with `a*x + b*y = 1`.
pub fn bezout(x: &BigUint, y: &BigUint) -> Result<(BigInt, BigInt), AccumulatorError> {
    let x = BigInt::from(x.clone());
    let y = BigInt::from(y.clone());
    let eg = x.extended_gcd(&y);
    if !eg.gcd.is_one() {
        return Err(AccumulatorError::NotCoprime);
    }
    Ok((eg.x, eg.y))
}

/// `base^exp mod n` for a signed exponent; a negative exponent inverts
/// `base` first, which fails only if `base` shares a factor with `n`.
pub fn pow_signed(base: &BigUint, exp: &BigInt, n: &BigUint) -> Result<BigUint, AccumulatorError> {
    let magnitude = exp.magnitude();
    if exp.sign() == Sign::Minus {
        let inv = base.modinv(n).ok_or_else(|| AccumulatorError::FactorRevealed(crate::encoding::to_hex(base)))?;
        Ok(inv.modpow(magnitude, n))
    } else {
        debug_assert!(!exp.is_negative());
        Ok(base.modpow(magnitude, n))
    }
}

/// Trapdoor-free check of a prime witness: `prime` is a probable prime and
/// `w^prime == z (mod N)`. Does not check the hash binding.
pub fn verify_prime_witness(params: &AccumulatorParams, z: &BigUint, prime: &BigUint, w: &BigUint) -> bool {
    // Ordered by cost of rejection: most composites fall to trial division,
    // and Miller-Rabin on a true prime costs more than the exponentiation.
    w < &params.modulus
        && primes::passes_trial_division(prime)
        && w.modpow(prime, &params.modulus) == *z
        && is_probable_prime(prime, MILLER_RABIN_ROUNDS)
}

/// Full trapdoor-free membership check: `rep` is hash-bound to `element`,
/// `rep.prime` is prime, and `w^prime == z (mod N)`.
pub fn verify_membership(
    params: &AccumulatorParams,
    z: &BigUint,
    element: &[u8],
    rep: &PrimeRepresentation,
    w: &BigUint,
) -> bool {
    // Cheapest check first; the primality test runs last.
    rep.is_bound_to(element) && verify_prime_witness(params, z, &rep.prime, w)
}

/// An accumulated set with its digest and the element -> prime mapping.
#[derive(Clone, Debug)]
pub struct AccumulatorState {
    params: AccumulatorParams,
    trapdoor: Option<Trapdoor>,
    value: BigUint,
    members: BTreeMap<Vec<u8>, PrimeRepresentation>,
}

impl AccumulatorState {
    /// Empty accumulator; its value is the generator.
    pub fn new(params: AccumulatorParams, trapdoor: Option<Trapdoor>) -> Self {
        let value = params.generator.clone();
        Self { params, trapdoor, value, members: BTreeMap::new() }
    }

    pub fn params(&self) -> &AccumulatorParams {
        &self.params
    }

    pub fn trapdoor(&self) -> Option<&Trapdoor> {
        self.trapdoor.as_ref()
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn members(&self) -> &BTreeMap<Vec<u8>, PrimeRepresentation> {
        &self.members
    }

    pub fn representation(&self, element: &[u8]) -> Option<&PrimeRepresentation> {
        self.members.get(element)
    }

    pub fn contains(&self, element: &[u8]) -> bool {
        self.members.contains_key(element)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `z' = z^x mod N`. Returns the element's prime representation.
    pub fn add(&mut self, element: &[u8]) -> Result<PrimeRepresentation, AccumulatorError> {
        if self.members.contains_key(element) {
            return Err(AccumulatorError::DuplicateElement);
        }
        let rep = prime_gen(element, self.trapdoor.as_ref().map(Trapdoor::phi))?;
        self.add_representation(element, rep.clone())?;
        Ok(rep)
    }

    /// Add with a representation computed elsewhere (e.g. a cached
    /// `prime_gen` result). The representation is re-checked.
    pub fn add_representation(&mut self, element: &[u8], rep: PrimeRepresentation) -> Result<(), AccumulatorError> {
        if element.is_empty() {
            return Err(AccumulatorError::EmptyElement);
        }
        if self.members.contains_key(element) {
            return Err(AccumulatorError::DuplicateElement);
        }
        if !rep.is_bound_to(element) || !is_probable_prime(&rep.prime, MILLER_RABIN_ROUNDS) {
            return Err(AccumulatorError::InvalidParameters(
                "representation is not a prime bound to the element".into(),
            ));
        }
        self.value = self.value.modpow(&rep.prime, &self.params.modulus);
        self.members.insert(element.to_vec(), rep);
        Ok(())
    }

    /// `z' = z^(x^-1 mod phi) mod N`. Requires the trapdoor.
    pub fn delete(&mut self, element: &[u8]) -> Result<PrimeRepresentation, AccumulatorError> {
        let trapdoor = self.trapdoor.as_ref().ok_or(AccumulatorError::MissingTrapdoor)?;
        let rep = self.members.get(element).ok_or(AccumulatorError::NotAMember)?;
        let value = trapdoor.root(&self.value, &rep.prime, &self.params.modulus)?;
        self.value = value;
        Ok(self.members.remove(element).expect("checked above"))
    }

    /// Delete `deletes` then add `adds` with a single exponentiation
    /// `z' = z^(prod(adds) * prod(deletes)^-1 mod phi)`. Requires the
    /// trapdoor. Atomic: on error the state is unchanged. Returns the
    /// representations of `adds` in order.
    pub fn apply_batch(
        &mut self,
        deletes: &[Vec<u8>],
        adds: &[Vec<u8>],
    ) -> Result<Vec<PrimeRepresentation>, AccumulatorError> {
        let trapdoor = self.trapdoor.as_ref().ok_or(AccumulatorError::MissingTrapdoor)?;
        let phi = trapdoor.phi();
        let mut removed = BTreeMap::new();
        let mut exponent = BigUint::one();
        for e in deletes {
            let rep = self.members.get(e).ok_or(AccumulatorError::NotAMember)?;
            if removed.insert(e.as_slice(), ()).is_some() {
                return Err(AccumulatorError::NotAMember);
            }
            exponent = exponent * trapdoor.inverse_exponent(&rep.prime)? % phi;
        }
        let mut reps = Vec::with_capacity(adds.len());
        let mut added = BTreeMap::new();
        for e in adds {
            if (self.members.contains_key(e) && !removed.contains_key(e.as_slice()))
                || added.insert(e.as_slice(), ()).is_some()
            {
                return Err(AccumulatorError::DuplicateElement);
            }
            let rep = prime_gen(e, Some(phi))?;
            exponent = exponent * &rep.prime % phi;
            reps.push(rep);
        }
        self.value = self.value.modpow(&exponent, &self.params.modulus);
        for e in deletes {
            self.members.remove(e);
        }
        for (e, rep) in adds.iter().zip(&reps) {
            self.members.insert(e.clone(), rep.clone());
        }
        Ok(reps)
    }

    /// Fresh witness `z^(x^-1 mod phi)` for a member. Requires the trapdoor.
    pub fn witness_membership(&self, element: &[u8]) -> Result<Witness, AccumulatorError> {
        let trapdoor = self.trapdoor.as_ref().ok_or(AccumulatorError::MissingTrapdoor)?;
        let rep = self.members.get(element).ok_or(AccumulatorError::NotAMember)?;
        Ok(Witness {
            value: trapdoor.root(&self.value, &rep.prime, &self.params.modulus)?,
            subject: rep.clone(),
            digest: self.value.clone(),
        })
    }
}
