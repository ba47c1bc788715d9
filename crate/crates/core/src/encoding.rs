//! Canonical text encodings shared by the wire formats and the rolling hash.
//!
//! Big integers are lowercase hex, big-endian, without leading zeros (zero is
//! `"0"`). Byte strings are standard base64 with padding.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use num_bigint::BigUint;
use num_traits::Num;

/// Lowercase big-endian hex with no leading zeros.
pub fn to_hex(n: &BigUint) -> String {
    n.to_str_radix(16)
}

/// Strict inverse of [`to_hex`]: rejects uppercase digits, leading zeros and
/// empty input so that every integer has exactly one accepted encoding.
pub fn from_hex(s: &str) -> Option<BigUint> {
    if s.is_empty() || (s.len() > 1 && s.starts_with('0')) {
        return None;
    }
    if !s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
        return None;
    }
    BigUint::from_str_radix(s, 16).ok()
}

pub fn to_b64(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

pub fn from_b64(s: &str) -> Option<Vec<u8>> {
    STANDARD.decode(s).ok()
}

/// `#[serde(with = "hex_biguint")]`
pub mod hex_biguint {
    use num_bigint::BigUint;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(n: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::to_hex(n))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        super::from_hex(&s).ok_or_else(|| D::Error::custom(format!("invalid hex integer {s:?}")))
    }
}

/// `#[serde(with = "b64_bytes")]`
pub mod b64_bytes {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::to_b64(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        super::from_b64(&s).ok_or_else(|| D::Error::custom("invalid base64"))
    }
}

/// `#[serde(with = "hex_bytes32")]`
pub mod hex_bytes32 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let v = hex::decode(&s).map_err(D::Error::custom)?;
        v.try_into().map_err(|_| D::Error::custom("expected 32 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_is_canonical() {
        assert_eq!(to_hex(&BigUint::from(0u32)), "0");
        assert_eq!(to_hex(&BigUint::from(1081u32)), "439");
        assert_eq!(from_hex("439"), Some(BigUint::from(1081u32)));
        assert_eq!(from_hex("0"), Some(BigUint::from(0u32)));
        assert_eq!(from_hex("0439"), None);
        assert_eq!(from_hex("4A"), None);
        assert_eq!(from_hex(""), None);
        assert_eq!(from_hex("-1"), None);
    }

    #[test]
    fn base64_roundtrip() {
        let bytes = b"\x00\xffkey";
        assert_eq!(from_b64(&to_b64(bytes)).unwrap(), bytes);
        assert!(from_b64("not base64!").is_none());
    }
}
