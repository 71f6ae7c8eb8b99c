//! 128-bit content digests used for output hashing, source hashing and the
//! artifact store.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use xxhash_rust::xxh3::{xxh3_128, Xxh3};

/// A 128-bit non-cryptographic digest (XXH3-128), rendered as 32 hex digits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub u128);

impl Digest {
    pub fn of(bytes: &[u8]) -> Self {
        Digest(xxh3_128(bytes))
    }

    pub fn to_hex(&self) -> String {
        format!("{:032x}", self.0)
    }

    /// First `n` hex digits, for short human-facing ids.
    pub fn short(&self, n: usize) -> String {
        let mut hex = self.to_hex();
        hex.truncate(n.min(32));
        hex
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.short(12))
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid digest {0:?}: expected 32 hex digits")]
pub struct ParseDigestError(String);

impl FromStr for Digest {
    type Err = ParseDigestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 32 {
            return Err(ParseDigestError(s.to_string()));
        }
        u128::from_str_radix(s, 16)
            .map(Digest)
            .map_err(|_| ParseDigestError(s.to_string()))
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Streaming digest over a sequence of length-prefixed parts, so that
/// `["ab", "c"]` and `["a", "bc"]` never collide structurally.
#[derive(Default)]
pub struct DigestBuilder {
    state: Xxh3,
}

impl DigestBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn part(&mut self, bytes: &[u8]) -> &mut Self {
        self.state.update(&(bytes.len() as u64).to_le_bytes());
        self.state.update(bytes);
        self
    }

    pub fn digest(&mut self, d: Digest) -> &mut Self {
        self.state.update(&d.0.to_le_bytes());
        self
    }

    pub fn finish(&self) -> Digest {
        Digest(self.state.digest128())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_round_trip() {
        let d = Digest::of(b"hello");
        assert_eq!(d.to_hex().parse::<Digest>().unwrap(), d);
        assert!("xyz".parse::<Digest>().is_err());
    }

    #[test]
    fn builder_is_length_prefixed() {
        let a = DigestBuilder::new().part(b"ab").part(b"c").finish();
        let b = DigestBuilder::new().part(b"a").part(b"bc").finish();
        assert_ne!(a, b);
    }

    #[test]
    fn serde_as_hex_string() {
        let d = Digest(0xabc);
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json, "\"00000000000000000000000000000abc\"");
        assert_eq!(serde_json::from_str::<Digest>(&json).unwrap(), d);
    }
}
