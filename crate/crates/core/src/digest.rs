//! 64-bit FNV-1a digests used for dataset identity and artifact checksums.

use std::fmt;
use std::hash::Hasher;
use std::io;
use std::str::FromStr;

use fnv::FnvHasher;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Separator byte placed between pair ids when hashing a dataset order.
pub const ID_SEPARATOR: u8 = 0x1F;

/// A 64-bit digest, rendered as 16 lowercase hex characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub u64);

impl Digest {
    pub fn of_bytes(bytes: &[u8]) -> Self {
        let mut h = FnvHasher::default();
        h.write(bytes);
        Digest(h.finish())
    }

    /// Digest of an ordered id list: ids joined by [`ID_SEPARATOR`].
    pub fn of_ids<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut h = FnvHasher::default();
        for (n, id) in ids.into_iter().enumerate() {
            if n > 0 {
                h.write(&[ID_SEPARATOR]);
            }
            h.write(id.as_ref().as_bytes());
        }
        Digest(h.finish())
    }

    pub fn value(self) -> u64 {
        self.0
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid digest {0:?}: expected 16 hex characters")]
pub struct ParseDigestError(pub String);

impl FromStr for Digest {
    type Err = ParseDigestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 16 {
            return Err(ParseDigestError(s.to_owned()));
        }
        u64::from_str_radix(s, 16)
            .map(Digest)
            .map_err(|_| ParseDigestError(s.to_owned()))
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Streaming FNV-1a over everything written through it.
#[derive(Default)]
pub struct DigestWriter {
    hasher: FnvHasher,
    len: u64,
}

impl DigestWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn digest(&self) -> Digest {
        Digest(self.hasher.finish())
    }

    pub fn bytes_written(&self) -> u64 {
        self.len
    }
}

impl io::Write for DigestWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.hasher.write(buf);
        self.len += buf.len() as u64;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Digest of everything readable from `reader`.
pub fn digest_reader<R: io::Read>(mut reader: R) -> io::Result<Digest> {
    let mut w = DigestWriter::new();
    io::copy(&mut reader, &mut w)?;
    Ok(w.digest())
}
