//! Header framing shared by LDIF and LSIM.
//!
//! ```text
//! magic     [u8; 4]
//! version   u16
//! meta_len  u32
//! meta      [u8; meta_len]   UTF-8 JSON
//! shape     format-specific fixed-width fields
//! checksum  u64              FNV-1a over every preceding header byte
//! ```
//!
//! All integers are little-endian.

use std::io::{self, Read};

use crate::digest::Digest;

/// Metadata blobs larger than this are treated as corruption.
pub const MAX_META_LEN: u32 = 16 << 20;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("metadata length {0} exceeds limit")]
    MetadataTooLarge(u32),
    #[error("metadata is not valid: {0}")]
    Metadata(String),
    #[error("header checksum mismatch: stored {stored}, computed {computed}")]
    HeaderChecksum { stored: Digest, computed: Digest },
    #[error("truncated {section}")]
    Truncated { section: &'static str },
    #[error("unexpected bytes after payload")]
    TrailingBytes,
    #[error("file is {actual} bytes, header implies {expected}")]
    SizeMismatch { expected: u64, actual: u64 },
    #[error("dataset hash {found} does not match expected {expected}")]
    DatasetMismatch { expected: Digest, found: Digest },
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("index {index} out of range for {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("symmetric matrix differs at ({i},{j}) and ({j},{i})")]
    AsymmetricPayload { i: usize, j: usize },
    #[error("non-finite component at index {index}")]
    NonFinite { index: usize },
}

pub(crate) fn read_section<R: Read>(
    r: &mut R,
    buf: &mut [u8],
    section: &'static str,
) -> Result<(), FormatError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FormatError::Truncated { section },
        _ => FormatError::Io(e),
    })
}

/// Accumulates header bytes so the checksum can be appended.
pub(crate) struct HeaderBuf {
    bytes: Vec<u8>,
}

impl HeaderBuf {
    pub fn new(magic: &[u8; 4], version: u16, meta: &[u8]) -> Self {
        let mut bytes = Vec::with_capacity(18 + meta.len() + 32);
        bytes.extend_from_slice(magic);
        bytes.extend_from_slice(&version.to_le_bytes());
        bytes.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        bytes.extend_from_slice(meta);
        Self { bytes }
    }

    pub fn u8(&mut self, v: u8) {
        self.bytes.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    pub fn finish(mut self) -> Vec<u8> {
        let sum = Digest::of_bytes(&self.bytes).0;
        self.bytes.extend_from_slice(&sum.to_le_bytes());
        self.bytes
    }
}

/// Reads a header, keeping a copy of consumed bytes for the checksum.
pub(crate) struct HeaderReader<'a, R: Read> {
    inner: &'a mut R,
    consumed: Vec<u8>,
}

impl<'a, R: Read> HeaderReader<'a, R> {
    /// Reads and checks magic and version; returns the metadata bytes.
    pub fn open(
        inner: &'a mut R,
        magic: &[u8; 4],
        version: u16,
    ) -> Result<(Self, Vec<u8>), FormatError> {
        let mut me = Self {
            inner,
            consumed: Vec::new(),
        };
        let found: [u8; 4] = me.array("magic")?;
        if &found != magic {
            return Err(FormatError::BadMagic {
                expected: *magic,
                found,
            });
        }
        let v = u16::from_le_bytes(me.array("version")?);
        if v != version {
            return Err(FormatError::UnsupportedVersion(v));
        }
        let meta_len = u32::from_le_bytes(me.array("metadata length")?);
        if meta_len > MAX_META_LEN {
            return Err(FormatError::MetadataTooLarge(meta_len));
        }
        let mut meta = vec![0u8; meta_len as usize];
        read_section(me.inner, &mut meta, "metadata")?;
        me.consumed.extend_from_slice(&meta);
        Ok((me, meta))
    }

    fn array<const N: usize>(&mut self, section: &'static str) -> Result<[u8; N], FormatError> {
        let mut buf = [0u8; N];
        read_section(self.inner, &mut buf, section)?;
        self.consumed.extend_from_slice(&buf);
        Ok(buf)
    }

    pub fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.array::<1>("shape")?[0])
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.array("shape")?))
    }

    pub fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.array("shape")?))
    }

    /// Verifies the trailing checksum; returns the total header length.
    pub fn finish(self) -> Result<u64, FormatError> {
        let computed = Digest::of_bytes(&self.consumed);
        let mut buf = [0u8; 8];
        read_section(self.inner, &mut buf, "header checksum")?;
        let stored = Digest(u64::from_le_bytes(buf));
        if stored != computed {
            return Err(FormatError::HeaderChecksum { stored, computed });
        }
        Ok(self.consumed.len() as u64 + 8)
    }
}

pub(crate) fn meta_json<T: serde::Serialize>(meta: &T) -> Vec<u8> {
    serde_json::to_vec(meta).expect("metadata serializes")
}

pub(crate) fn parse_meta<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T, FormatError> {
    serde_json::from_slice(bytes).map_err(|e| FormatError::Metadata(e.to_string()))
}

/// Ensures nothing follows the payload.
pub(crate) fn expect_eof<R: Read>(r: &mut R) -> Result<(), FormatError> {
    let mut probe = [0u8; 1];
    loop {
        match r.read(&mut probe) {
            Ok(0) => return Ok(()),
            Ok(_) => return Err(FormatError::TrailingBytes),
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
}
