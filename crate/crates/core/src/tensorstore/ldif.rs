//! LDIF: quantized vector sets.
//!
//! Header (see `format`) followed by
//!
//! ```text
//! n_samples u64 | n_layers u32 | dim u32 | checksum u64
//! scales    f32 × n_samples·n_layers
//! codes     i8  × n_samples·n_layers·dim
//! ```
//!
//! Metadata JSON: `model_id`, `dataset_hash` (16 hex chars),
//! `layer_indices`, `attributes`.

use std::collections::BTreeMap;
use std::io::{Read, Seek, SeekFrom, Write};

use serde::{Deserialize, Serialize};

use super::format::{expect_eof, meta_json, parse_meta, read_section, FormatError, HeaderBuf, HeaderReader};
use super::VectorSet;
use crate::digest::Digest;

pub const LDIF_MAGIC: [u8; 4] = *b"LDIF";
pub const LDIF_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct LdifMeta {
    model_id: String,
    dataset_hash: Digest,
    layer_indices: Vec<u32>,
    #[serde(default)]
    attributes: BTreeMap<String, String>,
}

/// Everything in an LDIF file except the payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdifHeader {
    pub model_id: String,
    pub dataset_hash: Digest,
    pub layer_indices: Vec<u32>,
    pub attributes: BTreeMap<String, String>,
    pub n_samples: u64,
    pub n_layers: u32,
    pub dim: u32,
}

impl LdifHeader {
    pub fn of(vs: &VectorSet) -> Self {
        Self {
            model_id: vs.model_id.clone(),
            dataset_hash: vs.dataset_hash,
            layer_indices: vs.layer_indices.clone(),
            attributes: vs.attributes.clone(),
            n_samples: vs.n_samples() as u64,
            n_layers: vs.n_layers() as u32,
            dim: vs.dim() as u32,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = meta_json(&LdifMeta {
            model_id: self.model_id.clone(),
            dataset_hash: self.dataset_hash,
            layer_indices: self.layer_indices.clone(),
            attributes: self.attributes.clone(),
        });
        let mut h = HeaderBuf::new(&LDIF_MAGIC, LDIF_VERSION, &meta);
        h.u64(self.n_samples);
        h.u32(self.n_layers);
        h.u32(self.dim);
        h.finish()
    }

    /// Parses a header; returns it with its byte length.
    pub fn read_from<R: Read>(r: &mut R) -> Result<(Self, u64), FormatError> {
        let (mut h, meta) = HeaderReader::open(r, &LDIF_MAGIC, LDIF_VERSION)?;
        let n_samples = h.u64()?;
        let n_layers = h.u32()?;
        let dim = h.u32()?;
        let len = h.finish()?;
        let meta: LdifMeta = parse_meta(&meta)?;
        if meta.layer_indices.len() != n_layers as usize {
            return Err(FormatError::Invalid(format!(
                "{} layer indices for {n_layers} layers",
                meta.layer_indices.len()
            )));
        }
        if n_layers == 0 || dim == 0 {
            return Err(FormatError::Invalid("n_layers and dim must be positive".into()));
        }
        let header = Self {
            model_id: meta.model_id,
            dataset_hash: meta.dataset_hash,
            layer_indices: meta.layer_indices,
            attributes: meta.attributes,
            n_samples,
            n_layers,
            dim,
        };
        header.payload_len()?;
        Ok((header, len))
    }

    pub fn vector_count(&self) -> u64 {
        self.n_samples * self.n_layers as u64
    }

    /// Bytes of the int8 code block.
    pub fn code_payload_len(&self) -> u64 {
        self.vector_count() * self.dim as u64
    }

    /// Bytes of the f32 scale block.
    pub fn scales_len(&self) -> u64 {
        self.vector_count() * 4
    }

    fn payload_len(&self) -> Result<u64, FormatError> {
        self.n_samples
            .checked_mul(self.n_layers as u64)
            .and_then(|v| v.checked_mul(self.dim as u64 + 4))
            .ok_or_else(|| FormatError::Invalid("shape overflows".into()))
    }

    pub fn sample_stride(&self) -> u64 {
        self.n_layers as u64 * self.dim as u64
    }
}

pub fn write_vector_set<W: Write>(vs: &VectorSet, mut sink: W) -> Result<(), FormatError> {
    vs.validate()?;
    sink.write_all(&LdifHeader::of(vs).to_bytes())?;
    let mut scales = Vec::with_capacity(vs.scales().len() * 4);
    for s in vs.scales() {
        scales.extend_from_slice(&s.to_le_bytes());
    }
    sink.write_all(&scales)?;
    write_codes(&mut sink, vs.codes())?;
    sink.flush()?;
    Ok(())
}

pub(crate) fn write_codes<W: Write>(sink: &mut W, codes: &[i8]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(CHUNK.min(codes.len()));
    for chunk in codes.chunks(CHUNK) {
        buf.clear();
        buf.extend(chunk.iter().map(|&c| c as u8));
        sink.write_all(&buf)?;
    }
    Ok(())
}

const CHUNK: usize = 1 << 16;

pub(crate) fn bytes_into_i8(bytes: Vec<u8>) -> Vec<i8> {
    bytes.into_iter().map(|b| b as i8).collect()
}

fn decode_scales(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect()
}

fn read_body<R: Read>(r: &mut R, header: LdifHeader) -> Result<VectorSet, FormatError> {
    let mut scale_bytes = vec![0u8; header.scales_len() as usize];
    read_section(r, &mut scale_bytes, "scales")?;
    let mut code_bytes = vec![0u8; header.code_payload_len() as usize];
    read_section(r, &mut code_bytes, "codes")?;
    expect_eof(r)?;
    let mut vs = VectorSet::new(
        header.model_id,
        header.dataset_hash,
        header.layer_indices,
        header.dim as usize,
        bytes_into_i8(code_bytes),
        decode_scales(&scale_bytes),
    )?;
    if vs.n_samples() as u64 != header.n_samples {
        return Err(FormatError::Invalid("sample count mismatch".into()));
    }
    vs.attributes = header.attributes;
    Ok(vs)
}

/// Reads a whole LDIF stream.
pub fn read_vector_set<R: Read>(mut source: R) -> Result<VectorSet, FormatError> {
    let (header, _) = LdifHeader::read_from(&mut source)?;
    read_body(&mut source, header)
}

/// Reads a whole LDIF stream and checks it belongs to `expected` dataset.
pub fn read_vector_set_expecting<R: Read>(
    mut source: R,
    expected: Digest,
) -> Result<VectorSet, FormatError> {
    let (header, _) = LdifHeader::read_from(&mut source)?;
    if header.dataset_hash != expected {
        return Err(FormatError::DatasetMismatch {
            expected,
            found: header.dataset_hash,
        });
    }
    read_body(&mut source, header)
}

/// One sample's codes and scales.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBlock {
    pub codes: Vec<i8>,
    pub scales: Vec<f32>,
}

/// Random-access reader: parses the header and scales, then fetches sample
/// code blocks on demand.
pub struct VectorSetReader<R> {
    source: R,
    header: LdifHeader,
    codes_offset: u64,
    scales: Vec<f32>,
}

impl<R: Read + Seek> VectorSetReader<R> {
    pub fn open(mut source: R) -> Result<Self, FormatError> {
        source.seek(SeekFrom::Start(0))?;
        let (header, header_len) = LdifHeader::read_from(&mut source)?;
        let expected = header_len + header.scales_len() + header.code_payload_len();
        let actual = source.seek(SeekFrom::End(0))?;
        if actual < expected {
            return Err(FormatError::Truncated { section: "payload" });
        }
        if actual > expected {
            return Err(FormatError::TrailingBytes);
        }
        source.seek(SeekFrom::Start(header_len))?;
        let mut scale_bytes = vec![0u8; header.scales_len() as usize];
        read_section(&mut source, &mut scale_bytes, "scales")?;
        Ok(Self {
            codes_offset: header_len + header.scales_len(),
            scales: decode_scales(&scale_bytes),
            source,
            header,
        })
    }

    pub fn header(&self) -> &LdifHeader {
        &self.header
    }

    pub fn n_samples(&self) -> usize {
        self.header.n_samples as usize
    }

    pub fn expect_dataset(&self, expected: Digest) -> Result<(), FormatError> {
        if self.header.dataset_hash != expected {
            return Err(FormatError::DatasetMismatch {
                expected,
                found: self.header.dataset_hash,
            });
        }
        Ok(())
    }

    pub fn read_sample(&mut self, i: usize) -> Result<SampleBlock, FormatError> {
        if i >= self.n_samples() {
            return Err(FormatError::IndexOutOfRange {
                index: i,
                len: self.n_samples(),
            });
        }
        let stride = self.header.sample_stride();
        self.source
            .seek(SeekFrom::Start(self.codes_offset + i as u64 * stride))?;
        let mut buf = vec![0u8; stride as usize];
        read_section(&mut self.source, &mut buf, "codes")?;
        let l = self.header.n_layers as usize;
        Ok(SampleBlock {
            codes: bytes_into_i8(buf),
            scales: self.scales[i * l..(i + 1) * l].to_vec(),
        })
    }

    pub fn read_all(mut self) -> Result<VectorSet, FormatError> {
        self.source.seek(SeekFrom::Start(self.codes_offset))?;
        let mut code_bytes = vec![0u8; self.header.code_payload_len() as usize];
        read_section(&mut self.source, &mut code_bytes, "codes")?;
        let mut vs = VectorSet::new(
            self.header.model_id,
            self.header.dataset_hash,
            self.header.layer_indices,
            self.header.dim as usize,
            bytes_into_i8(code_bytes),
            self.scales,
        )?;
        vs.attributes = self.header.attributes;
        Ok(vs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn fixture() -> VectorSet {
        // 3 samples × 2 layers × 4 dims; sample 1 layer 0 is zero.
        let data: Vec<f32> = vec![
            1.0, -2.0, 0.5, 0.0, /**/ 0.1, 0.2, 0.3, 0.4, //
            0.0, 0.0, 0.0, 0.0, /**/ -1.0, 1.0, -1.0, 1.0, //
            3.0, 2.0, 1.0, 0.0, /**/ 0.0, 0.0, 0.0, 9.0,
        ];
        let mut vs = VectorSet::from_f32("toy/model", Digest(0xdead_beef), vec![1, 2], 4, &data)
            .unwrap();
        vs.attributes.insert("token_position".into(), "len-3".into());
        vs
    }

    fn bytes(vs: &VectorSet) -> Vec<u8> {
        let mut out = Vec::new();
        write_vector_set(vs, &mut out).unwrap();
        out
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let vs = fixture();
        let b = bytes(&vs);
        let back = read_vector_set(&b[..]).unwrap();
        assert_eq!(back, vs);
        assert_eq!(bytes(&back), b);
        assert_eq!(vs.digest(), Digest::of_bytes(&b));
    }

    #[test]
    fn random_access_matches_full_read() {
        let vs = fixture();
        let mut r = VectorSetReader::open(Cursor::new(bytes(&vs))).unwrap();
        for i in 0..3 {
            let s = r.read_sample(i).unwrap();
            assert_eq!(s.codes, vs.sample_codes(i));
            assert_eq!(s.scales, &vs.scales()[i * 2..i * 2 + 2]);
        }
        assert!(r.read_sample(3).is_err());
        assert_eq!(r.read_all().unwrap(), vs);
    }

    #[test]
    fn truncation_and_trailing_bytes_detected() {
        let b = bytes(&fixture());
        let short = &b[..b.len() - 1];
        assert!(matches!(read_vector_set(short), Err(FormatError::Truncated { .. })));
        assert!(matches!(
            VectorSetReader::open(Cursor::new(short.to_vec())),
            Err(FormatError::Truncated { .. })
        ));
        let mut long = b.clone();
        long.push(0);
        assert!(matches!(read_vector_set(&long[..]), Err(FormatError::TrailingBytes)));
    }

    #[test]
    fn dataset_hash_checked() {
        let b = bytes(&fixture());
        assert!(read_vector_set_expecting(&b[..], Digest(0xdead_beef)).is_ok());
        assert!(matches!(
            read_vector_set_expecting(&b[..], Digest(1)),
            Err(FormatError::DatasetMismatch { .. })
        ));
    }

    #[test]
    fn corrupted_length_field_is_a_structured_error() {
        let mut b = bytes(&fixture());
        assert_eq!(&b[..4], b"LDIF");
        assert_eq!(u16::from_le_bytes([b[4], b[5]]), 1);
        b[6] ^= 0x40; // metadata length
        let err = read_vector_set(&b[..]).unwrap_err();
        assert!(
            matches!(
                err,
                FormatError::Truncated { .. }
                    | FormatError::HeaderChecksum { .. }
                    | FormatError::Metadata(_)
            ),
            "{err:?}"
        );
        b[6] ^= 0x40;
        b[9] = 0xff; // top byte of metadata length
        assert!(matches!(read_vector_set(&b[..]), Err(FormatError::MetadataTooLarge(_))));
    }

    #[test]
    fn every_header_byte_is_protected() {
        let vs = fixture();
        let b = bytes(&vs);
        let header_len = LdifHeader::of(&vs).to_bytes().len();
        for pos in 0..header_len {
            for flip in [0x01u8, 0x80, 0xff] {
                let mut c = b.clone();
                c[pos] ^= flip;
                assert!(read_vector_set(&c[..]).is_err(), "byte {pos} ^ {flip:#x} undetected");
            }
        }
    }

    #[test]
    fn paper_scale_payload_from_header_arithmetic() {
        let h = LdifHeader {
            model_id: "NousResearch/Llama-2-7b-chat-hf".into(),
            dataset_hash: Digest(7),
            layer_indices: vec![5, 11, 16, 22, 27],
            attributes: BTreeMap::new(),
            n_samples: 67_000,
            n_layers: 5,
            dim: 4096,
        };
        let (parsed, _) = LdifHeader::read_from(&mut &h.to_bytes()[..]).unwrap();
        assert_eq!(parsed.code_payload_len(), 1_372_160_000);
    }
}
