//! LSIM: int8 similarity matrices.
//!
//! Header (see `format`) followed by
//!
//! ```text
//! rows u64 | cols u64 | flags u8 (bit 0: symmetric) | checksum u64
//! codes i8 × rows·cols, row-major, full matrix
//! ```
//!
//! Metadata JSON: `aggregation` and `provenance` (row/column sources with
//! model id, dataset hash and vector-set digest; creation parameters).

use std::io::{Read, Seek, SeekFrom, Write};

use serde::{Deserialize, Serialize};

use super::format::{expect_eof, meta_json, parse_meta, read_section, FormatError, HeaderBuf, HeaderReader};
use super::ldif::{bytes_into_i8, write_codes};
use super::{Aggregation, SimMatrix, SimProvenance, CODE_MAX, SENTINEL};
use crate::rng::SampleRng;

pub const LSIM_MAGIC: [u8; 4] = *b"LSIM";
pub const LSIM_VERSION: u16 = 1;

const FLAG_SYMMETRIC: u8 = 1;
/// Number of (i, j)/(j, i) pairs probed when opening a symmetric file.
const SPOT_CHECKS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct LsimMeta {
    aggregation: Aggregation,
    provenance: SimProvenance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LsimHeader {
    pub rows: u64,
    pub cols: u64,
    pub symmetric: bool,
    pub aggregation: Aggregation,
    pub provenance: SimProvenance,
}

impl LsimHeader {
    pub fn of(m: &SimMatrix) -> Self {
        Self {
            rows: m.rows() as u64,
            cols: m.cols() as u64,
            symmetric: m.is_symmetric(),
            aggregation: m.aggregation,
            provenance: m.provenance.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = meta_json(&LsimMeta {
            aggregation: self.aggregation,
            provenance: self.provenance.clone(),
        });
        let mut h = HeaderBuf::new(&LSIM_MAGIC, LSIM_VERSION, &meta);
        h.u64(self.rows);
        h.u64(self.cols);
        h.u8(if self.symmetric { FLAG_SYMMETRIC } else { 0 });
        h.finish()
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<(Self, u64), FormatError> {
        let (mut h, meta) = HeaderReader::open(r, &LSIM_MAGIC, LSIM_VERSION)?;
        let rows = h.u64()?;
        let cols = h.u64()?;
        let flags = h.u8()?;
        let len = h.finish()?;
        if flags & !FLAG_SYMMETRIC != 0 {
            return Err(FormatError::Invalid(format!("unknown flags {flags:#04x}")));
        }
        let meta: LsimMeta = parse_meta(&meta)?;
        let symmetric = flags & FLAG_SYMMETRIC != 0;
        if rows == 0 || cols == 0 || rows.checked_mul(cols).is_none() {
            return Err(FormatError::Invalid(format!("bad shape {rows}×{cols}")));
        }
        if symmetric && rows != cols {
            return Err(FormatError::Invalid(format!("symmetric flag on {rows}×{cols}")));
        }
        Ok((
            Self {
                rows,
                cols,
                symmetric,
                aggregation: meta.aggregation,
                provenance: meta.provenance,
            },
            len,
        ))
    }

    pub fn payload_len(&self) -> u64 {
        SimMatrix::payload_bytes(self.rows, self.cols)
    }
}

pub fn write_sim_matrix<W: Write>(m: &SimMatrix, mut sink: W) -> Result<(), FormatError> {
    m.validate()?;
    sink.write_all(&LsimHeader::of(m).to_bytes())?;
    write_codes(&mut sink, m.codes())?;
    sink.flush()?;
    Ok(())
}

/// Reads a whole LSIM stream. Symmetric payloads are checked in full.
pub fn read_sim_matrix<R: Read>(mut source: R) -> Result<SimMatrix, FormatError> {
    let (h, _) = LsimHeader::read_from(&mut source)?;
    let mut bytes = vec![0u8; h.payload_len() as usize];
    read_section(&mut source, &mut bytes, "codes")?;
    expect_eof(&mut source)?;
    SimMatrix::new(
        h.rows as usize,
        h.cols as usize,
        h.symmetric,
        bytes_into_i8(bytes),
        h.aggregation,
        h.provenance,
    )
}

/// Streaming row reader. Opening a symmetric file spot-checks a fixed set of
/// mirrored entries and the diagonal instead of reading the payload.
pub struct SimMatrixReader<R> {
    source: R,
    header: LsimHeader,
    codes_offset: u64,
    buf: Vec<u8>,
}

impl<R: Read + Seek> SimMatrixReader<R> {
    pub fn open(mut source: R) -> Result<Self, FormatError> {
        source.seek(SeekFrom::Start(0))?;
        let (header, header_len) = LsimHeader::read_from(&mut source)?;
        let expected = header_len + header.payload_len();
        let actual = source.seek(SeekFrom::End(0))?;
        if actual < expected {
            return Err(FormatError::Truncated { section: "codes" });
        }
        if actual > expected {
            return Err(FormatError::TrailingBytes);
        }
        let mut reader = Self {
            source,
            header,
            codes_offset: header_len,
            buf: Vec::new(),
        };
        if reader.header.symmetric {
            reader.spot_check()?;
        }
        Ok(reader)
    }

    fn spot_check(&mut self) -> Result<(), FormatError> {
        let n = self.header.rows;
        let mut rng = SampleRng::new(n ^ 0x4c53_494d);
        for _ in 0..SPOT_CHECKS {
            let i = rng.below(n) as usize;
            let j = rng.below(n) as usize;
            let d = self.get(i, i)?;
            if d != CODE_MAX && d != SENTINEL {
                return Err(FormatError::Invalid(format!(
                    "symmetric diagonal ({i},{i}) is {d}"
                )));
            }
            if self.get(i, j)? != self.get(j, i)? {
                return Err(FormatError::AsymmetricPayload { i, j });
            }
        }
        Ok(())
    }

    pub fn header(&self) -> &LsimHeader {
        &self.header
    }

    pub fn rows(&self) -> usize {
        self.header.rows as usize
    }

    pub fn cols(&self) -> usize {
        self.header.cols as usize
    }

    pub fn get(&mut self, i: usize, j: usize) -> Result<i8, FormatError> {
        self.check_index(i, self.rows())?;
        self.check_index(j, self.cols())?;
        let off = self.codes_offset + i as u64 * self.header.cols + j as u64;
        self.source.seek(SeekFrom::Start(off))?;
        let mut b = [0u8; 1];
        read_section(&mut self.source, &mut b, "codes")?;
        Ok(b[0] as i8)
    }

    fn check_index(&self, index: usize, len: usize) -> Result<(), FormatError> {
        if index >= len {
            return Err(FormatError::IndexOutOfRange { index, len });
        }
        Ok(())
    }

    /// Reads row `i` into `out` (resized to `cols`).
    pub fn read_row(&mut self, i: usize, out: &mut Vec<i8>) -> Result<(), FormatError> {
        self.check_index(i, self.rows())?;
        let cols = self.cols();
        self.source
            .seek(SeekFrom::Start(self.codes_offset + i as u64 * self.header.cols))?;
        self.buf.resize(cols, 0);
        read_section(&mut self.source, &mut self.buf, "codes")?;
        out.clear();
        out.extend(self.buf.iter().map(|&b| b as i8));
        Ok(())
    }

    /// Visits rows in order, reading sequentially.
    pub fn for_each_row<F>(&mut self, mut f: F) -> Result<(), FormatError>
    where
        F: FnMut(usize, &[i8]),
    {
        let mut row = Vec::with_capacity(self.cols());
        for i in 0..self.rows() {
            self.read_row(i, &mut row)?;
            f(i, &row);
        }
        Ok(())
    }

    pub fn read_all(mut self) -> Result<SimMatrix, FormatError> {
        self.source.seek(SeekFrom::Start(self.codes_offset))?;
        let mut bytes = vec![0u8; self.header.payload_len() as usize];
        read_section(&mut self.source, &mut bytes, "codes")?;
        SimMatrix::new(
            self.rows(),
            self.cols(),
            self.header.symmetric,
            bytes_into_i8(bytes),
            self.header.aggregation,
            self.header.provenance,
        )
    }
}
