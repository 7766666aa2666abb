//! Framing of pruned grids.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic "HGFP" | version u16 | dims u8 | levels u8 | table_size u32
//! feature_dim u16 | quant mode u8 | quant step f64 | bbox min d*f64, max d*f64
//! resolutions L*u32 | primes d*u32 | valid_counts L*u32 | payload lengths L*u64
//! payloads | checksum u64
//! ```
//!
//! The checksum is CRC-64/XZ over every preceding byte and is verified before
//! any field is interpreted.

use crc::{Crc, CRC_64_XZ};

use crate::error::{Error, Result};
use crate::grid::{BoundingBox, GridConfig};

use super::quant::{QuantMode, QuantParams};

pub const MAGIC: [u8; 4] = *b"HGFP";
pub const VERSION: u16 = 1;

const CHECKSUM: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

pub fn checksum(bytes: &[u8]) -> u64 {
    CHECKSUM.checksum(bytes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamHeader {
    pub config: GridConfig,
    pub bbox: BoundingBox,
    pub quant: QuantParams,
    pub valid_counts: Vec<u32>,
}

impl StreamHeader {
    /// Encoded size of the header for a given shape, excluding payloads and
    /// checksum.
    pub fn encoded_len(dims: usize, levels: usize) -> usize {
        4 + 2 + 1 + 1 + 4 + 2 + 1 + 8 + 16 * dims + 4 * levels + 4 * dims + 4 * levels + 8 * levels
    }
}

/// Header plus one payload per level.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedBitstream {
    header: StreamHeader,
    payloads: Vec<Vec<u8>>,
}

impl PrunedBitstream {
    pub fn new(header: StreamHeader, payloads: Vec<Vec<u8>>) -> Result<Self> {
        let levels = header.config.levels();
        if header.valid_counts.len() != levels || payloads.len() != levels {
            return Err(Error::Shape(format!(
                "stream needs {levels} valid counts and payloads, got {} and {}",
                header.valid_counts.len(),
                payloads.len()
            )));
        }
        if header.bbox.dims() != header.config.dims() {
            return Err(Error::DimensionMismatch {
                expected: header.config.dims(),
                actual: header.bbox.dims(),
            });
        }
        Ok(PrunedBitstream { header, payloads })
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    pub fn payload(&self, level: usize) -> &[u8] {
        &self.payloads[level]
    }

    pub fn payload_len(&self) -> usize {
        self.payloads.iter().map(Vec::len).sum()
    }

    pub fn header_len(&self) -> usize {
        StreamHeader::encoded_len(self.header.config.dims(), self.header.config.levels())
    }

    /// Total serialized size, including the trailing checksum.
    pub fn encoded_len(&self) -> usize {
        self.header_len() + self.payload_len() + 8
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let c = &h.config;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(c.dims() as u8);
        out.push(c.levels() as u8);
        out.extend_from_slice(&c.table_size().to_le_bytes());
        out.extend_from_slice(&(c.feature_dim() as u16).to_le_bytes());
        out.push(h.quant.mode().to_byte());
        out.extend_from_slice(&h.quant.step().to_le_bytes());
        for v in h.bbox.min().iter().chain(h.bbox.max()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for r in c.resolutions() {
            out.extend_from_slice(&r.to_le_bytes());
        }
        for p in c.primes() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        for n in &h.valid_counts {
            out.extend_from_slice(&n.to_le_bytes());
        }
        for p in &self.payloads {
            out.extend_from_slice(&(p.len() as u64).to_le_bytes());
        }
        for p in &self.payloads {
            out.extend_from_slice(p);
        }
        let sum = checksum(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Truncated {
                expected: 8,
                actual: bytes.len() as u64,
            });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().unwrap());
        let computed = checksum(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }

        let mut r = Reader::new(body);
        let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic {
                expected: MAGIC,
                found: magic,
            });
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Version {
                expected: VERSION,
                found: version,
            });
        }
        let dims = r.u8()? as usize;
        let levels = r.u8()? as usize;
        let table_size = r.u32()?;
        let feature_dim = r.u16()? as usize;
        let mode = QuantMode::from_byte(r.u8()?)
            .ok_or_else(|| Error::Corrupt("unknown quantization mode".into()))?;
        let step = r.f64()?;
        let quant = match mode {
            QuantMode::Raw => QuantParams::raw(),
            QuantMode::Quantized => QuantParams::quantized(step)?,
        };
        let min = r.f64s(dims)?;
        let max = r.f64s(dims)?;
        let resolutions = r.u32s(levels)?;
        let primes = r.u32s(dims)?;
        let config = GridConfig::new(dims, resolutions, table_size, feature_dim)?
            .with_primes(&primes)?;
        let bbox = BoundingBox::new(&min, &max)?;
        let valid_counts = r.u32s(levels)?;
        let lengths = (0..levels).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let mut payloads = Vec::with_capacity(levels);
        for len in lengths {
            let len = usize::try_from(len)
                .map_err(|_| Error::Corrupt("payload length overflows".into()))?;
            payloads.push(r.take(len)?.to_vec());
        }
        if r.remaining() != 0 {
            return Err(Error::Corrupt(format!(
                "{} unexpected bytes before checksum",
                r.remaining()
            )));
        }
        Self::new(
            StreamHeader {
                config,
                bbox,
                quant,
                valid_counts,
            },
            payloads,
        )
    }
}

/// Little-endian cursor that reports short reads as truncation.
pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(data: &'a [u8]) -> Self {
        Reader { data, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Truncated {
                expected: (self.pos + n) as u64,
                actual: self.data.len() as u64,
            });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn u32s(&mut self, n: usize) -> Result<Vec<u32>> {
        (0..n).map(|_| self.u32()).collect()
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}
