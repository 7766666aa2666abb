//! Encoding of pruned grids into a self-describing bitstream, and decoding
//! back against the same query points.
//!
//! The validity mask is never transmitted. The decoder recomputes it from the
//! points and the header's config and box, and checks the recomputed counts
//! against the counts the encoder recorded.

pub mod bitstream;
pub mod entropy;
pub mod quant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{BoundingBox, HashGrid, PointSet};
use crate::prune::{compute_validity, pack, unpack_zero, PackedFeatures, ValidityMask};

pub use bitstream::{PrunedBitstream, StreamHeader};
pub use entropy::{entropy_decode, entropy_encode, EntropyError};
pub use quant::{dequantize, quantize, QuantMode, QuantParams};

fn encode_level(rows: &[f64], params: &QuantParams) -> Result<Vec<u8>> {
    match params.mode() {
        QuantMode::Raw => {
            let mut out = Vec::with_capacity(rows.len() * 4);
            for (i, &v) in rows.iter().enumerate() {
                out.extend_from_slice(&quant::to_f32(v, i)?.to_le_bytes());
            }
            Ok(out)
        }
        QuantMode::Quantized => {
            let symbols = rows
                .iter()
                .map(|&v| quant::quantize_value(v, params.step()))
                .collect::<Result<Vec<_>>>()?;
            Ok(entropy_encode(&symbols)?)
        }
    }
}

fn decode_level(payload: &[u8], scalars: usize, params: &QuantParams) -> Result<Vec<f64>> {
    match params.mode() {
        QuantMode::Raw => {
            if payload.len() != scalars * 4 {
                return Err(Error::Corrupt(format!(
                    "raw payload holds {} bytes, expected {}",
                    payload.len(),
                    scalars * 4
                )));
            }
            payload
                .chunks_exact(4)
                .enumerate()
                .map(|(i, b)| {
                    let v = f32::from_le_bytes(b.try_into().unwrap());
                    if v.is_finite() {
                        Ok(f64::from(v))
                    } else {
                        Err(Error::Corrupt(format!("non-finite raw scalar at {i}")))
                    }
                })
                .collect()
        }
        QuantMode::Quantized => Ok(entropy_decode(payload, scalars)?
            .into_iter()
            .map(|s| quant::dequantize_value(s, params.step()))
            .collect()),
    }
}

/// Encodes the rows of `grid` selected by `mask`. Passing
/// [`ValidityMask::full`] gives the unpruned baseline.
pub fn encode_with_mask(
    grid: &HashGrid,
    mask: &ValidityMask,
    bbox: &BoundingBox,
    params: QuantParams,
) -> Result<PrunedBitstream> {
    let config = grid.config();
    if bbox.dims() != config.dims() {
        return Err(Error::DimensionMismatch {
            expected: config.dims(),
            actual: bbox.dims(),
        });
    }
    let packed = pack(grid, mask)?;
    let payloads = (0..config.levels())
        .into_par_iter()
        .map(|level| encode_level(packed.level(level), &params))
        .collect::<Result<Vec<_>>>()?;
    PrunedBitstream::new(
        StreamHeader {
            config: config.clone(),
            bbox: bbox.clone(),
            quant: params,
            valid_counts: mask.valid_counts().to_vec(),
        },
        payloads,
    )
}

/// Prunes `grid` to the rows reachable from `points` and encodes them.
pub fn encode_grid(
    grid: &HashGrid,
    points: &PointSet,
    bbox: &BoundingBox,
    params: QuantParams,
) -> Result<PrunedBitstream> {
    let mask = compute_validity(points, grid.config(), bbox)?;
    encode_with_mask(grid, &mask, bbox, params)
}

/// Decodes `stream` using an explicit mask. Invalid rows come back as zero.
pub fn decode_with_mask(stream: &PrunedBitstream, mask: &ValidityMask) -> Result<HashGrid> {
    let header = stream.header();
    let config = &header.config;
    mask.check_config(config)?;
    for (level, (&expected, &actual)) in header
        .valid_counts
        .iter()
        .zip(mask.valid_counts())
        .enumerate()
    {
        if expected != actual {
            return Err(Error::PositionMismatch {
                level,
                expected,
                actual,
            });
        }
    }
    let f = config.feature_dim();
    let levels = (0..config.levels())
        .into_par_iter()
        .map(|level| {
            decode_level(
                stream.payload(level),
                header.valid_counts[level] as usize * f,
                &header.quant,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    unpack_zero(&PackedFeatures::new(f, levels)?, mask, config)
}

/// Recomputes the mask from `points` and decodes. The points must equal the
/// encoder's, in any order.
pub fn decode_grid(stream: &PrunedBitstream, points: &PointSet) -> Result<HashGrid> {
    let header = stream.header();
    let mask = compute_validity(points, &header.config, &header.bbox)?;
    decode_with_mask(stream, &mask)
}

/// Parses and decodes a serialized stream.
pub fn decode_bytes(bytes: &[u8], points: &PointSet) -> Result<HashGrid> {
    decode_grid(&PrunedBitstream::from_bytes(bytes)?, points)
}
