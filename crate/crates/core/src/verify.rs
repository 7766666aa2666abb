//! End-to-end check that a decoded grid answers every query exactly as the
//! encoder-side grid does.

use std::fmt;

use crate::codec::{decode_grid, PrunedBitstream, QuantParams};
use crate::error::{Error, Result};
use crate::grid::{interpolate_all, BoundingBox, HashGrid, PointSet};
use crate::prune::{compute_validity, touched_indices_oracle, ValidityMask};

#[derive(Debug, Clone, PartialEq)]
pub enum VerifyFailure {
    /// The fast mask and the interpolation-trace oracle disagree.
    MaskMismatch { level: usize, index: u32 },
    /// A valid row of the decoded grid differs from the reconstructed
    /// original.
    RowMismatch { level: usize, index: u32 },
    /// Interpolated outputs differ although every valid row matches.
    Deviation { max_abs: f64 },
}

impl fmt::Display for VerifyFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerifyFailure::MaskMismatch { level, index } => {
                write!(f, "mask and oracle disagree at level {level}, index {index}")
            }
            VerifyFailure::RowMismatch { level, index } => {
                write!(f, "decoded row differs at level {level}, index {index}")
            }
            VerifyFailure::Deviation { max_abs } => {
                write!(f, "interpolated outputs deviate by {max_abs:e}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    pub max_abs_deviation: f64,
    pub failure: Option<VerifyFailure>,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

pub fn check_masks(mask: &ValidityMask, oracle: &ValidityMask) -> Option<VerifyFailure> {
    if mask.levels() != oracle.levels() || mask.table_size() != oracle.table_size() {
        return Some(VerifyFailure::MaskMismatch { level: 0, index: 0 });
    }
    mask.first_difference(oracle)
        .map(|(level, index)| VerifyFailure::MaskMismatch { level, index })
}

/// Compares `decoded` against the quantize/dequantize image of `original`
/// over the rows and queries determined by `points`.
pub fn verify_decoded(
    original: &HashGrid,
    decoded: &HashGrid,
    points: &PointSet,
    bbox: &BoundingBox,
    params: &QuantParams,
) -> Result<VerifyOutcome> {
    if original.config() != decoded.config() {
        return Err(Error::Config("decoded grid config differs from the original".into()));
    }
    let config = original.config();
    let mask = compute_validity(points, config, bbox)?;
    let oracle = touched_indices_oracle(points, config, bbox)?;
    verify_with_masks(original, decoded, points, bbox, params, &mask, &oracle)
}

/// As [`verify_decoded`], with caller-supplied masks.
pub fn verify_with_masks(
    original: &HashGrid,
    decoded: &HashGrid,
    points: &PointSet,
    bbox: &BoundingBox,
    params: &QuantParams,
    mask: &ValidityMask,
    oracle: &ValidityMask,
) -> Result<VerifyOutcome> {
    let reference = params.reconstruct_grid(original)?;
    let expected = interpolate_all(&reference, points, bbox)?;
    let actual = interpolate_all(decoded, points, bbox)?;
    let max_abs_deviation = expected.max_abs_diff(&actual);

    let mut failure = check_masks(mask, oracle);
    if failure.is_none() {
        'rows: for level in 0..mask.levels() {
            for index in mask.valid_indices(level) {
                let same = reference
                    .row(level, index)
                    .iter()
                    .zip(decoded.row(level, index))
                    .all(|(a, b)| a.to_bits() == b.to_bits());
                if !same {
                    failure = Some(VerifyFailure::RowMismatch { level, index });
                    break 'rows;
                }
            }
        }
    }
    if failure.is_none() && !expected.bit_eq(&actual) {
        failure = Some(VerifyFailure::Deviation {
            max_abs: max_abs_deviation,
        });
    }
    Ok(VerifyOutcome {
        max_abs_deviation,
        failure,
    })
}

/// Decodes `stream` against `points` and verifies it against `original`.
pub fn verify_stream(
    original: &HashGrid,
    stream: &PrunedBitstream,
    points: &PointSet,
) -> Result<VerifyOutcome> {
    let decoded = decode_grid(stream, points)?;
    let header = stream.header();
    verify_decoded(original, &decoded, points, &header.bbox, &header.quant)
}
