//! Feature descriptors: BRIEF and its rotated (ORB) variant, the SURF
//! fast-Hessian detector and 64-d descriptor, and a SIFT-style DoG detector
//! with the 128-d gradient-histogram descriptor.

mod brief;
mod orb;
mod pattern;
mod sift;
mod surf;

pub use brief::{brief_describe, centroid_angle, steered_brief, CENTROID_RADIUS};
pub use orb::orb_extract;
pub use pattern::{SamplingPattern, ORB_ROTATION_BINS, PATTERN_SHA256};
pub use sift::{sift_describe, sift_detect};
pub use surf::{surf_describe, surf_describe_with_integral, surf_detect, surf_filter_sizes};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DescribeError {
    #[error("descriptor dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
}

/// 256 intensity-test outcomes packed little-endian: test i lands in bit
/// (i % 8) of byte (i / 8).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BinaryDescriptor(pub [u8; 32]);

impl BinaryDescriptor {
    pub const BITS: usize = 256;

    #[inline]
    pub fn set_bit(&mut self, i: usize) {
        self.0[i / 8] |= 1 << (i % 8);
    }

    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        self.0[i / 8] & (1 << (i % 8)) != 0
    }

    pub fn zeroed() -> Self {
        Self([0u8; 32])
    }
}

/// Real-valued descriptor: 64-d for SURF, 128-d for SIFT. Non-degenerate
/// descriptors are L2-normalized; contrast-free patches yield all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatDescriptor {
    pub values: Vec<f32>,
}

impl FloatDescriptor {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt()
    }
}

/// Descriptor payload of a task result, aligned 1:1 with its keypoints.
#[derive(Debug, Clone, PartialEq)]
pub enum Descriptors {
    Binary(Vec<BinaryDescriptor>),
    Float(Vec<FloatDescriptor>),
}

impl Descriptors {
    pub fn len(&self) -> usize {
        match self {
            Descriptors::Binary(v) => v.len(),
            Descriptors::Float(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Popcount of the XOR of two 256-bit descriptors.
pub fn hamming_distance(a: &BinaryDescriptor, b: &BinaryDescriptor) -> u32 {
    a.0.iter().zip(b.0.iter()).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Euclidean distance between equal-dimension float descriptors.
pub fn l2_distance(a: &FloatDescriptor, b: &FloatDescriptor) -> Result<f64, DescribeError> {
    if a.dim() != b.dim() {
        return Err(DescribeError::DimMismatch(a.dim(), b.dim()));
    }
    let sum: f64 = a
        .values
        .iter()
        .zip(b.values.iter())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum.sqrt())
}
