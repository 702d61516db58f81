//! The BRIEF sampling pattern: 256 fixed point pairs inside a 31x31 patch,
//! shipped as a constant data file so descriptors are bit-exact across
//! builds, plus its 30 precomputed rotations for steered BRIEF.

use std::sync::OnceLock;

/// Number of discrete orientations steered BRIEF distinguishes.
pub const ORB_ROTATION_BINS: usize = 30;

/// SHA-256 of the canonical pattern file (also recorded in the docs).
pub const PATTERN_SHA256: &str = "2316f682ebf334f23db1fa99117f4b610f2cd5524efe29367b6d0cde31a06ef9";

pub(crate) const PATTERN_TEXT: &str = include_str!("../../data/brief_pattern.txt");

/// 256 point pairs (a_i, b_i), integer offsets with |dx|,|dy| <= 15.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingPattern {
    pub pairs: Vec<(i32, i32, i32, i32)>,
}

impl SamplingPattern {
    /// Parse the documented text format: 256 lines of "ax ay bx by".
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut pairs = Vec::with_capacity(256);
        for (i, line) in text.lines().enumerate() {
            let fields: Vec<i32> = line
                .split(' ')
                .map(|t| t.parse::<i32>().map_err(|_| format!("line {}: bad integer {t:?}", i + 1)))
                .collect::<Result<_, _>>()?;
            if fields.len() != 4 {
                return Err(format!("line {}: expected 4 integers, got {}", i + 1, fields.len()));
            }
            if fields.iter().any(|v| v.abs() > 15) {
                return Err(format!("line {}: offset outside the 31x31 patch", i + 1));
            }
            pairs.push((fields[0], fields[1], fields[2], fields[3]));
        }
        if pairs.len() != 256 {
            return Err(format!("expected 256 pairs, got {}", pairs.len()));
        }
        Ok(Self { pairs })
    }

    /// The pattern shipped with the crate.
    pub fn builtin() -> &'static SamplingPattern {
        static BUILTIN: OnceLock<SamplingPattern> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            SamplingPattern::parse(PATTERN_TEXT).expect("builtin BRIEF pattern is valid")
        })
    }

    /// Rotate every point by `angle` and round to integer offsets.
    pub fn rotated(&self, angle: f64) -> SamplingPattern {
        let (sin, cos) = angle.sin_cos();
        let rot = |x: i32, y: i32| {
            let xr = (x as f64 * cos - y as f64 * sin).round() as i32;
            let yr = (x as f64 * sin + y as f64 * cos).round() as i32;
            (xr, yr)
        };
        let pairs = self
            .pairs
            .iter()
            .map(|&(ax, ay, bx, by)| {
                let (rax, ray) = rot(ax, ay);
                let (rbx, rby) = rot(bx, by);
                (rax, ray, rbx, rby)
            })
            .collect();
        SamplingPattern { pairs }
    }

    /// Largest |offset| among this pattern's points.
    pub fn max_abs_offset(&self) -> i32 {
        self.pairs
            .iter()
            .flat_map(|&(ax, ay, bx, by)| [ax.abs(), ay.abs(), bx.abs(), by.abs()])
            .max()
            .unwrap_or(0)
    }
}

/// The builtin pattern rotated to each of the 30 orientation bins.
pub(crate) fn rotated_patterns() -> &'static [SamplingPattern; ORB_ROTATION_BINS] {
    static ROTATED: OnceLock<[SamplingPattern; ORB_ROTATION_BINS]> = OnceLock::new();
    ROTATED.get_or_init(|| {
        let base = SamplingPattern::builtin();
        std::array::from_fn(|bin| {
            base.rotated(bin as f64 * std::f64::consts::TAU / ORB_ROTATION_BINS as f64)
        })
    })
}

/// Margin (in pixels) that keeps every rotated test point inside the image.
pub(crate) fn rotated_pattern_margin() -> i32 {
    static MARGIN: OnceLock<i32> = OnceLock::new();
    *MARGIN.get_or_init(|| {
        rotated_patterns().iter().map(SamplingPattern::max_abs_offset).max().unwrap()
    })
}

/// Quantize an angle (radians) to its steered-BRIEF rotation bin.
pub(crate) fn angle_bin(angle: f64) -> usize {
    let tau = std::f64::consts::TAU;
    let step = tau / ORB_ROTATION_BINS as f64;
    let wrapped = angle.rem_euclid(tau);
    (wrapped / step).round() as usize % ORB_ROTATION_BINS
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::{Digest, Sha256};

    #[test]
    fn builtin_pattern_parses_and_fits_patch() {
        let p = SamplingPattern::builtin();
        assert_eq!(p.pairs.len(), 256);
        assert!(p.max_abs_offset() <= 15);
        for &(ax, ay, bx, by) in &p.pairs {
            assert_ne!((ax, ay), (bx, by), "degenerate pair");
        }
    }

    #[test]
    fn pattern_file_checksum_is_pinned() {
        let digest = Sha256::digest(PATTERN_TEXT.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(hex, PATTERN_SHA256);
    }

    #[test]
    fn rotations_stay_within_the_expected_margin() {
        let margin = rotated_pattern_margin();
        assert!(margin >= 15 && margin <= 22, "margin {margin}");
    }

    #[test]
    fn angle_bins_wrap_and_quantize() {
        let tau = std::f64::consts::TAU;
        assert_eq!(angle_bin(0.0), 0);
        assert_eq!(angle_bin(tau), 0);
        assert_eq!(angle_bin(-tau), 0);
        assert_eq!(angle_bin(tau / 30.0), 1);
        // halfway rounds up to the nearest bin
        assert_eq!(angle_bin(tau / 60.0), 1);
        assert_eq!(angle_bin(29.6 * tau / 30.0), 0);
    }

    #[test]
    fn parse_rejects_malformed_tables() {
        assert!(SamplingPattern::parse("1 2 3\n").is_err());
        assert!(SamplingPattern::parse("1 2 3 99\n").is_err());
        let short: String = "0 0 1 1\n".repeat(255);
        assert!(SamplingPattern::parse(&short).is_err());
    }
}
