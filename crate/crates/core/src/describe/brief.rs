//! BRIEF intensity-pair tests, the intensity-centroid orientation, and the
//! steered (rotated) BRIEF variant used by ORB.

use super::pattern::{angle_bin, rotated_patterns, SamplingPattern};
use super::BinaryDescriptor;
use crate::detect::Keypoint;
use crate::raster::GrayImage;

/// Radius of the circular patch feeding the intensity centroid.
pub const CENTROID_RADIUS: i32 = 15;

fn eval_tests(img: &GrayImage, cx: i32, cy: i32, pattern: &SamplingPattern) -> Option<BinaryDescriptor> {
    let margin = pattern.max_abs_offset();
    if cx < margin
        || cy < margin
        || cx + margin >= img.width as i32
        || cy + margin >= img.height as i32
    {
        return None;
    }
    let mut desc = BinaryDescriptor::zeroed();
    for (i, &(ax, ay, bx, by)) in pattern.pairs.iter().enumerate() {
        let a = img.get((cx + ax) as usize, (cy + ay) as usize);
        let b = img.get((cx + bx) as usize, (cy + by) as usize);
        if a < b {
            desc.set_bit(i);
        }
    }
    Some(desc)
}

/// Unoriented BRIEF over a pre-smoothed image.
///
/// Bit i is set when the intensity at the pair's first point is strictly
/// below the second. Returns `None` when the patch leaves the image, in
/// which case the caller drops the keypoint.
pub fn brief_describe(
    img: &GrayImage,
    kp: &Keypoint,
    pattern: &SamplingPattern,
) -> Option<BinaryDescriptor> {
    eval_tests(img, kp.x.round() as i32, kp.y.round() as i32, pattern)
}

/// Orientation from intensity moments over a circular patch: the angle of
/// (m10, m01) mapped into [0, 2*pi); contrast-free patches report 0.
pub fn centroid_angle(img: &GrayImage, kp: &Keypoint, radius: i32) -> Option<f64> {
    let cx = kp.x.round() as i32;
    let cy = kp.y.round() as i32;
    if cx < radius
        || cy < radius
        || cx + radius >= img.width as i32
        || cy + radius >= img.height as i32
    {
        return None;
    }
    let r2 = radius * radius;
    // paired differences so constant patches give exactly zero moments
    let mut m10 = 0.0f64;
    let mut m01 = 0.0f64;
    for dy in -radius..=radius {
        for dx in 1..=radius {
            if dx * dx + dy * dy > r2 {
                continue;
            }
            let plus = img.get((cx + dx) as usize, (cy + dy) as usize);
            let minus = img.get((cx - dx) as usize, (cy + dy) as usize);
            m10 += dx as f64 * (plus - minus);
        }
    }
    for dx in -radius..=radius {
        for dy in 1..=radius {
            if dx * dx + dy * dy > r2 {
                continue;
            }
            let plus = img.get((cx + dx) as usize, (cy + dy) as usize);
            let minus = img.get((cx + dx) as usize, (cy - dy) as usize);
            m01 += dy as f64 * (plus - minus);
        }
    }
    if m10 == 0.0 && m01 == 0.0 {
        return Some(0.0);
    }
    let angle = m01.atan2(m10);
    Some(if angle < 0.0 { angle + std::f64::consts::TAU } else { angle })
}

/// BRIEF with the sampling pattern rotated by `angle`, quantized to the
/// nearest of 30 orientation bins.
pub fn steered_brief(
    img: &GrayImage,
    kp: &Keypoint,
    _pattern: &SamplingPattern,
    angle: f64,
) -> Option<BinaryDescriptor> {
    let bin = angle_bin(angle);
    let rotated = &rotated_patterns()[bin];
    eval_tests(img, kp.x.round() as i32, kp.y.round() as i32, rotated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GrayImage;

    fn rng_values(seed: u64, n: usize) -> Vec<f64> {
        let mut state = seed.max(1);
        (0..n)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect()
    }

    #[test]
    fn constant_image_gives_all_zero_bits() {
        let img = GrayImage::filled(64, 64, 0.4);
        let kp = Keypoint::at(32.0, 32.0, 1.0);
        let desc = brief_describe(&img, &kp, SamplingPattern::builtin()).unwrap();
        assert_eq!(desc, BinaryDescriptor::zeroed());
    }

    #[test]
    fn brief_is_deterministic() {
        let img = GrayImage::new(64, 64, rng_values(1, 64 * 64));
        let kp = Keypoint::at(31.0, 29.0, 1.0);
        let a = brief_describe(&img, &kp, SamplingPattern::builtin()).unwrap();
        let b = brief_describe(&img, &kp, SamplingPattern::builtin()).unwrap();
        assert_eq!(super::super::hamming_distance(&a, &b), 0);
    }

    #[test]
    fn brief_bits_match_pair_test_oracle() {
        let img = GrayImage::new(64, 64, rng_values(9, 64 * 64));
        let kp = Keypoint::at(30.0, 33.0, 1.0);
        let pattern = SamplingPattern::builtin();
        let desc = brief_describe(&img, &kp, pattern).unwrap();
        for (i, &(ax, ay, bx, by)) in pattern.pairs.iter().enumerate() {
            let a = img.get((30 + ax) as usize, (33 + ay) as usize);
            let b = img.get((30 + bx) as usize, (33 + by) as usize);
            assert_eq!(desc.bit(i), a < b, "test {i}");
        }
    }

    #[test]
    fn out_of_bounds_patch_is_skipped() {
        let img = GrayImage::filled(64, 64, 0.5);
        let kp = Keypoint::at(5.0, 32.0, 1.0);
        assert!(brief_describe(&img, &kp, SamplingPattern::builtin()).is_none());
        assert!(centroid_angle(&img, &kp, CENTROID_RADIUS).is_none());
    }

    #[test]
    fn centroid_angle_of_axis_ramps() {
        let mut img_x = GrayImage::filled(64, 64, 0.0);
        let mut img_y = GrayImage::filled(64, 64, 0.0);
        for y in 0..64 {
            for x in 0..64 {
                img_x.set(x, y, x as f64 / 63.0);
                img_y.set(x, y, y as f64 / 63.0);
            }
        }
        let kp = Keypoint::at(32.0, 32.0, 1.0);
        let ax = centroid_angle(&img_x, &kp, CENTROID_RADIUS).unwrap();
        let ay = centroid_angle(&img_y, &kp, CENTROID_RADIUS).unwrap();
        assert!(ax.abs() < 1e-6, "ramp +x angle {ax}");
        assert!((ay - std::f64::consts::FRAC_PI_2).abs() < 1e-6, "ramp +y angle {ay}");
    }

    #[test]
    fn centroid_matches_naive_moment_oracle() {
        let img = GrayImage::new(64, 64, rng_values(21, 64 * 64));
        let kp = Keypoint::at(30.0, 31.0, 1.0);
        let got = centroid_angle(&img, &kp, CENTROID_RADIUS).unwrap();
        let (cx, cy, r) = (30i32, 31i32, CENTROID_RADIUS);
        let mut m10 = 0.0;
        let mut m01 = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy > r * r {
                    continue;
                }
                let v = img.get((cx + dx) as usize, (cy + dy) as usize);
                m10 += dx as f64 * v;
                m01 += dy as f64 * v;
            }
        }
        let mut want = m01.atan2(m10);
        if want < 0.0 {
            want += std::f64::consts::TAU;
        }
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn centroid_angle_rotates_with_the_patch() {
        // rotating the image by 90 degrees about the keypoint shifts the
        // centroid angle by pi/2
        let src = {
            let noise = rng_values(77, 64 * 64);
            let mut img = GrayImage::new(64, 64, noise);
            // superimpose a smooth gradient so the centroid is well defined
            for y in 0..64 {
                for x in 0..64 {
                    let v = img.get(x, y) * 0.2 + 0.8 * (x as f64 / 63.0);
                    img.set(x, y, v);
                }
            }
            crate::raster::gaussian_blur(&img, 1.5).unwrap()
        };
        // rotate +90 degrees about the center: dest(x, y) = src(y, 63 - x)
        let mut rot = GrayImage::filled(64, 64, 0.0);
        for y in 0..64 {
            for x in 0..64 {
                rot.set(x, y, src.get(y, 63 - x));
            }
        }
        let kp = Keypoint::at(31.5, 31.5, 1.0);
        let kp_i = Keypoint::at(31.0, 31.0, 1.0);
        let a = centroid_angle(&src, &kp_i, CENTROID_RADIUS).unwrap();
        let b = centroid_angle(&rot, &kp, CENTROID_RADIUS).unwrap();
        let diff = (b - a - std::f64::consts::FRAC_PI_2).rem_euclid(std::f64::consts::TAU);
        let wrapped = diff.min(std::f64::consts::TAU - diff);
        assert!(wrapped < 0.05, "angle shift off by {wrapped}");
    }

    #[test]
    fn steered_with_zero_angle_equals_brief() {
        let img = GrayImage::new(64, 64, rng_values(3, 64 * 64));
        let kp = Keypoint::at(32.0, 32.0, 1.0);
        let pattern = SamplingPattern::builtin();
        let plain = brief_describe(&img, &kp, pattern).unwrap();
        let steered = steered_brief(&img, &kp, pattern, 0.0).unwrap();
        assert_eq!(plain, steered);
        let full_turn = steered_brief(&img, &kp, pattern, std::f64::consts::TAU).unwrap();
        assert_eq!(plain, full_turn);
    }

    #[test]
    fn steered_pi_matches_explicit_rotation_oracle() {
        let img = GrayImage::new(64, 64, rng_values(15, 64 * 64));
        let kp = Keypoint::at(32.0, 32.0, 1.0);
        let pattern = SamplingPattern::builtin();
        let steered = steered_brief(&img, &kp, pattern, std::f64::consts::PI).unwrap();
        // oracle: rotate each offset by the quantized angle explicitly
        let bin = 15usize; // pi quantizes to bin 15 of 30
        let theta = bin as f64 * std::f64::consts::TAU / 30.0;
        let (sin, cos) = theta.sin_cos();
        for (i, &(ax, ay, bx, by)) in pattern.pairs.iter().enumerate() {
            let rot = |x: i32, y: i32| {
                (
                    (x as f64 * cos - y as f64 * sin).round() as i32,
                    (x as f64 * sin + y as f64 * cos).round() as i32,
                )
            };
            let (rax, ray) = rot(ax, ay);
            let (rbx, rby) = rot(bx, by);
            let a = img.get((32 + rax) as usize, (32 + ray) as usize);
            let b = img.get((32 + rbx) as usize, (32 + rby) as usize);
            assert_eq!(steered.bit(i), a < b, "test {i}");
        }
    }
}
