//! SIFT-style detection and description: difference-of-Gaussians extrema over
//! a scale space with 3 scales per octave, a 36-bin orientation histogram,
//! and the 4x4x8 gradient descriptor with trilinear interpolation.
//!
//! Detection uses discrete extrema (no 3-D quadratic refinement).

use super::FloatDescriptor;
use crate::detect::Keypoint;
use crate::params::DescriptorParams;
use crate::raster::{gaussian_blur, GrayImage, RasterError, ScalarGrid};
use std::f64::consts::TAU;

const INTERVALS: usize = 3;
const BASE_SIGMA: f64 = 1.6;
/// Nominal smoothing already present in the source imagery.
const ASSUMED_BLUR: f64 = 0.5;
const MIN_OCTAVE_DIM: usize = 16;
const ORI_BINS: usize = 36;
const ORI_SIGMA_FACTOR: f64 = 1.5;
const ORI_PEAK_RATIO: f64 = 0.8;
const DESC_WIDTH: usize = 4;
const DESC_ORI_BINS: usize = 8;
/// Histogram cell width in units of the keypoint scale.
const DESC_SCALE_FACTOR: f64 = 3.0;
const DESC_CLIP: f64 = 0.2;

/// Gaussian images per octave (INTERVALS + 3 of them).
fn gaussian_octaves(img: &GrayImage) -> Vec<Vec<GrayImage>> {
    let k = 2f64.powf(1.0 / INTERVALS as f64);
    let n_gauss = INTERVALS + 3;
    let mut octaves: Vec<Vec<GrayImage>> = Vec::new();
    let mut seed =
        gaussian_blur(img, (BASE_SIGMA * BASE_SIGMA - ASSUMED_BLUR * ASSUMED_BLUR).sqrt())
            .expect("positive blur increment");
    loop {
        let mut stack = Vec::with_capacity(n_gauss);
        stack.push(seed.clone());
        for i in 1..n_gauss {
            let sig_prev = BASE_SIGMA * k.powi(i as i32 - 1);
            let sig_total = BASE_SIGMA * k.powi(i as i32);
            let delta = (sig_total * sig_total - sig_prev * sig_prev).sqrt();
            let next = gaussian_blur(&stack[i - 1], delta).expect("positive blur increment");
            stack.push(next);
        }
        // next octave seeds from the image at twice the base blur
        let doubled = &stack[INTERVALS];
        let (nw, nh) = (doubled.width / 2, doubled.height / 2);
        octaves.push(stack);
        if nw < MIN_OCTAVE_DIM || nh < MIN_OCTAVE_DIM {
            break;
        }
        let mut values = Vec::with_capacity(nw * nh);
        let src = &octaves.last().unwrap()[INTERVALS];
        for y in 0..nh {
            for x in 0..nw {
                values.push(src.get(x * 2, y * 2));
            }
        }
        seed = GrayImage::new(nw, nh, values);
    }
    octaves
}

fn dog_stack(gauss: &[GrayImage]) -> Vec<ScalarGrid> {
    gauss
        .windows(2)
        .map(|pair| {
            let (lo, hi) = (&pair[0], &pair[1]);
            let values = hi.values.iter().zip(&lo.values).map(|(a, b)| a - b).collect();
            ScalarGrid { width: lo.width, height: lo.height, values }
        })
        .collect()
}

fn is_extremum(dogs: &[ScalarGrid], layer: usize, x: usize, y: usize) -> bool {
    let v = dogs[layer].get(x, y);
    let mut gt_all = true;
    let mut lt_all = true;
    for grid in &dogs[layer - 1..=layer + 1] {
        for dy in -1i32..=1 {
            for dx in -1i32..=1 {
                let nv = grid.get((x as i32 + dx) as usize, (y as i32 + dy) as usize);
                if std::ptr::eq(grid, &dogs[layer]) && dx == 0 && dy == 0 {
                    continue;
                }
                if v <= nv {
                    gt_all = false;
                }
                if v >= nv {
                    lt_all = false;
                }
                if !gt_all && !lt_all {
                    return false;
                }
            }
        }
    }
    gt_all || lt_all
}

/// Principal-curvature edge test: reject when trace^2/det > (r+1)^2/r.
fn passes_edge_test(dog: &ScalarGrid, x: usize, y: usize, edge_ratio: f64) -> bool {
    let v = dog.get(x, y);
    let dxx = dog.get(x + 1, y) + dog.get(x - 1, y) - 2.0 * v;
    let dyy = dog.get(x, y + 1) + dog.get(x, y - 1) - 2.0 * v;
    let dxy = (dog.get(x + 1, y + 1) - dog.get(x - 1, y + 1) - dog.get(x + 1, y - 1)
        + dog.get(x - 1, y - 1))
        / 4.0;
    let trace = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    if det <= 0.0 {
        return false;
    }
    let r = edge_ratio;
    trace * trace * r <= (r + 1.0) * (r + 1.0) * det
}

fn gradient(img: &GrayImage, x: usize, y: usize) -> (f64, f64) {
    let gx = img.get(x + 1, y) - img.get(x - 1, y);
    let gy = img.get(x, y + 1) - img.get(x, y - 1);
    (gx, gy)
}

/// Orientation histogram peaks around (x, y); each bin at >= 0.8 of the peak
/// contributes one angle (bin centers, no interpolation).
fn orientation_angles(gauss: &GrayImage, x: usize, y: usize, sigma_local: f64) -> Vec<f64> {
    let sigma_w = ORI_SIGMA_FACTOR * sigma_local;
    let radius = (3.0 * sigma_w).round() as isize;
    let mut hist = [0.0f64; ORI_BINS];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let px = x as isize + dx;
            let py = y as isize + dy;
            if px < 1 || py < 1 || px >= gauss.width as isize - 1 || py >= gauss.height as isize - 1
            {
                continue;
            }
            let (gx, gy) = gradient(gauss, px as usize, py as usize);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let ori = gy.atan2(gx).rem_euclid(TAU);
            let weight = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma_w * sigma_w)).exp();
            let bin = ((ori / TAU) * ORI_BINS as f64) as usize % ORI_BINS;
            hist[bin] += weight * mag;
        }
    }
    let peak = hist.iter().cloned().fold(f64::MIN, f64::max);
    if peak <= 0.0 {
        return Vec::new();
    }
    let mut angles = Vec::new();
    for (bin, &h) in hist.iter().enumerate() {
        if h >= ORI_PEAK_RATIO * peak {
            angles.push((bin as f64 + 0.5) * TAU / ORI_BINS as f64);
        }
    }
    angles
}

/// Difference-of-Gaussians keypoints with orientation, in level-0 coordinates.
pub fn sift_detect(img: &GrayImage, p: &DescriptorParams) -> Result<Vec<Keypoint>, RasterError> {
    if img.width < 32 || img.height < 32 {
        return Err(RasterError::InvalidInput(format!(
            "sift needs at least 32x32, got {}x{}",
            img.width, img.height
        )));
    }
    let k = 2f64.powf(1.0 / INTERVALS as f64);
    let octaves = gaussian_octaves(img);
    let mut keypoints = Vec::new();
    for (o, gauss) in octaves.iter().enumerate() {
        let dogs = dog_stack(gauss);
        let octave_scale = (1usize << o) as f64;
        for layer in 1..=INTERVALS {
            let dog = &dogs[layer];
            for y in 1..dog.height - 1 {
                for x in 1..dog.width - 1 {
                    let v = dog.get(x, y);
                    if v.abs() < p.sift_contrast_threshold {
                        continue;
                    }
                    if !is_extremum(&dogs, layer, x, y) {
                        continue;
                    }
                    if !passes_edge_test(dog, x, y, p.sift_edge_ratio) {
                        continue;
                    }
                    let sigma_local = BASE_SIGMA * k.powi(layer as i32);
                    for angle in orientation_angles(&gauss[layer], x, y, sigma_local) {
                        keypoints.push(Keypoint {
                            x: x as f64 * octave_scale,
                            y: y as f64 * octave_scale,
                            response: v.abs(),
                            scale: sigma_local * octave_scale,
                            angle: Some(angle),
                        });
                    }
                }
            }
        }
    }
    Ok(keypoints)
}

/// 128-d gradient histogram descriptor sampled from the image at the
/// keypoint's scale, rotated by its angle. L2-normalized, components clipped
/// at 0.2, renormalized. `None` when the sample window leaves the image.
pub fn sift_describe(img: &GrayImage, kp: &Keypoint) -> Option<FloatDescriptor> {
    let d = DESC_WIDTH;
    let n = DESC_ORI_BINS;
    let angle = kp.angle.unwrap_or(0.0);
    let (sin_t, cos_t) = angle.sin_cos();
    let hist_width = DESC_SCALE_FACTOR * kp.scale;
    let radius = (hist_width * std::f64::consts::SQRT_2 * (d as f64 + 1.0) * 0.5).round() as isize;
    let cx = kp.x.round() as isize;
    let cy = kp.y.round() as isize;
    if cx - radius < 1
        || cy - radius < 1
        || cx + radius >= img.width as isize - 1
        || cy + radius >= img.height as isize - 1
    {
        return None;
    }

    // padded (d+2)^2 x n histogram; spatial bins spill into the padding,
    // orientation wraps
    let mut hist = vec![0.0f64; (d + 2) * (d + 2) * n];
    let bins_per_rad = n as f64 / TAU;
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let c_rot = (cos_t * dx as f64 + sin_t * dy as f64) / hist_width;
            let r_rot = (-sin_t * dx as f64 + cos_t * dy as f64) / hist_width;
            let rbin = r_rot + d as f64 / 2.0 - 0.5;
            let cbin = c_rot + d as f64 / 2.0 - 0.5;
            if rbin <= -1.0 || rbin >= d as f64 || cbin <= -1.0 || cbin >= d as f64 {
                continue;
            }
            let (gx, gy) = gradient(img, (cx + dx) as usize, (cy + dy) as usize);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let ori = (gy.atan2(gx) - angle).rem_euclid(TAU);
            let obin = ori * bins_per_rad;
            // Gaussian window with sigma = half the descriptor width
            let weight = (-(c_rot * c_rot + r_rot * r_rot) / (2.0 * (d as f64 / 2.0).powi(2))).exp();
            trilinear_accumulate(&mut hist, d, n, rbin, cbin, obin, weight * mag);
        }
    }

    let mut flat = Vec::with_capacity(d * d * n);
    for r in 1..=d {
        for c in 1..=d {
            for o in 0..n {
                flat.push(hist[(r * (d + 2) + c) * n + o]);
            }
        }
    }
    let norm = flat.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Some(FloatDescriptor { values: vec![0.0f32; d * d * n] });
    }
    for v in &mut flat {
        *v = (*v / norm).min(DESC_CLIP);
    }
    let norm2 = flat.iter().map(|v| v * v).sum::<f64>().sqrt();
    let values = flat.iter().map(|v| (v / norm2) as f32).collect();
    Some(FloatDescriptor { values })
}

fn trilinear_accumulate(
    hist: &mut [f64],
    d: usize,
    n: usize,
    rbin: f64,
    cbin: f64,
    obin: f64,
    value: f64,
) {
    let r0 = rbin.floor();
    let c0 = cbin.floor();
    let o0 = obin.floor();
    let dr = rbin - r0;
    let dc = cbin - c0;
    let dob = obin - o0;
    let r0 = r0 as isize;
    let c0 = c0 as isize;
    let o0 = o0 as isize;
    for (ri, rw) in [(r0, 1.0 - dr), (r0 + 1, dr)] {
        let row = ri + 1; // padding offset
        if !(0..(d + 2) as isize).contains(&row) {
            continue;
        }
        for (ci, cw) in [(c0, 1.0 - dc), (c0 + 1, dc)] {
            let col = ci + 1;
            if !(0..(d + 2) as isize).contains(&col) {
                continue;
            }
            for (oi, ow) in [(o0, 1.0 - dob), (o0 + 1, dob)] {
                let ob = oi.rem_euclid(n as isize) as usize;
                hist[(row as usize * (d + 2) + col as usize) * n + ob] += value * rw * cw * ow;
            }
        }
    }
}
