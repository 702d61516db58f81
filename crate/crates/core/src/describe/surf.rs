//! SURF: fast-Hessian blob detection over box-filter approximations of the
//! Hessian, and the upright 64-d Haar-wavelet descriptor.

use super::FloatDescriptor;
use crate::detect::Keypoint;
use crate::params::DescriptorParams;
use crate::raster::{box_sum, integral, GrayImage, IntegralImage, RasterError, ScalarGrid};

/// Relative weight of the Dxy lobe in the Hessian determinant.
const DXY_WEIGHT: f64 = 0.9;
/// Internal [0,1] responses are scaled by 255^2 so the hessian threshold is
/// read on the 0-255 intensity convention.
const INTENSITY_SCALE_SQ: f64 = 255.0 * 255.0;

/// Box-filter sizes per octave: {9,15,21,27}, {15,27,39,51}, ...
/// Successive octaves double the size step.
pub fn surf_filter_sizes(octaves: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(octaves);
    let mut start = 9usize;
    let mut step = 6usize;
    for _ in 0..octaves {
        out.push((0..4).map(|i| start + i * step).collect());
        start += step;
        step *= 2;
    }
    out
}

/// Area-normalized det-of-Hessian responses for one filter size, on the
/// 0-255 convention. Pixels whose filter leaves the image are zero.
fn hessian_grid(ii: &IntegralImage, size: usize) -> ScalarGrid {
    let (w, h) = (ii.width, ii.height);
    let mut grid = ScalarGrid::zeros(w, h);
    let border = (size - 1) / 2;
    if w < size + 1 || h < size + 1 {
        return grid;
    }
    let lobe = size / 3;
    let inv_area = 1.0 / (size * size) as f64;
    // box(x0, y0, width, height) over in-bounds coordinates
    let bx = |x0: isize, y0: isize, bw: usize, bh: usize| -> f64 {
        box_sum(ii, x0 as usize, y0 as usize, x0 as usize + bw, y0 as usize + bh)
            .expect("filter stays inside the image at valid margins")
    };
    for y in border..h - border {
        for x in border..w - border {
            let (xi, yi) = (x as isize, y as isize);
            let l = lobe as isize;
            let b = border as isize;
            let dxx = bx(xi - b, yi - l + 1, size, 2 * lobe - 1)
                - 3.0 * bx(xi - (l / 2), yi - l + 1, lobe, 2 * lobe - 1);
            let dyy = bx(xi - l + 1, yi - b, 2 * lobe - 1, size)
                - 3.0 * bx(xi - l + 1, yi - (l / 2), 2 * lobe - 1, lobe);
            let dxy = bx(xi + 1, yi - l, lobe, lobe) + bx(xi - l, yi + 1, lobe, lobe)
                - bx(xi - l, yi - l, lobe, lobe)
                - bx(xi + 1, yi + 1, lobe, lobe);
            let (dxx, dyy, dxy) = (dxx * inv_area, dyy * inv_area, dxy * inv_area);
            let det = dxx * dyy - (DXY_WEIGHT * dxy) * (DXY_WEIGHT * dxy);
            grid.set(x, y, det * INTENSITY_SCALE_SQ);
        }
    }
    grid
}

/// Fast-Hessian keypoints: 3x3x3 maxima over (x, y, filter size) within each
/// octave, above `surf_hessian_threshold`. Keypoint scale is 1.2*size/9.
pub fn surf_detect(img: &GrayImage, p: &DescriptorParams) -> Result<Vec<Keypoint>, RasterError> {
    if img.width < 11 || img.height < 11 {
        return Err(RasterError::InvalidInput(format!(
            "surf needs at least 11x11 for the 9x9 base filter, got {}x{}",
            img.width, img.height
        )));
    }
    let ii = integral(img);
    let mut keypoints = Vec::new();
    for sizes in surf_filter_sizes(p.surf_octaves) {
        let grids: Vec<ScalarGrid> = sizes.iter().map(|&s| hessian_grid(&ii, s)).collect();
        for j in 1..sizes.len() - 1 {
            // candidates must clear the margin of the largest neighbor filter
            let margin = (sizes[j + 1] - 1) / 2 + 1;
            if img.width < 2 * margin + 1 || img.height < 2 * margin + 1 {
                continue;
            }
            for y in margin..img.height - margin {
                for x in margin..img.width - margin {
                    let v = grids[j].get(x, y);
                    if !(v > p.surf_hessian_threshold) {
                        continue;
                    }
                    let mut is_max = true;
                    'cube: for sk in j - 1..=j + 1 {
                        for dy in -1i32..=1 {
                            for dx in -1i32..=1 {
                                if sk == j && dx == 0 && dy == 0 {
                                    continue;
                                }
                                let nv =
                                    grids[sk].get((x as i32 + dx) as usize, (y as i32 + dy) as usize);
                                if nv >= v {
                                    is_max = false;
                                    break 'cube;
                                }
                            }
                        }
                    }
                    if is_max {
                        keypoints.push(Keypoint {
                            x: x as f64,
                            y: y as f64,
                            response: v,
                            scale: 1.2 * sizes[j] as f64 / 9.0,
                            angle: None,
                        });
                    }
                }
            }
        }
    }
    Ok(keypoints)
}

/// Upright SURF descriptor: 4x4 subregions of (sum dx, sum dy, sum |dx|,
/// sum |dy|) over Gaussian-weighted Haar responses, L2-normalized.
///
/// `None` when the 20*scale window leaves the image. A contrast-free window
/// yields the all-zero descriptor.
pub fn surf_describe_with_integral(ii: &IntegralImage, kp: &Keypoint) -> Option<FloatDescriptor> {
    let s = kp.scale;
    let half = (s.round() as isize).max(1); // Haar half-size
    let mut sums = [[0.0f64; 4]; 16];
    for my in 0..20 {
        let v = my as f64 - 9.5;
        let py = (kp.y + v * s).round() as isize;
        for mx in 0..20 {
            let u = mx as f64 - 9.5;
            let px = (kp.x + u * s).round() as isize;
            if px - half < 0
                || py - half < 0
                || px + half > ii.width as isize
                || py + half > ii.height as isize
            {
                return None;
            }
            let b = |x0: isize, y0: isize, x1: isize, y1: isize| {
                box_sum(ii, x0 as usize, y0 as usize, x1 as usize, y1 as usize).unwrap()
            };
            let dx = b(px, py - half, px + half, py + half) - b(px - half, py - half, px, py + half);
            let dy = b(px - half, py, px + half, py + half) - b(px - half, py - half, px + half, py);
            let weight = (-(u * u + v * v) / (2.0 * 3.3 * 3.3)).exp();
            let (wdx, wdy) = (weight * dx, weight * dy);
            let cell = &mut sums[(my / 5) * 4 + mx / 5];
            cell[0] += wdx;
            cell[1] += wdy;
            cell[2] += wdx.abs();
            cell[3] += wdy.abs();
        }
    }
    let flat: Vec<f64> = sums.iter().flatten().copied().collect();
    let norm = flat.iter().map(|v| v * v).sum::<f64>().sqrt();
    let values = if norm < 1e-12 {
        vec![0.0f32; 64]
    } else {
        flat.iter().map(|v| (v / norm) as f32).collect()
    };
    Some(FloatDescriptor { values })
}

/// Convenience wrapper building the integral image internally.
pub fn surf_describe(img: &GrayImage, kp: &Keypoint) -> Option<FloatDescriptor> {
    surf_describe_with_integral(&integral(img), kp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_blob(size: usize, cx: f64, cy: f64, sigma: f64, amplitude: f64) -> GrayImage {
        let mut img = GrayImage::filled(size, size, 0.0);
        for y in 0..size {
            for x in 0..size {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                img.set(x, y, amplitude * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp());
            }
        }
        img
    }

    #[test]
    fn ladder_matches_standard_octaves() {
        assert_eq!(surf_filter_sizes(1), vec![vec![9, 15, 21, 27]]);
        assert_eq!(
            surf_filter_sizes(3),
            vec![vec![9, 15, 21, 27], vec![15, 27, 39, 51], vec![27, 51, 75, 99]]
        );
    }

    #[test]
    fn constant_image_has_no_blobs() {
        let img = GrayImage::filled(64, 64, 0.5);
        let p = DescriptorParams::default();
        assert!(surf_detect(&img, &p).unwrap().is_empty());
    }

    #[test]
    fn centered_blob_is_found_at_the_oracle_scale() {
        let img = gaussian_blob(64, 32.0, 32.0, 4.0, 1.0);
        let mut p = DescriptorParams::default();
        // a sigma-4 blob peaks near filter size 30; the second octave makes
        // sizes 27 and 39 interior so the maximum is representable
        p.surf_octaves = 2;
        let kps = surf_detect(&img, &p).unwrap();
        assert!(!kps.is_empty(), "no keypoints on the blob");
        let best = kps.iter().max_by(|a, b| a.response.partial_cmp(&b.response).unwrap()).unwrap();
        assert!(
            (best.x - 32.0).abs() <= 2.0 && (best.y - 32.0).abs() <= 2.0,
            "strongest keypoint at ({}, {})",
            best.x,
            best.y
        );

        // oracle: brute-force argmax of the response over every computed
        // (x, y, size) — built directly from hessian_grid over all sizes
        let ii = integral(&img);
        let mut best_oracle = (0usize, 0usize, 0usize, f64::MIN);
        for sizes in surf_filter_sizes(p.surf_octaves) {
            for &size in &sizes {
                let grid = hessian_grid(&ii, size);
                for y in 0..64 {
                    for x in 0..64 {
                        if grid.get(x, y) > best_oracle.3 {
                            best_oracle = (x, y, size, grid.get(x, y));
                        }
                    }
                }
            }
        }
        let oracle_scale = 1.2 * best_oracle.2 as f64 / 9.0;
        assert!(
            (best.scale - oracle_scale).abs() < 1e-9,
            "detected scale {} but argmax sweep says {}",
            best.scale,
            oracle_scale
        );
        assert!((best.x - best_oracle.0 as f64).abs() <= 1.0);
        assert!((best.y - best_oracle.1 as f64).abs() <= 1.0);
    }

    #[test]
    fn low_contrast_blob_stays_below_threshold() {
        let img = gaussian_blob(64, 32.0, 32.0, 4.0, 0.02);
        let mut p = DescriptorParams::default();
        p.surf_octaves = 2;
        assert!(surf_detect(&img, &p).unwrap().is_empty());
        // oracle confirms the peak response really is below 400
        let ii = integral(&img);
        let mut peak = f64::MIN;
        for sizes in surf_filter_sizes(p.surf_octaves) {
            for &size in &sizes {
                let grid = hessian_grid(&ii, size);
                peak = peak.max(grid.values.iter().cloned().fold(f64::MIN, f64::max));
            }
        }
        assert!(peak < 400.0, "peak response {peak}");
    }

    #[test]
    fn descriptor_is_unit_norm_or_zero() {
        let img = gaussian_blob(128, 64.0, 64.0, 5.0, 1.0);
        let kp = Keypoint { x: 64.0, y: 64.0, response: 1.0, scale: 2.0, angle: None };
        let desc = surf_describe(&img, &kp).unwrap();
        assert_eq!(desc.dim(), 64);
        assert!((desc.norm() - 1.0).abs() < 1e-5);

        let flat = GrayImage::filled(128, 128, 0.25);
        let zero = surf_describe(&flat, &kp).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn window_out_of_bounds_is_skipped() {
        let img = GrayImage::filled(64, 64, 0.5);
        let kp = Keypoint { x: 5.0, y: 32.0, response: 1.0, scale: 2.0, angle: None };
        assert!(surf_describe(&img, &kp).is_none());
    }

    #[test]
    fn step_edge_loads_dx_components() {
        let mut img = GrayImage::filled(128, 128, 0.0);
        for y in 0..128 {
            for x in 64..128 {
                img.set(x, y, 1.0);
            }
        }
        let kp = Keypoint { x: 64.0, y: 64.0, response: 1.0, scale: 2.0, angle: None };
        let desc = surf_describe(&img, &kp).unwrap();
        // subregion column containing the edge: |dx| sums dominate |dy| sums
        for sy in 0..4 {
            for sx in 0..4 {
                let cell = &desc.values[(sy * 4 + sx) * 4..(sy * 4 + sx) * 4 + 4];
                let (abs_dx, abs_dy) = (cell[2], cell[3]);
                if abs_dx > 0.0 || abs_dy > 0.0 {
                    assert!(
                        abs_dx >= abs_dy,
                        "subregion ({sx},{sy}): |dx| {abs_dx} < |dy| {abs_dy}"
                    );
                }
            }
        }
        // oracle for one sample: direct Haar sums at the window center
        let ii = integral(&img);
        let s = 2.0f64;
        let half = 2isize;
        let (px, py) = (64isize, 64isize);
        let b = |x0: isize, y0: isize, x1: isize, y1: isize| {
            box_sum(&ii, x0 as usize, y0 as usize, x1 as usize, y1 as usize).unwrap()
        };
        let dx = b(px, py - half, px + half, py + half) - b(px - half, py - half, px, py + half);
        let dy = b(px - half, py, px + half, py + half) - b(px - half, py - half, px + half, py);
        assert!(dx.abs() > dy.abs());
        let _ = s;
    }
}
