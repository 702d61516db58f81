//! Point detectors: Harris and Shi-Tomasi corner responses, the FAST segment
//! test, and non-maximum suppression with top-K selection.

use crate::params::DetectorParams;
use crate::raster::{gaussian_kernel, sobel_gradients, GrayImage, RasterError, ScalarGrid};

/// A detected interest point in level-0 image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    /// Detector score; comparable only within one detector.
    pub response: f64,
    /// Pyramid scale at detection; 1 for single-scale detectors.
    pub scale: f64,
    /// Orientation in [0, 2*pi), or `None` for unoriented keypoints.
    pub angle: Option<f64>,
}

impl Keypoint {
    pub fn at(x: f64, y: f64, response: f64) -> Self {
        Self { x, y, response, scale: 1.0, angle: None }
    }
}

/// Windowed structure-tensor sums (a, b, c) = (sum Ix^2, sum IxIy, sum Iy^2),
/// Gaussian-weighted, zeroed within `radius` of the borders.
fn structure_tensor(
    img: &GrayImage,
    sigma: f64,
) -> Result<(ScalarGrid, ScalarGrid, ScalarGrid, usize), RasterError> {
    let (ix, iy) = sobel_gradients(img)?;
    let (w, h) = (img.width, img.height);
    let kernel = gaussian_kernel(sigma);
    let radius = kernel.len() / 2;

    let mut axx = vec![0.0f64; w * h];
    let mut axy = vec![0.0f64; w * h];
    let mut ayy = vec![0.0f64; w * h];
    for i in 0..w * h {
        axx[i] = ix.values[i] * ix.values[i];
        axy[i] = ix.values[i] * iy.values[i];
        ayy[i] = iy.values[i] * iy.values[i];
    }

    // Separable windowed sums. Only interior pixels (>= radius from every
    // border) are kept; the horizontal pass is computed for all columns in
    // the valid x range so the vertical pass can consume any row.
    let window = |vals: &[f64]| -> ScalarGrid {
        let mut horiz = vec![0.0f64; w * h];
        if w >= 2 * radius + 1 {
            for y in 0..h {
                for x in radius..w - radius {
                    let mut acc = 0.0;
                    for (k, &kv) in kernel.iter().enumerate() {
                        acc += kv * vals[y * w + x + k - radius];
                    }
                    horiz[y * w + x] = acc;
                }
            }
        }
        let mut out = ScalarGrid::zeros(w, h);
        if w >= 2 * radius + 1 && h >= 2 * radius + 1 {
            for y in radius..h - radius {
                for x in radius..w - radius {
                    let mut acc = 0.0;
                    for (k, &kv) in kernel.iter().enumerate() {
                        acc += kv * horiz[(y + k - radius) * w + x];
                    }
                    out.values[y * w + x] = acc;
                }
            }
        }
        out
    };

    Ok((window(&axx), window(&axy), window(&ayy), radius))
}

/// Harris corner response det(M) - k*trace(M)^2 per pixel.
///
/// Borders of width equal to the Gaussian window radius are zero.
pub fn harris_response(img: &GrayImage, p: &DetectorParams) -> Result<ScalarGrid, RasterError> {
    let (axx, axy, ayy, radius) = structure_tensor(img, p.gaussian_window_sigma)?;
    let (w, h) = (img.width, img.height);
    let mut out = ScalarGrid::zeros(w, h);
    if w >= 2 * radius + 1 && h >= 2 * radius + 1 {
        for y in radius..h - radius {
            for x in radius..w - radius {
                let i = y * w + x;
                let (a, b, c) = (axx.values[i], axy.values[i], ayy.values[i]);
                let det = a * c - b * b;
                let trace = a + c;
                out.values[i] = det - p.harris_k * trace * trace;
            }
        }
    }
    Ok(out)
}

/// Shi-Tomasi response: the smaller structure-tensor eigenvalue per pixel.
pub fn shi_tomasi_response(img: &GrayImage, p: &DetectorParams) -> Result<ScalarGrid, RasterError> {
    let (axx, axy, ayy, radius) = structure_tensor(img, p.gaussian_window_sigma)?;
    let (w, h) = (img.width, img.height);
    let mut out = ScalarGrid::zeros(w, h);
    if w >= 2 * radius + 1 && h >= 2 * radius + 1 {
        for y in radius..h - radius {
            for x in radius..w - radius {
                let i = y * w + x;
                let (a, b, c) = (axx.values[i], axy.values[i], ayy.values[i]);
                let half_diff = (a - c) / 2.0;
                out.values[i] = (a + c) / 2.0 - (half_diff * half_diff + b * b).sqrt();
            }
        }
    }
    Ok(out)
}

/// Strict local maxima above `response_threshold`, sorted by response
/// descending (ties by y then x ascending), truncated to `max_corners`.
pub fn nms_select(grid: &ScalarGrid, p: &DetectorParams) -> Vec<Keypoint> {
    let r = p.nms_radius as isize;
    let (w, h) = (grid.width as isize, grid.height as isize);
    let mut keypoints = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = grid.get(x as usize, y as usize);
            if !(v > p.response_threshold) {
                continue;
            }
            let mut is_max = true;
            'scan: for dy in -r..=r {
                for dx in -r..=r {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    if grid.get(nx as usize, ny as usize) >= v {
                        is_max = false;
                        break 'scan;
                    }
                }
            }
            if is_max {
                keypoints.push(Keypoint::at(x as f64, y as f64, v));
            }
        }
    }
    sort_by_response(&mut keypoints);
    if let Some(cap) = p.max_corners {
        keypoints.truncate(cap as usize);
    }
    keypoints
}

/// Canonical keypoint ordering: response descending, ties by (y, x) ascending.
pub fn sort_by_response(keypoints: &mut [Keypoint]) {
    keypoints.sort_by(|a, b| {
        b.response
            .partial_cmp(&a.response)
            .unwrap()
            .then(a.y.partial_cmp(&b.y).unwrap())
            .then(a.x.partial_cmp(&b.x).unwrap())
    });
}

/// Pixel offsets of the 16-point Bresenham circle of radius 3, clockwise from
/// 12 o'clock.
pub const FAST_CIRCLE: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

/// Classify the circle pixels around (x, y) and, if a contiguous arc of at
/// least `arc_len` qualifies, return the FAST score: the sum of |I_i - I_p|
/// over every circle pixel belonging to a qualifying arc, accumulated in
/// circle-index order.
fn fast_score(img: &GrayImage, x: usize, y: usize, t: f64, arc_len: usize) -> Option<f64> {
    let center = img.get(x, y);
    let hi = center + t;
    let lo = center - t;

    let mut intensities = [0.0f64; 16];
    for (i, (dx, dy)) in FAST_CIRCLE.iter().enumerate() {
        intensities[i] =
            img.get((x as i32 + dx) as usize, (y as i32 + dy) as usize);
    }

    // Compass pretest: any arc of length >= 9 covers two consecutive compass
    // points (indices 0, 4, 8, 12), so this rejects most pixels cheaply
    // without changing the result. Skipped for shorter arc requirements.
    if arc_len >= 9 {
        let bright_at = |i: usize| intensities[i] > hi;
        let dark_at = |i: usize| intensities[i] < lo;
        let compass_pair = |f: &dyn Fn(usize) -> bool| {
            (f(0) && f(4)) || (f(4) && f(8)) || (f(8) && f(12)) || (f(12) && f(0))
        };
        if !compass_pair(&|i| bright_at(i)) && !compass_pair(&|i| dark_at(i)) {
            return None;
        }
    }

    for polarity in 0..2 {
        let qualifies: Vec<bool> = intensities
            .iter()
            .map(|&v| if polarity == 0 { v > hi } else { v < lo })
            .collect();
        if let Some(in_arc) = circular_runs_at_least(&qualifies, arc_len) {
            let mut score = 0.0;
            for i in 0..16 {
                if in_arc[i] {
                    score += (intensities[i] - center).abs();
                }
            }
            return Some(score);
        }
    }
    None
}

/// If the circular boolean sequence contains a run of at least `arc_len`
/// true values, return the mask of positions lying in such runs.
fn circular_runs_at_least(flags: &[bool], arc_len: usize) -> Option<[bool; 16]> {
    debug_assert_eq!(flags.len(), 16);
    if flags.iter().all(|&f| f) {
        return Some([true; 16]);
    }
    // rotate so the scan starts at a false position; runs never wrap then
    let start = flags.iter().position(|&f| !f).unwrap();
    let mut mask = [false; 16];
    let mut found = false;
    let mut run_start = 0usize;
    let mut run_len = 0usize;
    for k in 0..=16 {
        let idx = (start + k) % 16;
        if k < 16 && flags[idx] {
            if run_len == 0 {
                run_start = k;
            }
            run_len += 1;
        } else {
            if run_len >= arc_len {
                found = true;
                for j in run_start..run_start + run_len {
                    mask[(start + j) % 16] = true;
                }
            }
            run_len = 0;
        }
    }
    found.then_some(mask)
}

/// FAST segment-test corners with non-maximum suppression.
///
/// A pixel qualifies when a contiguous arc of at least `fast_arc_length`
/// circle pixels is entirely brighter than I+t or entirely darker than I-t.
pub fn fast_detect(img: &GrayImage, p: &DetectorParams) -> Result<Vec<Keypoint>, RasterError> {
    if img.width < 7 || img.height < 7 {
        return Err(RasterError::InvalidInput(format!(
            "fast needs at least 7x7, got {}x{}",
            img.width, img.height
        )));
    }
    let mut scores = ScalarGrid::zeros(img.width, img.height);
    for y in 3..img.height - 3 {
        for x in 3..img.width - 3 {
            if let Some(score) = fast_score(img, x, y, p.fast_threshold, p.fast_arc_length) {
                scores.set(x, y, score);
            }
        }
    }
    Ok(nms_select(&scores, p))
}
