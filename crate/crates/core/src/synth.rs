//! Seeded synthetic imagery: a mixture of checkerboard patches, Gaussian
//! blobs and low noise over a smooth background. The same seed always
//! produces byte-identical images, which makes corpora reproducible across
//! machines and runs.

use crate::codec::encode_ppm;
use crate::raster::PixelImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};

/// Deterministic textured image for (seed, index).
pub fn generate_image(seed: u64, index: u32, width: usize, height: usize) -> PixelImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);

    let mut field = vec![0.0f64; width * height];

    // smooth low-frequency background
    let lx = rng.gen_range(40.0..120.0);
    let ly = rng.gen_range(40.0..120.0);
    let phase_x = rng.gen_range(0.0..std::f64::consts::TAU);
    let phase_y = rng.gen_range(0.0..std::f64::consts::TAU);
    for y in 0..height {
        for x in 0..width {
            field[y * width + x] = 0.45
                + 0.18 * (x as f64 / lx + phase_x).sin() * (y as f64 / ly + phase_y).cos();
        }
    }

    // checkerboard patches: dense corner content
    let n_boards = rng.gen_range(4..8);
    for _ in 0..n_boards {
        let pw = rng.gen_range(width / 8..=width / 3).max(16);
        let ph = rng.gen_range(height / 8..=height / 3).max(16);
        let x0 = rng.gen_range(0..width.saturating_sub(pw).max(1));
        let y0 = rng.gen_range(0..height.saturating_sub(ph).max(1));
        let cell = rng.gen_range(8..25usize);
        let lo = rng.gen_range(0.0..0.30);
        let hi = rng.gen_range(0.70..1.0);
        for y in y0..(y0 + ph).min(height) {
            for x in x0..(x0 + pw).min(width) {
                let parity = ((x - x0) / cell + (y - y0) / cell) % 2;
                field[y * width + x] = if parity == 0 { lo } else { hi };
            }
        }
    }

    // solid rectangles: L-corners that the FAST segment test fires on
    let n_rects = (width * height / 16384).clamp(6, 80);
    for _ in 0..n_rects {
        let rw = rng.gen_range(10..40usize);
        let rh = rng.gen_range(10..40usize);
        let x0 = rng.gen_range(0..width.saturating_sub(rw).max(1));
        let y0 = rng.gen_range(0..height.saturating_sub(rh).max(1));
        let v = if rng.gen_bool(0.5) { rng.gen_range(0.0..0.2) } else { rng.gen_range(0.8..1.0) };
        for y in y0..(y0 + rh).min(height) {
            for x in x0..(x0 + rw).min(width) {
                field[y * width + x] = v;
            }
        }
    }

    // small contrasting dots: dense, isolated FAST corners
    let n_dots = (width * height / 2000).clamp(24, 800);
    for _ in 0..n_dots {
        let cx = rng.gen_range(2..width.saturating_sub(2).max(3)) as isize;
        let cy = rng.gen_range(2..height.saturating_sub(2).max(3)) as isize;
        let r = rng.gen_range(1..3isize);
        let v = if rng.gen_bool(0.5) { rng.gen_range(0.0..0.2) } else { rng.gen_range(0.8..1.0) };
        for y in (cy - r).max(0)..(cy + r + 1).min(height as isize) {
            for x in (cx - r).max(0)..(cx + r + 1).min(width as isize) {
                if (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r {
                    field[y as usize * width + x as usize] = v;
                }
            }
        }
    }

    // blobs: smooth scale-space structure
    let n_blobs = rng.gen_range(6..13);
    for _ in 0..n_blobs {
        let cx = rng.gen_range(0.0..width as f64);
        let cy = rng.gen_range(0.0..height as f64);
        let sigma: f64 = rng.gen_range(2.0..10.0);
        let amplitude = rng.gen_range(0.2..0.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let reach = (3.0 * sigma).ceil() as isize;
        let (cxi, cyi) = (cx.round() as isize, cy.round() as isize);
        for y in (cyi - reach).max(0)..(cyi + reach + 1).min(height as isize) {
            for x in (cxi - reach).max(0)..(cxi + reach + 1).min(width as isize) {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                field[y as usize * width + x as usize] +=
                    amplitude * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            }
        }
    }

    // per-pixel noise below the FAST contrast threshold
    let mut pixels = Vec::with_capacity(width * height * 3);
    for v in field {
        let noisy = (v + rng.gen_range(-0.015..0.015)).clamp(0.0, 1.0);
        let byte = (noisy * 255.0).round() as u8;
        pixels.extend_from_slice(&[byte, byte, byte]);
    }
    PixelImage::new(width as u32, height as u32, 3, pixels).expect("valid raster")
}

/// Write `count` seeded PPM images into `dir` as img_000.ppm, img_001.ppm, ...
pub fn generate_corpus(
    dir: &Path,
    count: u32,
    width: usize,
    height: usize,
    seed: u64,
) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(count as usize);
    for i in 0..count {
        let img = generate_image(seed, i, width, height);
        let path = dir.join(format!("img_{i:03}.ppm"));
        std::fs::write(&path, encode_ppm(&img))?;
        paths.push(path);
    }
    Ok(paths)
}
