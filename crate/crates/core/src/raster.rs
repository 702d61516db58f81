//! Core image numerics: pixel rasters, grayscale conversion, smoothing,
//! gradients, integral images and scale pyramids.
//!
//! Every operation here is a pure function over immutable inputs; identical
//! inputs produce bit-identical outputs regardless of call concurrency.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Raw interleaved 8-bit raster as decoded from a source file.
///
/// Channel order for 3/4-channel images is R,G,B[,A].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelImage {
    width: u32,
    height: u32,
    channels: u8,
    pixels: Vec<u8>,
}

impl PixelImage {
    pub fn new(width: u32, height: u32, channels: u8, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidParameter("image dimensions must be >= 1".into()));
        }
        if !matches!(channels, 1 | 3 | 4) {
            return Err(RasterError::InvalidParameter(format!(
                "unsupported channel count {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(RasterError::InvalidParameter(format!(
                "pixel buffer length {} does not match {}x{}x{}",
                pixels.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Self { width, height, channels, pixels })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Samples of the pixel at (x, y), `channels` bytes long.
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.channels as usize;
        let idx = (y as usize * self.width as usize + x as usize) * c;
        &self.pixels[idx..idx + c]
    }
}

/// Grayscale raster with intensities in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width * height, "value buffer length mismatch");
        Self { width, height, values }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self { width, height, values: vec![value; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    /// Clamp-to-edge lookup for signed coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.get(xc, yc)
    }
}

/// Unbounded real-valued grid with the same shape conventions as [`GrayImage`].
///
/// Used for gradients and detector response maps, which are not confined to
/// [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, values: vec![0.0; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }
}

/// Summed-area table: entry (x, y) holds the sum of all intensities with
/// coordinates strictly less than x and y. Row 0 and column 0 are zero.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    /// Source image width (table is width+1 entries wide).
    pub width: usize,
    /// Source image height (table is height+1 entries tall).
    pub height: usize,
    sums: Vec<f64>,
}

impl IntegralImage {
    #[inline]
    fn entry(&self, x: usize, y: usize) -> f64 {
        self.sums[y * (self.width + 1) + x]
    }
}

/// Ordered list of progressively downsampled grayscale images.
///
/// Level 0 is the source; level i has dimensions floor(base / scale_factor^i).
#[derive(Debug, Clone)]
pub struct Pyramid {
    pub levels: Vec<GrayImage>,
    pub scale_factor: f64,
}

impl Pyramid {
    /// Number of levels actually built (early stop can trim the request).
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    /// Multiplier mapping level-i coordinates back to level-0 space.
    pub fn level_scale(&self, level: usize) -> f64 {
        self.scale_factor.powi(level as i32)
    }
}

/// Luma weights for RGB-to-gray conversion (ITU-R BT.601).
const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

/// Convert an interleaved 8-bit raster to a [0, 1] grayscale image.
///
/// Single-channel input passes through scaled by 1/255; 3/4-channel input is
/// reduced with the 0.299/0.587/0.114 luma weights (alpha ignored).
pub fn to_grayscale(img: &PixelImage) -> GrayImage {
    let w = img.width() as usize;
    let h = img.height() as usize;
    let c = img.channels() as usize;
    let px = img.pixels();
    let mut values = Vec::with_capacity(w * h);
    match c {
        1 => values.extend(px.iter().map(|&v| v as f64 / 255.0)),
        _ => {
            for p in px.chunks_exact(c) {
                let luma = LUMA_R * p[0] as f64 + LUMA_G * p[1] as f64 + LUMA_B * p[2] as f64;
                values.push(luma / 255.0);
            }
        }
    }
    GrayImage::new(w, h, values)
}

/// 1-D Gaussian kernel of radius ceil(3*sigma), normalized to sum 1.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut kernel = Vec::with_capacity(2 * radius + 1);
    let denom = 2.0 * sigma * sigma;
    for i in -(radius as isize)..=(radius as isize) {
        kernel.push((-((i * i) as f64) / denom).exp());
    }
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }
    kernel
}

/// Separable Gaussian smoothing with clamp-to-edge borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> Result<GrayImage, RasterError> {
    if !(sigma > 0.0) {
        return Err(RasterError::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
    }
    let kernel = gaussian_kernel(sigma);
    Ok(separable_convolve(img, &kernel))
}

pub(crate) fn separable_convolve(img: &GrayImage, kernel: &[f64]) -> GrayImage {
    let radius = kernel.len() / 2;
    let (w, h) = (img.width, img.height);
    let mut horiz = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let sx = x as isize + k as isize - radius as isize;
                acc += kv * img.get_clamped(sx, y as isize);
            }
            horiz[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let sy = (y as isize + k as isize - radius as isize).clamp(0, h as isize - 1) as usize;
                acc += kv * horiz[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    GrayImage::new(w, h, out)
}

/// Horizontal and vertical image derivatives via the standard 3x3 Sobel
/// kernels (unnormalized), clamp-to-edge borders.
pub fn sobel_gradients(img: &GrayImage) -> Result<(ScalarGrid, ScalarGrid), RasterError> {
    if img.width < 3 || img.height < 3 {
        return Err(RasterError::InvalidInput(format!(
            "sobel needs at least 3x3, got {}x{}",
            img.width, img.height
        )));
    }
    let (w, h) = (img.width, img.height);
    let mut ix = ScalarGrid::zeros(w, h);
    let mut iy = ScalarGrid::zeros(w, h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| img.get_clamped(x + dx, y + dy);
            let gx = (p(1, -1) - p(-1, -1)) + 2.0 * (p(1, 0) - p(-1, 0)) + (p(1, 1) - p(-1, 1));
            let gy = (p(-1, 1) - p(-1, -1)) + 2.0 * (p(0, 1) - p(0, -1)) + (p(1, 1) - p(1, -1));
            ix.set(x as usize, y as usize, gx);
            iy.set(x as usize, y as usize, gy);
        }
    }
    Ok((ix, iy))
}

/// Build the summed-area table of an image.
pub fn integral(img: &GrayImage) -> IntegralImage {
    let (w, h) = (img.width, img.height);
    let mut sums = vec![0.0f64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row_sum = 0.0f64;
        for x in 0..w {
            row_sum += img.get(x, y);
            sums[(y + 1) * (w + 1) + (x + 1)] = sums[y * (w + 1) + (x + 1)] + row_sum;
        }
    }
    IntegralImage { width: w, height: h, sums }
}

/// Sum of intensities over the half-open rectangle [x0, x1) x [y0, y1).
pub fn box_sum(
    ii: &IntegralImage,
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
) -> Result<f64, RasterError> {
    if x0 > x1 || y0 > y1 || x1 > ii.width || y1 > ii.height {
        return Err(RasterError::InvalidParameter(format!(
            "rectangle ({x0},{y0})-({x1},{y1}) out of range for {}x{}",
            ii.width, ii.height
        )));
    }
    Ok(ii.entry(x1, y1) - ii.entry(x0, y1) - ii.entry(x1, y0) + ii.entry(x0, y0))
}

/// Minimum dimension a pyramid level may have; construction stops early below it.
pub const MIN_PYRAMID_DIM: usize = 16;

/// Multi-scale pyramid via bilinear downsampling.
///
/// Level i has dimensions floor(base / scale_factor^i); levels that would
/// drop below 16 pixels in either dimension are not built.
pub fn build_pyramid(img: &GrayImage, n_levels: usize, scale_factor: f64) -> Result<Pyramid, RasterError> {
    if n_levels < 1 {
        return Err(RasterError::InvalidParameter("n_levels must be >= 1".into()));
    }
    if !(scale_factor > 1.0) {
        return Err(RasterError::InvalidParameter(format!(
            "scale_factor must be > 1, got {scale_factor}"
        )));
    }
    if img.width < MIN_PYRAMID_DIM || img.height < MIN_PYRAMID_DIM {
        return Err(RasterError::InvalidInput(format!(
            "pyramid base must be at least {MIN_PYRAMID_DIM}x{MIN_PYRAMID_DIM}"
        )));
    }
    let mut levels = vec![img.clone()];
    for i in 1..n_levels {
        let divisor = scale_factor.powi(i as i32);
        let w = (img.width as f64 / divisor).floor() as usize;
        let h = (img.height as f64 / divisor).floor() as usize;
        if w < MIN_PYRAMID_DIM || h < MIN_PYRAMID_DIM {
            break;
        }
        let prev = &levels[i - 1];
        levels.push(resize_bilinear(prev, w, h));
    }
    Ok(Pyramid { levels, scale_factor })
}

/// Bilinear resampling to the given dimensions (pixel centers aligned).
pub fn resize_bilinear(src: &GrayImage, new_w: usize, new_h: usize) -> GrayImage {
    assert!(new_w >= 1 && new_h >= 1);
    let sx = src.width as f64 / new_w as f64;
    let sy = src.height as f64 / new_h as f64;
    let mut values = Vec::with_capacity(new_w * new_h);
    for y in 0..new_h {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, src.height as f64 - 1.0);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(src.height - 1);
        let ty = fy - y0 as f64;
        for x in 0..new_w {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, src.width as f64 - 1.0);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(src.width - 1);
            let tx = fx - x0 as f64;
            let top = src.get(x0, y0) * (1.0 - tx) + src.get(x1, y0) * tx;
            let bot = src.get(x0, y1) * (1.0 - tx) + src.get(x1, y1) * tx;
            values.push(top * (1.0 - ty) + bot * ty);
        }
    }
    GrayImage::new(new_w, new_h, values)
}
