//! Image file ingestion: binary PGM (P5) and PPM (P6) parsed bit-exactly per
//! the Netpbm spec, plus PNG decoding delegated to the `image` crate.

use crate::raster::PixelImage;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("unrecognized image format")]
    UnknownFormat,
    #[error("malformed {0} header: {1}")]
    BadHeader(&'static str, String),
    #[error("unsupported maxval {0} (only 8-bit, maxval 255)")]
    UnsupportedMaxval(u32),
    #[error("truncated pixel data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("png decode failed: {0}")]
    Png(String),
}

/// Supported source encodings. The numeric codes are the bundle format codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ImageFormat {
    Pgm = 1,
    Ppm = 2,
    Png = 3,
}

impl ImageFormat {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(ImageFormat::Pgm),
            2 => Some(ImageFormat::Ppm),
            3 => Some(ImageFormat::Png),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ImageFormat::Pgm => "pgm",
            ImageFormat::Ppm => "ppm",
            ImageFormat::Png => "png",
        }
    }
}

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

/// Sniff the encoding from magic bytes.
pub fn detect_format(bytes: &[u8]) -> Result<ImageFormat, CodecError> {
    if bytes.starts_with(b"P5") {
        Ok(ImageFormat::Pgm)
    } else if bytes.starts_with(b"P6") {
        Ok(ImageFormat::Ppm)
    } else if bytes.starts_with(&PNG_SIGNATURE) {
        Ok(ImageFormat::Png)
    } else {
        Err(CodecError::UnknownFormat)
    }
}

/// Decode any supported format into a [`PixelImage`].
pub fn decode(bytes: &[u8]) -> Result<PixelImage, CodecError> {
    match detect_format(bytes)? {
        ImageFormat::Pgm => decode_netpbm(bytes, "P5"),
        ImageFormat::Ppm => decode_netpbm(bytes, "P6"),
        ImageFormat::Png => decode_png(bytes),
    }
}

// Netpbm headers: magic, width, height, maxval as whitespace-separated tokens,
// with '#' comments allowed between tokens, then exactly one whitespace byte
// before the raw sample data.
struct TokenReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> TokenReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, magic: &'static str, what: &str) -> Result<u32, CodecError> {
        let tok = self
            .token()
            .ok_or_else(|| CodecError::BadHeader(magic_name(magic), format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| CodecError::BadHeader(magic_name(magic), format!("bad {what} token")))
    }
}

fn magic_name(magic: &str) -> &'static str {
    if magic == "P5" {
        "pgm"
    } else {
        "ppm"
    }
}

fn decode_netpbm(bytes: &[u8], magic: &'static str) -> Result<PixelImage, CodecError> {
    let name = magic_name(magic);
    let mut rd = TokenReader::new(bytes);
    let found = rd
        .token()
        .ok_or_else(|| CodecError::BadHeader(name, "missing magic".into()))?;
    if found != magic.as_bytes() {
        return Err(CodecError::BadHeader(name, "magic mismatch".into()));
    }
    let width = rd.number(magic, "width")?;
    let height = rd.number(magic, "height")?;
    let maxval = rd.number(magic, "maxval")?;
    if maxval != 255 {
        return Err(CodecError::UnsupportedMaxval(maxval));
    }
    if width == 0 || height == 0 {
        return Err(CodecError::BadHeader(name, "zero dimension".into()));
    }
    // exactly one whitespace byte separates the maxval from the raster
    if rd.pos >= bytes.len() || !bytes[rd.pos].is_ascii_whitespace() {
        return Err(CodecError::BadHeader(name, "missing raster separator".into()));
    }
    let data_start = rd.pos + 1;
    let channels: u8 = if magic == "P5" { 1 } else { 3 };
    let expected = width as usize * height as usize * channels as usize;
    let data = &bytes[data_start.min(bytes.len())..];
    if data.len() < expected {
        return Err(CodecError::Truncated { expected, found: data.len() });
    }
    let pixels = data[..expected].to_vec();
    PixelImage::new(width, height, channels, pixels)
        .map_err(|e| CodecError::BadHeader(name, e.to_string()))
}

fn decode_png(bytes: &[u8]) -> Result<PixelImage, CodecError> {
    let dyn_img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| CodecError::Png(e.to_string()))?;
    let (w, h, channels, pixels) = match dyn_img {
        image::DynamicImage::ImageLuma8(img) => {
            let (w, h) = img.dimensions();
            (w, h, 1u8, img.into_raw())
        }
        image::DynamicImage::ImageRgb8(img) => {
            let (w, h) = img.dimensions();
            (w, h, 3u8, img.into_raw())
        }
        other => {
            let img = other.into_rgba8();
            let (w, h) = img.dimensions();
            (w, h, 4u8, img.into_raw())
        }
    };
    PixelImage::new(w, h, channels, pixels).map_err(|e| CodecError::Png(e.to_string()))
}

/// Canonical binary PGM bytes for a 1-channel image.
pub fn encode_pgm(img: &PixelImage) -> Vec<u8> {
    assert_eq!(img.channels(), 1, "PGM holds single-channel images");
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

/// Canonical binary PPM bytes for a 3-channel image.
pub fn encode_ppm(img: &PixelImage) -> Vec<u8> {
    assert_eq!(img.channels(), 3, "PPM holds 3-channel images");
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}
