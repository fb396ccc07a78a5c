//! Binary PGM (P5) with 8-bit samples. Writing always produces the canonical
//! header `P5\n<w> <h>\n255\n`; reading accepts any whitespace layout,
//! `#` comments and maxval 1..=255.

use std::path::Path;

use super::GrayImage;
use crate::error::{Error, Result};

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.to_u8());
    out
}

/// Decodes a P5 buffer; errors are plain messages without a path.
pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    let mut header = HeaderReader { bytes, pos: 0 };
    if bytes.get(..2) != Some(b"P5") {
        return Err("not a binary PGM (missing P5 magic)".into());
    }
    header.pos = 2;
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval = header.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(format!("invalid dimensions {width}x{height}"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval} (expected 1..=255)"));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(header.pos) {
        Some(b) if b.is_ascii_whitespace() => header.pos += 1,
        _ => return Err("missing whitespace after maxval".into()),
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| format!("dimensions {width}x{height} overflow"))?;
    let raster = &bytes[header.pos..];
    if raster.len() < n {
        return Err(format!(
            "truncated raster: expected {n} bytes, found {}",
            raster.len()
        ));
    }
    let scale = maxval as f32;
    let pixels = raster[..n]
        .iter()
        .map(|&b| (b as f32 / scale).min(1.0))
        .collect();
    GrayImage::new(width, height, pixels).map_err(|e| e.to_string())
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> std::result::Result<usize, String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format!("missing {what} in header"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("invalid {what} in header"))
    }
}

pub fn write_pgm(path: &Path, image: &GrayImage) -> Result<()> {
    std::fs::write(path, encode_pgm(image)).map_err(|e| Error::io(path, e))
}

/// Reads a grayscale image file. PGM is always supported; PNG only with the
/// `png` feature.
pub fn read_image(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let decode_err = |message: String| Error::Decode {
        path: path.to_path_buf(),
        message,
    };
    if bytes.starts_with(b"P5") {
        return decode_pgm(&bytes).map_err(decode_err);
    }
    #[cfg(feature = "png")]
    if bytes.starts_with(b"\x89PNG") {
        return decode_png(&bytes).map_err(decode_err);
    }
    Err(decode_err("unrecognised image format".into()))
}

#[cfg(feature = "png")]
fn decode_png(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| e.to_string())?
        .into_luma8();
    GrayImage::from_u8(img.width() as usize, img.height() as usize, img.as_raw())
        .map_err(|e| e.to_string())
}
