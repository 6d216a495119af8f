//! Binary PPM (P6) and PGM (P5) encoding at 8 bits per sample.

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ColorType, DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

#[derive(Debug, thiserror::Error)]
pub enum PnmError {
    #[error("{0}")]
    Decode(String),
    #[error("expected {expected} raster, found {found:?}")]
    Kind { expected: &'static str, found: ColorType },
}

/// 8-bit raster with interleaved channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

fn encode(raster: &Raster, subtype: PnmSubtype, color: ExtendedColorType) -> Vec<u8> {
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(subtype)
        .write_image(&raster.pixels, raster.width as u32, raster.height as u32, color)
        .expect("raster length matches its dimensions");
    out
}

fn decode(bytes: &[u8]) -> Result<DynamicImage, PnmError> {
    image::load_from_memory_with_format(bytes, ImageFormat::Pnm).map_err(|e| PnmError::Decode(e.to_string()))
}

pub fn encode_ppm(raster: &Raster) -> Vec<u8> {
    encode(raster, PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8)
}

pub fn encode_pgm(raster: &Raster) -> Vec<u8> {
    encode(raster, PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8)
}

/// Decodes an 8-bit RGB pixmap.
pub fn decode_ppm(bytes: &[u8]) -> Result<Raster, PnmError> {
    match decode(bytes)? {
        DynamicImage::ImageRgb8(img) => {
            Ok(Raster { width: img.width() as usize, height: img.height() as usize, pixels: img.into_raw() })
        }
        other => Err(PnmError::Kind { expected: "8-bit RGB", found: other.color() }),
    }
}

/// Decodes an 8-bit graymap.
pub fn decode_pgm(bytes: &[u8]) -> Result<Raster, PnmError> {
    match decode(bytes)? {
        DynamicImage::ImageLuma8(img) => {
            Ok(Raster { width: img.width() as usize, height: img.height() as usize, pixels: img.into_raw() })
        }
        other => Err(PnmError::Kind { expected: "8-bit grayscale", found: other.color() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let r = Raster { width: 3, height: 2, pixels: (0..18).map(|i| i * 14).collect() };
        let bytes = encode_ppm(&r);
        assert!(bytes.starts_with(b"P6"));
        assert_eq!(decode_ppm(&bytes).unwrap(), r);
        assert!(decode_pgm(&bytes).is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let r = Raster { width: 2, height: 2, pixels: vec![0, 7, 128, 255] };
        let bytes = encode_pgm(&r);
        assert!(bytes.starts_with(b"P5"));
        assert_eq!(decode_pgm(&bytes).unwrap(), r);
        assert!(decode_ppm(&bytes).is_err());
    }

    #[test]
    fn truncated_input_is_an_error() {
        assert!(decode_ppm(b"P6\n2 2\n255\n\x00\x01").is_err());
        assert!(decode_ppm(b"").is_err());
    }
}
