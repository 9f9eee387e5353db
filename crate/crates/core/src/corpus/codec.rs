//! Byte-level encodings for frames on disk.
//!
//! - RGB: 8-bit RGB PNG.
//! - Masks: 1-bit grayscale PNG (1 = set). 8-bit grayscale is also accepted
//!   on read, any nonzero value counting as set.
//! - Depth: `b"AWDEPTH1"`, `u32` width, `u32` height (little-endian), then
//!   `width * height` little-endian `f32` values, row-major.

use std::io::Cursor;

use crate::image::{DepthMap, Mask, RgbImage};

pub const DEPTH_MAGIC: &[u8; 8] = b"AWDEPTH1";
const DEPTH_HEADER_LEN: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("png encode: {0}")]
    Encode(#[from] png::EncodingError),
    #[error("png decode: {0}")]
    Decode(#[from] png::DecodingError),
    #[error("unsupported png layout: {0}")]
    Unsupported(String),
    #[error("bad depth file: {0}")]
    Depth(String),
}

pub fn encode_rgb_png(img: &RgbImage) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width(), img.height());
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        writer.write_image_data(img.as_raw())?;
    }
    Ok(out)
}

/// Decodes 8-bit gray, gray+alpha, RGB or RGBA PNGs into RGB (alpha dropped).
pub fn decode_rgb_png(bytes: &[u8]) -> Result<RgbImage, CodecError> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf)?;
    let (w, h) = (info.width, info.height);
    let n = w as usize * h as usize;
    let rgb = match info.color_type {
        png::ColorType::Rgb => buf[..n * 3].to_vec(),
        png::ColorType::Rgba => buf[..n * 4]
            .chunks_exact(4)
            .flat_map(|p| [p[0], p[1], p[2]])
            .collect(),
        png::ColorType::Grayscale => buf[..n].iter().flat_map(|v| [*v, *v, *v]).collect(),
        png::ColorType::GrayscaleAlpha => buf[..n * 2]
            .chunks_exact(2)
            .flat_map(|p| [p[0], p[0], p[0]])
            .collect(),
        other => return Err(CodecError::Unsupported(format!("{other:?}"))),
    };
    RgbImage::from_raw(w, h, rgb).map_err(|e| CodecError::Unsupported(e.to_string()))
}

pub fn encode_mask_png(mask: &Mask) -> Result<Vec<u8>, CodecError> {
    let (w, h) = mask.dims();
    let row_bytes = (w as usize).div_ceil(8);
    let mut packed = vec![0u8; row_bytes * h as usize];
    for y in 0..h as usize {
        for x in 0..w as usize {
            if mask.as_slice()[y * w as usize + x] {
                packed[y * row_bytes + x / 8] |= 0x80 >> (x % 8);
            }
        }
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w, h);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::One);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&packed)?;
    }
    Ok(out)
}

pub fn decode_mask_png(bytes: &[u8]) -> Result<Mask, CodecError> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf)?;
    let (w, h) = (info.width as usize, info.height as usize);
    if info.color_type != png::ColorType::Grayscale {
        return Err(CodecError::Unsupported(format!(
            "mask must be grayscale, got {:?}",
            info.color_type
        )));
    }
    let data: Vec<bool> = match info.bit_depth {
        png::BitDepth::One => {
            let row_bytes = info.line_size;
            (0..h)
                .flat_map(|y| {
                    let row = &buf[y * row_bytes..(y + 1) * row_bytes];
                    (0..w).map(move |x| row[x / 8] & (0x80 >> (x % 8)) != 0)
                })
                .collect()
        }
        png::BitDepth::Eight => buf[..w * h].iter().map(|v| *v != 0).collect(),
        other => {
            return Err(CodecError::Unsupported(format!(
                "mask bit depth {other:?}"
            )))
        }
    };
    Mask::from_vec(w as u32, h as u32, data).map_err(|e| CodecError::Unsupported(e.to_string()))
}

pub fn encode_depth(depth: &DepthMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(DEPTH_HEADER_LEN + depth.as_slice().len() * 4);
    out.extend_from_slice(DEPTH_MAGIC);
    out.extend_from_slice(&depth.width().to_le_bytes());
    out.extend_from_slice(&depth.height().to_le_bytes());
    for v in depth.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_depth(bytes: &[u8]) -> Result<DepthMap, CodecError> {
    if bytes.len() < DEPTH_HEADER_LEN {
        return Err(CodecError::Depth(format!(
            "file is {} bytes, shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[..8] != DEPTH_MAGIC {
        return Err(CodecError::Depth("missing AWDEPTH1 magic".into()));
    }
    let w = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    let h = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes"));
    let expected = DEPTH_HEADER_LEN + w as usize * h as usize * 4;
    if bytes.len() != expected {
        return Err(CodecError::Depth(format!(
            "expected {expected} bytes for {w}x{h}, found {}",
            bytes.len()
        )));
    }
    let data = bytes[DEPTH_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    DepthMap::from_vec(w, h, data).map_err(|e| CodecError::Depth(e.to_string()))
}
