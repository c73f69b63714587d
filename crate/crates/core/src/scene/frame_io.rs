//! Binary frame files.
//!
//! Layout: `b"STSSFRAM"`, version `u32`, role `u8` (SF = 0, EF = 1),
//! channel count `u16`, height `u32`, width `u32`, then planar
//! little-endian `f32` samples.

use std::fs;
use std::path::Path;

use crate::error::{Result, StssError};
use crate::image::Image;
use crate::warp::FrameRole;

const MAGIC: &[u8; 8] = b"STSSFRAM";
const VERSION: u32 = 1;
const HEADER: usize = 8 + 4 + 1 + 2 + 4 + 4;

pub fn encode_frame(role: FrameRole, image: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + image.data().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match role {
        FrameRole::Sf => 0,
        FrameRole::Ef => 1,
    });
    out.extend_from_slice(&(image.channels() as u16).to_le_bytes());
    out.extend_from_slice(&(image.height() as u32).to_le_bytes());
    out.extend_from_slice(&(image.width() as u32).to_le_bytes());
    for v in image.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_frame(bytes: &[u8], path: &Path) -> Result<(FrameRole, Image)> {
    let bad = |reason: &str| StssError::format(path, reason);
    if bytes.len() < HEADER || &bytes[..8] != MAGIC {
        return Err(bad("not a frame file"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = u32_at(8);
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let role = match bytes[12] {
        0 => FrameRole::Sf,
        1 => FrameRole::Ef,
        r => return Err(bad(&format!("unknown role byte {r}"))),
    };
    let channels = u16::from_le_bytes([bytes[13], bytes[14]]) as usize;
    let height = u32_at(15) as usize;
    let width = u32_at(19) as usize;
    let n = channels * height * width;
    if bytes.len() != HEADER + 4 * n {
        return Err(bad(&format!(
            "{channels}x{height}x{width} payload needs {} bytes, file has {}",
            4 * n,
            bytes.len() - HEADER
        )));
    }
    let data = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((role, Image::new(channels, height, width, data)?))
}

pub fn write_frame(path: &Path, role: FrameRole, image: &Image) -> Result<()> {
    fs::write(path, encode_frame(role, image)).map_err(|e| StssError::io(path, e))
}

pub fn read_frame(path: &Path) -> Result<(FrameRole, Image)> {
    let bytes = fs::read(path).map_err(|e| StssError::io(path, e))?;
    decode_frame(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let img = Image::new(2, 1, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let bytes = encode_frame(FrameRole::Ef, &img);
        assert_eq!(&bytes[..8], b"STSSFRAM");
        assert_eq!(bytes[12], 1);
        assert_eq!(u16::from_le_bytes([bytes[13], bytes[14]]), 2);
        assert_eq!(bytes.len(), HEADER + 24);
        assert_eq!(&bytes[HEADER..HEADER + 4], &1.0f32.to_le_bytes());
    }

    #[test]
    fn rejects_truncated() {
        let img = Image::zeros(1, 2, 2);
        let bytes = encode_frame(FrameRole::Sf, &img);
        assert!(decode_frame(&bytes[..bytes.len() - 1], Path::new("x")).is_err());
        assert!(decode_frame(b"garbage", Path::new("x")).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(c in 1usize..4, h in 1usize..6, w in 1usize..6, sf in any::<bool>(), seed in any::<u32>()) {
            let data = (0..c * h * w).map(|i| (i as f32 + seed as f32).sin()).collect();
            let img = Image::new(c, h, w, data).unwrap();
            let role = if sf { FrameRole::Sf } else { FrameRole::Ef };
            let (r, back) = decode_frame(&encode_frame(role, &img), Path::new("x")).unwrap();
            prop_assert_eq!(r, role);
            prop_assert_eq!(back, img);
        }
    }
}
