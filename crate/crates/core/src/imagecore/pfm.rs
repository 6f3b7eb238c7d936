//! Portable float map I/O.
//!
//! Header is three ASCII lines: `PF` (RGB) or `Pf` (gray), `width height`,
//! and a scale whose sign gives the byte order (negative = little-endian).
//! Scanlines are stored bottom-to-top; everything in memory is top-left.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::image::{DepthMap, Image, RadianceImage, RoiMask};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByteOrder {
    Little,
    Big,
}

/// A decoded PFM, classified by its header.
#[derive(Debug, Clone, PartialEq)]
pub enum PfmData {
    Radiance(RadianceImage),
    Depth(DepthMap),
}

fn format_err(reason: impl Into<String>) -> Error {
    Error::Format {
        format: "PFM",
        reason: reason.into(),
    }
}

fn read_header_token<R: BufRead>(reader: &mut R) -> Result<String> {
    // Tokens are whitespace separated; tolerate either newline or space layout.
    let mut token = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        match reader.read(&mut byte) {
            Ok(0) => break,
            Ok(_) => {
                if byte[0].is_ascii_whitespace() {
                    if token.is_empty() {
                        continue;
                    }
                    break;
                }
                token.push(byte[0]);
                if token.len() > 64 {
                    return Err(format_err("header token too long"));
                }
            }
            Err(e) => return Err(format_err(e.to_string())),
        }
    }
    if token.is_empty() {
        return Err(format_err("truncated header"));
    }
    String::from_utf8(token).map_err(|_| format_err("non-ASCII header"))
}

/// Decodes a PFM stream into `(height, width, channels, samples)` with
/// samples in top-left row-major order.
pub fn read_pfm<R: Read>(reader: R) -> Result<(usize, usize, usize, Vec<f32>)> {
    let mut reader = BufReader::new(reader);
    let magic = read_header_token(&mut reader)?;
    let channels = match magic.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(format_err(format!("bad magic `{other}`"))),
    };
    let width: usize = read_header_token(&mut reader)?
        .parse()
        .map_err(|_| format_err("bad width"))?;
    let height: usize = read_header_token(&mut reader)?
        .parse()
        .map_err(|_| format_err("bad height"))?;
    let scale: f32 = read_header_token(&mut reader)?
        .parse()
        .map_err(|_| format_err("bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(format_err("scale must be finite and nonzero"));
    }
    let order = if scale < 0.0 {
        ByteOrder::Little
    } else {
        ByteOrder::Big
    };

    let row_len = width * channels;
    let mut bytes = vec![0u8; height * row_len * 4];
    reader
        .read_exact(&mut bytes)
        .map_err(|_| format_err("truncated sample data"))?;

    let mut samples = vec![0f32; height * row_len];
    for (file_row, chunk) in bytes.chunks_exact(row_len * 4).enumerate() {
        let row = height - 1 - file_row;
        let dst = &mut samples[row * row_len..(row + 1) * row_len];
        for (d, b) in dst.iter_mut().zip(chunk.chunks_exact(4)) {
            let raw = [b[0], b[1], b[2], b[3]];
            *d = match order {
                ByteOrder::Little => f32::from_le_bytes(raw),
                ByteOrder::Big => f32::from_be_bytes(raw),
            };
        }
    }
    Ok((height, width, channels, samples))
}

/// Encodes top-left row-major samples as PFM.
pub fn write_pfm<W: Write>(
    mut writer: W,
    height: usize,
    width: usize,
    channels: usize,
    samples: &[f32],
    order: ByteOrder,
) -> Result<()> {
    let magic = match channels {
        3 => "PF",
        1 => "Pf",
        n => return Err(format_err(format!("{n} channels not representable"))),
    };
    let row_len = width * channels;
    if samples.len() != height * row_len {
        return Err(Error::shape(
            format!("{} samples", height * row_len),
            format!("{} samples", samples.len()),
        ));
    }
    let scale = match order {
        ByteOrder::Little => "-1.0",
        ByteOrder::Big => "1.0",
    };
    let mut out = Vec::with_capacity(32 + samples.len() * 4);
    write!(out, "{magic}\n{width} {height}\n{scale}\n").expect("vec write");
    for row in (0..height).rev() {
        for &v in &samples[row * row_len..(row + 1) * row_len] {
            match order {
                ByteOrder::Little => out.extend_from_slice(&v.to_le_bytes()),
                ByteOrder::Big => out.extend_from_slice(&v.to_be_bytes()),
            }
        }
    }
    writer
        .write_all(&out)
        .map_err(|e| format_err(e.to_string()))
}

fn read_file(path: &Path) -> Result<(usize, usize, usize, Vec<f32>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_pfm(file)
}

fn write_file(path: &Path, h: usize, w: usize, c: usize, samples: &[f32]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    write_pfm(&mut writer, h, w, c, samples, ByteOrder::Little)?;
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Loads a PFM, returning radiance for `PF` files and depth for `Pf` files.
pub fn load_pfm(path: impl AsRef<Path>) -> Result<PfmData> {
    let path = path.as_ref();
    let (h, w, c, samples) = read_file(path)?;
    let data: Vec<f64> = samples.into_iter().map(f64::from).collect();
    if c == 3 {
        let image = Image::from_vec(h, w, 3, data)?;
        Ok(PfmData::Radiance(RadianceImage::new(image)?))
    } else {
        Ok(PfmData::Depth(DepthMap::new(h, w, data)?))
    }
}

pub fn load_radiance(path: impl AsRef<Path>) -> Result<RadianceImage> {
    match load_pfm(path)? {
        PfmData::Radiance(r) => Ok(r),
        PfmData::Depth(_) => Err(format_err("expected a color (PF) file")),
    }
}

pub fn load_depth(path: impl AsRef<Path>) -> Result<DepthMap> {
    match load_pfm(path)? {
        PfmData::Depth(d) => Ok(d),
        PfmData::Radiance(_) => Err(format_err("expected a grayscale (Pf) file")),
    }
}

/// Masks are stored as grayscale PFM; samples above 0.5 are effective.
pub fn load_roi(path: impl AsRef<Path>) -> Result<RoiMask> {
    let path = path.as_ref();
    let (h, w, c, samples) = read_file(path)?;
    if c != 1 {
        return Err(format_err("expected a grayscale (Pf) mask"));
    }
    RoiMask::new(h, w, samples.into_iter().map(|v| v > 0.5).collect())
}

/// Writes any 1- or 3-channel image as little-endian PFM (samples rounded to f32).
pub fn save_pfm(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    let samples: Vec<f32> = image.data().iter().map(|&v| v as f32).collect();
    write_file(
        path.as_ref(),
        image.height(),
        image.width(),
        image.channels(),
        &samples,
    )
}

pub fn save_depth(path: impl AsRef<Path>, depth: &DepthMap) -> Result<()> {
    let samples: Vec<f32> = depth.data().iter().map(|&v| v as f32).collect();
    write_file(path.as_ref(), depth.height(), depth.width(), 1, &samples)
}

pub fn save_roi(path: impl AsRef<Path>, roi: &RoiMask) -> Result<()> {
    let samples: Vec<f32> = roi
        .data()
        .iter()
        .map(|&m| if m { 1.0 } else { 0.0 })
        .collect();
    write_file(path.as_ref(), roi.height(), roi.width(), 1, &samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gray_two_by_two_reads_top_left() {
        let mut file = b"Pf\n2 2\n-1.0\n".to_vec();
        // bottom row first: [3, 4] then [1, 2]
        for v in [3.0f32, 4.0, 1.0, 2.0] {
            file.extend_from_slice(&v.to_le_bytes());
        }
        let (h, w, c, s) = read_pfm(&file[..]).unwrap();
        assert_eq!((h, w, c), (2, 2, 1));
        assert_eq!(s, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn negative_radiance_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("neg.pfm");
        let mut f = std::fs::File::create(&path).unwrap();
        write_pfm(&mut f, 1, 1, 3, &[0.5, -0.25, 1.0], ByteOrder::Little).unwrap();
        drop(f);
        let err = load_pfm(&path).unwrap_err();
        assert!(err.to_string().contains("negative radiance"), "{err}");
    }

    #[test]
    fn malformed_headers() {
        assert!(read_pfm(&b"P6\n1 1\n-1\n"[..]).is_err());
        assert!(read_pfm(&b"PF\n1 x\n-1\n"[..]).is_err());
        assert!(read_pfm(&b"PF\n1 1\n0\n"[..]).is_err());
        assert!(read_pfm(&b"PF\n2 2\n-1\n\0\0\0\0"[..]).is_err());
    }

    #[test]
    fn roi_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roi.pfm");
        let roi = RoiMask::new(1, 3, vec![true, false, true]).unwrap();
        save_roi(&path, &roi).unwrap();
        assert_eq!(load_roi(&path).unwrap(), roi);
    }

    proptest! {
        #[test]
        fn big_and_little_endian_decode_identically(
            (h, w, samples) in (1usize..6, 1usize..6).prop_flat_map(|(h, w)| {
                (Just(h), Just(w), prop::collection::vec(0.0f32..1e6, h * w * 3))
            })
        ) {
            let mut le = Vec::new();
            let mut be = Vec::new();
            write_pfm(&mut le, h, w, 3, &samples, ByteOrder::Little).unwrap();
            write_pfm(&mut be, h, w, 3, &samples, ByteOrder::Big).unwrap();
            let a = read_pfm(&le[..]).unwrap();
            let b = read_pfm(&be[..]).unwrap();
            prop_assert_eq!(&a.3, &samples);
            prop_assert_eq!(a, b);
        }
    }
}
