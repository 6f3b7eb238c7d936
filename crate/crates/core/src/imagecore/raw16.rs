//! RAW16 container: the ASCII header `P6-16\n<width> <height>\n65535\n`
//! followed by `height * width * 3` big-endian `u16` samples, row-major,
//! top-left origin, RGB interleaved.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::image::RawImage16;
use crate::error::{Error, Result};

pub const RAW16_MAGIC: &str = "P6-16";

fn format_err(reason: impl Into<String>) -> Error {
    Error::Format {
        format: "RAW16",
        reason: reason.into(),
    }
}

pub fn write_raw16<W: Write>(mut writer: W, image: &RawImage16) -> Result<()> {
    let mut out = Vec::with_capacity(32 + image.data().len() * 2);
    write!(out, "{RAW16_MAGIC}\n{} {}\n65535\n", image.width(), image.height()).expect("vec write");
    for &v in image.data() {
        out.extend_from_slice(&v.to_be_bytes());
    }
    writer.write_all(&out).map_err(|e| format_err(e.to_string()))
}

fn read_line<R: BufRead>(reader: &mut R) -> Result<String> {
    let mut line = String::new();
    reader
        .read_line(&mut line)
        .map_err(|e| format_err(e.to_string()))?;
    if !line.ends_with('\n') {
        return Err(format_err("truncated header"));
    }
    line.pop();
    Ok(line)
}

pub fn read_raw16<R: Read>(reader: R) -> Result<RawImage16> {
    let mut reader = BufReader::new(reader);
    let magic = read_line(&mut reader)?;
    if magic != RAW16_MAGIC {
        return Err(format_err(format!("bad magic `{magic}`")));
    }
    let dims = read_line(&mut reader)?;
    let mut parts = dims.split(' ');
    let (Some(w), Some(h), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(format_err(format!("bad dimension line `{dims}`")));
    };
    let width: usize = w.parse().map_err(|_| format_err("bad width"))?;
    let height: usize = h.parse().map_err(|_| format_err("bad height"))?;
    let maxval = read_line(&mut reader)?;
    if maxval != "65535" {
        return Err(format_err(format!("unsupported maxval `{maxval}`")));
    }
    let n = height * width * RawImage16::CHANNELS;
    let mut bytes = vec![0u8; n * 2];
    reader
        .read_exact(&mut bytes)
        .map_err(|_| format_err("truncated sample data"))?;
    let mut extra = [0u8; 1];
    if reader.read(&mut extra).map_err(|e| format_err(e.to_string()))? != 0 {
        return Err(format_err("trailing bytes after sample data"));
    }
    let data = bytes
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .collect();
    RawImage16::new(height, width, data)
}

pub fn save_raw16(path: impl AsRef<Path>, image: &RawImage16) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    write_raw16(&mut writer, image)?;
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn load_raw16(path: impl AsRef<Path>) -> Result<RawImage16> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_raw16(file)
}
