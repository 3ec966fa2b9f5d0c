//! Binary PGM (P5) and PPM (P6) with 8-bit samples.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pipeline::Image;

fn fmt(detail: impl Into<String>) -> Error {
    Error::Format { what: "PNM", detail: detail.into() }
}

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(fmt("expected P5 or P6 magic")),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(fmt("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| fmt("malformed header number"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(fmt("missing whitespace after maxval"));
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(fmt("zero image dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(fmt(format!("maxval {maxval} is not in 1..=255")));
    }
    Ok(Header { channels, width, height, maxval, data_start: pos + 1 })
}

/// Decodes a P5/P6 byte stream into [0, 1] intensities (`v / maxval`).
pub fn decode(bytes: &[u8]) -> Result<Image> {
    let h = parse_header(bytes)?;
    let n = h.width * h.height;
    let body = bytes.get(h.data_start..h.data_start + n * h.channels).ok_or_else(|| fmt("pixel data is truncated"))?;
    let scale = h.maxval as f64;
    let channels = (0..h.channels).map(|c| (0..n).map(|i| body[i * h.channels + c] as f64 / scale).collect()).collect();
    Image::new(h.width, h.height, channels)
}

/// Encodes as P5 (one channel) or P6 (three), maxval 255, with samples
/// `round(255 clamp(v, 0, 1))`.
pub fn encode(img: &Image) -> Vec<u8> {
    let magic = if img.channel_count() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    let n = img.width() * img.height();
    out.reserve(n * img.channel_count());
    for i in 0..n {
        for c in img.channels() {
            out.push(quantize(c[i]));
        }
    }
    out
}

pub fn quantize(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

pub fn read(path: impl AsRef<Path>) -> Result<Image> {
    decode(&fs::read(path)?)
}

pub fn write(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    fs::write(path, encode(img))?;
    Ok(())
}

/// Reads a keep-mask stored as a grayscale image (nonzero = observed).
pub fn read_mask(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<bool>)> {
    let img = read(path)?;
    Ok((img.width(), img.height(), img.luminance().iter().map(|&v| v > 0.0).collect()))
}

pub fn write_mask(path: impl AsRef<Path>, width: usize, height: usize, keep: &[bool]) -> Result<()> {
    let data = keep.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect();
    write(path, &Image::gray(width, height, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_round_trip_is_exact() {
        let img = Image::from_fn(7, 5, |r, c| ((r * 7 + c) * 7 % 256) as f64 / 255.0);
        let bytes = encode(&img);
        let back = decode(&bytes).unwrap();
        assert_eq!(back, img);
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn color_round_trip_is_exact() {
        let ch = |k: usize| (0..12).map(|i| ((i * 19 + k * 50) % 256) as f64 / 255.0).collect();
        let img = Image::new(4, 3, vec![ch(0), ch(1), ch(2)]).unwrap();
        assert_eq!(decode(&encode(&img)).unwrap(), img);
        assert!(encode(&img).starts_with(b"P6\n4 3\n255\n"));
    }

    #[test]
    fn header_comments_and_maxval() {
        let mut bytes = b"P5 # comment\n2 1\n# another\n15\n".to_vec();
        bytes.extend([0u8, 15]);
        let img = decode(&bytes).unwrap();
        assert_eq!(img.channel(0), &[0.0, 1.0]);
    }

    #[test]
    fn quantization_clamps() {
        assert_eq!(quantize(-0.2), 0);
        assert_eq!(quantize(1.7), 255);
        assert_eq!(quantize(0.5), 128);
    }

    #[test]
    fn malformed_inputs() {
        assert!(decode(b"P3\n1 1\n255\n0").is_err());
        assert!(decode(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        let keep = vec![true, false, false, true, true, false];
        write_mask(&path, 3, 2, &keep).unwrap();
        assert_eq!(read_mask(&path).unwrap(), (3, 2, keep));
    }
}
