//! Binary portable pixmap (P6) and graymap (P5) codecs, maxval 255.
//! Parse errors carry the byte offset of the offending header token.

use std::path::Path;

use crate::error::{Error, Result};
use crate::labels::LabelMap;
use crate::tensor::{Shape, Tensor};

struct HeaderParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderParser<'a> {
    fn fail<T>(&self, message: &str) -> Result<T> {
        Err(Error::MalformedPixmap {
            message: message.to_string(),
            offset: self.pos,
        })
    }

    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return self.fail("expected a decimal number");
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .or_else(|_| self.fail("number out of range"))
    }
}

fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<(usize, usize, usize)> {
    let mut p = HeaderParser { bytes, pos: 0 };
    if bytes.len() < 2 || &bytes[..2] != magic {
        return p.fail(&format!(
            "expected magic {}{}",
            magic[0] as char, magic[1] as char
        ));
    }
    p.pos = 2;
    let width = p.number()?;
    let height = p.number()?;
    let maxval = p.number()?;
    if maxval != 255 {
        return p.fail("maxval must be 255");
    }
    if p.pos >= bytes.len() || !matches!(bytes[p.pos], b' ' | b'\t' | b'\r' | b'\n') {
        return p.fail("expected single whitespace before raster data");
    }
    p.pos += 1;
    if width == 0 || height == 0 {
        return p.fail("zero image extent");
    }
    Ok((width, height, p.pos))
}

/// Decode P6 bytes into (width, height, interleaved RGB bytes).
pub fn decode_ppm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let (w, h, start) = parse_header(bytes, b"P6")?;
    let need = w * h * 3;
    if bytes.len() < start + need {
        return Err(Error::MalformedPixmap {
            message: format!("raster truncated: need {need} bytes"),
            offset: bytes.len(),
        });
    }
    Ok((w, h, bytes[start..start + need].to_vec()))
}

/// Decode P5 bytes into (width, height, gray bytes).
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let (w, h, start) = parse_header(bytes, b"P5")?;
    let need = w * h;
    if bytes.len() < start + need {
        return Err(Error::MalformedPixmap {
            message: format!("raster truncated: need {need} bytes"),
            offset: bytes.len(),
        });
    }
    Ok((w, h, bytes[start..start + need].to_vec()))
}

pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    assert_eq!(rgb.len(), width * height * 3);
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

pub fn encode_pgm(width: usize, height: usize, gray: &[u8]) -> Vec<u8> {
    assert_eq!(gray.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    out
}

/// P6 bytes -> 1x3xHxW tensor scaled to [0,1].
pub fn ppm_bytes_to_image(bytes: &[u8]) -> Result<Tensor> {
    let (w, h, rgb) = decode_ppm(bytes)?;
    let mut t = Tensor::zeros(Shape::new(1, 3, h, w));
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                *t.at_mut(0, c, y, x) = rgb[(y * w + x) * 3 + c] as f64 / 255.0;
            }
        }
    }
    Ok(t)
}

/// 1x3xHxW tensor in [0,1] -> P6 bytes (values clamped and rounded).
pub fn image_to_ppm_bytes(image: &Tensor) -> Vec<u8> {
    let s = image.shape();
    assert_eq!((s.b, s.c), (1, 3), "expected a single RGB image");
    let mut rgb = vec![0u8; s.h * s.w * 3];
    for y in 0..s.h {
        for x in 0..s.w {
            for c in 0..3 {
                let v = (image.at(0, c, y, x).clamp(0.0, 1.0) * 255.0).round() as u8;
                rgb[(y * s.w + x) * 3 + c] = v;
            }
        }
    }
    encode_ppm(s.w, s.h, &rgb)
}

/// P5 bytes -> label map (value 255 is the ignore label).
pub fn pgm_bytes_to_labels(bytes: &[u8]) -> Result<LabelMap> {
    let (w, h, gray) = decode_pgm(bytes)?;
    Ok(LabelMap::new(1, h, w, gray))
}

/// Label map -> P5 bytes; label values round-trip unchanged.
pub fn labels_to_pgm_bytes(labels: &LabelMap) -> Vec<u8> {
    let (b, h, w) = labels.dims();
    assert_eq!(b, 1, "expected a single label map");
    encode_pgm(w, h, labels.data())
}

pub fn read_ppm(path: &Path) -> Result<Tensor> {
    ppm_bytes_to_image(&std::fs::read(path)?)
}

pub fn write_ppm(path: &Path, image: &Tensor) -> Result<()> {
    Ok(std::fs::write(path, image_to_ppm_bytes(image))?)
}

pub fn read_pgm(path: &Path) -> Result<LabelMap> {
    pgm_bytes_to_labels(&std::fs::read(path)?)
}

pub fn write_pgm(path: &Path, labels: &LabelMap) -> Result<()> {
    Ok(std::fs::write(path, labels_to_pgm_bytes(labels))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let rgb: Vec<u8> = (0..2 * 3 * 3).map(|i| (i * 7) as u8).collect();
        let bytes = encode_ppm(3, 2, &rgb);
        let (w, h, back) = decode_ppm(&bytes).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(back, rgb);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# a comment\n2 2\n# another\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 255]);
        let labels = pgm_bytes_to_labels(&bytes).unwrap();
        assert_eq!(labels.data(), &[1, 2, 3, 255]);
    }

    #[test]
    fn label_values_round_trip_through_pgm() {
        let labels = LabelMap::new(1, 2, 2, vec![0, 7, 254, 255]);
        let bytes = labels_to_pgm_bytes(&labels);
        assert_eq!(pgm_bytes_to_labels(&bytes).unwrap(), labels);
    }

    #[test]
    fn malformed_header_reports_offset() {
        let bytes = b"P6\n12 abc\n255\n".to_vec();
        match decode_ppm(&bytes) {
            Err(Error::MalformedPixmap { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("expected malformed pixmap, got {other:?}"),
        }
    }

    #[test]
    fn wrong_maxval_rejected() {
        let bytes = b"P6\n1 1\n65535\n".to_vec();
        assert!(matches!(
            decode_ppm(&bytes),
            Err(Error::MalformedPixmap { .. })
        ));
    }

    #[test]
    fn image_tensor_round_trip_is_exact_at_8_bits() {
        let t = Tensor::from_fn(Shape::new(1, 3, 4, 5), |_, c, h, w| {
            ((c * 67 + h * 13 + w * 29) % 256) as f64 / 255.0
        });
        let bytes = image_to_ppm_bytes(&t);
        let back = ppm_bytes_to_image(&bytes).unwrap();
        assert_eq!(t, back);
    }
}
