//! PGM images and plain numeric CSV files.

use std::path::Path;

use crate::error::{Error, Result};

/// A grayscale image with values in `[0, 1]` after reading.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

/// Reads a binary (P5) or ASCII (P2) PGM, scaled by its maxval.
pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    parse_pgm(&std::fs::read(path)?)
}

pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let num = |s: String| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad PGM header field {s:?}")));
    let width = num(token()?)?;
    let height = num(token()?)?;
    let maxval = num(token()?)?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse(format!("PGM maxval {maxval} out of range")));
    }
    let n = width * height;
    let scale = maxval as f64;
    let data = match magic.as_str() {
        "P5" => {
            let body = &bytes[(pos + 1).min(bytes.len())..];
            let wide = maxval > 255;
            let need = if wide { 2 * n } else { n };
            if body.len() < need {
                return Err(Error::Parse(format!("PGM body has {} bytes, need {need}", body.len())));
            }
            if wide {
                body[..need]
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale)
                    .collect()
            } else {
                body[..n].iter().map(|&v| v as f64 / scale).collect()
            }
        }
        "P2" => {
            let text = String::from_utf8_lossy(&bytes[pos..]);
            let vals: Vec<f64> = text
                .split_ascii_whitespace()
                .take(n)
                .map(|t| t.parse::<f64>().map(|v| v / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("PGM pixel: {e}")))?;
            if vals.len() != n {
                return Err(Error::Parse(format!("PGM has {} pixels, need {n}", vals.len())));
            }
            vals
        }
        other => return Err(Error::Parse(format!("unsupported image format {other:?}"))),
    };
    Ok(GrayImage {
        height,
        width,
        data,
    })
}

/// Encodes a binary 8-bit PGM, clipping values to `[0, 1]`.
pub fn encode_pgm(height: usize, width: usize, data: &[f64]) -> Result<Vec<u8>> {
    if data.len() != height * width {
        return Err(Error::Length {
            expected: height * width,
            got: data.len(),
        });
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

pub fn write_pgm(path: &Path, height: usize, width: usize, data: &[f64]) -> Result<()> {
    std::fs::write(path, encode_pgm(height, width, data)?)?;
    Ok(())
}

/// Reads all numbers of a headerless CSV in row-major order.
pub fn read_csv_values(path: &Path) -> Result<Vec<f64>> {
    parse_csv_values(&std::fs::read_to_string(path)?)
}

pub fn parse_csv_values(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        for field in line.split(',') {
            let field = field.trim();
            if field.is_empty() {
                continue;
            }
            out.push(field.parse::<f64>().map_err(|_| {
                Error::Parse(format!("line {}: not a number: {field:?}", line_no + 1))
            })?);
        }
    }
    Ok(out)
}

/// Writes `data` with `cols` values per line, using shortest round-trip
/// formatting.
pub fn write_csv_values(path: &Path, data: &[f64], cols: usize) -> Result<()> {
    std::fs::write(path, format_csv_values(data, cols))?;
    Ok(())
}

/// Shortest round-trip text for `x`; scientific outside `[1e-5, 1e16)`.
pub fn format_value(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

pub fn format_csv_values(data: &[f64], cols: usize) -> String {
    let cols = cols.max(1);
    let mut out = String::new();
    for row in data.chunks(cols) {
        let line: Vec<String> = row.iter().copied().map(format_value).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_round_trip_as_text() {
        for x in [0.0, -0.0, 1.0, 0.1, 8.859277744181285e-32, -3.5e20, 1e-5, 123456.789] {
            let t = format_value(x);
            assert_eq!(t.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{t}");
        }
        assert_eq!(format_value(2.5e-9), "2.5e-9");
        assert_eq!(format_value(0.25), "0.25");
    }

    #[test]
    fn pgm_round_trip() {
        let data: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
        let bytes = encode_pgm(3, 4, &data).unwrap();
        let img = parse_pgm(&bytes).unwrap();
        assert_eq!((img.height, img.width), (3, 4));
        for (a, b) in img.data.iter().zip(&data) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn pgm_ascii_and_comments() {
        let img = parse_pgm(b"P2\n# c\n2 1\n4\n0 4\n").unwrap();
        assert_eq!(img.data, vec![0.0, 1.0]);
    }

    #[test]
    fn pgm_sixteen_bit() {
        let mut bytes = b"P5 1 1 65535\n".to_vec();
        bytes.extend(32768u16.to_be_bytes());
        let img = parse_pgm(&bytes).unwrap();
        assert!((img.data[0] - 32768.0 / 65535.0).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let v = vec![0.1, -2.5e-300, 3.0, f64::MIN_POSITIVE];
        let text = format_csv_values(&v, 3);
        assert_eq!(parse_csv_values(&text).unwrap(), v);
    }
}
