//! Minimal PGM (P2 ASCII / P5 binary) support.
//!
//! An image of width `W` and height `H` becomes a 2-D field on `[0, W] x [0, H]`
//! in pixel units. Axis 0 is the column (`x_1`), axis 1 the row (`x_2`), and
//! image row 0 maps to the smallest `x_2`.

use std::io::Write;
use std::path::Path;

use super::{BoxDomain, GridSpec, ScalarField};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PgmEncoding {
    Ascii,
    Binary,
}

pub fn load_image_pgm(path: impl AsRef<Path>, intensity_scale: f64) -> Result<ScalarField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_image_pgm(&bytes, intensity_scale)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.buf.len() {
            let c = self.buf[self.pos];
            if c == b'#' {
                while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.buf.len() && !self.buf[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.buf[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        let tok = self
            .token()
            .ok_or_else(|| Error::MalformedHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                Error::MalformedHeader(format!(
                    "bad {what} `{}`",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}

pub fn read_image_pgm(bytes: &[u8], intensity_scale: f64) -> Result<ScalarField> {
    if !intensity_scale.is_finite() {
        return Err(Error::Precondition("intensity scale must be finite".into()));
    }
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let magic = cur
        .token()
        .ok_or_else(|| Error::UnsupportedFormat("empty file".into()))?;
    let encoding = match magic {
        b"P2" => PgmEncoding::Ascii,
        b"P5" => PgmEncoding::Binary,
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "magic number `{}`",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader("zero image dimension".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::MalformedHeader(format!("maxval {maxval} out of range")));
    }
    let count = width * height;

    let mut pixels = Vec::with_capacity(count);
    match encoding {
        PgmEncoding::Ascii => {
            while pixels.len() < count {
                match cur.token() {
                    Some(tok) => {
                        let v: u32 = std::str::from_utf8(tok)
                            .ok()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| Error::Parse {
                                line: 0,
                                msg: format!("bad pixel `{}`", String::from_utf8_lossy(tok)),
                            })?;
                        pixels.push(v);
                    }
                    None => break,
                }
            }
        }
        PgmEncoding::Binary => {
            // exactly one whitespace byte separates maxval from the raster
            let start = cur.pos + 1;
            let raster = bytes.get(start..).unwrap_or(&[]);
            if maxval < 256 {
                pixels.extend(raster.iter().take(count).map(|&b| b as u32));
            } else {
                pixels.extend(
                    raster
                        .chunks_exact(2)
                        .take(count)
                        .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32),
                );
            }
        }
    }
    if pixels.len() < count {
        return Err(Error::Truncated {
            expected: count,
            got: pixels.len(),
        });
    }

    let domain = BoxDomain::new(vec![0.0, 0.0], vec![width as f64, height as f64])?;
    let grid = GridSpec::new(vec![width, height])?;
    let mut values = vec![0.0; count];
    for row in 0..height {
        for col in 0..width {
            values[col * height + row] = intensity_scale * pixels[row * width + col] as f64;
        }
    }
    ScalarField::new(domain, grid, values)
}

/// Writes `pixels` (image order, row 0 first) as a PGM.
pub fn write_pgm<W: Write>(
    w: &mut W,
    width: usize,
    height: usize,
    maxval: u16,
    pixels: &[u16],
    encoding: PgmEncoding,
) -> std::io::Result<()> {
    assert_eq!(pixels.len(), width * height, "pixel count");
    match encoding {
        PgmEncoding::Ascii => {
            writeln!(w, "P2\n{width} {height}\n{maxval}")?;
            for row in pixels.chunks(width) {
                let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
        PgmEncoding::Binary => {
            write!(w, "P5\n{width} {height}\n{maxval}\n")?;
            if maxval < 256 {
                let bytes: Vec<u8> = pixels.iter().map(|&p| p as u8).collect();
                w.write_all(&bytes)?;
            } else {
                for p in pixels {
                    w.write_all(&p.to_be_bytes())?;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_ascii() {
        let text = b"P2\n# checker\n2 2\n255\n0 255\n255 0\n";
        let f = read_image_pgm(text, 1.0 / 255.0).unwrap();
        assert_eq!(f.domain().hi(), &[2.0, 2.0]);
        assert_eq!(f.values(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn row_zero_is_smallest_x2() {
        // 3 wide, 2 tall; top row bright
        let text = b"P2 3 2 9\n9 9 9\n0 0 0\n";
        let f = read_image_pgm(text, 1.0).unwrap();
        // sample (col 1, row 0) sits at x = (1.5, 0.5)
        let k = f.grid().ravel(&[1, 0]);
        assert_eq!(f.point(k), vec![1.5, 0.5]);
        assert_eq!(f.values()[k], 9.0);
        assert_eq!(f.values()[f.grid().ravel(&[1, 1])], 0.0);
    }

    #[test]
    fn binary_round_trip_8_and_16_bit() {
        for maxval in [255u16, 4095] {
            let pixels: Vec<u16> = (0..12).map(|i| (i * 97 % (maxval as usize + 1)) as u16).collect();
            let mut buf = Vec::new();
            write_pgm(&mut buf, 4, 3, maxval, &pixels, PgmEncoding::Binary).unwrap();
            let f = read_image_pgm(&buf, 1.0).unwrap();
            for row in 0..3 {
                for col in 0..4 {
                    assert_eq!(
                        f.values()[f.grid().ravel(&[col, row])],
                        pixels[row * 4 + col] as f64
                    );
                }
            }
        }
    }

    #[test]
    fn uniform_gray_is_constant() {
        let mut buf = Vec::new();
        write_pgm(&mut buf, 16, 16, 255, &[128; 256], PgmEncoding::Ascii).unwrap();
        let f = read_image_pgm(&buf, 1.0).unwrap();
        assert!(f.values().iter().all(|&v| v == 128.0));
    }

    #[test]
    fn rejects_other_magic_and_truncation() {
        assert!(matches!(
            read_image_pgm(b"P6\n2 2\n255\n", 1.0),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(
            read_image_pgm(b"P2\n2 2\n255\n1 2 3\n", 1.0),
            Err(Error::Truncated { expected: 4, got: 3 })
        ));
        assert!(matches!(
            read_image_pgm(b"P5\n2 2\n255\n\x01\x02", 1.0),
            Err(Error::Truncated { expected: 4, got: 2 })
        ));
    }

    #[test]
    fn ramp_has_unit_finite_difference_gradient() {
        let (w, h) = (16usize, 12usize);
        let pixels: Vec<u16> = (0..h).flat_map(|_| (0..w).map(|c| c as u16)).collect();
        let mut buf = Vec::new();
        write_pgm(&mut buf, w, h, 255, &pixels, PgmEncoding::Binary).unwrap();
        let f = read_image_pgm(&buf, 1.0).unwrap();
        let g = f.grid();
        for col in 1..w - 1 {
            for row in 1..h - 1 {
                let v = |c: usize, r: usize| f.values()[g.ravel(&[c, r])];
                let d1 = (v(col + 1, row) - v(col - 1, row)) / 2.0;
                let d2 = (v(col, row + 1) - v(col, row - 1)) / 2.0;
                assert_eq!((d1, d2), (1.0, 0.0));
            }
        }
    }
}
