//! Netpbm readers and writers. Images load from P2/P3/P5/P6 at maxval 255;
//! soft edge maps are stored as 16-bit P5 (big-endian samples, maxval 65535)
//! so probabilities survive a round trip with enough resolution for
//! threshold sweeps.

use std::fs;
use std::path::Path;

use crate::data::Image;
use crate::error::{Error, Result};
use crate::loss::{EdgeMap, GroundTruth};

const ANNOTATION_THRESHOLD: u16 = 128;

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
    path: &'a Path,
}

impl<'a> Parser<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Parser {
            bytes,
            pos: 0,
            line: 1,
            path,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn advance(&mut self) -> Option<u8> {
        let b = *self.bytes.get(self.pos)?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
        }
        Some(b)
    }

    /// Skips whitespace and '#' comments (comment runs to end of line).
    fn skip_separators(&mut self) {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => {
                    self.advance();
                }
                Some(b'#') => {
                    while let Some(b) = self.advance() {
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => return,
            }
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        self.skip_separators();
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#')
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("unexpected end of file"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| self.err("non-ascii bytes in header"))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self.token()?;
        tok.parse::<usize>()
            .map_err(|_| self.err(format!("invalid {}: {:?}", what, tok)))
    }

    /// Consumes the single whitespace byte separating the header from a
    /// binary raster.
    fn raster_start(&mut self) -> Result<()> {
        match self.advance() {
            Some(b) if b.is_ascii_whitespace() => Ok(()),
            _ => Err(self.err("expected whitespace before binary raster")),
        }
    }
}

struct Pnm {
    channels: usize,
    h: usize,
    w: usize,
    maxval: usize,
    samples: Vec<u16>,
}

fn parse_pnm(bytes: &[u8], path: &Path) -> Result<Pnm> {
    let mut p = Parser::new(bytes, path);
    let magic = p.token()?;
    let (ascii, channels) = match magic {
        "P2" => (true, 1),
        "P3" => (true, 3),
        "P5" => (false, 1),
        "P6" => (false, 3),
        other => return Err(p.err(format!("unsupported netpbm magic {:?}", other))),
    };
    let w = p.number("width")?;
    let h = p.number("height")?;
    let maxval = p.number("maxval")?;
    if w == 0 || h == 0 {
        return Err(p.err(format!("degenerate dimensions {}x{}", w, h)));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(p.err(format!("maxval {} out of range 1..=65535", maxval)));
    }
    let count = channels * h * w;
    let mut samples = Vec::with_capacity(count);
    if ascii {
        for _ in 0..count {
            let v = p.number("sample")?;
            if v > maxval {
                return Err(p.err(format!("sample {} exceeds maxval {}", v, maxval)));
            }
            samples.push(v as u16);
        }
    } else {
        p.raster_start()?;
        let wide = maxval > 255;
        let bytes_per = if wide { 2 } else { 1 };
        let raster = &p.bytes[p.pos..];
        if raster.len() < count * bytes_per {
            return Err(p.err(format!(
                "raster truncated: expected {} bytes, found {}",
                count * bytes_per,
                raster.len()
            )));
        }
        for i in 0..count {
            let v = if wide {
                u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]])
            } else {
                raster[i] as u16
            };
            if v as usize > maxval {
                return Err(p.err(format!("sample {} exceeds maxval {}", v, maxval)));
            }
            samples.push(v);
        }
    }
    Ok(Pnm {
        channels,
        h,
        w,
        maxval,
        samples,
    })
}

fn read_pnm(path: &Path) -> Result<Pnm> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pnm(&bytes, path)
}

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: msg.into(),
    }
}

/// Loads a P2/P3/P5/P6 file at maxval 255 as an image scaled to [0, 1].
pub fn load_image(path: &Path) -> Result<Image> {
    let pnm = read_pnm(path)?;
    if pnm.maxval != 255 {
        return Err(parse_err(
            path,
            format!("images must have maxval 255, got {}", pnm.maxval),
        ));
    }
    let data = pnm.samples.iter().map(|&v| v as f64 / 255.0).collect();
    Image::new(pnm.channels, pnm.h, pnm.w, data)
}

/// Writes gray images as binary P5 and rgb as binary P6, maxval 255.
pub fn save_image(path: &Path, image: &Image) -> Result<()> {
    let magic = if image.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{}\n{} {}\n255\n", magic, image.w(), image.h()).into_bytes();
    out.extend(image.data().iter().map(|&v| (v * 255.0).round() as u8));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Loads a grayscale P2/P5 annotation at maxval 255; samples at or above 128
/// count as boundary.
pub fn load_annotation(path: &Path) -> Result<GroundTruth> {
    let pnm = read_pnm(path)?;
    if pnm.channels != 1 {
        return Err(parse_err(path, "annotations must be grayscale"));
    }
    if pnm.maxval != 255 {
        return Err(parse_err(
            path,
            format!("annotations must have maxval 255, got {}", pnm.maxval),
        ));
    }
    let labels = pnm
        .samples
        .iter()
        .map(|&v| u8::from(v >= ANNOTATION_THRESHOLD))
        .collect();
    GroundTruth::new(pnm.h, pnm.w, labels)
}

pub fn save_annotation(path: &Path, truth: &GroundTruth) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", truth.w(), truth.h()).into_bytes();
    out.extend(truth.values().iter().map(|&g| if g == 1 { 255u8 } else { 0 }));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes a soft edge map as 16-bit binary P5 (big-endian samples).
pub fn save_edge_map(path: &Path, map: &EdgeMap) -> Result<()> {
    let mut out = format!("P5\n{} {}\n65535\n", map.w(), map.h()).into_bytes();
    for &p in map.values() {
        let v = (p * 65535.0).round() as u16;
        out.extend_from_slice(&v.to_be_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Loads a grayscale P2/P5 edge map at maxval 255 or 65535, scaled to [0, 1].
pub fn load_edge_map(path: &Path) -> Result<EdgeMap> {
    let pnm = read_pnm(path)?;
    if pnm.channels != 1 {
        return Err(parse_err(path, "edge maps must be grayscale"));
    }
    if pnm.maxval != 255 && pnm.maxval != 65535 {
        return Err(parse_err(
            path,
            format!("edge maps must have maxval 255 or 65535, got {}", pnm.maxval),
        ));
    }
    let scale = pnm.maxval as f64;
    let values = pnm.samples.iter().map(|&v| v as f64 / scale).collect();
    EdgeMap::new(pnm.h, pnm.w, values)
}
