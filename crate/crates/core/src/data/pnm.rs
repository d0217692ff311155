//! Portable pixmap images: reads P2/P3/P5/P6, writes binary P5/P6.

use std::io::{Read, Write};

use stcnn_tensor::Tensor;

use crate::grid::GridSpec;
use crate::{Error, Result};

/// Scene image with intensities in `[0, 1]`, stored interleaved `H × W × C`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceImage {
    pub id: String,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<f32>,
}

impl ReferenceImage {
    /// Values are clamped to `[0, 1]`.
    pub fn new(
        id: impl Into<String>,
        height: usize,
        width: usize,
        channels: usize,
        mut pixels: Vec<f32>,
    ) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Reference(format!("{channels} channels (expected 1 or 3)")));
        }
        if height * width * channels != pixels.len() || height == 0 || width == 0 {
            return Err(Error::Reference(format!(
                "{height}x{width}x{channels} image needs {} values, got {}",
                height * width * channels,
                pixels.len()
            )));
        }
        for v in &mut pixels {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Ok(Self {
            id: id.into(),
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn filled(id: impl Into<String>, grid: &GridSpec, channels: usize, value: f32) -> Result<Self> {
        Self::new(id, grid.height, grid.width, channels, vec![value; grid.cells() * channels])
    }

    pub fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if self.height != grid.height || self.width != grid.width {
            return Err(Error::Reference(format!(
                "image {:?} is {}x{}, grid is {grid}",
                self.id, self.height, self.width
            )));
        }
        Ok(())
    }

    /// Planar `[C, H, W]` tensor.
    pub fn to_tensor(&self) -> Tensor<f32> {
        let plane = self.height * self.width;
        let c = self.channels;
        Tensor::from_fn(&[c, self.height, self.width], |i| {
            self.pixels[(i % plane) * c + i / plane]
        })
    }

    pub fn read(id: impl Into<String>, r: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        let magic = cur.token()?;
        let (channels, binary) = match magic.as_str() {
            "P2" => (1, false),
            "P3" => (3, false),
            "P5" => (1, true),
            "P6" => (3, true),
            m => return Err(Error::Reference(format!("unsupported pixmap type {m:?}"))),
        };
        let width = cur.number()?;
        let height = cur.number()?;
        let maxval = cur.number()?;
        if maxval == 0 || maxval > 65535 {
            return Err(Error::Reference(format!("maxval {maxval} out of range")));
        }
        let n = width * height * channels;
        let scale = 1.0 / maxval as f32;
        let pixels = if binary {
            cur.pos += 1;
            let wide = maxval > 255;
            let need = n * if wide { 2 } else { 1 };
            let raw = bytes
                .get(cur.pos..cur.pos + need)
                .ok_or_else(|| Error::Reference("truncated pixel data".into()))?;
            if wide {
                raw.chunks_exact(2)
                    .map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 * scale)
                    .collect()
            } else {
                raw.iter().map(|&b| b as f32 * scale).collect()
            }
        } else {
            (0..n)
                .map(|_| cur.number().map(|v| v as f32 * scale))
                .collect::<Result<Vec<_>>>()?
        };
        Self::new(id, height, width, channels, pixels)
    }

    /// Binary PGM for one channel, PPM for three; maxval 255.
    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        write!(w, "{magic}\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self
            .pixels
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        w.write_all(&bytes)?;
        Ok(())
    }
}

/// Writes 8-bit pixel bytes (`channels` 1 or 3) as PGM/PPM.
pub fn write_pixmap(w: &mut impl Write, width: usize, height: usize, channels: usize, bytes: &[u8]) -> Result<()> {
    debug_assert_eq!(bytes.len(), width * height * channels);
    let magic = if channels == 1 { "P5" } else { "P6" };
    write!(w, "{magic}\n{width} {height}\n255\n")?;
    w.write_all(bytes)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn token(&mut self) -> Result<String> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.bytes.get(self.pos) == Some(&b'#') {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Reference("unexpected end of pixmap header".into()));
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<usize> {
        let t = self.token()?;
        t.parse()
            .map_err(|_| Error::Reference(format!("expected a number, got {t:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let img = ReferenceImage::new("a", 2, 3, 3, (0..18).map(|i| i as f32 / 17.0).collect()).unwrap();
        let mut buf = Vec::new();
        img.write(&mut buf).unwrap();
        let back = ReferenceImage::read("a", &mut buf.as_slice()).unwrap();
        assert_eq!((back.height, back.width, back.channels), (2, 3, 3));
        for (a, b) in img.pixels.iter().zip(&back.pixels) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn ascii_with_comment() {
        let text = "P2\n# scene\n2 1\n4\n0 4\n";
        let img = ReferenceImage::read("g", &mut text.as_bytes()).unwrap();
        assert_eq!(img.pixels, vec![0.0, 1.0]);
    }

    #[test]
    fn values_are_clamped_and_planarised() {
        let img = ReferenceImage::new("c", 1, 2, 3, vec![2.0, 0.0, 0.5, -1.0, 1.0, 0.25]).unwrap();
        assert_eq!(img.pixels, vec![1.0, 0.0, 0.5, 0.0, 1.0, 0.25]);
        assert_eq!(img.to_tensor().data(), &[1.0, 0.0, 0.0, 1.0, 0.5, 0.25]);
    }

    #[test]
    fn rejects_bad_channels_and_sizes() {
        assert!(ReferenceImage::new("x", 2, 2, 2, vec![0.0; 8]).is_err());
        assert!(ReferenceImage::new("x", 2, 2, 1, vec![0.0; 3]).is_err());
        assert!(ReferenceImage::read("x", &mut "P4\n".as_bytes()).is_err());
    }
}
