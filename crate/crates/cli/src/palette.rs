//! Class colors and the binary portable pixmap writer.

use std::io::{self, Write};

pub type Rgb = [u8; 3];

/// One color per class `1..=K` at evenly spaced hues; label 0 is black.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassPalette {
    colors: Vec<Rgb>,
}

impl ClassPalette {
    pub fn new(classes: usize) -> Self {
        let colors = (0..classes).map(|k| hue(k as f64 * 360.0 / classes as f64)).collect();
        Self { colors }
    }

    pub fn classes(&self) -> usize {
        self.colors.len()
    }

    /// Color of a 1-based label; 0 and out-of-range labels are black.
    pub fn color(&self, label: usize) -> Rgb {
        match label {
            0 => [0, 0, 0],
            l => self.colors.get(l - 1).copied().unwrap_or([0, 0, 0]),
        }
    }
}

/// Fully saturated, full-value color at `h` degrees.
fn hue(h: f64) -> Rgb {
    let x = 1.0 - ((h / 60.0) % 2.0 - 1.0).abs();
    let (r, g, b) = match (h / 60.0) as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let q = |v: f64| (v * 255.0).round() as u8;
    [q(r), q(g), q(b)]
}

/// Writes a binary (`P6`) pixmap of row-major pixels.
pub fn write_ppm<W: Write>(mut w: W, width: usize, height: usize, pixels: &[Rgb]) -> io::Result<()> {
    assert_eq!(pixels.len(), width * height, "pixel count must equal width·height");
    write!(w, "P6\n{width} {height}\n255\n")?;
    let bytes: Vec<u8> = pixels.iter().flatten().copied().collect();
    w.write_all(&bytes)
}

/// Parses a `P6` pixmap written by [`write_ppm`].
pub fn read_ppm(bytes: &[u8]) -> Option<(usize, usize, Vec<Rgb>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while bytes.get(pos)?.is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while !bytes.get(pos)?.is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?);
    }
    if fields[0] != "P6" || fields[3] != "255" {
        return None;
    }
    let (w, h): (usize, usize) = (fields[1].parse().ok()?, fields[2].parse().ok()?);
    let data = bytes.get(pos + 1..)?;
    if data.len() != 3 * w * h {
        return None;
    }
    Some((w, h, data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()))
}
