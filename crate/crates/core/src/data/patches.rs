//! Center-labeled spatial windows over a (reduced) cube.

use serde::{Deserialize, Serialize};

use super::cube::{HsiCube, LabelRaster};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One labeled pixel and its split assignment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sample {
    pub row: usize,
    pub col: usize,
    /// Class label `1..=K`.
    pub label: u16,
    pub split: Option<Split>,
}

impl Sample {
    /// Zero-based class index.
    pub fn class(&self) -> usize {
        self.label as usize - 1
    }
}

/// Patches of size `P×P` around every labeled pixel of a cube.
///
/// Patch values are materialized on demand from the owned cube, laid out
/// channel-first (`B×P×P`) with zeros outside the image.
#[derive(Clone, Debug)]
pub struct PatchSet {
    cube: HsiCube,
    size: usize,
    classes: usize,
    samples: Vec<Sample>,
}

/// Validates a patch window size.
pub fn check_patch_size(size: usize) -> Result<()> {
    if size < 3 || size % 2 == 0 {
        return Err(Error::Config(format!("patch size must be odd and at least 3, got {size}")));
    }
    Ok(())
}

/// Fills `out` (length `B·P·P`) with the window centered at `(row, col)`.
pub fn fill_patch(cube: &HsiCube, row: usize, col: usize, size: usize, out: &mut [f32]) {
    let b = cube.bands();
    let pad = (size - 1) / 2;
    debug_assert_eq!(out.len(), b * size * size);
    for py in 0..size {
        for px in 0..size {
            let (r, c) = (row as isize + py as isize - pad as isize, col as isize + px as isize - pad as isize);
            let inside = r >= 0 && c >= 0 && (r as usize) < cube.height() && (c as usize) < cube.width();
            for band in 0..b {
                out[(band * size + py) * size + px] =
                    if inside { cube.pixel(r as usize, c as usize)[band] } else { 0.0 };
            }
        }
    }
}

/// One patch per labeled pixel in row-major order; label-0 pixels are
/// skipped.
pub fn extract_patches(cube: HsiCube, labels: &LabelRaster, size: usize) -> Result<PatchSet> {
    check_patch_size(size)?;
    labels.check_matches(&cube)?;
    let mut samples = Vec::with_capacity(labels.labeled_count());
    for row in 0..labels.height() {
        for col in 0..labels.width() {
            let label = labels.get(row, col);
            if label != 0 {
                samples.push(Sample { row, col, label, split: None });
            }
        }
    }
    let classes = labels.max_label() as usize;
    Ok(PatchSet { cube, size, classes, samples })
}

impl PatchSet {
    /// Rebuilds a set from explicit samples (for example a saved manifest).
    pub fn from_samples(cube: HsiCube, size: usize, classes: usize, samples: Vec<Sample>) -> Result<Self> {
        check_patch_size(size)?;
        for s in &samples {
            if s.row >= cube.height() || s.col >= cube.width() {
                return Err(Error::Data(format!("sample ({}, {}) outside the cube", s.row, s.col)));
            }
            if s.label == 0 || s.label as usize > classes {
                return Err(Error::Data(format!("sample label {} outside 1..={classes}", s.label)));
            }
        }
        Ok(Self { cube, size, classes, samples })
    }

    pub fn cube(&self) -> &HsiCube {
        &self.cube
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bands(&self) -> usize {
        self.cube.bands()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub(crate) fn samples_mut(&mut self) -> &mut [Sample] {
        &mut self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn patch_len(&self) -> usize {
        self.bands() * self.size * self.size
    }

    /// Channel-first patch for sample `i`.
    pub fn patch(&self, i: usize) -> Vec<f32> {
        let mut out = vec![0.0; self.patch_len()];
        let s = self.samples[i];
        fill_patch(&self.cube, s.row, s.col, self.size, &mut out);
        out
    }

    /// Indices of samples in `split`, in stored order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.samples.iter().enumerate().filter(|(_, s)| s.split == Some(split)).map(|(i, _)| i).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize, b: usize) -> HsiCube {
        HsiCube::new(h, w, b, (0..h * w * b).map(|i| i as f32 + 1.0).collect()).unwrap()
    }

    #[test]
    fn zero_labels_emit_no_patch() {
        let labels = LabelRaster::new(2, 2, vec![0, 1, 2, 0]).unwrap();
        let set = extract_patches(ramp(2, 2, 1), &labels, 3).unwrap();
        assert_eq!(set.len(), 2);
        assert!(set.samples().iter().all(|s| s.label != 0));
    }

    #[test]
    fn corner_patch_padding_count() {
        let labels = LabelRaster::new(10, 10, vec![1; 100]).unwrap();
        let set = extract_patches(ramp(10, 10, 2), &labels, 5).unwrap();
        // window overlap at (0, 0): rows 0..=2 × cols 0..=2 lie inside
        let inside = (-2i32..=2)
            .flat_map(|dy| (-2i32..=2).map(move |dx| (dy, dx)))
            .filter(|&(dy, dx)| dy >= 0 && dx >= 0)
            .count();
        assert_eq!(inside, 9);
        let p = set.patch(0);
        for band in 0..2 {
            let plane = &p[band * 25..(band + 1) * 25];
            assert_eq!(plane.iter().filter(|&&v| v != 0.0).count(), inside);
            assert_eq!(plane.iter().filter(|&&v| v == 0.0).count(), 25 - inside);
        }
    }

    #[test]
    fn even_or_tiny_windows_rejected() {
        let labels = LabelRaster::new(2, 2, vec![1; 4]).unwrap();
        assert!(matches!(extract_patches(ramp(2, 2, 1), &labels, 4), Err(Error::Config(_))));
        assert!(extract_patches(ramp(2, 2, 1), &labels, 1).is_err());
    }

    #[test]
    fn pad_is_half_window() {
        // P = 19 reaches 9 cells to each side
        let labels = LabelRaster::new(19, 19, vec![1; 361]).unwrap();
        let set = extract_patches(ramp(19, 19, 1), &labels, 19).unwrap();
        let center = set.samples().iter().position(|s| s.row == 9 && s.col == 9).unwrap();
        assert!(set.patch(center).iter().all(|&v| v != 0.0));
    }
}
