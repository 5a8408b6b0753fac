use crate::error::{Error, Result};

/// Hyperspectral image, band-interleaved-by-pixel (`H×W×C`).
#[derive(Clone, Debug, PartialEq)]
pub struct HsiCube {
    height: usize,
    width: usize,
    bands: usize,
    values: Vec<f32>,
}

impl HsiCube {
    pub fn new(height: usize, width: usize, bands: usize, values: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::Data(format!("cube dimensions must be positive, got {height}×{width}×{bands}")));
        }
        if values.len() != height * width * bands {
            return Err(Error::Data(format!(
                "cube {height}×{width}×{bands} needs {} values, got {}",
                height * width * bands,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at element {i}")));
        }
        Ok(Self { height, width, bands, values })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Spectrum at `(row, col)`.
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.bands;
        &self.values[start..start + self.bands]
    }
}

/// Per-pixel ground truth; 0 marks unlabeled background.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelRaster {
    height: usize,
    width: usize,
    labels: Vec<u16>,
}

impl LabelRaster {
    pub fn new(height: usize, width: usize, labels: Vec<u16>) -> Result<Self> {
        if height == 0 || width == 0 || labels.len() != height * width {
            return Err(Error::Data(format!(
                "label raster {height}×{width} needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        Ok(Self { height, width, labels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.labels[row * self.width + col]
    }

    /// Largest label present (the class count K for a contiguous raster).
    pub fn max_label(&self) -> u16 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// Pixel count per class `1..=K`, index 0 holding class 1.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.max_label() as usize];
        for &l in &self.labels {
            if l != 0 {
                counts[l as usize - 1] += 1;
            }
        }
        counts
    }

    /// Checks that labeled classes form the contiguous range `1..=K`.
    pub fn validate_contiguous(&self) -> Result<usize> {
        let counts = self.class_counts();
        if counts.is_empty() {
            return Err(Error::Data("label raster has no labeled pixels".into()));
        }
        if let Some(k) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Data(format!("class {} has no pixels; labels must cover 1..={}", k + 1, counts.len())));
        }
        Ok(counts.len())
    }

    pub fn check_matches(&self, cube: &HsiCube) -> Result<()> {
        if self.height != cube.height() || self.width != cube.width() {
            return Err(Error::Data(format!(
                "label raster is {}×{} but cube is {}×{}",
                self.height,
                self.width,
                cube.height(),
                cube.width()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_values() {
        assert!(HsiCube::new(1, 1, 2, vec![0.0, f32::NAN]).is_err());
        assert!(HsiCube::new(1, 1, 2, vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn gaps_in_class_range_are_reported() {
        let r = LabelRaster::new(1, 4, vec![0, 1, 3, 3]).unwrap();
        assert!(r.validate_contiguous().is_err());
        let r = LabelRaster::new(1, 4, vec![0, 1, 2, 2]).unwrap();
        assert_eq!(r.validate_contiguous().unwrap(), 2);
        assert_eq!(r.class_counts(), vec![1, 2]);
    }
}
