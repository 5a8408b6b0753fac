//! Synthetic hyperspectral scenes with known class signatures.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::cube::{HsiCube, LabelRaster};
use crate::error::{Error, Result};

/// Tiled scene whose classes differ only by a Gaussian-shaped mean
/// spectrum plus i.i.d. Gaussian band noise.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub classes: usize,
    /// Side of the square tiles carrying one class each.
    pub tile: usize,
    /// Minimum pairwise Euclidean distance between class means, in units of
    /// the noise standard deviation.
    pub separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { height: 32, width: 32, bands: 16, classes: 4, tile: 16, separation: 3.0, noise_sigma: 0.1, seed: 0 }
    }
}

impl SynthSpec {
    /// Unscaled class signature: a Gaussian bump centered in the class's
    /// share of the band range.
    fn shape(&self, class: usize) -> Vec<f64> {
        let k = self.classes as f64;
        let center = (class as f64 + 0.5) * self.bands as f64 / k;
        let width = (self.bands as f64 / (2.0 * k)).max(0.5);
        (0..self.bands).map(|b| (-(b as f64 - center).powi(2) / (2.0 * width * width)).exp()).collect()
    }

    /// Class mean spectra, scaled so the closest pair sits exactly
    /// `separation·noise_sigma` apart.
    pub fn class_means(&self) -> Vec<Vec<f64>> {
        let shapes: Vec<Vec<f64>> = (0..self.classes).map(|k| self.shape(k)).collect();
        let mut min_dist = f64::INFINITY;
        for i in 0..self.classes {
            for j in i + 1..self.classes {
                let d: f64 = shapes[i].iter().zip(&shapes[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                min_dist = min_dist.min(d);
            }
        }
        let amplitude = self.separation * self.noise_sigma / min_dist;
        shapes.into_iter().map(|s| s.into_iter().map(|v| 0.5 + amplitude * v).collect()).collect()
    }

    /// Class (1-based) of the tile containing `(row, col)`.
    pub fn label_at(&self, row: usize, col: usize) -> u16 {
        let (tr, tc) = (row / self.tile, col / self.tile);
        ((tr + 2 * tc) % self.classes) as u16 + 1
    }

    pub fn generate(&self) -> Result<(HsiCube, LabelRaster)> {
        if self.classes < 2 || self.tile == 0 || self.noise_sigma <= 0.0 || self.separation <= 0.0 {
            return Err(Error::Config(format!("invalid synthetic scene {self:?}")));
        }
        let means = self.class_means();
        let noise = Normal::new(0.0, self.noise_sigma).expect("positive sigma");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut values = Vec::with_capacity(self.height * self.width * self.bands);
        let mut labels = Vec::with_capacity(self.height * self.width);
        for row in 0..self.height {
            for col in 0..self.width {
                let label = self.label_at(row, col);
                labels.push(label);
                for &m in &means[label as usize - 1] {
                    values.push((m + noise.sample(&mut rng)) as f32);
                }
            }
        }
        Ok((
            HsiCube::new(self.height, self.width, self.bands, values)?,
            LabelRaster::new(self.height, self.width, labels)?,
        ))
    }
}
