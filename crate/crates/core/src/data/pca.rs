//! Spectral reduction by principal component analysis.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::cube::HsiCube;
use crate::error::{Error, Result};

/// Fitted projection from `C` bands to `B` principal components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub bands: usize,
    pub retained: usize,
    /// Per-band mean, length `C`.
    pub mean: Vec<f64>,
    /// `C×B` row-major; column `j` is the `j`-th component.
    pub components: Vec<f64>,
    /// Eigenvalues of the covariance, descending, length `B`.
    pub explained_variance: Vec<f64>,
    /// Sum of all `C` eigenvalues.
    pub total_variance: f64,
    /// Factor applied to every score so the retained components have unit
    /// mean variance; keeps network inputs at a scale independent of the
    /// sensor's radiometric units.
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl PcaModel {
    /// Fits on every pixel of `cube`, treating each as a `C`-dim sample.
    pub fn fit(cube: &HsiCube, retained: usize) -> Result<Self> {
        let c = cube.bands();
        if retained == 0 || retained > c {
            return Err(Error::Config(format!("cannot retain {retained} components from {c} bands (need 1 ≤ B ≤ C)")));
        }
        let n = cube.pixels();
        if n < 2 {
            return Err(Error::Data("PCA needs at least two pixels".into()));
        }
        let mut mean = vec![0.0f64; c];
        for px in cube.values().chunks_exact(c) {
            for (m, &v) in mean.iter_mut().zip(px) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);

        let mut cov = vec![0.0f64; c * c];
        let mut centered = vec![0.0f64; c];
        for px in cube.values().chunks_exact(c) {
            for ((d, &v), &m) in centered.iter_mut().zip(px).zip(&mean) {
                *d = v as f64 - m;
            }
            for i in 0..c {
                let di = centered[i];
                for j in i..c {
                    cov[i * c + j] += di * centered[j];
                }
            }
        }
        let denom = (n - 1) as f64;
        for i in 0..c {
            for j in i..c {
                let v = cov[i * c + j] / denom;
                cov[i * c + j] = v;
                cov[j * c + i] = v;
            }
        }
        Self::from_covariance(mean, &cov, retained)
    }

    /// Builds the model from a precomputed `C×C` covariance.
    pub fn from_covariance(mean: Vec<f64>, cov: &[f64], retained: usize) -> Result<Self> {
        let c = mean.len();
        if cov.len() != c * c {
            return Err(Error::Dimension(format!("covariance must be {c}×{c}")));
        }
        if retained == 0 || retained > c {
            return Err(Error::Config(format!("cannot retain {retained} of {c} components")));
        }
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(c, c, cov));
        let mut order: Vec<usize> = (0..c).collect();
        // descending eigenvalue; stable on ties
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let total_variance = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        let mut components = vec![0.0f64; c * retained];
        let mut explained_variance = Vec::with_capacity(retained);
        for (j, &k) in order.iter().take(retained).enumerate() {
            let mut col: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            // sign: largest-magnitude entry positive, lowest index on ties
            let mut pivot = 0;
            for (i, v) in col.iter().enumerate() {
                if v.abs() > col[pivot].abs() {
                    pivot = i;
                }
            }
            if col[pivot] < 0.0 {
                col.iter_mut().for_each(|v| *v = -*v);
            }
            for (i, v) in col.into_iter().enumerate() {
                components[i * retained + j] = v;
            }
            explained_variance.push(eig.eigenvalues[k].max(0.0));
        }
        let mean_var = explained_variance.iter().sum::<f64>() / retained as f64;
        let scale = if mean_var > 0.0 { 1.0 / mean_var.sqrt() } else { 1.0 };
        Ok(Self { bands: c, retained, mean, components, explained_variance, total_variance, scale })
    }

    /// Fraction of total variance captured by each retained component.
    pub fn explained_ratio(&self) -> Vec<f64> {
        if self.total_variance <= 0.0 {
            return vec![0.0; self.retained];
        }
        self.explained_variance.iter().map(|v| v / self.total_variance).collect()
    }

    /// Scaled scores of one spectrum on the retained components.
    pub fn project(&self, spectrum: &[f32]) -> Vec<f64> {
        let b = self.retained;
        let mut out = vec![0.0; b];
        for (i, (&v, &m)) in spectrum.iter().zip(&self.mean).enumerate() {
            let d = v as f64 - m;
            for (o, &w) in out.iter_mut().zip(&self.components[i * b..(i + 1) * b]) {
                *o += d * w;
            }
        }
        out.iter_mut().for_each(|o| *o *= self.scale);
        out
    }

    /// Maps scaled scores back to centered band space.
    pub fn back_project(&self, scores: &[f64]) -> Vec<f64> {
        let b = self.retained;
        (0..self.bands)
            .map(|i| self.components[i * b..(i + 1) * b].iter().zip(scores).map(|(w, s)| w * s / self.scale).sum())
            .collect()
    }

    /// Reduced cube `H×W×B`.
    pub fn transform(&self, cube: &HsiCube) -> Result<HsiCube> {
        if cube.bands() != self.bands {
            return Err(Error::Dimension(format!("PCA fitted on {} bands, cube has {}", self.bands, cube.bands())));
        }
        let mut values = Vec::with_capacity(cube.pixels() * self.retained);
        for px in cube.values().chunks_exact(self.bands) {
            values.extend(self.project(px).into_iter().map(|v| v as f32));
        }
        HsiCube::new(cube.height(), cube.width(), self.retained, values)
    }
}

/// Fits PCA on all pixels and returns the model with the reduced cube.
pub fn pca_reduce(cube: &HsiCube, retained: usize) -> Result<(PcaModel, HsiCube)> {
    let model = PcaModel::fit(cube, retained)?;
    let reduced = model.transform(cube)?;
    Ok((model, reduced))
}
