use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `K×K` tally with rows indexed by true class and columns by prediction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { classes, counts: vec![0; classes * classes] }
    }

    /// From row-major counts.
    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::Dimension(format!("{} counts cannot form a {classes}×{classes} matrix", counts.len())));
        }
        Ok(Self { classes, counts })
    }

    pub fn from_pairs(classes: usize, truth: &[usize], pred: &[usize]) -> Self {
        let mut m = Self::new(classes);
        for (&t, &p) in truth.iter().zip(pred) {
            m.add(t, p);
        }
        m
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth * self.classes + pred] += 1;
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|k| self.get(k, k)).sum()
    }

    pub fn row_sum(&self, k: usize) -> u64 {
        self.counts[k * self.classes..(k + 1) * self.classes].iter().sum()
    }

    pub fn col_sum(&self, k: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, k)).sum()
    }

    /// OA, AA, κ and per-class recall.
    ///
    /// Classes without reference samples get recall 0 and are left out of
    /// AA. When chance agreement is 1 (a single populated class), κ is 1 for
    /// perfect agreement and 0 otherwise.
    pub fn metrics(&self) -> MetricsReport {
        let total = self.total() as f64;
        let oa = if total > 0.0 { self.trace() as f64 / total } else { 0.0 };
        let per_class: Vec<f64> = (0..self.classes)
            .map(|k| match self.row_sum(k) {
                0 => 0.0,
                n => self.get(k, k) as f64 / n as f64,
            })
            .collect();
        let populated: Vec<f64> = (0..self.classes).filter(|&k| self.row_sum(k) > 0).map(|k| per_class[k]).collect();
        let aa = if populated.is_empty() { 0.0 } else { populated.iter().sum::<f64>() / populated.len() as f64 };
        let pe = if total > 0.0 {
            (0..self.classes).map(|k| self.row_sum(k) as f64 * self.col_sum(k) as f64).sum::<f64>() / (total * total)
        } else {
            0.0
        };
        let kappa = if pe < 1.0 {
            (oa - pe) / (1.0 - pe)
        } else if oa == 1.0 {
            1.0
        } else {
            0.0
        };
        MetricsReport { samples: self.total(), oa, aa, kappa, per_class }
    }

    /// Comma-separated rows, one per true class.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("truth");
        for k in 1..=self.classes {
            s.push_str(&format!(",pred{k}"));
        }
        s.push('\n');
        for t in 0..self.classes {
            s.push_str(&(t + 1).to_string());
            for p in 0..self.classes {
                s.push_str(&format!(",{}", self.get(t, p)));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: u64,
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
    /// Recall of class `k+1`.
    pub per_class: Vec<f64>,
}

impl MetricsReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain numeric report serializes")
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "OA {:.2}%  AA {:.2}%  kappa {:.4}  ({} samples)",
            100.0 * self.oa,
            100.0 * self.aa,
            self.kappa,
            self.samples
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_class_example() {
        let m = ConfusionMatrix::from_counts(2, vec![50, 10, 5, 35]).unwrap();
        let r = m.metrics();
        assert!((r.oa - 0.85).abs() < 1e-12);
        let pe = (60.0 * 55.0 + 40.0 * 45.0) / 100.0f64.powi(2);
        assert!((pe - 0.51).abs() < 1e-12);
        assert!((r.kappa - 0.34 / 0.49).abs() < 1e-12);
        assert!((r.kappa - 0.6939).abs() < 1e-4);
        assert!((r.aa - (50.0 / 60.0 + 35.0 / 40.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_is_perfect() {
        let m = ConfusionMatrix::from_counts(3, vec![4, 0, 0, 0, 7, 0, 0, 0, 1]).unwrap();
        let r = m.metrics();
        assert_eq!((r.oa, r.aa, r.kappa), (1.0, 1.0, 1.0));
        assert_eq!(r.per_class.len(), 3);
    }

    #[test]
    fn chance_agreement_has_zero_kappa() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut m = ConfusionMatrix::new(2);
        for _ in 0..10_000 {
            m.add(rng.gen_range(0..2), rng.gen_range(0..2));
        }
        assert!(m.metrics().kappa.abs() < 0.05);
    }

    #[test]
    fn csv_layout() {
        let m = ConfusionMatrix::from_pairs(2, &[0, 1, 1], &[0, 0, 1]);
        assert_eq!(m.to_csv(), "truth,pred1,pred2\n1,1,0\n2,1,1\n");
    }
}
