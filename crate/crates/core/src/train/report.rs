use std::fmt;

use crate::model::Model;
use crate::scalar::Scalar;

/// Trainable scalar counts grouped by component (the parameter-name prefix
/// before the first dot).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamReport {
    pub components: Vec<(String, usize)>,
    pub total: usize,
}

pub fn param_report<T: Scalar>(model: &Model<T>) -> ParamReport {
    let mut components: Vec<(String, usize)> = Vec::new();
    for e in model.store().entries().iter().filter(|e| e.trainable) {
        let key = e.name.split('.').next().unwrap_or(&e.name).to_string();
        match components.iter_mut().find(|(k, _)| *k == key) {
            Some((_, n)) => *n += e.tensor.numel(),
            None => components.push((key, e.tensor.numel())),
        }
    }
    let total = components.iter().map(|(_, n)| n).sum();
    ParamReport { components, total }
}

impl ParamReport {
    pub fn get(&self, component: &str) -> Option<usize> {
        self.components.iter().find(|(k, _)| k == component).map(|(_, n)| *n)
    }
}

impl fmt::Display for ParamReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, n) in &self.components {
            writeln!(f, "{k:<12} {n:>10}")?;
        }
        write!(f, "{:<12} {:>10} ({:.2}k)", "total", self.total, self.total as f64 / 1000.0)
    }
}
