use super::elementwise::softmax_in_place;
use super::{Graph, Var};
use crate::error::{dim_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

impl<T: Scalar> Graph<T> {
    /// Mean cross-entropy of softmaxed `N×K` logits against class indices.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        let &[n, k] = shape.as_slice() else {
            return dim_err(format!("cross_entropy logits must be N×K, got {shape:?}"));
        };
        if targets.len() != n {
            return dim_err(format!("cross_entropy: {n} rows but {} targets", targets.len()));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
            return dim_err(format!("cross_entropy: target {bad} out of range for {k} classes"));
        }
        let mut probs = self.value(logits).data().to_vec();
        let mut loss = T::zero();
        for (row, &t) in probs.chunks_mut(k).zip(targets) {
            softmax_in_place(row);
            loss -= row[t].max(T::min_positive_value()).ln();
        }
        let nn = T::of(n as f64);
        let targets = targets.to_vec();
        Ok(self.push(
            Tensor::scalar(loss / nn),
            vec![logits],
            Box::new(move |args| {
                let g = args.grad.item() / nn;
                let mut d = probs.clone();
                for (row, &t) in d.chunks_mut(k).zip(&targets) {
                    row[t] -= T::one();
                    row.iter_mut().for_each(|v| *v *= g);
                }
                vec![Some(Tensor::from_parts(shape.clone(), d))]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_k() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::zeros(&[3, 4]));
        let l = g.cross_entropy(x, &[0, 1, 3]).unwrap();
        assert!((g.value(l).item() - 4f64.ln()).abs() < 1e-12);
        let grads = g.backward(l).unwrap();
        let d = grads.get(x).unwrap();
        assert!((d.at(&[0, 0]) - (0.25 - 1.0) / 3.0).abs() < 1e-12);
        assert!((d.at(&[0, 1]) - 0.25 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_target_rejected() {
        let mut g = Graph::<f32>::new();
        let x = g.param(Tensor::zeros(&[1, 2]));
        assert!(g.cross_entropy(x, &[2]).is_err());
    }
}
