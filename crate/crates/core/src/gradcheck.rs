//! Finite-difference verification of reverse-mode gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Var};
use crate::error::Result;
use crate::tensor::Tensor;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Default pass threshold on the maximum relative error.
pub const THRESHOLD: f64 = 1e-4;
/// Gradient magnitudes below this are compared absolutely.
pub const MAGNITUDE_FLOOR: f64 = 1e-4;

/// Outcome of a gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest relative error over every checked entry.
    pub max_rel_err: f64,
    /// Max relative error per input tensor.
    pub per_input: Vec<f64>,
    /// `(input, flat index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    /// Number of entries compared.
    pub checked: usize,
    /// Set when any analytic or numeric gradient is NaN/Inf.
    pub non_finite: bool,
}

impl GradCheckReport {
    pub fn passes(&self, threshold: f64) -> bool {
        !self.non_finite && self.max_rel_err < threshold
    }
}

/// `|a − n| / max(|a|, |n|, MAGNITUDE_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Options for [`grad_check_with`].
#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub seed: u64,
    pub step: f64,
    /// Evaluate in training mode (batch statistics, fixed dropout masks).
    pub training: bool,
    /// Check at most this many randomly chosen entries per input.
    pub max_entries_per_input: Option<usize>,
}

impl GradCheckOptions {
    pub fn new(seed: u64) -> Self {
        Self { seed, step: FD_STEP, training: true, max_entries_per_input: None }
    }
}

/// Checks every entry of every input with default options.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    grad_check_with(f, inputs, GradCheckOptions::new(seed))
}

/// Compares the reverse-mode gradient of `Σ r ⊙ f(inputs)` (with `r` a
/// seeded random projection of the output) against central differences.
pub fn grad_check_with<F>(f: F, inputs: &[Tensor<f64>], opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15);
    let graph = || {
        if opts.training {
            Graph::training(opts.seed)
        } else {
            Graph::new()
        }
    };

    // Analytic pass; the projection is fixed from the output shape.
    let mut g = graph();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let proj = Tensor::<f64>::from_fn(g.shape(out), |_| rng.gen_range(-1.0..1.0));
    let grads = g.backward_with(out, proj.clone())?;

    let loss = |ins: &[Tensor<f64>]| -> Result<f64> {
        let mut g = graph();
        let vars: Vec<Var> = ins.iter().map(|t| g.input(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).data().iter().zip(proj.data()).map(|(a, b)| a * b).sum())
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        per_input: vec![0.0; inputs.len()],
        worst: None,
        checked: 0,
        non_finite: false,
    };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[i]).cloned().unwrap_or_else(|| Tensor::zeros(input.shape()));
        let entries: Vec<usize> = match opts.max_entries_per_input {
            Some(m) if m < input.numel() => sample(&mut rng, input.numel(), m).into_vec(),
            _ => (0..input.numel()).collect(),
        };
        for j in entries {
            let x0 = input.data()[j];
            work[i].data_mut()[j] = x0 + opts.step;
            let up = loss(&work)?;
            work[i].data_mut()[j] = x0 - opts.step;
            let down = loss(&work)?;
            work[i].data_mut()[j] = x0;
            let numeric = (up - down) / (2.0 * opts.step);
            let a = analytic.data()[j];
            report.checked += 1;
            if !a.is_finite() || !numeric.is_finite() {
                report.non_finite = true;
                report.max_rel_err = f64::INFINITY;
                report.worst = Some((i, j));
                continue;
            }
            let err = relative_error(a, numeric);
            report.per_input[i] = report.per_input[i].max(err);
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((i, j));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catches_a_wrong_gradient() {
        // Forward is x², backward claims x: the check must fail.
        let bad = |g: &mut Graph<f64>, v: &[Var]| -> Result<Var> {
            let y = g.value(v[0]).map(|x| x * x);
            Ok(g.push(y, vec![v[0]], Box::new(|a| vec![Some(a.inputs[0].clone())])))
        };
        let x = Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
        let r = grad_check(bad, &[x.clone()], 1).unwrap();
        assert!(!r.passes(THRESHOLD));

        let good = |g: &mut Graph<f64>, v: &[Var]| g.mul(v[0], v[0]);
        assert!(grad_check(good, &[x], 1).unwrap().passes(THRESHOLD));
    }

    #[test]
    fn non_finite_gradient_is_hard_failure() {
        let nan = |g: &mut Graph<f64>, v: &[Var]| -> Result<Var> {
            let y = g.value(v[0]).clone();
            Ok(g.push(y, vec![v[0]], Box::new(|a| vec![Some(a.grad.map(|_| f64::NAN))])))
        };
        let r = grad_check(nan, &[Tensor::ones(&[2])], 0).unwrap();
        assert!(r.non_finite);
        assert!(!r.passes(1.0));
    }
}
