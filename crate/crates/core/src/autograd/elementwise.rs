use rand::Rng;

use super::{Graph, Var};
use crate::error::{dim_err, Result};
use crate::scalar::Scalar;
use crate::tensor::{strides, Tensor};

/// Per-output-element offsets into an operand broadcast to `out`.
fn broadcast_offsets(out: &[usize], operand: &[usize]) -> Vec<usize> {
    let os = strides(operand);
    let eff: Vec<usize> = operand.iter().zip(&os).map(|(&d, &s)| if d == 1 { 0 } else { s }).collect();
    let n: usize = out.iter().product();
    let mut offsets = Vec::with_capacity(n);
    let mut idx = vec![0usize; out.len()];
    let mut off = 0usize;
    for _ in 0..n {
        offsets.push(off);
        for ax in (0..out.len()).rev() {
            idx[ax] += 1;
            off += eff[ax];
            if idx[ax] < out[ax] {
                break;
            }
            off -= eff[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    offsets
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return dim_err(format!("cannot broadcast {a:?} with {b:?}: rank differs"));
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| match (x, y) {
            _ if x == y => Ok(x),
            (1, _) => Ok(y),
            (_, 1) => Ok(x),
            _ => dim_err(format!("cannot broadcast {a:?} with {b:?}")),
        })
        .collect()
}

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
}

impl<T: Scalar> Graph<T> {
    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return dim_err(format!("{op}: shapes {:?} and {:?} differ", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn binary(&mut self, a: Var, b: Var, op: Binary) -> Result<Var> {
        let shape = broadcast_shape(self.shape(a), self.shape(b))?;
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let fast = sa == sb;
        let (oa, ob) = if fast {
            (Vec::new(), Vec::new())
        } else {
            (broadcast_offsets(&shape, &sa), broadcast_offsets(&shape, &sb))
        };
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let f = |x: T, y: T| match op {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
        };
        let out: Vec<T> = if fast {
            va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect()
        } else {
            oa.iter().zip(&ob).map(|(&i, &j)| f(va[i], vb[j])).collect()
        };
        Ok(self.push(
            Tensor::from_parts(shape, out),
            vec![a, b],
            Box::new(move |args| {
                let g = args.grad.data();
                let (xa, xb) = (args.inputs[0].data(), args.inputs[1].data());
                let mut ga = vec![T::zero(); xa.len()];
                let mut gb = vec![T::zero(); xb.len()];
                for k in 0..g.len() {
                    let (i, j) = if fast { (k, k) } else { (oa[k], ob[k]) };
                    match op {
                        Binary::Add => {
                            ga[i] += g[k];
                            gb[j] += g[k];
                        }
                        Binary::Sub => {
                            ga[i] += g[k];
                            gb[j] -= g[k];
                        }
                        Binary::Mul => {
                            ga[i] += g[k] * xb[j];
                            gb[j] += g[k] * xa[i];
                        }
                    }
                }
                vec![Some(Tensor::from_parts(sa.clone(), ga)), Some(Tensor::from_parts(sb.clone(), gb))]
            }),
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        self.binary(a, b, Binary::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        self.binary(a, b, Binary::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        self.binary(a, b, Binary::Mul)
    }

    /// Addition with size-1 broadcasting over equal-rank operands.
    pub fn add_bcast(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Add)
    }

    /// Multiplication with size-1 broadcasting over equal-rank operands.
    pub fn mul_bcast(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Mul)
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, df: impl Fn(T, T) -> T + 'static) -> Var {
        let out = self.value(x).map(f);
        self.push(
            out,
            vec![x],
            Box::new(move |args| {
                let (g, xi, y) = (args.grad.data(), args.inputs[0].data(), args.output.data());
                let gx = g.iter().zip(xi.iter().zip(y)).map(|(&g, (&x, &y))| g * df(x, y)).collect();
                vec![Some(Tensor::from_parts(args.grad.shape().to_vec(), gx))]
            }),
        )
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        self.unary(x, move |v| v * c, move |_, _| c)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| if v > T::zero() { v } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, |_, y| y * (T::one() - y))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, gelu, gelu_grad)
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let shape = self.shape(x).to_vec();
        let width = *shape.last().expect("tensor has rank >= 1");
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(width) {
            softmax_in_place(row);
        }
        self.push(
            Tensor::from_parts(shape.clone(), out),
            vec![x],
            Box::new(move |args| {
                let (g, y) = (args.grad.data(), args.output.data());
                let mut gx = vec![T::zero(); g.len()];
                for ((gr, yr), dr) in g.chunks(width).zip(y.chunks(width)).zip(gx.chunks_mut(width)) {
                    let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    for ((d, &gv), &yv) in dr.iter_mut().zip(gr).zip(yr) {
                        *d = yv * (gv - dot);
                    }
                }
                vec![Some(Tensor::from_parts(shape.clone(), gx))]
            }),
        )
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let shape = self.shape(x).to_vec();
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), vec![x], Box::new(move |args| vec![Some(Tensor::full(&shape, args.grad.item()))]))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel();
        let s = self.sum(x);
        self.scale(s, T::one() / T::of(n as f64))
    }

    /// Inverted dropout; identity outside training mode or when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64) -> Var {
        if !self.is_training() || p <= 0.0 {
            return x;
        }
        let keep = T::of(1.0 / (1.0 - p));
        let n = self.value(x).numel();
        let mask: Vec<T> = (0..n).map(|_| if self.rng().gen::<f64>() < p { T::zero() } else { keep }).collect();
        let shape = self.shape(x).to_vec();
        let out = self.value(x).data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        self.push(
            Tensor::from_parts(shape.clone(), out),
            vec![x],
            Box::new(move |args| {
                let gx = args.grad.data().iter().zip(&mask).map(|(&g, &m)| g * m).collect();
                vec![Some(Tensor::from_parts(shape.clone(), gx))]
            }),
        )
    }

    /// `Σ_i weights[i] · sources[i]` for a length-L weight vector and L
    /// equally shaped sources.
    pub fn weighted_sum(&mut self, weights: Var, sources: &[Var]) -> Result<Var> {
        if self.value(weights).numel() != sources.len() || sources.is_empty() {
            return dim_err(format!(
                "weighted_sum: {} weights for {} sources",
                self.value(weights).numel(),
                sources.len()
            ));
        }
        let shape = self.shape(sources[0]).to_vec();
        for &s in sources {
            if self.shape(s) != shape.as_slice() {
                return dim_err(format!("weighted_sum: source shape {:?} differs from {shape:?}", self.shape(s)));
            }
        }
        let w = self.value(weights).data().to_vec();
        let mut out = vec![T::zero(); shape.iter().product()];
        for (&wi, &s) in w.iter().zip(sources) {
            for (o, &v) in out.iter_mut().zip(self.value(s).data()) {
                *o += wi * v;
            }
        }
        let mut parents = vec![weights];
        parents.extend_from_slice(sources);
        let wshape = self.shape(weights).to_vec();
        Ok(self.push(
            Tensor::from_parts(shape.clone(), out),
            parents,
            Box::new(move |args| {
                let g = args.grad.data();
                let w = args.inputs[0].data();
                let mut res = Vec::with_capacity(args.inputs.len());
                let gw = args.inputs[1..].iter().map(|s| s.data().iter().zip(g).map(|(&a, &b)| a * b).sum()).collect();
                res.push(Some(Tensor::from_parts(wshape.clone(), gw)));
                for (i, &wi) in w.iter().enumerate() {
                    res.push(
                        args.needs[i + 1]
                            .then(|| Tensor::from_parts(shape.clone(), g.iter().map(|&x| x * wi).collect())),
                    );
                }
                res
            }),
        ))
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub fn gelu<T: Scalar>(x: T) -> T {
    let inner = T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x);
    T::of(0.5) * x * (T::one() + inner.tanh())
}

pub fn gelu_grad<T: Scalar>(x: T, _y: T) -> T {
    let inner = T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x);
    let t = inner.tanh();
    let dinner = T::of(GELU_C) * (T::one() + T::of(3.0 * GELU_A) * x * x);
    T::of(0.5) * (T::one() + t) + T::of(0.5) * x * (T::one() - t * t) * dinner
}

/// Numerically stable softmax of one span.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut z = T::zero();
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        z += *v;
    }
    for v in row.iter_mut() {
        *v /= z;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_derivative_at_zero_is_a_quarter() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::scalar(0.0));
        let y = g.sigmoid(x);
        assert_eq!(g.value(y).item(), 0.5);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 0.25);
    }

    #[test]
    fn broadcast_mul_sums_gradient_over_expanded_axes() {
        let mut g = Graph::<f64>::new();
        let a = g.param(Tensor::from_fn(&[2, 3], |i| i as f64));
        let b = g.param(Tensor::new(vec![2, 1], vec![2.0, -1.0]).unwrap());
        let y = g.mul_bcast(a, b).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 2.0, 4.0, -3.0, -4.0, -5.0]);
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(b).unwrap().data(), &[3.0, 12.0]);
        assert_eq!(grads.get(a).unwrap().data(), &[2.0, 2.0, 2.0, -1.0, -1.0, -1.0]);
    }

    #[test]
    fn incompatible_broadcast_is_a_dimension_error() {
        let mut g = Graph::<f32>::new();
        let a = g.input(Tensor::zeros(&[2, 3]));
        let b = g.input(Tensor::zeros(&[2, 2]));
        assert!(g.add_bcast(a, b).is_err());
        assert!(g.add(a, b).is_err());
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let mut row = vec![0.3f64, -1.2, 2.5, 0.0];
        let mut shifted: Vec<f64> = row.iter().map(|v| v + 100.0).collect();
        softmax_in_place(&mut row);
        softmax_in_place(&mut shifted);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in row.iter().zip(&shifted) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_is_identity_in_inference() {
        let mut g = Graph::<f32>::new();
        let x = g.input(Tensor::ones(&[10]));
        assert_eq!(g.dropout(x, 0.5), x);
        let mut g = Graph::<f32>::training(3);
        let x = g.input(Tensor::ones(&[1000]));
        let y = g.dropout(x, 0.1);
        let kept = g.value(y).data().iter().filter(|&&v| v > 0.0).count();
        assert!((850..=950).contains(&kept));
    }
}
