use super::elementwise::softmax_in_place;
use super::{Graph, Var};
use crate::error::{config_err, dim_err, Result};
use crate::kernels::{gemm_nn, gemm_nt, gemm_tn};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Copies head `h` (columns `h·dk..(h+1)·dk`) of a `T×D` block.
fn gather_head<T: Scalar>(src: &[T], t: usize, d: usize, h: usize, dk: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(t * dk);
    for r in 0..t {
        out.extend_from_slice(&src[r * d + h * dk..r * d + (h + 1) * dk]);
    }
    out
}

fn scatter_head<T: Scalar>(dst: &mut [T], part: &[T], t: usize, d: usize, h: usize, dk: usize) {
    for r in 0..t {
        for (o, &v) in dst[r * d + h * dk..r * d + (h + 1) * dk].iter_mut().zip(&part[r * dk..(r + 1) * dk]) {
            *o += v;
        }
    }
}

impl<T: Scalar> Graph<T> {
    /// Scaled dot-product attention `softmax(QKᵀ/√d)·V` for `N×d` operands.
    pub fn attention_core(&mut self, q: Var, k: Var, v: Var) -> Result<Var> {
        self.multi_head_attention(q, k, v, 1).map(|(out, _)| out)
    }

    /// Multi-head scaled dot-product attention over `B×T×D` (or `T×D`)
    /// projections, splitting `D` into `heads` contiguous slices of width
    /// `D/heads`. Returns the concatenated head outputs and the attention
    /// probabilities `B×heads×T×T`.
    pub fn multi_head_attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<(Var, Tensor<T>)> {
        let shape = self.shape(q).to_vec();
        if self.shape(k) != shape.as_slice() || self.shape(v) != shape.as_slice() {
            return dim_err(format!("attention operands differ: {shape:?}, {:?}, {:?}", self.shape(k), self.shape(v)));
        }
        let (b, t, d) = match *shape.as_slice() {
            [t, d] => (1, t, d),
            [b, t, d] => (b, t, d),
            _ => return dim_err(format!("attention operands must be rank 2 or 3, got {shape:?}")),
        };
        if heads == 0 || d % heads != 0 {
            return config_err(format!("attention: width {d} not divisible by {heads} heads"));
        }
        let dk = d / heads;
        let scale = T::one() / T::of(dk as f64).sqrt();
        let (qv, kv, vv) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut out = vec![T::zero(); b * t * d];
        let mut probs = vec![T::zero(); b * heads * t * t];
        for n in 0..b {
            let blk = n * t * d..(n + 1) * t * d;
            for h in 0..heads {
                let qh = gather_head(&qv[blk.clone()], t, d, h, dk);
                let kh = gather_head(&kv[blk.clone()], t, d, h, dk);
                let vh = gather_head(&vv[blk.clone()], t, d, h, dk);
                let a = &mut probs[(n * heads + h) * t * t..(n * heads + h + 1) * t * t];
                gemm_nt(t, dk, t, &qh, &kh, a);
                for row in a.chunks_mut(t) {
                    row.iter_mut().for_each(|s| *s *= scale);
                    softmax_in_place(row);
                }
                let mut oh = vec![T::zero(); t * dk];
                gemm_nn(t, t, dk, a, &vh, &mut oh);
                scatter_head(&mut out[blk.clone()], &oh, t, d, h, dk);
            }
        }
        let saved = probs.clone();
        let var = self.push(
            Tensor::from_parts(shape.clone(), out),
            vec![q, k, v],
            Box::new(move |args| {
                let g = args.grad.data();
                let (qv, kv, vv) = (args.inputs[0].data(), args.inputs[1].data(), args.inputs[2].data());
                let mut dq = vec![T::zero(); qv.len()];
                let mut dk_ = vec![T::zero(); kv.len()];
                let mut dv = vec![T::zero(); vv.len()];
                for n in 0..b {
                    let blk = n * t * d..(n + 1) * t * d;
                    for h in 0..heads {
                        let a = &saved[(n * heads + h) * t * t..(n * heads + h + 1) * t * t];
                        let gh = gather_head(&g[blk.clone()], t, d, h, dk);
                        let qh = gather_head(&qv[blk.clone()], t, d, h, dk);
                        let kh = gather_head(&kv[blk.clone()], t, d, h, dk);
                        let vh = gather_head(&vv[blk.clone()], t, d, h, dk);
                        // dV = Aᵀ·dO
                        let mut dvh = vec![T::zero(); t * dk];
                        gemm_tn(t, t, dk, a, &gh, &mut dvh);
                        // dA = dO·Vᵀ, then through the row softmax
                        let mut da = vec![T::zero(); t * t];
                        gemm_nt(t, dk, t, &gh, &vh, &mut da);
                        for (dr, ar) in da.chunks_mut(t).zip(a.chunks(t)) {
                            let dot: T = dr.iter().zip(ar).map(|(&x, &y)| x * y).sum();
                            for (x, &y) in dr.iter_mut().zip(ar) {
                                *x = y * (*x - dot) * scale;
                            }
                        }
                        let mut dqh = vec![T::zero(); t * dk];
                        gemm_nn(t, t, dk, &da, &kh, &mut dqh);
                        let mut dkh = vec![T::zero(); t * dk];
                        gemm_tn(t, t, dk, &da, &qh, &mut dkh);
                        scatter_head(&mut dq[blk.clone()], &dqh, t, d, h, dk);
                        scatter_head(&mut dk_[blk.clone()], &dkh, t, d, h, dk);
                        scatter_head(&mut dv[blk.clone()], &dvh, t, d, h, dk);
                    }
                }
                vec![
                    Some(Tensor::from_parts(shape.clone(), dq)),
                    Some(Tensor::from_parts(shape.clone(), dk_)),
                    Some(Tensor::from_parts(shape.clone(), dv)),
                ]
            }),
        );
        Ok((var, Tensor::from_parts(vec![b, heads, t, t], probs)))
    }
}
