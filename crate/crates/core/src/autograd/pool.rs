use super::{Graph, Var};
use crate::error::{dim_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Which spatial axis survives a directional pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolAxis {
    /// Reduce over width, one value per row: `C×H`.
    Horizontal,
    /// Reduce over height, one value per column: `C×W`.
    Vertical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    Avg,
    Max,
}

/// Reduces each `(group, slot)` span listed by `members` with avg or max,
/// recording argmax positions for the backward pass.
fn reduce_spans<T: Scalar>(
    x: &[T],
    spans: usize,
    members: impl Fn(usize) -> Vec<usize>,
    mode: PoolMode,
) -> (Vec<T>, Vec<Vec<usize>>, Vec<usize>) {
    let mut out = Vec::with_capacity(spans);
    let mut index = Vec::with_capacity(spans);
    let mut arg = Vec::with_capacity(spans);
    for s in 0..spans {
        let m = members(s);
        match mode {
            PoolMode::Avg => {
                let sum: T = m.iter().map(|&i| x[i]).sum();
                out.push(sum / T::of(m.len() as f64));
                arg.push(0);
            }
            PoolMode::Max => {
                let mut best = m[0];
                for &i in &m[1..] {
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
        index.push(m);
    }
    (out, index, arg)
}

fn spatial_dims(shape: &[usize], op: &str) -> Result<(usize, usize, usize, usize, bool)> {
    match *shape {
        [c, h, w] => Ok((1, c, h, w, true)),
        [n, c, h, w] => Ok((n, c, h, w, false)),
        _ => dim_err(format!("{op}: input must be rank 3 or 4, got {shape:?}")),
    }
}

impl<T: Scalar> Graph<T> {
    fn pool_op(
        &mut self,
        x: Var,
        out_shape: Vec<usize>,
        spans: usize,
        members: impl Fn(usize) -> Vec<usize>,
        mode: PoolMode,
    ) -> Var {
        let (out, index, arg) = reduce_spans(self.value(x).data(), spans, members, mode);
        let in_shape = self.shape(x).to_vec();
        self.push(
            Tensor::from_parts(out_shape, out),
            vec![x],
            Box::new(move |args| {
                let g = args.grad.data();
                let mut gx = vec![T::zero(); in_shape.iter().product()];
                for (s, &gv) in g.iter().enumerate() {
                    match mode {
                        PoolMode::Avg => {
                            let share = gv / T::of(index[s].len() as f64);
                            for &i in &index[s] {
                                gx[i] += share;
                            }
                        }
                        PoolMode::Max => gx[arg[s]] += gv,
                    }
                }
                vec![Some(Tensor::from_parts(in_shape.clone(), gx))]
            }),
        )
    }

    /// 1-D global pooling along one spatial axis of `N×C×H×W` (or `C×H×W`).
    ///
    /// Horizontal yields `N×C×H` (reduce over W); vertical yields `N×C×W`.
    /// Max routes its gradient to the first maximal element.
    pub fn directional_pool(&mut self, x: Var, axis: PoolAxis, mode: PoolMode) -> Result<Var> {
        let (n, c, h, w, unbatched) = spatial_dims(self.shape(x), "directional_pool")?;
        let keep = match axis {
            PoolAxis::Horizontal => h,
            PoolAxis::Vertical => w,
        };
        let out_shape = if unbatched { vec![c, keep] } else { vec![n, c, keep] };
        let members = move |s: usize| -> Vec<usize> {
            let (plane, pos) = (s / keep, s % keep);
            let base = plane * h * w;
            match axis {
                PoolAxis::Horizontal => (0..w).map(|j| base + pos * w + j).collect(),
                PoolAxis::Vertical => (0..h).map(|i| base + i * w + pos).collect(),
            }
        };
        Ok(self.pool_op(x, out_shape, n * c * keep, members, mode))
    }

    /// Per-channel reduction over all spatial positions: `N×C×H×W → N×C`.
    pub fn global_pool2d(&mut self, x: Var, mode: PoolMode) -> Result<Var> {
        let (n, c, h, w, unbatched) = spatial_dims(self.shape(x), "global_pool2d")?;
        let out_shape = if unbatched { vec![c] } else { vec![n, c] };
        let hw = h * w;
        Ok(self.pool_op(x, out_shape, n * c, move |s| (s * hw..(s + 1) * hw).collect(), mode))
    }
}
