//! Same-padded, stride-1 convolutions (cross-correlation, zero fill).

use super::{Graph, Var};
use crate::error::{dim_err, Result};
use crate::kernels::{gemm_nn, gemm_nt, gemm_tn};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Unfolds one `c×h×w` sample into a `(c·k·k)×(h·w)` column matrix.
fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, k: usize, col: &mut [T]) {
    let pad = (k - 1) / 2;
    let hw = h * w;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad as isize;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &x[ci * hw + sy as usize * w..][..w];
                    for (xo, d) in dst.iter_mut().enumerate() {
                        let sx = xo as isize + kx as isize - pad as isize;
                        *d = if sx < 0 || sx >= w as isize { T::zero() } else { src[sx as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the sample.
fn col2im<T: Scalar>(col: &[T], c: usize, h: usize, w: usize, k: usize, dx: &mut [T]) {
    let pad = (k - 1) / 2;
    let hw = h * w;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ci * k + ky) * k + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut dx[ci * hw + sy as usize * w..][..w];
                    for xo in 0..w {
                        let sx = xo as isize + kx as isize - pad as isize;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] += row[y * w + xo];
                        }
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Graph<T> {
    /// 2-D convolution preserving spatial size.
    ///
    /// `x` is `N×C_in×H×W` (or unbatched `C_in×H×W`), `w` is
    /// `C_out×C_in×k×k` with odd `k`, `b` is `C_out`. Padding is `(k−1)/2`
    /// zeros per side.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let unbatched = xs.len() == 3;
        let (n, cin, h, wd) = match xs.as_slice() {
            &[c, h, w] => (1, c, h, w),
            &[n, c, h, w] => (n, c, h, w),
            _ => return dim_err(format!("conv2d input must be rank 3 or 4, got {xs:?}")),
        };
        let &[cout, wcin, k, k2] = ws.as_slice() else {
            return dim_err(format!("conv2d weight must be rank 4, got {ws:?}"));
        };
        if wcin != cin {
            return dim_err(format!("conv2d: input has {cin} channels, weight expects {wcin}"));
        }
        if k != k2 || k % 2 == 0 {
            return dim_err(format!("conv2d kernel must be square and odd, got {k}×{k2}"));
        }
        if self.shape(b) != [cout] {
            return dim_err(format!("conv2d bias shape {:?}, expected [{cout}]", self.shape(b)));
        }
        let hw = h * wd;
        let ckk = cin * k * k;
        let (xv, wv, bv) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut out = vec![T::zero(); n * cout * hw];
        let mut col = vec![T::zero(); ckk * hw];
        for s in 0..n {
            im2col(&xv[s * cin * hw..(s + 1) * cin * hw], cin, h, wd, k, &mut col);
            let o = &mut out[s * cout * hw..(s + 1) * cout * hw];
            for (co, row) in o.chunks_mut(hw).enumerate() {
                row.fill(bv[co]);
            }
            gemm_nn(cout, ckk, hw, wv, &col, o);
        }
        let oshape = if unbatched { vec![cout, h, wd] } else { vec![n, cout, h, wd] };
        Ok(self.push(
            Tensor::from_parts(oshape, out),
            vec![x, w, b],
            Box::new(move |args| {
                let g = args.grad.data();
                let (xv, wv) = (args.inputs[0].data(), args.inputs[1].data());
                let mut dx = args.needs[0].then(|| vec![T::zero(); xv.len()]);
                let mut dw = vec![T::zero(); wv.len()];
                let mut db = vec![T::zero(); cout];
                let mut col = vec![T::zero(); ckk * hw];
                let mut dcol = vec![T::zero(); ckk * hw];
                for s in 0..n {
                    let gs = &g[s * cout * hw..(s + 1) * cout * hw];
                    for (co, row) in gs.chunks(hw).enumerate() {
                        db[co] += row.iter().copied().sum();
                    }
                    if args.needs[1] {
                        im2col(&xv[s * cin * hw..(s + 1) * cin * hw], cin, h, wd, k, &mut col);
                        gemm_nt(cout, hw, ckk, gs, &col, &mut dw);
                    }
                    if let Some(dx) = dx.as_mut() {
                        dcol.fill(T::zero());
                        gemm_tn(ckk, cout, hw, wv, gs, &mut dcol);
                        col2im(&dcol, cin, h, wd, k, &mut dx[s * cin * hw..(s + 1) * cin * hw]);
                    }
                }
                vec![
                    dx.map(|d| Tensor::from_parts(args.inputs[0].shape().to_vec(), d)),
                    Some(Tensor::from_parts(args.inputs[1].shape().to_vec(), dw)),
                    Some(Tensor::from_parts(vec![cout], db)),
                ]
            }),
        ))
    }

    /// 3-D convolution with a single input and output filter whose kernel
    /// spans only the depth (spectral) axis.
    ///
    /// `x` is `N×1×S×H×W` (or unbatched `1×S×H×W`), `w` is `1×1×k_d×1×1`
    /// with odd `k_d`, `b` holds one element. Depth padding is `(k_d−1)/2`
    /// zeros; spatial positions are never mixed.
    pub fn conv3d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let (n, depth, plane) = match xs.as_slice() {
            &[1, s, h, w] => (1, s, h * w),
            &[n, 1, s, h, w] => (n, s, h * w),
            _ => return dim_err(format!("conv3d input must be [N,1,S,H,W] or [1,S,H,W], got {xs:?}")),
        };
        let &[1, 1, kd, 1, 1] = ws.as_slice() else {
            return dim_err(format!("conv3d weight must be [1,1,k_d,1,1], got {ws:?}"));
        };
        if kd % 2 == 0 {
            return dim_err(format!("conv3d depth kernel must be odd, got {kd}"));
        }
        if self.value(b).numel() != 1 {
            return dim_err(format!("conv3d bias must hold one element, shape {:?}", self.shape(b)));
        }
        let pad = (kd - 1) / 2;
        let (xv, wv) = (self.value(x).data(), self.value(w).data().to_vec());
        let bias = self.value(b).item();
        let mut out = vec![bias; xv.len()];
        for s in 0..n {
            let xs = &xv[s * depth * plane..(s + 1) * depth * plane];
            let os = &mut out[s * depth * plane..(s + 1) * depth * plane];
            for d in 0..depth {
                let orow = &mut os[d * plane..(d + 1) * plane];
                for (j, &wj) in wv.iter().enumerate() {
                    let sd = d as isize + j as isize - pad as isize;
                    if sd < 0 || sd >= depth as isize {
                        continue;
                    }
                    let xrow = &xs[sd as usize * plane..(sd as usize + 1) * plane];
                    for (o, &v) in orow.iter_mut().zip(xrow) {
                        *o += wj * v;
                    }
                }
            }
        }
        let bshape = self.shape(b).to_vec();
        Ok(self.push(
            Tensor::from_parts(xs.clone(), out),
            vec![x, w, b],
            Box::new(move |args| {
                let g = args.grad.data();
                let (xv, wv) = (args.inputs[0].data(), args.inputs[1].data());
                let mut dx = vec![T::zero(); xv.len()];
                let mut dw = vec![T::zero(); kd];
                for s in 0..n {
                    let base = s * depth * plane;
                    for d in 0..depth {
                        let grow = &g[base + d * plane..base + (d + 1) * plane];
                        for j in 0..kd {
                            let sd = d as isize + j as isize - pad as isize;
                            if sd < 0 || sd >= depth as isize {
                                continue;
                            }
                            let off = base + sd as usize * plane;
                            let xrow = &xv[off..off + plane];
                            dw[j] += grow.iter().zip(xrow).map(|(&a, &b)| a * b).sum();
                            for (dv, &gv) in dx[off..off + plane].iter_mut().zip(grow) {
                                *dv += wv[j] * gv;
                            }
                        }
                    }
                }
                vec![
                    Some(Tensor::from_parts(args.inputs[0].shape().to_vec(), dx)),
                    Some(Tensor::from_parts(args.inputs[1].shape().to_vec(), dw)),
                    Some(Tensor::from_parts(bshape.clone(), vec![g.iter().copied().sum()])),
                ]
            }),
        ))
    }

    /// Affine map over the last axis: `x[..., in] · w[in, out] + b[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let &[din, dout] = ws.as_slice() else {
            return dim_err(format!("linear weight must be rank 2, got {ws:?}"));
        };
        if xs.last() != Some(&din) {
            return dim_err(format!("linear: input {xs:?} does not end in {din}"));
        }
        if self.shape(b) != [dout] {
            return dim_err(format!("linear bias shape {:?}, expected [{dout}]", self.shape(b)));
        }
        let rows = self.value(x).numel() / din;
        let bv = self.value(b).data();
        let mut out = Vec::with_capacity(rows * dout);
        for _ in 0..rows {
            out.extend_from_slice(bv);
        }
        gemm_nn(rows, din, dout, self.value(x).data(), self.value(w).data(), &mut out);
        let mut oshape = xs.clone();
        *oshape.last_mut().expect("rank >= 1") = dout;
        Ok(self.push(
            Tensor::from_parts(oshape, out),
            vec![x, w, b],
            Box::new(move |args| {
                let g = args.grad.data();
                let (xv, wv) = (args.inputs[0].data(), args.inputs[1].data());
                let dx = args.needs[0].then(|| {
                    let mut dx = vec![T::zero(); xv.len()];
                    gemm_nt(rows, dout, din, g, wv, &mut dx);
                    Tensor::from_parts(args.inputs[0].shape().to_vec(), dx)
                });
                let mut dw = vec![T::zero(); din * dout];
                gemm_tn(din, rows, dout, xv, g, &mut dw);
                let mut db = vec![T::zero(); dout];
                for row in g.chunks(dout) {
                    for (d, &v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                vec![dx, Some(Tensor::from_parts(vec![din, dout], dw)), Some(Tensor::from_parts(vec![dout], db))]
            }),
        ))
    }

    /// Batched matrix product `a[B,M,K] · b[B,K,N]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (&[bt, m, k], &[bt2, k2, n]) = (sa.as_slice(), sb.as_slice()) else {
            return dim_err(format!("bmm needs rank-3 operands, got {sa:?} and {sb:?}"));
        };
        if bt != bt2 || k != k2 {
            return dim_err(format!("bmm: incompatible shapes {sa:?} and {sb:?}"));
        }
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![T::zero(); bt * m * n];
        for i in 0..bt {
            gemm_nn(m, k, n, &av[i * m * k..], &bv[i * k * n..], &mut out[i * m * n..(i + 1) * m * n]);
        }
        Ok(self.push(
            Tensor::from_parts(vec![bt, m, n], out),
            vec![a, b],
            Box::new(move |args| {
                let g = args.grad.data();
                let (av, bv) = (args.inputs[0].data(), args.inputs[1].data());
                let mut da = vec![T::zero(); av.len()];
                let mut db = vec![T::zero(); bv.len()];
                for i in 0..bt {
                    let gi = &g[i * m * n..(i + 1) * m * n];
                    gemm_nt(m, n, k, gi, &bv[i * k * n..(i + 1) * k * n], &mut da[i * m * k..(i + 1) * m * k]);
                    gemm_tn(k, m, n, &av[i * m * k..(i + 1) * m * k], gi, &mut db[i * k * n..(i + 1) * k * n]);
                }
                vec![Some(Tensor::from_parts(vec![bt, m, k], da)), Some(Tensor::from_parts(vec![bt, k, n], db))]
            }),
        ))
    }
}
