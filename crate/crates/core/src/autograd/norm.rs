use super::{Graph, Var};
use crate::error::{config_err, dim_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Normalization span.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    /// Over the last axis; affine parameters sized to that axis.
    Layer,
    /// Over `C/g` consecutive channels and all trailing axes of each sample
    /// of an `N×C×…` input; affine per channel.
    Group(usize),
    /// Over the batch and all trailing axes, per channel of `N×C×…`.
    Batch,
}

/// Moments computed by a normalization, one entry per span.
#[derive(Clone, Debug)]
pub struct NormStats<T> {
    pub mean: Vec<T>,
    /// Population (biased) variance.
    pub var: Vec<T>,
    /// Number of elements in each span.
    pub count: usize,
}

/// Maps flat element index to (span, channel) for a normalization layout.
#[derive(Clone, Copy)]
struct Layout {
    spans: usize,
    channels: usize,
    kind: NormKind,
    inner: usize,
    per_group: usize,
}

impl Layout {
    fn new(shape: &[usize], kind: NormKind) -> Result<Self> {
        let total: usize = shape.iter().product();
        match kind {
            NormKind::Layer => {
                let d = *shape.last().expect("rank >= 1");
                Ok(Self { spans: total / d, channels: d, kind, inner: 1, per_group: d })
            }
            NormKind::Group(_) | NormKind::Batch if shape.len() < 2 => {
                dim_err(format!("{kind:?} normalization needs an N×C×… input, got {shape:?}"))
            }
            NormKind::Group(g) => {
                let (n, c) = (shape[0], shape[1]);
                if g == 0 || c % g != 0 {
                    return config_err(format!("group norm: {c} channels not divisible into {g} groups"));
                }
                let inner = total / (n * c);
                Ok(Self { spans: n * g, channels: c, kind, inner, per_group: c / g })
            }
            NormKind::Batch => {
                let (n, c) = (shape[0], shape[1]);
                Ok(Self { spans: c, channels: c, kind, inner: total / (n * c), per_group: 0 })
            }
        }
    }

    #[inline]
    fn span(&self, i: usize) -> usize {
        match self.kind {
            NormKind::Layer => i / self.channels,
            NormKind::Group(_) => i / (self.per_group * self.inner),
            NormKind::Batch => (i / self.inner) % self.channels,
        }
    }

    #[inline]
    fn channel(&self, i: usize) -> usize {
        match self.kind {
            NormKind::Layer => i % self.channels,
            NormKind::Group(_) | NormKind::Batch => (i / self.inner) % self.channels,
        }
    }
}

fn check_affine<T: Scalar>(g: &Graph<T>, gain: Var, shift: Var, channels: usize) -> Result<()> {
    if g.shape(gain) != [channels] || g.shape(shift) != [channels] {
        return dim_err(format!(
            "normalization affine shapes {:?}/{:?}, expected [{channels}]",
            g.shape(gain),
            g.shape(shift)
        ));
    }
    Ok(())
}

impl<T: Scalar> Graph<T> {
    /// Zero-mean unit-variance within each span, then `gain·x̂ + shift`.
    pub fn normalize(&mut self, x: Var, kind: NormKind, gain: Var, shift: Var, eps: f64) -> Result<Var> {
        self.normalize_with_stats(x, kind, gain, shift, eps).map(|(v, _)| v)
    }

    /// As [`Graph::normalize`], also returning the span moments.
    pub fn normalize_with_stats(
        &mut self,
        x: Var,
        kind: NormKind,
        gain: Var,
        shift: Var,
        eps: f64,
    ) -> Result<(Var, NormStats<T>)> {
        let shape = self.shape(x).to_vec();
        let layout = Layout::new(&shape, kind)?;
        check_affine(self, gain, shift, layout.channels)?;
        let xv = self.value(x).data();
        let count = xv.len() / layout.spans;
        let cnt = T::of(count as f64);
        let mut mean = vec![T::zero(); layout.spans];
        for (i, &v) in xv.iter().enumerate() {
            mean[layout.span(i)] += v;
        }
        mean.iter_mut().for_each(|m| *m /= cnt);
        let mut var = vec![T::zero(); layout.spans];
        for (i, &v) in xv.iter().enumerate() {
            let d = v - mean[layout.span(i)];
            var[layout.span(i)] += d * d;
        }
        var.iter_mut().for_each(|v| *v /= cnt);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + T::of(eps)).sqrt()).collect();
        let xhat: Vec<T> = xv
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let s = layout.span(i);
                (v - mean[s]) * inv_std[s]
            })
            .collect();
        let (gv, sv) = (self.value(gain).data(), self.value(shift).data());
        let out = xhat.iter().enumerate().map(|(i, &h)| gv[layout.channel(i)] * h + sv[layout.channel(i)]).collect();
        let stats = NormStats { mean, var, count };
        let var = self.push(
            Tensor::from_parts(shape.clone(), out),
            vec![x, gain, shift],
            Box::new(move |args| {
                let g = args.grad.data();
                let gamma = args.inputs[1].data();
                let c = layout.channels;
                let mut dgain = vec![T::zero(); c];
                let mut dshift = vec![T::zero(); c];
                let mut sum_d = vec![T::zero(); layout.spans];
                let mut sum_dh = vec![T::zero(); layout.spans];
                for (i, (&gv, &h)) in g.iter().zip(&xhat).enumerate() {
                    let ch = layout.channel(i);
                    dgain[ch] += gv * h;
                    dshift[ch] += gv;
                    let d = gv * gamma[ch];
                    let s = layout.span(i);
                    sum_d[s] += d;
                    sum_dh[s] += d * h;
                }
                let dx = g
                    .iter()
                    .zip(&xhat)
                    .enumerate()
                    .map(|(i, (&gv, &h))| {
                        let s = layout.span(i);
                        let d = gv * gamma[layout.channel(i)];
                        inv_std[s] * (d - sum_d[s] / cnt - h * sum_dh[s] / cnt)
                    })
                    .collect();
                vec![
                    Some(Tensor::from_parts(shape.clone(), dx)),
                    Some(Tensor::from_parts(vec![c], dgain)),
                    Some(Tensor::from_parts(vec![c], dshift)),
                ]
            }),
        );
        Ok((var, stats))
    }

    /// Per-channel normalization of `N×C×…` with fixed moments (batch-norm
    /// inference path).
    pub fn normalize_fixed(&mut self, x: Var, mean: &[T], var: &[T], gain: Var, shift: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let layout = Layout::new(&shape, NormKind::Batch)?;
        check_affine(self, gain, shift, layout.channels)?;
        if mean.len() != layout.channels || var.len() != layout.channels {
            return dim_err(format!(
                "fixed normalization needs {} moments, got {}/{}",
                layout.channels,
                mean.len(),
                var.len()
            ));
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + T::of(eps)).sqrt()).collect();
        let mean = mean.to_vec();
        let xhat: Vec<T> = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = layout.channel(i);
                (v - mean[c]) * inv_std[c]
            })
            .collect();
        let (gv, sv) = (self.value(gain).data(), self.value(shift).data());
        let out = xhat.iter().enumerate().map(|(i, &h)| gv[layout.channel(i)] * h + sv[layout.channel(i)]).collect();
        Ok(self.push(
            Tensor::from_parts(shape.clone(), out),
            vec![x, gain, shift],
            Box::new(move |args| {
                let g = args.grad.data();
                let gamma = args.inputs[1].data();
                let c = layout.channels;
                let mut dgain = vec![T::zero(); c];
                let mut dshift = vec![T::zero(); c];
                let mut dx = Vec::with_capacity(g.len());
                for (i, (&gv, &h)) in g.iter().zip(&xhat).enumerate() {
                    let ch = layout.channel(i);
                    dgain[ch] += gv * h;
                    dshift[ch] += gv;
                    dx.push(gv * gamma[ch] * inv_std[ch]);
                }
                vec![
                    Some(Tensor::from_parts(shape.clone(), dx)),
                    Some(Tensor::from_parts(vec![c], dgain)),
                    Some(Tensor::from_parts(vec![c], dshift)),
                ]
            }),
        ))
    }
}
