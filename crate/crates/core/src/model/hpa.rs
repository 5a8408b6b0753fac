//! Hybrid pooling attention over channel groups.

use rand::Rng;

use super::config::HpaPairing;
use super::params::{Affine, Ctx, NormAffine, ParamStore};
use crate::autograd::{NormKind, PoolAxis, PoolMode, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct Hpa {
    pub channels: usize,
    pub groups: usize,
    /// 1×1 convolutions fusing the directional encodings, one per branch.
    pub conv_avg: Affine,
    pub conv_max: Affine,
    /// Affine of the single-group normalization shared by both branches.
    pub norm: NormAffine,
    pub pairing: HpaPairing,
}

/// Intermediate values of the cross-spatial aggregation.
#[derive(Clone, Copy, Debug)]
pub struct CsaTrace {
    /// Channel softmax of the pooled avg-branch map, `NG×c′`.
    pub a: Var,
    /// Channel softmax of the pooled max-branch map, `NG×c′`.
    pub b: Var,
    /// Spatial gate `σ(W_avg + W_max)`, `NG×1×H×W`.
    pub gate: Var,
}

fn group_dims(shape: &[usize], groups: usize) -> Result<(usize, usize, usize, usize)> {
    let [n, c, h, w] = *shape else {
        return Err(Error::Dimension(format!("expected N×C×H×W, got {shape:?}")));
    };
    if groups == 0 || c % groups != 0 {
        return Err(Error::Config(format!("{c} channels cannot be split into {groups} groups")));
    }
    Ok((n, c, h, w))
}

/// Folds `G` consecutive channel groups into the batch axis:
/// `N×C×H×W → (N·G)×(C/G)×H×W`.
pub fn group_split<T: Scalar>(ctx: &mut Ctx<T>, x: Var, groups: usize) -> Result<Var> {
    let (n, c, h, w) = group_dims(ctx.graph.shape(x), groups)?;
    ctx.graph.reshape(x, &[n * groups, c / groups, h, w])
}

/// Inverse of [`group_split`].
pub fn group_merge<T: Scalar>(ctx: &mut Ctx<T>, x: Var, groups: usize) -> Result<Var> {
    let [ng, cg, h, w] = *ctx.graph.shape(x) else {
        return Err(Error::Dimension(format!("expected (N·G)×c′×H×W, got {:?}", ctx.graph.shape(x))));
    };
    if ng % groups != 0 {
        return Err(Error::Dimension(format!("batch {ng} is not a multiple of {groups} groups")));
    }
    ctx.graph.reshape(x, &[ng / groups, cg * groups, h, w])
}

/// Directional avg or max encodings along both axes, fused by a shared 1×1
/// convolution and turned into two sigmoid gates applied to the group.
pub fn pooled_recalibrate<T: Scalar>(ctx: &mut Ctx<T>, group: Var, mode: PoolMode, conv: Affine) -> Result<Var> {
    let [ng, c, h, w] = *ctx.graph.shape(group) else {
        return Err(Error::Dimension(format!("expected 4-D group, got {:?}", ctx.graph.shape(group))));
    };
    let zh = ctx.graph.directional_pool(group, PoolAxis::Horizontal, mode)?;
    let zw = ctx.graph.directional_pool(group, PoolAxis::Vertical, mode)?;
    let z = ctx.graph.concat(&[zh, zw], 2)?;
    let z = ctx.graph.reshape(z, &[ng, c, h + w, 1])?;
    let z = ctx.conv2d(z, conv)?;
    let z = ctx.graph.reshape(z, &[ng, c, h + w])?;
    let ah = ctx.graph.narrow(z, 2, 0, h)?;
    let ah = ctx.graph.sigmoid(ah);
    let ah = ctx.graph.reshape(ah, &[ng, c, h, 1])?;
    let aw = ctx.graph.narrow(z, 2, h, w)?;
    let aw = ctx.graph.sigmoid(aw);
    let aw = ctx.graph.reshape(aw, &[ng, c, 1, w])?;
    let y = ctx.graph.mul_bcast(group, ah)?;
    ctx.graph.mul_bcast(y, aw)
}

/// Spatial gate from channel-softmax weights of one branch applied to the
/// normalized map of the other (or the same, for the straight pairing).
pub fn cross_spatial_aggregate<T: Scalar>(
    ctx: &mut Ctx<T>,
    g_avg: Var,
    g_max: Var,
    input: Var,
    norm: NormAffine,
    pairing: HpaPairing,
) -> Result<(Var, CsaTrace)> {
    let [ng, c, h, w] = *ctx.graph.shape(input) else {
        return Err(Error::Dimension(format!("expected 4-D group, got {:?}", ctx.graph.shape(input))));
    };
    for v in [g_avg, g_max] {
        if ctx.graph.shape(v) != [ng, c, h, w] {
            return Err(Error::Dimension(format!(
                "recalibrated map {:?} does not match input {:?}",
                ctx.graph.shape(v),
                [ng, c, h, w]
            )));
        }
    }
    let n_avg = ctx.norm(g_avg, NormKind::Group(1), norm)?;
    let n_max = ctx.norm(g_max, NormKind::Group(1), norm)?;
    let a = ctx.graph.global_pool2d(n_avg, PoolMode::Avg)?;
    let a = ctx.graph.softmax(a);
    let b = ctx.graph.global_pool2d(n_max, PoolMode::Max)?;
    let b = ctx.graph.softmax(b);
    let flat_avg = ctx.graph.reshape(n_avg, &[ng, c, h * w])?;
    let flat_max = ctx.graph.reshape(n_max, &[ng, c, h * w])?;
    let (a_target, b_target) = match pairing {
        HpaPairing::Crossed => (flat_max, flat_avg),
        HpaPairing::Straight => (flat_avg, flat_max),
    };
    let a_row = ctx.graph.reshape(a, &[ng, 1, c])?;
    let b_row = ctx.graph.reshape(b, &[ng, 1, c])?;
    let w_avg = ctx.graph.bmm(a_row, a_target)?;
    let w_max = ctx.graph.bmm(b_row, b_target)?;
    let s = ctx.graph.add(w_avg, w_max)?;
    let gate = ctx.graph.sigmoid(s);
    let gate = ctx.graph.reshape(gate, &[ng, 1, h, w])?;
    let out = ctx.graph.mul_bcast(input, gate)?;
    Ok((out, CsaTrace { a, b, gate }))
}

impl Hpa {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        channels: usize,
        groups: usize,
        pairing: HpaPairing,
        rng: &mut R,
    ) -> Result<Self> {
        if groups == 0 || channels % groups != 0 {
            return Err(Error::Config(format!("{channels} channels cannot be split into {groups} groups")));
        }
        let cg = channels / groups;
        Ok(Self {
            channels,
            groups,
            conv_avg: Affine::conv2d(store, "hpa.conv_avg", cg, cg, 1, rng),
            conv_max: Affine::conv2d(store, "hpa.conv_max", cg, cg, 1, rng),
            norm: NormAffine::new(store, "hpa.gn", cg),
            pairing,
        })
    }

    pub fn forward_traced<T: Scalar>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<(Var, CsaTrace)> {
        let (_, c, _, _) = group_dims(ctx.graph.shape(x), self.groups)?;
        if c != self.channels {
            return Err(Error::Dimension(format!("HPA built for {} channels, got {c}", self.channels)));
        }
        let g = group_split(ctx, x, self.groups)?;
        let g_avg = pooled_recalibrate(ctx, g, PoolMode::Avg, self.conv_avg)?;
        let g_max = pooled_recalibrate(ctx, g, PoolMode::Max, self.conv_max)?;
        let (y, trace) = cross_spatial_aggregate(ctx, g_avg, g_max, g, self.norm, self.pairing)?;
        Ok((group_merge(ctx, y, self.groups)?, trace))
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        self.forward_traced(ctx, x).map(|(y, _)| y)
    }
}
