//! Token sequence, pre-norm encoders, cross-layer fusion and the class head.

use rand::Rng;

use super::params::{Affine, Ctx, NormAffine, ParamId, ParamStore};
use crate::autograd::{NormKind, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Initialization scale of the class token and positional embedding.
pub const EMBED_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug)]
pub struct Embedding {
    /// `1×1×D`.
    pub cls: ParamId,
    /// `1×T×D` with `T = P² + 1`.
    pub pos: ParamId,
}

impl Embedding {
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, tokens: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            cls: store.add("embed.cls", Tensor::randn(&[1, 1, dim], EMBED_STD, rng), true),
            pos: store.add("embed.pos", Tensor::randn(&[1, tokens, dim], EMBED_STD, rng), true),
        }
    }
}

/// `N×D×P×P` feature maps to `N×(P²+1)×D` tokens: row-major spatial
/// tokens after a leading class token, plus the positional embedding.
pub fn tokenize<T: Scalar>(ctx: &mut Ctx<T>, features: Var, emb: Embedding) -> Result<Var> {
    let [n, d, h, w] = *ctx.graph.shape(features) else {
        return Err(Error::Dimension(format!("expected N×D×P×P features, got {:?}", ctx.graph.shape(features))));
    };
    let (cls, pos) = (ctx.p(emb.cls), ctx.p(emb.pos));
    if ctx.graph.shape(cls) != [1, 1, d] || ctx.graph.shape(pos) != [1, h * w + 1, d] {
        return Err(Error::Dimension(format!(
            "embeddings {:?}/{:?} do not fit {h}×{w} maps of width {d}",
            ctx.graph.shape(cls),
            ctx.graph.shape(pos)
        )));
    }
    let flat = ctx.graph.reshape(features, &[n, d, h * w])?;
    let seq = ctx.graph.permute(flat, &[0, 2, 1])?;
    let cls = ctx.graph.broadcast_to(cls, &[n, 1, d])?;
    let seq = ctx.graph.concat(&[cls, seq], 1)?;
    ctx.graph.add_bcast(seq, pos)
}

#[derive(Clone, Copy, Debug)]
pub struct Encoder {
    pub heads: usize,
    pub dropout: f64,
    pub ln1: NormAffine,
    pub q: Affine,
    pub k: Affine,
    pub v: Affine,
    pub o: Affine,
    pub ln2: NormAffine,
    pub fc1: Affine,
    pub fc2: Affine,
}

impl Encoder {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        dim: usize,
        mlp_dim: usize,
        heads: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            heads,
            dropout,
            ln1: NormAffine::new(store, &format!("{name}.ln1"), dim),
            q: Affine::linear(store, &format!("{name}.q"), dim, dim, rng),
            k: Affine::linear(store, &format!("{name}.k"), dim, dim, rng),
            v: Affine::linear(store, &format!("{name}.v"), dim, dim, rng),
            o: Affine::linear(store, &format!("{name}.o"), dim, dim, rng),
            ln2: NormAffine::new(store, &format!("{name}.ln2"), dim),
            fc1: Affine::linear(store, &format!("{name}.fc1"), dim, mlp_dim, rng),
            fc2: Affine::linear(store, &format!("{name}.fc2"), mlp_dim, dim, rng),
        }
    }

    /// `x1 = x + MSA(LN x)`, `out = x1 + MLP(LN x1)`. Also returns the
    /// attention probabilities `N×h×T×T`.
    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<(Var, Tensor<T>)> {
        let y = ctx.norm(x, NormKind::Layer, self.ln1)?;
        let q = ctx.linear(y, self.q)?;
        let k = ctx.linear(y, self.k)?;
        let v = ctx.linear(y, self.v)?;
        let (att, probs) = ctx.graph.multi_head_attention(q, k, v, self.heads)?;
        let att = ctx.linear(att, self.o)?;
        let att = ctx.graph.dropout(att, self.dropout);
        let x1 = ctx.graph.add(x, att)?;
        let y = ctx.norm(x1, NormKind::Layer, self.ln2)?;
        let y = ctx.linear(y, self.fc1)?;
        let y = ctx.graph.gelu(y);
        let y = ctx.linear(y, self.fc2)?;
        let y = ctx.graph.dropout(y, self.dropout);
        Ok((ctx.graph.add(x1, y)?, probs))
    }
}

/// One fusion logit per source (encoder input plus the first `L−1` encoder
/// outputs).
#[derive(Clone, Copy, Debug)]
pub struct Cff {
    pub logits: ParamId,
    pub sources: usize,
}

impl Cff {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, sources: usize) -> Self {
        Self { logits: store.add("cff.logits", Tensor::zeros(&[sources]), true), sources }
    }
}

/// `Σ softmax(logits)_i · source_i`.
pub fn cff_fuse<T: Scalar>(ctx: &mut Ctx<T>, sources: &[Var], cff: Cff) -> Result<Var> {
    if sources.len() != cff.sources {
        return Err(Error::Config(format!("fusion has {} weights but {} sources", cff.sources, sources.len())));
    }
    let logits = ctx.p(cff.logits);
    let w = ctx.graph.softmax(logits);
    ctx.graph.weighted_sum(w, sources)
}

#[derive(Clone, Copy, Debug)]
pub struct ClassHead {
    pub norm: NormAffine,
    pub fc: Affine,
}

impl ClassHead {
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, dim: usize, classes: usize, rng: &mut R) -> Self {
        Self { norm: NormAffine::new(store, "head.ln", dim), fc: Affine::linear(store, "head.fc", dim, classes, rng) }
    }
}

/// Logits `N×K` from the layer-normalized class token of `N×T×D`.
pub fn classify<T: Scalar>(ctx: &mut Ctx<T>, seq: Var, head: ClassHead) -> Result<Var> {
    let [n, _, d] = *ctx.graph.shape(seq) else {
        return Err(Error::Dimension(format!("expected N×T×D tokens, got {:?}", ctx.graph.shape(seq))));
    };
    let cls = ctx.graph.narrow(seq, 1, 0, 1)?;
    let cls = ctx.graph.reshape(cls, &[n, d])?;
    let cls = ctx.norm(cls, NormKind::Layer, head.norm)?;
    ctx.linear(cls, head.fc)
}
