//! Twin-branch convolutional front end.

use rand::Rng;

use super::params::{Affine, BatchNorm, Ctx, ParamStore};
use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Pointwise reduction followed by parallel depth-wise 3-D and spatial 2-D
/// convolutions whose outputs are stacked channel-wise.
#[derive(Clone, Copy, Debug)]
pub struct TbfeBlock {
    pub c_in: usize,
    pub width: usize,
    pub pointwise: Affine,
    pub spectral: Affine,
    pub spatial: Affine,
    pub norm: BatchNorm,
}

impl TbfeBlock {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        width: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            c_in,
            width,
            pointwise: Affine::conv2d(store, &format!("{name}.pointwise"), c_in, width, 1, rng),
            spectral: Affine::conv3d(store, &format!("{name}.conv3d"), 3, rng),
            spatial: Affine::conv2d(store, &format!("{name}.conv2d"), width, width, 3, rng),
            norm: BatchNorm::new(store, &format!("{name}.bn"), 2 * width),
        }
    }

    /// Raw branch outputs `(F3d, F2d)`, each `N×S×P×P`.
    pub fn branches<T: Scalar>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<(Var, Var)> {
        let shape = ctx.graph.shape(x).to_vec();
        if shape.len() != 4 || shape[1] != self.c_in {
            return Err(Error::Dimension(format!(
                "twin-branch block expects N×{}×P×P input, got {shape:?}",
                self.c_in
            )));
        }
        let (n, h, w) = (shape[0], shape[2], shape[3]);
        let f = ctx.conv2d(x, self.pointwise)?;
        let volume = ctx.graph.reshape(f, &[n, 1, self.width, h, w])?;
        let a = ctx.conv3d(volume, self.spectral)?;
        let a = ctx.graph.reshape(a, &[n, self.width, h, w])?;
        let b = ctx.conv2d(f, self.spatial)?;
        Ok((a, b))
    }

    /// Activated concatenation `ReLU([F3d; F2d])` before normalization.
    pub fn pre_norm<T: Scalar>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let (a, b) = self.branches(ctx, x)?;
        let cat = ctx.graph.concat(&[a, b], 1)?;
        Ok(ctx.graph.relu(cat))
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let y = self.pre_norm(ctx, x)?;
        ctx.batch_norm(y, self.norm)
    }
}

/// Serial replacement used in ablations: a depth-wise 3-D convolution over
/// the input bands, then one 3×3 convolution to `2S` channels.
#[derive(Clone, Copy, Debug)]
pub struct SerialBlock {
    pub c_in: usize,
    pub spectral: Affine,
    pub spatial: Affine,
    pub norm: BatchNorm,
}

impl SerialBlock {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            c_in,
            spectral: Affine::conv3d(store, &format!("{name}.conv3d"), 3, rng),
            spatial: Affine::conv2d(store, &format!("{name}.conv2d"), c_in, c_out, 3, rng),
            norm: BatchNorm::new(store, &format!("{name}.bn"), c_out),
        }
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let shape = ctx.graph.shape(x).to_vec();
        if shape.len() != 4 || shape[1] != self.c_in {
            return Err(Error::Dimension(format!("serial block expects N×{}×P×P input, got {shape:?}", self.c_in)));
        }
        let (n, h, w) = (shape[0], shape[2], shape[3]);
        let volume = ctx.graph.reshape(x, &[n, 1, self.c_in, h, w])?;
        let a = ctx.conv3d(volume, self.spectral)?;
        let a = ctx.graph.reshape(a, &[n, self.c_in, h, w])?;
        let a = ctx.graph.relu(a);
        let b = ctx.conv2d(a, self.spatial)?;
        let b = ctx.graph.relu(b);
        ctx.batch_norm(b, self.norm)
    }
}

#[derive(Clone, Copy, Debug)]
pub enum FrontEnd {
    Twin([TbfeBlock; 2]),
    Serial(SerialBlock),
}

/// Front end plus the two trailing 3×3 convolutions: `N×B×P×P → N×D×P×P`.
#[derive(Clone, Copy, Debug)]
pub struct TbfeStack {
    pub front: FrontEnd,
    pub conv1: Affine,
    pub bn1: BatchNorm,
    pub conv2: Affine,
    pub bn2: BatchNorm,
}

impl TbfeStack {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        bands: usize,
        width: usize,
        dim: usize,
        twin: bool,
        rng: &mut R,
    ) -> Self {
        let front = if twin {
            let b1 = TbfeBlock::new(store, "tbfe.block1", bands, width, rng);
            let b2 = TbfeBlock::new(store, "tbfe.block2", 2 * width, width, rng);
            FrontEnd::Twin([b1, b2])
        } else {
            FrontEnd::Serial(SerialBlock::new(store, "tbfe.serial", bands, 2 * width, rng))
        };
        Self {
            front,
            conv1: Affine::conv2d(store, "tbfe.conv1", 2 * width, dim, 3, rng),
            bn1: BatchNorm::new(store, "tbfe.bn1", dim),
            conv2: Affine::conv2d(store, "tbfe.conv2", dim, dim, 3, rng),
            bn2: BatchNorm::new(store, "tbfe.bn2", dim),
        }
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let mut y = match &self.front {
            FrontEnd::Twin(blocks) => {
                let y = blocks[0].forward(ctx, x)?;
                blocks[1].forward(ctx, y)?
            }
            FrontEnd::Serial(block) => block.forward(ctx, x)?,
        };
        for (conv, bn) in [(self.conv1, self.bn1), (self.conv2, self.bn2)] {
            y = ctx.conv2d(y, conv)?;
            y = ctx.graph.relu(y);
            y = ctx.batch_norm(y, bn)?;
        }
        Ok(y)
    }
}
