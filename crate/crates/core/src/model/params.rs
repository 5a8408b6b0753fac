//! Named parameter registry and the forward-pass context built over it.

use std::collections::HashMap;

use rand::Rng;

use crate::autograd::{Graph, NormKind, NormStats, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Index of a tensor in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct ParamEntry<T> {
    pub name: String,
    pub tensor: Tensor<T>,
    /// False for buffers such as running normalization statistics.
    pub trainable: bool,
}

/// Ordered collection of every learnable tensor and buffer of a model.
///
/// Registration order is the canonical order for checkpoints and the
/// optimizer.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    entries: Vec<ParamEntry<T>>,
    by_name: HashMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new(), by_name: HashMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>, trainable: bool) -> ParamId {
        let name = name.into();
        assert!(!self.by_name.contains_key(&name), "duplicate parameter {name}");
        self.by_name.insert(name.clone(), self.entries.len());
        self.entries.push(ParamEntry { name, tensor, trainable });
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].tensor
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.ids().filter(|id| self.entries[id.0].trainable).collect()
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.tensor.numel()).sum()
    }

    /// Overwrites a tensor, requiring the shape to match.
    pub fn set(&mut self, id: ParamId, tensor: Tensor<T>) -> Result<()> {
        let e = &mut self.entries[id.0];
        if e.tensor.shape() != tensor.shape() {
            return Err(Error::Dimension(format!(
                "parameter {} has shape {:?}, got {:?}",
                e.name,
                e.tensor.shape(),
                tensor.shape()
            )));
        }
        e.tensor = tensor;
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry { name: e.name.clone(), tensor: e.tensor.cast(), trainable: e.trainable })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }
}

/// Weight and bias of a convolution or linear layer.
#[derive(Clone, Copy, Debug)]
pub struct Affine {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Affine {
    /// Convolution `c_out×c_in×k×k` with fan-in uniform initialization.
    pub fn conv2d<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / ((c_in * k * k) as f64).sqrt();
        Self {
            weight: store.add(format!("{name}.weight"), Tensor::uniform(&[c_out, c_in, k, k], bound, rng), true),
            bias: store.add(format!("{name}.bias"), Tensor::uniform(&[c_out], bound, rng), true),
        }
    }

    /// Single-filter depth-only 3-D convolution `1×1×k_d×1×1`.
    pub fn conv3d<T: Scalar, R: Rng>(store: &mut ParamStore<T>, name: &str, k_d: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (k_d as f64).sqrt();
        Self {
            weight: store.add(format!("{name}.weight"), Tensor::uniform(&[1, 1, k_d, 1, 1], bound, rng), true),
            bias: store.add(format!("{name}.bias"), Tensor::uniform(&[1], bound, rng), true),
        }
    }

    /// Linear map stored `in×out`.
    pub fn linear<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        Self {
            weight: store.add(format!("{name}.weight"), Tensor::uniform(&[d_in, d_out], bound, rng), true),
            bias: store.add(format!("{name}.bias"), Tensor::uniform(&[d_out], bound, rng), true),
        }
    }
}

/// Gain and shift of a normalization layer.
#[derive(Clone, Copy, Debug)]
pub struct NormAffine {
    pub gain: ParamId,
    pub shift: ParamId,
}

impl NormAffine {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), Tensor::ones(&[channels]), true),
            shift: store.add(format!("{name}.shift"), Tensor::zeros(&[channels]), true),
        }
    }
}

/// Batch normalization with running statistics for inference.
#[derive(Clone, Copy, Debug)]
pub struct BatchNorm {
    pub affine: NormAffine,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        Self {
            affine: NormAffine::new(store, name, channels),
            running_mean: store.add(format!("{name}.running_mean"), Tensor::zeros(&[channels]), false),
            running_var: store.add(format!("{name}.running_var"), Tensor::ones(&[channels]), false),
        }
    }
}

/// Momentum of the running-statistics update.
pub const BN_MOMENTUM: f64 = 0.1;

/// Batch moments observed during a training forward pass.
#[derive(Clone, Debug)]
pub struct StatUpdate<T> {
    pub norm: BatchNorm,
    pub stats: NormStats<T>,
}

/// Forward-pass context: a graph with every parameter of a store
/// registered as a leaf.
pub struct Ctx<'a, T> {
    pub graph: Graph<T>,
    store: &'a ParamStore<T>,
    vars: Vec<Var>,
    pub eps: f64,
    pub stat_updates: Vec<StatUpdate<T>>,
}

impl<'a, T: Scalar> Ctx<'a, T> {
    pub fn new(store: &'a ParamStore<T>, mut graph: Graph<T>, eps: f64) -> Self {
        let vars = store.entries().iter().map(|e| graph.leaf(e.tensor.clone(), e.trainable)).collect();
        Self { graph, store, vars, eps, stat_updates: Vec::new() }
    }

    /// Context over variables already in `graph`, one per store entry in
    /// registration order (used to differentiate with respect to
    /// parameters supplied from outside).
    pub fn bind(store: &'a ParamStore<T>, graph: Graph<T>, vars: Vec<Var>, eps: f64) -> Result<Self> {
        if vars.len() != store.len() {
            return Err(Error::Dimension(format!(
                "{} variables bound to a store of {} tensors",
                vars.len(),
                store.len()
            )));
        }
        for (v, e) in vars.iter().zip(store.entries()) {
            if graph.shape(*v) != e.tensor.shape() {
                return Err(Error::Dimension(format!(
                    "variable for {} has shape {:?}, expected {:?}",
                    e.name,
                    graph.shape(*v),
                    e.tensor.shape()
                )));
            }
        }
        Ok(Self { graph, store, vars, eps, stat_updates: Vec::new() })
    }

    pub fn p(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.store
    }

    pub fn training(&self) -> bool {
        self.graph.is_training()
    }

    pub fn conv2d(&mut self, x: Var, a: Affine) -> Result<Var> {
        let (w, b) = (self.p(a.weight), self.p(a.bias));
        self.graph.conv2d(x, w, b)
    }

    pub fn conv3d(&mut self, x: Var, a: Affine) -> Result<Var> {
        let (w, b) = (self.p(a.weight), self.p(a.bias));
        self.graph.conv3d(x, w, b)
    }

    pub fn linear(&mut self, x: Var, a: Affine) -> Result<Var> {
        let (w, b) = (self.p(a.weight), self.p(a.bias));
        self.graph.linear(x, w, b)
    }

    pub fn norm(&mut self, x: Var, kind: NormKind, n: NormAffine) -> Result<Var> {
        let (g, s) = (self.p(n.gain), self.p(n.shift));
        self.graph.normalize(x, kind, g, s, self.eps)
    }

    /// Batch statistics in training mode, running statistics otherwise.
    pub fn batch_norm(&mut self, x: Var, bn: BatchNorm) -> Result<Var> {
        let (g, s) = (self.p(bn.affine.gain), self.p(bn.affine.shift));
        if self.training() {
            let (y, stats) = self.graph.normalize_with_stats(x, NormKind::Batch, g, s, self.eps)?;
            self.stat_updates.push(StatUpdate { norm: bn, stats });
            Ok(y)
        } else {
            let store = self.store;
            self.graph.normalize_fixed(
                x,
                store.get(bn.running_mean).data(),
                store.get(bn.running_var).data(),
                g,
                s,
                self.eps,
            )
        }
    }
}

/// Folds observed batch moments into the running statistics.
pub fn apply_stat_updates<T: Scalar>(store: &mut ParamStore<T>, updates: &[StatUpdate<T>]) {
    let m = T::of(BN_MOMENTUM);
    for u in updates {
        let n = T::of(u.stats.count as f64);
        let unbias = if u.stats.count > 1 { n / (n - T::one()) } else { T::one() };
        let mean = store.get_mut(u.norm.running_mean);
        for (r, &v) in mean.data_mut().iter_mut().zip(&u.stats.mean) {
            *r = (T::one() - m) * *r + m * v;
        }
        let var = store.get_mut(u.norm.running_var);
        for (r, &v) in var.data_mut().iter_mut().zip(&u.stats.var) {
            *r = (T::one() - m) * *r + m * v * unbias;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn counts_only_trainable_scalars() {
        let mut s = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Affine::linear(&mut s, "fc", 4, 3, &mut rng);
        BatchNorm::new(&mut s, "bn", 5);
        assert_eq!(s.trainable_count(), 4 * 3 + 3 + 5 + 5);
        assert_eq!(s.len(), 6);
    }

    #[test]
    fn set_rejects_shape_change() {
        let mut s = ParamStore::<f64>::new();
        let id = s.add("x", Tensor::zeros(&[2]), true);
        assert!(s.set(id, Tensor::zeros(&[3])).is_err());
        assert!(s.set(id, Tensor::ones(&[2])).is_ok());
    }
}
