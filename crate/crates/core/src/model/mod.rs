//! The classification network and its building blocks.

pub mod checkpoint;
pub mod config;
pub mod hpa;
pub mod params;
pub mod tbfe;
pub mod transformer;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{Ablation, HpaPairing, ModelConfig, TbfeMode};
pub use params::{Ctx, ParamId, ParamStore};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use hpa::Hpa;
use tbfe::TbfeStack;
use transformer::{cff_fuse, classify, tokenize, Cff, ClassHead, Embedding, Encoder};

/// Layer handles into the parameter store.
#[derive(Clone, Debug)]
struct Layers {
    tbfe: TbfeStack,
    hpa: Option<Hpa>,
    embed: Embedding,
    encoders: Vec<Encoder>,
    cff: Option<Cff>,
    head: ClassHead,
}

/// Full network: front end, optional attention, transformer encoders and
/// the class head, with all tensors held in one [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Model<T> {
    config: ModelConfig,
    store: ParamStore<T>,
    layers: Layers,
}

/// Values exposed by [`Model::forward_traced`].
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    /// Front-end output after the optional attention module, `N×D×P×P`.
    pub features: Var,
    pub tokens: Var,
    /// Attention probabilities of each encoder.
    pub attention: Vec<Tensor<T>>,
}

impl<T: Scalar> Model<T> {
    /// Builds a freshly initialized model; parameter draws are fully
    /// determined by `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = &config;
        let tbfe =
            TbfeStack::new(&mut store, c.bands, c.spectral_width, c.dim, c.ablation.tbfe == TbfeMode::On, &mut rng);
        let hpa = if c.ablation.hpa { Some(Hpa::new(&mut store, c.dim, c.groups, c.pairing, &mut rng)?) } else { None };
        let embed = Embedding::new(&mut store, c.tokens(), c.dim, &mut rng);
        let encoders = (1..=c.encoders)
            .map(|i| Encoder::new(&mut store, &format!("encoder{i}"), c.dim, c.mlp_dim, c.heads, c.dropout, &mut rng))
            .collect();
        let cff = c.ablation.cff.then(|| Cff::new(&mut store, c.encoders));
        let head = ClassHead::new(&mut store, c.dim, c.classes, &mut rng);
        Ok(Self { config, store, layers: Layers { tbfe, hpa, embed, encoders, cff, head } })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model { config: self.config.clone(), store: self.store.cast(), layers: self.layers.clone() }
    }

    /// Context over this model's parameters.
    pub fn ctx(&self, graph: Graph<T>) -> Ctx<'_, T> {
        Ctx::new(&self.store, graph, self.config.eps)
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let c = &self.config;
        if shape.len() != 4 || shape[1] != c.bands || shape[2] != c.patch || shape[3] != c.patch {
            return Err(Error::Dimension(format!(
                "model expects N×{}×{}×{} patches, got {shape:?}",
                c.bands, c.patch, c.patch
            )));
        }
        Ok(())
    }

    /// Logits `N×K` for an `N×B×P×P` batch.
    pub fn forward(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        self.forward_traced(ctx, x).map(|(y, _)| y)
    }

    pub fn forward_traced(&self, ctx: &mut Ctx<T>, x: Var) -> Result<(Var, ForwardTrace<T>)> {
        self.check_input(ctx.graph.shape(x))?;
        let l = &self.layers;
        let mut features = l.tbfe.forward(ctx, x)?;
        if let Some(hpa) = &l.hpa {
            features = hpa.forward(ctx, features)?;
        }
        let tokens = tokenize(ctx, features, l.embed)?;
        let (last, earlier) = l.encoders.split_last().expect("at least one encoder");
        let mut attention = Vec::with_capacity(l.encoders.len());
        let mut sources = vec![tokens];
        let mut z = tokens;
        for enc in earlier {
            let (y, probs) = enc.forward(ctx, z)?;
            attention.push(probs);
            sources.push(y);
            z = y;
        }
        if let Some(cff) = l.cff {
            z = cff_fuse(ctx, &sources, cff)?;
        }
        let (z, probs) = last.forward(ctx, z)?;
        attention.push(probs);
        let logits = classify(ctx, z, l.head)?;
        Ok((logits, ForwardTrace { features, tokens, attention }))
    }

    /// Inference-mode logits for an `N×B×P×P` batch.
    pub fn logits(&self, batch: Tensor<T>) -> Result<Tensor<T>> {
        let mut ctx = self.ctx(Graph::new());
        let x = ctx.graph.input(batch);
        let y = self.forward(&mut ctx, x)?;
        Ok(ctx.graph.value(y).clone())
    }

    /// Zero-based predicted class per sample.
    pub fn predict(&self, batch: Tensor<T>) -> Result<Vec<usize>> {
        let logits = self.logits(batch)?;
        Ok(argmax_rows(&logits))
    }
}

/// Index of the largest entry of each row of an `N×K` tensor (first on
/// ties).
pub fn argmax_rows<T: Scalar>(logits: &Tensor<T>) -> Vec<usize> {
    let k = *logits.shape().last().expect("rank >= 1");
    logits
        .data()
        .chunks(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(ablation: Ablation) -> ModelConfig {
        ModelConfig {
            bands: 4,
            patch: 5,
            spectral_width: 4,
            dim: 8,
            groups: 2,
            heads: 2,
            encoders: 2,
            mlp_dim: 16,
            classes: 3,
            ablation,
            ..ModelConfig::new(3)
        }
    }

    fn batch(n: usize, seed: u64) -> Tensor<f32> {
        Tensor::randn(&[n, 4, 5, 5], 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn every_ablation_case_yields_class_logits() {
        for case in 1..=6 {
            let model = Model::<f32>::new(small(Ablation::case(case).unwrap()), 0).unwrap();
            let logits = model.logits(batch(3, 1)).unwrap();
            assert_eq!(logits.shape(), &[3, 3], "case {case}");
            assert!(logits.is_finite());
        }
    }

    #[test]
    fn inference_is_deterministic() {
        let model = Model::<f32>::new(small(Ablation::FULL), 5).unwrap();
        let again = Model::<f32>::new(small(Ablation::FULL), 5).unwrap();
        assert_eq!(model.logits(batch(2, 2)).unwrap(), again.logits(batch(2, 2)).unwrap());
    }

    #[test]
    fn training_graph_records_batch_statistics() {
        let model = Model::<f64>::new(small(Ablation::FULL), 0).unwrap();
        let mut ctx = model.ctx(Graph::training(1));
        let x = ctx.graph.input(batch(4, 3).cast());
        let (y, trace) = model.forward_traced(&mut ctx, x).unwrap();
        assert_eq!(ctx.graph.shape(y), &[4, 3]);
        assert_eq!(ctx.graph.shape(trace.tokens), &[4, 26, 8]);
        assert_eq!(trace.attention.len(), 2);
        // two twin blocks plus the two trailing convolutions
        assert_eq!(ctx.stat_updates.len(), 4);
    }

    #[test]
    fn input_shape_checked() {
        let model = Model::<f32>::new(small(Ablation::FULL), 0).unwrap();
        assert!(matches!(model.logits(Tensor::zeros(&[1, 3, 5, 5])), Err(Error::Dimension(_))));
    }

    #[test]
    fn argmax_takes_first_maximum() {
        let t = Tensor::new(vec![2, 3], vec![1.0f32, 3.0, 3.0, -1.0, -2.0, -0.5]).unwrap();
        assert_eq!(argmax_rows(&t), vec![1, 2]);
    }
}
