//! Trains the small configuration on a generated scene and prints accuracy.
//!
//! Usage: synthetic [separation] [seed] [epochs] [ablation case 1-6]

use std::time::Instant;

use sctnet::data::patches::{extract_patches, Split};
use sctnet::data::pca::pca_reduce;
use sctnet::data::split::stratified_split;
use sctnet::data::synth::SynthSpec;
use sctnet::model::{Ablation, Model, ModelConfig};
use sctnet::train::{evaluate, train_with, TrainConfig};

fn main() -> sctnet::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let (sep, seed, epochs, case) = (arg(1, 3.0), arg(2, 0.0) as u64, arg(3, 50.0) as usize, arg(4, 6.0) as usize);
    let spec = SynthSpec { separation: sep, seed, ..SynthSpec::default() };
    let (cube, labels) = spec.generate()?;
    let (_, reduced) = pca_reduce(&cube, 8)?;
    let set = stratified_split(extract_patches(reduced, &labels, 9)?, 20.0 / 256.0, seed)?;
    let config = ModelConfig {
        bands: 8,
        patch: 9,
        spectral_width: 16,
        dim: 32,
        groups: 4,
        heads: 8,
        encoders: 2,
        mlp_dim: 128,
        ablation: Ablation::case(case).expect("case 1-6"),
        ..ModelConfig::new(4)
    };
    let mut model = Model::<f32>::new(config, seed)?;
    let cfg = TrainConfig { epochs, seed, ..TrainConfig::default() };
    let start = Instant::now();
    train_with(&mut model, &set, &cfg, |e| {
        if e.epoch % 10 == 0 || e.epoch == 1 {
            println!("epoch {:>3}  loss {:.4}  batch OA {:.3}", e.epoch, e.loss, e.train_oa);
        }
    })?;
    let elapsed = start.elapsed().as_secs_f64();
    let (_, tr) = evaluate(&model, &set, Split::Train)?;
    let (_, te) = evaluate(&model, &set, Split::Test)?;
    println!("train {tr}\ntest  {te}\ntrained in {elapsed:.1}s");
    Ok(())
}
