//! Brute-force reference implementations and shared gradient/oracle
//! batteries, used by this crate's integration tests and by the workspace
//! acceptance suite.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sctnet::gradcheck::{grad_check_with, GradCheckOptions, GradCheckReport};
use sctnet::model::hpa::Hpa;
use sctnet::model::tbfe::TbfeBlock;
use sctnet::model::transformer::{cff_fuse, classify, Cff, ClassHead, Encoder};
use sctnet::model::{Ctx, HpaPairing, Model, ModelConfig, ParamStore};
use sctnet::train::ConfusionMatrix;
use sctnet::{Graph, NormKind, PoolAxis, PoolMode, Result, Tensor, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, r)
}

// ---------------------------------------------------------------- oracles

/// Same-padded 2-D convolution, one output at a time.
pub fn naive_conv2d(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let (n, cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let p = (k / 2) as isize;
    let mut out = Tensor::zeros(&[n, cout, h, wd]);
    for ni in 0..n {
        for co in 0..cout {
            for i in 0..h {
                for j in 0..wd {
                    let mut acc = b.data()[co];
                    for ci in 0..cin {
                        for di in 0..k {
                            for dj in 0..k {
                                let (r, c) = (i as isize + di as isize - p, j as isize + dj as isize - p);
                                if r < 0 || c < 0 || r >= h as isize || c >= wd as isize {
                                    continue;
                                }
                                acc += w.at(&[co, ci, di, dj]) * x.at(&[ni, ci, r as usize, c as usize]);
                            }
                        }
                    }
                    out.data_mut()[((ni * cout + co) * h + i) * wd + j] = acc;
                }
            }
        }
    }
    out
}

/// Depth-only 3-D convolution of `N×1×S×H×W` with a `1×1×k×1×1` kernel.
pub fn naive_conv3d(x: &Tensor<f64>, w: &Tensor<f64>, b: f64) -> Tensor<f64> {
    let (n, s, h, wd) = (x.shape()[0], x.shape()[2], x.shape()[3], x.shape()[4]);
    let k = w.shape()[2];
    let p = (k / 2) as isize;
    let mut out = Tensor::zeros(x.shape());
    for ni in 0..n {
        for d in 0..s {
            for i in 0..h {
                for j in 0..wd {
                    let mut acc = b;
                    for t in 0..k {
                        let src = d as isize + t as isize - p;
                        if src >= 0 && src < s as isize {
                            acc += w.at(&[0, 0, t, 0, 0]) * x.at(&[ni, 0, src as usize, i, j]);
                        }
                    }
                    out.data_mut()[((ni * s + d) * h + i) * wd + j] = acc;
                }
            }
        }
    }
    out
}

fn reduce(vals: impl Iterator<Item = f64>, mode: PoolMode) -> f64 {
    let v: Vec<f64> = vals.collect();
    match mode {
        PoolMode::Avg => v.iter().sum::<f64>() / v.len() as f64,
        PoolMode::Max => v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Horizontal: `N×C×H` means/maxima over each row; vertical: over columns.
pub fn naive_directional(x: &Tensor<f64>, axis: PoolAxis, mode: PoolMode) -> Tensor<f64> {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let keep = if axis == PoolAxis::Horizontal { h } else { w };
    let mut out = Tensor::zeros(&[n, c, keep]);
    for ni in 0..n {
        for ci in 0..c {
            for pos in 0..keep {
                let v = match axis {
                    PoolAxis::Horizontal => reduce((0..w).map(|j| x.at(&[ni, ci, pos, j])), mode),
                    PoolAxis::Vertical => reduce((0..h).map(|i| x.at(&[ni, ci, i, pos])), mode),
                };
                out.data_mut()[(ni * c + ci) * keep + pos] = v;
            }
        }
    }
    out
}

pub fn naive_global(x: &Tensor<f64>, mode: PoolMode) -> Tensor<f64> {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    Tensor::from_fn(&[n, c], |k| {
        let (ni, ci) = (k / c, k % c);
        reduce((0..h * w).map(|p| x.at(&[ni, ci, p / w, p % w])), mode)
    })
}

/// Per-head `softmax(QKᵀ/√d)V` over `B×T×D`, concatenated by head.
pub fn naive_attention(q: &Tensor<f64>, k: &Tensor<f64>, v: &Tensor<f64>, heads: usize) -> Tensor<f64> {
    let (b, t, d) = (q.shape()[0], q.shape()[1], q.shape()[2]);
    let dk = d / heads;
    let mut out = Tensor::zeros(&[b, t, d]);
    for bi in 0..b {
        for h in 0..heads {
            for i in 0..t {
                let scores: Vec<f64> = (0..t)
                    .map(|j| {
                        (0..dk).map(|c| q.at(&[bi, i, h * dk + c]) * k.at(&[bi, j, h * dk + c])).sum::<f64>()
                            / (dk as f64).sqrt()
                    })
                    .collect();
                let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
                let z: f64 = e.iter().sum();
                for c in 0..dk {
                    let val: f64 = (0..t).map(|j| e[j] / z * v.at(&[bi, j, h * dk + c])).sum();
                    out.data_mut()[(bi * t + i) * d + h * dk + c] = val;
                }
            }
        }
    }
    out
}

/// OA, AA, κ by explicit tallies over the raw prediction pairs.
pub fn naive_metrics(k: usize, truth: &[usize], pred: &[usize]) -> (f64, f64, f64) {
    let n = truth.len() as f64;
    let mut agree = 0.0;
    let mut per_true = vec![0.0; k];
    let mut per_pred = vec![0.0; k];
    let mut hits = vec![0.0; k];
    for (&t, &p) in truth.iter().zip(pred) {
        per_true[t] += 1.0;
        per_pred[p] += 1.0;
        if t == p {
            agree += 1.0;
            hits[t] += 1.0;
        }
    }
    let oa = agree / n;
    let present: Vec<usize> = (0..k).filter(|&c| per_true[c] > 0.0).collect();
    let aa = present.iter().map(|&c| hits[c] / per_true[c]).sum::<f64>() / present.len() as f64;
    let mut pe = 0.0;
    for c in 0..k {
        pe += (per_true[c] / n) * (per_pred[c] / n);
    }
    (oa, aa, (oa - pe) / (1.0 - pe))
}

/// Max absolute deviation of each op from its reference over `instances`
/// random small problems: `(name, max error)`.
pub fn oracle_battery(instances: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    let mut worst = [("conv2d", 0.0f64), ("conv3d", 0.0), ("pooling", 0.0), ("attention", 0.0), ("metrics", 0.0)];
    for _ in 0..instances {
        // conv2d
        let (n, cin, cout, h, w) =
            (r.gen_range(1..3), r.gen_range(1..4), r.gen_range(1..4), r.gen_range(1..7), r.gen_range(1..7));
        let k = [1, 3, 5][r.gen_range(0..3)];
        let (x, wt, b) = (randn(&[n, cin, h, w], &mut r), randn(&[cout, cin, k, k], &mut r), randn(&[cout], &mut r));
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.input(x.clone()), g.input(wt.clone()), g.input(b.clone()));
        let y = g.conv2d(xv, wv, bv).unwrap();
        worst[0].1 = worst[0].1.max(g.value(y).max_abs_diff(&naive_conv2d(&x, &wt, &b)));

        // conv3d
        let (s, kd) = (r.gen_range(1..8), [1, 3, 5][r.gen_range(0..3)]);
        let (x, wt, b) = (randn(&[n, 1, s, h, w], &mut r), randn(&[1, 1, kd, 1, 1], &mut r), randn(&[1], &mut r));
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.input(x.clone()), g.input(wt.clone()), g.input(b.clone()));
        let y = g.conv3d(xv, wv, bv).unwrap();
        worst[1].1 = worst[1].1.max(g.value(y).max_abs_diff(&naive_conv3d(&x, &wt, b.data()[0])));

        // pooling
        let x = randn(&[n, cin, h, w], &mut r);
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        for mode in [PoolMode::Avg, PoolMode::Max] {
            for axis in [PoolAxis::Horizontal, PoolAxis::Vertical] {
                let y = g.directional_pool(xv, axis, mode).unwrap();
                worst[2].1 = worst[2].1.max(g.value(y).max_abs_diff(&naive_directional(&x, axis, mode)));
            }
            let y = g.global_pool2d(xv, mode).unwrap();
            worst[2].1 = worst[2].1.max(g.value(y).max_abs_diff(&naive_global(&x, mode)));
        }

        // attention
        let heads = r.gen_range(1..4);
        let (t, d) = (r.gen_range(1..7), heads * r.gen_range(1..4));
        let (q, kk, v) = (randn(&[n, t, d], &mut r), randn(&[n, t, d], &mut r), randn(&[n, t, d], &mut r));
        let mut g = Graph::new();
        let (qv, kv, vv) = (g.input(q.clone()), g.input(kk.clone()), g.input(v.clone()));
        let (y, _) = g.multi_head_attention(qv, kv, vv, heads).unwrap();
        worst[3].1 = worst[3].1.max(g.value(y).max_abs_diff(&naive_attention(&q, &kk, &v, heads)));

        // metrics
        let classes = r.gen_range(2..6);
        let len = r.gen_range(20..200);
        let truth: Vec<usize> = (0..len).map(|i| if i < classes { i } else { r.gen_range(0..classes) }).collect();
        let pred: Vec<usize> =
            truth.iter().map(|&t| if r.gen_bool(0.7) { t } else { r.gen_range(0..classes) }).collect();
        let report = ConfusionMatrix::from_pairs(classes, &truth, &pred).metrics();
        let (oa, aa, kappa) = naive_metrics(classes, &truth, &pred);
        let err = (report.oa - oa).abs().max((report.aa - aa).abs()).max((report.kappa - kappa).abs());
        worst[4].1 = worst[4].1.max(err);
    }
    worst.to_vec()
}

// ------------------------------------------------------------- gradients

/// Grad-checks `f(ctx, x)` with respect to `x` and every tensor of `store`.
pub fn check_with_store<F>(
    store: &ParamStore<f64>,
    x: Tensor<f64>,
    seed: u64,
    max_entries: usize,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Ctx<f64>, Var) -> Result<Var>,
{
    let mut inputs = vec![x];
    inputs.extend(store.entries().iter().map(|e| e.tensor.clone()));
    let opts = GradCheckOptions { max_entries_per_input: Some(max_entries), ..GradCheckOptions::new(seed) };
    grad_check_with(
        |g: &mut Graph<f64>, vars: &[Var]| {
            let graph = std::mem::replace(g, Graph::new());
            let mut ctx = Ctx::bind(store, graph, vars[1..].to_vec(), 1e-5)?;
            let y = f(&mut ctx, vars[0]);
            *g = ctx.graph;
            y
        },
        &inputs,
        opts,
    )
}

fn plain(
    f: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
    inputs: &[Tensor<f64>],
    seed: u64,
) -> Result<GradCheckReport> {
    grad_check_with(f, inputs, GradCheckOptions::new(seed))
}

/// Toy configuration for whole-network checks: 8 bands, 9×9 patches.
pub fn toy_config() -> ModelConfig {
    ModelConfig {
        bands: 8,
        patch: 9,
        spectral_width: 4,
        dim: 8,
        groups: 2,
        heads: 2,
        encoders: 2,
        mlp_dim: 16,
        ..ModelConfig::new(3)
    }
}

/// Every differentiable operation and module, checked at one seed:
/// `(name, report, threshold)`.
pub fn gradient_battery(seed: u64) -> Result<Vec<(&'static str, GradCheckReport, f64)>> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    let tol = sctnet::gradcheck::THRESHOLD;

    let ins = [randn(&[2, 3, 5, 5], &mut r), randn(&[4, 3, 3, 3], &mut r), randn(&[4], &mut r)];
    out.push(("conv2d", plain(|g, v| g.conv2d(v[0], v[1], v[2]), &ins, seed)?, tol));

    let ins = [randn(&[2, 1, 6, 4, 4], &mut r), randn(&[1, 1, 3, 1, 1], &mut r), randn(&[1], &mut r)];
    out.push(("conv3d", plain(|g, v| g.conv3d(v[0], v[1], v[2]), &ins, seed)?, tol));

    let ins = [randn(&[2, 3, 4, 5], &mut r)];
    out.push((
        "directional pooling",
        plain(
            |g, v| {
                let parts: Vec<Var> = [PoolMode::Avg, PoolMode::Max]
                    .into_iter()
                    .flat_map(|m| [PoolAxis::Horizontal, PoolAxis::Vertical].map(|a| (m, a)))
                    .map(|(m, a)| {
                        let y = g.directional_pool(v[0], a, m)?;
                        let n = g.value(y).numel();
                        g.reshape(y, &[n])
                    })
                    .collect::<Result<_>>()?;
                g.concat(&parts, 0)
            },
            &ins,
            seed,
        )?,
        tol,
    ));
    out.push((
        "global pooling",
        plain(
            |g, v| {
                let a = g.global_pool2d(v[0], PoolMode::Avg)?;
                let m = g.global_pool2d(v[0], PoolMode::Max)?;
                g.concat(&[a, m], 1)
            },
            &ins,
            seed,
        )?,
        tol,
    ));

    for (name, shape, kind) in [
        ("layer norm", vec![3, 4, 6], NormKind::Layer),
        ("group norm", vec![2, 4, 3, 3], NormKind::Group(2)),
        ("batch norm", vec![4, 3, 3, 3], NormKind::Batch),
    ] {
        let c = if kind == NormKind::Layer { shape[2] } else { shape[1] };
        let gain = Tensor::from_fn(&[c], |_| 1.0 + 0.3 * r.gen_range(-1.0..1.0));
        let ins = [randn(&shape, &mut r), gain, randn(&[c], &mut r)];
        out.push((name, plain(move |g, v| g.normalize(v[0], kind, v[1], v[2], 1e-5), &ins, seed)?, tol));
    }

    let ins = [randn(&[5, 4], &mut r), randn(&[5, 4], &mut r), randn(&[5, 4], &mut r)];
    out.push(("attention core", plain(|g, v| g.attention_core(v[0], v[1], v[2]), &ins, seed)?, tol));

    let mut store = ParamStore::new();
    let block = TbfeBlock::new(&mut store, "b", 4, 3, &mut r);
    let x = randn(&[2, 4, 5, 5], &mut r);
    out.push(("tbfe block", check_with_store(&store, x, seed, 6, |ctx, x| block.forward(ctx, x))?, tol));

    let mut store = ParamStore::new();
    let hpa = Hpa::new(&mut store, 8, 4, HpaPairing::Crossed, &mut r)?;
    let x = randn(&[2, 8, 5, 5], &mut r);
    out.push(("hpa", check_with_store(&store, x, seed, 20, |ctx, x| hpa.forward(ctx, x))?, tol));

    let mut store = ParamStore::new();
    let enc = Encoder::new(&mut store, "enc", 8, 16, 2, 0.1, &mut r);
    let x = randn(&[2, 5, 8], &mut r);
    out.push(("encoder", check_with_store(&store, x, seed, 8, |ctx, x| enc.forward(ctx, x).map(|(y, _)| y))?, tol));

    let mut store = ParamStore::new();
    let cff = Cff::new(&mut store, 3);
    store.set(cff.logits, randn(&[3], &mut r))?;
    let x = randn(&[3, 2, 4, 8], &mut r);
    out.push((
        "cff fuse",
        check_with_store(&store, x, seed, 64, |ctx, x| {
            let srcs: Vec<Var> = (0..3)
                .map(|i| {
                    let s = ctx.graph.narrow(x, 0, i, 1)?;
                    ctx.graph.reshape(s, &[2, 4, 8])
                })
                .collect::<Result<_>>()?;
            cff_fuse(ctx, &srcs, cff)
        })?,
        tol,
    ));

    let mut store = ParamStore::new();
    let head = ClassHead::new(&mut store, 8, 3, &mut r);
    let x = randn(&[2, 5, 8], &mut r);
    out.push(("classify", check_with_store(&store, x, seed, 16, |ctx, x| classify(ctx, x, head))?, tol));

    let model = Model::<f64>::new(toy_config(), seed)?;
    let x = randn(&[2, 8, 9, 9], &mut r);
    out.push(("full backbone", check_with_store(model.store(), x, seed, 3, |ctx, x| model.forward(ctx, x))?, 1e-3));

    Ok(out)
}
