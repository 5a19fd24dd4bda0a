#![allow(dead_code)]

use devft::federation::Client;
use devft::grouping::GroupPartition;
use devft::model::{Activation, Batch, LayerParams, LayerShape, LayeredModel, LoraAdapter, ModelSpec};
use devft::numerics::{DenseVector, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn spec(input_dim: usize, width: usize, output_dim: usize, layers: usize, rank: usize) -> ModelSpec {
    ModelSpec {
        input_dim,
        width,
        output_dim,
        layers,
        rank,
        alpha: 2.0 * rank as f64,
        activation: Activation::Tanh,
    }
}

pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}

/// Random model whose adapters have nonzero `B`, so every adapter entry has
/// a nonzero gradient in general.
pub fn random_model(spec: &ModelSpec, seed: u64) -> LayeredModel {
    let mut r = rng(seed);
    let mut m = LayeredModel::random(spec, 0.8, &mut r).unwrap();
    for i in 0..m.depth() {
        let old = m.layers()[i].adapter().clone();
        let b = uniform(old.b.rows(), old.b.cols(), 0.3, &mut r);
        m.layer_mut(i)
            .set_adapter(LoraAdapter::new(old.a, b, old.alpha).unwrap())
            .unwrap();
    }
    m
}

pub fn random_batch(n: usize, spec: &ModelSpec, seed: u64) -> Batch {
    let mut r = rng(seed);
    Batch::new(
        uniform(n, spec.input_dim, 1.5, &mut r),
        uniform(n, spec.output_dim, 1.0, &mut r),
    )
    .unwrap()
}

/// Largest entrywise relative error between analytic adapter gradients and
/// central differences of the loss with step `h`. Entries whose magnitudes
/// are both below `floor` are compared against `floor`.
pub fn finite_difference_error(model: &LayeredModel, batch: &Batch, h: f64, floor: f64) -> f64 {
    let (_, grads) = model.loss_and_grads(batch).unwrap();
    let mut worst: f64 = 0.0;
    for (i, g) in grads.0.iter().enumerate() {
        for which in 0..2 {
            let analytic = if which == 0 { &g.a } else { &g.b };
            for e in 0..analytic.as_slice().len() {
                let eval = |delta: f64| {
                    let mut m = model.clone();
                    let mut ad = m.layers()[i].adapter().clone();
                    let target = if which == 0 { &mut ad.a } else { &mut ad.b };
                    target.as_mut_slice()[e] += delta;
                    m.layer_mut(i).set_adapter(ad).unwrap();
                    m.loss(batch).unwrap()
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = analytic.as_slice()[e];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(floor);
                worst = worst.max(rel);
            }
        }
    }
    worst
}

/// Random unit vector orthogonal to `u` (unit).
pub fn orthogonal_unit(u: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..u.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
    v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= n);
    v
}

pub fn unit(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

pub fn small_shape(width: usize, rank: usize) -> LayerShape {
    LayerShape {
        d_in: width,
        d_out: width,
        rank,
        alpha: 2.0 * rank as f64,
        activation: Activation::Tanh,
    }
}

/// Model whose layers are the given flat vectors.
pub fn model_from_vectors(vectors: &[Vec<f64>], shape: &LayerShape, seed: u64) -> LayeredModel {
    let mut r = rng(seed);
    let layers: Vec<LayerParams> = vectors
        .iter()
        .map(|v| LayerParams::unflatten(&DenseVector::new(v.clone()).unwrap(), shape).unwrap())
        .collect();
    LayeredModel::new(
        uniform(shape.d_in, 3, 0.5, &mut r),
        layers,
        uniform(2, shape.d_in, 0.5, &mut r),
    )
    .unwrap()
}

/// Layers whose flat vectors sit near one of `centres` (plus relative noise
/// `noise`); `labels[i]` picks the centre of layer `i`.
pub fn clustered_vectors(centres: &[Vec<f64>], labels: &[usize], noise: f64, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    labels
        .iter()
        .map(|&l| {
            let scale = rng.random_range(0.5..2.0);
            centres[l]
                .iter()
                .map(|c| scale * (c + noise * rng.random_range(-1.0..1.0)))
                .collect()
        })
        .collect()
}

/// Two orthogonal clusters over `layers` layers with random balanced-ish
/// membership (each cluster has at least two layers).
pub fn planted_two_clusters(layers: usize, seed: u64) -> (LayeredModel, GroupPartition) {
    let mut r = rng(seed);
    let shape = small_shape(4, 2);
    let u = unit(shape.flat_len(), &mut r);
    let v = orthogonal_unit(&u, &mut r);
    let labels = loop {
        let l: Vec<usize> = (0..layers).map(|_| r.random_range(0..2)).collect();
        let ones = l.iter().filter(|&&x| x == 1).count();
        if ones >= 2 && layers - ones >= 2 {
            break l;
        }
    };
    let noise = 0.05 / (shape.flat_len() as f64).sqrt();
    let vectors = clustered_vectors(&[u, v], &labels, noise, &mut r);
    (
        model_from_vectors(&vectors, &shape, seed),
        GroupPartition::from_labels(&labels, 2).unwrap(),
    )
}

/// Every partition of `0..n` into exactly `k` non-empty blocks.
pub fn set_partitions(n: usize, k: usize) -> Vec<Vec<Vec<usize>>> {
    fn go(i: usize, n: usize, k: usize, blocks: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == n {
            if blocks.len() == k {
                out.push(blocks.clone());
            }
            return;
        }
        if blocks.len() + (n - i) < k {
            return;
        }
        for b in 0..blocks.len() {
            blocks[b].push(i);
            go(i + 1, n, k, blocks, out);
            blocks[b].pop();
        }
        if blocks.len() < k {
            blocks.push(vec![i]);
            go(i + 1, n, k, blocks, out);
            blocks.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Small linear-teacher clients for federation tests.
pub fn linear_clients(spec: &ModelSpec, n: usize, samples: usize, seed: u64) -> Vec<Client> {
    let mut r = rng(seed);
    let teacher = uniform(spec.output_dim, spec.input_dim, 1.0, &mut r);
    (0..n)
        .map(|id| {
            let shift = r.random_range(-1.0..1.0);
            let x = Matrix::from_fn(samples, spec.input_dim, |_, _| shift + r.random_range(-1.0..1.0));
            let y = x.matmul_nt(&teacher).unwrap();
            Client::new(id, Batch::new(x, y).unwrap()).unwrap()
        })
        .collect()
}
