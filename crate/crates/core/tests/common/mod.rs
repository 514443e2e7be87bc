#![allow(dead_code)]

use mprune_core::zoo::{build_mlp, recover_finetune, Batch, GroupTable, Model};
use mprune_core::{ParamSet, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOY_TEXT: &str = "the quick brown fox jumps over the lazy dog while the cat sleeps on the mat. \
a bird sings in the tree and the dog barks at the bird. the fox runs into the woods and the cat wakes up. \
small models learn small patterns from small texts, one byte at a time, again and again and again. ";

pub fn toy_corpus(repeats: usize) -> String {
    TOY_TEXT.repeat(repeats)
}

/// Four Gaussian blobs in `dim` dimensions.
pub fn blobs(n: usize, dim: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..4).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 4;
        for center in &centers[c] {
            data.push(center + 0.3 * rng.random_range(-1.0..1.0));
        }
        labels.push(c);
    }
    Batch::Features { inputs: Tensor::new(vec![n, dim], data).unwrap(), labels }
}

/// Uniform inputs in [-1, 1] with arbitrary labels.
pub fn random_features(n: usize, dim: usize, classes: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    Batch::Features { inputs: Tensor::new(vec![n, dim], data).unwrap(), labels }
}

pub fn split(batch: &Batch, size: usize) -> Vec<Batch> {
    let Batch::Features { inputs, labels } = batch else { panic!("feature batch expected") };
    let dim = inputs.shape()[1];
    labels
        .chunks(size)
        .enumerate()
        .map(|(i, l)| {
            let rows = &inputs.data()[i * size * dim..(i * size + l.len()) * dim];
            Batch::Features { inputs: Tensor::new(vec![l.len(), dim], rows.to_vec()).unwrap(), labels: l.to_vec() }
        })
        .collect()
}

/// `[8, 16, 16, 4]` ReLU MLP trained on blob data; returns the calibration batch too.
pub fn trained_toy_mlp(seed: u64) -> (Model, ParamSet, GroupTable, Batch) {
    let (model, params, groups) = build_mlp(&[8, 16, 16, 4], seed).unwrap();
    let data = blobs(64, 8, seed.wrapping_add(100));
    let trained = recover_finetune(&model, &params, &split(&data, 16), 20, 0.2).unwrap();
    let calibration = blobs(16, 8, seed.wrapping_add(200));
    (model, trained.params, groups, calibration)
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}
