//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use cross_impact::equilibrium::ModelParams;
use cross_impact::SymMatrix;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `A Aᵀ / n + floor·I`, rescaled by a random factor in `[0.1, 10]`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> SymMatrix {
    let a = gaussian_matrix(rng, n, n);
    let scale = 10f64.powf(rng.random_range(-1.0..1.0));
    let m = (&a * a.transpose() / n as f64 + DMatrix::identity(n, n) * floor) * scale;
    SymMatrix::new(m).unwrap()
}

pub fn random_params(rng: &mut ChaCha8Rng, n: usize) -> ModelParams {
    let p0 = DVector::from_fn(n, |_, _| rng.random_range(50.0..150.0));
    ModelParams::new(p0, random_spd(rng, n, 0.2), random_spd(rng, n, 0.2)).unwrap()
}

pub fn random_unit_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = v.norm();
    v / norm
}

/// Ranks with ties averaged.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
