//! Seeded toy datasets with known labels.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    GaussianBlobs,
    TwoMoons,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub generator: Generator,
    pub n: usize,
    /// Number of blobs; ignored for moons, which always have two.
    pub clusters: usize,
    pub dim: usize,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if !(spec.noise >= 0.0) {
        return Err(Error::Config(format!("noise {} must be >= 0", spec.noise)));
    }
    match spec.generator {
        Generator::GaussianBlobs => gaussian_blobs(spec.n, spec.clusters, spec.dim, spec.noise, spec.seed),
        Generator::TwoMoons => two_moons(spec.n, spec.noise, spec.seed),
    }
}

/// Blob centers on a circle in the first two coordinates, spaced so that
/// neighbouring centers are at least 1 apart.
fn blob_center(j: usize, c: usize, dim: usize) -> Vec<f64> {
    let mut center = vec![0.0; dim];
    if dim == 1 {
        center[0] = 2.0 * j as f64;
        return center;
    }
    let radius = if c > 1 {
        (1.0 / (2.0 * (PI / c as f64).sin())).max(1.0)
    } else {
        0.0
    };
    let angle = 2.0 * PI * j as f64 / c as f64;
    center[0] = radius * angle.cos();
    center[1] = radius * angle.sin();
    center
}

/// `n` points split as evenly as possible over `c` isotropic Gaussians.
pub fn gaussian_blobs(n: usize, c: usize, dim: usize, noise: f64, seed: u64) -> Result<SyntheticData> {
    if c < 1 || dim < 1 || n < 2 * c {
        return Err(Error::Config(format!(
            "blobs need c >= 1, dim >= 1 and n >= 2c (n = {n}, c = {c}, dim = {dim})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise).map_err(|e| Error::Config(e.to_string()))?;
    let labels: Vec<usize> = (0..n).map(|i| i * c / n).collect();
    let centers: Vec<Vec<f64>> = (0..c).map(|j| blob_center(j, c, dim)).collect();
    let mut features = Array2::zeros((n, dim));
    for (i, &l) in labels.iter().enumerate() {
        for d in 0..dim {
            features[[i, d]] = centers[l][d] + normal.sample(&mut rng);
        }
    }
    Ok(SyntheticData { features, labels })
}

/// Two interleaved unit half-circles; the lower one is shifted by (1, −0.5).
pub fn two_moons(n: usize, noise: f64, seed: u64) -> Result<SyntheticData> {
    if n < 4 {
        return Err(Error::Config(format!("moons need n >= 4, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise).map_err(|e| Error::Config(e.to_string()))?;
    let n_upper = n / 2;
    let n_lower = n - n_upper;
    let mut features = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    let step = |count: usize, i: usize| {
        if count > 1 {
            PI * i as f64 / (count - 1) as f64
        } else {
            0.0
        }
    };
    for i in 0..n_upper {
        let t = step(n_upper, i);
        features[[i, 0]] = t.cos();
        features[[i, 1]] = t.sin();
        labels.push(0);
    }
    for i in 0..n_lower {
        let t = step(n_lower, i);
        features[[n_upper + i, 0]] = 1.0 - t.cos();
        features[[n_upper + i, 1]] = 0.5 - t.sin();
        labels.push(1);
    }
    if noise > 0.0 {
        features.mapv_inplace(|v| v + normal.sample(&mut rng));
    }
    Ok(SyntheticData { features, labels })
}
