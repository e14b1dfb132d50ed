//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use gae_cluster::gae::{self, Activation, EncoderConfig, Problem};
use gae_cluster::graph_kernel::{build_distribution, pairwise_sq_distances, symmetrize};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(lo..hi))
}

/// Squared Euclidean distances by a plain double loop.
pub fn sq_distances(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for c in 0..x.ncols() {
                let diff = x[[i, c]] - x[[j, c]];
                s += diff * diff;
            }
            d[[i, j]] = s;
        }
    }
    d
}

/// Simplex projection by sorting (Held, Wolfe and Crowder).
pub fn project_simplex_sorted(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumulative += uj;
        let t = (cumulative - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Accelerated projected gradient for `min dᵀp + γ‖p‖²` on the simplex.
pub fn simplex_qp(d: &[f64], gamma: f64, iters: usize) -> Vec<f64> {
    let n = d.len();
    let step = 1.0 / (2.0 * gamma) * 0.9;
    let mut p = vec![1.0 / n as f64; n];
    let mut y = p.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let moved: Vec<f64> = y.iter().zip(d).map(|(&yj, &dj)| yj - step * (dj + 2.0 * gamma * yj)).collect();
        let next = project_simplex_sorted(&moved);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = next
            .iter()
            .zip(&p)
            .map(|(&a, &b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        p = next;
        t = t_next;
    }
    p
}

/// Symmetric eigenvalues by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(m: &Array2<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut values: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Accuracy by trying every injective relabeling of predicted clusters.
pub fn brute_force_accuracy(truth: &[usize], pred: &[usize]) -> f64 {
    let t_max = truth.iter().max().unwrap() + 1;
    let p_max = pred.iter().max().unwrap() + 1;
    let size = t_max.max(p_max);
    let mut perm: Vec<usize> = (0..size).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |perm| {
        let hits = truth.iter().zip(pred).filter(|(&t, &p)| perm[p] == t).count();
        best = best.max(hits);
    });
    best as f64 / truth.len() as f64
}

fn permute(v: &mut Vec<usize>, start: usize, f: &mut dyn FnMut(&[usize])) {
    if start == v.len() {
        f(v);
        return;
    }
    for i in start..v.len() {
        v.swap(start, i);
        permute(v, start + 1, f);
        v.swap(start, i);
    }
}

/// NMI from the contingency-table formula with log base 2 and geometric-mean
/// normalization.
pub fn reference_nmi(truth: &[usize], pred: &[usize]) -> f64 {
    let n = truth.len() as f64;
    let mut joint = std::collections::HashMap::new();
    let mut a = std::collections::HashMap::new();
    let mut b = std::collections::HashMap::new();
    for (&t, &p) in truth.iter().zip(pred) {
        *joint.entry((t, p)).or_insert(0.0) += 1.0;
        *a.entry(t).or_insert(0.0) += 1.0;
        *b.entry(p).or_insert(0.0) += 1.0;
    }
    let h = |m: &std::collections::HashMap<usize, f64>| -> f64 {
        m.values().map(|&c| -(c / n) * (c / n).log2()).sum()
    };
    let (ha, hb) = (h(&a), h(&b));
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }
    if ha == 0.0 || hb == 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for (&(t, p), &c) in &joint {
        mi += (c / n) * ((c / n) / ((a[&t] / n) * (b[&p] / n))).log2();
    }
    mi / (ha * hb).sqrt()
}

pub struct Instance {
    pub x: ndarray::Array2<f64>,
    pub k: usize,
    pub lambda: f64,
    pub cfg: EncoderConfig,
}

pub fn instance(seed: u64) -> Instance {
    let mut rng = rng(seed, 7);
    let n = rng.random_range(5..=12);
    let d = rng.random_range(2..=5);
    let k = rng.random_range(2..n);
    let lambda = if seed % 4 == 0 { 0.0 } else { rng.random_range(0.0..2.0) };
    let dims = if seed % 2 == 0 {
        vec![rng.random_range(2..=6), rng.random_range(2..=4)]
    } else {
        vec![rng.random_range(2..=4)]
    };
    let mut cfg = EncoderConfig::with_dims(dims, seed);
    if seed % 3 == 0 {
        cfg.activations = vec![Activation::Linear; cfg.layer_dims.len()];
    }
    Instance {
        x: random_matrix(&mut rng, n, d, 0.0, 1.0),
        k,
        lambda,
        cfg,
    }
}

/// Largest relative discrepancy between analytic and central-difference
/// gradients over every weight of every layer.
pub fn gradient_error(seed: u64, h: f64) -> f64 {
    let inst = instance(seed);
    let p = build_distribution(&pairwise_sq_distances(inst.x.view()).unwrap(), inst.k).unwrap();
    let g = symmetrize(&p).unwrap();
    let problem = Problem {
        target: &p,
        x: inst.x.view(),
        a_hat: &g.normalized,
        laplacian: &g.laplacian,
        lambda: inst.lambda,
    };
    let params = gae::init_params(inst.x.ncols(), &inst.cfg).unwrap();
    let (_, grads) = problem.gradients(&params, &inst.cfg).unwrap();
    let mut worst: f64 = 0.0;
    for (l, grad) in grads.iter().enumerate() {
        let scale = grad.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-3);
        for ((r, c), &analytic) in grad.indexed_iter() {
            let mut plus = params.clone();
            plus.weights[l][[r, c]] += h;
            let mut minus = params.clone();
            minus.weights[l][[r, c]] -= h;
            let fd = (problem.evaluate(&plus, &inst.cfg).unwrap().total
                - problem.evaluate(&minus, &inst.cfg).unwrap().total)
                / (2.0 * h);
            worst = worst.max((analytic - fd).abs() / scale);
        }
    }
    worst
}
