mod common;

use gae_cluster::clustering::{kmeans, lloyd, spectral_clustering, KMeansOptions};
use gae_cluster::gae::{self, decode, EncoderConfig, Problem};
use gae_cluster::graph_kernel::{
    build_distribution, compute_gamma, pairwise_sq_distances, solve_connectivity_row, symmetrize,
};
use gae_cluster::linalg::{normalized_laplacian_dense, symmetric_eigen};
use gae_cluster::metrics::{accuracy, nmi};
use gae_cluster::sparse::CsrMatrix;
use gae_cluster::trainer::{epoch_sparsities, KMax, TrainConfig};
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matrix(rows: std::ops::RangeInclusive<usize>, cols: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Array2<f64>> {
    (rows, cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-3.0f64..3.0, r * c)
            .prop_map(move |v| Array2::from_shape_vec((r, c), v).unwrap())
    })
}

/// A distance row with the self entry at 0 and positive others.
fn distance_row() -> impl Strategy<Value = (Vec<f64>, usize)> {
    (3usize..25).prop_flat_map(|n| {
        (prop::collection::vec(0.001f64..10.0, n), 0..n).prop_map(|(mut row, i)| {
            row[i] = 0.0;
            (row, i)
        })
    })
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rows_are_stochastic_and_k_sparse((row, i) in distance_row(), k_frac in 0.0f64..1.0) {
        let k = 2 + ((row.len() - 3) as f64 * k_frac) as usize;
        let p = solve_connectivity_row(&row, i, k).unwrap();
        let total: f64 = p.iter().map(|&(_, v)| v).sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        prop_assert!(p.len() <= k);
        prop_assert!(p.iter().all(|&(_, v)| v > 0.0));
        let mut sorted = row.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted[..=k].windows(2).all(|w| w[0] < w[1]) {
            prop_assert_eq!(p.len(), k);
        }
    }

    #[test]
    fn gamma_non_decreasing_in_k((row, i) in distance_row()) {
        let gammas: Vec<f64> = (2..row.len()).map(|k| compute_gamma(&row, i, k).unwrap()).collect();
        prop_assert!(gammas.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn solution_is_scale_covariant((row, i) in distance_row(), scale in 0.01f64..100.0) {
        let k = 2.max(row.len() / 2);
        let scaled: Vec<f64> = row.iter().map(|v| v * scale).collect();
        let a = solve_connectivity_row(&row, i, k).unwrap();
        let b = solve_connectivity_row(&scaled, i, k).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.0, y.0);
            prop_assert!((x.1 - y.1).abs() <= 1e-12);
        }
    }

    #[test]
    fn normalized_laplacian_spectrum_in_range(x in matrix(4..=15, 1..=4), k_frac in 0.0f64..1.0) {
        let n = x.nrows();
        let k = 2 + ((n - 3) as f64 * k_frac) as usize;
        let g = symmetrize(&build_distribution(&pairwise_sq_distances(x.view()).unwrap(), k).unwrap()).unwrap();
        let spectrum = symmetric_eigen(&normalized_laplacian_dense(&g.normalized)).unwrap();
        prop_assert!(spectrum.values.iter().all(|&v| (-1e-8..=2.0 + 1e-8).contains(&v)));
        prop_assert!(spectrum.values[0].abs() <= 1e-8);
    }

    #[test]
    fn decoder_rows_positive_and_translation_invariant(z in matrix(2..=10, 1..=4), shift in prop::collection::vec(-5.0f64..5.0, 4)) {
        let q = decode(z.view()).unwrap().into_inner();
        for row in q.rows() {
            prop_assert!(row.iter().all(|&v| v > 0.0));
            prop_assert!((row.sum() - 1.0).abs() <= 1e-9);
        }
        let mut moved = z.clone();
        for mut r in moved.rows_mut() {
            for (v, s) in r.iter_mut().zip(&shift) {
                *v += s;
            }
        }
        let q2 = decode(moved.view()).unwrap().into_inner();
        for (a, b) in q.iter().zip(q2.iter()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn loss_components_nonnegative(x in matrix(4..=10, 2..=4), seed in 0u64..1000, lambda in 0.0f64..5.0) {
        let n = x.nrows();
        let p = build_distribution(&pairwise_sq_distances(x.view()).unwrap(), 2.max(n / 2)).unwrap();
        let g = symmetrize(&p).unwrap();
        let cfg = EncoderConfig::with_dims(vec![5, 3], seed);
        let params = gae::init_params(x.ncols(), &cfg).unwrap();
        let problem = Problem { target: &p, x: x.view(), a_hat: &g.normalized, laplacian: &g.laplacian, lambda };
        let value = problem.evaluate(&params, &cfg).unwrap();
        prop_assert!(value.cross_entropy >= 0.0);
        prop_assert!(value.smoothness >= 0.0);
        prop_assert!((value.total - value.cross_entropy - lambda * value.smoothness).abs() <= 1e-9 * value.total.abs().max(1.0));
    }

    #[test]
    fn encoder_and_loss_permutation_equivariant(x in matrix(4..=9, 2..=3), seed in 0u64..1000, perm_seed in any::<u64>()) {
        let n = x.nrows();
        let perm: Vec<usize> = {
            let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
            let mut v: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(v.as_mut_slice(), &mut rng);
            v
        };
        let k = 2.max(n / 2);
        let xp = Array2::from_shape_fn(x.raw_dim(), |(i, j)| x[[perm[i], j]]);
        let cfg = EncoderConfig::with_dims(vec![4, 3], seed);
        let params = gae::init_params(x.ncols(), &cfg).unwrap();
        let eval = |x: &Array2<f64>| {
            let p = build_distribution(&pairwise_sq_distances(x.view()).unwrap(), k).unwrap();
            let g = symmetrize(&p).unwrap();
            let problem = Problem { target: &p, x: x.view(), a_hat: &g.normalized, laplacian: &g.laplacian, lambda: 0.3 };
            let z = gae::encode(&g.normalized, x.view(), &params, &cfg).unwrap();
            (z, problem.evaluate(&params, &cfg).unwrap().total)
        };
        let (z, loss) = eval(&x);
        let (zp, loss_p) = eval(&xp);
        // tie-breaking by index can differ after permutation on exact ties; random inputs have none
        prop_assert!((loss - loss_p).abs() <= 1e-9 * loss.abs().max(1.0));
        for i in 0..n {
            for j in 0..z.ncols() {
                prop_assert!((zp[[i, j]] - z[[perm[i], j]]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn lloyd_wcss_non_increasing(x in matrix(6..=30, 1..=3), c in 2usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let run = lloyd(x.view(), c.min(x.nrows()), 100, &mut rng);
        prop_assert!(run.wcss_history.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn accuracy_relabel_invariant(
        labels in prop::collection::vec((0usize..4, 0usize..4), 1..40),
        perm_t in permutation(4),
        perm_p in permutation(4),
    ) {
        let truth: Vec<usize> = labels.iter().map(|l| l.0).collect();
        let pred: Vec<usize> = labels.iter().map(|l| l.1).collect();
        let a = accuracy(&truth, &pred).unwrap();
        let t2: Vec<usize> = truth.iter().map(|&t| perm_t[t]).collect();
        let p2: Vec<usize> = pred.iter().map(|&p| perm_p[p]).collect();
        prop_assert!((a - accuracy(&t2, &p2).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn nmi_symmetric_and_bounded(labels in prop::collection::vec((0usize..5, 0usize..5), 1..60)) {
        let truth: Vec<usize> = labels.iter().map(|l| l.0).collect();
        let pred: Vec<usize> = labels.iter().map(|l| l.1).collect();
        let a = nmi(&truth, &pred).unwrap();
        let b = nmi(&pred, &truth).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
    }

    #[test]
    fn schedule_within_bounds(n in 10usize..500, c in 2usize..6, k0 in 2usize..8, epochs in 1usize..15, freeze in any::<bool>()) {
        prop_assume!(c <= n && k0 < n);
        let cfg = TrainConfig { k0, k_max: KMax::NOverC, epochs, freeze_k: freeze, ..TrainConfig::default() };
        match epoch_sparsities(n, c, &cfg) {
            Ok(ks) => {
                let upper = KMax::NOverC.resolve(n, c).max(k0).min(n - 1);
                prop_assert_eq!(ks.len(), epochs);
                prop_assert!(ks.windows(2).all(|w| w[0] <= w[1]));
                prop_assert!(ks.iter().all(|&k| k >= k0 && k <= upper));
            }
            Err(_) => prop_assert!(k0 > KMax::NOverC.resolve(n, c) && !freeze),
        }
    }
}

/// Block-diagonal graph with `c` components of random sizes and weights.
fn component_graph(sizes: &[usize], seed: u64) -> (CsrMatrix, Vec<usize>) {
    let mut rng = common::rng(seed, 1);
    let n: usize = sizes.iter().sum();
    let mut dense = Array2::zeros((n, n));
    let mut labels = Vec::with_capacity(n);
    let mut start = 0;
    for (b, &size) in sizes.iter().enumerate() {
        let block = common::random_matrix(&mut rng, size, size, 0.1, 1.0);
        for i in 0..size {
            for j in 0..size {
                dense[[start + i, start + j]] = 0.5 * (block[[i, j]] + block[[j, i]]);
            }
            labels.push(b);
        }
        start += size;
    }
    let degrees: Vec<f64> = dense.rows().into_iter().map(|r| r.sum()).collect();
    let a_hat = Array2::from_shape_fn((n, n), |(i, j)| dense[[i, j]] / (degrees[i] * degrees[j]).sqrt());
    (CsrMatrix::from_dense(a_hat.view(), 0.0), labels)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn spectral_recovers_components(sizes in prop::collection::vec(2usize..12, 2..5), seed in any::<u64>()) {
        let (a_hat, truth) = component_graph(&sizes, seed);
        let result = spectral_clustering(&a_hat, sizes.len(), seed).unwrap();
        prop_assert_eq!(accuracy(&truth, &result.labels).unwrap(), 1.0);
    }

    #[test]
    fn backends_permutation_covariant(sizes in prop::collection::vec(3usize..10, 2..4), seed in any::<u64>(), perm_seed in any::<u64>()) {
        let (a_hat, truth) = component_graph(&sizes, seed);
        let n = truth.len();
        let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let dense = a_hat.to_dense();
        let permuted = Array2::from_shape_fn((n, n), |(i, j)| dense[[perm[i], perm[j]]]);
        let a = spectral_clustering(&a_hat, sizes.len(), seed).unwrap().labels;
        let b = spectral_clustering(&CsrMatrix::from_dense(permuted.view(), 0.0), sizes.len(), seed).unwrap().labels;
        let a_perm: Vec<usize> = perm.iter().map(|&i| a[i]).collect();
        prop_assert_eq!(accuracy(&a_perm, &b).unwrap(), 1.0);

        // well-separated points for k-means
        let points = Array2::from_shape_fn((n, 2), |(i, d)| 10.0 * truth[i] as f64 + if d == 0 { 0.01 * i as f64 } else { 0.0 });
        let points_p = Array2::from_shape_fn((n, 2), |(i, d)| points[[perm[i], d]]);
        let ka = kmeans(points.view(), sizes.len(), seed, KMeansOptions::default()).unwrap().labels;
        let kb = kmeans(points_p.view(), sizes.len(), seed, KMeansOptions::default()).unwrap().labels;
        let ka_perm: Vec<usize> = perm.iter().map(|&i| ka[i]).collect();
        prop_assert_eq!(accuracy(&ka_perm, &kb).unwrap(), 1.0);
    }
}
