//! Final assignment backends: k-means on the embedding and normalized
//! spectral clustering on `Â`.

use ndarray::{Array2, ArrayView2, Axis};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{normalized_laplacian_dense, symmetric_eigen};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Spectral,
    Kmeans,
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Spectral => "spectral",
            Backend::Kmeans => "kmeans",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub labels: Vec<usize>,
    /// Within-cluster sum of squares of the final k-means step.
    pub objective: f64,
    pub backend: Backend,
    pub clusters: usize,
    /// Number of labels in `0..clusters` that received at least one sample.
    pub occupied: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iters: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iters: 300,
        }
    }
}

/// One seeded Lloyd run.
#[derive(Debug, Clone)]
pub struct LloydRun {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    /// WCSS after each assignment step.
    pub wcss_history: Vec<f64>,
    pub reseeds: usize,
}

impl LloydRun {
    pub fn wcss(&self) -> f64 {
        *self.wcss_history.last().expect("at least one assignment step")
    }
}

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Greedy D² seeding: each new center is drawn with probability
/// proportional to the squared distance to the nearest chosen center.
fn seed_centers(data: ArrayView2<'_, f64>, c: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = data.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| sq_dist(data.row(i), data.row(chosen[0])))
        .collect();
    while chosen.len() < c {
        let next = match WeightedIndex::new(&nearest) {
            Ok(dist) => dist.sample(rng),
            // every point coincides with a center already
            Err(_) => rng.random_range(0..n),
        };
        chosen.push(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(data.row(i), data.row(next)));
        }
    }
    data.select(Axis(0), &chosen)
}

fn assign(data: ArrayView2<'_, f64>, centroids: &Array2<f64>, labels: &mut [usize]) -> f64 {
    let mut wcss = 0.0;
    for (i, row) in data.rows().into_iter().enumerate() {
        let (best, dist) = centroids
            .rows()
            .into_iter()
            .enumerate()
            .map(|(k, c)| (k, sq_dist(row, c)))
            .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
        labels[i] = best;
        wcss += dist;
    }
    wcss
}

/// Lloyd iterations from a D²-seeded start. An emptied cluster takes over the
/// point farthest from its current centroid.
pub fn lloyd(data: ArrayView2<'_, f64>, c: usize, max_iters: usize, rng: &mut ChaCha8Rng) -> LloydRun {
    let (n, d) = data.dim();
    let mut centroids = seed_centers(data, c, rng);
    let mut labels = vec![0; n];
    let mut history = vec![assign(data, &centroids, &mut labels)];
    let mut reseeds = 0;
    for _ in 0..max_iters {
        let mut sums = Array2::<f64>::zeros((c, d));
        let mut counts = vec![0usize; c];
        for (i, &l) in labels.iter().enumerate() {
            sums.row_mut(l).scaled_add(1.0, &data.row(i));
            counts[l] += 1;
        }
        for k in 0..c {
            if counts[k] > 0 {
                let mean = &sums.row(k) / counts[k] as f64;
                centroids.row_mut(k).assign(&mean);
            }
        }
        for k in 0..c {
            if counts[k] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(data.row(a), centroids.row(labels[a]));
                        let db = sq_dist(data.row(b), centroids.row(labels[b]));
                        da.total_cmp(&db).then_with(|| b.cmp(&a))
                    })
                    .expect("n >= 1");
                counts[labels[far]] -= 1;
                labels[far] = k;
                counts[k] = 1;
                centroids.row_mut(k).assign(&data.row(far));
                reseeds += 1;
            }
        }
        let prev = labels.clone();
        let prev_wcss = *history.last().expect("seeded assignment");
        let wcss = assign(data, &centroids, &mut labels);
        history.push(wcss);
        if labels == prev || wcss >= prev_wcss {
            break;
        }
    }
    LloydRun {
        labels,
        centroids,
        wcss_history: history,
        reseeds,
    }
}

fn occupied(labels: &[usize], c: usize) -> usize {
    let mut seen = vec![false; c];
    for &l in labels {
        seen[l] = true;
    }
    seen.iter().filter(|&&s| s).count()
}

/// Best of `restarts` Lloyd runs by WCSS; ties go to the earlier restart.
pub fn kmeans(
    data: ArrayView2<'_, f64>,
    c: usize,
    seed: u64,
    options: KMeansOptions,
) -> Result<ClusteringResult> {
    let n = data.nrows();
    if c < 1 || c > n {
        return Err(Error::Parameter(format!("cluster count {c} outside [1, {n}]")));
    }
    if options.restarts == 0 {
        return Err(Error::Parameter("k-means needs at least one restart".into()));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite k-means input".into()));
    }
    let mut best: Option<LloydRun> = None;
    for restart in 0..options.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let run = lloyd(data, c, options.max_iters, &mut rng);
        if best.as_ref().is_none_or(|b| run.wcss() < b.wcss()) {
            best = Some(run);
        }
    }
    let best = best.expect("restarts >= 1");
    Ok(ClusteringResult {
        occupied: occupied(&best.labels, c),
        objective: best.wcss(),
        labels: best.labels,
        backend: Backend::Kmeans,
        clusters: c,
    })
}

/// The `c` eigenvectors of `I − Â` with the smallest eigenvalues, rows scaled
/// to unit length (zero rows stay zero).
pub fn spectral_embedding(a_hat: &CsrMatrix, c: usize) -> Result<Array2<f64>> {
    let n = a_hat.n_rows();
    if !a_hat.is_square() {
        return Err(Error::Shape("normalized adjacency must be square".into()));
    }
    if c < 1 || c > n {
        return Err(Error::Parameter(format!("cluster count {c} outside [1, {n}]")));
    }
    let spectrum = symmetric_eigen(&normalized_laplacian_dense(a_hat))?;
    let mut u = spectrum.vectors.slice(ndarray::s![.., ..c]).to_owned();
    for mut row in u.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    Ok(u)
}

pub fn spectral_clustering(a_hat: &CsrMatrix, c: usize, seed: u64) -> Result<ClusteringResult> {
    let u = spectral_embedding(a_hat, c)?;
    let km = kmeans(u.view(), c, seed, KMeansOptions::default())?;
    Ok(ClusteringResult {
        backend: Backend::Spectral,
        ..km
    })
}
