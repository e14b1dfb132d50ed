//! The outer loop: rebuild the graph from the current embedding with a growing
//! sparsity, retrain the auto-encoder on it, and finally assign clusters.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans, spectral_clustering, Backend, ClusteringResult, KMeansOptions};
use crate::error::{Error, Result};
use crate::gae::{self, EncoderConfig, FitOptions, GaeParams, LossValue, Optimizer, Problem};
use crate::graph_kernel::{
    build_distribution, pairwise_sq_distances, symmetrize, ConnectivityDistribution, DataMatrix,
    WeightedGraph,
};

/// Upper bound on the sparsity reached by the last epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KMax {
    /// `⌊n / c⌋`
    #[serde(rename = "n_over_c")]
    NOverC,
    /// `⌊n / 2c⌋`
    #[serde(rename = "n_over_2c")]
    NOver2C,
    #[serde(untagged)]
    Value(usize),
}

impl KMax {
    /// Resolves the bound for `n` samples and `c` clusters, clamped to `n − 1`.
    pub fn resolve(self, n: usize, c: usize) -> usize {
        let raw = match self {
            KMax::NOverC => n / c,
            KMax::NOver2C => n / (2 * c),
            KMax::Value(k) => k,
        };
        raw.min(n - 1)
    }
}

impl std::str::FromStr for KMax {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n_over_c" | "n/c" => Ok(KMax::NOverC),
            "n_over_2c" | "n/2c" => Ok(KMax::NOver2C),
            other => other
                .parse()
                .map(KMax::Value)
                .map_err(|_| Error::Config(format!("invalid k_max '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub k0: usize,
    pub k_max: KMax,
    /// Number of graph updates `T`.
    pub epochs: usize,
    pub lambda: f64,
    pub lr: f64,
    /// Auto-encoder iterations per epoch.
    pub inner_iters: usize,
    pub tol: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub backend: Backend,
    /// Encoder widths; `None` picks the default for the input width.
    pub layer_dims: Option<Vec<usize>>,
    /// Keep the epoch-0 graph for the whole run.
    pub freeze_graph: bool,
    /// Keep `k = k0` at every rebuild.
    pub freeze_k: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k0: 5,
            k_max: KMax::NOver2C,
            epochs: 10,
            lambda: 0.1,
            lr: 1e-3,
            inner_iters: 100,
            tol: 1e-6,
            optimizer: Optimizer::Gd,
            seed: 0,
            backend: Backend::Spectral,
            layer_dims: None,
            freeze_graph: false,
            freeze_k: false,
        }
    }
}

impl TrainConfig {
    pub fn encoder(&self, input_dim: usize) -> EncoderConfig {
        match &self.layer_dims {
            Some(dims) => EncoderConfig::with_dims(dims.clone(), self.seed),
            None => EncoderConfig::default_for(input_dim, self.seed),
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            lr: self.lr,
            max_iters: self.inner_iters,
            tol: self.tol,
            optimizer: self.optimizer,
        }
    }
}

/// `k_i = k0 + round(i · (k_max − k0) / T)` for `i = 0..T`.
pub fn sparsity_schedule(k0: usize, k_max: usize, epochs: usize) -> Result<Vec<usize>> {
    if epochs == 0 {
        return Err(Error::Config("need at least one epoch".into()));
    }
    if k0 > k_max {
        return Err(Error::Config(format!("k0 = {k0} exceeds k_max = {k_max}")));
    }
    let span = k_max - k0;
    Ok((0..epochs)
        .map(|i| (k0 + (2 * i * span + epochs) / (2 * epochs)).min(k_max))
        .collect())
}

/// Diagnostics for one completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub k: usize,
    pub iterations: usize,
    pub converged: bool,
    pub loss: LossValue,
    pub nnz: usize,
    pub mean_degree: f64,
    /// Coefficient of variation of the nonzero off-diagonal weights of `Ã`.
    pub weight_dispersion: f64,
}

/// Population coefficient of variation; 0 for fewer than two values.
pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub clustering: ClusteringResult,
    pub epochs: Vec<EpochRecord>,
    /// Total loss at every auto-encoder iteration, epochs concatenated.
    pub loss_trace: Vec<f64>,
    pub embedding: Array2<f64>,
    /// Graph used in the last epoch.
    pub graph: WeightedGraph,
    pub target: ConnectivityDistribution,
    pub params: GaeParams,
}

fn build_graph(z: &Array2<f64>, k: usize) -> Result<(ConnectivityDistribution, WeightedGraph)> {
    let distances = pairwise_sq_distances(z.view())?;
    let p = build_distribution(&distances, k)?;
    let g = symmetrize(&p)?;
    Ok((p, g))
}

/// The sparsity used at each epoch under `config`.
pub fn epoch_sparsities(n: usize, c: usize, config: &TrainConfig) -> Result<Vec<usize>> {
    if c < 2 || c > n {
        return Err(Error::Config(format!("cluster count {c} outside [2, {n}]")));
    }
    if config.k0 < 2 || config.k0 > n - 1 {
        return Err(Error::Config(format!(
            "k0 = {} outside [2, {}]",
            config.k0,
            n - 1
        )));
    }
    let k_max = config.k_max.resolve(n, c);
    if config.freeze_k || config.freeze_graph {
        if config.epochs == 0 {
            return Err(Error::Config("need at least one epoch".into()));
        }
        return Ok(vec![config.k0; config.epochs]);
    }
    sparsity_schedule(config.k0, k_max, config.epochs)
}

/// Runs the full alternating procedure on `x` and clusters into `c` groups.
pub fn run(x: &DataMatrix, c: usize, config: &TrainConfig) -> Result<RunOutput> {
    let n = x.n_samples();
    let ks = epoch_sparsities(n, c, config)?;
    let encoder = config.encoder(x.n_features());
    let fit_options = config.fit_options();
    if !(config.lambda >= 0.0) {
        return Err(Error::Config(format!("lambda = {} must be >= 0", config.lambda)));
    }
    if !(config.lr > 0.0) || config.inner_iters == 0 {
        return Err(Error::Config("lr must be > 0 and inner_iters >= 1".into()));
    }
    let mut params = gae::init_params(x.n_features(), &encoder)?;
    let mut z = x.view().to_owned();
    let mut current: Option<(ConnectivityDistribution, WeightedGraph)> = None;
    let mut epochs = Vec::with_capacity(ks.len());
    let mut loss_trace = Vec::new();

    for (epoch, &k) in ks.iter().enumerate() {
        let at_epoch = |e: Error| Error::Epoch {
            epoch,
            source: Box::new(e),
        };
        if current.is_none() || !config.freeze_graph {
            current = Some(build_graph(&z, k).map_err(at_epoch)?);
        }
        let (p, g) = current.as_ref().expect("graph built above");
        let problem = Problem {
            target: p,
            x: x.view(),
            a_hat: &g.normalized,
            laplacian: &g.laplacian,
            lambda: config.lambda,
        };
        let outcome = gae::fit(&problem, params, &encoder, &fit_options).map_err(at_epoch)?;
        params = outcome.params;
        z = gae::encode(&g.normalized, x.view(), &params, &encoder).map_err(at_epoch)?;
        loss_trace.extend(outcome.trace.iter().map(|l| l.total));
        epochs.push(EpochRecord {
            epoch,
            k,
            iterations: outcome.trace.len(),
            converged: outcome.converged,
            loss: *outcome.trace.last().expect("fit runs at least once"),
            nnz: g.adjacency.nnz(),
            mean_degree: g.degrees.iter().sum::<f64>() / n as f64,
            weight_dispersion: coefficient_of_variation(&g.off_diagonal_weights()),
        });
    }

    let (target, graph) = current.expect("at least one epoch");
    let clustering = match config.backend {
        Backend::Spectral => spectral_clustering(&graph.normalized, c, config.seed)?,
        Backend::Kmeans => kmeans(z.view(), c, config.seed, KMeansOptions::default())?,
    };
    Ok(RunOutput {
        clustering,
        epochs,
        loss_trace,
        embedding: z,
        graph,
        target,
        params,
    })
}
