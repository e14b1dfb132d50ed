//! Graph auto-encoder for weighted graphs.
//!
//! The encoder stacks graph convolutions `H_ℓ = φ_ℓ(Â H_{ℓ−1} W_ℓ)` with
//! `H_0 = X`. The decoder turns embedding distances into a row-wise softmax
//! `q(j | i) ∝ exp(−‖z_i − z_j‖²)`. Training minimizes
//!
//! ```text
//! Σ_ij P_ij · log(1 / Q_ij)  +  λ · tr(Zᵀ L̃ Z)
//! ```
//!
//! with hand-derived reverse-mode gradients.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_kernel::ConnectivityDistribution;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }

    /// Derivative; the rectifier's subgradient at 0 is taken as 0.
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layer_dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub seed: u64,
}

impl EncoderConfig {
    /// Two layers, rectifier then linear: `d-256-64` for inputs of 1024 or
    /// more features, `d-128-64` otherwise.
    pub fn default_for(input_dim: usize, seed: u64) -> Self {
        let layer_dims = if input_dim >= 1024 {
            vec![256, 64]
        } else {
            vec![128, 64]
        };
        Self {
            layer_dims,
            activations: vec![Activation::Relu, Activation::Linear],
            seed,
        }
    }

    /// Rectifier on every layer but the last, which is linear.
    pub fn with_dims(layer_dims: Vec<usize>, seed: u64) -> Self {
        let m = layer_dims.len();
        let activations = (0..m)
            .map(|l| {
                if l + 1 == m {
                    Activation::Linear
                } else {
                    Activation::Relu
                }
            })
            .collect();
        Self {
            layer_dims,
            activations,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.is_empty() {
            return Err(Error::Config("encoder needs at least one layer".into()));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::Config("layer widths must be at least 1".into()));
        }
        if self.activations.len() != self.layer_dims.len() {
            return Err(Error::Config(format!(
                "{} activations for {} layers",
                self.activations.len(),
                self.layer_dims.len()
            )));
        }
        Ok(())
    }
}

/// Per-layer weights; `weights[ℓ]` maps width `h_{ℓ−1}` to `h_ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaeParams {
    pub weights: Vec<Array2<f64>>,
}

impl GaeParams {
    fn check_chain(&self, input_dim: usize, config: &EncoderConfig) -> Result<()> {
        config.validate()?;
        if self.weights.len() != config.layer_dims.len() {
            return Err(Error::Config(format!(
                "{} weight matrices for {} layers",
                self.weights.len(),
                config.layer_dims.len()
            )));
        }
        let mut fan_in = input_dim;
        for (l, (w, &out)) in self.weights.iter().zip(&config.layer_dims).enumerate() {
            if w.dim() != (fan_in, out) {
                return Err(Error::Config(format!(
                    "layer {l}: weight is {:?}, expected ({fan_in}, {out})",
                    w.dim()
                )));
            }
            fan_in = out;
        }
        Ok(())
    }
}

/// Fan-balanced uniform initialization on `±sqrt(6 / (fan_in + fan_out))`.
pub fn init_params(input_dim: usize, config: &EncoderConfig) -> Result<GaeParams> {
    config.validate()?;
    if input_dim == 0 {
        return Err(Error::Config("input dimension must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut fan_in = input_dim;
    let mut weights = Vec::with_capacity(config.layer_dims.len());
    for &fan_out in &config.layer_dims {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        weights.push(Array2::from_shape_simple_fn((fan_in, fan_out), || {
            rng.random_range(-bound..=bound)
        }));
        fan_in = fan_out;
    }
    Ok(GaeParams { weights })
}

struct ForwardPass {
    /// `Â H_{ℓ−1}` for each layer.
    propagated: Vec<Array2<f64>>,
    /// Pre-activations `Â H_{ℓ−1} W_ℓ`.
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

fn forward(
    a_hat: &CsrMatrix,
    x: ArrayView2<'_, f64>,
    params: &GaeParams,
    config: &EncoderConfig,
) -> Result<ForwardPass> {
    params.check_chain(x.ncols(), config)?;
    if a_hat.n_rows() != x.nrows() || a_hat.n_cols() != x.nrows() {
        return Err(Error::Config(format!(
            "adjacency is {}x{} but input has {} rows",
            a_hat.n_rows(),
            a_hat.n_cols(),
            x.nrows()
        )));
    }
    let m = params.weights.len();
    let mut propagated = Vec::with_capacity(m);
    let mut pre = Vec::with_capacity(m);
    let mut h = x.to_owned();
    for (l, (w, act)) in params.weights.iter().zip(&config.activations).enumerate() {
        let ah = a_hat.matmul_dense(h.view())?;
        let s = ah.dot(w);
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite activation in layer {l}")));
        }
        h = s.mapv(|v| act.apply(v));
        propagated.push(ah);
        pre.push(s);
    }
    Ok(ForwardPass {
        propagated,
        pre,
        output: h,
    })
}

/// Embedding `Z` produced by the encoder.
pub fn encode(
    a_hat: &CsrMatrix,
    x: ArrayView2<'_, f64>,
    params: &GaeParams,
    config: &EncoderConfig,
) -> Result<Array2<f64>> {
    Ok(forward(a_hat, x, params, config)?.output)
}

/// Dense row-stochastic reconstruction `q(· | v_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionDistribution(Array2<f64>);

impl ReconstructionDistribution {
    /// Validates a dense strictly positive row-stochastic matrix.
    pub fn from_dense(q: Array2<f64>) -> Result<Self> {
        if !q.is_square() {
            return Err(Error::Shape(format!("reconstruction is {:?}", q.dim())));
        }
        for (i, row) in q.rows().into_iter().enumerate() {
            if row.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::InvalidInput(format!("row {i} has a non-positive entry")));
            }
            if (row.sum() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("row {i} does not sum to 1")));
            }
        }
        Ok(Self(q))
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// Squared embedding distances from the Gram matrix, clamped at 0, with an
/// exact zero diagonal.
fn embedding_sq_distances(z: ArrayView2<'_, f64>) -> Array2<f64> {
    let norms: Array1<f64> = z.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut d = z.dot(&z.t());
    let n = z.nrows();
    for i in 0..n {
        for j in 0..n {
            d[[i, j]] = if i == j {
                0.0
            } else {
                (norms[i] + norms[j] - 2.0 * d[[i, j]]).max(0.0)
            };
        }
    }
    d
}

/// Row-wise log-softmax of `−d̂`. The row maximum of `−d̂` is the diagonal 0,
/// so no extra shift is needed.
fn log_softmax_neg(d: &Array2<f64>) -> Array2<f64> {
    let mut out = d.mapv(|v| -v);
    for mut row in out.rows_mut() {
        let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

pub fn decode(z: ArrayView2<'_, f64>) -> Result<ReconstructionDistribution> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite embedding".into()));
    }
    let d = embedding_sq_distances(z);
    Ok(ReconstructionDistribution(log_softmax_neg(&d).mapv(f64::exp)))
}

/// Objective value and its two parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    /// `Σ_ij P_ij log(1/Q_ij)`.
    pub cross_entropy: f64,
    /// `Σ_ij Ã_ij ‖z_i − z_j‖² = 2 tr(Zᵀ L̃ Z)`.
    pub smoothness: f64,
}

/// `Σ_{i≠j} Ã_ij ‖z_i − z_j‖²` read off the Laplacian's off-diagonal.
fn smoothness_term(z: ArrayView2<'_, f64>, laplacian: &CsrMatrix) -> f64 {
    laplacian
        .triplets()
        .filter(|&(i, j, _)| i != j)
        .map(|(i, j, l)| {
            let d: f64 = z
                .row(i)
                .iter()
                .zip(z.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            -l * d
        })
        .sum::<f64>()
}

fn check_square(name: &str, m: &CsrMatrix, n: usize) -> Result<()> {
    if m.n_rows() != n || m.n_cols() != n {
        return Err(Error::Shape(format!(
            "{name} is {}x{}, expected {n}x{n}",
            m.n_rows(),
            m.n_cols()
        )));
    }
    Ok(())
}

pub fn loss(
    p: &ConnectivityDistribution,
    q: &ReconstructionDistribution,
    z: ArrayView2<'_, f64>,
    laplacian: &CsrMatrix,
    lambda: f64,
) -> Result<LossValue> {
    let n = z.nrows();
    check_square("connectivity", p.matrix(), n)?;
    check_square("laplacian", laplacian, n)?;
    if q.0.dim() != (n, n) {
        return Err(Error::Shape(format!("reconstruction is {:?}", q.0.dim())));
    }
    let mut cross_entropy = 0.0;
    for (i, j, pij) in p.matrix().triplets() {
        if pij > 0.0 {
            let qij = q.0[[i, j]];
            if !(qij > 0.0) {
                return Err(Error::Numeric(format!(
                    "reconstruction vanishes at ({i}, {j}) where the target is {pij}"
                )));
            }
            cross_entropy -= pij * qij.ln();
        }
    }
    let smoothness = smoothness_term(z, laplacian);
    Ok(LossValue {
        total: cross_entropy + lambda * smoothness,
        cross_entropy,
        smoothness,
    })
}

/// Everything the objective needs besides the parameters.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub target: &'a ConnectivityDistribution,
    pub x: ArrayView2<'a, f64>,
    pub a_hat: &'a CsrMatrix,
    pub laplacian: &'a CsrMatrix,
    pub lambda: f64,
}

impl Problem<'_> {
    fn check(&self) -> Result<()> {
        let n = self.x.nrows();
        check_square("connectivity", self.target.matrix(), n)?;
        check_square("normalized adjacency", self.a_hat, n)?;
        check_square("laplacian", self.laplacian, n)?;
        if !(self.lambda >= 0.0) {
            return Err(Error::Parameter(format!("lambda = {} must be >= 0", self.lambda)));
        }
        Ok(())
    }

    /// Loss at `params` without gradients.
    pub fn evaluate(&self, params: &GaeParams, config: &EncoderConfig) -> Result<LossValue> {
        self.check()?;
        let z = forward(self.a_hat, self.x, params, config)?.output;
        let log_q = log_softmax_neg(&embedding_sq_distances(z.view()));
        Ok(self.value_from(z.view(), &log_q))
    }

    fn value_from(&self, z: ArrayView2<'_, f64>, log_q: &Array2<f64>) -> LossValue {
        let cross_entropy: f64 = self
            .target
            .matrix()
            .triplets()
            .filter(|&(_, _, p)| p > 0.0)
            .map(|(i, j, p)| -p * log_q[[i, j]])
            .sum();
        let smoothness = smoothness_term(z, self.laplacian);
        LossValue {
            total: cross_entropy + self.lambda * smoothness,
            cross_entropy,
            smoothness,
        }
    }

    /// Loss and `∂loss/∂W_ℓ` for every layer.
    pub fn gradients(
        &self,
        params: &GaeParams,
        config: &EncoderConfig,
    ) -> Result<(LossValue, Vec<Array2<f64>>)> {
        self.check()?;
        let fwd = forward(self.a_hat, self.x, params, config)?;
        let z = &fwd.output;
        let n = z.nrows();
        let log_q = log_softmax_neg(&embedding_sq_distances(z.view()));
        let value = self.value_from(z.view(), &log_q);

        // ∂CE/∂d̂_ij = P_ij − (Σ_l P_il) Q_ij
        let target = self.target.matrix();
        let row_mass = target.row_sums();
        let mut g = log_q.mapv(f64::exp);
        for (i, mut row) in g.rows_mut().into_iter().enumerate() {
            row *= -row_mass[i];
        }
        for (i, j, p) in target.triplets() {
            g[[i, j]] += p;
        }
        // d̂_ij = ‖z_i − z_j‖²  ⇒  ∂/∂Z = 2 (diag(M 1) − M) Z with M = G + Gᵀ
        let m = &g + &g.t();
        let m_rows = m.sum_axis(Axis(1));
        let mut dz = m.dot(z);
        dz.mapv_inplace(|v| -2.0 * v);
        for i in 0..n {
            let scale = 2.0 * m_rows[i];
            let zi = z.row(i);
            dz.row_mut(i).scaled_add(scale, &zi);
        }
        if self.lambda != 0.0 {
            let lz = self.laplacian.matmul_dense(z.view())?;
            dz.scaled_add(4.0 * self.lambda, &lz);
        }

        let a_hat_t = self.a_hat.transpose();
        let layers = params.weights.len();
        let mut grads = vec![Array2::zeros((0, 0)); layers];
        let mut upstream = dz;
        for l in (0..layers).rev() {
            let act = config.activations[l];
            let mut ds = upstream;
            Zip::from(&mut ds)
                .and(&fwd.pre[l])
                .for_each(|g, &s| *g *= act.derivative(s));
            let gw = fwd.propagated[l].t().dot(&ds);
            if gw.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { layer: l });
            }
            grads[l] = gw;
            if l > 0 {
                let back = ds.dot(&params.weights[l].t());
                upstream = a_hat_t.matmul_dense(back.view())?;
            } else {
                upstream = Array2::zeros((0, 0));
            }
        }
        Ok((value, grads))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Fixed-step full-batch gradient descent.
    #[default]
    Gd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub lr: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub optimizer: Optimizer,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            max_iters: 100,
            tol: 1e-6,
            optimizer: Optimizer::Gd,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: GaeParams,
    /// Loss evaluated before each update, in iteration order.
    pub trace: Vec<LossValue>,
    pub converged: bool,
}

struct AdamState {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: i32,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// One optimizer carrying its own moment estimates across calls to
/// [`Descent::step`].
pub struct Descent {
    params: GaeParams,
    lr: f64,
    adam: Option<AdamState>,
}

impl Descent {
    pub fn new(params: GaeParams, lr: f64, optimizer: Optimizer) -> Result<Self> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::Parameter(format!("learning rate {lr} must be finite and > 0")));
        }
        let adam = match optimizer {
            Optimizer::Adam => Some(AdamState {
                m: params.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
                v: params.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
                t: 0,
            }),
            Optimizer::Gd => None,
        };
        Ok(Self { params, lr, adam })
    }

    pub fn params(&self) -> &GaeParams {
        &self.params
    }

    pub fn into_params(self) -> GaeParams {
        self.params
    }

    /// Evaluates the loss at the current parameters, then updates them.
    /// The returned value is the pre-update loss.
    pub fn step(&mut self, problem: &Problem<'_>, config: &EncoderConfig) -> Result<LossValue> {
        let (value, grads) = problem.gradients(&self.params, config)?;
        if !value.total.is_finite() {
            return Err(Error::Numeric(format!("loss is {}", value.total)));
        }
        self.apply(&grads);
        Ok(value)
    }

    fn apply(&mut self, grads: &[Array2<f64>]) {
        let lr = self.lr;
        match self.adam.as_mut() {
            None => {
                for (w, g) in self.params.weights.iter_mut().zip(grads) {
                    w.scaled_add(-lr, g);
                }
            }
            Some(state) => {
                state.t += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(state.t);
                let c2 = 1.0 - ADAM_BETA2.powi(state.t);
                for (l, (w, g)) in self.params.weights.iter_mut().zip(grads).enumerate() {
                    Zip::from(w)
                        .and(&mut state.m[l])
                        .and(&mut state.v[l])
                        .and(g)
                        .for_each(|w, m, v, &g| {
                            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                        });
                }
            }
        }
    }
}

/// Full-batch first-order training. Stops once the relative loss change
/// drops below `tol` or after `max_iters` gradient evaluations.
pub fn fit(
    problem: &Problem<'_>,
    params: GaeParams,
    config: &EncoderConfig,
    options: &FitOptions,
) -> Result<FitOutcome> {
    if options.max_iters == 0 {
        return Err(Error::Parameter("max_iters must be at least 1".into()));
    }
    let mut descent = Descent::new(params, options.lr, options.optimizer)?;
    let mut trace: Vec<LossValue> = Vec::with_capacity(options.max_iters);
    let mut converged = false;
    for iteration in 0..options.max_iters {
        let (value, grads) = problem.gradients(&descent.params, config)?;
        if !value.total.is_finite() {
            return Err(Error::Diverged {
                iteration,
                lr: options.lr,
                loss: value.total,
            });
        }
        if let Some(prev) = trace.last() {
            let change = (value.total - prev.total).abs() / prev.total.abs().max(1.0);
            if change < options.tol {
                trace.push(value);
                converged = true;
                break;
            }
        }
        trace.push(value);
        descent.apply(&grads);
    }
    Ok(FitOutcome {
        params: descent.into_params(),
        trace,
        converged,
    })
}
