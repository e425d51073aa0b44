//! Local objectives `f_i`, stochastic gradient oracles and the reference
//! optimum of `f = (1/n) Σ f_i`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::Shard;
use crate::rng::{substream, StreamTag};
use crate::{Error, Result};

pub use crate::dataset::partition_dataset;

/// Default stopping tolerance on `‖∇f‖` for [`solve_reference`].
pub const REFERENCE_TOL: f64 = 1e-10;
/// Iteration cap for [`solve_reference`].
pub const REFERENCE_MAX_ITERS: usize = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub enum ObjectiveKind {
    /// `f_i(x) = ½ xᵀA_i x − b_iᵀx`.
    Quadratic { a: Vec<DMatrix<f64>>, b: Vec<DVector<f64>> },
    /// Mean binary cross-entropy with a sigmoid link plus `(λ/2)‖x‖²`.
    Logistic { shards: Vec<Shard>, lambda: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    kind: ObjectiveKind,
    n: usize,
    d: usize,
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^s)` without overflow.
fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

impl Objective {
    pub fn quadratic(a: Vec<DMatrix<f64>>, b: Vec<DVector<f64>>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::InvalidObjective(format!(
                "need one (A_i, b_i) pair per node, got {} matrices and {} vectors",
                a.len(),
                b.len()
            )));
        }
        let d = b[0].len();
        for (i, (ai, bi)) in a.iter().zip(&b).enumerate() {
            if ai.nrows() != d || ai.ncols() != d || bi.len() != d {
                return Err(Error::DimensionMismatch(format!("node {i}: A is {}x{}, b has {}", ai.nrows(), ai.ncols(), bi.len())));
            }
            if (ai - ai.transpose()).amax() > 1e-12 * ai.amax().max(1.0) {
                return Err(Error::InvalidObjective(format!("A_{i} is not symmetric")));
            }
            if Cholesky::new(ai.clone()).is_none() {
                return Err(Error::InvalidObjective(format!("A_{i} is not positive definite")));
            }
        }
        Ok(Objective {
            n: a.len(),
            d,
            kind: ObjectiveKind::Quadratic { a, b },
        })
    }

    pub fn logistic(shards: Vec<Shard>, lambda: f64) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::InvalidObjective("logistic objective needs at least one shard".into()));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidObjective(format!("regularization must be > 0, got {lambda}")));
        }
        let d = shards[0].features.ncols();
        for (i, s) in shards.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::InvalidObjective(format!("shard {i} is empty")));
            }
            if s.features.ncols() != d || s.features.nrows() != s.len() {
                return Err(Error::DimensionMismatch(format!("shard {i} has inconsistent shape")));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (i, s) in shards.iter().enumerate() {
            for r in &s.source_rows {
                if !seen.insert(*r) {
                    return Err(Error::InvalidObjective(format!("shard {i} reuses dataset row {r}")));
                }
            }
        }
        Ok(Objective {
            n: shards.len(),
            d,
            kind: ObjectiveKind::Logistic { shards, lambda },
        })
    }

    /// Random strongly convex quadratics with eigenvalues of every `A_i` in
    /// `[1, kappa]` and local minimizers scattered with standard deviation
    /// `spread`, so that the nodes disagree at the global optimum.
    pub fn random_quadratic(n: usize, d: usize, kappa: f64, spread: f64, seed: u64) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidObjective("quadratic needs n, d >= 1".into()));
        }
        if kappa.is_nan() || kappa < 1.0 {
            return Err(Error::InvalidObjective(format!("kappa must be >= 1, got {kappa}")));
        }
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = substream(seed, StreamTag::Objective, &[i as u64]);
            let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let q = g.qr().q();
            let eig = DVector::from_fn(d, |k, _| {
                if d == 1 {
                    1.0 + (kappa - 1.0) * rng.random::<f64>()
                } else if k == 0 {
                    1.0
                } else if k == d - 1 {
                    kappa
                } else {
                    1.0 + (kappa - 1.0) * rng.random::<f64>()
                }
            });
            let mut ai = &q * DMatrix::from_diagonal(&eig) * q.transpose();
            ai = (&ai + ai.transpose()) * 0.5;
            let c = DVector::from_fn(d, |_, _| spread * rng.sample::<f64, _>(StandardNormal));
            b.push(&ai * c);
            a.push(ai);
        }
        Self::quadratic(a, b)
    }

    pub fn kind(&self) -> &ObjectiveKind {
        &self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn is_logistic(&self) -> bool {
        matches!(self.kind, ObjectiveKind::Logistic { .. })
    }

    /// Number of data points held by node `i` (0 for quadratics).
    pub fn shard_len(&self, i: usize) -> usize {
        match &self.kind {
            ObjectiveKind::Quadratic { .. } => 0,
            ObjectiveKind::Logistic { shards, .. } => shards[i].len(),
        }
    }

    fn check_args(&self, i: usize, x: &DVector<f64>) -> Result<()> {
        if i >= self.n {
            return Err(Error::InvalidInput(format!("node {i} out of range (n = {})", self.n)));
        }
        if x.len() != self.d {
            return Err(Error::DimensionMismatch(format!("x has {} entries, objective dimension is {}", x.len(), self.d)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("x contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn local_value_grad(&self, i: usize, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self.check_args(i, x)?;
        Ok(match &self.kind {
            ObjectiveKind::Quadratic { a, b } => {
                let ax = &a[i] * x;
                let value = 0.5 * x.dot(&ax) - b[i].dot(x);
                (value, ax - &b[i])
            }
            ObjectiveKind::Logistic { shards, lambda } => {
                let shard = &shards[i];
                let rows: Vec<usize> = (0..shard.len()).collect();
                logistic_batch(shard, *lambda, x, &rows)
            }
        })
    }

    pub fn local_grad(&self, i: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.local_value_grad(i, x)?.1)
    }

    /// Gradient of node `i`'s loss restricted to the given shard rows.
    pub fn batch_grad(&self, i: usize, x: &DVector<f64>, rows: &[usize]) -> Result<DVector<f64>> {
        self.check_args(i, x)?;
        match &self.kind {
            ObjectiveKind::Quadratic { .. } => Err(Error::InvalidObjective(
                "minibatch sampling requires a data-backed objective".into(),
            )),
            ObjectiveKind::Logistic { shards, lambda } => Ok(logistic_batch(&shards[i], *lambda, x, rows).1),
        }
    }

    /// Value and gradient of `f = (1/n) Σ f_i`.
    pub fn global_value_grad(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let mut value = 0.0;
        let mut grad = DVector::zeros(self.d);
        for i in 0..self.n {
            let (v, g) = self.local_value_grad(i, x)?;
            value += v;
            grad += g;
        }
        let inv = 1.0 / self.n as f64;
        Ok((value * inv, grad * inv))
    }

    pub fn local_hessian(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64> {
        match &self.kind {
            ObjectiveKind::Quadratic { a, .. } => a[i].clone(),
            ObjectiveKind::Logistic { shards, lambda } => {
                let s = &shards[i];
                let m = s.len() as f64;
                let scores = &s.features * x;
                let mut weighted = s.features.clone();
                for (r, mut row) in weighted.row_iter_mut().enumerate() {
                    let p = sigmoid(scores[r]);
                    row *= (p * (1.0 - p) / m).sqrt();
                }
                let mut h = weighted.transpose() * &weighted;
                for k in 0..self.d {
                    h[(k, k)] += lambda;
                }
                h
            }
        }
    }

    pub fn global_hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.d, self.d);
        for i in 0..self.n {
            h += self.local_hessian(i, x);
        }
        h / self.n as f64
    }
}

fn logistic_batch(shard: &Shard, lambda: f64, x: &DVector<f64>, rows: &[usize]) -> (f64, DVector<f64>) {
    let d = x.len();
    let mut value = 0.0;
    let mut grad = DVector::zeros(d);
    for &r in rows {
        let y = shard.features.row(r);
        let s = (y * x)[(0, 0)];
        let z = shard.labels[r];
        value += softplus(s) - z * s;
        let coef = sigmoid(s) - z;
        for c in 0..d {
            grad[c] += coef * y[c];
        }
    }
    let inv = 1.0 / rows.len() as f64;
    value = value * inv + 0.5 * lambda * x.norm_squared();
    grad = grad * inv + x * lambda;
    (value, grad)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OracleMode {
    Exact,
    Minibatch { batch_size: usize },
    /// `∇f_i(x) + g` with `g ~ N(0, (σ_g²/d) I)`, so `E‖g‖² = σ_g²`.
    AdditiveGaussian { sigma_g: f64 },
}

impl fmt::Display for OracleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleMode::Exact => write!(f, "exact"),
            OracleMode::Minibatch { batch_size } => write!(f, "minibatch(B={batch_size})"),
            OracleMode::AdditiveGaussian { sigma_g } => write!(f, "gaussian(sigma_g={sigma_g})"),
        }
    }
}

/// Names accepted by the `oracle.mode` configuration key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleModeName {
    Exact,
    Minibatch,
    Gaussian,
}

impl FromStr for OracleModeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(OracleModeName::Exact),
            "minibatch" => Ok(OracleModeName::Minibatch),
            "gaussian" | "additive_gaussian" => Ok(OracleModeName::Gaussian),
            other => Err(Error::InvalidInput(format!("unknown oracle mode `{other}`"))),
        }
    }
}

/// A gradient sample plus whether the requested batch had to be clamped.
#[derive(Clone, Debug, PartialEq)]
pub struct GradSample {
    pub grad: DVector<f64>,
    pub clamped: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientOracle {
    mode: OracleMode,
    seed: u64,
}

impl GradientOracle {
    pub fn new(mode: OracleMode, seed: u64) -> Result<Self> {
        match mode {
            OracleMode::Minibatch { batch_size: 0 } => {
                return Err(Error::InvalidInput("batch size must be >= 1".into()))
            }
            OracleMode::AdditiveGaussian { sigma_g } if !(sigma_g.is_finite() && sigma_g >= 0.0) => {
                return Err(Error::InvalidInput(format!("sigma_g must be >= 0, got {sigma_g}")))
            }
            _ => {}
        }
        Ok(GradientOracle { mode, seed })
    }

    pub fn exact() -> Self {
        GradientOracle {
            mode: OracleMode::Exact,
            seed: 0,
        }
    }

    pub fn mode(&self) -> OracleMode {
        self.mode
    }

    /// Whether samples equal the true gradient.
    pub fn is_deterministic(&self) -> bool {
        match self.mode {
            OracleMode::Exact => true,
            OracleMode::AdditiveGaussian { sigma_g } => sigma_g == 0.0,
            OracleMode::Minibatch { .. } => false,
        }
    }

    /// `∇F_i(x, ξ_{i,k})`; the sample `ξ_{i,k}` is keyed by `(seed, i, k)`.
    pub fn sample_gradient(&self, objective: &Objective, i: usize, x: &DVector<f64>, k: usize) -> Result<GradSample> {
        match self.mode {
            OracleMode::Exact => Ok(GradSample {
                grad: objective.local_grad(i, x)?,
                clamped: false,
            }),
            OracleMode::Minibatch { batch_size } => {
                if !objective.is_logistic() {
                    return Err(Error::InvalidObjective(
                        "minibatch sampling requires a data-backed objective".into(),
                    ));
                }
                let m = objective.shard_len(i);
                if batch_size >= m {
                    return Ok(GradSample {
                        grad: objective.local_grad(i, x)?,
                        clamped: batch_size > m,
                    });
                }
                let mut rng = substream(self.seed, StreamTag::Oracle, &[i as u64, k as u64]);
                let rows = index::sample(&mut rng, m, batch_size).into_vec();
                Ok(GradSample {
                    grad: objective.batch_grad(i, x, &rows)?,
                    clamped: false,
                })
            }
            OracleMode::AdditiveGaussian { sigma_g } => {
                let mut grad = objective.local_grad(i, x)?;
                if sigma_g > 0.0 {
                    let mut rng = substream(self.seed, StreamTag::Oracle, &[i as u64, k as u64]);
                    let scale = sigma_g / (objective.dim() as f64).sqrt();
                    for g in grad.iter_mut() {
                        *g += scale * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                Ok(GradSample { grad, clamped: false })
            }
        }
    }

    /// Per-vector variance bound `E‖∇F − ∇f‖²` when it is known in closed form.
    pub fn variance_hint(&self) -> Option<f64> {
        match self.mode {
            OracleMode::Exact => Some(0.0),
            OracleMode::AdditiveGaussian { sigma_g } => Some(sigma_g * sigma_g),
            OracleMode::Minibatch { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothnessInfo {
    pub l: f64,
    pub mu: f64,
    pub condition: f64,
}

fn lambda_max_gram(features: &DMatrix<f64>) -> f64 {
    let gram = if features.nrows() <= features.ncols() {
        features * features.transpose()
    } else {
        features.transpose() * features
    };
    SymmetricEigen::new(gram).eigenvalues.max().max(0.0)
}

pub fn estimate_constants(objective: &Objective) -> SmoothnessInfo {
    let (l, mu) = match &objective.kind {
        ObjectiveKind::Quadratic { a, .. } => {
            let mut l = f64::NEG_INFINITY;
            let mut mu = f64::INFINITY;
            for ai in a {
                let eig = SymmetricEigen::new(ai.clone()).eigenvalues;
                l = l.max(eig.max());
                mu = mu.min(eig.min());
            }
            (l, mu)
        }
        ObjectiveKind::Logistic { shards, lambda } => {
            let l = shards
                .iter()
                .map(|s| lambda_max_gram(&s.features) / (4.0 * s.len() as f64) + lambda)
                .fold(f64::NEG_INFINITY, f64::max);
            (l, *lambda)
        }
    };
    SmoothnessInfo {
        l,
        mu,
        condition: l / mu,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSolution {
    pub x_star: DVector<f64>,
    pub f_star: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Damped Newton iteration on `f = (1/n) Σ f_i` from the origin, stopping at
/// `‖∇f‖ ≤ tol`. Deterministic and independent of every simulator stream.
pub fn solve_reference(objective: &Objective, tol: f64) -> Result<ReferenceSolution> {
    let mut x = DVector::zeros(objective.dim());
    let (mut f, mut g) = objective.global_value_grad(&x)?;
    let mut gnorm = g.norm();
    let mut iterations = 0;
    let mut stalled = 0;
    while gnorm > tol {
        if iterations >= REFERENCE_MAX_ITERS || stalled >= 5 {
            return Err(Error::NoConvergence {
                iterations,
                tol,
                residual: gnorm,
            });
        }
        iterations += 1;
        let h = objective.global_hessian(&x);
        let step = match Cholesky::new(h.clone()) {
            Some(ch) => ch.solve(&g),
            None => h.lu().solve(&g).unwrap_or_else(|| g.clone()),
        };
        let slope = g.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &x - &step * t;
            let (fc, gc) = objective.global_value_grad(&cand)?;
            // Near the optimum f is flat to machine precision; accept on gradient decrease.
            if fc <= f - 1e-4 * t * slope || (fc <= f + 1e-14 * f.abs().max(1.0) && gc.norm() < gnorm) {
                x = cand;
                f = fc;
                g = gc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        let new_norm = g.norm();
        if !accepted || new_norm >= gnorm {
            stalled += 1;
        } else {
            stalled = 0;
        }
        gnorm = new_norm;
    }
    Ok(ReferenceSolution {
        x_star: x,
        f_star: f,
        grad_norm: gnorm,
        iterations,
    })
}

/// `χ² = (1/n) Σ_i ‖∇f_i(x*) − ∇f(x*)‖²`.
pub fn heterogeneity_chi2(objective: &Objective, x_star: &DVector<f64>) -> Result<f64> {
    let grads = (0..objective.n())
        .map(|i| objective.local_grad(i, x_star))
        .collect::<Result<Vec<_>>>()?;
    let mean = grads.iter().fold(DVector::zeros(objective.dim()), |acc, g| acc + g) / objective.n() as f64;
    Ok(grads.iter().map(|g| (g - &mean).norm_squared()).sum::<f64>() / objective.n() as f64)
}
