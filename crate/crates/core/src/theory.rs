//! Numerical checks of the consensus-error analysis.
//!
//! Stacked vectors use node-major order: entry `i·d + c` is coordinate `c` of
//! node `i`, so an `n × d` iterate block `Z` maps to `vec(Zᵀ)` and the graph
//! operators act as `M ⊗ I_d`. Operator norms come from the singular values
//! of explicitly formed dense matrices.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::algorithm::{compute_tau, deviation, Trace};
use crate::channel::MIN_MOMENT_TRIALS;
use crate::graph::MixingMatrix;
use crate::rng::{substream, StreamTag};
use crate::{Error, Result};

/// `M ⊗ I_d`.
pub fn kron_identity(m: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    m.kronecker(&DMatrix::<f64>::identity(d, d))
}

/// `Ī = (I − 11ᵀ/n) ⊗ I_d`.
pub fn averaging_projector(n: usize, d: usize) -> DMatrix<f64> {
    let p = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    kron_identity(&p, d)
}

/// `Q′ = (I − W) ⊗ I_d`.
pub fn laplacian_block(w: &MixingMatrix, d: usize) -> DMatrix<f64> {
    let n = w.n();
    kron_identity(&(DMatrix::<f64>::identity(n, n) - w.matrix()), d)
}

/// `Q̂ = (W − diag W) ⊗ I_d`, the weights applied to received neighbour noise.
pub fn neighbor_block(w: &MixingMatrix, d: usize) -> DMatrix<f64> {
    let mut m = w.matrix().clone();
    m.fill_diagonal(0.0);
    kron_identity(&m, d)
}

/// `A = Ī − γQ′`.
pub fn contraction_block(w: &MixingMatrix, d: usize, gamma: f64) -> DMatrix<f64> {
    averaging_projector(w.n(), d) - laplacian_block(w, d) * gamma
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// `m^p` by repeated squaring.
pub fn matrix_power(m: &DMatrix<f64>, mut p: usize) -> DMatrix<f64> {
    let mut result = DMatrix::<f64>::identity(m.nrows(), m.ncols());
    let mut base = m.clone();
    while p > 0 {
        if p & 1 == 1 {
            result = &result * &base;
        }
        p >>= 1;
        if p > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Row-major flattening of an `n × d` block.
pub fn stack(z: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(z.transpose().as_slice())
}

/// Three-by-three block matrix driving the consensus errors:
///
/// ```text
/// [ A  0  −A ]
/// [ 0  A  −Ī ]
/// [ 0  0   A ]
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    pub n: usize,
    pub d: usize,
    pub gamma: f64,
    pub matrix: DMatrix<f64>,
}

impl TransitionMatrix {
    pub fn dim(&self) -> usize {
        3 * self.n * self.d
    }

    /// Block `(r, c)` with zero-based indices.
    pub fn block(&self, r: usize, c: usize) -> DMatrix<f64> {
        let s = self.n * self.d;
        self.matrix.view((r * s, c * s), (s, s)).into_owned()
    }
}

fn assemble(blocks: [[Option<&DMatrix<f64>>; 3]; 3], s: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(3 * s, 3 * s);
    for (r, row) in blocks.iter().enumerate() {
        for (c, b) in row.iter().enumerate() {
            if let Some(b) = b {
                out.view_mut((r * s, c * s), (s, s)).copy_from(*b);
            }
        }
    }
    out
}

pub fn build_transition_matrix(w: &MixingMatrix, d: usize, gamma: f64) -> Result<TransitionMatrix> {
    if d == 0 {
        return Err(Error::DimensionMismatch("dimension must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::ParameterViolation(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    let n = w.n();
    let s = n * d;
    let a = contraction_block(w, d, gamma);
    let neg_a = -&a;
    let neg_p = -averaging_projector(n, d);
    let matrix = assemble(
        [
            [Some(&a), None, Some(&neg_a)],
            [None, Some(&a), Some(&neg_p)],
            [None, None, Some(&a)],
        ],
        s,
    );
    Ok(TransitionMatrix { n, d, gamma, matrix })
}

/// `J^τ = [[A^τ, 0, −τA^τ], [0, A^τ, −τA^{τ−1}], [0, 0, A^τ]]` for `τ ≥ 2`.
pub fn closed_form_power(w: &MixingMatrix, d: usize, gamma: f64, tau: usize) -> Result<DMatrix<f64>> {
    if tau < 2 {
        return Err(Error::DomainRestricted(tau));
    }
    if d == 0 {
        return Err(Error::DimensionMismatch("dimension must be >= 1".into()));
    }
    let a = contraction_block(w, d, gamma);
    let a_prev = matrix_power(&a, tau - 1);
    let a_tau = &a_prev * &a;
    let t = tau as f64;
    let b13 = &a_tau * -t;
    let b23 = &a_prev * -t;
    Ok(assemble(
        [
            [Some(&a_tau), None, Some(&b13)],
            [None, Some(&a_tau), Some(&b23)],
            [None, None, Some(&a_tau)],
        ],
        w.n() * d,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractionReport {
    pub tau: u64,
    pub norm_sq: f64,
    pub pass: bool,
}

/// Checks `‖J_γ^τ‖² ≤ δ` with τ from [`compute_tau`].
pub fn verify_contraction(w: &MixingMatrix, d: usize, gamma: f64, delta: f64) -> Result<ContractionReport> {
    let tau = compute_tau(gamma, w.lambda2(), delta)?;
    let power = if tau >= 2 {
        closed_form_power(w, d, gamma, tau as usize)?
    } else {
        build_transition_matrix(w, d, gamma)?.matrix
    };
    let norm = spectral_norm(&power);
    let norm_sq = norm * norm;
    Ok(ContractionReport {
        tau,
        norm_sq,
        pass: norm_sq <= delta,
    })
}

/// Stacked consensus errors `(Δv, Δx, αΔy)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedDeviation {
    pub n: usize,
    pub d: usize,
    pub data: DVector<f64>,
}

impl StackedDeviation {
    pub fn new(v: &DMatrix<f64>, x: &DMatrix<f64>, y: &DMatrix<f64>, alpha: f64) -> Self {
        let (n, d) = x.shape();
        let s = n * d;
        let mut data = DVector::zeros(3 * s);
        data.rows_mut(0, s).copy_from(&stack(&deviation(v)));
        data.rows_mut(s, s).copy_from(&stack(&deviation(x)));
        data.rows_mut(2 * s, s).copy_from(&(stack(&deviation(y)) * alpha));
        StackedDeviation { n, d, data }
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.norm_squared()
    }

    /// Block `b ∈ {0, 1, 2}` reshaped to `n × d`.
    pub fn block(&self, b: usize) -> DMatrix<f64> {
        let s = self.n * self.d;
        DMatrix::from_row_slice(self.n, self.d, self.data.rows(b * s, s).as_slice())
    }
}

/// Perturbation driving the consensus errors from step `k−1` to `k`:
/// `(γ/α)(Q̃ε_k; Q̃ε_{k−1}; αQ̃ε_{k−1}) + (0; 0; Ī(g_k − g_{k−1}))`
/// with `Q̃ = ĪQ̂`.
#[derive(Clone, Debug, PartialEq)]
pub struct RecursionForcing {
    pub n: usize,
    pub d: usize,
    pub data: DVector<f64>,
}

impl RecursionForcing {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        w: &MixingMatrix,
        gamma: f64,
        alpha: f64,
        eps_k: &DMatrix<f64>,
        eps_prev: &DMatrix<f64>,
        grad_k: &DMatrix<f64>,
        grad_prev: &DMatrix<f64>,
    ) -> Self {
        let (n, d) = eps_k.shape();
        let s = n * d;
        let mut q = w.matrix().clone();
        q.fill_diagonal(0.0);
        let qt = |e: &DMatrix<f64>| stack(&deviation(&(&q * e)));
        let scale = gamma / alpha;
        let mut data = DVector::zeros(3 * s);
        data.rows_mut(0, s).copy_from(&(qt(eps_k) * scale));
        let prev = qt(eps_prev);
        data.rows_mut(s, s).copy_from(&(&prev * scale));
        let grad = stack(&deviation(&(grad_k - grad_prev)));
        data.rows_mut(2 * s, s).copy_from(&(prev * gamma + grad));
        RecursionForcing { n, d, data }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecursionReport {
    pub steps: usize,
    pub max_residual: f64,
    pub max_state_norm: f64,
    /// Whether the trace was produced with shared link noise; without it the
    /// recursion is not expected to close.
    pub premise_holds: bool,
    pub pass: bool,
}

/// Largest `‖Ψ_k − (J_γΨ_{k−1} + αE_{k−1})‖` over a logged trace.
///
/// The x-link noise is used in every block of `E`; a trace recorded without
/// shared noise therefore leaves a material residual.
pub fn recursion_residual(w: &MixingMatrix, trace: &Trace) -> Result<RecursionReport> {
    let len = trace.len();
    let complete = [trace.y.len(), trace.v.len(), trace.eps_x.len(), trace.grads.len()]
        .iter()
        .all(|&l| l == len);
    if len < 2 || !complete {
        return Err(Error::InsufficientLogging(format!(
            "need at least two fully logged steps (x, y, v, link noise, gradients), got {len}"
        )));
    }
    let d = trace.x[0].ncols();
    let j = build_transition_matrix(w, d, trace.gamma)?;
    let stacked: Vec<StackedDeviation> = (0..len)
        .map(|k| StackedDeviation::new(&trace.v[k], &trace.x[k], &trace.y[k], trace.alpha))
        .collect();
    let mut max_residual = 0.0f64;
    for k in 1..len {
        let e = RecursionForcing::new(
            w,
            trace.gamma,
            trace.alpha,
            &trace.eps_x[k],
            &trace.eps_x[k - 1],
            &trace.grads[k],
            &trace.grads[k - 1],
        );
        let predicted = &j.matrix * &stacked[k - 1].data + e.data * trace.alpha;
        max_residual = max_residual.max((&stacked[k].data - predicted).norm());
    }
    let max_state_norm = stacked.iter().map(|p| p.data.norm()).fold(0.0, f64::max);
    Ok(RecursionReport {
        steps: len - 1,
        max_residual,
        max_state_norm,
        premise_holds: trace.shared_noise,
        pass: max_residual <= 1e-9 * (1.0 + max_state_norm),
    })
}

/// `max_{0≤i≤i_max} ‖(i+1)A^{i+1}Ī − iA^iĪ‖²`.
pub fn power_difference_norm(w: &MixingMatrix, d: usize, gamma: f64, i_max: usize) -> f64 {
    let a = contraction_block(w, d, gamma);
    let p = averaging_projector(w.n(), d);
    let mut cur = p.clone(); // A^i Ī
    let mut best = 0.0f64;
    for i in 0..=i_max {
        let next = &a * &cur;
        let m = &next * (i as f64 + 1.0) - &cur * i as f64;
        best = best.max(spectral_norm(&m).powi(2));
        cur = next;
    }
    best
}

/// Constants of the scalar recursion
///
/// ```text
/// a_t = ρ′ a_{t−τ} + (b/τ) Σ_{i=t−τ}^{t−1} a_i + c Σ_{i=t−τ}^{t−1} e_i + r   (t ≥ τ)
/// a_t = ρ″ a_0     + (b/τ) Σ_{i=0}^{t−1}   a_i + c Σ_{i=0}^{t−1}   e_i + r   (1 ≤ t < τ)
/// ```
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarRecursionParams {
    pub rho_prime: f64,
    pub rho_dprime: f64,
    pub b: f64,
    pub c: f64,
    pub r: f64,
    pub tau: usize,
    pub a0: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarRecursionReport {
    pub a: Vec<f64>,
    pub bound: Vec<f64>,
    /// First `t ≥ 1` where `a_t` exceeds the bound.
    pub first_violation: Option<usize>,
    pub pass: bool,
}

/// Runs the recursion with equality for `t = 1..=horizon` and compares it
/// with `20ρ″q^t a₀ + 60c Σ_{i<t} q^{t−i} e_i + 26r/ρ`, where `ρ = 1 − 2ρ′`
/// and `q = 1 − 3ρ/(4τ)`.
pub fn scalar_recursion_check(p: &ScalarRecursionParams, e: &[f64], horizon: usize) -> Result<ScalarRecursionReport> {
    let ScalarRecursionParams {
        rho_prime,
        rho_dprime,
        b,
        c,
        r,
        tau,
        a0,
    } = *p;
    if !(rho_prime > 0.0 && rho_prime <= 0.25) {
        return Err(Error::ParameterViolation(format!("rho' must lie in (0, 1/4], got {rho_prime}")));
    }
    if !(0.0..=rho_prime / 4.0).contains(&b) {
        return Err(Error::ParameterViolation(format!("b must lie in [0, rho'/4], got {b}")));
    }
    if [rho_dprime, c, r, a0].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::ParameterViolation("rho'', c, r and a0 must be finite and non-negative".into()));
    }
    if tau == 0 {
        return Err(Error::ParameterViolation("tau must be >= 1".into()));
    }
    if e.len() < horizon {
        return Err(Error::InvalidInput(format!(
            "need {horizon} perturbation terms, got {}",
            e.len()
        )));
    }
    if e.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidInput("perturbation terms must be finite and non-negative".into()));
    }
    let rho = 1.0 - 2.0 * rho_prime;
    let q = 1.0 - 3.0 * rho / (4.0 * tau as f64);
    let bt = b / tau as f64;

    let mut a = vec![a0];
    for t in 1..=horizon {
        let (lead, lo) = if t >= tau {
            (rho_prime * a[t - tau], t - tau)
        } else {
            (rho_dprime * a0, 0)
        };
        let sa: f64 = a[lo..t].iter().sum();
        let se: f64 = e[lo..t].iter().sum();
        a.push(lead + bt * sa + c * se + r);
    }

    let mut bound = Vec::with_capacity(horizon + 1);
    let mut first_violation = None;
    for (t, &at) in a.iter().enumerate() {
        let noise: f64 = (0..t).map(|i| q.powi((t - i) as i32) * e[i]).sum();
        let bt = 20.0 * rho_dprime * q.powi(t as i32) * a0 + 60.0 * c * noise + 26.0 * r / rho;
        if t >= 1 && first_violation.is_none() && at > bt * (1.0 + 1e-12) {
            first_violation = Some(t);
        }
        bound.push(bt);
    }
    Ok(ScalarRecursionReport {
        a,
        bound,
        pass: first_violation.is_none(),
        first_violation,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AveragingReport {
    /// Trial mean of `‖x_k − x̄_k‖²` for `k = 0..=K`.
    pub empirical: Vec<f64>,
    /// Standard error of each entry of `empirical`.
    pub std_err: Vec<f64>,
    pub bound: Vec<f64>,
    pub first_violation: Option<usize>,
    pub pass: bool,
}

/// Monte-Carlo estimate of the consensus error of noisy averaging
/// `x_k = (I − γQ′)x_{k−1} + γQ̂ε_{k−1}`, where each sender's noise has
/// i.i.d. coordinates of variance `σ_c²/d` (so `E‖ε_j‖² = σ_c²`), compared
/// with `(1−γ(1−λ₂))^{2k}‖x₀ − x̄₀‖² + 2nγσ_c²/(1−λ₂)` at every `k`, allowing
/// three standard errors of slack.
#[allow(clippy::too_many_arguments)]
pub fn averaging_bound_mc(
    w: &MixingMatrix,
    gamma: f64,
    sigma_c: f64,
    x0: &DMatrix<f64>,
    steps: usize,
    trials: usize,
    seed: u64,
) -> Result<AveragingReport> {
    if trials < MIN_MOMENT_TRIALS {
        return Err(Error::InsufficientSamples {
            required: MIN_MOMENT_TRIALS,
            got: trials,
        });
    }
    if x0.nrows() != w.n() {
        return Err(Error::DimensionMismatch(format!(
            "x0 has {} rows, mixing matrix has {} nodes",
            x0.nrows(),
            w.n()
        )));
    }
    if !(gamma > 0.0 && gamma <= 1.0) || !(sigma_c.is_finite() && sigma_c >= 0.0) {
        return Err(Error::ParameterViolation(format!(
            "need gamma in (0, 1] and sigma_c >= 0, got gamma={gamma}, sigma_c={sigma_c}"
        )));
    }
    let (n, d) = x0.shape();
    let lambda2 = w.lambda2();
    let mut q = w.matrix().clone();
    q.fill_diagonal(0.0);
    let mix = DMatrix::<f64>::identity(n, n) * (1.0 - gamma) + w.matrix() * gamma;
    let coord_std = sigma_c / (d as f64).sqrt();

    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = substream(seed, StreamTag::MonteCarlo, &[trial as u64]);
            let mut x = x0.clone();
            let mut out = Vec::with_capacity(steps + 1);
            out.push(deviation(&x).norm_squared());
            let mut eps = DMatrix::zeros(n, d);
            for _ in 0..steps {
                if sigma_c > 0.0 {
                    for e in eps.iter_mut() {
                        *e = coord_std * rng.sample::<f64, _>(StandardNormal);
                    }
                    x = &mix * &x + (&q * &eps) * gamma;
                } else {
                    x = &mix * &x;
                }
                out.push(deviation(&x).norm_squared());
            }
            out
        })
        .collect();

    let t = trials as f64;
    let mut empirical = vec![0.0; steps + 1];
    let mut sq = vec![0.0; steps + 1];
    for run in &per_trial {
        for (k, &v) in run.iter().enumerate() {
            empirical[k] += v;
            sq[k] += v * v;
        }
    }
    let mut std_err = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        empirical[k] /= t;
        let var = (sq[k] / t - empirical[k] * empirical[k]).max(0.0) * t / (t - 1.0);
        std_err.push((var / t).sqrt());
    }

    let rate = 1.0 - gamma * (1.0 - lambda2);
    let dev0 = deviation(x0).norm_squared();
    let floor = 2.0 * n as f64 * gamma * sigma_c * sigma_c / (1.0 - lambda2);
    let bound: Vec<f64> = (0..=steps).map(|k| rate.powi(2 * k as i32) * dev0 + floor).collect();
    let first_violation = (0..=steps).find(|&k| empirical[k] > bound[k] * (1.0 + 1e-12) + 3.0 * std_err[k]);
    Ok(AveragingReport {
        empirical,
        std_err,
        bound,
        pass: first_violation.is_none(),
        first_violation,
    })
}
