//! Step-size, attenuation and horizon calculators, and the closed-form
//! convergence bound for IC-GT.

use crate::{Error, Result};

/// Contraction target used by the convergence bound: `‖J^τ‖² ≤ 1/16`.
pub const DEFAULT_DELTA_TARGET: f64 = 1.0 / 16.0;
/// Upper clip applied by [`gamma_schedule`]; keeps γ inside `(0, 1/4)`.
pub const GAMMA_CLIP: f64 = 0.2499;

/// Smallest horizon τ with `‖J_γ^τ‖² ≤ delta`:
///
/// `τ = ⌈ 2/(γ(1−λ₂)) · max{ 4 ln(2/(γ(1−λ₂))), γ(1−λ₂) − ln(√δ/4) } ⌉`.
pub fn compute_tau(gamma: f64, lambda2: f64, delta: f64) -> Result<u64> {
    if !(gamma > 0.0 && gamma < 0.25) {
        return Err(Error::ParameterViolation(format!("tau needs gamma in (0, 1/4), got {gamma}")));
    }
    if !(lambda2 > -1.0 && lambda2 < 1.0) {
        return Err(Error::ParameterViolation(format!("tau needs lambda2 in (-1, 1), got {lambda2}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::ParameterViolation(format!("tau needs delta in (0, 1), got {delta}")));
    }
    let g = gamma * (1.0 - lambda2);
    let lead = 2.0 / g;
    let first = 4.0 * lead.ln();
    let second = g - (delta.sqrt() / 4.0).ln();
    Ok((lead * first.max(second)).ceil() as u64)
}

/// `min{1, 1/(161280 τ L)}`.
pub fn max_step_size(tau: u64, l: f64) -> f64 {
    (1.0 / (161_280.0 * tau as f64 * l)).min(1.0)
}

/// `γ = min(α ln T, 0.2499)`.
pub fn gamma_schedule(alpha: f64, t: usize) -> f64 {
    (alpha * (t as f64).ln()).min(GAMMA_CLIP)
}

/// Inputs of [`convergence_bound`]. `sigma_g` and `sigma_c` are per-vector
/// standard deviations: `E‖∇F − ∇f‖² ≤ σ_g²` and `E‖ε‖² ≤ σ_c²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundInputs {
    /// `‖x̄₀ − x*‖²`.
    pub dist0: f64,
    /// `‖Ψ₀‖²`.
    pub deviation0_norm_sq: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub tau: u64,
    pub l: f64,
    pub mu: f64,
    pub n: usize,
    pub sigma_g: f64,
    pub sigma_c: f64,
    pub t: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundReport {
    pub total: f64,
    pub geometric: f64,
    pub gradient_noise: f64,
    pub communication_noise: f64,
    /// False when α or γ lie outside the bound's admissible region; the
    /// value is still computed.
    pub domain_ok: bool,
}

/// Upper bound on `E‖x̄_T − x*‖²`:
///
/// ```text
/// (1−αμ/4)^T (Δ₀ + 800(1+τ²)L/(n(1−αμ/4)μ) ‖Ψ₀‖²)
///   + (4α/μ + 101920 L(τ+1) n α²/μ) σ_g²/n
///   + (4(1 + 2Tα/μ)/μ · γ²/α + 33280(2 + α²(τ²+½) + α²T) L/μ · nτγ²) σ_c²/n
/// ```
pub fn convergence_bound(p: &BoundInputs) -> BoundReport {
    let BoundInputs {
        dist0,
        deviation0_norm_sq,
        alpha,
        gamma,
        tau,
        l,
        mu,
        n,
        sigma_g,
        sigma_c,
        t,
    } = *p;
    let n = n as f64;
    let tau = tau as f64;
    let t = t as f64;
    let rate = 1.0 - alpha * mu / 4.0;
    let geometric = rate.powf(t) * (dist0 + 800.0 * (1.0 + tau * tau) * l / (n * rate * mu) * deviation0_norm_sq);
    let gradient_noise = (4.0 * alpha / mu + 101_920.0 * l * (tau + 1.0) * n * alpha * alpha / mu) * sigma_g * sigma_g / n;
    let comm_a = 4.0 * (1.0 + 2.0 * t * alpha / mu) / mu * gamma * gamma / alpha;
    let comm_b = 33_280.0 * (2.0 + alpha * alpha * (tau * tau + 0.5) + alpha * alpha * t) * l / mu * n * tau * gamma * gamma;
    let communication_noise = (comm_a + comm_b) * sigma_c * sigma_c / n;
    let domain_ok = alpha > 0.0
        && alpha <= max_step_size(tau as u64, l)
        && gamma > 0.0
        && gamma < 0.25
        && mu > 0.0
        && mu <= l;
    BoundReport {
        total: geometric + gradient_noise + communication_noise,
        geometric,
        gradient_noise,
        communication_noise,
        domain_ok,
    }
}
