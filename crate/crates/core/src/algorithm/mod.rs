//! IC-GT and the decentralized baselines it is compared against.
//!
//! Iterates are stored as `n × d` matrices with one row per node. A step is
//! two-phase: every node broadcasts its row through the channel first, then
//! all rows are updated from the received copies. Randomness is keyed by
//! `(sender, iteration, round)`, so the trajectory is independent of the order
//! in which rows are processed.

mod params;

pub use params::{
    compute_tau, gamma_schedule, max_step_size, convergence_bound, BoundInputs, BoundReport, DEFAULT_DELTA_TARGET,
    GAMMA_CLIP,
};

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::channel::ChannelModel;
use crate::graph::MixingMatrix;
use crate::objective::{GradientOracle, Objective};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Icgt,
    StochasticGt,
    Dgd,
    Extra,
    /// Multi-round consensus followed by a local gradient step.
    NearDgd { rounds: usize },
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Icgt => "icgt",
            Variant::StochasticGt => "gt",
            Variant::Dgd => "dgd",
            Variant::Extra => "extra",
            Variant::NearDgd { .. } => "near_dgd",
        }
    }

    /// Whether the variant keeps a gradient tracker `y`.
    pub fn tracks_gradient(&self) -> bool {
        matches!(self, Variant::Icgt | Variant::StochasticGt)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::NearDgd { rounds } => write!(f, "near_dgd(t={rounds})"),
            v => f.write_str(v.name()),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    /// Parses a variant name; `near_dgd` defaults to one round.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "icgt" | "ic-gt" | "ic_gt" => Ok(Variant::Icgt),
            "gt" | "stochastic_gt" | "sgt" => Ok(Variant::StochasticGt),
            "dgd" => Ok(Variant::Dgd),
            "extra" => Ok(Variant::Extra),
            "near_dgd" | "near-dgd" | "neardgd" => Ok(Variant::NearDgd { rounds: 1 }),
            other => Err(Error::InvalidInput(format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlgParams {
    pub variant: Variant,
    pub alpha: f64,
    /// Noise-attenuation weight; only IC-GT reads it.
    pub gamma: f64,
    /// Accept γ outside `(0, 1/4)` for IC-GT.
    pub allow_gamma_override: bool,
    /// Reuse the x-link noise on the y-link, so both links carry the same
    /// perturbation at each sender.
    pub shared_noise: bool,
}

impl AlgParams {
    pub fn new(variant: Variant, alpha: f64, gamma: f64) -> Self {
        AlgParams {
            variant,
            alpha,
            gamma,
            allow_gamma_override: false,
            shared_noise: false,
        }
    }

    pub fn icgt(alpha: f64, gamma: f64) -> Self {
        Self::new(Variant::Icgt, alpha, gamma)
    }

    pub fn with_override(mut self, allow: bool) -> Self {
        self.allow_gamma_override = allow;
        self
    }

    pub fn with_shared_noise(mut self, shared: bool) -> Self {
        self.shared_noise = shared;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::ParameterViolation(format!("step size must be > 0, got {}", self.alpha)));
        }
        if self.variant == Variant::Icgt && !self.allow_gamma_override {
            if !(self.gamma > 0.0 && self.gamma < 0.25) {
                return Err(Error::ParameterViolation(format!(
                    "icgt needs 0 < gamma < 1/4 for its convergence guarantee, got {} (set the override flag to run anyway)",
                    self.gamma
                )));
            }
        } else if self.variant == Variant::Icgt && !(self.gamma.is_finite() && self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::ParameterViolation(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        Ok(())
    }

    /// The γ actually used in the blend; GT is IC-GT at γ = 1.
    fn effective_gamma(&self) -> f64 {
        match self.variant {
            Variant::Icgt => self.gamma,
            _ => 1.0,
        }
    }
}

/// Memory of the previous iterate needed by EXTRA.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtraMemory {
    pub x_prev: DMatrix<f64>,
    /// Noisy mix of `x_prev` received during the previous step.
    pub mix_prev: DMatrix<f64>,
    pub grad_prev: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlgState {
    pub x: DMatrix<f64>,
    /// Gradient tracker (IC-GT and GT only).
    pub y: Option<DMatrix<f64>>,
    /// Blended consensus point computed in the last IC-GT/GT step.
    pub v: Option<DMatrix<f64>>,
    /// `∇F_i(x_{i,k}, ξ_{i,k})` for the current iterate.
    pub prev_sample_grad: DMatrix<f64>,
    pub extra: Option<ExtraMemory>,
    pub k: usize,
    /// Set once any minibatch request exceeded a shard and was clamped.
    pub batch_clamped: bool,
}

impl AlgState {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Network average `x̄` as a column vector.
    pub fn mean_x(&self) -> DVector<f64> {
        column_mean(&self.x)
    }
}

/// Borrowed inputs shared by every step of a run.
#[derive(Clone, Copy, Debug)]
pub struct StepContext<'a> {
    pub mixing: &'a MixingMatrix,
    pub ch_x: &'a ChannelModel,
    pub ch_y: &'a ChannelModel,
    pub oracle: &'a GradientOracle,
    pub objective: &'a Objective,
    pub params: &'a AlgParams,
}

/// Per-iteration log of an IC-GT/GT run. Entry `k` holds the iterate at `k`,
/// the blended point and link noise produced while stepping from `k`, and the
/// gradient sample at `x_k`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub x: Vec<DMatrix<f64>>,
    pub y: Vec<DMatrix<f64>>,
    pub v: Vec<DMatrix<f64>>,
    pub eps_x: Vec<DMatrix<f64>>,
    pub eps_y: Vec<DMatrix<f64>>,
    pub grads: Vec<DMatrix<f64>>,
    pub gamma: f64,
    pub alpha: f64,
    pub shared_noise: bool,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

pub fn column_mean(z: &DMatrix<f64>) -> DVector<f64> {
    let n = z.nrows().max(1) as f64;
    z.row_sum().transpose() / n
}

/// `z − 1 z̄ᵀ`: the row-wise deviation from the network average.
pub fn deviation(z: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = column_mean(z).transpose();
    let mut out = z.clone();
    for mut row in out.row_iter_mut() {
        row -= &mean;
    }
    out
}

fn check_finite(z: &DMatrix<f64>, iteration: usize) -> Result<()> {
    if z.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged { iteration })
    }
}

fn sample_all(
    oracle: &GradientOracle,
    objective: &Objective,
    x: &DMatrix<f64>,
    k: usize,
) -> Result<(DMatrix<f64>, bool)> {
    let (n, d) = x.shape();
    let mut g = DMatrix::zeros(n, d);
    let mut clamped = false;
    for i in 0..n {
        let xi = x.row(i).transpose();
        let s = oracle.sample_gradient(objective, i, &xi, k)?;
        clamped |= s.clamped;
        g.set_row(i, &s.grad.transpose());
    }
    Ok((g, clamped))
}

/// Noise realized when every node broadcasts its row of `z`.
fn broadcast_noise(ch: &ChannelModel, z: &DMatrix<f64>, iteration: usize, round: usize) -> Result<DMatrix<f64>> {
    let (n, d) = z.shape();
    let mut noise = DMatrix::zeros(n, d);
    if ch.is_exact() {
        return Ok(noise);
    }
    let mut buf = vec![0.0; d];
    for j in 0..n {
        for (c, b) in buf.iter_mut().enumerate() {
            *b = z[(j, c)];
        }
        let t = ch.transmit_from(&buf, j, iteration, round)?;
        for (c, e) in t.noise.into_iter().enumerate() {
            noise[(j, c)] = e;
        }
    }
    Ok(noise)
}

/// `W z + (W − diag W) e`: each node keeps its own row exactly and receives
/// its neighbours' rows perturbed by `e`.
fn noisy_mix(w: &DMatrix<f64>, z: &DMatrix<f64>, noise: &DMatrix<f64>) -> DMatrix<f64> {
    let mut q = w.clone();
    q.fill_diagonal(0.0);
    w * z + q * noise
}

fn require_shape(ctx: &StepContext<'_>, x: &DMatrix<f64>) -> Result<()> {
    let n = ctx.mixing.n();
    if x.nrows() != n || ctx.objective.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "mixing matrix has {n} nodes, iterate has {} rows, objective has {} nodes",
            x.nrows(),
            ctx.objective.n()
        )));
    }
    if x.ncols() != ctx.objective.dim() {
        return Err(Error::DimensionMismatch(format!(
            "iterate has {} columns, objective dimension is {}",
            x.ncols(),
            ctx.objective.dim()
        )));
    }
    Ok(())
}

/// Initial state: `y₀ = ∇F(x₀, ξ₀)` for the tracking variants.
pub fn init_state(variant: Variant, x0: DMatrix<f64>, oracle: &GradientOracle, objective: &Objective) -> Result<AlgState> {
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("initial iterate must be finite".into()));
    }
    if x0.nrows() != objective.n() || x0.ncols() != objective.dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial iterate is {}x{}, objective expects {}x{}",
            x0.nrows(),
            x0.ncols(),
            objective.n(),
            objective.dim()
        )));
    }
    let (g, clamped) = sample_all(oracle, objective, &x0, 0)?;
    Ok(AlgState {
        y: variant.tracks_gradient().then(|| g.clone()),
        v: None,
        prev_sample_grad: g,
        extra: None,
        x: x0,
        k: 0,
        batch_clamped: clamped,
    })
}

/// One IC-GT iteration (GT when the context's variant is `StochasticGt`).
pub fn icgt_step(state: &AlgState, ctx: &StepContext<'_>, trace: Option<&mut Trace>) -> Result<AlgState> {
    let p = ctx.params;
    p.validate()?;
    require_shape(ctx, &state.x)?;
    let y = state
        .y
        .as_ref()
        .ok_or_else(|| Error::PreconditionViolation("state has no gradient tracker; initialise it for icgt/gt".into()))?;
    let k = state.k;
    let gamma = p.effective_gamma();
    let w = ctx.mixing.matrix();

    let eps_x = broadcast_noise(ctx.ch_x, &state.x, k, 0)?;
    let eps_y = if p.shared_noise {
        eps_x.clone()
    } else {
        broadcast_noise(ctx.ch_y, y, k, 0)?
    };

    let v = &state.x * (1.0 - gamma) + noisy_mix(w, &state.x, &eps_x) * gamma;
    let x_next = &v - y * p.alpha;
    check_finite(&x_next, k + 1)?;
    let (g_next, clamped) = sample_all(ctx.oracle, ctx.objective, &x_next, k + 1)?;
    let y_next = y * (1.0 - gamma) + noisy_mix(w, y, &eps_y) * gamma + &g_next - &state.prev_sample_grad;
    check_finite(&y_next, k + 1)?;

    if let Some(t) = trace {
        t.gamma = gamma;
        t.alpha = p.alpha;
        t.shared_noise = p.shared_noise;
        t.x.push(state.x.clone());
        t.y.push(y.clone());
        t.v.push(v.clone());
        t.eps_x.push(eps_x);
        t.eps_y.push(eps_y);
        t.grads.push(state.prev_sample_grad.clone());
    }

    Ok(AlgState {
        x: x_next,
        y: Some(y_next),
        v: Some(v),
        prev_sample_grad: g_next,
        extra: None,
        k: k + 1,
        batch_clamped: state.batch_clamped || clamped,
    })
}

/// One iteration of DGD, EXTRA or NEAR-DGD. Neighbour values always pass
/// through `ch_x`.
pub fn baseline_step(state: &AlgState, ctx: &StepContext<'_>) -> Result<AlgState> {
    let p = ctx.params;
    p.validate()?;
    require_shape(ctx, &state.x)?;
    let k = state.k;
    let w = ctx.mixing.matrix();
    let g = &state.prev_sample_grad;

    let (x_next, extra) = match p.variant {
        Variant::Dgd => {
            let eps = broadcast_noise(ctx.ch_x, &state.x, k, 0)?;
            (noisy_mix(w, &state.x, &eps) - g * p.alpha, None)
        }
        Variant::NearDgd { rounds } => {
            let mut z = state.x.clone();
            for r in 0..rounds.max(1) {
                let eps = broadcast_noise(ctx.ch_x, &z, k, r)?;
                z = noisy_mix(w, &z, &eps);
                check_finite(&z, k + 1)?;
            }
            (z - g * p.alpha, None)
        }
        Variant::Extra => {
            let eps = broadcast_noise(ctx.ch_x, &state.x, k, 0)?;
            let mix = noisy_mix(w, &state.x, &eps);
            let x_next = match &state.extra {
                None => &mix - g * p.alpha,
                Some(mem) => {
                    &state.x + &mix - (&mem.x_prev + &mem.mix_prev) * 0.5 - (g - &mem.grad_prev) * p.alpha
                }
            };
            let memory = ExtraMemory {
                x_prev: state.x.clone(),
                mix_prev: mix,
                grad_prev: g.clone(),
            };
            (x_next, Some(memory))
        }
        Variant::Icgt | Variant::StochasticGt => {
            return Err(Error::PreconditionViolation(format!(
                "{} is a tracking variant; use icgt_step",
                p.variant
            )))
        }
    };
    check_finite(&x_next, k + 1)?;
    let (g_next, clamped) = sample_all(ctx.oracle, ctx.objective, &x_next, k + 1)?;
    Ok(AlgState {
        x: x_next,
        y: None,
        v: None,
        prev_sample_grad: g_next,
        extra,
        k: k + 1,
        batch_clamped: state.batch_clamped || clamped,
    })
}

/// Dispatches on the context's variant.
pub fn step(state: &AlgState, ctx: &StepContext<'_>, trace: Option<&mut Trace>) -> Result<AlgState> {
    if ctx.params.variant.tracks_gradient() {
        icgt_step(state, ctx, trace)
    } else {
        baseline_step(state, ctx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelModel;
    use crate::objective::Objective;
    use approx::assert_relative_eq;

    fn scalar_quadratics(c: &[f64]) -> Objective {
        let a = c.iter().map(|_| DMatrix::from_element(1, 1, 1.0)).collect();
        let b = c.iter().map(|&ci| DVector::from_element(1, ci)).collect();
        Objective::quadratic(a, b).unwrap()
    }

    fn half_half() -> MixingMatrix {
        MixingMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5])).unwrap()
    }

    #[test]
    fn two_node_hand_step() {
        let obj = scalar_quadratics(&[1.0, -1.0]);
        let w = half_half();
        let ch = ChannelModel::exact();
        let oracle = GradientOracle::exact();
        let params = AlgParams::icgt(0.1, 0.2);
        let ctx = StepContext {
            mixing: &w,
            ch_x: &ch,
            ch_y: &ch,
            oracle: &oracle,
            objective: &obj,
            params: &params,
        };
        let s0 = init_state(Variant::Icgt, DMatrix::zeros(2, 1), &oracle, &obj).unwrap();
        assert_eq!(s0.y.as_ref().unwrap().as_slice(), &[-1.0, 1.0]);
        let s1 = icgt_step(&s0, &ctx, None).unwrap();
        assert_eq!(s1.v.as_ref().unwrap().as_slice(), &[0.0, 0.0]);
        assert_relative_eq!(s1.x[(0, 0)], 0.1, epsilon = 1e-15);
        assert_relative_eq!(s1.x[(1, 0)], -0.1, epsilon = 1e-15);
        let y = s1.y.unwrap();
        // 0.8·(−1) + 0.2·(0.5·(−1) + 0.5·1) + (0.1 − 1) − (0 − 1)
        assert_relative_eq!(y[(0, 0)], -0.7, epsilon = 1e-15);
        assert_relative_eq!(y[(1, 0)], 0.7, epsilon = 1e-15);
    }

    #[test]
    fn gamma_domain_enforced() {
        assert!(AlgParams::icgt(0.1, 0.25).validate().is_err());
        assert!(AlgParams::icgt(0.1, 0.0).validate().is_err());
        assert!(AlgParams::icgt(0.1, 0.5).with_override(true).validate().is_ok());
        assert!(AlgParams::icgt(0.0, 0.1).validate().is_err());
        assert!(AlgParams::new(Variant::Dgd, 0.1, 0.9).validate().is_ok());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in [Variant::Icgt, Variant::StochasticGt, Variant::Dgd, Variant::Extra] {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("near_dgd".parse::<Variant>().unwrap(), Variant::NearDgd { rounds: 1 });
        assert!("sgd".parse::<Variant>().is_err());
    }

    #[test]
    fn deviation_has_zero_mean() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, -1.0, 0.5, 0.0]);
        let dz = deviation(&z);
        assert!(column_mean(&dz).norm() < 1e-15);
    }

    #[test]
    fn tracker_missing_is_rejected() {
        let obj = scalar_quadratics(&[0.0, 0.0]);
        let w = half_half();
        let ch = ChannelModel::exact();
        let oracle = GradientOracle::exact();
        let params = AlgParams::icgt(0.1, 0.2);
        let ctx = StepContext {
            mixing: &w,
            ch_x: &ch,
            ch_y: &ch,
            oracle: &oracle,
            objective: &obj,
            params: &params,
        };
        let s = init_state(Variant::Dgd, DMatrix::zeros(2, 1), &oracle, &obj).unwrap();
        assert!(matches!(icgt_step(&s, &ctx, None), Err(Error::PreconditionViolation(_))));
    }
}
