//! The verification grid behind the `check` subcommand.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;

use crate::algorithm::{icgt_step, init_state, AlgParams, StepContext, Trace, Variant};
use crate::channel::{ChannelKind, ChannelModel};
use crate::graph::{build_topology, is_doubly_stochastic, metropolis_weights, MixingMatrix, TopologyKind};
use crate::objective::{GradientOracle, Objective};
use crate::rng::{substream, StreamTag};
use crate::theory::{
    power_difference_norm, averaging_bound_mc, build_transition_matrix, closed_form_power, contraction_block, recursion_residual,
    scalar_recursion_check, matrix_power, spectral_norm, verify_contraction, ScalarRecursionParams,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckGrid {
    Small,
    Full,
}

impl FromStr for CheckGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "small" => Ok(CheckGrid::Small),
            "full" => Ok(CheckGrid::Full),
            other => Err(Error::InvalidInput(format!("unknown grid `{other}` (small|full)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub check: &'static str,
    pub case: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckReport {
    pub rows: Vec<CheckRow>,
}

impl CheckReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{} {:<14} {:<40} value={:.6e} limit={:.6e}",
                if r.pass { "PASS" } else { "FAIL" },
                r.check,
                r.case,
                r.value,
                r.threshold
            );
        }
        let passed = self.rows.iter().filter(|r| r.pass).count();
        let _ = writeln!(out, "{passed}/{} checks passed", self.rows.len());
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,case,value,threshold,pass\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.check, r.case, r.value, r.threshold, r.pass);
        }
        out
    }

    fn push(&mut self, check: &'static str, case: String, value: f64, threshold: f64, pass: bool) {
        self.rows.push(CheckRow {
            check,
            case,
            value,
            threshold,
            pass,
        });
    }
}

pub fn mixing_for(kind: TopologyKind, n: usize, seed: u64) -> Result<MixingMatrix> {
    let p = (kind == TopologyKind::ErdosRenyi).then_some(0.5);
    metropolis_weights(&build_topology(kind, n, p, seed)?)
}

/// An IC-GT trace on random quadratics with every step logged.
#[allow(clippy::too_many_arguments)]
pub fn record_icgt_trace(
    mixing: &MixingMatrix,
    d: usize,
    channel: ChannelKind,
    shared_noise: bool,
    alpha: f64,
    gamma: f64,
    steps: usize,
    seed: u64,
) -> Result<Trace> {
    let n = mixing.n();
    let objective = Objective::random_quadratic(n, d, 5.0, 1.0, seed)?;
    let ch_x = ChannelModel::new(channel)?.with_stream(seed, StreamTag::ChannelX);
    let ch_y = ChannelModel::new(channel)?.with_stream(seed, StreamTag::ChannelY);
    let oracle = GradientOracle::exact();
    let params = AlgParams::icgt(alpha, gamma).with_shared_noise(shared_noise);
    let ctx = StepContext {
        mixing,
        ch_x: &ch_x,
        ch_y: &ch_y,
        oracle: &oracle,
        objective: &objective,
        params: &params,
    };
    let x0 = crate::harness::run::initial_iterate(n, d, 1.0, seed);
    let mut state = init_state(Variant::Icgt, x0, &oracle, &objective)?;
    let mut trace = Trace::default();
    for _ in 0..steps {
        state = icgt_step(&state, &ctx, Some(&mut trace))?;
    }
    Ok(trace)
}

/// Draw `draw` of the randomized recursion family: `ρ′ ∈ (0, 1/4]`,
/// `b = ρ′/4`, `ρ″ ∈ [1, 2(1+τ²)]`, `c, r, e_i ∈ [0, 1)`, `a₀ ∈ [0, 10)`,
/// `τ ∈ {1..10}`, horizon `20τ`.
pub fn scalar_recursion_instance(seed: u64, draw: usize) -> (ScalarRecursionParams, Vec<f64>, usize) {
    let mut rng = substream(seed, StreamTag::MonteCarlo, &[0x4c34, draw as u64]);
    let tau = rng.random_range(1..=10usize);
    let rho_prime = 0.25 * (1.0 - rng.random::<f64>());
    let hi = 2.0 * (1.0 + (tau * tau) as f64);
    let p = ScalarRecursionParams {
        rho_prime,
        rho_dprime: rng.random_range(1.0..=hi),
        b: rho_prime / 4.0,
        c: rng.random::<f64>(),
        r: rng.random::<f64>(),
        tau,
        a0: 10.0 * rng.random::<f64>(),
    };
    let horizon = 20 * tau;
    let e = (0..horizon).map(|_| rng.random::<f64>()).collect();
    (p, e, horizon)
}

/// Runs the verification grid and reports one row per case.
pub fn run_checks(grid: CheckGrid) -> Result<CheckReport> {
    let full = grid == CheckGrid::Full;
    let sizes: &[usize] = if full { &[3, 5, 10] } else { &[3, 5] };
    let gammas = [0.05, 0.1, 0.2];
    let mut rep = CheckReport::default();

    for kind in TopologyKind::ALL {
        for &n in sizes {
            let w = mixing_for(kind, n, 11)?;
            let m = w.matrix();
            let sym = (m - m.transpose()).abs().max();
            let ok = sym <= 1e-12 && is_doubly_stochastic(m, 1e-12) && w.lambda2() < 1.0 && w.lambda_n() > -1.0;
            rep.push("mixing", format!("{kind} n={n}"), w.lambda2(), 1.0, ok);

            for &g in &gammas {
                let c = verify_contraction(&w, 1, g, 1.0 / 16.0)?;
                rep.push(
                    "contraction",
                    format!("{kind} n={n} gamma={g} tau={}", c.tau),
                    c.norm_sq,
                    1.0 / 16.0,
                    c.pass,
                );
            }

            let g = 0.1;
            let j = build_transition_matrix(&w, 1, g)?;
            let taus: Vec<usize> = if full { (2..=20).collect() } else { vec![2, 3, 7, 20] };
            let mut worst = 0.0f64;
            let mut worst_norm = 0.0f64;
            let a = contraction_block(&w, 1, g);
            let rate = 1.0 - g * (1.0 - w.lambda2());
            for &t in &taus {
                let diff = (matrix_power(&j.matrix, t) - closed_form_power(&w, 1, g, t)?).norm();
                worst = worst.max(diff);
                let norm = spectral_norm(&matrix_power(&a, t));
                worst_norm = worst_norm.max((norm - rate.powi(t as i32)).abs());
            }
            rep.push("closed_form", format!("{kind} n={n}"), worst, 1e-10, worst <= 1e-10);
            rep.push("norm_identity", format!("{kind} n={n}"), worst_norm, 1e-10, worst_norm <= 1e-10);
        }
    }

    let i_max = if full { 200 } else { 60 };
    let graphs = if full { 12 } else { 4 };
    for s in 0..graphs {
        let n = 3 + s % 8;
        let w = mixing_for(TopologyKind::ErdosRenyi, n, 100 + s as u64)?;
        for &g in &gammas {
            let v = power_difference_norm(&w, 1, g, i_max);
            rep.push("power_difference", format!("er n={n} seed={} gamma={g}", 100 + s), v, 4.0, v <= 4.0);
        }
    }

    let ring5 = mixing_for(TopologyKind::Ring, 5, 0)?;
    for (label, channel) in [
        ("exact", ChannelKind::Exact),
        ("quant", ChannelKind::ProbQuant { delta_p: 10 }),
        ("awgn", ChannelKind::Awgn { sigma_c: 0.1, h: 1.0 }),
    ] {
        let trace = record_icgt_trace(&ring5, 2, channel, true, 0.05, 0.1, 100, 5)?;
        let r = recursion_residual(&ring5, &trace)?;
        let limit = 1e-9 * (1.0 + r.max_state_norm);
        rep.push("recursion", format!("ring n=5 {label} shared"), r.max_residual, limit, r.pass);
    }

    let draws = if full { 100 } else { 25 };
    for draw in 0..draws {
        let (p, e, horizon) = scalar_recursion_instance(17, draw);
        let r = scalar_recursion_check(&p, &e, horizon)?;
        let worst = r
            .a
            .iter()
            .zip(&r.bound)
            .skip(1)
            .map(|(a, b)| a / b)
            .fold(0.0, f64::max);
        rep.push("scalar_recursion", format!("draw={draw} tau={}", p.tau), worst, 1.0, r.pass);
    }

    let trials = if full { 2000 } else { 1000 };
    for (kind, n) in [(TopologyKind::Ring, 6), (TopologyKind::Star, 6)] {
        let w = mixing_for(kind, n, 0)?;
        let x0 = DMatrix::from_fn(n, 2, |i, c| (i as f64) - 0.5 * c as f64);
        for &(g, s) in &[(0.1, 0.1), (0.2, 0.3)] {
            let r = averaging_bound_mc(&w, g, s, &x0, 60, trials, 23)?;
            let worst = r
                .empirical
                .iter()
                .zip(&r.bound)
                .map(|(e, b)| e / b)
                .fold(0.0, f64::max);
            rep.push(
                "averaging",
                format!("{kind} n={n} gamma={g} sigma_c={s}"),
                worst,
                1.0,
                r.pass,
            );
        }
    }
    Ok(rep)
}
