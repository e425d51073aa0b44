//! Single experiment runs: problem construction, the step loop and metrics.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::{AlphaMode, DatasetSpec, ExperimentConfig, ObjectiveSpec};
use super::write_atomic;
use crate::algorithm::{
    column_mean, compute_tau, deviation, init_state, max_step_size, step, AlgState, StepContext, Trace,
    DEFAULT_DELTA_TARGET,
};
use crate::channel::ChannelModel;
use crate::dataset::{ingest_mnist_idx, partition_dataset, synth_dataset};
use crate::graph::{build_topology, metropolis_weights, MixingMatrix, Topology};
use crate::objective::{
    estimate_constants, solve_reference, GradientOracle, Objective, ReferenceSolution, SmoothnessInfo, REFERENCE_TOL,
};
use crate::rng::{substream, StreamTag};
use crate::{Error, Result};

pub const RUN_CSV_HEADER: &str = "iter,opt_err,avg_consensus,stacked_consensus,psi_norm_sq,status";

/// Step sizes tried by the grid search: 13 points, log-spaced from 1e-4 to 1.
pub fn alpha_grid() -> Vec<f64> {
    (0..13).map(|i| 10f64.powf(-4.0 + i as f64 / 3.0)).collect()
}

/// Everything a run needs that does not depend on the step size.
#[derive(Clone, Debug)]
pub struct Problem {
    pub topology: Topology,
    pub mixing: MixingMatrix,
    pub objective: Objective,
    pub reference: ReferenceSolution,
    pub constants: SmoothnessInfo,
    pub x0: DMatrix<f64>,
}

pub fn build_objective(cfg: &ExperimentConfig) -> Result<Objective> {
    match &cfg.objective {
        ObjectiveSpec::Quadratic { dim, kappa, spread } => Objective::random_quadratic(cfg.n, *dim, *kappa, *spread, cfg.seed),
        ObjectiveSpec::Logistic { lambda, dataset } => {
            let (data, per_node) = match dataset {
                DatasetSpec::Synthetic {
                    per_node,
                    separation,
                    dim,
                } => (synth_dataset(cfg.n * per_node, *dim, cfg.seed, *separation)?, *per_node),
                DatasetSpec::Mnist {
                    images,
                    labels,
                    class_pair,
                    per_node,
                } => (ingest_mnist_idx(images, labels, *class_pair)?, *per_node),
            };
            let shards = partition_dataset(&data, cfg.n, per_node, cfg.seed)?;
            Objective::logistic(shards, *lambda)
        }
    }
}

/// Initial iterate: each row `~ N(0, init_spread² I)` on its own substream.
pub fn initial_iterate(n: usize, d: usize, spread: f64, seed: u64) -> DMatrix<f64> {
    let mut x0 = DMatrix::zeros(n, d);
    if spread > 0.0 {
        for i in 0..n {
            let mut rng = substream(seed, StreamTag::Init, &[i as u64]);
            for c in 0..d {
                x0[(i, c)] = spread * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    x0
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    cfg.validate()?;
    let topology = build_topology(cfg.topology, cfg.n, cfg.er_prob, cfg.seed)?;
    let mixing = metropolis_weights(&topology)?;
    let objective = build_objective(cfg)?;
    let reference = solve_reference(&objective, REFERENCE_TOL)?;
    let constants = estimate_constants(&objective);
    let x0 = initial_iterate(cfg.n, objective.dim(), cfg.init_spread, cfg.seed);
    Ok(Problem {
        topology,
        mixing,
        objective,
        reference,
        constants,
        x0,
    })
}

/// `‖x̄ − x*‖²`.
pub fn optimality_error(x: &DMatrix<f64>, x_star: &DVector<f64>) -> f64 {
    (column_mean(x) - x_star).norm_squared()
}

/// `Σ_i ‖x_i − x̄‖²`.
pub fn stacked_consensus(x: &DMatrix<f64>) -> f64 {
    deviation(x).norm_squared()
}

/// `(1/|E|) Σ_{(i,j)∈E} ‖x_i − x_j‖²`; zero for an edgeless graph.
pub fn avg_pairwise_consensus(x: &DMatrix<f64>, topology: &Topology) -> f64 {
    if topology.edges.is_empty() {
        return 0.0;
    }
    let total: f64 = topology
        .edges
        .iter()
        .map(|&(i, j)| (x.row(i) - x.row(j)).norm_squared())
        .sum();
    total / topology.edges.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Converged { iteration: usize },
    BudgetExhausted,
    Diverged { iteration: usize },
}

impl RunStatus {
    pub fn is_diverged(&self) -> bool {
        matches!(self, RunStatus::Diverged { .. })
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunStatus::Converged { .. } => f.write_str("converged"),
            RunStatus::BudgetExhausted => f.write_str("budget_exhausted"),
            RunStatus::Diverged { iteration } => write!(f, "diverged@{iteration}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub iter: usize,
    pub opt_err: f64,
    pub avg_consensus: f64,
    pub stacked_consensus: f64,
    /// `‖Ψ_k‖²` for the tracking variants.
    pub psi_norm_sq: Option<f64>,
    /// Seconds since the run started; never written to CSV.
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub label: String,
    pub alpha: f64,
    pub gamma: f64,
    pub rows: Vec<MetricRow>,
    pub status: RunStatus,
    pub final_state: AlgState,
    pub trace: Option<Trace>,
}

impl RunRecord {
    /// Last recorded optimality error; `+inf` for a diverged run.
    pub fn final_opt_err(&self) -> f64 {
        if self.status.is_diverged() {
            f64::INFINITY
        } else {
            self.rows.last().map_or(f64::INFINITY, |r| r.opt_err)
        }
    }

    pub fn final_consensus(&self) -> f64 {
        if self.status.is_diverged() {
            f64::INFINITY
        } else {
            self.rows.last().map_or(f64::INFINITY, |r| r.stacked_consensus)
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(RUN_CSV_HEADER);
        out.push('\n');
        let last = self.rows.len().saturating_sub(1);
        for (idx, r) in self.rows.iter().enumerate() {
            let psi = r.psi_norm_sq.map(|p| p.to_string()).unwrap_or_default();
            let status = if idx == last { self.status.to_string() } else { "running".to_string() };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iter, r.opt_err, r.avg_consensus, r.stacked_consensus, psi, status
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

fn metric_row(state: &AlgState, problem: &Problem, start: &Instant) -> MetricRow {
    MetricRow {
        iter: state.k,
        opt_err: optimality_error(&state.x, &problem.reference.x_star),
        avg_consensus: avg_pairwise_consensus(&state.x, &problem.topology),
        stacked_consensus: stacked_consensus(&state.x),
        psi_norm_sq: None,
        wall_time: start.elapsed().as_secs_f64(),
    }
}

/// `‖Δv‖² + ‖Δx‖² + α²‖Δy‖²` with `v` produced by the step leaving `x`.
fn psi_norm_sq(v: &DMatrix<f64>, x: &DMatrix<f64>, y: &DMatrix<f64>, alpha: f64) -> f64 {
    stacked_consensus(v) + stacked_consensus(x) + alpha * alpha * stacked_consensus(y)
}

/// Runs `cfg.iterations` steps with step size `alpha` on a prepared problem.
pub fn simulate(problem: &Problem, cfg: &ExperimentConfig, alpha: f64) -> Result<RunRecord> {
    let params = cfg.params(alpha);
    params.validate()?;
    let ch_x = ChannelModel::new(cfg.channel)?.with_stream(cfg.seed, StreamTag::ChannelX);
    let ch_y = ChannelModel::new(cfg.channel)?.with_stream(cfg.seed, StreamTag::ChannelY);
    let oracle = GradientOracle::new(cfg.oracle, cfg.seed)?;
    let ctx = StepContext {
        mixing: &problem.mixing,
        ch_x: &ch_x,
        ch_y: &ch_y,
        oracle: &oracle,
        objective: &problem.objective,
        params: &params,
    };
    let tracks = cfg.algorithm.tracks_gradient();
    let mut trace = (cfg.log_noise && tracks).then(Trace::default);
    let start = Instant::now();
    let mut state = init_state(cfg.algorithm, problem.x0.clone(), &oracle, &problem.objective)?;
    let mut rows = Vec::new();
    let mut status = RunStatus::BudgetExhausted;
    loop {
        let k = state.k;
        let record = k % cfg.cadence == 0 || k == cfg.iterations;
        if record {
            let row = metric_row(&state, problem, &start);
            let hit = cfg.tol > 0.0 && row.opt_err <= cfg.tol;
            rows.push(row);
            if hit {
                status = RunStatus::Converged { iteration: k };
                break;
            }
        }
        if k >= cfg.iterations {
            break;
        }
        match step(&state, &ctx, trace.as_mut()) {
            Ok(next) => {
                if record && tracks {
                    if let (Some(v), Some(y)) = (&next.v, &state.y) {
                        rows.last_mut().expect("row just pushed").psi_norm_sq =
                            Some(psi_norm_sq(v, &state.x, y, alpha));
                    }
                }
                state = next;
            }
            Err(Error::Diverged { iteration }) => {
                status = RunStatus::Diverged { iteration };
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RunRecord {
        label: cfg.algorithm.to_string(),
        alpha,
        gamma: params.gamma,
        rows,
        status,
        final_state: state,
        trace,
    })
}

/// One grid point: step size, final optimality error and status.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub alpha: f64,
    pub final_opt_err: f64,
    pub status: RunStatus,
}

/// Runs every grid step size in parallel on the same problem and seeds and
/// returns the record with the smallest final optimality error (diverged runs
/// rank as `+inf`, ties go to the smaller step size).
pub fn grid_search(problem: &Problem, cfg: &ExperimentConfig) -> Result<(RunRecord, Vec<GridPoint>)> {
    let mut quiet = cfg.clone();
    quiet.log_noise = false;
    let runs: Vec<RunRecord> = alpha_grid()
        .into_par_iter()
        .map(|a| simulate(problem, &quiet, a))
        .collect::<Result<Vec<_>>>()?;
    let table = runs
        .iter()
        .map(|r| GridPoint {
            alpha: r.alpha,
            final_opt_err: r.final_opt_err(),
            status: r.status,
        })
        .collect();
    let best_idx = runs
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.final_opt_err().total_cmp(&b.final_opt_err()))
        .map(|(i, _)| i)
        .expect("grid is non-empty");
    let best = if cfg.log_noise {
        simulate(problem, cfg, runs[best_idx].alpha)?
    } else {
        runs.into_iter().nth(best_idx).expect("index in range")
    };
    Ok((best, table))
}

/// Step size admitted by the convergence bound for this problem.
pub fn theoretical_alpha(problem: &Problem, gamma: f64) -> Result<f64> {
    let lambda2 = problem.mixing.lambda2();
    // A single node has no consensus error, so one step of horizon suffices.
    let tau = if problem.mixing.n() == 1 {
        1
    } else {
        compute_tau(gamma, lambda2, DEFAULT_DELTA_TARGET)?
    };
    Ok(max_step_size(tau, problem.constants.l))
}

/// Resolves the step size per `alpha.mode` and runs the experiment, writing
/// the CSV when `output` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let problem = build_problem(cfg)?;
    let record = run_on_problem(&problem, cfg)?;
    if let Some(path) = &cfg.output {
        record.write_csv(path)?;
    }
    Ok(record)
}

/// Like [`run_experiment`] on an already built problem, without writing files.
pub fn run_on_problem(problem: &Problem, cfg: &ExperimentConfig) -> Result<RunRecord> {
    match cfg.alpha_mode {
        AlphaMode::Fixed => simulate(problem, cfg, cfg.alpha),
        AlphaMode::Theoretical => simulate(problem, cfg, theoretical_alpha(problem, cfg.gamma)?),
        AlphaMode::Grid => grid_search(problem, cfg).map(|(best, _)| best),
    }
}
