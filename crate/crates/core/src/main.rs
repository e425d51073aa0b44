use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use icgt::algorithm::{compute_tau, DEFAULT_DELTA_TARGET};
use icgt::harness::{
    apply_env_overrides, build_problem, emit_plot_data, grid_search, load_config, run_checks, run_on_problem, sweep,
    write_atomic, AlphaMode, CheckGrid, PlotData, SweepAxis,
};
use icgt::Result;

#[derive(Parser)]
#[command(name = "icgt", version, about = "Decentralized optimization over noisy links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its metric CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's `output` key.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat an experiment over values of one axis.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// n, topology, sigma_c or algorithm.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long, default_value = "sweep_out")]
        out: PathBuf,
    },
    /// Run the numerical verification grid.
    Check {
        #[arg(long, default_value = "small")]
        grid: CheckGrid,
        /// Where to write the CSV report.
        #[arg(long, default_value = "check_report.csv")]
        csv: PathBuf,
    },
    /// Print the contraction horizon for a given gamma and second eigenvalue.
    Tau {
        #[arg(long)]
        gamma: f64,
        #[arg(long, allow_hyphen_values = true)]
        lambda2: f64,
        #[arg(long, default_value_t = DEFAULT_DELTA_TARGET)]
        delta: f64,
    },
    /// Explain how to obtain the MNIST files.
    MnistFetchNote,
}

const MNIST_NOTE: &str = "\
This tool never downloads data. To use MNIST:
  1. Download train-images-idx3-ubyte.gz and train-labels-idx1-ubyte.gz from a
     mirror of the MNIST database.
  2. Decompress them (gunzip) so that the files start with the IDX magic
     numbers 2051 (images) and 2049 (labels).
  3. Point the config at them:
       objective.type = logistic
       dataset.source = mnist
       dataset.images = /path/to/train-images-idx3-ubyte
       dataset.labels = /path/to/train-labels-idx1-ubyte
       dataset.class_pair = 0,1
Pixels are scaled to [0, 1] and the two classes are relabelled 0 and 1.";

fn configure_threads() {
    if let Some(n) = std::env::var("SIM_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn execute(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Run { config, out } => {
            let mut cfg = load_config(&config)?;
            apply_env_overrides(&mut cfg)?;
            if let Some(dir) = out {
                cfg.output = Some(dir.join("run.csv"));
            }
            let problem = build_problem(&cfg)?;
            let record = if cfg.alpha_mode == AlphaMode::Grid {
                let (best, table) = grid_search(&problem, &cfg)?;
                for p in &table {
                    eprintln!("grid alpha={:.3e} final_opt_err={:.3e} {}", p.alpha, p.final_opt_err, p.status);
                }
                best
            } else {
                run_on_problem(&problem, &cfg)?
            };
            let path = cfg.output.clone().unwrap_or_else(|| PathBuf::from("run.csv"));
            record.write_csv(&path)?;
            if let Some(dir) = path.parent() {
                emit_plot_data(dir, &PlotData {
                    runs: std::slice::from_ref(&record),
                    ..PlotData::default()
                })?;
            }
            println!(
                "{} alpha={:.4e} gamma={:.4e} status={} final_opt_err={:.4e} -> {}",
                record.label,
                record.alpha,
                record.gamma,
                record.status,
                record.final_opt_err(),
                path.display()
            );
            Ok(true)
        }
        Command::Sweep {
            config,
            axis,
            values,
            repeats,
            out,
        } => {
            let mut cfg = load_config(&config)?;
            apply_env_overrides(&mut cfg)?;
            let table = sweep(&cfg, axis, &values, repeats)?;
            table.write(&out, &format!("sweep_{}", axis.name()))?;
            let data = match axis {
                SweepAxis::Topology => PlotData {
                    topology_sweep: Some(&table),
                    ..PlotData::default()
                },
                SweepAxis::SigmaC => PlotData {
                    sigma_sweep: Some(&table),
                    ..PlotData::default()
                },
                _ => PlotData::default(),
            };
            if data.topology_sweep.is_some() || data.sigma_sweep.is_some() {
                emit_plot_data(&out, &data)?;
            }
            for s in &table.summary {
                println!(
                    "{}={} repeats={} mean_final_opt_err={:.4e} mean_final_consensus={:.4e} diverged={}",
                    axis.name(),
                    s.axis_value,
                    s.repeats,
                    s.mean_final_opt_err,
                    s.mean_final_consensus,
                    s.diverged
                );
            }
            Ok(true)
        }
        Command::Check { grid, csv } => {
            let report = run_checks(grid)?;
            print!("{}", report.to_text());
            write_atomic(&csv, report.to_csv().as_bytes())?;
            Ok(report.all_pass())
        }
        Command::Tau { gamma, lambda2, delta } => {
            println!("{}", compute_tau(gamma, lambda2, delta)?);
            Ok(true)
        }
        Command::MnistFetchNote => {
            println!("{MNIST_NOTE}");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
