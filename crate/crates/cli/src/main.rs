//! `noma-plaf`: run detection experiments, check configs, print oracle values.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error. Log
//! verbosity comes from `NOMA_PLAF_LOG` (e.g. `info`, `debug`).

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use noma_plaf::harness::{emit_csv, run_experiment, write_csv, DetectorKind, ExperimentConfig};
use noma_plaf::mmse_sic::{mmse_weights, CsiSnapshot};
use noma_plaf::oracle;
use noma_plaf::sim::{steering_vector, ClusterScenario};
use noma_plaf::{
    kernel, FilterConfig, GaussianDictionary, KernelConfig, PartiallyLinearFilter, RealSample,
    TrainingSample, C64,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LOG_ENV: &str = "NOMA_PLAF_LOG";

#[derive(Parser)]
#[command(
    name = "noma-plaf",
    version,
    about = "Adaptive-filter NOMA uplink detection experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write per-checkpoint metrics as CSV.
    Run {
        /// Experiment config (TOML).
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV path; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated detectors: plaf, nlaf, mmse-sic.
        #[arg(long, value_delimiter = ',')]
        detectors: Option<Vec<String>>,
        /// Override the number of experiments.
        #[arg(long)]
        experiments: Option<usize>,
    },
    /// Parse and validate a config file without running it.
    ValidateConfig { config: PathBuf },
    /// Print the reference config for a cluster size and activity probability.
    PrintConfig {
        #[arg(long, default_value_t = 5)]
        devices: usize,
        #[arg(long, default_value_t = 0.75)]
        activity: f64,
    },
    /// Evaluate the reference oracles and print the computed values.
    UnitOracles,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Failure::Config(e.to_string())
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            detectors,
            experiments,
        } => run(config, seed, out, detectors, experiments),
        Command::ValidateConfig { config } => validate(config),
        Command::PrintConfig { devices, activity } => print_config(devices, activity),
        Command::UnitOracles => unit_oracles(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(
    path: PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
    detectors: Option<Vec<String>>,
    experiments: Option<usize>,
) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::load(&path).map_err(Failure::config)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(n) = experiments {
        cfg.num_experiments = n;
    }
    if let Some(list) = detectors {
        cfg.detectors = list
            .iter()
            .map(|s| s.trim().parse::<DetectorKind>())
            .collect::<Result<_, _>>()
            .map_err(Failure::config)?;
    }
    cfg.validate().map_err(Failure::config)?;

    log::info!(
        "running {} experiments x {} devices, master seed {:#x}",
        cfg.num_experiments,
        cfg.scenario.num_devices(),
        cfg.master_seed
    );
    let started = Instant::now();
    let records = run_experiment(&cfg).map_err(Failure::runtime)?;
    log::info!(
        "{} records in {:.1}s",
        records.len(),
        started.elapsed().as_secs_f64()
    );
    match out {
        Some(p) => emit_csv(&records, &p).map_err(Failure::runtime),
        None => write_csv(&records, std::io::stdout().lock()).map_err(Failure::runtime),
    }
}

fn validate(path: PathBuf) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(&path).map_err(Failure::config)?;
    let detectors: Vec<&str> = cfg.detectors.iter().map(|d| d.as_str()).collect();
    println!(
        "{}: ok (M = {}, K = {}, T = {}, T_b = {}, {} blocks, {} experiments, detectors {})",
        path.display(),
        cfg.scenario.num_antennas,
        cfg.scenario.num_devices(),
        cfg.training_symbols(),
        cfg.scenario.coherence_block_symbols,
        cfg.num_blocks,
        cfg.num_experiments,
        detectors.join(",")
    );
    Ok(())
}

fn print_config(devices: usize, activity: f64) -> Result<(), Failure> {
    let cfg = ExperimentConfig::reference(devices, activity).map_err(Failure::config)?;
    cfg.validate().map_err(Failure::config)?;
    print!("{}", cfg.to_toml());
    Ok(())
}

fn unit_oracles() -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    let mut line =
        |name: &str, value: String| writeln!(out, "{name:<44} {value}").map_err(Failure::runtime);
    let rt = Failure::runtime;

    let sigma = 1.3;
    let g = kernel::gaussian_kernel(&[0.0, 0.0], &[sigma * 2f64.sqrt(), 0.0], sigma).map_err(rt)?;
    line(
        "gaussian_kernel(0, sigma*sqrt2 e1)",
        format!("{g:.15} (exp(-1) = {:.15})", (-1f64).exp()),
    )?;
    let cfg = KernelConfig::partially_linear(sigma);
    let s = kernel::sum_kernel(&[1.0, 2.0], &[1.0, 2.0], &cfg).map_err(rt)?;
    line("sum_kernel(u, u), ||u||^2 = 5", format!("{s:.15}"))?;

    let mut f = PartiallyLinearFilter::new(
        FilterConfig::with_kernel(KernelConfig::new(0.2, 0.8, 1.0).map_err(rt)?, 500),
        2,
    )
    .map_err(rt)?;
    let sample = TrainingSample::new(RealSample::zeros(2), 1.0).map_err(rt)?;
    line(
        "beta(f = 0, r = 0, b = 1)",
        format!("{:.15}", f.beta(&sample).map_err(rt)?),
    )?;

    let s60 = steering_vector(3, 60.0);
    line(
        "steering_vector(3, 60 deg)",
        s60.iter()
            .map(|z| format!("{:+.6}{:+.6}i", z.re, z.im))
            .collect::<Vec<_>>()
            .join(" "),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut d = GaussianDictionary::new(6, 1.0, 0.1, 50).map_err(rt)?;
    while d.len() < 50 {
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        d.try_admit(&x).map_err(rt)?;
    }
    let centers: Vec<Vec<f64>> = d.centers().map(|c| c.to_vec()).collect();
    let res = oracle::inverse_residual(&oracle::gram(&centers, 1.0), &d.gram_inverse());
    line("recursive K^-1 residual, S = 50", format!("{res:.3e}"))?;
    let r: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
    let zeta = d.project(&r).map_err(rt)?.zeta;
    let direct = oracle::direct_projection(&centers, &r, 1.0);
    let err = zeta
        .iter()
        .zip(&direct)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
        / direct.iter().map(|v| v * v).sum::<f64>().sqrt();
    line("projection vs dense solve, relative", format!("{err:.3e}"))?;

    let csi = CsiSnapshot::new(DMatrix::from_element(1, 1, C64::new(2.0, 0.0)), 1.0).map_err(rt)?;
    let w = mmse_weights(&csi, 0, &[0]).map_err(rt)?;
    line("mmse weight, g = 2, noise 1", format!("{:.15}", w[0].re))?;

    let scenario = ClusterScenario {
        coherence_block_symbols: 10,
        training_symbols: 1,
        ..ClusterScenario::reference(5, 1.0).map_err(rt)?
    };
    for k in 0..scenario.num_devices() {
        let snr = oracle::monte_carlo_snr_db(&scenario, k, 10_000, 100 + k as u64);
        line(
            &format!("empirical SNR device {k} (1e5 symbols)"),
            format!("{snr:.3} dB (configured {} dB)", scenario.devices[k].snr_db),
        )?;
    }
    Ok(())
}
