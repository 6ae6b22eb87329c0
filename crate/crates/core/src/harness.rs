//! Experiment orchestration: multi-block training and validation of the
//! adaptive filters against the MMSE-SIC baseline, with BER/RMSE
//! aggregation and CSV output.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{FilterConfig, PartiallyLinearFilter};
use crate::kernel::KernelConfig;
use crate::mmse_sic::{CsiSnapshot, SicDetector};
use crate::sim::{bit_errors, derive_seed, generate_block, qpsk_decide, ClusterScenario};
use crate::C64;

/// Gaussian width of the reference configuration.
pub const REFERENCE_SIGMA: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectorKind {
    #[serde(rename = "plaf")]
    Plaf,
    #[serde(rename = "nlaf")]
    Nlaf,
    #[serde(rename = "mmse-sic")]
    MmseSic,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [
        DetectorKind::Plaf,
        DetectorKind::Nlaf,
        DetectorKind::MmseSic,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DetectorKind::Plaf => "plaf",
            DetectorKind::Nlaf => "nlaf",
            DetectorKind::MmseSic => "mmse-sic",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DetectorKind::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown detector {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ClusterScenario,
    /// Kernel of the partially linear filter.
    pub kernel: KernelConfig,
    /// Kernel of the nonlinear filter; defaults to `(w_L, w_G) = (0, 1)` with
    /// the same width as `kernel`.
    #[serde(default)]
    pub nlaf_kernel: Option<KernelConfig>,
    pub epsilon: f64,
    pub alpha: f64,
    pub window: usize,
    pub num_blocks: usize,
    /// Training symbols between validation checkpoints.
    pub validation_interval: usize,
    /// Fresh data symbols evaluated at each checkpoint.
    pub validation_points: usize,
    pub num_experiments: usize,
    pub master_seed: u64,
    pub detectors: Vec<DetectorKind>,
    /// Dictionary capacity; defaults to three training blocks.
    #[serde(default)]
    pub max_dictionary: Option<usize>,
    /// Centers kept at each block boundary; defaults to one training block.
    #[serde(default)]
    pub prune_keep: Option<usize>,
}

impl ExperimentConfig {
    /// Reference experiment for `num_devices` devices at activity `activity_prob`:
    /// `T = 500`, `epsilon = 0.01`, `alpha = 0.1`, `W = 50`, weights
    /// `(0.2, 0.8)`, 4 blocks, checkpoints every 100 symbols on 300 points,
    /// 100 experiments.
    pub fn reference(num_devices: usize, activity_prob: f64) -> Result<Self> {
        Ok(ExperimentConfig {
            scenario: ClusterScenario::reference(num_devices, activity_prob)?,
            kernel: KernelConfig::partially_linear(REFERENCE_SIGMA),
            nlaf_kernel: None,
            epsilon: 0.01,
            alpha: 0.1,
            window: 50,
            num_blocks: 4,
            validation_interval: 100,
            validation_points: 300,
            num_experiments: 100,
            master_seed: 0x5eed,
            detectors: DetectorKind::ALL.to_vec(),
            max_dictionary: None,
            prune_keep: None,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config is always representable as TOML")
    }

    pub fn training_symbols(&self) -> usize {
        self.scenario.training_symbols
    }

    pub fn checkpoints_per_block(&self) -> usize {
        self.training_symbols() / self.validation_interval
    }

    pub fn filter_config(&self, detector: DetectorKind) -> Option<FilterConfig> {
        let kernel = match detector {
            DetectorKind::Plaf => self.kernel,
            DetectorKind::Nlaf => self
                .nlaf_kernel
                .unwrap_or_else(|| KernelConfig::nonlinear(self.kernel.sigma)),
            DetectorKind::MmseSic => return None,
        };
        Some(FilterConfig {
            kernel,
            epsilon: self.epsilon,
            window: self.window,
            alpha: self.alpha,
            max_dictionary: self.max_dictionary.unwrap_or(3 * self.training_symbols()),
        })
    }

    pub fn prune_keep(&self) -> usize {
        self.prune_keep.unwrap_or(self.training_symbols())
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        let t = self.training_symbols();
        if self.validation_interval == 0 || !t.is_multiple_of(self.validation_interval) {
            return Err(Error::Config(format!(
                "validation_interval {} must divide training_symbols {t}",
                self.validation_interval
            )));
        }
        if self.validation_points == 0 {
            return Err(Error::Config("validation_points must be positive".into()));
        }
        let data = self.scenario.coherence_block_symbols - t;
        let needed = self.checkpoints_per_block() * self.validation_points;
        if needed > data {
            return Err(Error::Config(format!(
                "{} checkpoints of {} points need {needed} data symbols, block has {data}",
                self.checkpoints_per_block(),
                self.validation_points
            )));
        }
        if self.num_blocks == 0 || self.num_experiments == 0 {
            return Err(Error::Config(
                "num_blocks and num_experiments must be positive".into(),
            ));
        }
        if self.detectors.is_empty() {
            return Err(Error::Config("at least one detector is required".into()));
        }
        for (i, d) in self.detectors.iter().enumerate() {
            if self.detectors[..i].contains(d) {
                return Err(Error::Config(format!("detector {d} listed twice")));
            }
            if let Some(fc) = self.filter_config(*d) {
                fc.validate()?;
            }
        }
        if self.prune_keep() == 0 {
            return Err(Error::Config("prune_keep must be positive".into()));
        }
        Ok(())
    }
}

/// Aggregated metrics of one detector for one device at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub detector: DetectorKind,
    pub device: usize,
    pub block: usize,
    /// Training symbols of the block consumed before this checkpoint.
    pub train_symbol: usize,
    /// `bit_errors / bits`.
    pub ber: f64,
    /// Uniform average over experiments of the per-experiment RMSE of the
    /// complex soft output.
    pub rmse: f64,
    pub bit_errors: u64,
    pub bits: u64,
    pub experiments: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct CheckpointTally {
    bit_errors: u64,
    bits: u64,
    squared_error: f64,
    symbols: usize,
}

impl CheckpointTally {
    fn add(&mut self, soft: C64, hard: C64, sent: C64) {
        self.bit_errors += bit_errors(hard, sent) as u64;
        self.bits += 2;
        self.squared_error += (soft - sent).norm_sqr();
        self.symbols += 1;
    }

    fn rmse(&self) -> f64 {
        (self.squared_error / self.symbols as f64).sqrt()
    }
}

/// Tallies of one (experiment, device) run, indexed
/// `[detector][block * checkpoints + checkpoint]`.
type RunTallies = Vec<Vec<CheckpointTally>>;

fn run_device(config: &ExperimentConfig, experiment: usize, device: usize) -> Result<RunTallies> {
    let scenario = &config.scenario;
    let m = scenario.num_antennas;
    let t_train = config.training_symbols();
    let checkpoints = config.checkpoints_per_block();
    let mut filters: Vec<Option<PartiallyLinearFilter>> = config
        .detectors
        .iter()
        .map(|d| {
            config
                .filter_config(*d)
                .map(|fc| PartiallyLinearFilter::new(fc, 2 * m))
                .transpose()
        })
        .collect::<Result<_>>()?;
    let mut tallies: RunTallies =
        vec![
            vec![CheckpointTally::default(); config.num_blocks * checkpoints];
            config.detectors.len()
        ];

    for block_index in 0..config.num_blocks {
        let seed = derive_seed(
            config.master_seed,
            &[experiment as u64, device as u64, block_index as u64],
        );
        let wrap = |source: Error| Error::Experiment {
            experiment,
            device,
            block: block_index,
            seed,
            source: Box::new(source),
        };
        let block = generate_block(scenario, seed, Some(device));
        let sic = if config.detectors.contains(&DetectorKind::MmseSic) {
            Some(SicDetector::new(CsiSnapshot::from_block(scenario, &block)).map_err(wrap)?)
        } else {
            None
        };

        for t in 0..t_train {
            let rx = block.rx(t);
            let sent = block.symbol(device, t);
            for f in filters.iter_mut().flatten() {
                f.process_symbol(rx, sent).map_err(wrap)?;
            }
            if (t + 1) % config.validation_interval != 0 {
                continue;
            }
            let checkpoint = (t + 1) / config.validation_interval - 1;
            let start = t_train + checkpoint * config.validation_points;
            let slot = block_index * checkpoints + checkpoint;
            for v in start..start + config.validation_points {
                let rx = block.rx(v);
                let sent = block.symbol(device, v);
                let sic_out = match &sic {
                    Some(s) => Some(s.detect(rx).map_err(wrap)?),
                    None => None,
                };
                for (d, detector) in config.detectors.iter().enumerate() {
                    let (soft, hard) = match detector {
                        DetectorKind::MmseSic => {
                            let out = sic_out.as_ref().expect("sic detector exists");
                            (
                                out.soft[device].expect("device under test is active"),
                                out.hard[device].expect("device under test is active"),
                            )
                        }
                        _ => {
                            let f = filters[d].as_ref().expect("adaptive detector has a filter");
                            let soft = f.detect_symbol(rx).map_err(wrap)?;
                            (soft, qpsk_decide(soft))
                        }
                    };
                    tallies[d][slot].add(soft, hard, sent);
                }
            }
        }
        for f in filters.iter_mut().flatten() {
            f.end_training_block(config.prune_keep()).map_err(wrap)?;
            log::trace!(
                "experiment {experiment} device {device} block {block_index}: dictionary {}",
                f.dictionary().len()
            );
        }
    }
    Ok(tallies)
}

/// Runs every (experiment, device) pair and aggregates per checkpoint.
///
/// Each device is the device under test of its own block sequence, in which
/// it is always active. Runs execute in parallel; the reduction order is
/// fixed, so output does not depend on the thread count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<MetricsRecord>> {
    config.validate()?;
    let k_count = config.scenario.num_devices();
    let tasks: Vec<(usize, usize)> = (0..config.num_experiments)
        .flat_map(|e| (0..k_count).map(move |k| (e, k)))
        .collect();
    let runs: Vec<RunTallies> = tasks
        .par_iter()
        .map(|&(e, k)| {
            let out = run_device(config, e, k);
            log::debug!("experiment {e} device {k} done");
            out
        })
        .collect::<Result<_>>()?;
    Ok(aggregate(config, &runs))
}

fn aggregate(config: &ExperimentConfig, runs: &[RunTallies]) -> Vec<MetricsRecord> {
    let k_count = config.scenario.num_devices();
    let checkpoints = config.checkpoints_per_block();
    let mut records = Vec::new();
    for (d, detector) in config.detectors.iter().enumerate() {
        for device in 0..k_count {
            for block in 0..config.num_blocks {
                for c in 0..checkpoints {
                    let slot = block * checkpoints + c;
                    let mut errors = 0u64;
                    let mut bits = 0u64;
                    let mut rmse_sum = 0.0;
                    for e in 0..config.num_experiments {
                        let tally = &runs[e * k_count + device][d][slot];
                        errors += tally.bit_errors;
                        bits += tally.bits;
                        rmse_sum += tally.rmse();
                    }
                    records.push(MetricsRecord {
                        detector: *detector,
                        device,
                        block,
                        train_symbol: (c + 1) * config.validation_interval,
                        ber: errors as f64 / bits as f64,
                        rmse: rmse_sum / config.num_experiments as f64,
                        bit_errors: errors,
                        bits,
                        experiments: config.num_experiments,
                    });
                }
            }
        }
    }
    records
}

/// Writes records with the header
/// `detector,device,block,train_symbol,ber,rmse,bit_errors,bits,experiments`.
pub fn write_csv<W: Write>(
    records: &[MetricsRecord],
    out: W,
) -> std::result::Result<(), csv::Error> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    writer.write_record([
        "detector",
        "device",
        "block",
        "train_symbol",
        "ber",
        "rmse",
        "bit_errors",
        "bits",
        "experiments",
    ])?;
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn emit_csv(records: &[MetricsRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(records, std::io::BufWriter::new(file)).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<MetricsRecord>, _>>()
        .map_err(csv_err)
}

/// Mean BER over devices and blocks at the last checkpoint of each block.
pub fn mean_end_of_block_ber(records: &[MetricsRecord], detector: DetectorKind) -> Option<f64> {
    let last = records.iter().map(|r| r.train_symbol).max()?;
    mean_of(records, detector, |r| r.train_symbol == last, |r| r.ber)
}

/// Mean RMSE over devices and blocks at the last checkpoint of each block.
pub fn mean_end_of_block_rmse(records: &[MetricsRecord], detector: DetectorKind) -> Option<f64> {
    let last = records.iter().map(|r| r.train_symbol).max()?;
    mean_of(records, detector, |r| r.train_symbol == last, |r| r.rmse)
}

/// Cluster RMSE (mean over devices) at each checkpoint of `block`, in order.
pub fn cluster_rmse_curve(
    records: &[MetricsRecord],
    detector: DetectorKind,
    block: usize,
) -> Vec<(usize, f64)> {
    let mut symbols: Vec<usize> = records
        .iter()
        .filter(|r| r.detector == detector && r.block == block)
        .map(|r| r.train_symbol)
        .collect();
    symbols.sort_unstable();
    symbols.dedup();
    symbols
        .into_iter()
        .filter_map(|s| {
            mean_of(
                records,
                detector,
                |r| r.block == block && r.train_symbol == s,
                |r| r.rmse,
            )
            .map(|v| (s, v))
        })
        .collect()
}

fn mean_of(
    records: &[MetricsRecord],
    detector: DetectorKind,
    select: impl Fn(&MetricsRecord) -> bool,
    value: impl Fn(&MetricsRecord) -> f64,
) -> Option<f64> {
    let vals: Vec<f64> = records
        .iter()
        .filter(|r| r.detector == detector && select(r))
        .map(value)
        .collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}
