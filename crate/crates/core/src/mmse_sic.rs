//! Genie-aided MMSE beamforming with symbol-level successive interference
//! cancellation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sim::{qpsk_decide, ClusterScenario, CoherenceBlock};
use crate::C64;

/// Relative floor on the noise regulariser, used when the noise variance is
/// zero so that the MMSE system stays solvable.
const REGULARIZATION_FLOOR: f64 = 1e-12;

/// Perfect channel state for one coherence block.
#[derive(Debug, Clone)]
pub struct CsiSnapshot {
    /// `M x K`; column `k` is `sqrt(p_k) h_k s_k`, or zero if `k` is inactive.
    pub effective_channels: DMatrix<C64>,
    pub noise_variance: f64,
}

impl CsiSnapshot {
    pub fn new(effective_channels: DMatrix<C64>, noise_variance: f64) -> Result<Self> {
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(Error::Config(format!(
                "noise variance must be non-negative, got {noise_variance}"
            )));
        }
        Ok(CsiSnapshot {
            effective_channels,
            noise_variance,
        })
    }

    pub fn from_block(scenario: &ClusterScenario, block: &CoherenceBlock) -> Self {
        let columns = crate::sim::effective_channels(scenario, block);
        let m = scenario.num_antennas;
        let matrix = DMatrix::from_fn(m, columns.len(), |i, k| columns[k][i]);
        CsiSnapshot {
            effective_channels: matrix,
            noise_variance: scenario.noise_variance,
        }
    }

    pub fn num_antennas(&self) -> usize {
        self.effective_channels.nrows()
    }

    pub fn num_devices(&self) -> usize {
        self.effective_channels.ncols()
    }

    pub fn channel_power(&self, k: usize) -> f64 {
        self.effective_channels.column(k).norm_squared()
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.channel_power(k) > 0.0
    }

    fn regularizer(&self) -> f64 {
        let peak = (0..self.num_devices())
            .map(|k| self.channel_power(k))
            .fold(0.0, f64::max);
        self.noise_variance
            .max(REGULARIZATION_FLOOR * peak.max(1.0))
    }
}

/// Active devices by descending received power, ties by index.
pub fn sic_order(csi: &CsiSnapshot) -> Vec<usize> {
    let mut order: Vec<usize> = (0..csi.num_devices())
        .filter(|&k| csi.is_active(k))
        .collect();
    order.sort_by(|&a, &b| {
        csi.channel_power(b)
            .partial_cmp(&csi.channel_power(a))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// `w = (sum_{j in remaining} g_j g_j^H + sigma^2 I)^{-1} g_target`.
pub fn mmse_weights(csi: &CsiSnapshot, target: usize, remaining: &[usize]) -> Result<DVector<C64>> {
    if !remaining.contains(&target) {
        return Err(Error::Config(format!(
            "target device {target} is not among the remaining devices"
        )));
    }
    let m = csi.num_antennas();
    let mut cov = DMatrix::<C64>::identity(m, m) * C64::new(csi.regularizer(), 0.0);
    for &j in remaining {
        let g = csi.effective_channels.column(j);
        cov += g * g.adjoint();
    }
    let g = csi.effective_channels.column(target).into_owned();
    cov.lu().solve(&g).ok_or(Error::SingularGram)
}

/// Output of one SIC pass; entries of inactive devices are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SicDecision {
    /// MMSE soft estimates `w^H r` taken at each device's stage.
    pub soft: Vec<Option<C64>>,
    pub hard: Vec<Option<C64>>,
    /// Received vector after the final cancellation.
    pub residual: Vec<C64>,
}

/// SIC detector with stage weights precomputed for one block.
#[derive(Debug, Clone)]
pub struct SicDetector {
    csi: CsiSnapshot,
    stages: Vec<(usize, DVector<C64>)>,
}

impl SicDetector {
    pub fn new(csi: CsiSnapshot) -> Result<Self> {
        let order = sic_order(&csi);
        let mut stages = Vec::with_capacity(order.len());
        for (i, &k) in order.iter().enumerate() {
            stages.push((k, mmse_weights(&csi, k, &order[i..])?));
        }
        Ok(SicDetector { csi, stages })
    }

    pub fn order(&self) -> Vec<usize> {
        self.stages.iter().map(|(k, _)| *k).collect()
    }

    pub fn detect(&self, rx: &[C64]) -> Result<SicDecision> {
        let m = self.csi.num_antennas();
        if rx.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: rx.len(),
            });
        }
        let k_count = self.csi.num_devices();
        let mut soft = vec![None; k_count];
        let mut hard = vec![None; k_count];
        let mut residual = DVector::from_column_slice(rx);
        for (k, w) in &self.stages {
            let estimate = w.dotc(&residual);
            let decision = qpsk_decide(estimate);
            residual -= self.csi.effective_channels.column(*k) * decision;
            soft[*k] = Some(estimate);
            hard[*k] = Some(decision);
        }
        Ok(SicDecision {
            soft,
            hard,
            residual: residual.iter().copied().collect(),
        })
    }
}

/// Hard QPSK decisions for every device; `None` for inactive devices.
pub fn slic_detect(csi: &CsiSnapshot, rx: &[C64]) -> Result<Vec<Option<C64>>> {
    Ok(SicDetector::new(csi.clone())?.detect(rx)?.hard)
}
