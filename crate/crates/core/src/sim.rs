//! Single-cluster NOMA uplink: ULA steering vectors, Rayleigh block fading,
//! sporadic device activity, Gray-coded QPSK and complex AWGN.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Per-device SNRs (dB) of the reference scenario, assigned in order.
pub const REFERENCE_SNRS_DB: [f64; 5] = [0.0, 5.0, 10.0, 15.0, 20.0];
/// Per-device azimuths (degrees) of the reference scenario, assigned in order.
pub const REFERENCE_ANGLES_DEG: [f64; 5] = [30.0, 60.0, 90.0, 120.0, 150.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    /// Average per-antenna receive SNR in dB.
    pub snr_db: f64,
    /// Azimuth of the device seen from the array.
    pub angle_deg: f64,
    /// Probability of being active in a coherence block.
    pub activity_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterScenario {
    pub num_antennas: usize,
    pub devices: Vec<DeviceProfile>,
    /// Symbols per coherence block, `T_b`.
    pub coherence_block_symbols: usize,
    /// Leading training symbols of each block, `T`.
    pub training_symbols: usize,
    /// Noise variance per complex antenna sample.
    pub noise_variance: f64,
}

impl ClusterScenario {
    /// Reference scenario: `M = 3`, the first `num_devices` entries of the
    /// SNR and angle tables, `T_b = 10_000` (10 ms at 1 MHz), `T = 500`,
    /// unit noise variance.
    pub fn reference(num_devices: usize, activity_prob: f64) -> Result<Self> {
        if num_devices == 0 || num_devices > REFERENCE_SNRS_DB.len() {
            return Err(Error::Config(format!(
                "reference scenario supports 1..=5 devices, got {num_devices}"
            )));
        }
        let devices = REFERENCE_SNRS_DB
            .iter()
            .zip(REFERENCE_ANGLES_DEG)
            .take(num_devices)
            .map(|(&snr_db, angle_deg)| DeviceProfile {
                snr_db,
                angle_deg,
                activity_prob,
            })
            .collect();
        let scenario = ClusterScenario {
            num_antennas: 3,
            devices,
            coherence_block_symbols: 10_000,
            training_symbols: 500,
            noise_variance: 1.0,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn num_devices(&self) -> usize {
        self.devices.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_antennas == 0 {
            return Err(Error::Config("num_antennas must be positive".into()));
        }
        if self.devices.is_empty() {
            return Err(Error::Config("at least one device is required".into()));
        }
        for (k, d) in self.devices.iter().enumerate() {
            if !(0.0..=1.0).contains(&d.activity_prob) {
                return Err(Error::Config(format!(
                    "device {k}: activity_prob {} outside [0, 1]",
                    d.activity_prob
                )));
            }
            if !d.snr_db.is_finite() || !d.angle_deg.is_finite() {
                return Err(Error::Config(format!(
                    "device {k}: non-finite SNR or angle"
                )));
            }
        }
        if self.training_symbols == 0 || self.training_symbols > self.coherence_block_symbols {
            return Err(Error::Config(format!(
                "training_symbols must be in 1..={}, got {}",
                self.coherence_block_symbols, self.training_symbols
            )));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::Config(format!(
                "noise_variance must be non-negative, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }

    /// Transmit power `p_k = sigma_n^2 10^(snr_k / 10)`. A zero noise variance
    /// is treated as unit variance for the power reference.
    pub fn power(&self, k: usize) -> f64 {
        let reference = if self.noise_variance > 0.0 {
            self.noise_variance
        } else {
            1.0
        };
        reference * 10f64.powf(self.devices[k].snr_db / 10.0)
    }

    pub fn steering_vectors(&self) -> Vec<Vec<C64>> {
        self.devices
            .iter()
            .map(|d| steering_vector(self.num_antennas, d.angle_deg))
            .collect()
    }
}

/// Column-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> &[C64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[j * self.rows + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[j * self.rows + i] = v;
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }
}

/// One Rayleigh block-fading coherence block.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceBlock {
    /// `h_k`, constant over the block.
    pub channel_gains: Vec<C64>,
    pub activity_mask: Vec<bool>,
    /// `K x T_b` QPSK symbols; rows of inactive devices are zero.
    pub tx_symbols: ComplexMatrix,
    /// `M x T_b` noise realisation.
    pub noise: ComplexMatrix,
    /// `M x T_b` received samples.
    pub rx_samples: ComplexMatrix,
}

impl CoherenceBlock {
    pub fn rx(&self, t: usize) -> &[C64] {
        self.rx_samples.column(t)
    }

    pub fn symbol(&self, device: usize, t: usize) -> C64 {
        self.tx_symbols.get(device, t)
    }

    pub fn num_symbols(&self) -> usize {
        self.rx_samples.cols()
    }
}

/// Half-wavelength ULA response `s_m = exp(-i pi (m - 1) cos theta)`.
pub fn steering_vector(num_antennas: usize, angle_deg: f64) -> Vec<C64> {
    let phase = PI * angle_deg.to_radians().cos();
    (0..num_antennas)
        .map(|m| C64::from_polar(1.0, -phase * m as f64))
        .collect()
}

fn complex_gaussian(rng: &mut impl Rng, variance: f64) -> C64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(scale * re, scale * im)
}

/// Draws a block. `always_active` names a device forced active regardless
/// of its activity probability; every other device is active independently.
pub fn generate_block(
    scenario: &ClusterScenario,
    seed: u64,
    always_active: Option<usize>,
) -> CoherenceBlock {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k_count = scenario.num_devices();
    let m_count = scenario.num_antennas;
    let t_count = scenario.coherence_block_symbols;

    let channel_gains: Vec<C64> = (0..k_count)
        .map(|_| complex_gaussian(&mut rng, 1.0))
        .collect();
    let activity_mask: Vec<bool> = scenario
        .devices
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let u: f64 = rng.random();
            always_active == Some(k) || u < d.activity_prob
        })
        .collect();

    let mut tx_symbols = ComplexMatrix::zeros(k_count, t_count);
    for t in 0..t_count {
        for (k, &active) in activity_mask.iter().enumerate() {
            let bits: u8 = rng.random_range(0..4);
            if active {
                tx_symbols.set(k, t, qpsk_symbol([bits & 1, bits >> 1]));
            }
        }
    }
    let mut noise = ComplexMatrix::zeros(m_count, t_count);
    for v in noise.data.iter_mut() {
        *v = complex_gaussian(&mut rng, scenario.noise_variance);
    }
    let rx_samples = synthesize_rx(scenario, &channel_gains, &tx_symbols, &noise);
    CoherenceBlock {
        channel_gains,
        activity_mask,
        tx_symbols,
        noise,
        rx_samples,
    }
}

/// `r(t) = sum_k sqrt(p_k) h_k b_k(t) s_k + n(t)`.
pub fn synthesize_rx(
    scenario: &ClusterScenario,
    channel_gains: &[C64],
    tx_symbols: &ComplexMatrix,
    noise: &ComplexMatrix,
) -> ComplexMatrix {
    let steering = scenario.steering_vectors();
    let signatures: Vec<Vec<C64>> = steering
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let g = channel_gains[k] * scenario.power(k).sqrt();
            s.iter().map(|&x| g * x).collect()
        })
        .collect();
    let mut rx = noise.clone();
    for t in 0..tx_symbols.cols() {
        let col = &mut rx.data[t * rx.rows..(t + 1) * rx.rows];
        for (k, sig) in signatures.iter().enumerate() {
            let b = tx_symbols.get(k, t);
            if b == C64::new(0.0, 0.0) {
                continue;
            }
            for (r, s) in col.iter_mut().zip(sig) {
                *r += s * b;
            }
        }
    }
    rx
}

/// Effective per-device channel `sqrt(p_k) h_k s_k` of a block, zero for
/// inactive devices.
pub fn effective_channels(scenario: &ClusterScenario, block: &CoherenceBlock) -> Vec<Vec<C64>> {
    scenario
        .steering_vectors()
        .into_iter()
        .enumerate()
        .map(|(k, s)| {
            if !block.activity_mask[k] {
                return vec![C64::new(0.0, 0.0); s.len()];
            }
            let g = block.channel_gains[k] * scenario.power(k).sqrt();
            s.into_iter().map(|x| g * x).collect()
        })
        .collect()
}

/// Gray-coded QPSK point `(+-1) + i(+-1)`: bit 0 selects the sign of the real
/// part, bit 1 the sign of the imaginary part (1 = negative).
pub fn qpsk_symbol(bits: [u8; 2]) -> C64 {
    let sign = |b: u8| if b == 0 { 1.0 } else { -1.0 };
    C64::new(sign(bits[0]), sign(bits[1]))
}

/// Bits of the quadrant containing `z`. Exact zeros decide as positive.
pub fn qpsk_gray_bits(z: C64) -> [u8; 2] {
    [(z.re < 0.0) as u8, (z.im < 0.0) as u8]
}

/// Hard decision to the nearest QPSK point.
pub fn qpsk_decide(z: C64) -> C64 {
    qpsk_symbol(qpsk_gray_bits(z))
}

/// Number of differing Gray bits between two symbols' quadrants.
pub fn bit_errors(detected: C64, sent: C64) -> u32 {
    let a = qpsk_gray_bits(detected);
    let b = qpsk_gray_bits(sent);
    (a[0] ^ b[0]) as u32 + (a[1] ^ b[1]) as u32
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the stream addressed by `path` under `master`, e.g.
/// `[experiment, device, block]`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

fn write_matrix<W: Write>(out: &mut W, m: &ComplexMatrix) -> std::io::Result<()> {
    for z in &m.data {
        out.write_all(&z.re.to_le_bytes())?;
        out.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

fn read_matrix<R: Read>(input: &mut R, rows: usize, cols: usize) -> std::io::Result<ComplexMatrix> {
    let mut m = ComplexMatrix::zeros(rows, cols);
    let mut buf = [0u8; 8];
    for z in m.data.iter_mut() {
        input.read_exact(&mut buf)?;
        let re = f64::from_le_bytes(buf);
        input.read_exact(&mut buf)?;
        z.re = re;
        z.im = f64::from_le_bytes(buf);
    }
    Ok(m)
}

/// Binary block dump. Header: `M`, `K`, `T_b` as little-endian `u64`. Then
/// column-major complex matrices, each entry as two little-endian IEEE-754
/// doubles (re, im), in order: channel gains `K x 1`, activity `K x 1`
/// (1 + 0i active, 0 inactive), symbols `K x T_b`, noise `M x T_b`,
/// received samples `M x T_b`.
pub fn write_block_dump<W: Write>(mut out: W, block: &CoherenceBlock) -> std::io::Result<()> {
    let m = block.rx_samples.rows() as u64;
    let k = block.channel_gains.len() as u64;
    let t = block.rx_samples.cols() as u64;
    for v in [m, k, t] {
        out.write_all(&v.to_le_bytes())?;
    }
    let gains = ComplexMatrix {
        rows: k as usize,
        cols: 1,
        data: block.channel_gains.clone(),
    };
    let mask = ComplexMatrix {
        rows: k as usize,
        cols: 1,
        data: block
            .activity_mask
            .iter()
            .map(|&a| C64::new(if a { 1.0 } else { 0.0 }, 0.0))
            .collect(),
    };
    write_matrix(&mut out, &gains)?;
    write_matrix(&mut out, &mask)?;
    write_matrix(&mut out, &block.tx_symbols)?;
    write_matrix(&mut out, &block.noise)?;
    write_matrix(&mut out, &block.rx_samples)
}

pub fn read_block_dump<R: Read>(mut input: R) -> std::io::Result<CoherenceBlock> {
    let mut buf = [0u8; 8];
    let mut header = [0usize; 3];
    for h in header.iter_mut() {
        input.read_exact(&mut buf)?;
        *h = u64::from_le_bytes(buf) as usize;
    }
    let [m, k, t] = header;
    let gains = read_matrix(&mut input, k, 1)?;
    let mask = read_matrix(&mut input, k, 1)?;
    Ok(CoherenceBlock {
        channel_gains: gains.data,
        activity_mask: mask.data.iter().map(|z| z.re != 0.0).collect(),
        tx_symbols: read_matrix(&mut input, k, t)?,
        noise: read_matrix(&mut input, m, t)?,
        rx_samples: read_matrix(&mut input, m, t)?,
    })
}
