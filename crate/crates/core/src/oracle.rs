//! Independent reference computations: brute-force solves, direct
//! inversions and Monte-Carlo estimates used to check the fast paths.
//!
//! Nothing here shares code with the recursive or cached implementations.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::mmse_sic::CsiSnapshot;
use crate::sim::{generate_block, ClusterScenario};
use crate::C64;

fn gauss(u: &[f64], v: &[f64], sigma: f64) -> f64 {
    let mut d2 = 0.0;
    for i in 0..u.len() {
        d2 += (u[i] - v[i]).powi(2);
    }
    (-d2 / (2.0 * sigma.powi(2))).exp()
}

pub fn gram(centers: &[Vec<f64>], sigma: f64) -> DMatrix<f64> {
    let n = centers.len();
    DMatrix::from_fn(n, n, |i, j| gauss(&centers[i], &centers[j], sigma))
}

/// Solves `K zeta = xi` by dense LU.
pub fn direct_projection(centers: &[Vec<f64>], r: &[f64], sigma: f64) -> Vec<f64> {
    let k = gram(centers, sigma);
    let xi = DVector::from_iterator(centers.len(), centers.iter().map(|c| gauss(c, r, sigma)));
    k.lu()
        .solve(&xi)
        .expect("gram matrix is singular")
        .iter()
        .copied()
        .collect()
}

/// `|| k(r, .) - sum_l zeta_l k(c_l, .) ||^2` expanded through kernel
/// evaluations.
pub fn rkhs_residual(centers: &[Vec<f64>], r: &[f64], zeta: &[f64], sigma: f64) -> f64 {
    let mut total = gauss(r, r, sigma);
    for (l, c) in centers.iter().enumerate() {
        total -= 2.0 * zeta[l] * gauss(c, r, sigma);
        for (j, d) in centers.iter().enumerate() {
            total += zeta[l] * zeta[j] * gauss(c, d, sigma);
        }
    }
    total
}

pub fn direct_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().try_inverse()
}

/// Frobenius norm of `K K^{-1} - I`.
pub fn inverse_residual(k: &DMatrix<f64>, k_inv: &DMatrix<f64>) -> f64 {
    let n = k.nrows();
    (k * k_inv - DMatrix::<f64>::identity(n, n)).norm()
}

/// Empirical per-antenna receive SNR of `device`, in dB, estimated from the
/// synthesized samples of `blocks` independent blocks with every other
/// device silenced: signal power is measured as `|r - n|^2 / |b|^2`.
pub fn monte_carlo_snr_db(
    scenario: &ClusterScenario,
    device: usize,
    blocks: usize,
    seed: u64,
) -> f64 {
    let mut solo = scenario.clone();
    for d in solo.devices.iter_mut() {
        d.activity_prob = 0.0;
    }
    let mut signal = 0.0;
    let mut noise = 0.0;
    for b in 0..blocks {
        let block = generate_block(&solo, seed.wrapping_add(b as u64), Some(device));
        for t in 0..block.num_symbols() {
            let sym = block.symbol(device, t).norm_sqr();
            for m in 0..solo.num_antennas {
                let n = block.noise.get(m, t);
                signal += (block.rx(t)[m] - n).norm_sqr() / sym;
                noise += n.norm_sqr();
            }
        }
    }
    10.0 * (signal / noise).log10()
}

/// Least-squares slope of `w^H r` regressed on the target symbol, from
/// `samples` random QPSK transmissions of every device through `csi`.
pub fn mmse_regression_slope(
    csi: &CsiSnapshot,
    weights: &DVector<C64>,
    target: usize,
    samples: usize,
    seed: u64,
) -> C64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = csi.num_antennas();
    let scale = (csi.noise_variance / 2.0).sqrt();
    let mut cross = C64::new(0.0, 0.0);
    let mut energy = 0.0;
    for _ in 0..samples {
        let mut rx = DVector::<C64>::zeros(m);
        let mut b_target = C64::new(0.0, 0.0);
        for k in 0..csi.num_devices() {
            let b = C64::new(
                if rng.random::<bool>() { 1.0 } else { -1.0 },
                if rng.random::<bool>() { 1.0 } else { -1.0 },
            );
            if k == target {
                b_target = b;
            }
            rx += csi.effective_channels.column(k) * b;
        }
        for i in 0..m {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            rx[i] += C64::new(scale * re, scale * im);
        }
        let y = weights.dotc(&rx);
        cross += y * b_target.conj();
        energy += b_target.norm_sqr();
    }
    cross / energy
}
