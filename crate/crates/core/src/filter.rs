//! The partially linear adaptive filter and its training loop.
//!
//! The estimate is `f(r) = a^T r + sum_l c_l k_G(center_l, r)` where the
//! linear coefficients `a` span the Euclidean basis of `H_L` and the Gaussian
//! coefficients `c` are aligned with the dictionary centers. Sum-space
//! weights are absorbed into the stored coefficients.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::dictionary::{DictionaryDiagnostics, GaussianDictionary};
use crate::error::{Error, Result};
use crate::kernel::{dot, gaussian_raw, realify, KernelConfig, RealSample};
use crate::C64;

/// Snapshot format version written by [`PartiallyLinearFilter::write_snapshot`].
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub kernel: KernelConfig,
    /// Half-width of the band `|f(r) - b| <= epsilon`.
    pub epsilon: f64,
    /// Number of most recent samples projected onto concurrently.
    pub window: usize,
    /// Novelty threshold of the Gaussian dictionary.
    pub alpha: f64,
    /// Hard cap on the dictionary size.
    pub max_dictionary: usize,
}

impl FilterConfig {
    /// Defaults for training blocks of `training_symbols` complex symbols:
    /// `epsilon = 0.01`, `W = 50`, `alpha = 0.1`, capacity `3T`.
    pub fn with_kernel(kernel: KernelConfig, training_symbols: usize) -> Self {
        FilterConfig {
            kernel,
            epsilon: 0.01,
            window: 50,
            alpha: 0.1,
            max_dictionary: 3 * training_symbols,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::Config(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        if self.window == 0 {
            return Err(Error::Config("window must be positive".into()));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        if self.max_dictionary == 0 {
            return Err(Error::Config("dictionary capacity must be positive".into()));
        }
        Ok(())
    }
}

/// A real training pair `(r_n, b_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub input: RealSample,
    pub label: f64,
}

impl TrainingSample {
    pub fn new(input: RealSample, label: f64) -> Result<Self> {
        if !label.is_finite() {
            return Err(Error::InvalidSample(format!("non-finite label {label}")));
        }
        Ok(TrainingSample { input, label })
    }

    /// The two real samples `(r1, Re b)` and `(r2, Im b)` of a complex training
    /// symbol, in processing order.
    pub fn from_complex(r: &[C64], symbol: C64) -> Result<[TrainingSample; 2]> {
        let (r1, r2) = realify(r)?;
        Ok([
            TrainingSample::new(r1, symbol.re)?,
            TrainingSample::new(r2, symbol.im)?,
        ])
    }
}

/// Projection of a sample's Gaussian kernel section onto the dictionary.
#[derive(Debug, Clone, PartialEq)]
pub enum GaussianProjection {
    /// The sample is itself the center with this index.
    Center(usize),
    /// Coefficients over the first `len()` centers; later centers are zero.
    Span(Vec<f64>),
}

impl GaussianProjection {
    fn len(&self) -> usize {
        match self {
            GaussianProjection::Center(i) => i + 1,
            GaussianProjection::Span(z) => z.len(),
        }
    }
}

/// A sample taking part in an update, with its cached projection and its
/// kernel evaluations against every current center.
#[derive(Debug, Clone)]
pub struct ActiveSample {
    pub sample: TrainingSample,
    pub projection: GaussianProjection,
    kernel_row: Vec<f64>,
}

impl ActiveSample {
    pub fn new(
        filter: &PartiallyLinearFilter,
        sample: TrainingSample,
        projection: GaussianProjection,
    ) -> Result<Self> {
        filter.check_dim(&sample.input)?;
        let kernel_row = filter.dictionary.kernel_row(&sample.input);
        Ok(ActiveSample {
            sample,
            projection,
            kernel_row,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FilterDiagnostics {
    pub samples: u64,
    /// Samples with `k(r, r) = 0`, which cannot be projected onto.
    pub degenerate_samples: u64,
    pub dictionary: DictionaryDiagnostics,
}

#[derive(Debug, Clone)]
pub struct PartiallyLinearFilter {
    config: FilterConfig,
    dim: usize,
    linear_coeffs: Vec<f64>,
    gaussian_coeffs: Vec<f64>,
    dictionary: GaussianDictionary,
    buffer: VecDeque<ActiveSample>,
    degenerate_samples: u64,
    samples: u64,
}

impl PartiallyLinearFilter {
    /// Zero filter `f_0 = 0` over inputs of length `dim = 2M`.
    pub fn new(config: FilterConfig, dim: usize) -> Result<Self> {
        config.validate()?;
        let dictionary = GaussianDictionary::new(
            dim,
            config.kernel.sigma,
            config.alpha,
            config.max_dictionary,
        )?;
        Ok(PartiallyLinearFilter {
            config,
            dim,
            linear_coeffs: vec![0.0; dim],
            gaussian_coeffs: Vec::new(),
            dictionary,
            buffer: VecDeque::with_capacity(config.window),
            degenerate_samples: 0,
            samples: 0,
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn linear_coeffs(&self) -> &[f64] {
        &self.linear_coeffs
    }

    pub fn gaussian_coeffs(&self) -> &[f64] {
        &self.gaussian_coeffs
    }

    pub fn linear_coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.linear_coeffs
    }

    pub fn gaussian_coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.gaussian_coeffs
    }

    pub fn dictionary(&self) -> &GaussianDictionary {
        &self.dictionary
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn diagnostics(&self) -> FilterDiagnostics {
        FilterDiagnostics {
            samples: self.samples,
            degenerate_samples: self.degenerate_samples,
            dictionary: self.dictionary.diagnostics(),
        }
    }

    fn check_dim(&self, r: &[f64]) -> Result<()> {
        if r.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: r.len(),
            });
        }
        Ok(())
    }

    fn gaussian_enabled(&self) -> bool {
        self.config.kernel.w_gaussian > 0.0
    }

    pub fn linear_part(&self, r: &[f64]) -> Result<f64> {
        self.check_dim(r)?;
        Ok(dot(&self.linear_coeffs, r))
    }

    pub fn gaussian_part(&self, r: &[f64]) -> Result<f64> {
        self.check_dim(r)?;
        Ok(self.dictionary.expand(&self.gaussian_coeffs, r))
    }

    /// `f(r) = <f, k(r, .)>`.
    pub fn evaluate(&self, r: &[f64]) -> Result<f64> {
        Ok(self.linear_part(r)? + self.gaussian_part(r)?)
    }

    /// Weighted sum-space kernel `k(r, r) = w_L ||r||^2 + w_G`.
    fn self_kernel(&self, r: &[f64]) -> f64 {
        self.config.kernel.w_linear * dot(r, r) + self.config.kernel.w_gaussian
    }

    /// Step size onto the band of `sample`, given its residual `f(r) - b`.
    fn step(&self, residual: f64, self_kernel: f64) -> Option<f64> {
        if !(self_kernel > 0.0) {
            return None;
        }
        let eps = self.config.epsilon;
        Some(if residual < -eps {
            (-residual - eps) / self_kernel
        } else if residual > eps {
            (-residual + eps) / self_kernel
        } else {
            0.0
        })
    }

    /// Projection coefficient `beta` of the current estimate onto the band of
    /// `sample`. Zero inside the band; `beta * (f(r) - b) <= 0` always.
    pub fn beta(&mut self, sample: &TrainingSample) -> Result<f64> {
        let residual = self.evaluate(&sample.input)? - sample.label;
        match self.step(residual, self.self_kernel(&sample.input)) {
            Some(b) => Ok(b),
            None => {
                self.degenerate_samples += 1;
                Ok(0.0)
            }
        }
    }

    /// `f_{n+1} = f_n + sum_j q_j beta_j P(k(r_j, .))` with uniform weights.
    /// All `beta_j` are computed from `f_n` before any coefficient changes.
    pub fn update(&mut self, active: &[ActiveSample]) -> Result<()> {
        let s = self.dictionary.len();
        for a in active {
            self.check_dim(&a.sample.input)?;
            if a.projection.len() > s {
                return Err(Error::ProjectionOutOfRange {
                    projection: a.projection.len(),
                    dictionary: s,
                });
            }
            if a.kernel_row.len() != s {
                return Err(Error::ProjectionOutOfRange {
                    projection: a.kernel_row.len(),
                    dictionary: s,
                });
            }
        }
        let steps = self.steps(active.iter());
        self.apply(active.iter(), &steps);
        Ok(())
    }

    fn steps<'a>(&mut self, active: impl Iterator<Item = &'a ActiveSample>) -> Vec<f64> {
        let mut steps = Vec::new();
        let mut degenerate = 0;
        for a in active {
            let r = &a.sample.input;
            let value = dot(&self.linear_coeffs, r) + dot(&self.gaussian_coeffs, &a.kernel_row);
            match self.step(value - a.sample.label, self.self_kernel(r)) {
                Some(b) => steps.push(b),
                None => {
                    degenerate += 1;
                    steps.push(0.0);
                }
            }
        }
        self.degenerate_samples += degenerate;
        steps
    }

    fn apply<'a>(&mut self, active: impl Iterator<Item = &'a ActiveSample>, steps: &[f64]) {
        if steps.is_empty() {
            return;
        }
        let q = 1.0 / steps.len() as f64;
        let KernelConfig {
            w_linear,
            w_gaussian,
            ..
        } = self.config.kernel;
        for (a, &beta) in active.zip(steps) {
            if beta == 0.0 {
                continue;
            }
            let scale = q * beta;
            if w_linear > 0.0 {
                let c = scale * w_linear;
                for (coef, x) in self.linear_coeffs.iter_mut().zip(a.sample.input.iter()) {
                    *coef += c * x;
                }
            }
            if w_gaussian > 0.0 {
                let c = scale * w_gaussian;
                match &a.projection {
                    GaussianProjection::Center(i) => self.gaussian_coeffs[*i] += c,
                    GaussianProjection::Span(zeta) => {
                        for (coef, z) in self.gaussian_coeffs.iter_mut().zip(zeta) {
                            *coef += c * z;
                        }
                    }
                }
            }
        }
    }

    /// One iteration of the online algorithm: slide the window, run the
    /// dictionary admission test on the new input, then update over the
    /// window. Returns whether the input became a dictionary center.
    pub fn process_sample(&mut self, sample: TrainingSample) -> Result<bool> {
        self.check_dim(&sample.input)?;
        self.samples += 1;
        if self.buffer.len() == self.config.window {
            self.buffer.pop_front();
        }

        let mut admitted = false;
        let entry = if self.gaussian_enabled() {
            let admission = self.dictionary.try_admit(&sample.input)?;
            let was_admitted = admission.admitted();
            let mut kernel_row = admission.projection.kappa_row;
            let projection = if was_admitted {
                admitted = true;
                let idx = self.dictionary.len() - 1;
                self.gaussian_coeffs.push(0.0);
                let center = self.dictionary.center(idx);
                let sigma = self.config.kernel.sigma;
                for b in self.buffer.iter_mut() {
                    b.kernel_row
                        .push(gaussian_raw(center, &b.sample.input, sigma));
                }
                kernel_row.push(1.0);
                GaussianProjection::Center(idx)
            } else {
                GaussianProjection::Span(admission.projection.zeta)
            };
            ActiveSample {
                sample,
                projection,
                kernel_row,
            }
        } else {
            ActiveSample {
                sample,
                projection: GaussianProjection::Span(Vec::new()),
                kernel_row: Vec::new(),
            }
        };
        self.buffer.push_back(entry);

        let buffer = std::mem::take(&mut self.buffer);
        let steps = self.steps(buffer.iter());
        self.apply(buffer.iter(), &steps);
        self.buffer = buffer;
        Ok(admitted)
    }

    /// Trains on one complex symbol: `(r1, Re b)` then `(r2, Im b)`.
    pub fn process_symbol(&mut self, r: &[C64], symbol: C64) -> Result<()> {
        for s in TrainingSample::from_complex(r, symbol)? {
            self.process_sample(s)?;
        }
        Ok(())
    }

    /// Block boundary: keep the `keep` newest centers with their coefficients,
    /// drop the rest, and clear the sample window.
    pub fn end_training_block(&mut self, keep: usize) -> Result<()> {
        let dropped = self.dictionary.prune_to_recent(keep)?;
        self.gaussian_coeffs.drain(..dropped);
        self.buffer.clear();
        Ok(())
    }

    /// Complex soft output `g(r) = f(r1) + i f(r2)`.
    pub fn detect_symbol(&self, r: &[C64]) -> Result<C64> {
        let (r1, r2) = realify(r)?;
        Ok(C64::new(self.evaluate(&r1)?, self.evaluate(&r2)?))
    }

    /// Writes coefficients and dictionary as text. The sample window is not
    /// part of the snapshot.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let k = &self.config.kernel;
        writeln!(out, "plaf-filter {SNAPSHOT_VERSION}")?;
        writeln!(
            out,
            "kernel {:?} {:?} {:?}",
            k.w_linear, k.w_gaussian, k.sigma
        )?;
        writeln!(
            out,
            "params {:?} {} {:?} {}",
            self.config.epsilon, self.config.window, self.config.alpha, self.config.max_dictionary
        )?;
        write_values(&mut out, "linear", &self.linear_coeffs)?;
        write_values(&mut out, "gaussian", &self.gaussian_coeffs)?;
        self.dictionary.write_snapshot(out)
    }

    pub fn read_snapshot<R: BufRead>(mut input: R) -> Result<Self> {
        let mut line = String::new();
        let mut next_line = |input: &mut R| -> Result<String> {
            line.clear();
            match input.read_line(&mut line) {
                Ok(0) => Err(Error::Snapshot("unexpected end of filter snapshot".into())),
                Ok(_) => Ok(line.trim_end().to_string()),
                Err(e) => Err(Error::Snapshot(e.to_string())),
            }
        };
        let header = next_line(&mut input)?;
        match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["plaf-filter", v] if v == SNAPSHOT_VERSION.to_string() => {}
            _ => return Err(Error::Snapshot(format!("unsupported header {header:?}"))),
        }
        let kernel = parse_values(&next_line(&mut input)?, "kernel")?;
        let params = parse_values(&next_line(&mut input)?, "params")?;
        let linear = parse_values(&next_line(&mut input)?, "linear")?;
        let gaussian = parse_values(&next_line(&mut input)?, "gaussian")?;
        if kernel.len() != 3 || params.len() != 4 {
            return Err(Error::Snapshot("bad kernel or params line".into()));
        }
        let config = FilterConfig {
            kernel: KernelConfig {
                w_linear: kernel[0],
                w_gaussian: kernel[1],
                sigma: kernel[2],
            },
            epsilon: params[0],
            window: params[1] as usize,
            alpha: params[2],
            max_dictionary: params[3] as usize,
        };
        let dictionary = GaussianDictionary::read_snapshot(input, config.max_dictionary)?;
        let mut filter = PartiallyLinearFilter::new(config, linear.len())?;
        if dictionary.dim() != linear.len() || dictionary.len() != gaussian.len() {
            return Err(Error::Snapshot(
                "coefficient lengths disagree with dictionary".into(),
            ));
        }
        filter.linear_coeffs = linear;
        filter.gaussian_coeffs = gaussian;
        filter.dictionary = dictionary;
        Ok(filter)
    }
}

fn write_values<W: Write>(out: &mut W, tag: &str, values: &[f64]) -> std::io::Result<()> {
    write!(out, "{tag}")?;
    for v in values {
        write!(out, " {v:?}")?;
    }
    writeln!(out)
}

fn parse_values(line: &str, tag: &str) -> Result<Vec<f64>> {
    let mut tokens = line.split_whitespace();
    if tokens.next() != Some(tag) {
        return Err(Error::Snapshot(format!(
            "expected {tag:?} line, got {line:?}"
        )));
    }
    tokens
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::Snapshot(format!("bad value {t:?} on {tag} line: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn config(w_linear: f64, w_gaussian: f64, window: usize) -> FilterConfig {
        FilterConfig {
            kernel: KernelConfig {
                w_linear,
                w_gaussian,
                sigma: 1.0,
            },
            epsilon: 0.01,
            window,
            alpha: 0.1,
            max_dictionary: 100,
        }
    }

    fn sample(values: Vec<f64>, label: f64) -> TrainingSample {
        TrainingSample::new(RealSample::new(values).unwrap(), label).unwrap()
    }

    fn random_vec(rng: &mut impl Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    #[test]
    fn zero_filter_outputs_zero() {
        let f = PartiallyLinearFilter::new(config(0.2, 0.8, 5), 4).unwrap();
        assert_eq!(f.evaluate(&[1.0, -2.0, 3.0, 0.5]).unwrap(), 0.0);
        let g = f
            .detect_symbol(&[C64::new(1.0, 1.0), C64::new(-3.0, 0.2)])
            .unwrap();
        assert_eq!(g, C64::new(0.0, 0.0));
        assert!(f.evaluate(&[1.0]).is_err());
    }

    #[test]
    fn linear_only_response_is_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut f = PartiallyLinearFilter::new(config(0.2, 0.8, 5), 6).unwrap();
        f.linear_coeffs_mut()
            .copy_from_slice(&random_vec(&mut rng, 6));
        for _ in 0..10 {
            let u = random_vec(&mut rng, 6);
            let v = random_vec(&mut rng, 6);
            let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
            let lhs = f.evaluate(&w).unwrap();
            let rhs = f.evaluate(&u).unwrap() + f.evaluate(&v).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn single_center_reproduces_coefficient() {
        let mut f = PartiallyLinearFilter::new(config(0.2, 0.8, 5), 2).unwrap();
        let u = vec![0.4, -0.7];
        f.process_sample(sample(u.clone(), 1.0)).unwrap();
        f.linear_coeffs_mut().fill(0.0);
        f.gaussian_coeffs_mut()[0] = 2.5;
        assert!((f.evaluate(&u).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn beta_cases() {
        let mut f = PartiallyLinearFilter::new(config(0.2, 0.8, 5), 3).unwrap();
        let s = sample(vec![0.0; 3], 1.0);
        assert!((f.beta(&s).unwrap() - 1.2375).abs() < 1e-15);
        let s = sample(vec![0.0; 3], -1.0);
        assert!((f.beta(&s).unwrap() + 1.2375).abs() < 1e-15);
        let s = sample(vec![0.0; 3], 0.005);
        assert_eq!(f.beta(&s).unwrap(), 0.0);
    }

    #[test]
    fn beta_on_degenerate_sample_is_flagged() {
        let mut f = PartiallyLinearFilter::new(config(1.0, 0.0, 5), 3).unwrap();
        let s = sample(vec![0.0; 3], 1.0);
        assert_eq!(f.beta(&s).unwrap(), 0.0);
        assert_eq!(f.diagnostics().degenerate_samples, 1);
    }

    #[test]
    fn beta_opposes_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut f = PartiallyLinearFilter::new(config(0.2, 0.8, 10), 4).unwrap();
        for _ in 0..30 {
            f.process_sample(sample(random_vec(&mut rng, 4), rng.random_range(-1.0..1.0)))
                .unwrap();
        }
        for _ in 0..100 {
            let s = sample(random_vec(&mut rng, 4), rng.random_range(-2.0..2.0));
            let e = f.evaluate(&s.input).unwrap() - s.label;
            let b = f.beta(&s).unwrap();
            assert!(b * e <= 0.0);
        }
    }

    #[test]
    fn update_inside_band_is_fixed_point() {
        let mut f = PartiallyLinearFilter::new(config(0.2, 0.8, 5), 2).unwrap();
        f.process_sample(sample(vec![1.0, 0.0], 1.0)).unwrap();
        let before = (f.linear_coeffs().to_vec(), f.gaussian_coeffs().to_vec());
        let value = f.evaluate(&[1.0, 0.0]).unwrap();
        let s = sample(vec![1.0, 0.0], value + 0.005);
        let a = ActiveSample::new(&f, s, GaussianProjection::Center(0)).unwrap();
        f.update(&[a]).unwrap();
        assert_eq!(
            before,
            (f.linear_coeffs().to_vec(), f.gaussian_coeffs().to_vec())
        );
    }

    #[test]
    fn single_sample_update_lands_on_band_edge() {
        let mut f = PartiallyLinearFilter::new(config(0.2, 0.8, 1), 3).unwrap();
        let s = sample(vec![0.5, -1.0, 2.0], 1.0);
        // f_0 = 0, so the residual before the update is -1 < -epsilon.
        f.process_sample(s.clone()).unwrap();
        let after = f.evaluate(&s.input).unwrap() - s.label;
        assert!((after + 0.01).abs() < 1e-12, "{after}");

        let s = sample(vec![-0.5, 0.3, 0.1], -3.0);
        f.process_sample(s.clone()).unwrap();
        let after = f.evaluate(&s.input).unwrap() - s.label;
        assert!(
            (after - 0.01).abs() < 1e-12 || (after + 0.01).abs() < 1e-12,
            "{after}"
        );
    }

    #[test]
    fn concurrent_updates_do_not_increase_max_residual() {
        let mut f = PartiallyLinearFilter::new(config(0.2, 0.8, 2), 2).unwrap();
        let a = sample(vec![1.0, 0.0], 1.0);
        let b = sample(vec![0.0, 1.5], -1.0);
        f.process_sample(a.clone()).unwrap();
        f.process_sample(b.clone()).unwrap();
        let active = [
            ActiveSample::new(&f, a.clone(), GaussianProjection::Center(0)).unwrap(),
            ActiveSample::new(&f, b.clone(), GaussianProjection::Center(1)).unwrap(),
        ];
        let max_res = |f: &PartiallyLinearFilter| {
            let ea = (f.evaluate(&a.input).unwrap() - a.label).abs();
            let eb = (f.evaluate(&b.input).unwrap() - b.label).abs();
            ea.max(eb)
        };
        let mut prev = max_res(&f);
        for _ in 0..200 {
            let active: Vec<ActiveSample> = active
                .iter()
                .map(|x| ActiveSample::new(&f, x.sample.clone(), x.projection.clone()).unwrap())
                .collect();
            f.update(&active).unwrap();
            let cur = max_res(&f);
            assert!(cur <= prev + 1e-12, "{cur} > {prev}");
            prev = cur;
        }
        assert!(prev <= 0.01 + 1e-6, "{prev}");
    }

    #[test]
    fn update_rejects_inconsistent_projection() {
        let mut f = PartiallyLinearFilter::new(config(0.2, 0.8, 5), 2).unwrap();
        f.process_sample(sample(vec![1.0, 0.0], 1.0)).unwrap();
        let a = ActiveSample::new(
            &f,
            sample(vec![0.0, 1.0], 1.0),
            GaussianProjection::Span(vec![0.1, 0.2]),
        )
        .unwrap();
        assert!(matches!(
            f.update(&[a]),
            Err(Error::ProjectionOutOfRange { .. })
        ));
    }

    #[test]
    fn cached_path_matches_direct_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut f = PartiallyLinearFilter::new(config(0.2, 0.8, 4), 4).unwrap();
        for _ in 0..40 {
            let s = sample(random_vec(&mut rng, 4), rng.random_range(-1.0..1.0));
            // The cached kernel rows must agree with fresh evaluations.
            for entry in &f.buffer {
                let fresh = f.dictionary.kernel_row(&entry.sample.input);
                assert_eq!(fresh.len(), entry.kernel_row.len());
                for (x, y) in fresh.iter().zip(&entry.kernel_row) {
                    assert!((x - y).abs() < 1e-14);
                }
            }
            f.process_sample(s).unwrap();
        }
    }

    #[test]
    fn window_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut f = PartiallyLinearFilter::new(config(0.2, 0.8, 7), 2).unwrap();
        assert!(f
            .process_sample(sample(random_vec(&mut rng, 2), 1.0))
            .unwrap());
        assert_eq!(f.dictionary().len(), 1);
        assert_eq!(f.buffer_len(), 1);
        for _ in 0..16 {
            f.process_sample(sample(random_vec(&mut rng, 2), 1.0))
                .unwrap();
        }
        assert_eq!(f.buffer_len(), 7);
        assert_eq!(f.diagnostics().samples, 17);
    }

    #[test]
    fn complex_symbol_gives_two_samples() {
        let mut f = PartiallyLinearFilter::new(config(0.2, 0.8, 50), 6).unwrap();
        let r = [C64::new(1.0, 2.0), C64::new(-0.5, 0.1), C64::new(0.0, -1.0)];
        f.process_symbol(&r, C64::new(1.0, -1.0)).unwrap();
        assert_eq!(f.diagnostics().samples, 2);
        assert_eq!(f.buffer_len(), 2);
    }

    #[test]
    fn end_of_block_keeps_newest_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut cfg = config(0.2, 0.8, 5);
        cfg.kernel.sigma = 0.05;
        let mut f = PartiallyLinearFilter::new(cfg, 3).unwrap();
        for _ in 0..30 {
            f.process_sample(sample(random_vec(&mut rng, 3), rng.random_range(-1.0..1.0)))
                .unwrap();
        }
        let n = f.dictionary().len();
        assert!(n > 10);
        let tail = f.gaussian_coeffs()[n - 10..].to_vec();
        f.end_training_block(100).unwrap();
        assert_eq!(f.dictionary().len(), n);
        f.end_training_block(10).unwrap();
        assert_eq!(f.gaussian_coeffs(), tail.as_slice());
        assert_eq!(f.dictionary().len(), 10);
        assert_eq!(f.buffer_len(), 0);

        let r = random_vec(&mut rng, 3);
        f.gaussian_coeffs_mut().fill(0.0);
        assert_eq!(f.evaluate(&r).unwrap(), f.linear_part(&r).unwrap());
    }

    #[test]
    fn nonlinear_configuration_has_no_linear_part() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut f = PartiallyLinearFilter::new(config(0.0, 1.0, 10), 4).unwrap();
        for _ in 0..50 {
            f.process_sample(sample(random_vec(&mut rng, 4), 1.0))
                .unwrap();
        }
        assert!(f.linear_coeffs().iter().all(|&c| c == 0.0));
        assert!(f.gaussian_coeffs().iter().any(|&c| c != 0.0));
    }

    #[test]
    fn linear_configuration_skips_dictionary() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut f = PartiallyLinearFilter::new(config(1.0, 0.0, 10), 4).unwrap();
        for _ in 0..50 {
            f.process_sample(sample(random_vec(&mut rng, 4), 1.0))
                .unwrap();
        }
        assert!(f.dictionary().is_empty());
        assert!(f.gaussian_coeffs().is_empty());
        let u = random_vec(&mut rng, 4);
        let v: Vec<f64> = u.iter().map(|x| 3.0 * x).collect();
        assert!((f.evaluate(&v).unwrap() - 3.0 * f.evaluate(&u).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut f = PartiallyLinearFilter::new(config(0.2, 0.8, 5), 4).unwrap();
        for _ in 0..20 {
            f.process_sample(sample(random_vec(&mut rng, 4), rng.random_range(-1.0..1.0)))
                .unwrap();
        }
        let mut buf = Vec::new();
        f.write_snapshot(&mut buf).unwrap();
        assert!(buf.starts_with(b"plaf-filter 1\n"));
        let back = PartiallyLinearFilter::read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back.linear_coeffs(), f.linear_coeffs());
        assert_eq!(back.gaussian_coeffs(), f.gaussian_coeffs());
        assert_eq!(back.config(), f.config());
        let r = random_vec(&mut rng, 4);
        assert_eq!(back.evaluate(&r).unwrap(), f.evaluate(&r).unwrap());

        assert!(PartiallyLinearFilter::read_snapshot("plaf-filter 2\n".as_bytes()).is_err());
    }
}
