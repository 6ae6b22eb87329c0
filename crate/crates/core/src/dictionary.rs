//! Sparsified Gaussian dictionary with approximate-linear-dependence
//! admission and a recursively maintained Gram inverse.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernel::{dot, gaussian_raw};

/// Schur complements below this value are never admitted.
pub const SCHUR_FLOOR: f64 = 1e-12;

/// Symmetric matrix in packed lower-triangular row-major storage.
///
/// Row `i` holds `a[i][0..=i]` starting at offset `i (i + 1) / 2`, so bordering
/// the matrix with a new last row and column is an append.
#[derive(Debug, Clone, Default)]
struct PackedSymmetric {
    data: Vec<f64>,
    n: usize,
}

impl PackedSymmetric {
    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        let off = i * (i + 1) / 2;
        &self.data[off..off + i + 1]
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        self.row(i)[j]
    }

    fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let off = i * (i + 1) / 2;
            let row = &self.data[off..off + i];
            let xi = x[i];
            let mut acc = [0.0; 8];
            let (head, tail) = y[..i].split_at_mut(i - i % 8);
            let (row_head, row_tail) = row.split_at(head.len());
            let (x_head, x_tail) = x[..i].split_at(head.len());
            for ((yc, ac), xc) in head
                .chunks_exact_mut(8)
                .zip(row_head.chunks_exact(8))
                .zip(x_head.chunks_exact(8))
            {
                for l in 0..8 {
                    acc[l] += ac[l] * xc[l];
                    yc[l] += ac[l] * xi;
                }
            }
            let mut sum = self.data[off + i] * xi + acc.iter().sum::<f64>();
            for ((yj, a), xj) in tail.iter_mut().zip(row_tail).zip(x_tail) {
                sum += a * xj;
                *yj += a * xi;
            }
            y[i] += sum;
        }
        y
    }

    /// Replaces `A` by `[[A + z z^T / d, -z / d], [-z^T / d, 1 / d]]`.
    fn border(&mut self, zeta: &[f64], schur: f64) {
        debug_assert_eq!(zeta.len(), self.n);
        let inv = 1.0 / schur;
        for i in 0..self.n {
            let off = i * (i + 1) / 2;
            let zi = zeta[i] * inv;
            for (a, zj) in self.data[off..=off + i].iter_mut().zip(&zeta[..=i]) {
                *a += zi * zj;
            }
        }
        self.data.extend(zeta.iter().map(|z| -z * inv));
        self.data.push(inv);
        self.n += 1;
    }

    fn from_dense(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut data = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in 0..=i {
                data.push(0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
        PackedSymmetric { data, n }
    }

    fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }
}

/// Projection of `k_G(r, .)` onto the span of the dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    /// Expansion coefficients over the centers, `K^{-1} xi`.
    pub zeta: Vec<f64>,
    /// Squared RKHS distance `k_G(r, r) - xi^T zeta` to the span.
    pub distance: f64,
    /// Kernel evaluations `xi_l = k_G(r, center_l)`.
    pub kappa_row: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdmissionOutcome {
    Admitted,
    /// Distance to the span did not exceed the novelty threshold.
    NotNovel,
    /// The sample was novel but the dictionary is at `max_size`.
    CapacityRefused,
    /// The Schur complement was below [`SCHUR_FLOOR`].
    IllConditioned,
}

#[derive(Debug, Clone)]
pub struct Admission {
    pub outcome: AdmissionOutcome,
    /// Projection onto the dictionary as it was before this call.
    pub projection: ProjectionResult,
}

impl Admission {
    pub fn admitted(&self) -> bool {
        self.outcome == AdmissionOutcome::Admitted
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DictionaryDiagnostics {
    pub admitted: u64,
    pub not_novel: u64,
    pub capacity_refusals: u64,
    pub ill_conditioned: u64,
}

/// Dictionary of Gaussian kernel centers, newest last.
#[derive(Debug, Clone)]
pub struct GaussianDictionary {
    dim: usize,
    /// Centers stored contiguously, `dim` values each.
    centers: Vec<f64>,
    gram_inverse: PackedSymmetric,
    sigma: f64,
    alpha: f64,
    max_size: usize,
    diagnostics: DictionaryDiagnostics,
}

impl GaussianDictionary {
    pub fn new(dim: usize, sigma: f64, alpha: f64, max_size: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Config(format!(
                "gaussian width must be positive, got {sigma}"
            )));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::Config(format!(
                "novelty threshold must be non-negative, got {alpha}"
            )));
        }
        if max_size == 0 {
            return Err(Error::Config("dictionary capacity must be positive".into()));
        }
        Ok(GaussianDictionary {
            dim,
            centers: Vec::new(),
            gram_inverse: PackedSymmetric::default(),
            sigma,
            alpha,
            max_size,
            diagnostics: DictionaryDiagnostics::default(),
        })
    }

    /// Builds a dictionary from explicit centers, inverting the Gram matrix
    /// directly. No admission test is applied.
    pub fn from_centers(
        dim: usize,
        sigma: f64,
        alpha: f64,
        max_size: usize,
        centers: &[Vec<f64>],
    ) -> Result<Self> {
        let mut dict = Self::new(dim, sigma, alpha, max_size)?;
        if centers.len() > max_size {
            return Err(Error::Config(format!(
                "{} centers exceed capacity {max_size}",
                centers.len()
            )));
        }
        for c in centers {
            dict.check_dim(c)?;
            dict.centers.extend_from_slice(c);
        }
        dict.rebuild_inverse()?;
        Ok(dict)
    }

    pub fn len(&self) -> usize {
        self.gram_inverse.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn diagnostics(&self) -> DictionaryDiagnostics {
        self.diagnostics
    }

    pub fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.dim..(i + 1) * self.dim]
    }

    pub fn centers(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.centers.chunks_exact(self.dim)
    }

    /// Dense copy of the maintained `K^{-1}`.
    pub fn gram_inverse(&self) -> DMatrix<f64> {
        self.gram_inverse.to_dense()
    }

    /// Gram matrix `K_ij = k_G(center_i, center_j)` evaluated from scratch.
    pub fn gram_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| {
            gaussian_raw(self.center(i), self.center(j), self.sigma)
        })
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

    /// `k_G(r, center_l)` for every center.
    pub fn kernel_row(&self, r: &[f64]) -> Vec<f64> {
        self.centers()
            .map(|c| gaussian_raw(c, r, self.sigma))
            .collect()
    }

    /// Gaussian part of a function with coefficients `coeffs` over the centers,
    /// evaluated at `r`.
    pub(crate) fn expand(&self, coeffs: &[f64], r: &[f64]) -> f64 {
        self.centers()
            .zip(coeffs)
            .map(|(c, a)| a * gaussian_raw(c, r, self.sigma))
            .sum()
    }

    fn project_unchecked(&self, r: &[f64]) -> ProjectionResult {
        let kappa_row = self.kernel_row(r);
        let zeta = self.gram_inverse.mul_vec(&kappa_row);
        // k_G(r, r) = 1
        let distance = 1.0 - dot(&kappa_row, &zeta);
        ProjectionResult {
            zeta,
            distance,
            kappa_row,
        }
    }

    /// Orthogonal projection of `k_G(r, .)` onto the span of the centers.
    pub fn project(&self, r: &[f64]) -> Result<ProjectionResult> {
        self.check_dim(r)?;
        if self.is_empty() {
            return Err(Error::EmptyDictionary);
        }
        Ok(self.project_unchecked(r))
    }

    /// Runs the novelty test on `r` and appends it when its distance to the
    /// span exceeds `alpha`. An empty dictionary admits unconditionally.
    pub fn try_admit(&mut self, r: &[f64]) -> Result<Admission> {
        self.check_dim(r)?;
        let projection = self.project_unchecked(r);
        let outcome = if self.is_empty() {
            AdmissionOutcome::Admitted
        } else if projection.distance <= self.alpha {
            AdmissionOutcome::NotNovel
        } else if projection.distance < SCHUR_FLOOR {
            AdmissionOutcome::IllConditioned
        } else if self.len() >= self.max_size {
            AdmissionOutcome::CapacityRefused
        } else {
            AdmissionOutcome::Admitted
        };
        match outcome {
            AdmissionOutcome::Admitted => {
                self.centers.extend_from_slice(r);
                self.gram_inverse
                    .border(&projection.zeta, projection.distance);
                self.diagnostics.admitted += 1;
            }
            AdmissionOutcome::NotNovel => self.diagnostics.not_novel += 1,
            AdmissionOutcome::CapacityRefused => self.diagnostics.capacity_refusals += 1,
            AdmissionOutcome::IllConditioned => self.diagnostics.ill_conditioned += 1,
        }
        Ok(Admission {
            outcome,
            projection,
        })
    }

    /// Keeps the `keep` newest centers and rebuilds `K^{-1}` directly.
    /// Returns the number of centers dropped from the front.
    pub fn prune_to_recent(&mut self, keep: usize) -> Result<usize> {
        if keep == 0 {
            return Err(Error::Config(
                "must keep at least one dictionary element".into(),
            ));
        }
        let n = self.len();
        if n <= keep {
            return Ok(0);
        }
        let dropped = n - keep;
        self.centers.drain(..dropped * self.dim);
        self.rebuild_inverse()?;
        Ok(dropped)
    }

    fn rebuild_inverse(&mut self) -> Result<()> {
        let n = self.centers.len() / self.dim;
        if n == 0 {
            self.gram_inverse = PackedSymmetric::default();
            return Ok(());
        }
        let gram = DMatrix::from_fn(n, n, |i, j| {
            gaussian_raw(
                &self.centers[i * self.dim..(i + 1) * self.dim],
                &self.centers[j * self.dim..(j + 1) * self.dim],
                self.sigma,
            )
        });
        let inverse = match gram.clone().cholesky() {
            Some(chol) => chol.inverse(),
            None => gram.try_inverse().ok_or(Error::SingularGram)?,
        };
        self.gram_inverse = PackedSymmetric::from_dense(&inverse);
        Ok(())
    }

    /// Writes the text snapshot: a header line `S dim sigma alpha`, then one
    /// line of whitespace-separated values per center, oldest first.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "{} {} {:?} {:?}",
            self.len(),
            self.dim,
            self.sigma,
            self.alpha
        )?;
        let mut line = String::new();
        for c in self.centers() {
            line.clear();
            for (i, v) in c.iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                let _ = write!(line, "{v:?}");
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Reads a snapshot written by [`write_snapshot`](Self::write_snapshot).
    /// The Gram inverse is rebuilt from the centers.
    pub fn read_snapshot<R: BufRead>(input: R, max_size: usize) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Snapshot("missing header".into()))?
            .map_err(|e| Error::Snapshot(e.to_string()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Snapshot(format!("bad header {header:?}")));
        }
        let parse_err = |what: &str| Error::Snapshot(format!("bad {what} in header {header:?}"));
        let size: usize = fields[0].parse().map_err(|_| parse_err("size"))?;
        let dim: usize = fields[1].parse().map_err(|_| parse_err("dimension"))?;
        let sigma: f64 = fields[2].parse().map_err(|_| parse_err("sigma"))?;
        let alpha: f64 = fields[3].parse().map_err(|_| parse_err("alpha"))?;
        let mut centers = Vec::with_capacity(size);
        for _ in 0..size {
            let line = lines
                .next()
                .ok_or_else(|| Error::Snapshot("truncated center list".into()))?
                .map_err(|e| Error::Snapshot(e.to_string()))?;
            let row = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Snapshot(format!("bad center value: {e}")))?;
            if row.len() != dim {
                return Err(Error::Snapshot(format!(
                    "center has {} values, expected {dim}",
                    row.len()
                )));
            }
            centers.push(row);
        }
        Self::from_centers(dim, sigma, alpha, max_size.max(size), &centers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut impl Rng, dim: usize, scale: f64) -> Vec<f64> {
        (0..dim).map(|_| rng.random_range(-scale..scale)).collect()
    }

    #[test]
    fn packed_matvec_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 7;
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let sym = &a + a.transpose();
        let packed = PackedSymmetric::from_dense(&sym);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = packed.mul_vec(&x);
        let expected = &sym * nalgebra::DVector::from_vec(x);
        for i in 0..n {
            assert!((y[i] - expected[i]).abs() < 1e-12);
        }
        assert_eq!(packed.to_dense(), sym);
    }

    #[test]
    fn project_requires_non_empty_dictionary() {
        let dict = GaussianDictionary::new(2, 1.0, 0.1, 10).unwrap();
        assert!(matches!(
            dict.project(&[0.0, 0.0]),
            Err(Error::EmptyDictionary)
        ));
    }

    #[test]
    fn project_single_center() {
        let mut dict = GaussianDictionary::new(2, 1.0, 0.1, 10).unwrap();
        let u = [0.5, -0.2];
        dict.try_admit(&u).unwrap();

        let p = dict.project(&u).unwrap();
        assert!((p.zeta[0] - 1.0).abs() < 1e-15);
        assert!(p.distance.abs() < 1e-15);

        let r = [1.1, 0.4];
        let c = gaussian_raw(&u, &r, 1.0);
        let p = dict.project(&r).unwrap();
        assert!((p.zeta[0] - c).abs() < 1e-15);
        assert!((p.distance - (1.0 - c * c)).abs() < 1e-15);
        assert!((p.kappa_row[0] - c).abs() < 1e-15);
    }

    #[test]
    fn project_matches_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let centers: Vec<Vec<f64>> = (0..3).map(|_| random_point(&mut rng, 6, 2.0)).collect();
        let dict = GaussianDictionary::from_centers(6, 1.5, 0.1, 10, &centers).unwrap();
        for _ in 0..20 {
            let r = random_point(&mut rng, 6, 2.0);
            let p = dict.project(&r).unwrap();
            let direct = oracle::direct_projection(&centers, &r, 1.5);
            for (a, b) in p.zeta.iter().zip(&direct) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
            let residual = oracle::rkhs_residual(&centers, &r, &p.zeta, 1.5);
            assert!((residual - p.distance).abs() < 1e-8);
        }
    }

    #[test]
    fn first_admission_is_unconditional() {
        let mut dict = GaussianDictionary::new(3, 1.0, 0.9, 10).unwrap();
        let a = dict.try_admit(&[1.0, 2.0, 3.0]).unwrap();
        assert!(a.admitted());
        assert_eq!(dict.len(), 1);
        assert_eq!(dict.gram_inverse()[(0, 0)], 1.0);
        assert!(a.projection.zeta.is_empty());
        assert_eq!(a.projection.distance, 1.0);
    }

    #[test]
    fn duplicates_are_rejected() {
        let mut dict = GaussianDictionary::new(2, 1.0, 0.1, 10).unwrap();
        dict.try_admit(&[0.3, 0.3]).unwrap();
        let a = dict.try_admit(&[0.3, 0.3]).unwrap();
        assert_eq!(a.outcome, AdmissionOutcome::NotNovel);
        assert_eq!(dict.len(), 1);
        assert_eq!(dict.diagnostics().not_novel, 1);
    }

    #[test]
    fn recursion_matches_direct_inverse() {
        let mut dict = GaussianDictionary::new(6, 1.0, 0.1, 10).unwrap();
        let far_a = [3.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let far_b = [-3.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!(dict.try_admit(&far_a).unwrap().admitted());
        assert!(dict.try_admit(&far_b).unwrap().admitted());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let third = random_point(&mut rng, 6, 1.0);
        assert!(dict.try_admit(&third).unwrap().admitted());

        let direct = oracle::direct_inverse(&dict.gram_matrix()).unwrap();
        let diff = (dict.gram_inverse() - direct).abs().max();
        assert!(diff < 1e-10, "{diff}");
    }

    #[test]
    fn capacity_refusal_is_flagged() {
        let mut dict = GaussianDictionary::new(1, 0.1, 0.1, 2).unwrap();
        assert!(dict.try_admit(&[0.0]).unwrap().admitted());
        assert!(dict.try_admit(&[5.0]).unwrap().admitted());
        let a = dict.try_admit(&[10.0]).unwrap();
        assert_eq!(a.outcome, AdmissionOutcome::CapacityRefused);
        assert_eq!(dict.len(), 2);
        assert_eq!(dict.diagnostics().capacity_refusals, 1);
    }

    #[test]
    fn zero_alpha_still_refuses_degenerate_schur() {
        let mut dict = GaussianDictionary::new(1, 1.0, 0.0, 10).unwrap();
        dict.try_admit(&[0.0]).unwrap();
        let a = dict.try_admit(&[0.0]).unwrap();
        assert_ne!(a.outcome, AdmissionOutcome::Admitted);
        let a = dict.try_admit(&[1e-7]).unwrap();
        assert_eq!(a.outcome, AdmissionOutcome::IllConditioned);
        assert_eq!(dict.len(), 1);
    }

    #[test]
    fn prune_keeps_newest_in_order() {
        let mut dict = GaussianDictionary::new(1, 0.1, 0.1, 10).unwrap();
        for i in 0..5 {
            dict.try_admit(&[i as f64]).unwrap();
        }
        assert_eq!(dict.prune_to_recent(5).unwrap(), 0);
        assert_eq!(dict.len(), 5);
        assert_eq!(dict.prune_to_recent(2).unwrap(), 3);
        let kept: Vec<f64> = dict.centers().map(|c| c[0]).collect();
        assert_eq!(kept, vec![3.0, 4.0]);
        let p = dict.project(&[4.0]).unwrap();
        assert!(p.distance.abs() < 1e-12);
        assert!(dict.prune_to_recent(0).is_err());
    }

    #[test]
    fn prune_to_table_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut dict = GaussianDictionary::new(6, 0.05, 0.1, 1500).unwrap();
        while dict.len() < 1500 {
            let r = random_point(&mut rng, 6, 1.0);
            dict.try_admit(&r).unwrap();
        }
        let newest: Vec<Vec<f64>> = dict.centers().skip(1000).map(|c| c.to_vec()).collect();
        assert_eq!(dict.prune_to_recent(500).unwrap(), 1000);
        assert_eq!(dict.len(), 500);
        let kept: Vec<Vec<f64>> = dict.centers().map(|c| c.to_vec()).collect();
        assert_eq!(kept, newest);
        assert!(oracle::inverse_residual(&dict.gram_matrix(), &dict.gram_inverse()) < 1e-8);
    }

    #[test]
    fn not_novel_samples_leave_dictionary_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut dict = GaussianDictionary::new(2, 2.0, 0.3, 100).unwrap();
        for _ in 0..200 {
            let r = random_point(&mut rng, 2, 3.0);
            let before = dict.clone();
            let a = dict.try_admit(&r).unwrap();
            if !before.is_empty() && before.project(&r).unwrap().distance <= 0.3 {
                assert!(!a.admitted());
                assert_eq!(before.centers, dict.centers);
                assert_eq!(before.gram_inverse.data, dict.gram_inverse.data);
            }
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut dict = GaussianDictionary::new(4, 0.7, 0.1, 50).unwrap();
        for _ in 0..10 {
            dict.try_admit(&random_point(&mut rng, 4, 2.0)).unwrap();
        }
        let mut buf = Vec::new();
        dict.write_snapshot(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&format!("{} 4 0.7 0.1\n", dict.len())));
        let back = GaussianDictionary::read_snapshot(buf.as_slice(), 50).unwrap();
        assert_eq!(back.centers, dict.centers);
        assert_eq!(back.sigma(), 0.7);
        let diff = (back.gram_inverse() - dict.gram_inverse()).abs().max();
        assert!(diff < 1e-8);

        assert!(GaussianDictionary::read_snapshot("2 4 0.7\n".as_bytes(), 50).is_err());
        assert!(GaussianDictionary::read_snapshot("1 2 0.7 0.1\n1.0\n".as_bytes(), 50).is_err());
    }
}
