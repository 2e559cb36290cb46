//! Dense symmetric linear algebra and Gaussian sampling.
//!
//! Everything here works on small dense problems (dimensions up to a few
//! hundred). Matrices are stored row-major in a flat `Vec<f64>`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Pivots below this fraction of the largest diagonal entry are treated as zero.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 100;

/// A real symmetric `p × p` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds a matrix from `f(row, col)`, evaluated on the upper triangle only.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        let mut data = vec![0.0; dim * dim];
        for k in 0..dim {
            for l in k..dim {
                let v = f(k, l);
                data[k * dim + l] = v;
                data[l * dim + k] = v;
            }
        }
        SymMatrix { dim, data }
    }

    /// Builds a matrix from rows, rejecting non-square or asymmetric input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::domain("matrix must have at least one row"));
        }
        for row in rows {
            check_dim(dim, row.len())?;
        }
        let scale = rows
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        for k in 0..dim {
            for l in (k + 1)..dim {
                if (rows[k][l] - rows[l][k]).abs() > 1e-12 * scale {
                    return Err(Error::domain(format!(
                        "matrix is not symmetric at ({k}, {l})"
                    )));
                }
            }
        }
        Ok(Self::from_fn(dim, |k, l| 0.5 * (rows[k][l] + rows[l][k])))
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |k, l| if k == l { 1.0 } else { 0.0 })
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_fn(dim, |_, _| 0.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|k| self.row(k).to_vec()).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        Ok((0..self.dim).map(|k| dot(self.row(k), x)).collect())
    }

    /// Largest absolute entry difference to `other`.
    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Lower-triangular `L` with `L·Lᵀ = A` and a strictly positive diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct CholeskyFactor {
    dim: usize,
    lower: Vec<f64>,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.lower[row * self.dim + col]
    }

    /// `L·Lᵀ`.
    pub fn reconstruct(&self) -> SymMatrix {
        let p = self.dim;
        SymMatrix::from_fn(p, |k, l| {
            let m = k.min(l);
            (0..=m).map(|j| self.get(k, j) * self.get(l, j)).sum()
        })
    }

    /// `L·z`.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        let p = self.dim;
        (0..p)
            .map(|k| dot(&self.lower[k * p..k * p + k + 1], &z[..=k]))
            .collect()
    }

    /// Solves `L·y = b` in place.
    fn forward_substitute(&self, b: &mut [f64]) {
        let p = self.dim;
        for k in 0..p {
            let row = &self.lower[k * p..k * p + k];
            b[k] = (b[k] - dot(row, &b[..k])) / self.lower[k * p + k];
        }
    }

    /// Solves `Lᵀ·y = b` in place.
    fn backward_substitute(&self, b: &mut [f64]) {
        let p = self.dim;
        for k in (0..p).rev() {
            let mut acc = b[k];
            for j in (k + 1)..p {
                acc -= self.lower[j * p + k] * b[j];
            }
            b[k] = acc / self.lower[k * p + k];
        }
    }
}

/// Cholesky factorization of a symmetric positive definite matrix.
///
/// A pivot that does not exceed [`PIVOT_TOLERANCE`] times the largest diagonal
/// entry is reported as [`Error::NotPositiveDefinite`].
pub fn cholesky(a: &SymMatrix) -> Result<CholeskyFactor> {
    let p = a.dim;
    let max_diag = (0..p).fold(0.0_f64, |m, k| m.max(a.get(k, k)));
    let threshold = PIVOT_TOLERANCE * max_diag;
    let mut lower = vec![0.0; p * p];
    for k in 0..p {
        for l in 0..=k {
            let partial = dot(&lower[k * p..k * p + l], &lower[l * p..l * p + l]);
            let v = a.get(k, l) - partial;
            if k == l {
                if !(v > threshold) || max_diag <= 0.0 {
                    return Err(Error::NotPositiveDefinite { row: k, pivot: v });
                }
                lower[k * p + k] = v.sqrt();
            } else {
                lower[k * p + l] = v / lower[l * p + l];
            }
        }
    }
    Ok(CholeskyFactor { dim: p, lower })
}

/// Solves `A·y = b` given the Cholesky factor of `A`.
pub fn solve_spd(chol: &CholeskyFactor, b: &[f64]) -> Result<Vec<f64>> {
    check_dim(chol.dim, b.len())?;
    let mut y = b.to_vec();
    chol.forward_substitute(&mut y);
    chol.backward_substitute(&mut y);
    Ok(y)
}

/// `(x − center)ᵀ A⁻¹ (x − center)` via one forward substitution.
pub fn mahalanobis_sq(x: &[f64], center: &[f64], chol: &CholeskyFactor) -> Result<f64> {
    check_dim(chol.dim, x.len())?;
    check_dim(chol.dim, center.len())?;
    let mut r: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
    chol.forward_substitute(&mut r);
    Ok(r.iter().map(|v| v * v).sum())
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    /// Sorted in nonincreasing order.
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[i]` is the unit eigenvector for `eigenvalues[i]`.
    pub eigenvectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi eigen-solver.
///
/// Each eigenvector is normalized and oriented so that its first component of
/// largest magnitude is positive.
pub fn sym_eigen(a: &SymMatrix) -> Result<SpectralDecomposition> {
    let p = a.dim;
    let mut m = a.data.clone();
    let mut v = SymMatrix::identity(p).data;
    let scale = a.frobenius_norm();

    let off_diag = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for k in 0..p {
            for l in (k + 1)..p {
                s += m[k * p + l] * m[k * p + l];
            }
        }
        s.sqrt()
    };

    let mut converged = p == 1 || scale == 0.0;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        if off_diag(&m) <= 1e-15 * scale {
            converged = true;
            break;
        }
        for k in 0..p {
            for l in (k + 1)..p {
                let akl = m[k * p + l];
                if akl == 0.0 {
                    continue;
                }
                let theta = (m[l * p + l] - m[k * p + k]) / (2.0 * akl);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A ← Jᵀ A J, rows/cols k and l
                for j in 0..p {
                    let mkj = m[k * p + j];
                    let mlj = m[l * p + j];
                    m[k * p + j] = c * mkj - s * mlj;
                    m[l * p + j] = s * mkj + c * mlj;
                }
                for j in 0..p {
                    let mjk = m[j * p + k];
                    let mjl = m[j * p + l];
                    m[j * p + k] = c * mjk - s * mjl;
                    m[j * p + l] = s * mjk + c * mjl;
                }
                for j in 0..p {
                    let vjk = v[j * p + k];
                    let vjl = v[j * p + l];
                    v[j * p + k] = c * vjk - s * vjl;
                    v[j * p + l] = s * vjk + c * vjl;
                }
            }
        }
    }
    if !converged && off_diag(&m) > 1e-15 * scale {
        return Err(Error::ConvergenceFailure {
            sweeps: JACOBI_MAX_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| m[j * p + j].total_cmp(&m[i * p + i]));

    let eigenvalues = order.iter().map(|&i| m[i * p + i]).collect();
    let eigenvectors = order
        .iter()
        .map(|&i| {
            let mut e: Vec<f64> = (0..p).map(|j| v[j * p + i]).collect();
            let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            e.iter_mut().for_each(|x| *x /= norm);
            orient(&mut e);
            e
        })
        .collect();
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Flips `e` so its first component of largest magnitude is positive.
fn orient(e: &mut [f64]) {
    let max = e.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if let Some(lead) = e.iter().find(|x| x.abs() >= max - 1e-12) {
        if *lead < 0.0 {
            e.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Mean vector and sample covariance with divisor `n − 1`.
pub fn ensemble_moments(members: &[Vec<f64>]) -> Result<(Vec<f64>, SymMatrix)> {
    let n = members.len();
    if n < 2 {
        return Err(Error::TooFewMembers { have: n, need: 2 });
    }
    let p = members[0].len();
    if p == 0 {
        return Err(Error::domain("member vectors must be nonempty"));
    }
    for m in members {
        check_dim(p, m.len())?;
    }
    Ok(centered_moments(members.iter(), n, p, (n - 1) as f64))
}

/// Mean and covariance of the members together with the observation, using
/// divisor `n` over the `n + 1` centered vectors.
pub fn augmented_moments(members: &[Vec<f64>], obs: &[f64]) -> Result<(Vec<f64>, SymMatrix)> {
    let n = members.len();
    if n < 1 {
        return Err(Error::TooFewMembers { have: 0, need: 1 });
    }
    let p = obs.len();
    if p == 0 {
        return Err(Error::domain("observation vector must be nonempty"));
    }
    for m in members {
        check_dim(p, m.len())?;
    }
    let all = std::iter::once(&obs.to_vec())
        .chain(members.iter())
        .cloned()
        .collect::<Vec<_>>();
    Ok(centered_moments(all.iter(), n + 1, p, n as f64))
}

fn centered_moments<'a>(
    rows: impl Iterator<Item = &'a Vec<f64>> + Clone,
    count: usize,
    p: usize,
    divisor: f64,
) -> (Vec<f64>, SymMatrix) {
    let mut mean = vec![0.0; p];
    for r in rows.clone() {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);

    let mut acc = vec![0.0; p * p];
    let mut d = vec![0.0; p];
    for r in rows {
        for j in 0..p {
            d[j] = r[j] - mean[j];
        }
        for k in 0..p {
            let dk = d[k];
            for l in k..p {
                acc[k * p + l] += dk * d[l];
            }
        }
    }
    let cov = SymMatrix::from_fn(p, |k, l| acc[k * p + l] / divisor);
    (mean, cov)
}

/// Source of standard normal variates.
pub trait NormalSource {
    fn standard_normal(&mut self) -> f64;
}

/// Draws `mean + L·z` with `z` i.i.d. standard normal.
///
/// Panics if `mean` and `chol` disagree in dimension.
pub fn mvn_sample<S: NormalSource + ?Sized>(
    mean: &[f64],
    chol: &CholeskyFactor,
    source: &mut S,
) -> Vec<f64> {
    assert_eq!(
        mean.len(),
        chol.dim(),
        "mean and covariance dimensions differ"
    );
    let z: Vec<f64> = (0..chol.dim()).map(|_| source.standard_normal()).collect();
    let mut x = chol.mul_lower(&z);
    for (xi, mi) in x.iter_mut().zip(mean) {
        *xi += mi;
    }
    x
}

/// Offset between the stream indices of consecutive replications.
pub const CASE_STRIDE: u64 = 1 << 32;

/// Immutable descriptor of a reproducible random stream.
///
/// A stream is ChaCha20 keyed by `root_seed` with word-stream `stream_index`;
/// normals come from the Marsaglia polar method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub root_seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub const ALGORITHM_ID: &'static str = "chacha20+marsaglia-polar";

    pub fn new(root_seed: u64, stream_index: u64) -> Self {
        RngStream {
            root_seed,
            stream_index,
        }
    }

    /// Stream for case `case` of replication `replication`.
    pub fn for_case(root_seed: u64, replication: u64, case: u64) -> Self {
        debug_assert!(case < CASE_STRIDE);
        Self::new(root_seed, replication * CASE_STRIDE + case)
    }

    pub fn generator(&self) -> NormalGenerator {
        let mut rng = ChaCha20Rng::seed_from_u64(self.root_seed);
        rng.set_stream(self.stream_index);
        NormalGenerator { rng, spare: None }
    }
}

/// Mutable generator instantiated from an [`RngStream`].
#[derive(Clone, Debug)]
pub struct NormalGenerator {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl NormalGenerator {
    /// Uniform variates and index sampling share the stream.
    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }
}

impl NormalSource for NormalGenerator {
    fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.rng.random::<f64>() - 1.0;
            let v = 2.0 * self.rng.random::<f64>() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(rows: &[&[f64]]) -> SymMatrix {
        SymMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn ar1(p: usize, s2: f64, rho: f64) -> SymMatrix {
        SymMatrix::from_fn(p, |k, l| s2 * rho.powi((k as i32 - l as i32).abs()))
    }

    struct Zeros;
    impl NormalSource for Zeros {
        fn standard_normal(&mut self) -> f64 {
            0.0
        }
    }

    #[test]
    fn cholesky_identity() {
        let l = cholesky(&SymMatrix::identity(3)).unwrap();
        assert_eq!(l.reconstruct(), SymMatrix::identity(3));
        for k in 0..3 {
            for j in 0..3 {
                assert_eq!(l.get(k, j), if k == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn cholesky_two_by_two() {
        let a = mat(&[&[4.0, 2.0], &[2.0, 5.0]]);
        let l = cholesky(&a).unwrap();
        assert_eq!(
            (l.get(0, 0), l.get(0, 1), l.get(1, 0), l.get(1, 1)),
            (2.0, 0.0, 1.0, 2.0)
        );
        assert!(l.reconstruct().max_abs_diff(&a) < 1e-15);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = mat(&[&[1.0, 2.0], &[2.0, 1.0]]);
        assert!(matches!(
            cholesky(&a),
            Err(Error::NotPositiveDefinite { row: 1, .. })
        ));
    }

    #[test]
    fn cholesky_rejects_numerically_semidefinite() {
        // rank one, second pivot is rounding noise
        let a = mat(&[&[1.0, 3.0], &[3.0, 9.0]]);
        assert!(cholesky(&a).is_err());
        assert!(cholesky(&SymMatrix::zeros(2)).is_err());
    }

    #[test]
    fn asymmetric_input_rejected() {
        let rows = vec![vec![1.0, 0.5], vec![0.4, 1.0]];
        assert!(SymMatrix::from_rows(&rows).is_err());
        let rows = vec![vec![1.0, 0.5]];
        assert!(matches!(
            SymMatrix::from_rows(&rows),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn solve_spd_examples() {
        let id = cholesky(&SymMatrix::identity(2)).unwrap();
        assert_eq!(solve_spd(&id, &[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);

        let diag = cholesky(&mat(&[&[4.0, 0.0], &[0.0, 9.0]])).unwrap();
        assert_eq!(solve_spd(&diag, &[4.0, 9.0]).unwrap(), vec![1.0, 1.0]);

        let a = mat(&[&[4.0, 2.0], &[2.0, 5.0]]);
        let b = [6.0, 7.0];
        let y = solve_spd(&cholesky(&a).unwrap(), &b).unwrap();
        let r = a.mul_vec(&y).unwrap();
        let res = ((r[0] - b[0]).powi(2) + (r[1] - b[1]).powi(2)).sqrt();
        assert!(res <= 1e-10 * (b[0] * b[0] + b[1] * b[1]).sqrt());

        assert!(matches!(
            solve_spd(&id, &[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn eigen_identity() {
        let e = sym_eigen(&SymMatrix::identity(2)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0]);
    }

    #[test]
    fn eigen_two_by_two_by_hand() {
        // characteristic polynomial (1 − λ)² − 0.36 = 0 → λ = 1 ± 0.6
        let e = sym_eigen(&mat(&[&[1.0, 0.6], &[0.6, 1.0]])).unwrap();
        assert!((e.eigenvalues[0] - 1.6).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 0.4).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (got, want) in e.eigenvectors[0].iter().zip([h, h]) {
            assert!((got - want).abs() < 1e-12);
        }
        for (got, want) in e.eigenvectors[1].iter().zip([h, -h]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn eigen_ar1_residuals() {
        let a = ar1(3, 1.0, 0.6);
        let e = sym_eigen(&a).unwrap();
        assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        for (lambda, v) in e.eigenvalues.iter().zip(&e.eigenvectors) {
            let av = a.mul_vec(v).unwrap();
            for (x, y) in av.iter().zip(v) {
                assert!((x - lambda * y).abs() < 1e-10);
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let d = dot(&e.eigenvectors[i], &e.eigenvectors[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mahalanobis_examples() {
        let id = cholesky(&SymMatrix::identity(3)).unwrap();
        let c = [0.3, -1.0, 2.0];
        assert_eq!(mahalanobis_sq(&c, &c, &id).unwrap(), 0.0);
        assert_eq!(mahalanobis_sq(&[1.3, -1.0, 2.0], &c, &id).unwrap(), 1.0);
        let d = cholesky(&mat(&[&[4.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(mahalanobis_sq(&[2.0, 1.0], &[0.0, 0.0], &d).unwrap(), 2.0);
        assert!(mahalanobis_sq(&[1.0], &[0.0, 0.0], &d).is_err());
    }

    #[test]
    fn mvn_sample_zero_noise_returns_mean() {
        let chol = cholesky(&SymMatrix::identity(3)).unwrap();
        let mean = [1.0, -2.0, 0.5];
        assert_eq!(mvn_sample(&mean, &chol, &mut Zeros), mean.to_vec());
    }

    #[test]
    fn mvn_sample_is_deterministic() {
        let chol = cholesky(&ar1(4, 1.0, 0.6)).unwrap();
        let s = RngStream::new(42, 7);
        let mut g1 = s.generator();
        let mut g2 = s.generator();
        for _ in 0..10 {
            assert_eq!(
                mvn_sample(&[0.0; 4], &chol, &mut g1),
                mvn_sample(&[0.0; 4], &chol, &mut g2)
            );
        }
        let mut g3 = RngStream::new(42, 8).generator();
        assert_ne!(
            mvn_sample(&[0.0; 4], &chol, &mut s.generator()),
            mvn_sample(&[0.0; 4], &chol, &mut g3)
        );
    }

    #[test]
    fn mvn_sample_covariance_law_of_large_numbers() {
        let sigma = mat(&[&[1.0, 0.6], &[0.6, 1.0]]);
        let chol = cholesky(&sigma).unwrap();
        let mut g = RngStream::new(1, 0).generator();
        let draws: Vec<Vec<f64>> = (0..100_000)
            .map(|_| mvn_sample(&[0.0, 0.0], &chol, &mut g))
            .collect();
        let (_, s) = ensemble_moments(&draws).unwrap();
        assert!(s.max_abs_diff(&sigma) < 0.02, "{s:?}");
    }

    #[test]
    fn cholesky_path_matches_ar1_recursion() {
        // x_t = ρ x_{t−1} + ε_t with ε_t ~ N(0, σ²(1 − ρ²)) started in the stationary law
        let (p, s2, rho) = (4, 1.0, 0.6);
        let sigma = ar1(p, s2, rho);
        let chol = cholesky(&sigma).unwrap();
        let mut g = RngStream::new(3, 0).generator();
        let by_chol: Vec<Vec<f64>> = (0..100_000)
            .map(|_| mvn_sample(&vec![0.0; p], &chol, &mut g))
            .collect();
        let mut g = RngStream::new(3, 1).generator();
        let innov = (s2 * (1.0 - rho * rho)).sqrt();
        let by_recursion: Vec<Vec<f64>> = (0..100_000)
            .map(|_| {
                let mut x = Vec::with_capacity(p);
                let mut prev = s2.sqrt() * g.standard_normal();
                x.push(prev);
                for _ in 1..p {
                    prev = rho * prev + innov * g.standard_normal();
                    x.push(prev);
                }
                x
            })
            .collect();
        let (_, a) = ensemble_moments(&by_chol).unwrap();
        let (_, b) = ensemble_moments(&by_recursion).unwrap();
        assert!(a.max_abs_diff(&b) < 0.02);
        assert!(b.max_abs_diff(&sigma) < 0.02);
    }

    #[test]
    fn ensemble_moments_examples() {
        let (m, s) = ensemble_moments(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(m, vec![1.0, 1.0]);
        assert_eq!(s, mat(&[&[2.0, 2.0], &[2.0, 2.0]]));

        let (m, s) = ensemble_moments(&[vec![-1.0], vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(m, vec![0.0]);
        assert_eq!(s, mat(&[&[1.0]]));

        let same = vec![vec![0.3, 1.7]; 5];
        let (_, s) = ensemble_moments(&same).unwrap();
        assert!(s.max_abs_diff(&SymMatrix::zeros(2)) < 1e-15);

        assert!(matches!(
            ensemble_moments(&[vec![1.0]]),
            Err(Error::TooFewMembers { have: 1, need: 2 })
        ));
    }

    #[test]
    fn augmented_moments_examples() {
        let (m, s) = augmented_moments(&[vec![-1.0], vec![0.0], vec![1.0]], &[2.0]).unwrap();
        assert_eq!(m, vec![0.5]);
        assert!((s.get(0, 0) - 5.0 / 3.0).abs() < 1e-15);

        let same = vec![vec![1.0, 2.0]; 4];
        let (_, s) = augmented_moments(&same, &[1.0, 2.0]).unwrap();
        assert_eq!(s, SymMatrix::zeros(2));

        let (m, s) = augmented_moments(&[vec![0.0, 0.0]], &[2.0, 0.0]).unwrap();
        assert_eq!(m, vec![1.0, 0.0]);
        assert_eq!(s, mat(&[&[2.0, 0.0], &[0.0, 0.0]]));

        assert!(matches!(
            augmented_moments(&[vec![0.0, 0.0]], &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sample_covariance_is_unbiased() {
        let sigma = ar1(3, 1.0, 0.6);
        let chol = cholesky(&sigma).unwrap();
        let reps = 10_000;
        let mut sum = [0.0; 9];
        let mut sum_sq = [0.0; 9];
        let mut g = RngStream::new(11, 0).generator();
        for _ in 0..reps {
            let members: Vec<Vec<f64>> = (0..10)
                .map(|_| mvn_sample(&[0.0; 3], &chol, &mut g))
                .collect();
            let (_, s) = ensemble_moments(&members).unwrap();
            for k in 0..3 {
                for l in 0..3 {
                    let v = s.get(k, l);
                    sum[k * 3 + l] += v;
                    sum_sq[k * 3 + l] += v * v;
                }
            }
        }
        for k in 0..3 {
            for l in 0..3 {
                let i = k * 3 + l;
                let mean = sum[i] / reps as f64;
                let var = sum_sq[i] / reps as f64 - mean * mean;
                let se = (var / reps as f64).sqrt();
                assert!(
                    (mean - sigma.get(k, l)).abs() < 3.0 * se,
                    "entry ({k},{l}): {mean} vs {}",
                    sigma.get(k, l)
                );
            }
        }
    }

    fn random_spd(p: usize, seed: u64) -> SymMatrix {
        let mut g = RngStream::new(seed, 0).generator();
        let b: Vec<f64> = (0..p * p).map(|_| g.standard_normal()).collect();
        SymMatrix::from_fn(p, |k, l| {
            let s: f64 = (0..p).map(|j| b[k * p + j] * b[l * p + j]).sum();
            s + if k == l { p as f64 * 0.1 } else { 0.0 }
        })
    }

    #[test]
    fn cholesky_reconstructs_random_spd() {
        for seed in 0..100 {
            let p = 1 + (seed as usize % 30);
            let a = random_spd(p, seed);
            let l = cholesky(&a).unwrap();
            let diff = SymMatrix::from_fn(p, |k, j| l.reconstruct().get(k, j) - a.get(k, j));
            assert!(diff.frobenius_norm() / a.frobenius_norm() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn mahalanobis_is_affine_invariant(p in 1usize..=10, seed in any::<u64>()) {
            let a = random_spd(p, seed);
            let mut g = RngStream::new(seed, 1).generator();
            let x: Vec<f64> = (0..p).map(|_| g.standard_normal()).collect();
            let c: Vec<f64> = (0..p).map(|_| g.standard_normal()).collect();
            // well-conditioned random transform T = I + 0.3·G
            let t: Vec<f64> = (0..p * p)
                .map(|i| if i / p == i % p { 1.0 } else { 0.0 } + 0.3 * g.standard_normal() / (p as f64).sqrt())
                .collect();
            let apply = |v: &[f64]| -> Vec<f64> { (0..p).map(|k| dot(&t[k * p..(k + 1) * p], v)).collect() };
            let ta = SymMatrix::from_fn(p, |k, l| {
                (0..p).map(|i| (0..p).map(|j| t[k * p + i] * a.get(i, j) * t[l * p + j]).sum::<f64>()).sum()
            });
            let before = mahalanobis_sq(&x, &c, &cholesky(&a).unwrap()).unwrap();
            let chol_t = match cholesky(&ta) { Ok(l) => l, Err(_) => return Ok(()) };
            let after = mahalanobis_sq(&apply(&x), &apply(&c), &chol_t).unwrap();
            prop_assert!((before - after).abs() <= 1e-8 * before.max(1.0));
        }
    }
}
