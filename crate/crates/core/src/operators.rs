//! The viscous operator `P(x,D) - w0 + i nu Laplacian` on the discrete
//! torus, both matrix-free (two transforms per application) and as an
//! assembled dense matrix.
//!
//! In Fourier variables the operator acts as
//! `u_hat(k) -> (<k>^-1 k2 - w0 - i nu |k|^2) u_hat(k) - r F(beta F^-1 u_hat)(k)`.

use ndarray::Array2;
use num_complex::Complex64;
use thiserror::Error;

use crate::expr::Expr;
use crate::grid::{bracket, dft, idft, Grid, GridField, SpectralField};

/// Largest grid admitted to dense assembly (an N^2 x N^2 matrix).
pub const DEFAULT_DENSE_CAP: usize = 96;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("potential must be real-valued: max |Im beta| = {0:e}")]
    NonRealBeta(f64),
    #[error("viscosity must be nonnegative, got {0}")]
    NegativeViscosity(f64),
    #[error("fields live on different grids: N = {0} vs N = {1}")]
    GridMismatch(usize, usize),
    #[error("dense assembly cap exceeded: N = {n} > {cap}")]
    CapExceeded { n: usize, cap: usize },
    #[error(transparent)]
    Expr(#[from] crate::expr::ExprError),
}

/// Immutable description of `P(x,D) - w0 + i nu Laplacian` on a fixed grid.
///
/// The potential is sampled and transformed once at construction.
#[derive(Debug, Clone)]
pub struct OperatorSpec {
    grid: Grid,
    r: f64,
    omega0: f64,
    nu: f64,
    beta: Expr,
    beta_samples: GridField,
    beta_hat: SpectralField,
}

/// Dense matrix form `A = D + C` acting on coefficient vectors in storage
/// order: `D` diagonal with the Fourier multiplier, `C` the potential
/// coupling.
pub struct OperatorMatrix {
    pub grid: Grid,
    pub matrix: Array2<Complex64>,
}

impl OperatorSpec {
    pub fn new(
        grid: Grid,
        r: f64,
        beta: Expr,
        omega0: f64,
        nu: f64,
    ) -> Result<Self, OperatorError> {
        if nu < 0.0 {
            return Err(OperatorError::NegativeViscosity(nu));
        }
        let beta_samples = beta.sample(grid)?;
        let max_im = beta_samples
            .values
            .iter()
            .map(|v| v.im.abs())
            .fold(0.0, f64::max);
        if max_im > 1e-12 {
            return Err(OperatorError::NonRealBeta(max_im));
        }
        let beta_hat = dft(&beta_samples);
        Ok(OperatorSpec {
            grid,
            r,
            omega0,
            nu,
            beta,
            beta_samples,
            beta_hat,
        })
    }

    /// Same operator with a different viscosity (potential cache reused).
    pub fn with_nu(&self, nu: f64) -> Result<Self, OperatorError> {
        if nu < 0.0 {
            return Err(OperatorError::NegativeViscosity(nu));
        }
        let mut spec = self.clone();
        spec.nu = nu;
        Ok(spec)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn beta(&self) -> &Expr {
        &self.beta
    }

    pub fn beta_samples(&self) -> &GridField {
        &self.beta_samples
    }

    /// Diagonal symbol `<k>^-1 k2 - w0 - i nu |k|^2`.
    #[inline]
    pub fn multiplier(&self, k1: i64, k2: i64) -> Complex64 {
        let ksq = (k1 * k1 + k2 * k2) as f64;
        Complex64::new(k2 as f64 / bracket(k1, k2) - self.omega0, -self.nu * ksq)
    }

    /// Matrix-free application: two transforms and a pointwise product.
    pub fn apply(&self, u: &SpectralField) -> Result<SpectralField, OperatorError> {
        if u.grid != self.grid {
            return Err(OperatorError::GridMismatch(self.grid.n(), u.grid.n()));
        }
        let mut phys = idft(u);
        for (v, b) in phys.values.iter_mut().zip(&self.beta_samples.values) {
            *v *= b.re;
        }
        let coupled = dft(&phys);
        let mut out = SpectralField::zeros(self.grid);
        for (slot, (k1, k2)) in self.grid.indices().enumerate() {
            out.coeffs[slot] =
                self.multiplier(k1, k2) * u.coeffs[slot] - self.r * coupled.coeffs[slot];
        }
        Ok(out)
    }

    pub fn assemble_dense(&self) -> Result<OperatorMatrix, OperatorError> {
        self.assemble_dense_capped(DEFAULT_DENSE_CAP)
    }

    /// Dense assembly through the convolution theorem:
    /// `A[k,k'] = m(k) delta - (r/N^2) beta_hat(k - k')` with the
    /// difference wrapped periodically into the wavenumber box.
    pub fn assemble_dense_capped(&self, cap: usize) -> Result<OperatorMatrix, OperatorError> {
        let n = self.grid.n();
        if n > cap {
            return Err(OperatorError::CapExceeded { n, cap });
        }
        let dim = self.grid.len();
        let half = self.grid.half();
        let scale = self.r / dim as f64;
        let mut matrix = Array2::zeros((dim, dim));
        let ks: Vec<(i64, i64)> = self.grid.indices().collect();
        for (row, &(k1, k2)) in ks.iter().enumerate() {
            for (col, &(l1, l2)) in ks.iter().enumerate() {
                let d1 = (k1 - l1 + half).rem_euclid(n as i64) - half;
                let d2 = (k2 - l2 + half).rem_euclid(n as i64) - half;
                matrix[(row, col)] = -scale * self.beta_hat.at(d1, d2);
            }
            matrix[(row, row)] += self.multiplier(k1, k2);
        }
        Ok(OperatorMatrix {
            grid: self.grid,
            matrix,
        })
    }

    /// Essential-spectrum enclosure `[-1 - r max beta, 1 - r min beta]`
    /// at `nu = 0`, with extrema taken over the grid samples.
    pub fn essential_band(&self) -> (f64, f64) {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in &self.beta_samples.values {
            lo = lo.min(v.re);
            hi = hi.max(v.re);
        }
        (-1.0 - self.r * hi, 1.0 - self.r * lo)
    }
}

impl OperatorMatrix {
    /// Matrix-vector product on a spectral field in storage order.
    pub fn apply(&self, u: &SpectralField) -> SpectralField {
        let dim = self.grid.len();
        let mut out = SpectralField::zeros(self.grid);
        for row in 0..dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for col in 0..dim {
                acc += self.matrix[(row, col)] * u.coeffs[col];
            }
            out.coeffs[row] = acc;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::grid::sobolev_norm;
    use num_complex::Complex64 as C;
    use rand::{Rng, SeedableRng};

    fn spec(n: usize, r: f64, beta: &str, omega0: f64, nu: f64) -> OperatorSpec {
        OperatorSpec::new(Grid::new(n).unwrap(), r, parse(beta).unwrap(), omega0, nu).unwrap()
    }

    fn random_spectrum(grid: Grid, seed: u64) -> SpectralField {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        SpectralField {
            grid,
            coeffs: (0..grid.len())
                .map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect(),
        }
    }

    #[test]
    fn rejects_complex_potential() {
        let grid = Grid::new(8).unwrap();
        let err = OperatorSpec::new(grid, 1.0, parse("i*x1").unwrap(), 0.0, 0.0);
        assert!(matches!(err, Err(OperatorError::NonRealBeta(_))));
    }

    #[test]
    fn multiplier_values() {
        let s = spec(8, 1.0, "cos(x1)", 0.0, 0.0);
        assert_eq!(s.multiplier(0, 0), C::new(0.0, 0.0));
        assert!((s.multiplier(0, 1) - C::new(1.0 / 2.0f64.sqrt(), 0.0)).norm() < 1e-15);
        let s = spec(8, 1.0, "cos(x1)", 0.0, 0.01);
        assert!((s.multiplier(1, 0) - C::new(0.0, -0.01)).norm() < 1e-15);
    }

    #[test]
    fn apply_to_constant_gives_minus_r_beta() {
        // P(1) = -r beta: the zero mode is killed by k2 <k>^-1.
        let s = spec(8, 0.7, "cos(x1)+sin(x2)", 0.0, 0.0);
        let one = dft(&GridField::constant(s.grid(), C::new(1.0, 0.0)));
        let out = s.apply(&one).unwrap();
        let expect = dft(&parse("-0.7*(cos(x1)+sin(x2))").unwrap().sample(s.grid()).unwrap());
        for i in 0..s.grid().len() {
            assert!((out.coeffs[i] - expect.coeffs[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn apply_to_pure_mode_with_zero_potential() {
        let s = spec(8, 1.0, "0", 0.0, 0.0);
        let mut u = SpectralField::zeros(s.grid());
        *u.at_mut(0, 1) = C::new(64.0, 0.0);
        let out = s.apply(&u).unwrap();
        for (k1, k2) in s.grid().indices() {
            let expect = if (k1, k2) == (0, 1) {
                C::new(64.0 / 2.0f64.sqrt(), 0.0)
            } else {
                C::new(0.0, 0.0)
            };
            assert!((out.at(k1, k2) - expect).norm() < 1e-10);
        }
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let s = spec(8, 1.0, "cos(x1)", 0.0, 0.0);
        let u = SpectralField::zeros(Grid::new(16).unwrap());
        assert!(matches!(
            s.apply(&u),
            Err(OperatorError::GridMismatch(8, 16))
        ));
    }

    #[test]
    fn dense_assembly_of_diagonal_operator() {
        let s = spec(8, 0.0, "cos(x1)", 0.3, 0.01);
        let a = s.assemble_dense().unwrap();
        for (row, (k1, k2)) in s.grid().indices().enumerate() {
            for col in 0..s.grid().len() {
                let expect = if row == col {
                    s.multiplier(k1, k2)
                } else {
                    C::new(0.0, 0.0)
                };
                assert!((a.matrix[(row, col)] - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dense_assembly_of_cosine_coupling() {
        // beta_hat of cos(x1) has two modes of weight N^2/2, so the
        // coupling entries are -r/2 at k - k' = (+-1, 0).
        let s = spec(8, 0.5, "cos(x1)", 0.0, 0.0);
        let a = s.assemble_dense().unwrap();
        let ks: Vec<(i64, i64)> = s.grid().indices().collect();
        for (row, &(k1, k2)) in ks.iter().enumerate() {
            for (col, &(l1, l2)) in ks.iter().enumerate() {
                let half = s.grid().half();
                let n = s.grid().n() as i64;
                let d1 = (k1 - l1 + half).rem_euclid(n) - half;
                let d2 = (k2 - l2 + half).rem_euclid(n) - half;
                let mut expect = if d1.abs() == 1 && d2 == 0 {
                    C::new(-0.25, 0.0)
                } else {
                    C::new(0.0, 0.0)
                };
                if row == col {
                    expect += s.multiplier(k1, k2);
                }
                assert!(
                    (a.matrix[(row, col)] - expect).norm() < 1e-10,
                    "k = ({k1},{k2}), k' = ({l1},{l2})"
                );
            }
        }
    }

    #[test]
    fn dense_assembly_matches_transform_triple_product() {
        // Explicit oracle: C = r * F diag(beta) F^-1, built column by
        // column from the transforms themselves.
        for n in [4usize, 8] {
            let s = spec(n, 0.45, "cos(x1-2*x2)+sin(2*x2)", 0.1, 5e-3);
            let a = s.assemble_dense().unwrap();
            let dim = s.grid().len();
            for col in 0..dim {
                let mut e = SpectralField::zeros(s.grid());
                e.coeffs[col] = C::new(1.0, 0.0);
                let mut phys = idft(&e);
                for (v, b) in phys.values.iter_mut().zip(&s.beta_samples().values) {
                    *v *= b.re;
                }
                let coupled = dft(&phys);
                for (row, (k1, k2)) in s.grid().indices().enumerate() {
                    let mut expect = -s.r() * coupled.coeffs[row];
                    if row == col {
                        expect += s.multiplier(k1, k2);
                    }
                    assert!((a.matrix[(row, col)] - expect).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn matrix_free_matches_dense() {
        for n in [4usize, 8, 16] {
            let s = spec(n, 0.5, "cos(x1)+sin(x2)", 0.2, 1e-2);
            let a = s.assemble_dense().unwrap();
            let u = random_spectrum(s.grid(), n as u64);
            let fast = s.apply(&u).unwrap();
            let slow = a.apply(&u);
            for i in 0..s.grid().len() {
                assert!((fast.coeffs[i] - slow.coeffs[i]).norm() < 1e-10, "N = {n}");
            }
        }
    }

    #[test]
    fn hermitian_at_zero_viscosity() {
        // With nu = 0 the assembled matrix plus w0 I is Hermitian.
        let s = spec(8, 0.5, "cos(x1)+sin(x2)", 0.7, 0.0);
        let a = s.assemble_dense().unwrap();
        let dim = s.grid().len();
        let mut max_dev: f64 = 0.0;
        for row in 0..dim {
            for col in 0..dim {
                let mut v = a.matrix[(row, col)];
                if row == col {
                    v += C::new(s.omega0(), 0.0);
                }
                let mut w = a.matrix[(col, row)].conj();
                if row == col {
                    w += C::new(s.omega0(), 0.0);
                }
                max_dev = max_dev.max((v - w).norm());
            }
        }
        assert!(max_dev <= 1e-10, "max deviation {max_dev:e}");
    }

    #[test]
    fn bounded_operator_norm_estimate() {
        let s = spec(16, 2.0, "cos(x1)", 0.0, 0.01);
        let max_beta = s
            .beta_samples()
            .values
            .iter()
            .map(|v| v.re.abs())
            .fold(0.0, f64::max);
        let half = s.grid().half() as f64;
        let bound = 1.0 + s.omega0() + s.r() * max_beta + s.nu() * 2.0 * half * half;
        for seed in 0..4 {
            let u = random_spectrum(s.grid(), seed);
            let out = s.apply(&u).unwrap();
            assert!(sobolev_norm(&out, 0.0) <= bound * sobolev_norm(&u, 0.0) + 1e-12);
        }
    }

    #[test]
    fn essential_band_values() {
        let s = spec(64, 0.5, "cos(x1)", 0.0, 0.0);
        let (lo, hi) = s.essential_band();
        assert!((lo + 1.5).abs() < 1e-12 && (hi - 1.5).abs() < 1e-12);

        let s = spec(64, 0.0, "cos(x1)", 0.0, 0.0);
        assert_eq!(s.essential_band(), (-1.0, 1.0));

        // Grid extrema of cos(x1-2x2)+sin(2x2); true max/min are +-2 at
        // (pi/2, pi/4)-type points, confirmed by dense sampling.
        let s = spec(64, 0.45, "cos(x1-2*x2)+sin(2*x2)", 0.0, 0.0);
        let (lo, hi) = s.essential_band();
        let mut bmax: f64 = f64::NEG_INFINITY;
        let mut bmin: f64 = f64::INFINITY;
        let m = 2048;
        for a in 0..m {
            for b in 0..m {
                let x1 = 2.0 * std::f64::consts::PI * a as f64 / m as f64;
                let x2 = 2.0 * std::f64::consts::PI * b as f64 / m as f64;
                let v = (x1 - 2.0 * x2).cos() + (2.0 * x2).sin();
                bmax = bmax.max(v);
                bmin = bmin.min(v);
            }
        }
        assert!((lo - (-1.0 - 0.45 * bmax)).abs() < 1e-3);
        assert!((hi - (1.0 - 0.45 * bmin)).abs() < 1e-3);
        assert!((lo + 1.9).abs() < 1e-3 && (hi - 1.9).abs() < 1e-3);
    }

    #[test]
    fn cap_exceeded() {
        let s = spec(8, 0.5, "cos(x1)", 0.0, 0.0);
        assert!(matches!(
            s.assemble_dense_capped(4),
            Err(OperatorError::CapExceeded { n: 8, cap: 4 })
        ));
    }
}
