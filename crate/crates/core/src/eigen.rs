//! Eigenpairs of the viscous operator near the origin of the complex
//! plane.
//!
//! Two solvers are provided: a full dense decomposition for small grids,
//! and shift-invert Arnoldi (dense LU for the inner solves, matrix-free
//! residuals) for production sizes. Both return the `m` eigenvalues
//! closest to the target shift together with eigenvectors normalized to
//! unit discrete `L^2` norm.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, FactorizeInto, Solve};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::grid::{sobolev_norm, SpectralField};
use crate::operators::{OperatorError, OperatorSpec, DEFAULT_DENSE_CAP};

/// Largest grid admitted to the full dense eigendecomposition.
pub const DENSE_EIG_CAP: usize = 32;

/// Eigenvalues closer than this are flagged as a numerical cluster.
pub const CLUSTER_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum EigenError {
    #[error("dense eigendecomposition cap exceeded: N = {n} > {cap}")]
    CapExceeded { n: usize, cap: usize },
    #[error("requested {m} eigenpairs from a {dim}-dimensional problem")]
    TooManyPairs { m: usize, dim: usize },
    #[error("Arnoldi iteration did not converge after {restarts} restarts (worst residual {worst:e}, tol {tol:e})")]
    NotConverged { restarts: usize, worst: f64, tol: f64 },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("linear algebra backend failure: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),
}

/// One converged eigenpair. The vector has unit discrete `L^2` norm and
/// the residual is `||A v - lambda v||` computed matrix-free.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda: Complex64,
    pub vector: SpectralField,
    pub residual: f64,
    /// Set when another returned eigenvalue lies within `CLUSTER_TOL`.
    pub clustered: bool,
}

/// Eigenpairs of one operator instance, tagged with its viscosity.
#[derive(Debug, Clone)]
pub struct EigenSet {
    pub nu: f64,
    pub pairs: Vec<EigenPair>,
}

/// Tuning knobs for the shift-invert Arnoldi iteration.
#[derive(Debug, Clone, Copy)]
pub struct ArnoldiOptions {
    /// Residual tolerance on every requested pair.
    pub tol: f64,
    pub max_restarts: usize,
    /// Seed for the random start vector (deterministic runs).
    pub seed: u64,
    /// Spectral target; eigenvalues closest to it are returned.
    pub shift: Complex64,
}

impl Default for ArnoldiOptions {
    fn default() -> Self {
        ArnoldiOptions {
            tol: 1e-10,
            max_restarts: 12,
            seed: 7,
            shift: Complex64::new(0.0, 0.0),
        }
    }
}

/// `||A v - lambda v||` in the discrete `L^2` norm, matrix-free.
pub fn residual_norm(
    spec: &OperatorSpec,
    lambda: Complex64,
    v: &SpectralField,
) -> Result<f64, OperatorError> {
    let mut av = spec.apply(v)?;
    for (a, b) in av.coeffs.iter_mut().zip(&v.coeffs) {
        *a -= lambda * b;
    }
    Ok(sobolev_norm(&av, 0.0))
}

fn mark_clusters(pairs: &mut [EigenPair]) {
    let lambdas: Vec<Complex64> = pairs.iter().map(|p| p.lambda).collect();
    for (i, pair) in pairs.iter_mut().enumerate() {
        pair.clustered = lambdas
            .iter()
            .enumerate()
            .any(|(j, l)| j != i && (l - pair.lambda).norm() < CLUSTER_TOL);
    }
}

fn normalized_field(spec: &OperatorSpec, column: &[Complex64]) -> SpectralField {
    let mut field = SpectralField {
        grid: spec.grid(),
        coeffs: column.to_vec(),
    };
    let norm = sobolev_norm(&field, 0.0);
    if norm > 0.0 {
        for c in field.coeffs.iter_mut() {
            *c /= norm;
        }
    }
    field
}

/// Full dense eigendecomposition; returns the `m` eigenvalues closest to
/// the origin. Only available for `N <= DENSE_EIG_CAP`.
pub fn eig_dense(spec: &OperatorSpec, m: usize) -> Result<EigenSet, EigenError> {
    let n = spec.grid().n();
    if n > DENSE_EIG_CAP {
        return Err(EigenError::CapExceeded {
            n,
            cap: DENSE_EIG_CAP,
        });
    }
    let dim = spec.grid().len();
    if m > dim {
        return Err(EigenError::TooManyPairs { m, dim });
    }
    let a = spec.assemble_dense_capped(DEFAULT_DENSE_CAP)?;
    let (values, vectors) = a.matrix.eig()?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| values[i].norm().total_cmp(&values[j].norm()));
    let mut pairs = Vec::with_capacity(m);
    for &idx in order.iter().take(m) {
        let column: Vec<Complex64> = vectors.column(idx).to_vec();
        let vector = normalized_field(spec, &column);
        let residual = residual_norm(spec, values[idx], &vector)?;
        pairs.push(EigenPair {
            lambda: values[idx],
            vector,
            residual,
            clustered: false,
        });
    }
    mark_clusters(&mut pairs);
    Ok(EigenSet {
        nu: spec.nu(),
        pairs,
    })
}

fn dot_conj(a: &Array1<Complex64>, b: &Array1<Complex64>) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

fn l2(a: &Array1<Complex64>) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Shift-invert Arnoldi for the `m` eigenvalues closest to the shift.
///
/// The shifted matrix is assembled once and LU-factorized for the inner
/// solves; the Krylov basis is built with modified Gram-Schmidt plus one
/// reorthogonalization pass. Restarts enlarge the Krylov space and start
/// from the sum of the current Ritz vectors.
pub fn eig_arnoldi(
    spec: &OperatorSpec,
    m: usize,
    opts: &ArnoldiOptions,
) -> Result<EigenSet, EigenError> {
    let dim = spec.grid().len();
    if m == 0 || m > dim {
        return Err(EigenError::TooManyPairs { m, dim });
    }
    let mut shifted = spec.assemble_dense_capped(DEFAULT_DENSE_CAP)?.matrix;
    if opts.shift != Complex64::new(0.0, 0.0) {
        for i in 0..dim {
            shifted[(i, i)] -= opts.shift;
        }
    }
    let lu = shifted.factorize_into()?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start: Array1<Complex64> = Array1::from_iter(
        (0..dim).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))),
    );
    let nrm = l2(&start);
    start.mapv_inplace(|c| c / nrm);

    let base_dim = (2 * m + 8).max(20);
    let mut worst = f64::INFINITY;
    for restart in 0..=opts.max_restarts {
        let d = (base_dim + 10 * restart).min(dim);
        let mut basis: Vec<Array1<Complex64>> = vec![start.clone()];
        let mut h = Array2::<Complex64>::zeros((d + 1, d));
        let mut steps = d;
        for j in 0..d {
            let mut w = lu.solve(&basis[j])?;
            // Modified Gram-Schmidt with one reorthogonalization pass.
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot_conj(v, &w);
                    h[(i, j)] += c;
                    w.iter_mut().zip(v.iter()).for_each(|(wv, vv)| *wv -= c * vv);
                }
            }
            let nrm = l2(&w);
            h[(j + 1, j)] = Complex64::new(nrm, 0.0);
            if nrm < 1e-13 {
                // Invariant subspace found: Ritz values are exact.
                steps = j + 1;
                break;
            }
            w.mapv_inplace(|c| c / nrm);
            basis.push(w);
        }

        let hj = h.slice(ndarray::s![0..steps, 0..steps]).to_owned();
        let (thetas, ys) = hj.eig()?;
        let mut order: Vec<usize> = (0..steps).collect();
        order.sort_by(|&a, &b| thetas[b].norm().total_cmp(&thetas[a].norm()));
        let take = m.min(steps);

        let mut pairs = Vec::with_capacity(take);
        let mut restart_vec: Array1<Complex64> = Array1::zeros(dim);
        for &idx in order.iter().take(take) {
            let theta = thetas[idx];
            if theta.norm() == 0.0 {
                continue;
            }
            let lambda = opts.shift + 1.0 / theta;
            let mut x: Array1<Complex64> = Array1::zeros(dim);
            for (i, v) in basis.iter().take(steps).enumerate() {
                let yi = ys[(i, idx)];
                x.iter_mut().zip(v.iter()).for_each(|(xv, vv)| *xv += yi * vv);
            }
            restart_vec
                .iter_mut()
                .zip(x.iter())
                .for_each(|(r, v)| *r += v);
            let vector = normalized_field(spec, x.as_slice().unwrap());
            let residual = residual_norm(spec, lambda, &vector)?;
            pairs.push(EigenPair {
                lambda,
                vector,
                residual,
                clustered: false,
            });
        }

        worst = pairs.iter().map(|p| p.residual).fold(0.0, f64::max);
        if pairs.len() == m && worst <= opts.tol {
            mark_clusters(&mut pairs);
            return Ok(EigenSet {
                nu: spec.nu(),
                pairs,
            });
        }
        let nrm = l2(&restart_vec);
        if nrm > 0.0 {
            restart_vec.mapv_inplace(|c| c / nrm);
            start = restart_vec;
        }
    }
    Err(EigenError::NotConverged {
        restarts: opts.max_restarts,
        worst,
        tol: opts.tol,
    })
}
