//! Discrete torus geometry: centered DFT, Sobolev norms, radial energy
//! density.
//!
//! The mesh is `x_j = 2 pi j / N` and the wavenumber box is
//! `k in {-N/2, .., N/2-1}^2`. Both physical samples and Fourier
//! coefficients are stored row-major with the centered index offset by
//! `N/2`, so storage slot `(a1, a2)` holds index `(a1 - N/2, a2 - N/2)`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid size must be an even integer >= 4, got {0}")]
    BadSize(usize),
    #[error("fields live on different grids: N = {0} vs N = {1}")]
    GridMismatch(usize, usize),
    #[error("log-log fit undefined: fewer than 2 positive samples in the fit window")]
    FitUndefined,
}

/// Uniform `N x N` mesh of the 2-torus with spacing `h = 2 pi / N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self, GridError> {
        if n < 4 || n % 2 != 0 {
            return Err(GridError::BadSize(n));
        }
        Ok(Grid { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn half(&self) -> i64 {
        (self.n / 2) as i64
    }

    /// Grid spacing `2 pi / N`.
    #[inline]
    pub fn h(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Physical node for a centered index pair.
    #[inline]
    pub fn node(&self, j1: i64, j2: i64) -> (f64, f64) {
        (
            2.0 * PI * j1 as f64 / self.n as f64,
            2.0 * PI * j2 as f64 / self.n as f64,
        )
    }

    /// Storage slot for a centered index pair.
    #[inline]
    pub fn slot(&self, j1: i64, j2: i64) -> usize {
        debug_assert!(j1 >= -self.half() && j1 < self.half());
        debug_assert!(j2 >= -self.half() && j2 < self.half());
        ((j1 + self.half()) as usize) * self.n + (j2 + self.half()) as usize
    }

    /// Centered index pair for a storage slot.
    #[inline]
    pub fn centered(&self, slot: usize) -> (i64, i64) {
        let a1 = (slot / self.n) as i64;
        let a2 = (slot % self.n) as i64;
        (a1 - self.half(), a2 - self.half())
    }

    /// Iterates centered index pairs in storage order.
    pub fn indices(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        let half = self.half();
        (-half..half).flat_map(move |j1| (-half..half).map(move |j2| (j1, j2)))
    }
}

/// Japanese bracket `<k> = (1 + |k|^2)^(1/2)`.
#[inline]
pub fn bracket(k1: i64, k2: i64) -> f64 {
    (1.0 + (k1 * k1 + k2 * k2) as f64).sqrt()
}

/// Complex samples on the physical mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: Grid,
    pub values: Vec<Complex64>,
}

/// Centered Fourier coefficients on the wavenumber box.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub grid: Grid,
    pub coeffs: Vec<Complex64>,
}

impl GridField {
    pub fn zeros(grid: Grid) -> Self {
        GridField {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn constant(grid: Grid, c: Complex64) -> Self {
        GridField {
            grid,
            values: vec![c; grid.len()],
        }
    }

    #[inline]
    pub fn at(&self, j1: i64, j2: i64) -> Complex64 {
        self.values[self.grid.slot(j1, j2)]
    }
}

impl SpectralField {
    pub fn zeros(grid: Grid) -> Self {
        SpectralField {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    #[inline]
    pub fn at(&self, k1: i64, k2: i64) -> Complex64 {
        self.coeffs[self.grid.slot(k1, k2)]
    }

    #[inline]
    pub fn at_mut(&mut self, k1: i64, k2: i64) -> &mut Complex64 {
        let slot = self.grid.slot(k1, k2);
        &mut self.coeffs[slot]
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

thread_local! {
    static FFT_CACHE: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    FFT_CACHE.with(|cache| {
        cache
            .borrow_mut()
            .entry((n, inverse))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if inverse {
                    planner.plan_fft_inverse(n)
                } else {
                    planner.plan_fft_forward(n)
                }
            })
            .clone()
    })
}

fn transpose(n: usize, data: &mut [Complex64]) {
    for a1 in 0..n {
        for a2 in (a1 + 1)..n {
            data.swap(a1 * n + a2, a2 * n + a1);
        }
    }
}

/// Unnormalized 2-d FFT over storage order, rows then columns.
fn fft2(n: usize, data: &mut [Complex64], inverse: bool) {
    let fft = plan(n, inverse);
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    transpose(n, data);
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    transpose(n, data);
}

/// Reindexes a standard-order transform onto the centered box (or back).
///
/// Centered and standard exponents differ by `(-1)^(k1+k2)` because the
/// storage origin sits at `j = -N/2`; the sign is the same in both
/// directions, as is the `fftshift` by `N/2`.
fn recenter(grid: Grid, src: &[Complex64]) -> Vec<Complex64> {
    let n = grid.n();
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    for s1 in 0..n {
        let m1 = (s1 + n / 2) % n;
        for s2 in 0..n {
            let m2 = (s2 + n / 2) % n;
            let sign = if (s1 + s2) % 2 == 0 { 1.0 } else { -1.0 };
            out[s1 * n + s2] = sign * src[m1 * n + m2];
        }
    }
    out
}

/// Centered discrete Fourier transform
/// `u_hat(k) = sum_j u(x_j) exp(-2 pi i (k . j) / N)`.
pub fn dft(field: &GridField) -> SpectralField {
    let grid = field.grid;
    let mut buf = field.values.clone();
    fft2(grid.n(), &mut buf, false);
    let coeffs = recenter(grid, &buf);
    SpectralField { grid, coeffs }
}

/// Inverse centered transform,
/// `u(x_j) = (1/N^2) sum_k u_hat(k) exp(2 pi i (k . j) / N)`.
pub fn idft(spec: &SpectralField) -> GridField {
    let grid = spec.grid;
    let n = grid.n();
    // Place sign(k) * coeffs(k) at the standard frequency slot k mod N.
    let mut buf = vec![Complex64::new(0.0, 0.0); grid.len()];
    for s1 in 0..n {
        let m1 = (s1 + n / 2) % n;
        for s2 in 0..n {
            let m2 = (s2 + n / 2) % n;
            let sign = if (s1 + s2) % 2 == 0 { 1.0 } else { -1.0 };
            buf[m1 * n + m2] = sign * spec.coeffs[s1 * n + s2];
        }
    }
    fft2(n, &mut buf, true);
    let scale = 1.0 / (n * n) as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
    GridField { grid, values: buf }
}

/// Discrete Sobolev norm
/// `(h^2/N^2 sum_k <k>^(2s) |u_hat(k)|^2)^(1/2)`.
pub fn sobolev_norm(spec: &SpectralField, s: f64) -> f64 {
    let grid = spec.grid;
    let mut acc = 0.0;
    for (slot, (k1, k2)) in grid.indices().enumerate() {
        let w = bracket(k1, k2).powf(2.0 * s);
        acc += w * spec.coeffs[slot].norm_sqr();
    }
    let h = grid.h();
    (h * h / grid.len() as f64 * acc).sqrt()
}

/// Radial energy density samples with a fitted log-log slope.
#[derive(Debug, Clone)]
pub struct RedCurve {
    pub s: f64,
    /// Annulus outer radii `R = 2, 4, .., N/2`.
    pub radii: Vec<u32>,
    pub values: Vec<f64>,
    /// OLS slope of `log10 E` vs `log10 R` over the fit window.
    pub fitted_slope: f64,
}

/// Ordinary least-squares line fit, `y ~ slope * x + intercept`.
#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Radial energy density
/// `E_s(R) = (1/N^2) sum_{R-2 <= |k| < R} <k>^(2s) |u_hat(k)|^2`.
///
/// The slope is fitted on radii inside `fit_window` (inclusive bounds on
/// `R`) that carry strictly positive energy.
pub fn red(spec: &SpectralField, s: f64, fit_window: (f64, f64)) -> Result<RedCurve, GridError> {
    let grid = spec.grid;
    let n = grid.n();
    let radii: Vec<u32> = (1..=(n as u32 / 4)).map(|l| 2 * l).collect();
    let mut values = vec![0.0; radii.len()];
    for (slot, (k1, k2)) in grid.indices().enumerate() {
        let e = bracket(k1, k2).powf(2.0 * s) * spec.coeffs[slot].norm_sqr();
        if e == 0.0 {
            continue;
        }
        let kn = ((k1 * k1 + k2 * k2) as f64).sqrt();
        // Annulus A_R = { R-2 <= |k| < R }: |k| = R lands in the next one.
        let bin = (kn / 2.0).floor() as usize;
        if bin < values.len() {
            values[bin] += e / (n * n) as f64;
        }
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (r, e) in radii.iter().zip(&values) {
        let rf = *r as f64;
        if rf >= fit_window.0 && rf <= fit_window.1 && *e > 0.0 {
            xs.push(rf.log10());
            ys.push(e.log10());
        }
    }
    let fit = linear_fit(&xs, &ys).ok_or(GridError::FitUndefined)?;
    Ok(RedCurve {
        s,
        radii,
        values,
        fitted_slope: fit.slope,
    })
}
