//! Time integration of the forced evolution problem in Fourier space.
//!
//! The semi-discrete system is
//! `d/dt u_hat = -i <k>^-1 k2 u_hat + i r F(beta F^-1 u_hat) - i f_hat exp(-i w0 t)`,
//! started from zero. The stiff/nonstiff split for ETDRK4 keeps only the
//! diagonal multiplier in the exponential; the potential coupling and the
//! forcing ride in the nonlinear slot.

use num_complex::Complex64;
use thiserror::Error;

use crate::expr::Expr;
use crate::grid::{bracket, dft, idft, red, sobolev_norm, GridError, LinearFit, RedCurve, SpectralField};
use crate::operators::OperatorSpec;

/// RK4 imaginary-axis stability limit for the diagonal part (|L| <= 1).
pub const RK4_MAX_DT: f64 = 2.7;

/// Contour points used to average the ETDRK4 weights around each
/// removable singularity.
pub const CONTOUR_POINTS: usize = 32;

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("time step {0} exceeds the RK4 stability bound {RK4_MAX_DT}")]
    TimeStepTooLarge(f64),
    #[error("time step and horizon must be positive with T >= dt (dt = {dt}, T = {t_final})")]
    BadTimes { dt: f64, t_final: f64 },
    #[error("coefficients were precomputed for dt = {expected}, stepped with dt = {got}")]
    StaleCoefficients { expected: f64, got: f64 },
    #[error("solution became non-finite at t = {0} (instability)")]
    NonFinite(f64),
    #[error(transparent)]
    Operator(#[from] crate::operators::OperatorError),
    #[error(transparent)]
    Expr(#[from] crate::expr::ExprError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Rk4,
    Etdrk4,
}

pub struct EvolutionConfig {
    pub spec: OperatorSpec,
    pub forcing: Expr,
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    pub snapshot_times: Vec<f64>,
    /// Sobolev indices for which RED curves are recorded at snapshots.
    pub red_indices: Vec<f64>,
    /// Radius window for the RED slope fit; defaults to `[8, N/2]`.
    pub red_fit_window: Option<(f64, f64)>,
}

pub struct EvolutionOutput {
    pub snapshots: Vec<(f64, SpectralField)>,
    pub energy_series: Vec<(f64, f64)>,
    /// Per requested Sobolev index, RED curves at the snapshot times.
    pub red_series: Vec<(f64, Vec<(f64, RedCurve)>)>,
    /// OLS fit of the energy over the late-time window `[T/2, T]`.
    pub growth_fit: Option<LinearFit>,
}

/// Workspace shared by both steppers: forcing spectrum and the diagonal
/// linear part.
pub struct Stepper<'a> {
    cfg: &'a EvolutionConfig,
    forcing_hat: SpectralField,
    linear: Vec<Complex64>,
}

impl<'a> Stepper<'a> {
    pub fn new(cfg: &'a EvolutionConfig) -> Result<Self, EvolutionError> {
        let grid = cfg.spec.grid();
        let forcing_hat = dft(&cfg.forcing.sample(grid)?);
        let linear: Vec<Complex64> = grid
            .indices()
            .map(|(k1, k2)| Complex64::new(0.0, -(k2 as f64) / bracket(k1, k2)))
            .collect();
        Ok(Stepper {
            cfg,
            forcing_hat,
            linear,
        })
    }

    pub fn forcing_hat(&self) -> &SpectralField {
        &self.forcing_hat
    }

    /// Nonstiff part `g(t, u) = i r F(beta F^-1 u) - i f_hat exp(-i w0 t)`.
    fn nonlinear(&self, t: f64, u: &SpectralField) -> SpectralField {
        let spec = &self.cfg.spec;
        let grid = spec.grid();
        let mut phys = idft(u);
        for (v, b) in phys.values.iter_mut().zip(&spec.beta_samples().values) {
            *v *= b.re;
        }
        let coupled = dft(&phys);
        let phase = Complex64::from_polar(1.0, -spec.omega0() * t);
        let i = Complex64::new(0.0, 1.0);
        let mut out = SpectralField::zeros(grid);
        for slot in 0..grid.len() {
            out.coeffs[slot] =
                i * (spec.r() * coupled.coeffs[slot] - self.forcing_hat.coeffs[slot] * phase);
        }
        out
    }

    /// Full right-hand side `L u + g(t, u)`.
    pub fn rhs(&self, t: f64, u: &SpectralField) -> SpectralField {
        let mut out = self.nonlinear(t, u);
        for slot in 0..u.coeffs.len() {
            out.coeffs[slot] += self.linear[slot] * u.coeffs[slot];
        }
        out
    }

    /// Classical four-stage Runge-Kutta update.
    pub fn step_rk4(&self, t: f64, u: &SpectralField, dt: f64) -> SpectralField {
        let grid = u.grid;
        let k1 = self.rhs(t, u);
        let mut stage = SpectralField::zeros(grid);
        for s in 0..grid.len() {
            stage.coeffs[s] = u.coeffs[s] + 0.5 * dt * k1.coeffs[s];
        }
        let k2 = self.rhs(t + 0.5 * dt, &stage);
        for s in 0..grid.len() {
            stage.coeffs[s] = u.coeffs[s] + 0.5 * dt * k2.coeffs[s];
        }
        let k3 = self.rhs(t + 0.5 * dt, &stage);
        for s in 0..grid.len() {
            stage.coeffs[s] = u.coeffs[s] + dt * k3.coeffs[s];
        }
        let k4 = self.rhs(t + dt, &stage);
        let mut out = SpectralField::zeros(grid);
        for s in 0..grid.len() {
            out.coeffs[s] = u.coeffs[s]
                + dt / 6.0
                    * (k1.coeffs[s]
                        + 2.0 * k2.coeffs[s]
                        + 2.0 * k3.coeffs[s]
                        + k4.coeffs[s]);
        }
        out
    }

    /// One ETDRK4 stage sequence (Cox-Matthews tableau with
    /// contour-averaged weights).
    pub fn step_etdrk4(
        &self,
        t: f64,
        u: &SpectralField,
        dt: f64,
        coeffs: &EtdCoefficients,
    ) -> Result<SpectralField, EvolutionError> {
        if coeffs.dt != dt {
            return Err(EvolutionError::StaleCoefficients {
                expected: coeffs.dt,
                got: dt,
            });
        }
        let grid = u.grid;
        let n = grid.len();
        let g0 = self.nonlinear(t, u);
        let mut a = SpectralField::zeros(grid);
        for s in 0..n {
            a.coeffs[s] = coeffs.e_half[s] * u.coeffs[s] + coeffs.q[s] * g0.coeffs[s];
        }
        let ga = self.nonlinear(t + 0.5 * dt, &a);
        let mut b = SpectralField::zeros(grid);
        for s in 0..n {
            b.coeffs[s] = coeffs.e_half[s] * u.coeffs[s] + coeffs.q[s] * ga.coeffs[s];
        }
        let gb = self.nonlinear(t + 0.5 * dt, &b);
        let mut c = SpectralField::zeros(grid);
        for s in 0..n {
            c.coeffs[s] = coeffs.e_half[s] * a.coeffs[s]
                + coeffs.q[s] * (2.0 * gb.coeffs[s] - g0.coeffs[s]);
        }
        let gc = self.nonlinear(t + dt, &c);
        let mut out = SpectralField::zeros(grid);
        for s in 0..n {
            out.coeffs[s] = coeffs.e_full[s] * u.coeffs[s]
                + coeffs.f1[s] * g0.coeffs[s]
                + 2.0 * coeffs.f2[s] * (ga.coeffs[s] + gb.coeffs[s])
                + coeffs.f3[s] * gc.coeffs[s];
        }
        Ok(out)
    }
}

/// Per-wavenumber exponential integrator weights for a fixed `dt`.
pub struct EtdCoefficients {
    pub dt: f64,
    pub e_full: Vec<Complex64>,
    pub e_half: Vec<Complex64>,
    /// Half-step phi1 weight `dt/2 * phi1(z/2)`.
    pub q: Vec<Complex64>,
    pub f1: Vec<Complex64>,
    pub f2: Vec<Complex64>,
    pub f3: Vec<Complex64>,
}

/// Mean of `f` over a unit circle centered at `z`. For analytic `f` this
/// equals `f(z)` by the mean value property, but stays well-conditioned
/// at the removable singularities of the weight formulas.
fn contour_mean(z: Complex64, f: impl Fn(Complex64) -> Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for l in 0..CONTOUR_POINTS {
        let theta = 2.0 * std::f64::consts::PI * (l as f64 + 0.5) / CONTOUR_POINTS as f64;
        acc += f(z + Complex64::from_polar(1.0, theta));
    }
    acc / CONTOUR_POINTS as f64
}

/// `phi1(z) = (e^z - 1)/z` through the contour average.
pub fn phi1_contour(z: Complex64) -> Complex64 {
    contour_mean(z, |w| (w.exp() - 1.0) / w)
}

/// Precomputes the ETDRK4 weights for the diagonal part
/// `L(k) = -i <k>^-1 k2` and the given step.
pub fn precompute_etdrk4(cfg: &EvolutionConfig, dt: f64) -> EtdCoefficients {
    let grid = cfg.spec.grid();
    let mut e_full = Vec::with_capacity(grid.len());
    let mut e_half = Vec::with_capacity(grid.len());
    let mut q = Vec::with_capacity(grid.len());
    let mut f1 = Vec::with_capacity(grid.len());
    let mut f2 = Vec::with_capacity(grid.len());
    let mut f3 = Vec::with_capacity(grid.len());
    for (k1, k2) in grid.indices() {
        let z = Complex64::new(0.0, -(k2 as f64) / bracket(k1, k2)) * dt;
        e_full.push(z.exp());
        e_half.push((z / 2.0).exp());
        q.push(dt * contour_mean(z, |w| ((w / 2.0).exp() - 1.0) / w));
        f1.push(dt * contour_mean(z, |w| {
            (-4.0 - w + w.exp() * (4.0 - 3.0 * w + w * w)) / (w * w * w)
        }));
        f2.push(dt * contour_mean(z, |w| (2.0 + w + w.exp() * (-2.0 + w)) / (w * w * w)));
        f3.push(dt * contour_mean(z, |w| {
            (-4.0 - 3.0 * w - w * w + w.exp() * (4.0 - w)) / (w * w * w)
        }));
    }
    EtdCoefficients {
        dt,
        e_full,
        e_half,
        q,
        f1,
        f2,
        f3,
    }
}

/// Integrates from `u = 0` at `t = 0` to `T`, recording the energy each
/// step and snapshots (with RED diagnostics) at the requested times.
pub fn run(cfg: &EvolutionConfig) -> Result<EvolutionOutput, EvolutionError> {
    if cfg.dt <= 0.0 || cfg.t_final < cfg.dt {
        return Err(EvolutionError::BadTimes {
            dt: cfg.dt,
            t_final: cfg.t_final,
        });
    }
    if cfg.scheme == Scheme::Rk4 && cfg.dt > RK4_MAX_DT {
        return Err(EvolutionError::TimeStepTooLarge(cfg.dt));
    }
    let grid = cfg.spec.grid();
    let stepper = Stepper::new(cfg)?;
    let etd = match cfg.scheme {
        Scheme::Etdrk4 => Some(precompute_etdrk4(cfg, cfg.dt)),
        Scheme::Rk4 => None,
    };

    let n_steps = (cfg.t_final / cfg.dt).round().max(1.0) as usize;
    let snapshot_steps: Vec<usize> = cfg
        .snapshot_times
        .iter()
        .map(|t| ((t / cfg.dt).round() as usize).min(n_steps))
        .collect();

    let fit_window = cfg
        .red_fit_window
        .unwrap_or((2.0, grid.n() as f64 / 2.0));

    let mut u = SpectralField::zeros(grid);
    let mut energy_series = Vec::with_capacity(n_steps + 1);
    let mut snapshots = Vec::new();
    let mut red_series: Vec<(f64, Vec<(f64, RedCurve)>)> =
        cfg.red_indices.iter().map(|s| (*s, Vec::new())).collect();

    let record = |step: usize,
                      u: &SpectralField,
                      energy_series: &mut Vec<(f64, f64)>,
                      snapshots: &mut Vec<(f64, SpectralField)>,
                      red_series: &mut Vec<(f64, Vec<(f64, RedCurve)>)>|
     -> Result<(), EvolutionError> {
        let t = step as f64 * cfg.dt;
        let energy = sobolev_norm(u, 0.0).powi(2);
        if !energy.is_finite() {
            return Err(EvolutionError::NonFinite(t));
        }
        energy_series.push((t, energy));
        if snapshot_steps.contains(&step) {
            snapshots.push((t, u.clone()));
            for (s, curves) in red_series.iter_mut() {
                if let Ok(curve) = red(u, *s, fit_window) {
                    curves.push((t, curve));
                }
            }
        }
        Ok(())
    };

    record(0, &u, &mut energy_series, &mut snapshots, &mut red_series)?;
    for step in 1..=n_steps {
        let t = (step - 1) as f64 * cfg.dt;
        u = match cfg.scheme {
            Scheme::Rk4 => stepper.step_rk4(t, &u, cfg.dt),
            Scheme::Etdrk4 => stepper.step_etdrk4(t, &u, cfg.dt, etd.as_ref().unwrap())?,
        };
        record(step, &u, &mut energy_series, &mut snapshots, &mut red_series)?;
    }

    let half = cfg.t_final / 2.0;
    let (xs, ys): (Vec<f64>, Vec<f64>) = energy_series
        .iter()
        .filter(|(t, _)| *t >= half)
        .map(|(t, e)| (*t, *e))
        .unzip();
    let growth_fit = crate::grid::linear_fit(&xs, &ys);

    Ok(EvolutionOutput {
        snapshots,
        energy_series,
        red_series,
        growth_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::grid::{Grid, GridField};
    use num_complex::Complex64 as C;
    use rand::{Rng, SeedableRng};

    fn config(n: usize, r: f64, beta: &str, omega0: f64, forcing: &str) -> EvolutionConfig {
        let grid = Grid::new(n).unwrap();
        EvolutionConfig {
            spec: OperatorSpec::new(grid, r, parse(beta).unwrap(), omega0, 0.0).unwrap(),
            forcing: parse(forcing).unwrap(),
            dt: 0.1,
            t_final: 1.0,
            scheme: Scheme::Rk4,
            snapshot_times: vec![],
            red_indices: vec![],
            red_fit_window: None,
        }
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
    fn rhs_at_zero_state_is_minus_i_forcing() {
        let cfg = config(8, 0.5, "cos(x1)", 0.0, "sin(x1)*cos(2*x2)");
        let stepper = Stepper::new(&cfg).unwrap();
        let u = SpectralField::zeros(cfg.spec.grid());
        let out = stepper.rhs(0.0, &u);
        let i = C::new(0.0, 1.0);
        for slot in 0..u.coeffs.len() {
            let expect = -i * stepper.forcing_hat().coeffs[slot];
            assert!((out.coeffs[slot] - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn rhs_on_pure_mode_without_coupling() {
        let cfg = config(8, 0.0, "0", 0.0, "0");
        let stepper = Stepper::new(&cfg).unwrap();
        let mut u = SpectralField::zeros(cfg.spec.grid());
        *u.at_mut(0, 1) = C::new(1.0, 0.0);
        let out = stepper.rhs(0.3, &u);
        let expect = C::new(0.0, -1.0 / 2.0f64.sqrt());
        assert!((out.at(0, 1) - expect).norm() < 1e-13);
    }

    #[test]
    fn rhs_matches_dense_operator() {
        // rhs = -i A u - i f_hat e^{-i w0 t} with A assembled at
        // w0 = nu = 0.
        let grid = Grid::new(8).unwrap();
        let cfg = EvolutionConfig {
            spec: OperatorSpec::new(grid, 0.7, parse("cos(x1)+sin(x2)").unwrap(), 0.0, 0.0)
                .unwrap(),
            forcing: parse("0.5*exp(-2*(x1^2+x2^2))").unwrap(),
            dt: 0.1,
            t_final: 1.0,
            scheme: Scheme::Rk4,
            snapshot_times: vec![],
            red_indices: vec![],
            red_fit_window: None,
        };
        let stepper = Stepper::new(&cfg).unwrap();
        let a = cfg.spec.assemble_dense().unwrap();
        let u = random_spectrum(grid, 11);
        let out = stepper.rhs(0.0, &u);
        let au = a.apply(&u);
        let i = C::new(0.0, 1.0);
        for slot in 0..grid.len() {
            let expect = -i * (au.coeffs[slot] + stepper.forcing_hat().coeffs[slot]);
            assert!((out.coeffs[slot] - expect).norm() < 1e-10);
        }
    }

    #[test]
    fn rk4_keeps_stationary_mode_fixed() {
        // Zero forcing, zero potential: the k = (0,0) mode has zero
        // derivative and must not move.
        let cfg = config(8, 0.0, "0", 0.0, "0");
        let stepper = Stepper::new(&cfg).unwrap();
        let u = dft(&GridField::constant(cfg.spec.grid(), C::new(2.0, -1.0)));
        let next = stepper.step_rk4(0.0, &u, 0.5);
        for slot in 0..u.coeffs.len() {
            assert!((next.coeffs[slot] - u.coeffs[slot]).norm() < 1e-13);
        }
    }

    #[test]
    fn rk4_matches_exponential_to_fifth_order() {
        // Single-mode field is the scalar problem y' = lambda y with
        // lambda = -i/sqrt(2); one RK4 step equals exp(lambda dt) up to
        // the dt^5 Taylor remainder.
        let cfg = config(8, 0.0, "0", 0.0, "0");
        let stepper = Stepper::new(&cfg).unwrap();
        let lambda = C::new(0.0, -1.0 / 2.0f64.sqrt());
        for dt in [0.1, 0.05] {
            let mut u = SpectralField::zeros(cfg.spec.grid());
            *u.at_mut(0, 1) = C::new(1.0, 0.0);
            let next = stepper.step_rk4(0.0, &u, dt);
            let err = (next.at(0, 1) - (lambda * dt).exp()).norm();
            // |lambda dt|^5 / 5! with margin
            let bound = (dt / 2.0f64.sqrt()).powi(5) / 120.0 * 1.5;
            assert!(err <= bound, "dt = {dt}: err {err:e} bound {bound:e}");
        }
    }

    #[test]
    fn phi1_limits() {
        let one = phi1_contour(C::new(0.0, 0.0));
        assert!((one - C::new(1.0, 0.0)).norm() < 1e-12);
        let e = phi1_contour(C::new(1.0, 0.0));
        assert!((e - C::new(std::f64::consts::E - 1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn etd_weights_match_closed_forms_away_from_origin() {
        // Closed-form oracle for |z| > 0.5.
        let zs = [
            C::new(0.0, 0.9),
            C::new(0.0, -0.7),
            C::new(0.6, 0.6),
            C::new(-1.3, 0.4),
        ];
        for z in zs {
            let q = contour_mean(z, |w| ((w / 2.0).exp() - 1.0) / w);
            let q_exact = ((z / 2.0).exp() - 1.0) / z;
            assert!((q - q_exact).norm() < 1e-10, "z = {z}");
            let f1 = contour_mean(z, |w| {
                (-4.0 - w + w.exp() * (4.0 - 3.0 * w + w * w)) / (w * w * w)
            });
            let f1_exact = (-4.0 - z + z.exp() * (4.0 - 3.0 * z + z * z)) / (z * z * z);
            assert!((f1 - f1_exact).norm() < 1e-10, "z = {z}");
        }
    }

    #[test]
    fn etd_weights_at_origin_match_analytic_limits() {
        // phi-type limits at z = 0: q/dt -> 1/2, f1/dt -> 1/6,
        // f2/dt -> 1/6, f3/dt -> 1/6.
        let cfg = config(8, 0.0, "0", 0.0, "0");
        let dt = 0.37;
        let coeffs = precompute_etdrk4(&cfg, dt);
        let slot = cfg.spec.grid().slot(0, 0); // L = 0 mode
        assert!((coeffs.q[slot] / dt - C::new(0.5, 0.0)).norm() < 1e-12);
        assert!((coeffs.f1[slot] / dt - C::new(1.0 / 6.0, 0.0)).norm() < 1e-12);
        assert!((coeffs.f2[slot] / dt - C::new(1.0 / 6.0, 0.0)).norm() < 1e-12);
        assert!((coeffs.f3[slot] / dt - C::new(1.0 / 6.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn etdrk4_is_exact_on_the_linear_problem() {
        let cfg = config(8, 0.0, "0", 0.0, "0");
        let stepper = Stepper::new(&cfg).unwrap();
        let dt = 0.8;
        let coeffs = precompute_etdrk4(&cfg, dt);
        let mut u = SpectralField::zeros(cfg.spec.grid());
        *u.at_mut(0, 1) = C::new(1.0, 0.5);
        let next = stepper.step_etdrk4(0.0, &u, dt, &coeffs).unwrap();
        let expect = (C::new(0.0, -dt / 2.0f64.sqrt())).exp() * C::new(1.0, 0.5);
        assert!((next.at(0, 1) - expect).norm() < 1e-12);
    }

    #[test]
    fn stale_coefficients_are_rejected() {
        let cfg = config(8, 0.0, "0", 0.0, "0");
        let stepper = Stepper::new(&cfg).unwrap();
        let coeffs = precompute_etdrk4(&cfg, 0.1);
        let u = SpectralField::zeros(cfg.spec.grid());
        assert!(matches!(
            stepper.step_etdrk4(0.0, &u, 0.2, &coeffs),
            Err(EvolutionError::StaleCoefficients { .. })
        ));
    }

    #[test]
    fn schemes_agree_on_a_coupled_problem() {
        // Both schemes are fourth order; at dt = 0.5 their mutual
        // distance scales linearly with the (free) forcing amplitude,
        // chosen here so each sits in its asymptotic regime.
        let mut cfg = config(32, 2.0, "cos(x1)", 0.0, "0.01*exp(-2*(x1^2+x2^2))");
        cfg.dt = 0.5;
        cfg.t_final = 5.0;
        cfg.scheme = Scheme::Rk4;
        cfg.snapshot_times = vec![5.0];
        let out_rk4 = run(&cfg).unwrap();
        cfg.scheme = Scheme::Etdrk4;
        let out_etd = run(&cfg).unwrap();
        let a = &out_rk4.snapshots[0].1;
        let b = &out_etd.snapshots[0].1;
        let mut diff = SpectralField::zeros(cfg.spec.grid());
        for s in 0..a.coeffs.len() {
            diff.coeffs[s] = a.coeffs[s] - b.coeffs[s];
        }
        assert!(sobolev_norm(&diff, 0.0) <= 1e-3);
    }

    #[test]
    fn zero_forcing_stays_zero() {
        for scheme in [Scheme::Rk4, Scheme::Etdrk4] {
            let mut cfg = config(8, 0.5, "cos(x1)", 0.0, "0");
            cfg.scheme = scheme;
            cfg.t_final = 2.0;
            let out = run(&cfg).unwrap();
            assert!(out.energy_series.iter().all(|(_, e)| *e == 0.0));
        }
    }

    #[test]
    fn evolution_is_linear_in_the_forcing() {
        let mut cfg = config(16, 0.5, "cos(x1)", 0.3, "sin(x1)*cos(2*x2)");
        cfg.t_final = 1.0;
        cfg.snapshot_times = vec![1.0];
        let base = run(&cfg).unwrap();
        let mut scaled_cfg = config(16, 0.5, "cos(x1)", 0.3, "3*(sin(x1)*cos(2*x2))");
        scaled_cfg.t_final = 1.0;
        scaled_cfg.snapshot_times = vec![1.0];
        let scaled = run(&scaled_cfg).unwrap();
        let a = &base.snapshots[0].1;
        let b = &scaled.snapshots[0].1;
        for s in 0..a.coeffs.len() {
            let rel = (b.coeffs[s] - 3.0 * a.coeffs[s]).norm();
            assert!(rel <= 1e-10 * (1.0 + b.coeffs[s].norm()));
        }
    }

    #[test]
    fn observed_order_is_fourth() {
        // dt-halving study on a small version of the time-convergence
        // setup; the observed order of both schemes sits near 4.
        let make = |scheme: Scheme, dt: f64| {
            let mut cfg = config(
                16,
                2.0,
                "cos(x1)",
                0.1,
                "-5*exp(-3*((x1+0.9)^2+(x2+0.8)^2)+i*(2*x1+x2))",
            );
            cfg.scheme = scheme;
            cfg.dt = dt;
            cfg.t_final = 1.0;
            cfg.snapshot_times = vec![1.0];
            run(&cfg).unwrap().snapshots.remove(0).1
        };
        for scheme in [Scheme::Rk4, Scheme::Etdrk4] {
            let reference = make(scheme, 1.0 / 256.0);
            let errs: Vec<f64> = [0.1, 0.05, 0.025]
                .iter()
                .map(|&dt| {
                    let u = make(scheme, dt);
                    let mut diff = SpectralField::zeros(u.grid);
                    for s in 0..u.coeffs.len() {
                        diff.coeffs[s] = u.coeffs[s] - reference.coeffs[s];
                    }
                    sobolev_norm(&diff, 0.0)
                })
                .collect();
            for w in errs.windows(2) {
                let order = (w[0] / w[1]).log2();
                assert!(
                    (3.5..=4.5).contains(&order),
                    "{scheme:?}: observed order {order}"
                );
            }
        }
    }
}
