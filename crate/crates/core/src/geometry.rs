//! Energy-manifold geometry and characteristic flows on the cotangent
//! bundle of the 2-torus.
//!
//! The zero-energy set in the angle variables is
//! `sin(eta) = r beta(x)` with `xi = |xi| (cos eta, sin eta)`; it has two
//! sheets, `eta = arcsin(r beta)` and `eta = pi - arcsin(r beta)`,
//! defined wherever `|r beta| <= 1`. Two flow variants are provided, both
//! time-scaled by `|xi|` so the generator is homogeneous of degree one.

use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::operators::OperatorSpec;

/// Trajectories stop when `|xi|` falls below this (direction undefined).
pub const MIN_XI_NORM: f64 = 1e-8;

/// Spectral gradient modes below this relative weight are pruned.
pub const MODE_PRUNE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("|xi| fell below {MIN_XI_NORM:e} at t = {t} (flow direction undefined)")]
    ZeroXi { t: f64 },
    #[error("manifold resolution must be at least 2, got {0}")]
    BadResolution(usize),
    #[error("flow state became non-finite at t = {0}")]
    NonFinite(f64),
    #[error("time step and horizon must be positive with T >= dt (dt = {dt}, T = {t_final})")]
    BadTimes { dt: f64, t_final: f64 },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let mut y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        y = PI;
    }
    y
}

// ---------------------------------------------------------------------
// Energy manifold sheets
// ---------------------------------------------------------------------

/// One sample of the two-sheeted angle manifold over the torus.
#[derive(Debug, Clone, Copy)]
pub struct ManifoldSample {
    pub x1: f64,
    pub x2: f64,
    /// `(arcsin(r beta), pi - arcsin(r beta))`, both wrapped to
    /// `(-pi, pi]`; `None` where `|r beta| > 1`.
    pub eta: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Manifold {
    pub resolution: usize,
    pub samples: Vec<ManifoldSample>,
}

impl Manifold {
    /// Fraction of base points over which the sheets exist.
    pub fn coverage(&self) -> f64 {
        let covered = self.samples.iter().filter(|s| s.eta.is_some()).count();
        covered as f64 / self.samples.len() as f64
    }
}

/// Samples the sheets on a uniform `resolution x resolution` mesh of the
/// torus. The potential is evaluated exactly (not interpolated).
pub fn manifold_sheets(
    r: f64,
    beta: &Expr,
    resolution: usize,
) -> Result<Manifold, GeometryError> {
    if resolution < 2 {
        return Err(GeometryError::BadResolution(resolution));
    }
    let mut samples = Vec::with_capacity(resolution * resolution);
    for a in 0..resolution {
        let x1 = wrap_angle(2.0 * PI * a as f64 / resolution as f64);
        for b in 0..resolution {
            let x2 = wrap_angle(2.0 * PI * b as f64 / resolution as f64);
            let rb = r * beta.evaluate(x1, x2)?.re;
            let eta = if rb.abs() <= 1.0 {
                let first = rb.asin();
                Some((first, wrap_angle(PI - first)))
            } else {
                None
            };
            samples.push(ManifoldSample { x1, x2, eta });
        }
    }
    Ok(Manifold {
        resolution,
        samples,
    })
}

/// A point on the zero-energy sheet above `(x1, x2)`:
/// `xi = (cos eta, sin eta)` with `sin eta = r beta`. The sign picks the
/// sheet (`xi1 < 0` for `false`... `positive_xi1` selects the branch).
/// Returns `None` where the sheet does not exist.
pub fn point_on_energy_sheet(
    r: f64,
    beta: &Expr,
    x1: f64,
    x2: f64,
    positive_xi1: bool,
) -> Result<Option<PhasePoint>, GeometryError> {
    let rb = r * beta.evaluate(x1, x2)?.re;
    if rb.abs() > 1.0 {
        return Ok(None);
    }
    let xi1 = (1.0 - rb * rb).sqrt() * if positive_xi1 { 1.0 } else { -1.0 };
    Ok(Some(PhasePoint {
        x1,
        x2,
        xi1,
        xi2: rb,
    }))
}

// ---------------------------------------------------------------------
// Characteristic flows
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub x1: f64,
    pub x2: f64,
    pub xi1: f64,
    pub xi2: f64,
}

impl PhasePoint {
    pub fn xi_norm(&self) -> f64 {
        self.xi1.hypot(self.xi2)
    }

    /// Momentum direction `xi2 / |xi|`.
    pub fn xi2_direction(&self) -> f64 {
        self.xi2 / self.xi_norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowVariant {
    /// `dx = r |xi| grad(beta)`, `dxi = (xi1 xi2, -xi1^2) / |xi|^2`;
    /// conserves `|xi|`.
    PrintedSystem,
    /// `dx = (-xi1 xi2, xi1^2) / |xi|^2`, `dxi = r |xi| grad(beta)`;
    /// conserves `xi2/|xi| - r beta`, the energy of the sheets.
    Hamiltonian,
}

/// Right-hand side of either flow, with the potential gradient evaluated
/// off-grid through a pruned list of spectral modes.
#[derive(Debug, Clone)]
pub struct FlowField {
    pub r: f64,
    pub variant: FlowVariant,
    /// Modes `(k1, k2, beta_hat(k)/N^2)` with non-negligible weight.
    modes: Vec<(i64, i64, Complex64)>,
}

impl FlowField {
    pub fn new(spec: &OperatorSpec, variant: FlowVariant) -> Self {
        Self::from_parts(spec.r(), spec, variant)
    }

    fn from_parts(r: f64, spec: &OperatorSpec, variant: FlowVariant) -> Self {
        let grid = spec.grid();
        let scale = 1.0 / grid.len() as f64;
        let beta_hat = crate::grid::dft(spec.beta_samples());
        let peak = beta_hat
            .coeffs
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
            .max(1.0);
        let mut modes = Vec::new();
        for (slot, (k1, k2)) in grid.indices().enumerate() {
            let c = beta_hat.coeffs[slot];
            if c.norm() > MODE_PRUNE_TOL * peak {
                modes.push((k1, k2, c * scale));
            }
        }
        FlowField { r, variant, modes }
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    /// Potential value from the pruned spectral sum (valid off-grid).
    pub fn beta_at(&self, x1: f64, x2: f64) -> f64 {
        self.modes
            .iter()
            .map(|&(k1, k2, c)| {
                (c * Complex64::from_polar(1.0, k1 as f64 * x1 + k2 as f64 * x2)).re
            })
            .sum()
    }

    /// Gradient of the potential from the same spectral sum.
    pub fn grad_beta(&self, x1: f64, x2: f64) -> (f64, f64) {
        let mut g1 = 0.0;
        let mut g2 = 0.0;
        for &(k1, k2, c) in &self.modes {
            let e = Complex64::from_polar(1.0, k1 as f64 * x1 + k2 as f64 * x2);
            let ice = (Complex64::new(0.0, 1.0) * c * e).re;
            g1 += k1 as f64 * ice;
            g2 += k2 as f64 * ice;
        }
        (g1, g2)
    }

    /// Time derivative `(dx1, dx2, dxi1, dxi2)` at a phase point.
    pub fn derivative(&self, p: &PhasePoint, t: f64) -> Result<[f64; 4], GeometryError> {
        let norm = p.xi_norm();
        if norm < MIN_XI_NORM {
            return Err(GeometryError::ZeroXi { t });
        }
        let nsq = norm * norm;
        let (g1, g2) = self.grad_beta(p.x1, p.x2);
        Ok(match self.variant {
            FlowVariant::PrintedSystem => [
                self.r * norm * g1,
                self.r * norm * g2,
                p.xi1 * p.xi2 / nsq,
                -p.xi1 * p.xi1 / nsq,
            ],
            FlowVariant::Hamiltonian => [
                -p.xi1 * p.xi2 / nsq,
                p.xi1 * p.xi1 / nsq,
                self.r * norm * g1,
                self.r * norm * g2,
            ],
        })
    }
}

/// Fixed-step RK4 integration of a characteristic flow. Positions are
/// wrapped to `(-pi, pi]` after every step; states are recorded every
/// `stride` steps (and always at the end).
pub fn integrate_flow(
    field: &FlowField,
    start: PhasePoint,
    dt: f64,
    t_final: f64,
    stride: usize,
) -> Result<Vec<(f64, PhasePoint)>, GeometryError> {
    if dt <= 0.0 || t_final < dt {
        return Err(GeometryError::BadTimes { dt, t_final });
    }
    let stride = stride.max(1);
    let n_steps = (t_final / dt).round().max(1.0) as usize;
    let mut p = start;
    let mut path = vec![(0.0, p)];
    for step in 1..=n_steps {
        let t = (step - 1) as f64 * dt;
        let k1 = field.derivative(&p, t)?;
        let at = |q: &PhasePoint, k: &[f64; 4], h: f64| PhasePoint {
            x1: q.x1 + h * k[0],
            x2: q.x2 + h * k[1],
            xi1: q.xi1 + h * k[2],
            xi2: q.xi2 + h * k[3],
        };
        let k2 = field.derivative(&at(&p, &k1, 0.5 * dt), t + 0.5 * dt)?;
        let k3 = field.derivative(&at(&p, &k2, 0.5 * dt), t + 0.5 * dt)?;
        let k4 = field.derivative(&at(&p, &k3, dt), t + dt)?;
        p = PhasePoint {
            x1: wrap_angle(p.x1 + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])),
            x2: wrap_angle(p.x2 + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])),
            xi1: p.xi1 + dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
            xi2: p.xi2 + dt / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
        };
        let t_now = step as f64 * dt;
        if !(p.x1.is_finite() && p.x2.is_finite() && p.xi1.is_finite() && p.xi2.is_finite()) {
            return Err(GeometryError::NonFinite(t_now));
        }
        if p.xi_norm() < MIN_XI_NORM {
            return Err(GeometryError::ZeroXi { t: t_now });
        }
        if step % stride == 0 || step == n_steps {
            path.push((t_now, p));
        }
    }
    Ok(path)
}
