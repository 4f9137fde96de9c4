//! Eigenvalue bookkeeping across a decreasing viscosity sweep: canonical
//! orderings, continuity matching into trajectories, symmetry pairing
//! under `lambda -> -conj(lambda)`, and per-mode radial energy reports.

use num_complex::Complex64;
use thiserror::Error;

use crate::eigen::{eig_arnoldi, ArnoldiOptions, EigenError, EigenSet};
use crate::grid::{red, GridError, RedCurve};
use crate::operators::{OperatorError, OperatorSpec};

/// Magnitudes closer than this are an ordering tie, resolved by phase.
pub const MAGNITUDE_TIE_TOL: f64 = 1e-12;

/// Real parts smaller than this count as zero for the sign partition.
pub const REAL_SIGN_TOL: f64 = 1e-12;

/// Default half-width of the near-imaginary-axis band.
pub const DEFAULT_AXIS_TAU: f64 = 5e-4;

/// Continuity gate for sweep matching: a nearest-neighbor match is
/// accepted only if its distance is at most this factor times the median
/// match distance at the same viscosity step. Larger jumps mean the
/// requested closest-m window admitted a different eigenvalue, which must
/// start its own trajectory instead of splicing onto the departed one.
pub const MATCH_GATE_FACTOR: f64 = 5.0;

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error("sweep broken: eigensolves failed at consecutive viscosities {0:e} and {1:e}")]
    SweepBroken(f64, f64),
    #[error("sweep requires at least one viscosity")]
    EmptySweep,
    #[error("viscosities must be strictly decreasing: {0:e} then {1:e}")]
    NotDecreasing(f64, f64),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Phase in `(-pi, pi]` (the `atan2` convention maps `-pi` to `pi`).
fn phase(z: Complex64) -> f64 {
    let a = z.im.atan2(z.re);
    if a <= -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        a
    }
}

fn magnitude_phase_cmp(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    let (ma, mb) = (a.norm(), b.norm());
    if (ma - mb).abs() <= MAGNITUDE_TIE_TOL {
        phase(*a).total_cmp(&phase(*b))
    } else {
        ma.total_cmp(&mb)
    }
}

/// Canonical ordering: magnitude ascending, phase ascending on ties,
/// then a stable partition with nonnegative real parts first. Real parts
/// within `REAL_SIGN_TOL` of zero count as nonnegative.
pub fn sort_magnitude_phase(lambdas: &mut [Complex64]) {
    lambdas.sort_by(magnitude_phase_cmp);
    let (mut nonneg, mut neg): (Vec<Complex64>, Vec<Complex64>) = (Vec::new(), Vec::new());
    for &l in lambdas.iter() {
        if l.re >= -REAL_SIGN_TOL {
            nonneg.push(l);
        } else {
            neg.push(l);
        }
    }
    for (dst, src) in lambdas.iter_mut().zip(nonneg.into_iter().chain(neg)) {
        *dst = src;
    }
}

/// Ordering for near-axis studies: the canonical sort followed by a
/// stable three-way partition on the real part against the band
/// half-width `tau` — inside the band `|Re| <= tau` first, then
/// `Re > tau`, then `Re < -tau`.
pub fn sort_realpart_threshold(lambdas: &mut [Complex64], tau: f64) {
    lambdas.sort_by(magnitude_phase_cmp);
    let mut groups: [Vec<Complex64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for &l in lambdas.iter() {
        if l.re.abs() <= tau {
            groups[0].push(l);
        } else if l.re > tau {
            groups[1].push(l);
        } else {
            groups[2].push(l);
        }
    }
    let ordered = groups.iter().flatten().copied();
    for (dst, src) in lambdas.iter_mut().zip(ordered) {
        *dst = src;
    }
}

/// Greedy globally-nearest matching: repeatedly pair the closest
/// remaining (previous, next) eigenvalues. Returns, per previous index,
/// the matched next index.
pub fn match_nearest(prev: &[Complex64], next: &[Complex64]) -> Vec<Option<usize>> {
    let mut assignment = vec![None; prev.len()];
    let mut prev_free: Vec<usize> = (0..prev.len()).collect();
    let mut next_free: Vec<usize> = (0..next.len()).collect();
    while !prev_free.is_empty() && !next_free.is_empty() {
        let mut best = (f64::INFINITY, 0usize, 0usize);
        for (a, &i) in prev_free.iter().enumerate() {
            for (b, &j) in next_free.iter().enumerate() {
                let d = (prev[i] - next[j]).norm();
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        let (_, a, b) = best;
        assignment[prev_free[a]] = Some(next_free[b]);
        prev_free.swap_remove(a);
        next_free.swap_remove(b);
    }
    assignment
}

#[derive(Debug, Clone, Copy)]
pub struct TrajectoryPoint {
    pub nu: f64,
    pub lambda: Complex64,
    pub residual: f64,
}

/// One eigenvalue followed through the sweep. Missing viscosities (gap
/// markers) are simply absent from `points`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub id: usize,
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn lambdas(&self) -> Vec<Complex64> {
        self.points.iter().map(|p| p.lambda).collect()
    }

    /// Largest step between consecutive recorded points, a smoothness
    /// diagnostic for the continuity matching.
    pub fn max_jump(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[0].lambda - w[1].lambda).norm())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    /// Strictly decreasing viscosities.
    pub nus: Vec<f64>,
    pub m: usize,
    pub opts: ArnoldiOptions,
}

pub struct SweepResult {
    pub trajectories: Vec<Trajectory>,
    /// Raw eigensets per successful viscosity, in sweep order.
    pub sets: Vec<EigenSet>,
    /// Viscosities whose eigensolve failed (isolated gaps).
    pub failed_nus: Vec<f64>,
}

/// Runs the Arnoldi solver for every viscosity in the plan and threads
/// the eigenvalues into trajectories by greedy nearest matching against
/// the last successful set. One failed viscosity leaves a gap; two in a
/// row abort the sweep.
pub fn sweep(base: &OperatorSpec, plan: &SweepPlan) -> Result<SweepResult, TrackerError> {
    if plan.nus.is_empty() {
        return Err(TrackerError::EmptySweep);
    }
    for w in plan.nus.windows(2) {
        if w[1] >= w[0] {
            return Err(TrackerError::NotDecreasing(w[0], w[1]));
        }
    }
    let mut trajectories: Vec<Trajectory> = Vec::new();
    let mut sets = Vec::new();
    let mut failed_nus = Vec::new();
    // Trajectory index per slot of the previous matched set.
    let mut tails: Vec<usize> = Vec::new();
    let mut tail_lambdas: Vec<Complex64> = Vec::new();
    let mut prev_failed: Option<f64> = None;

    for &nu in &plan.nus {
        let spec = base.with_nu(nu)?;
        let set = match eig_arnoldi(&spec, plan.m, &plan.opts) {
            Ok(set) => set,
            Err(EigenError::NotConverged { .. }) => {
                if let Some(bad) = prev_failed {
                    return Err(TrackerError::SweepBroken(bad, nu));
                }
                prev_failed = Some(nu);
                failed_nus.push(nu);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        prev_failed = None;

        let mut lambdas: Vec<Complex64> = set.pairs.iter().map(|p| p.lambda).collect();
        if trajectories.is_empty() {
            sort_magnitude_phase(&mut lambdas);
            // Re-associate sorted lambdas with their pairs.
            let mut order: Vec<usize> = Vec::with_capacity(lambdas.len());
            let mut used = vec![false; set.pairs.len()];
            for &l in &lambdas {
                let idx = set
                    .pairs
                    .iter()
                    .enumerate()
                    .find(|(i, p)| !used[*i] && (p.lambda - l).norm() == 0.0)
                    .map(|(i, _)| i)
                    .expect("sorted eigenvalue came from the set");
                used[idx] = true;
                order.push(idx);
            }
            for (tid, &idx) in order.iter().enumerate() {
                let p = &set.pairs[idx];
                trajectories.push(Trajectory {
                    id: tid,
                    points: vec![TrajectoryPoint {
                        nu,
                        lambda: p.lambda,
                        residual: p.residual,
                    }],
                });
                tails.push(tid);
                tail_lambdas.push(p.lambda);
            }
        } else {
            let new_lambdas: Vec<Complex64> = set.pairs.iter().map(|p| p.lambda).collect();
            // Match against linearly extrapolated trajectory positions:
            // close eigenvalue pairs that move by about their own separation
            // per step would otherwise swap identities at every viscosity.
            let preds: Vec<Complex64> = tails
                .iter()
                .map(|&tid| {
                    let pts = &trajectories[tid].points;
                    if pts.len() >= 2 {
                        let a = &pts[pts.len() - 2];
                        let b = &pts[pts.len() - 1];
                        let dn = b.nu - a.nu;
                        if dn != 0.0 {
                            b.lambda + (b.lambda - a.lambda) * ((nu - b.nu) / dn)
                        } else {
                            b.lambda
                        }
                    } else {
                        pts[pts.len() - 1].lambda
                    }
                })
                .collect();
            let assignment = match_nearest(&preds, &new_lambdas);
            // Gate out implausibly long matches (set churn, not motion):
            // anything beyond MATCH_GATE_FACTOR times the median prediction
            // error of the established trajectories. A trajectory with a
            // single point has no velocity yet, so its raw first step is
            // measured against the median step size instead.
            let median = |mut v: Vec<f64>| -> Option<f64> {
                v.sort_by(f64::total_cmp);
                v.get(v.len() / 2).copied()
            };
            let mature: Vec<bool> = tails
                .iter()
                .map(|&tid| trajectories[tid].points.len() >= 2)
                .collect();
            let med_pred = median(
                assignment
                    .iter()
                    .enumerate()
                    .filter(|(slot, _)| mature[*slot])
                    .filter_map(|(slot, maybe_j)| {
                        maybe_j.map(|j| (new_lambdas[j] - preds[slot]).norm())
                    })
                    .collect(),
            );
            let med_step = median(
                tails
                    .iter()
                    .filter_map(|&tid| {
                        let pts = &trajectories[tid].points;
                        (pts.len() >= 2).then(|| {
                            (pts[pts.len() - 1].lambda - pts[pts.len() - 2].lambda).norm()
                        })
                    })
                    .collect(),
            );
            let gate = |slot: usize| -> f64 {
                let scale = if mature[slot] {
                    med_pred
                } else {
                    match (med_step, med_pred) {
                        (Some(a), Some(b)) => Some(a.max(b)),
                        (a, None) => a,
                        (None, b) => b,
                    }
                };
                scale
                    .map(|s| MATCH_GATE_FACTOR * s.max(f64::EPSILON))
                    .unwrap_or(f64::INFINITY)
            };
            let mut matched = vec![false; new_lambdas.len()];
            let mut next_tails = Vec::new();
            let mut next_tail_lambdas = Vec::new();
            for (slot, maybe_j) in assignment.iter().enumerate() {
                let maybe_j = (*maybe_j)
                    .filter(|j| (new_lambdas[*j] - preds[slot]).norm() <= gate(slot));
                if let Some(j) = maybe_j.as_ref() {
                    let p = &set.pairs[*j];
                    let tid = tails[slot];
                    trajectories[tid].points.push(TrajectoryPoint {
                        nu,
                        lambda: p.lambda,
                        residual: p.residual,
                    });
                    matched[*j] = true;
                    next_tails.push(tid);
                    next_tail_lambdas.push(p.lambda);
                }
            }
            // Eigenvalues with no predecessor start fresh trajectories.
            for (j, p) in set.pairs.iter().enumerate() {
                if !matched[j] {
                    let tid = trajectories.len();
                    trajectories.push(Trajectory {
                        id: tid,
                        points: vec![TrajectoryPoint {
                            nu,
                            lambda: p.lambda,
                            residual: p.residual,
                        }],
                    });
                    next_tails.push(tid);
                    next_tail_lambdas.push(p.lambda);
                }
            }
            tails = next_tails;
            tail_lambdas = next_tail_lambdas;
        }
        sets.push(set);
    }
    if sets.is_empty() {
        // Every viscosity failed; with one entry that is a lone gap, with
        // more the consecutive-failure rule has already fired.
        let nu = plan.nus[0];
        return Err(TrackerError::SweepBroken(nu, nu));
    }
    Ok(SweepResult {
        trajectories,
        sets,
        failed_nus,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymmetryKind {
    /// Paired with a distinct eigenvalue near its reflection.
    Matched,
    /// Its own reflection (real part within tolerance of zero).
    SelfPaired,
    Unmatched,
}

#[derive(Debug, Clone, Copy)]
pub struct SymmetryEntry {
    pub lambda: Complex64,
    pub partner: Option<Complex64>,
    /// Distance from the reflection `-conj(lambda)` to the partner.
    pub distance: f64,
    pub kind: SymmetryKind,
}

/// Classifies a spectrum under the reflection `lambda -> -conj(lambda)`
/// (the symmetry of the operator when `beta(-x) = -beta(x)` fails to
/// hold is not assumed; this is a diagnostic, not an invariant).
pub fn symmetry_pairs(lambdas: &[Complex64], tol: f64) -> Vec<SymmetryEntry> {
    let n = lambdas.len();
    let mut kind = vec![None; n];
    let mut partner = vec![None; n];
    let mut dist = vec![f64::INFINITY; n];
    for i in 0..n {
        if kind[i].is_some() {
            continue;
        }
        let mirror = Complex64::new(-lambdas[i].re, lambdas[i].im);
        let self_dist = (lambdas[i] - mirror).norm();
        // Best unclaimed distinct candidate.
        let best = (0..n)
            .filter(|&j| j != i && kind[j].is_none())
            .map(|j| (j, (lambdas[j] - mirror).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((j, d)) if d <= tol && d <= self_dist => {
                kind[i] = Some(SymmetryKind::Matched);
                kind[j] = Some(SymmetryKind::Matched);
                partner[i] = Some(lambdas[j]);
                partner[j] = Some(lambdas[i]);
                dist[i] = d;
                dist[j] = d;
            }
            _ if self_dist <= tol => {
                kind[i] = Some(SymmetryKind::SelfPaired);
                partner[i] = Some(lambdas[i]);
                dist[i] = self_dist;
            }
            _ => {
                kind[i] = Some(SymmetryKind::Unmatched);
                dist[i] = best.map(|(_, d)| d).unwrap_or(self_dist);
            }
        }
    }
    (0..n)
        .map(|i| SymmetryEntry {
            lambda: lambdas[i],
            partner: partner[i],
            distance: dist[i],
            kind: kind[i].unwrap(),
        })
        .collect()
}

/// Radial energy curves of each eigenvector in a set, one per requested
/// Sobolev index. Modes whose spectrum leaves no positive energy in the
/// fit window are skipped for that index.
pub fn mode_red_report(
    set: &EigenSet,
    s_list: &[f64],
    fit_window: (f64, f64),
) -> Vec<(Complex64, Vec<RedCurve>)> {
    set.pairs
        .iter()
        .map(|p| {
            let curves = s_list
                .iter()
                .filter_map(|&s| red(&p.vector, s, fit_window).ok())
                .collect();
            (p.lambda, curves)
        })
        .collect()
}
