//! Zero-energy scattering equation, scattering length and Born coupling.
//!
//! The radial equation is `Δu = ½ v u` with the radial Laplacian of the
//! dimension. In d = 3, `u(r) = r·ψ(r)` turns it into `u'' = ½ v u` and the
//! exterior solution is `u = r - a`. In d = 2 the exterior solution is
//! `u ∝ log(r/a)`; the equation is integrated in `s = log r`, where it reads
//! `u_ss = ½ r² v u`.

use thiserror::Error;

use crate::ext::ExtReal;
use crate::potentials::RadialPairPotential;
use crate::quad::{self, Improper};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScatteringError {
    #[error("no admissible solution: u or u' lost positivity at r = {radius}")]
    NoAdmissibleSolution { radius: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("tail limit did not settle (spread {spread:e}); increase R_max")]
    IncreaseRmax { spread: f64 },
    #[error("R-dependence detected: a = {at_r} at R, {at_2r} at 2R")]
    RDependence { at_r: f64, at_2r: f64 },
    #[error("infinite Born length")]
    InfiniteBornLength,
    #[error("Born length quadrature is indeterminate")]
    IndeterminateBornLength,
    #[error("truncation sequence did not converge within {0} doublings")]
    TruncationNotConverged(usize),
}

/// Radial solution `u`, `u'` on a grid that is uniform between consecutive
/// breakpoints of the potential.
#[derive(Clone, Debug)]
pub struct ScatteringSolution {
    pub radii: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    /// `u'(R_max) = 1` after rescaling.
    pub normalized: bool,
    pub hard_core_radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScatteringReport {
    pub length: f64,
    pub born_length: ExtReal,
    pub dimension: usize,
    /// Spread of the tail extrapolants (d = 3) or of the 2R recomputation (d = 2).
    pub tail_estimate: f64,
    pub unit_sphere_area: f64,
    /// d = 2 only: the exterior solution had no logarithmic part.
    pub degenerate: bool,
}

/// Limit of `r - u/u'` with its extrapolation spread.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailLimit {
    pub length: f64,
    pub tail_estimate: f64,
}

pub const DEFAULT_STEPS: usize = 10_000;
const TAIL_NODES: usize = 4;
const TAIL_TOLERANCE: f64 = 1e-6;
const LOG_STEP: f64 = 1e-3;
const R_DEPENDENCE_TOLERANCE: f64 = 1e-4;
const TRUNCATION_TOLERANCE: f64 = 1e-4;
const TRUNCATION_BUDGET: usize = 12;

/// Outer radius used when none is given: ten times the range of `v`.
pub fn default_r_max(v: &RadialPairPotential) -> f64 {
    let range = v.effective_support().max(v.hard_core_radius());
    if range > 0.0 {
        10.0 * range
    } else {
        10.0
    }
}

/// Potential value evaluated strictly inside `[lo, hi]`, so that a jump at a
/// segment end is seen from the correct side.
fn inside(v: &RadialPairPotential, r: f64, lo: f64, hi: f64) -> f64 {
    let eps = 1e-12 * (hi - lo);
    v.eval(r.clamp(lo + eps, hi - eps)).to_f64()
}

/// Segment cut points between `start` and `end`.
fn cuts(v: &RadialPairPotential, start: f64, end: f64) -> Vec<f64> {
    let mut c = vec![start];
    let mut b: Vec<f64> = v.breakpoints().into_iter().filter(|&x| x > start && x < end).collect();
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.dedup();
    c.extend(b);
    c.push(end);
    c
}

/// One RK4 step for `y'' = q(t) y` with `y = (u, u')`.
fn rk4(q: impl Fn(f64) -> f64, t: f64, h: f64, y: (f64, f64)) -> (f64, f64) {
    let f = |t: f64, (u, du): (f64, f64)| (du, q(t) * u);
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, (y.0 + 0.5 * h * k1.0, y.1 + 0.5 * h * k1.1));
    let k3 = f(t + 0.5 * h, (y.0 + 0.5 * h * k2.0, y.1 + 0.5 * h * k2.1));
    let k4 = f(t + h, (y.0 + h * k3.0, y.1 + h * k3.1));
    (
        y.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        y.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

/// Integrate `u'' = ½ v u` in d = 3 on `[a, r_max]` with about `steps`
/// steps, then rescale so that `u'(r_max) = 1`.
pub fn solve_scattering_ode(
    v: &RadialPairPotential,
    r_max: f64,
    steps: usize,
) -> Result<ScatteringSolution, ScatteringError> {
    let a = v.hard_core_radius();
    if !(r_max > a) {
        return Err(ScatteringError::Precondition(format!(
            "R_max = {r_max} does not exceed the hard-core radius {a}"
        )));
    }
    if r_max < v.effective_support() {
        return Err(ScatteringError::Precondition(format!(
            "R_max = {r_max} lies inside the effective support {}",
            v.effective_support()
        )));
    }
    let cuts = cuts(v, a, r_max);
    let total = r_max - a;
    let mut radii = Vec::with_capacity(steps + cuts.len() + 2);
    let mut u = Vec::with_capacity(radii.capacity());
    let mut du = Vec::with_capacity(radii.capacity());
    if a > 0.0 {
        radii.push(0.0);
        u.push(0.0);
        du.push(0.0);
    }
    let mut y = (0.0, 1.0);
    radii.push(a);
    u.push(y.0);
    du.push(y.1);
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mut n = ((steps as f64 * (hi - lo) / total).round() as usize).max(2);
        n += n % 2;
        let h = (hi - lo) / n as f64;
        for k in 0..n {
            let t = lo + k as f64 * h;
            y = rk4(|r| 0.5 * inside(v, r, lo, hi), t, h, y);
            let r = if k + 1 == n { hi } else { t + h };
            if y.0 < 0.0 || y.1 <= 0.0 {
                return Err(ScatteringError::NoAdmissibleSolution { radius: r });
            }
            radii.push(r);
            u.push(y.0);
            du.push(y.1);
        }
    }
    let scale = 1.0 / y.1;
    u.iter_mut().for_each(|x| *x *= scale);
    du.iter_mut().for_each(|x| *x *= scale);
    Ok(ScatteringSolution { radii, u, du, normalized: true, hard_core_radius: a })
}

/// `lim (r - u/u')` by polynomial extrapolation in `1/r` over tail nodes
/// from the last 30% of the grid.
pub fn scattering_length_3d(sol: &ScatteringSolution) -> Result<TailLimit, ScatteringError> {
    if !sol.normalized {
        return Err(ScatteringError::Precondition("solution is not normalized".into()));
    }
    let r_max = *sol.radii.last().unwrap();
    let first = sol.radii.partition_point(|&r| r < 0.7 * r_max);
    let last = sol.radii.len() - 1;
    if last < first + TAIL_NODES {
        return Err(ScatteringError::Precondition("too few tail nodes".into()));
    }
    let idx: Vec<usize> = (0..TAIL_NODES)
        .map(|j| last - j * (last - first) / (TAIL_NODES - 1))
        .collect();
    let xs: Vec<f64> = idx.iter().map(|&k| 1.0 / sol.radii[k]).collect();
    let ys: Vec<f64> = idx.iter().map(|&k| sol.radii[k] - sol.u[k] / sol.du[k]).collect();
    let diag = quad::neville_to_zero(&xs, &ys);
    let best = diag[TAIL_NODES - 1];
    let spread = diag[1..].iter().map(|x| (x - best).abs()).fold(0.0, f64::max);
    if spread > TAIL_TOLERANCE * best.abs().max(1.0) {
        return Err(ScatteringError::IncreaseRmax { spread });
    }
    Ok(TailLimit { length: best, tail_estimate: spread })
}

/// Solution of the d = 2 problem in log-radius, normalized to `u(R) = 1`.
#[derive(Clone, Debug)]
pub struct LogRadialSolution {
    pub radii: Vec<f64>,
    pub u: Vec<f64>,
    /// `du/ds` with `s = log r`.
    pub du_ds: Vec<f64>,
}

fn solve_log_radial(v: &RadialPairPotential, r_outer: f64) -> Result<LogRadialSolution, ScatteringError> {
    let a = v.hard_core_radius();
    let (r0, mut y) = if a > 0.0 {
        (a, (0.0, 1.0))
    } else {
        let range = v.effective_support();
        let scale = if range > 0.0 { range.min(r_outer) } else { r_outer };
        (1e-8 * scale, (1.0, 0.0))
    };
    let cuts: Vec<f64> = cuts(v, r0, r_outer).into_iter().map(f64::ln).collect();
    let mut radii = vec![r0];
    let mut u = vec![y.0];
    let mut du_ds = vec![y.1];
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let n = ((hi - lo) / LOG_STEP).ceil().max(2.0) as usize;
        let h = (hi - lo) / n as f64;
        let (rlo, rhi) = (lo.exp(), hi.exp());
        let q = |s: f64| {
            let r = s.exp();
            0.5 * r * r * inside(v, r, rlo, rhi)
        };
        for k in 0..n {
            let t = lo + k as f64 * h;
            y = rk4(q, t, h, y);
            let r = if k + 1 == n { rhi } else { (t + h).exp() };
            if y.0 < 0.0 || y.1 < 0.0 {
                return Err(ScatteringError::NoAdmissibleSolution { radius: r });
            }
            radii.push(r);
            u.push(y.0);
            du_ds.push(y.1);
        }
    }
    let scale = 1.0 / y.0;
    u.iter_mut().for_each(|x| *x *= scale);
    du_ds.iter_mut().for_each(|x| *x *= scale);
    Ok(LogRadialSolution { radii, u, du_ds })
}

/// Least-squares fit `u = A log r + B` over nodes with `lo < r ≤ hi`.
fn fit_log_profile(sol: &LogRadialSolution, lo: f64, hi: f64) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = sol
        .radii
        .iter()
        .zip(&sol.u)
        .filter(|(r, _)| **r > lo && **r <= hi)
        .map(|(r, u)| (r.ln(), *u))
        .collect();
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let (mx, my) = (sx / n, sy / n);
    let (sxx, sxy) = pts
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + (p.0 - mx).powi(2), acc.1 + (p.0 - mx) * (p.1 - my)));
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn length_from_fit(slope: f64, intercept: f64) -> Result<(f64, bool), ScatteringError> {
    if slope.abs() <= 1e-12 * intercept.abs() {
        return Ok((0.0, true));
    }
    if slope < 0.0 {
        return Err(ScatteringError::NoAdmissibleSolution { radius: f64::NAN });
    }
    Ok(((-intercept / slope).exp(), false))
}

/// d = 2 scattering length of a compactly supported `v` at outer radius `r`.
fn length_2d_compact(v: &RadialPairPotential, r: f64) -> Result<(f64, f64, bool), ScatteringError> {
    let support = v.support_radius().unwrap_or(0.0).max(v.hard_core_radius());
    if !(r > support) {
        return Err(ScatteringError::Precondition(format!("R = {r} must exceed the support {support}")));
    }
    let sol = solve_log_radial(v, 2.0 * r)?;
    let (a1, b1) = fit_log_profile(&sol, support, r);
    let (a2, b2) = fit_log_profile(&sol, support, 2.0 * r);
    let (at_r, degenerate) = length_from_fit(a1, b1)?;
    let (at_2r, _) = length_from_fit(a2, b2)?;
    let diff = (at_r - at_2r).abs();
    if diff > R_DEPENDENCE_TOLERANCE * at_r.abs().max(f64::MIN_POSITIVE) && diff > 0.0 {
        return Err(ScatteringError::RDependence { at_r, at_2r });
    }
    Ok((at_r, diff, degenerate))
}

/// d = 2 scattering length and degeneracy flag. Potentials without compact
/// support are truncated at `2ⁿ·(effective support)` until successive
/// estimates agree.
pub fn scattering_length_2d(v: &RadialPairPotential, r: f64) -> Result<(TailLimit, bool), ScatteringError> {
    if v.support_radius().is_some() {
        let (length, tail, degenerate) = length_2d_compact(v, r)?;
        return Ok((TailLimit { length, tail_estimate: tail }, degenerate));
    }
    let base = v.effective_support();
    let mut previous: Option<f64> = None;
    for n in 0..TRUNCATION_BUDGET {
        let cut = base * 2f64.powi(n as i32);
        let truncated = v.truncated(cut);
        let (length, tail, degenerate) = length_2d_compact(&truncated, r.max(2.0 * cut))?;
        if let Some(p) = previous {
            let change = (length - p).abs();
            if change <= TRUNCATION_TOLERANCE * length.abs() || (length == 0.0 && p == 0.0) {
                return Ok((TailLimit { length, tail_estimate: tail.max(change) }, degenerate));
            }
        }
        previous = Some(length);
    }
    Err(ScatteringError::TruncationNotConverged(TRUNCATION_BUDGET))
}

/// `ã(v) = (1/8π) ∫_{R^d} v(|y|) dy`.
pub fn born_length(v: &RadialPairPotential, d: usize) -> Result<f64, ScatteringError> {
    if v.hard_core_radius() > 0.0 {
        return Err(ScatteringError::InfiniteBornLength);
    }
    let upper = v.effective_support();
    if upper == 0.0 || v.is_zero() {
        return Ok(0.0);
    }
    let omega = quad::unit_sphere_area(d);
    let f = |r: f64| match v.eval(r) {
        ExtReal::Finite(x) => omega * x * r.powi(d as i32 - 1),
        ExtReal::Infinite => f64::INFINITY,
    };
    if v.eval(0.0).is_finite() {
        return Ok(quad::integrate(f, 0.0, upper, &v.breakpoints(), 16) / (8.0 * std::f64::consts::PI));
    }
    match quad::integrate_to_origin(f, upper, &v.breakpoints()) {
        Improper::Finite(x) => Ok(x / (8.0 * std::f64::consts::PI)),
        Improper::Infinite => Err(ScatteringError::InfiniteBornLength),
        Improper::Indeterminate { .. } => Err(ScatteringError::IndeterminateBornLength),
    }
}

/// `4π ∫ v(r) u(r) r dr` over the solution grid (composite Simpson on each
/// segment). Equals `8π a(v)` for soft-core potentials.
pub fn identity_integral(v: &RadialPairPotential, sol: &ScatteringSolution) -> f64 {
    let r = &sol.radii;
    let mut total = 0.0;
    let mut start = 0;
    let breaks = v.breakpoints();
    let is_cut = |x: f64| breaks.iter().any(|b| (b - x).abs() <= 1e-12 * b.abs().max(1.0));
    for end in 1..r.len() {
        if end + 1 != r.len() && !is_cut(r[end]) {
            continue;
        }
        let (lo, hi) = (r[start], r[end]);
        let g = |k: usize| inside(v, r[k], lo, hi) * sol.u[k] * r[k];
        let n = end - start;
        let h = (hi - lo) / n as f64;
        if n % 2 == 0 {
            let mut s = g(start) + g(end);
            for k in 1..n {
                s += if k % 2 == 1 { 4.0 } else { 2.0 } * g(start + k);
            }
            total += s * h / 3.0;
        } else {
            total += (start..end).map(|k| 0.5 * h * (g(k) + g(k + 1))).sum::<f64>();
        }
        start = end;
    }
    4.0 * std::f64::consts::PI * total
}

/// Scattering length, Born length and diagnostics with default resolution.
pub fn scattering_report(v: &RadialPairPotential, d: usize) -> Result<ScatteringReport, ScatteringError> {
    let r_max = default_r_max(v);
    let (tail, degenerate) = match d {
        3 => (scattering_length_3d(&solve_scattering_ode(v, r_max, DEFAULT_STEPS)?)?, false),
        2 => scattering_length_2d(v, r_max)?,
        _ => return Err(ScatteringError::Precondition(format!("dimension {d} not in {{2, 3}}"))),
    };
    let born_length = match born_length(v, d) {
        Ok(x) => ExtReal::Finite(x),
        Err(ScatteringError::InfiniteBornLength) => ExtReal::Infinite,
        Err(e) => return Err(e),
    };
    Ok(ScatteringReport {
        length: tail.length,
        born_length,
        dimension: d,
        tail_estimate: tail.tail_estimate,
        unit_sphere_area: quad::unit_sphere_area(d),
        degenerate,
    })
}
