//! Gross-Pitaevskii energy and its minimization by normalized gradient flow.
//!
//! The energy is `‖∇φ‖² + ⟨W, φ²⟩ + 4πα‖φ‖₄⁴`; its Euler-Lagrange operator
//! is `-Δ + W + 8πα φ²`. The descent kernel in this module also serves the
//! Hartree solvers, with the nonlinearity switched off and a frozen
//! effective potential.

use std::f64::consts::PI;
use std::sync::Arc;

use thiserror::Error;

use crate::ext::ExtReal;
use crate::grid::{Grid, WaveFunction};
use crate::potentials::TrapPotential;

#[derive(Debug, Error, Clone)]
pub enum GpError {
    #[error("gradient flow hit the iteration cap (residual {})", .0.residual)]
    NotConverged(Box<GpResult>),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

#[derive(Clone, Debug)]
pub struct GpResult {
    pub energy: f64,
    pub minimizer: WaveFunction,
    pub multiplier: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct GpSettings {
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for GpSettings {
    fn default() -> Self {
        Self { tol: 1e-8, max_iterations: 4_000_000 }
    }
}

/// Energy value with a flag raised when `φ` has mass where `W = ∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GpEnergy {
    pub value: ExtReal,
    pub hits_infinite_trap: bool,
}

/// A potential sampled on grid nodes; blocked nodes are forced to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct NodePotential {
    pub values: Vec<f64>,
    pub blocked: Vec<bool>,
}

impl NodePotential {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n], blocked: vec![false; n] }
    }

    pub fn from_trap(grid: &Grid, trap: &TrapPotential) -> Self {
        let mut out = Self::zeros(grid.len());
        for k in 0..grid.len() {
            match trap.eval_radial(grid.radius(k)) {
                ExtReal::Finite(w) => out.values[k] = w,
                ExtReal::Infinite => out.blocked[k] = true,
            }
        }
        out
    }

    /// Add `scale · other`, blocking nodes where `other` is infinite.
    pub fn add_scaled(&mut self, other: &[ExtReal], scale: f64) {
        for (k, x) in other.iter().enumerate() {
            match x {
                ExtReal::Finite(x) => self.values[k] += scale * x,
                ExtReal::Infinite => self.blocked[k] = true,
            }
        }
    }

    pub fn active_count(&self) -> usize {
        self.blocked.iter().filter(|b| !**b).count()
    }
}

/// State-dependent part of the descent problem: an extra node potential
/// `P(φ)` in the Euler-Lagrange operator and its energy `Q(φ)`, with
/// `dQ/dφ_k = 2 V_k P_k(φ) φ_k`.
pub(crate) trait Nonlinearity {
    fn potential(&self, phi: &[f64], out: &mut [f64]);
    fn energy(&self, phi: &[f64]) -> f64;
}

/// `P = g φ²`, `Q = (g/2) Σ V φ⁴`.
pub(crate) struct Cubic<'a> {
    pub g: f64,
    pub volumes: &'a [f64],
}

impl Nonlinearity for Cubic<'_> {
    fn potential(&self, phi: &[f64], out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(phi) {
            *o = self.g * x * x;
        }
    }

    fn energy(&self, phi: &[f64]) -> f64 {
        if self.g == 0.0 {
            return 0.0;
        }
        0.5 * self.g * phi.iter().zip(self.volumes).map(|(x, v)| v * x.powi(4)).sum::<f64>()
    }
}

/// `E(φ) = ‖∇φ‖² + ⟨U, φ²⟩ + Q(φ)` on unblocked nodes.
pub(crate) fn descent_energy(grid: &Grid, u: &NodePotential, nl: &dyn Nonlinearity, phi: &[f64]) -> f64 {
    let mut e = grid.dirichlet_energy(phi);
    for (k, (&x, &vol)) in phi.iter().zip(grid.volumes()).enumerate() {
        if !u.blocked[k] {
            e += vol * x * x * u.values[k];
        }
    }
    e + nl.energy(phi)
}

/// Multiplier `λ = ⟨φ, Hφ⟩`, residual `‖Hφ - λφ‖_V`, the residual vector and
/// the nonlinear potential, with `H = -Δ + U + P(φ)` (zero on blocked nodes).
pub(crate) fn residual_of(
    grid: &Grid,
    u: &NodePotential,
    nl: &dyn Nonlinearity,
    phi: &[f64],
) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; phi.len()];
    nl.potential(phi, &mut p);
    let mut h = vec![0.0; phi.len()];
    grid.neg_laplacian(phi, &mut h);
    for k in 0..phi.len() {
        h[k] = if u.blocked[k] { 0.0 } else { h[k] + (u.values[k] + p[k]) * phi[k] };
    }
    let lambda = grid.inner(phi, &h) / grid.inner(phi, phi);
    for (r, x) in h.iter_mut().zip(phi) {
        *r -= lambda * x;
    }
    let res = grid.norm(&h);
    (lambda, res, h, p)
}

#[derive(Clone, Debug)]
pub(crate) struct DescentOutcome {
    pub phi: Vec<f64>,
    pub energy: f64,
    pub multiplier: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Normalized gradient flow `φ ← N(φ - τ(Hφ - λφ))` from `init`.
///
/// The step is `τ = 0.8 / max_k(D_k + U_k + P_k)` with `D` the diagonal of
/// `-Δ_h`. This keeps every diagonal coefficient of the update nonnegative
/// (so positive iterates stay positive) and the explicit scheme stable. The
/// step is halved whenever the energy would increase.
pub(crate) fn descend(
    grid: &Grid,
    u: &NodePotential,
    nl: &dyn Nonlinearity,
    init: &[f64],
    tol: f64,
    max_iterations: usize,
) -> Result<DescentOutcome, GpError> {
    let n = grid.len();
    let diag = grid.laplacian_diagonal();
    let mut phi: Vec<f64> = init
        .iter()
        .zip(&u.blocked)
        .map(|(&x, &b)| if b { 0.0 } else { x })
        .collect();
    if grid.normalize(&mut phi) == 0.0 {
        return Err(GpError::Precondition("initial guess vanishes on the active nodes".into()));
    }
    let mut energy = descent_energy(grid, u, nl, &phi);
    let mut trial = vec![0.0; n];
    let mut shrink = 1.0;
    let mut it = 0;
    loop {
        let (lambda, res, r, p) = residual_of(grid, u, nl, &phi);
        if res < tol || it == max_iterations {
            return Ok(DescentOutcome {
                phi,
                energy,
                multiplier: lambda,
                residual: res,
                iterations: it,
                converged: res < tol,
            });
        }
        let stiff = (0..n)
            .filter(|&k| !u.blocked[k])
            .map(|k| diag[k] + u.values[k] + p[k])
            .fold(f64::MIN_POSITIVE, f64::max);
        let mut tau = shrink * 0.8 / stiff;
        let mut accepted = false;
        for _ in 0..40 {
            for k in 0..n {
                trial[k] = phi[k] - tau * r[k];
            }
            grid.normalize(&mut trial);
            let e = descent_energy(grid, u, nl, &trial);
            if e <= energy + 1e-14 * energy.abs().max(1.0) {
                energy = e;
                accepted = true;
                break;
            }
            tau *= 0.5;
            shrink = (shrink * 0.5).max(1e-6);
        }
        if !accepted {
            return Ok(DescentOutcome { phi, energy, multiplier: lambda, residual: res, iterations: it, converged: false });
        }
        std::mem::swap(&mut phi, &mut trial);
        if phi.iter().any(|&x| x < 0.0) {
            return Err(GpError::Internal(format!("negative value in iterate {it}")));
        }
        it += 1;
    }
}

/// Nonlinear coupling of the Euler-Lagrange operator, `8πα`.
pub fn coupling(alpha: f64) -> f64 {
    8.0 * PI * alpha
}

/// Grid matched to the trap: radial for d = 2, 3, Cartesian in d = 1.
/// `nodes` is the radial node count or the Cartesian nodes per axis.
pub fn default_grid(dim: usize, trap: &TrapPotential, nodes: usize) -> Arc<Grid> {
    let extent = match trap {
        TrapPotential::HardWallBall { radius } => *radius,
        TrapPotential::Harmonic { stiffness } => 8.0 / stiffness.powf(0.25),
        _ => 8.0,
    };
    if dim == 1 {
        Grid::cartesian(1, nodes, extent)
    } else {
        Grid::radial(dim, nodes, extent)
    }
}

/// Normalized positive Gaussian `exp(-|x|²/2)` restricted to the finite region of `W`.
pub fn gaussian_guess(grid: &Arc<Grid>, trap: &TrapPotential) -> WaveFunction {
    let u = NodePotential::from_trap(grid, trap);
    let values = (0..grid.len())
        .map(|k| if u.blocked[k] { 0.0 } else { (-0.5 * grid.radius(k).powi(2)).exp() })
        .collect();
    WaveFunction::new(grid.clone(), values).normalized()
}

pub fn gp_energy(phi: &WaveFunction, trap: &TrapPotential, alpha: f64) -> GpEnergy {
    let grid = &phi.grid;
    let u = NodePotential::from_trap(grid, trap);
    let hits = phi.values.iter().zip(&u.blocked).any(|(x, b)| *b && *x != 0.0);
    if hits {
        return GpEnergy { value: ExtReal::Infinite, hits_infinite_trap: true };
    }
    let nl = Cubic { g: coupling(alpha), volumes: grid.volumes() };
    GpEnergy { value: ExtReal::Finite(descent_energy(grid, &u, &nl, &phi.values)), hits_infinite_trap: false }
}

/// `‖(-Δ + W + 8πα φ² - λ) φ‖₂` with `λ = ⟨φ, (-Δ + W + 8πα φ²) φ⟩`.
pub fn gp_residual(phi: &WaveFunction, trap: &TrapPotential, alpha: f64) -> f64 {
    let u = NodePotential::from_trap(&phi.grid, trap);
    let nl = Cubic { g: coupling(alpha), volumes: phi.grid.volumes() };
    residual_of(&phi.grid, &u, &nl, &phi.values).1
}

/// Gradient of the energy restricted to the unit sphere, as a `V`-weighted
/// vector field: the directional derivative along a tangent `η` is
/// `⟨gradient, η⟩_V`.
pub fn gp_gradient(phi: &WaveFunction, trap: &TrapPotential, alpha: f64) -> Vec<f64> {
    let u = NodePotential::from_trap(&phi.grid, trap);
    let nl = Cubic { g: coupling(alpha), volumes: phi.grid.volumes() };
    let (_, _, r, _) = residual_of(&phi.grid, &u, &nl, &phi.values);
    r.into_iter().map(|x| 2.0 * x).collect()
}

pub fn gp_minimize(
    trap: &TrapPotential,
    alpha: f64,
    grid: Arc<Grid>,
    settings: &GpSettings,
) -> Result<GpResult, GpError> {
    if !(alpha >= 0.0) {
        return Err(GpError::Precondition("alpha must be nonnegative".into()));
    }
    let init = gaussian_guess(&grid, trap);
    let u = NodePotential::from_trap(&grid, trap);
    let nl = Cubic { g: coupling(alpha), volumes: grid.volumes() };
    let out = descend(&grid, &u, &nl, &init.values, settings.tol, settings.max_iterations)?;
    let result = GpResult {
        energy: out.energy,
        minimizer: WaveFunction::new(grid, out.phi),
        multiplier: out.multiplier,
        residual: out.residual,
        iterations: out.iterations,
    };
    if out.converged {
        Ok(result)
    } else {
        Err(GpError::NotConverged(Box::new(result)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harmonic() -> TrapPotential {
        TrapPotential::harmonic(1.0).unwrap()
    }

    #[test]
    fn gaussian_is_nearly_an_eigenfunction() {
        let grid = Grid::radial(3, 256, 8.0);
        let phi = gaussian_guess(&grid, &harmonic());
        let e = gp_energy(&phi, &harmonic(), 0.0).value.to_f64();
        assert!((e - 3.0).abs() < 1e-3, "{e}");
        assert!(gp_residual(&phi, &harmonic(), 0.0) < 1e-2);
    }

    #[test]
    fn energy_is_affine_in_alpha() {
        let grid = Grid::cartesian(1, 101, 6.0);
        let phi = gaussian_guess(&grid, &harmonic());
        let quartic = grid.integral(&phi.values.iter().map(|x| x.powi(4)).collect::<Vec<_>>());
        let e0 = gp_energy(&phi, &harmonic(), 0.0).value.to_f64();
        let e1 = gp_energy(&phi, &harmonic(), 0.7).value.to_f64();
        assert!((e1 - e0 - 4.0 * PI * 0.7 * quartic).abs() < 1e-12);
    }

    #[test]
    fn oscillator_ground_states() {
        for (d, expected) in [(1usize, 1.0), (2, 2.0), (3, 3.0)] {
            let grid = default_grid(d, &harmonic(), if d == 1 { 255 } else { 128 });
            let res = gp_minimize(&harmonic(), 0.0, grid, &GpSettings::default()).unwrap();
            assert!((res.energy - expected).abs() < 2e-3, "d = {d}: {}", res.energy);
            assert!((res.multiplier - res.energy).abs() < 1e-8);
            assert!(res.minimizer.values.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn hard_wall_blocks_nodes() {
        let trap = TrapPotential::hard_wall(1.0).unwrap();
        let grid = Grid::cartesian(1, 63, 2.0);
        let res = gp_minimize(&trap, 0.0, grid.clone(), &GpSettings::default()).unwrap();
        // ground state of -d²/dx² on (-1, 1): (π/2)²
        let exact = (PI / 2.0).powi(2);
        assert!((res.energy - exact).abs() < 0.05 * exact, "{}", res.energy);
        for k in 0..grid.len() {
            if grid.radius(k) >= 1.0 {
                assert_eq!(res.minimizer.values[k], 0.0);
            }
        }
        let mut bad = res.minimizer.clone();
        bad.values[0] = 0.1;
        assert!(gp_energy(&bad, &trap, 0.0).hits_infinite_trap);
    }
}
