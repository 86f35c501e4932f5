//! Large-deviation rate functions: the Donsker-Varadhan functional, the
//! canonical and Hartree rates, the finite-time cumulant `Λ_β`, its Legendre
//! transform `J_β` and the mean-field variational value `χ⊗(β)`.
//!
//! Densities are nonnegative grid functions with unit integral. Test
//! functions are node values on the same grid. All time evolutions run on
//! Cartesian grids with a node at the origin.

use std::sync::Arc;

use thiserror::Error;

use crate::ext::ExtReal;
use crate::grid::{Geometry, Grid, GridFunction};
use crate::hartree::{HartreeError, PairOperator};
use crate::optim;
use crate::potentials::{RadialPairPotential, TrapPotential};

/// Densities are stored as values per unit volume.
pub type DensityOnGrid = GridFunction;
/// Bounded test functions, one value per node.
pub type TestFunction = GridFunction;

#[derive(Debug, Error, Clone)]
pub enum RateError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("{leak:.3e} of the mass left the grid; enlarge the grid")]
    EnlargeGrid { leak: f64 },
    #[error("rate evaluated to {value:.3e}; the supplied energy is not the minimum")]
    Negative { value: f64 },
    #[error(transparent)]
    Pair(#[from] HartreeError),
}

/// Largest accepted mass leak through the box walls during a cumulant run.
pub const LEAK_TOLERANCE: f64 = 1e-6;
/// Rates below this are reported as inconsistent.
pub const NEGATIVE_TOLERANCE: f64 = 1e-6;
/// Grids above this many nodes treat a cell holding more than half the mass
/// as a point mass.
pub const SPIKE_MIN_NODES: usize = 128;

#[derive(Clone, Copy, Debug)]
pub struct RateSettings {
    /// Box constraint `|f| ≤ bound` on test functions.
    pub bound: f64,
    /// Sup norm of the projected gradient (in cell masses) at which ascent stops.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for RateSettings {
    fn default() -> Self {
        Self { bound: 50.0, tol: 1e-9, max_iterations: 3000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CumulantValue {
    pub value: f64,
    /// Total fraction of mass lost through the walls.
    pub leak: f64,
    pub steps: usize,
}

#[derive(Clone, Debug)]
pub struct RateEvaluation {
    pub value: ExtReal,
    pub converged: bool,
    /// Whether the maximizing test function touches `±bound`.
    pub clamped: bool,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub maximizer: Option<Vec<f64>>,
    /// Mass lost through the walls under the tilt by the maximizer; above
    /// [`LEAK_TOLERANCE`] the box is too small for this density.
    pub leak: f64,
}

impl RateEvaluation {
    fn infinite() -> Self {
        Self { value: ExtReal::Infinite, converged: true, clamped: false, gradient_norm: 0.0, iterations: 0, maximizer: None, leak: 0.0 }
    }
}

fn check_density(mu: &DensityOnGrid) -> Result<(), RateError> {
    if mu.values.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(RateError::Precondition("density must be finite and nonnegative".into()));
    }
    let mass = mu.grid.integral(&mu.values);
    if (mass - 1.0).abs() > 1e-8 {
        return Err(RateError::Precondition(format!("density has total mass {mass}, expected 1")));
    }
    Ok(())
}

fn is_spike(mu: &DensityOnGrid) -> bool {
    mu.grid.len() > SPIKE_MIN_NODES && mu.masses().iter().any(|&m| m > 0.5)
}

/// `‖∇√ρ‖²` with the grid's Dirichlet form. Infinite for point masses and for
/// jumps of `√ρ` larger than `√h` into empty cells.
pub fn donsker_varadhan(mu: &DensityOnGrid) -> Result<ExtReal, RateError> {
    check_density(mu)?;
    if is_spike(mu) {
        return Ok(ExtReal::Infinite);
    }
    let root: Vec<f64> = mu.values.iter().map(|x| x.sqrt()).collect();
    let threshold = mu.grid.spacing().sqrt();
    for &(i, j) in mu.grid.edges() {
        let (a, b) = (root[i as usize], root[j as usize]);
        if (a == 0.0) != (b == 0.0) && (a - b).abs() > threshold {
            return Ok(ExtReal::Infinite);
        }
    }
    Ok(ExtReal::Finite(mu.grid.dirichlet_energy(&root)))
}

fn cartesian_shape(grid: &Grid) -> Result<(usize, usize, f64), RateError> {
    match *grid.geometry() {
        Geometry::Cartesian { dim, nodes_per_axis, half_width } => Ok((dim, nodes_per_axis, half_width)),
        Geometry::Radial { .. } => Err(RateError::Precondition("a Cartesian grid is required".into())),
    }
}

fn check_rate(value: ExtReal) -> Result<ExtReal, RateError> {
    match value {
        ExtReal::Finite(x) if x < -NEGATIVE_TOLERANCE => Err(RateError::Negative { value: x }),
        other => Ok(other),
    }
}

/// `I_N(μ) + ⟨𝔚, μ⟩ + ⟨𝔳, μ⟩ - N χ_N` for a density on the `dN`-dimensional
/// product grid; axes `p d .. (p+1) d` carry particle `p`.
pub fn canonical_rate(
    mu: &DensityOnGrid,
    trap: &TrapPotential,
    v: &RadialPairPotential,
    particles: usize,
    chi: f64,
) -> Result<ExtReal, RateError> {
    let (dim, n, half_width) = cartesian_shape(&mu.grid)?;
    if particles == 0 || dim % particles != 0 {
        return Err(RateError::Precondition(format!("{dim} axes cannot hold {particles} particles")));
    }
    let d = dim / particles;
    let single = Grid::cartesian(d, n, half_width);
    let op = PairOperator::new(single.clone(), v)?;
    let to_flat = |idx: &[usize]| idx.iter().rev().fold(0usize, |acc, &i| acc * n + i);
    let kinetic = donsker_varadhan(mu)?;
    let masses = mu.masses();
    let mut potential = ExtReal::ZERO;
    for (k, &m) in masses.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let idx = mu.grid.multi_index(k);
        let mut here = ExtReal::ZERO;
        for p in 0..particles {
            let xp = &idx[p * d..(p + 1) * d];
            here = here + trap.eval_radial(single.radius(to_flat(xp)));
            for q in p + 1..particles {
                let xq = &idx[q * d..(q + 1) * d];
                let delta: Vec<i64> = xp.iter().zip(xq).map(|(a, b)| *a as i64 - *b as i64).collect();
                here = here + op.offset_kernel(&delta);
            }
        }
        potential = potential + here.weighted(m);
    }
    check_rate(kinetic + potential + ExtReal::Finite(-(particles as f64) * chi))
}

/// `Σ_i I_1(μ_i) + Σ_i ⟨W, μ_i⟩ + Σ_{i<j} ⟨μ_i, V μ_j⟩ - N χ⊗`.
pub fn hartree_rate(
    mus: &[DensityOnGrid],
    trap: &TrapPotential,
    v: &RadialPairPotential,
    chi: f64,
) -> Result<ExtReal, RateError> {
    let Some(first) = mus.first() else {
        return Err(RateError::Precondition("at least one marginal is required".into()));
    };
    if mus.iter().any(|m| m.grid.geometry() != first.grid.geometry()) {
        return Err(RateError::Precondition("marginals live on different grids".into()));
    }
    let grid = first.grid.clone();
    let op = PairOperator::new(grid.clone(), v)?;
    let trap_values: Vec<ExtReal> = (0..grid.len()).map(|k| trap.eval_radial(grid.radius(k))).collect();
    let masses: Vec<Vec<f64>> = mus.iter().map(|m| m.masses()).collect();
    let mut total = ExtReal::ZERO;
    for (mu, m) in mus.iter().zip(&masses) {
        total = total + donsker_varadhan(mu)?;
        total = total + trap_values.iter().zip(m).map(|(w, &x)| w.weighted(x)).sum();
    }
    for i in 0..mus.len() {
        for j in i + 1..mus.len() {
            total = total + op.pair_masses(&masses[i], &masses[j]);
        }
    }
    check_rate(total + ExtReal::Finite(-(mus.len() as f64) * chi))
}

/// Strang-split evolution for `∂_t u = Δu + f u` started from a unit mass in
/// the origin cell. Half steps of diffusion use the lattice-normalized
/// Gaussian kernel of variance `Δt` per axis.
pub struct CumulantSolver {
    grid: Arc<Grid>,
    beta: f64,
    steps: usize,
    dt: f64,
    kernel: Vec<f64>,
    axes: usize,
    n: usize,
    origin: usize,
}

impl CumulantSolver {
    pub fn new(grid: &Arc<Grid>, beta: f64) -> Result<Self, RateError> {
        let (axes, n, _) = cartesian_shape(grid)?;
        if n % 2 == 0 {
            return Err(RateError::Precondition("an odd node count is needed for an origin node".into()));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(RateError::Precondition(format!("beta must be positive, got {beta}")));
        }
        let h = grid.spacing();
        let steps = ((beta / (h * h)).floor() as usize).max(1);
        let dt = beta / steps as f64;
        // half step: variance 2 · (dt/2) per axis
        let var = dt;
        let reach = ((42.0 * 2.0 * var).sqrt() / h).ceil() as usize + 1;
        let mut kernel: Vec<f64> = (0..=reach).map(|j| (-(j as f64 * h).powi(2) / (2.0 * var)).exp()).collect();
        let total = kernel[0] + 2.0 * kernel[1..].iter().sum::<f64>();
        kernel.iter_mut().for_each(|w| *w /= total);
        let origin = (0..axes).fold(0, |acc, _| acc * n + n / 2);
        Ok(Self { grid: grid.clone(), beta, steps, dt, kernel, axes, n, origin })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time_step(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Convolve along every axis; returns the mass removed by the walls
    /// relative to the input mass.
    fn diffuse(&self, u: &mut [f64], scratch: &mut [f64]) -> f64 {
        let before: f64 = u.iter().sum();
        let n = self.n;
        let reach = self.kernel.len() - 1;
        let mut stride = 1;
        for _ in 0..self.axes {
            scratch.iter_mut().for_each(|x| *x = 0.0);
            for start in 0..u.len() {
                let i = (start / stride) % n;
                if i != 0 {
                    continue;
                }
                for a in 0..n {
                    let ua = u[start + a * stride];
                    if ua == 0.0 {
                        continue;
                    }
                    let lo = a.saturating_sub(reach);
                    let hi = (a + reach).min(n - 1);
                    for b in lo..=hi {
                        scratch[start + b * stride] += self.kernel[a.abs_diff(b)] * ua;
                    }
                }
            }
            u.copy_from_slice(scratch);
            stride *= n;
        }
        let after: f64 = u.iter().sum();
        if before > 0.0 {
            (1.0 - after / before).max(0.0)
        } else {
            0.0
        }
    }

    fn weights(&self, f: &[f64]) -> Result<Vec<f64>, RateError> {
        if f.len() != self.grid.len() {
            return Err(RateError::Precondition("test function does not match the grid".into()));
        }
        if f.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(RateError::Precondition("test function must be bounded above".into()));
        }
        Ok(f.iter().map(|x| (self.dt * x).exp()).collect())
    }

    /// `Λ_β(f) = (1/β) log E_0 exp(∫_0^β f(B_s) ds)`.
    pub fn value(&self, f: &[f64]) -> Result<CumulantValue, RateError> {
        self.run(f, false).and_then(|(c, _)| checked(c))
    }

    /// `Λ_β(f)` and its gradient: the cell masses of the tilted mean
    /// occupation measure.
    pub fn value_and_gradient(&self, f: &[f64]) -> Result<(CumulantValue, Vec<f64>), RateError> {
        let (c, g) = self.unchecked_gradient(f)?;
        Ok((checked(c)?, g))
    }

    /// As [`CumulantSolver::value_and_gradient`] for the killed evolution,
    /// without the leak check.
    pub fn unchecked_gradient(&self, f: &[f64]) -> Result<(CumulantValue, Vec<f64>), RateError> {
        self.run(f, true).map(|(c, g)| (c, g.expect("gradient requested")))
    }

    fn run(&self, f: &[f64], gradient: bool) -> Result<(CumulantValue, Option<Vec<f64>>), RateError> {
        let e = self.weights(f)?;
        let len = self.grid.len();
        let mut u = vec![0.0; len];
        u[self.origin] = 1.0;
        let mut scratch = vec![0.0; len];
        let mut log_mass = 0.0;
        let mut leak = 0.0;
        let mut stored = if gradient { Vec::with_capacity(self.steps) } else { Vec::new() };
        for _ in 0..self.steps {
            leak += self.diffuse(&mut u, &mut scratch);
            if gradient {
                stored.push(u.clone());
            }
            u.iter_mut().zip(&e).for_each(|(x, w)| *x *= w);
            leak += self.diffuse(&mut u, &mut scratch);
            let s: f64 = u.iter().sum();
            if !(s > 0.0) {
                return Err(RateError::Precondition("all mass was killed; f is too negative".into()));
            }
            log_mass += s.ln();
            u.iter_mut().for_each(|x| *x /= s);
        }
        let value = CumulantValue { value: log_mass / self.beta, leak, steps: self.steps };
        if !gradient {
            return Ok((value, None));
        }
        let mut nu = vec![0.0; len];
        let mut w = vec![1.0; len];
        let mut term = vec![0.0; len];
        for p in stored.iter().rev() {
            self.diffuse(&mut w, &mut scratch);
            let mut total = 0.0;
            for k in 0..len {
                term[k] = w[k] * e[k] * p[k];
                total += term[k];
            }
            nu.iter_mut().zip(&term).for_each(|(a, t)| *a += t / total);
            w.iter_mut().zip(&e).for_each(|(x, ek)| *x *= ek);
            self.diffuse(&mut w, &mut scratch);
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
        }
        let m = self.steps as f64;
        nu.iter_mut().for_each(|x| *x /= m);
        Ok((value, Some(nu)))
    }
}

fn checked(c: CumulantValue) -> Result<CumulantValue, RateError> {
    if c.leak > LEAK_TOLERANCE {
        return Err(RateError::EnlargeGrid { leak: c.leak });
    }
    Ok(c)
}

/// `Λ_β(f)` for a test function on a Cartesian grid.
pub fn cumulant(f: &TestFunction, beta: f64) -> Result<CumulantValue, RateError> {
    CumulantSolver::new(&f.grid, beta)?.value(&f.values)
}

/// Diagonal preconditioner: ascent runs in `y_k = c_k f_k` with
/// `c_k = √(m_k + ε)`, which roughly equalizes the curvature of `Λ_β`.
fn preconditioner(masses: &[f64]) -> Vec<f64> {
    let top = masses.iter().copied().fold(0.0, f64::max);
    masses.iter().map(|m| (m + 1e-10 * top).sqrt()).collect()
}

fn legendre(solver: &CumulantSolver, mu: &DensityOnGrid, settings: &RateSettings, start: Vec<f64>) -> RateEvaluation {
    let masses = mu.masses();
    let c = preconditioner(&masses);
    let bounds: Vec<f64> = c.iter().map(|ck| settings.bound * ck).collect();
    let y0: Vec<f64> = start.iter().zip(&c).map(|(f, ck)| f * ck).collect();
    let mut failure = None;
    let out = optim::maximize_scaled(y0, &bounds, &c, settings.tol, settings.max_iterations, |y| {
        let f: Vec<f64> = y.iter().zip(&c).map(|(y, ck)| y / ck).collect();
        match solver.unchecked_gradient(&f) {
            Ok((lambda, nu)) => {
                let pairing: f64 = masses.iter().zip(&f).map(|(m, x)| m * x).sum();
                let grad = masses.iter().zip(&nu).zip(&c).map(|((m, n), ck)| (m - n) / ck).collect();
                (pairing - lambda.value, grad)
            }
            Err(e) => {
                failure.get_or_insert(e);
                (f64::NEG_INFINITY, vec![0.0; f.len()])
            }
        }
    });
    let f: Vec<f64> = out.x.iter().zip(&c).map(|(y, ck)| y / ck).collect();
    let leak = solver.run(&f, false).map_or(f64::INFINITY, |(c, _)| c.leak);
    RateEvaluation {
        value: ExtReal::Finite(out.value),
        leak,
        converged: out.converged && failure.is_none(),
        clamped: out.at_bound,
        gradient_norm: out.gradient_norm,
        iterations: out.iterations,
        maximizer: Some(f),
    }
}

/// `J_β(μ) = sup_f ⟨μ, f⟩ - Λ_β(f)` over `|f| ≤ bound`, by projected
/// L-BFGS ascent. The reported value is a lower bound; `converged` is false
/// when ascent stalls before the gradient tolerance.
pub fn j_beta(mu: &DensityOnGrid, beta: f64, settings: &RateSettings) -> Result<RateEvaluation, RateError> {
    check_density(mu)?;
    if is_spike(mu) {
        return Ok(RateEvaluation::infinite());
    }
    let solver = CumulantSolver::new(&mu.grid, beta)?;
    Ok(legendre(&solver, mu, settings, vec![0.0; mu.grid.len()]))
}

/// Minimal cell-mass distribution of `Σ V_k (ρ_k a_k + g ρ_k²)` with unit
/// mass, by water-filling `ρ_k = max(0, (c - a_k) / 2g)`.
struct WaterFill {
    density: Vec<f64>,
    value: f64,
}

fn water_fill(a: &[f64], volumes: &[f64], g: f64) -> WaterFill {
    let mut order: Vec<usize> = (0..a.len()).filter(|&k| a[k].is_finite()).collect();
    order.sort_by(|&i, &j| a[i].total_cmp(&a[j]));
    let (mut sv, mut sva) = (0.0, 0.0);
    let mut level = f64::INFINITY;
    for (pos, &k) in order.iter().enumerate() {
        sv += volumes[k];
        sva += volumes[k] * a[k];
        let c = (2.0 * g + sva) / sv;
        let next = order.get(pos + 1).map_or(f64::INFINITY, |&j| a[j]);
        if c <= next {
            level = c;
            break;
        }
    }
    let density: Vec<f64> = a.iter().map(|&x| if x.is_finite() { ((level - x) / (2.0 * g)).max(0.0) } else { 0.0 }).collect();
    let value = density.iter().zip(a).zip(volumes).filter(|((r, _), _)| **r > 0.0).map(|((r, x), v)| v * (r * x + g * r * r)).sum();
    WaterFill { density, value }
}

/// Mean-field free energy at finite `β`.
#[derive(Clone, Debug)]
pub struct MeanFieldValue {
    /// Dual value `sup_f m_g(f + W) - Λ_β(f)`.
    pub value: f64,
    /// `J_β(μ*) + ⟨W, μ*⟩ + g ‖φ*‖₄⁴` at the recovered density, when certified.
    pub primal: Option<f64>,
    pub gap: Option<f64>,
    pub density: DensityOnGrid,
    pub dual_maximizer: Vec<f64>,
    pub converged: bool,
    pub clamped: bool,
    pub iterations: usize,
}

/// `χ⊗(β) = inf_φ J_β(φ²) + ⟨W, φ²⟩ + g ‖φ‖₄⁴`, through the concave dual.
/// For `g = 0` the value is `-Λ_β(-W)` with minimizer the tilted occupation.
pub fn chi_otimes_beta(
    g: f64,
    trap: &TrapPotential,
    beta: f64,
    grid: &Arc<Grid>,
    settings: &RateSettings,
    certify: bool,
) -> Result<MeanFieldValue, RateError> {
    if !(g >= 0.0 && g.is_finite()) {
        return Err(RateError::Precondition(format!("coupling must be nonnegative, got {g}")));
    }
    let solver = CumulantSolver::new(grid, beta)?;
    let w: Vec<f64> = (0..grid.len()).map(|k| trap.eval_radial(grid.radius(k)).to_f64()).collect();
    let volumes = grid.volumes();
    let (value, masses, maximizer, converged, clamped, iterations) = if g == 0.0 {
        let f: Vec<f64> = w.iter().map(|x| -x).collect();
        let (lambda, nu) = solver.value_and_gradient(&f)?;
        (-lambda.value, nu, f, true, false, 0)
    } else {
        let start: Vec<f64> = w.iter().map(|x| (-x).clamp(-settings.bound, settings.bound)).collect();
        let mut failure = None;
        let out = optim::maximize_in_box(start, settings.bound, settings.tol, settings.max_iterations, |f| {
            let a: Vec<f64> = f.iter().zip(&w).map(|(x, y)| x + y).collect();
            let fill = water_fill(&a, volumes, g);
            match solver.unchecked_gradient(f) {
                Ok((lambda, nu)) => {
                    let grad = fill.density.iter().zip(volumes).zip(&nu).map(|((r, v), n)| r * v - n).collect();
                    (fill.value - lambda.value, grad)
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    (f64::NEG_INFINITY, vec![0.0; f.len()])
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        let a: Vec<f64> = out.x.iter().zip(&w).map(|(x, y)| x + y).collect();
        let fill = water_fill(&a, volumes, g);
        let masses = fill.density.iter().zip(volumes).map(|(r, v)| r * v).collect();
        (out.value, masses, out.x, out.converged, out.at_bound, out.iterations)
    };
    let density = GridFunction::new(grid.clone(), masses.iter().zip(volumes).map(|(m, v): (&f64, &f64)| m / v).collect());
    let (primal, gap) = if certify {
        let j = legendre(&solver, &density, settings, maximizer.clone());
        let p = j.value.to_f64() + energy_terms(&density, &w, g);
        (Some(p), Some(p - value))
    } else {
        (None, None)
    };
    Ok(MeanFieldValue { value, primal, gap, density, dual_maximizer: maximizer, converged, clamped, iterations })
}

fn energy_terms(mu: &DensityOnGrid, w: &[f64], g: f64) -> f64 {
    let v = mu.grid.volumes();
    mu.values.iter().zip(w).zip(v).map(|((r, x), vol)| if *r > 0.0 { vol * (r * x + g * r * r) } else { 0.0 }).sum()
}

/// `J_β(μ) + ⟨W, μ⟩ + g ‖√μ‖₄⁴ - χ⊗(β)`.
pub fn meanfield_rate(
    mu: &DensityOnGrid,
    trap: &TrapPotential,
    g: f64,
    beta: f64,
    chi: f64,
    settings: &RateSettings,
) -> Result<RateEvaluation, RateError> {
    let mut eval = j_beta(mu, beta, settings)?;
    if eval.value.is_infinite() {
        return Ok(eval);
    }
    let w: Vec<f64> = (0..mu.grid.len()).map(|k| trap.eval_radial(mu.grid.radius(k)).to_f64()).collect();
    let trap_term = energy_terms(mu, &w, g);
    let value = check_rate(eval.value + ExtReal::Finite(trap_term - chi))?;
    eval.value = value;
    Ok(eval)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn density(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> DensityOnGrid {
        let mut g = GridFunction::from_fn(grid.clone(), f);
        let mass = grid.integral(&g.values);
        g.values.iter_mut().for_each(|x| *x /= mass);
        g
    }

    #[test]
    fn gaussian_fisher_information() {
        let grid = Grid::cartesian(1, 801, 10.0);
        let mu = density(&grid, |x| (-x[0] * x[0]).exp());
        let value = donsker_varadhan(&mu).unwrap().to_f64();
        assert!((value - 0.5).abs() < 1e-3, "{value}");
    }

    #[test]
    fn point_mass_and_indicator_are_infinite() {
        let grid = Grid::cartesian(1, 201, 5.0);
        let mut spike = vec![0.0; 201];
        spike[100] = 1.0 / grid.spacing();
        assert!(donsker_varadhan(&GridFunction::new(grid.clone(), spike)).unwrap().is_infinite());
        let box_density = density(&grid, |x| if x[0].abs() < 1.0 { 1.0 } else { 0.0 });
        assert!(donsker_varadhan(&box_density).unwrap().is_infinite());
    }

    #[test]
    fn cumulant_of_constants_and_harmonic_well() {
        let wide = Grid::cartesian(1, 127, 9.0);
        let c = cumulant(&GridFunction::new(wide, vec![0.7; 127]), 1.0).unwrap();
        assert!((c.value - 0.7).abs() < 1e-6, "{c:?}");
        let well = GridFunction::from_fn(Grid::cartesian(1, 127, 6.0), |x| -x[0] * x[0]);
        let c = cumulant(&well, 8.0).unwrap();
        assert!((c.value + 1.0).abs() < 0.05, "{c:?}");
    }

    #[test]
    fn leak_is_reported() {
        let grid = Grid::cartesian(1, 31, 1.0);
        let err = cumulant(&GridFunction::new(grid, vec![0.0; 31]), 4.0).unwrap_err();
        assert!(matches!(err, RateError::EnlargeGrid { .. }));
    }

    #[test]
    fn occupation_gradient_matches_differences() {
        let grid = Grid::cartesian(1, 49, 6.0);
        let solver = CumulantSolver::new(&grid, 1.5).unwrap();
        let f: Vec<f64> = (0..49).map(|k| (0.3 * k as f64).sin() - grid.radius(k).powi(2)).collect();
        let (_, nu) = solver.value_and_gradient(&f).unwrap();
        assert!((nu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for k in [5, 20, 33] {
            let eps = 1e-5;
            let mut up = f.clone();
            up[k] += eps;
            let mut down = f.clone();
            down[k] -= eps;
            let fd = (solver.value(&up).unwrap().value - solver.value(&down).unwrap().value) / (2.0 * eps);
            assert!((fd - nu[k]).abs() < 1e-7, "{k}: {fd} vs {}", nu[k]);
        }
    }

    #[test]
    fn legendre_duality_at_tilted_occupation() {
        let grid = Grid::cartesian(1, 57, 7.0);
        let solver = CumulantSolver::new(&grid, 2.0).unwrap();
        let f: Vec<f64> = (0..57).map(|k| -0.5 * grid.radius(k).powi(2) + (0.4 * k as f64).cos()).collect();
        let (lambda, nu) = solver.value_and_gradient(&f).unwrap();
        let mu = GridFunction::new(grid.clone(), nu.iter().zip(grid.volumes()).map(|(m, v)| m / v).collect());
        let expected = nu.iter().zip(&f).map(|(m, x)| m * x).sum::<f64>() - lambda.value;
        let eval = j_beta(&mu, 2.0, &RateSettings::default()).unwrap();
        assert!((eval.value.to_f64() - expected).abs() < 1e-4, "{:?} vs {expected}", eval.value);
    }

    #[test]
    fn water_fill_conserves_mass() {
        let a = [3.0, 0.0, 1.0, f64::INFINITY, 0.5];
        let v = [0.5; 5];
        let fill = water_fill(&a, &v, 0.25);
        let mass: f64 = fill.density.iter().zip(v).map(|(r, v)| r * v).sum();
        assert!((mass - 1.0).abs() < 1e-12);
        assert_eq!(fill.density[3], 0.0);
        assert_eq!(fill.density[0], 0.0);
    }

    #[test]
    fn free_mean_field_value_is_near_ground_energy() {
        let grid = Grid::cartesian(1, 87, 7.0);
        let trap = TrapPotential::harmonic(1.0).unwrap();
        let out = chi_otimes_beta(0.0, &trap, 8.0, &grid, &RateSettings::default(), false).unwrap();
        assert!((out.value - 1.0).abs() < 0.1, "{}", out.value);
    }

    #[test]
    fn interacting_mean_field_has_small_gap() {
        let grid = Grid::cartesian(1, 61, 6.0);
        let trap = TrapPotential::harmonic(1.0).unwrap();
        let out = chi_otimes_beta(0.5, &trap, 2.0, &grid, &RateSettings::default(), true).unwrap();
        assert!(out.converged);
        assert!(out.gap.unwrap().abs() < 1e-4, "{:?}", out.gap);
        let rate = meanfield_rate(&out.density, &trap, 0.5, 2.0, out.value, &RateSettings::default()).unwrap();
        assert!(rate.value.to_f64().abs() < 1e-3);
    }
}
