//! Ground product state energy: pair operator, coordinate descent on the
//! coupled Euler-Lagrange system, the symmetric ansatz, and a brute-force
//! two-particle oracle on the product grid.

use std::f64::consts::PI;
use std::sync::Arc;

use thiserror::Error;

use crate::ext::ExtReal;
use crate::gp::{self, Cubic, GpError, NodePotential, Nonlinearity};
use crate::grid::{Geometry, Grid, GridFunction, WaveFunction};
use crate::potentials::{RadialPairPotential, TrapPotential};
use crate::quad::{self, Improper};

#[derive(Debug, Error, Clone)]
pub enum HartreeError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("coordinate descent did not converge (residual {})", .0.stationarity_residual)]
    NotConverged(Box<HartreeResult>),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("two-body oracle did not converge after {iterations} iterations (residual {residual:e})")]
    OracleNotConverged { iterations: usize, residual: f64 },
}

impl From<GpError> for HartreeError {
    fn from(e: GpError) -> Self {
        match e {
            GpError::NotConverged(r) => HartreeError::Internal(format!("inner solve stalled at residual {}", r.residual)),
            GpError::Internal(m) => HartreeError::Internal(m),
            GpError::Precondition(m) => HartreeError::Precondition(m),
        }
    }
}

/// Discrete pair interaction `(Vσ)(x) = ∫ v(|x - y|) σ(y) dy` on a grid.
///
/// On Cartesian grids the kernel at a node separation is the average of `v`
/// over the cell around that separation (infinite when the separation lies in
/// the hard core), and the zero separation uses the average over a ball of
/// one cell volume when `v(0) = ∞` but `v` is locally integrable. On radial grids the
/// operator is diagonalized by the radial Fourier transform.
#[derive(Clone, Debug)]
pub struct PairOperator {
    grid: Arc<Grid>,
    kind: PairKind,
}

#[derive(Clone, Debug)]
enum PairKind {
    Zero,
    Cartesian { kernel: Vec<ExtReal>, base: Vec<i64>, centre: i64, width: usize },
    Radial { weights: Vec<f64>, transform: Vec<Vec<f64>> },
}

impl PairOperator {
    pub fn new(grid: Arc<Grid>, v: &RadialPairPotential) -> Result<Self, HartreeError> {
        if v.is_zero() {
            return Ok(Self { grid, kind: PairKind::Zero });
        }
        let kind = match *grid.geometry() {
            Geometry::Cartesian { dim, nodes_per_axis: n, .. } => {
                let h = grid.spacing();
                let width = 2 * n - 1;
                let count = width.pow(dim as u32);
                let singular_origin = !v.eval(0.0).is_finite() && v.hard_core_radius() == 0.0;
                let origin = cell_average_at_origin(v, dim, h);
                let kernel = (0..count)
                    .map(|idx| {
                        let mut rest = idx;
                        let offset: Vec<f64> = (0..dim)
                            .map(|_| {
                                let off = (rest % width) as f64 - (n - 1) as f64;
                                rest /= width;
                                off * h
                            })
                            .collect();
                        if singular_origin && offset.iter().all(|&x| x == 0.0) {
                            origin
                        } else {
                            cell_average(v, &offset, h)
                        }
                    })
                    .collect();
                let flat = |idx: &[i64]| idx.iter().rev().fold(0i64, |acc, &i| acc * width as i64 + i);
                let base = (0..grid.len())
                    .map(|k| flat(&grid.multi_index(k).into_iter().map(|i| i as i64).collect::<Vec<_>>()))
                    .collect();
                let centre = flat(&vec![n as i64 - 1; dim]);
                PairKind::Cartesian { kernel, base, centre, width }
            }
            Geometry::Radial { dim, radius, .. } => {
                if v.hard_core_radius() > 0.0 {
                    return Err(HartreeError::Precondition(
                        "hard-core pair potentials need a Cartesian grid".into(),
                    ));
                }
                let h = grid.spacing();
                let k_max = PI / h;
                let dk = PI / (4.0 * radius);
                let m = (k_max / dk).ceil() as usize;
                let ks: Vec<f64> = (0..m).map(|j| (j as f64 + 0.5) * dk).collect();
                let norm = match dim {
                    2 => 1.0 / (2.0 * PI),
                    _ => 1.0 / (2.0 * PI * PI),
                };
                let vhat = ks.iter().map(|&k| radial_transform(v, dim, k)).collect::<Result<Vec<_>, _>>()?;
                let weights = ks
                    .iter()
                    .zip(&vhat)
                    .map(|(&k, &vh)| norm * k.powi(dim as i32 - 1) * dk * vh)
                    .collect();
                let radii = grid.radii();
                let transform = ks
                    .iter()
                    .map(|&k| radii.iter().map(|&r| quad::radial_fourier_kernel(dim, k * r)).collect())
                    .collect();
                PairKind::Radial { weights, transform }
            }
        };
        Ok(Self { grid, kind })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Kernel value at an integer node offset (Cartesian grids only).
    pub fn offset_kernel(&self, delta: &[i64]) -> ExtReal {
        match &self.kind {
            PairKind::Zero => ExtReal::ZERO,
            PairKind::Cartesian { kernel, width, .. } => {
                let n = (*width as i64 + 1) / 2;
                let mut idx = 0usize;
                let mut stride = 1usize;
                for &d in delta {
                    idx += (d + n - 1) as usize * stride;
                    stride *= width;
                }
                kernel[idx]
            }
            PairKind::Radial { .. } => panic!("offset kernel requires a Cartesian grid"),
        }
    }

    fn kernel_between(&self, k: usize, l: usize) -> ExtReal {
        match &self.kind {
            PairKind::Cartesian { kernel, base, centre, .. } => kernel[(base[k] - base[l] + centre) as usize],
            _ => unreachable!(),
        }
    }

    /// `(Vσ)(x_k)` from cell masses `σ_l V_l`.
    pub fn apply_masses(&self, masses: &[f64]) -> Vec<ExtReal> {
        let n = self.grid.len();
        match &self.kind {
            PairKind::Zero => vec![ExtReal::ZERO; n],
            PairKind::Cartesian { .. } => (0..n)
                .map(|k| {
                    let mut acc = 0.0;
                    for (l, &m) in masses.iter().enumerate() {
                        if m == 0.0 {
                            continue;
                        }
                        match self.kernel_between(k, l) {
                            ExtReal::Finite(x) => acc += x * m,
                            ExtReal::Infinite => return ExtReal::Infinite,
                        }
                    }
                    ExtReal::Finite(acc)
                })
                .collect(),
            PairKind::Radial { weights, transform } => {
                let mut out = vec![0.0; n];
                for (w, row) in weights.iter().zip(transform) {
                    let s: f64 = row.iter().zip(masses).map(|(t, m)| t * m).sum();
                    for (o, t) in out.iter_mut().zip(row) {
                        *o += w * s * t;
                    }
                }
                out.into_iter().map(ExtReal::Finite).collect()
            }
        }
    }

    /// `⟨ρ, Vσ⟩` from cell masses.
    pub fn pair_masses(&self, rho: &[f64], sigma: &[f64]) -> ExtReal {
        match &self.kind {
            PairKind::Zero => ExtReal::ZERO,
            PairKind::Radial { weights, transform } => {
                let mut total = 0.0;
                for (w, row) in weights.iter().zip(transform) {
                    let a: f64 = row.iter().zip(rho).map(|(t, m)| t * m).sum();
                    let b: f64 = row.iter().zip(sigma).map(|(t, m)| t * m).sum();
                    total += w * a * b;
                }
                ExtReal::Finite(total)
            }
            PairKind::Cartesian { .. } => self
                .apply_masses(sigma)
                .iter()
                .zip(rho)
                .map(|(x, &m)| x.weighted(m))
                .sum(),
        }
    }
}

const SUBCELLS: usize = 6;

/// Mean of `v(|x|)` over the cube of side `h` centred at `centre`. Infinite
/// when the centre lies in the hard core; otherwise the mean is over the part
/// of the cube where `v` is finite. Exact piecewise quadrature in one
/// dimension, a midpoint product rule above.
fn cell_average(v: &RadialPairPotential, centre: &[f64], h: f64) -> ExtReal {
    let r0 = centre.iter().map(|x| x * x).sum::<f64>().sqrt();
    if v.eval(r0).is_infinite() {
        return ExtReal::Infinite;
    }
    let finite = |r: f64| v.finite_value(r);
    if centre.len() == 1 {
        let (a, b) = (centre[0] - 0.5 * h, centre[0] + 0.5 * h);
        let mut cuts: Vec<f64> = v.breakpoints().iter().flat_map(|&r| [r, -r]).collect();
        cuts.push(0.0);
        let core = v.hard_core_radius();
        cuts.extend([core, -core]);
        let value = quad::integrate(|x| finite(x.abs()).unwrap_or(0.0), a, b, &cuts, 2);
        let measure = quad::integrate(|x| if finite(x.abs()).is_some() { 1.0 } else { 0.0 }, a, b, &cuts, 1);
        return ExtReal::Finite(value / measure);
    }
    let dim = centre.len();
    let (mut total, mut count) = (0.0, 0usize);
    for idx in 0..SUBCELLS.pow(dim as u32) {
        let mut rest = idx;
        let mut r2 = 0.0;
        for c in centre {
            let j = rest % SUBCELLS;
            rest /= SUBCELLS;
            let x = c + h * ((j as f64 + 0.5) / SUBCELLS as f64 - 0.5);
            r2 += x * x;
        }
        if let Some(val) = finite(r2.sqrt()) {
            total += val;
            count += 1;
        }
    }
    ExtReal::Finite(total / count as f64)
}

/// Mean of `v` over the ball of volume `h^d` (zero-separation kernel entry).
fn cell_average_at_origin(v: &RadialPairPotential, dim: usize, h: f64) -> ExtReal {
    let value = v.eval(0.0);
    if value.is_finite() || v.hard_core_radius() > 0.0 {
        return value;
    }
    let radius = match dim {
        1 => 0.5 * h,
        2 => h / PI.sqrt(),
        _ => h * (3.0 / (4.0 * PI)).cbrt(),
    };
    let omega = quad::unit_sphere_area(dim);
    let f = |r: f64| omega * v.eval(r).to_f64() * r.powi(dim as i32 - 1);
    match quad::integrate_to_origin(f, radius, &v.breakpoints()) {
        Improper::Finite(x) => ExtReal::Finite(x / h.powi(dim as i32)),
        _ => ExtReal::Infinite,
    }
}

/// `v̂(k) = ω_d ∫ v(r) j_d(kr) r^{d-1} dr`.
fn radial_transform(v: &RadialPairPotential, dim: usize, k: f64) -> Result<f64, HartreeError> {
    let upper = v.effective_support();
    let omega = quad::unit_sphere_area(dim);
    let f = |r: f64| omega * v.eval(r).to_f64() * quad::radial_fourier_kernel(dim, k * r) * r.powi(dim as i32 - 1);
    let panels = ((k * upper / PI).ceil() as usize).max(1) + 2;
    if v.eval(0.0).is_finite() {
        return Ok(quad::integrate(f, 0.0, upper, &v.breakpoints(), panels));
    }
    let inner = 1e-3 * upper;
    let head = match quad::integrate_to_origin(f, inner, &[]) {
        Improper::Finite(x) => x,
        _ => return Err(HartreeError::Precondition("pair potential is not locally integrable".into())),
    };
    Ok(head + quad::integrate(f, inner, upper, &v.breakpoints(), panels))
}

/// `⟨ρ, Vσ⟩ = ∬ ρ(x) v(|x - y|) σ(y) dx dy` for densities on a common grid.
pub fn pair_term(rho: &GridFunction, sigma: &GridFunction, v: &RadialPairPotential) -> Result<ExtReal, HartreeError> {
    if !Arc::ptr_eq(&rho.grid, &sigma.grid) && rho.grid.geometry() != sigma.grid.geometry() {
        return Err(HartreeError::Precondition("densities live on different grids".into()));
    }
    let op = PairOperator::new(rho.grid.clone(), v)?;
    Ok(op.pair_masses(&rho.masses(), &sigma.masses()))
}

/// Factors `h_i` and multipliers `λ_i`.
#[derive(Clone, Debug)]
pub struct ProductState {
    pub factors: Vec<WaveFunction>,
    pub multipliers: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct HartreeResult {
    pub energy_per_particle: f64,
    pub state: ProductState,
    pub stationarity_residual: f64,
    pub symmetric: bool,
    pub sweeps: usize,
    /// Energy after each sweep (coordinate descent) or at the end (symmetric).
    pub energy_history: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct HartreeSettings {
    pub tol: f64,
    pub max_sweeps: usize,
    pub inner_max_iterations: usize,
    /// User-supplied initial factors; required for hard-core pair potentials.
    pub initial: Option<Vec<WaveFunction>>,
}

impl Default for HartreeSettings {
    fn default() -> Self {
        Self { tol: 1e-7, max_sweeps: 50, inner_max_iterations: 2_000_000, initial: None }
    }
}

fn one_body(grid: &Grid, trap: &TrapPotential, h: &[f64]) -> ExtReal {
    let u = NodePotential::from_trap(grid, trap);
    if h.iter().zip(&u.blocked).any(|(x, b)| *b && *x != 0.0) {
        return ExtReal::Infinite;
    }
    let w: f64 = (0..h.len()).filter(|&k| !u.blocked[k]).map(|k| grid.volumes()[k] * u.values[k] * h[k] * h[k]).sum();
    ExtReal::Finite(grid.dirichlet_energy(h) + w)
}

fn masses(grid: &Grid, h: &[f64]) -> Vec<f64> {
    h.iter().zip(grid.volumes()).map(|(x, v)| x * x * v).collect()
}

/// `(1/N)[Σ_i (‖∇h_i‖² + ⟨W, h_i²⟩) + Σ_{i<j} ⟨h_i², V h_j²⟩]`.
pub fn hartree_energy(state: &ProductState, trap: &TrapPotential, v: &RadialPairPotential) -> Result<ExtReal, HartreeError> {
    let grid = state.factors[0].grid.clone();
    let op = PairOperator::new(grid.clone(), v)?;
    Ok(energy_with(&op, &grid, trap, &state.factors.iter().map(|f| f.values.clone()).collect::<Vec<_>>()))
}

fn energy_with(op: &PairOperator, grid: &Grid, trap: &TrapPotential, factors: &[Vec<f64>]) -> ExtReal {
    let n = factors.len();
    let ms: Vec<Vec<f64>> = factors.iter().map(|h| masses(grid, h)).collect();
    let mut total: ExtReal = factors.iter().map(|h| one_body(grid, trap, h)).sum();
    for i in 0..n {
        for j in i + 1..n {
            total = total + op.pair_masses(&ms[i], &ms[j]);
        }
    }
    match total {
        ExtReal::Finite(x) => ExtReal::Finite(x / n as f64),
        inf => inf,
    }
}

/// Effective potential `W + Σ_{j≠i} V h_j²` seen by factor `i`.
fn effective_potential(op: &PairOperator, grid: &Grid, trap: &TrapPotential, factors: &[Vec<f64>], i: usize) -> NodePotential {
    let mut u = NodePotential::from_trap(grid, trap);
    let mut others = vec![0.0; grid.len()];
    for (j, h) in factors.iter().enumerate() {
        if j != i {
            for (o, m) in others.iter_mut().zip(masses(grid, h)) {
                *o += m;
            }
        }
    }
    if factors.len() > 1 {
        u.add_scaled(&op.apply_masses(&others), 1.0);
    }
    u
}

/// Per-factor multipliers `λ_i` and the largest residual
/// `‖-Δh_i + W h_i + h_i Σ_{j≠i} V h_j² - λ_i h_i‖`.
fn stationarity(op: &PairOperator, grid: &Grid, trap: &TrapPotential, factors: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let none = Cubic { g: 0.0, volumes: grid.volumes() };
    let mut lambdas = Vec::with_capacity(factors.len());
    let mut worst: f64 = 0.0;
    for i in 0..factors.len() {
        let u = effective_potential(op, grid, trap, factors, i);
        let (lambda, res, _, _) = gp::residual_of(grid, &u, &none, &factors[i]);
        lambdas.push(lambda);
        worst = worst.max(res);
    }
    (lambdas, worst)
}

/// Multipliers `λ_i = ‖∇h_i‖² + ⟨W, h_i²⟩ + Σ_{j≠i} ⟨h_i², V h_j²⟩`.
pub fn multipliers(state: &ProductState, trap: &TrapPotential, v: &RadialPairPotential) -> Result<Vec<ExtReal>, HartreeError> {
    let grid = state.factors[0].grid.clone();
    let op = PairOperator::new(grid.clone(), v)?;
    let ms: Vec<Vec<f64>> = state.factors.iter().map(|f| masses(&grid, &f.values)).collect();
    Ok((0..ms.len())
        .map(|i| {
            let mut total = one_body(&grid, trap, &state.factors[i].values);
            for j in 0..ms.len() {
                if j != i {
                    total = total + op.pair_masses(&ms[i], &ms[j]);
                }
            }
            total
        })
        .collect())
}

/// Smooth positive bump used to break the symmetry of the initial factors.
fn bump(grid: &Grid, i: usize, n: usize) -> Vec<f64> {
    let angle = 2.0 * PI * i as f64 / n as f64;
    let centre = 1.5 * angle.cos();
    (0..grid.len())
        .map(|k| {
            let p = grid.point(k);
            let x = if grid.is_radial() { p[0] - centre.abs() } else { p[0] - centre };
            let rest: f64 = p.iter().skip(1).map(|y| y * y).sum();
            1.0 + 0.2 * (-(x * x + rest)).exp()
        })
        .collect()
}

fn single_particle(grid: &Arc<Grid>, trap: &TrapPotential, settings: &HartreeSettings) -> Result<Vec<f64>, HartreeError> {
    let u = NodePotential::from_trap(grid, trap);
    let none = Cubic { g: 0.0, volumes: grid.volumes() };
    let init = gp::gaussian_guess(grid, trap);
    let out = gp::descend(grid, &u, &none, &init.values, 0.1 * settings.tol, settings.inner_max_iterations)?;
    Ok(out.phi)
}

/// Cyclic coordinate descent on the factors. Each step solves the linear
/// ground-state problem of `-Δ + W + Σ_{j≠i} V h_j²` for `h_i`.
pub fn hartree_minimize(
    n: usize,
    trap: &TrapPotential,
    v: &RadialPairPotential,
    grid: Arc<Grid>,
    settings: &HartreeSettings,
) -> Result<HartreeResult, HartreeError> {
    if n == 0 {
        return Err(HartreeError::Precondition("N must be positive".into()));
    }
    let op = PairOperator::new(grid.clone(), v)?;
    let mut factors: Vec<Vec<f64>> = match &settings.initial {
        Some(init) => {
            if init.len() != n {
                return Err(HartreeError::Precondition(format!("expected {n} initial factors")));
            }
            init.iter().map(|f| f.clone().normalized().values).collect()
        }
        None => {
            if v.hard_core_radius() > 0.0 && n > 1 {
                return Err(HartreeError::Precondition(
                    "hard-core pair potentials need user-supplied disjoint initial factors".into(),
                ));
            }
            let ground = single_particle(&grid, trap, settings)?;
            (0..n)
                .map(|i| {
                    let mut h: Vec<f64> =
                        if n == 1 { ground.clone() } else { ground.iter().zip(bump(&grid, i, n)).map(|(g, b)| g * b).collect() };
                    grid.normalize(&mut h);
                    h
                })
                .collect()
        }
    };
    let none = Cubic { g: 0.0, volumes: grid.volumes() };
    let mut history = Vec::new();
    let mut previous = energy_with(&op, &grid, trap, &factors);
    if previous.is_infinite() {
        return Err(HartreeError::Precondition("initial factors overlap inside the hard core".into()));
    }
    let finish = |factors: Vec<Vec<f64>>, history: Vec<f64>, sweeps: usize| {
        let (lambdas, residual) = stationarity(&op, &grid, trap, &factors);
        let energy = energy_with(&op, &grid, trap, &factors).to_f64();
        HartreeResult {
            energy_per_particle: energy,
            state: ProductState {
                factors: factors.into_iter().map(|h| WaveFunction::new(grid.clone(), h)).collect(),
                multipliers: lambdas,
            },
            stationarity_residual: residual,
            symmetric: false,
            sweeps,
            energy_history: history,
        }
    };
    for sweep in 0..settings.max_sweeps {
        let (_, residual) = stationarity(&op, &grid, trap, &factors);
        if residual < settings.tol {
            return Ok(finish(factors, history, sweep));
        }
        for i in 0..n {
            let u = effective_potential(&op, &grid, trap, &factors, i);
            let out = gp::descend(&grid, &u, &none, &factors[i], 0.1 * settings.tol, settings.inner_max_iterations)?;
            factors[i] = out.phi;
        }
        let energy = energy_with(&op, &grid, trap, &factors);
        let (e, p) = (energy.to_f64(), previous.to_f64());
        if !(e <= p + 1e-12 * p.abs().max(1.0)) {
            return Err(HartreeError::Internal(format!("energy increased from {p} to {e} in sweep {sweep}")));
        }
        history.push(e);
        previous = energy;
    }
    let result = finish(factors, history, settings.max_sweeps);
    if result.stationarity_residual < settings.tol {
        Ok(result)
    } else {
        Err(HartreeError::NotConverged(Box::new(result)))
    }
}

/// `P = (N-1) V h²`, `Q = ((N-1)/2) ⟨h², V h²⟩`.
struct MeanField<'a> {
    op: &'a PairOperator,
    volumes: &'a [f64],
    others: f64,
}

impl Nonlinearity for MeanField<'_> {
    fn potential(&self, phi: &[f64], out: &mut [f64]) {
        let m: Vec<f64> = phi.iter().zip(self.volumes).map(|(x, v)| x * x * v).collect();
        for (o, x) in out.iter_mut().zip(self.op.apply_masses(&m)) {
            *o = self.others * x.to_f64();
        }
    }

    fn energy(&self, phi: &[f64]) -> f64 {
        let m: Vec<f64> = phi.iter().zip(self.volumes).map(|(x, v)| x * x * v).collect();
        0.5 * self.others * self.op.pair_masses(&m, &m).to_f64()
    }
}

/// Minimize `‖∇h‖² + ⟨W, h²⟩ + ((N-1)/2)⟨h², V h²⟩` over a single factor.
pub fn symmetric_hartree(
    n: usize,
    trap: &TrapPotential,
    v: &RadialPairPotential,
    grid: Arc<Grid>,
    settings: &HartreeSettings,
) -> Result<HartreeResult, HartreeError> {
    if n == 0 {
        return Err(HartreeError::Precondition("N must be positive".into()));
    }
    if v.hard_core_radius() > 0.0 && n > 1 {
        return Err(HartreeError::Precondition("symmetric product states have infinite hard-core energy".into()));
    }
    let op = PairOperator::new(grid.clone(), v)?;
    let u = NodePotential::from_trap(&grid, trap);
    let nl = MeanField { op: &op, volumes: grid.volumes(), others: (n - 1) as f64 };
    let init = gp::gaussian_guess(&grid, trap);
    let out = gp::descend(&grid, &u, &nl, &init.values, settings.tol, settings.inner_max_iterations)?;
    let factors = vec![out.phi.clone(); n];
    let (lambdas, residual) = stationarity(&op, &grid, trap, &factors);
    let energy = energy_with(&op, &grid, trap, &factors).to_f64();
    let result = HartreeResult {
        energy_per_particle: energy,
        state: ProductState {
            factors: factors.into_iter().map(|h| WaveFunction::new(grid.clone(), h)).collect(),
            multipliers: lambdas,
        },
        stationarity_residual: residual,
        symmetric: true,
        sweeps: out.iterations,
        energy_history: vec![energy],
    };
    if out.converged {
        Ok(result)
    } else {
        Err(HartreeError::NotConverged(Box::new(result)))
    }
}

/// Ground state of `-Δ₂ + W(x₁) + W(x₂) + v(|x₁ - x₂|)` on the product of a
/// one-dimensional grid with itself.
#[derive(Clone, Debug)]
pub struct TwoBodyOracle {
    /// Ground-state energy per particle, `λ₀ / 2`.
    pub chi: f64,
    pub eigenvalue: f64,
    pub ground_state: GridFunction,
    pub iterations: usize,
    pub residual: f64,
}

const ORACLE_MAX_OUTER: usize = 200;
const ORACLE_TOL: f64 = 1e-10;

/// Inverse power iteration with conjugate-gradient inner solves.
pub fn two_body_oracle(trap: &TrapPotential, v: &RadialPairPotential, grid: &Arc<Grid>) -> Result<TwoBodyOracle, HartreeError> {
    let Geometry::Cartesian { dim: 1, nodes_per_axis: n, half_width } = *grid.geometry() else {
        return Err(HartreeError::Precondition("the two-body oracle needs a one-dimensional Cartesian grid".into()));
    };
    if n > 256 {
        return Err(HartreeError::Precondition("product grid limited to 256²".into()));
    }
    let op = PairOperator::new(grid.clone(), v)?;
    let product = Grid::cartesian(2, n, half_width);
    let size = product.len();
    let mut pot = vec![0.0; size];
    let mut blocked = vec![false; size];
    for k in 0..size {
        let idx = product.multi_index(k);
        let (i, j) = (idx[0], idx[1]);
        let total = trap.eval_radial(grid.radius(i)) + trap.eval_radial(grid.radius(j)) + op.offset_kernel(&[i as i64 - j as i64]);
        match total {
            ExtReal::Finite(x) => pot[k] = x,
            ExtReal::Infinite => blocked[k] = true,
        }
    }
    let shift = pot.iter().zip(&blocked).filter(|(_, b)| !**b).map(|(p, _)| *p).fold(0.0, f64::min) - 1.0;
    let apply = |x: &[f64], out: &mut [f64]| {
        product.neg_laplacian(x, out);
        for k in 0..size {
            out[k] = if blocked[k] { x[k] } else { out[k] + pot[k] * x[k] };
        }
    };
    let shifted = |x: &[f64], out: &mut [f64]| {
        apply(x, out);
        for k in 0..size {
            if !blocked[k] {
                out[k] -= shift * x[k];
            }
        }
    };
    let mut psi: Vec<f64> = (0..size)
        .map(|k| if blocked[k] { 0.0 } else { (-0.5 * (product.radius(k).powi(2))).exp() })
        .collect();
    normalize_flat(&mut psi);
    let mut hpsi = vec![0.0; size];
    let mut residual = f64::INFINITY;
    for it in 0..ORACLE_MAX_OUTER {
        apply(&psi, &mut hpsi);
        let lambda = dot(&psi, &hpsi);
        residual = hpsi.iter().zip(&psi).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
        if residual < ORACLE_TOL {
            let h2 = product.volumes()[0];
            let values = psi.iter().map(|x| x.abs() / h2.sqrt()).collect();
            return Ok(TwoBodyOracle {
                chi: 0.5 * lambda,
                eigenvalue: lambda,
                ground_state: GridFunction::new(product.clone(), values),
                iterations: it,
                residual,
            });
        }
        let mut next = conjugate_gradient(&shifted, &psi, &psi, 1e-13, 20 * size);
        for k in 0..size {
            if blocked[k] {
                next[k] = 0.0;
            }
        }
        normalize_flat(&mut next);
        psi = next;
    }
    Err(HartreeError::OracleNotConverged { iterations: ORACLE_MAX_OUTER, residual })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize_flat(x: &mut [f64]) {
    let n = dot(x, x).sqrt();
    x.iter_mut().for_each(|v| *v /= n);
}

fn conjugate_gradient(a: &dyn Fn(&[f64], &mut [f64]), b: &[f64], x0: &[f64], tol: f64, max_iter: usize) -> Vec<f64> {
    let n = b.len();
    let mut x = x0.to_vec();
    let mut ax = vec![0.0; n];
    a(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let stop = tol * tol * dot(b, b);
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        if rr <= stop {
            break;
        }
        a(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
    }
    x
}
