//! Brownian paths with generator `-Δ`, path Hamiltonians, occupation
//! measures and importance-sampling free energies.
//!
//! Replica `r` of a run with seed `s` draws from a ChaCha8 stream seeded by
//! `s` with stream number `r`. Replicas are evaluated in parallel and reduced
//! sequentially in replica order, so results do not depend on the number of
//! worker threads.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::ext::ExtReal;
use crate::grid::{Geometry, Grid, GridFunction};
use crate::potentials::{distance, RadialPairPotential, TrapPotential};

/// Increment variance per coordinate and unit time for the generator `-Δ`.
pub const INCREMENT_VARIANCE_RATE: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BmError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("all {replicas} replicas were rejected; try a smaller beta or hard-core radius")]
    ZeroAcceptance { replicas: usize },
}

/// Draws start points from a nonnegative density on a Cartesian grid: a cell
/// is picked with probability proportional to its mass, then the point is
/// spread uniformly over the cell.
#[derive(Clone, Debug)]
pub struct StartSampler {
    grid: Arc<Grid>,
    cdf: Vec<f64>,
}

impl StartSampler {
    pub fn new(density: &GridFunction) -> Result<Self, BmError> {
        if density.grid.is_radial() {
            return Err(BmError::Precondition("start densities need a Cartesian grid".into()));
        }
        if density.values.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(BmError::Precondition("start density must be nonnegative and finite".into()));
        }
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = density
            .masses()
            .into_iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect();
        if !(acc > 0.0) {
            return Err(BmError::Precondition("start density has zero mass".into()));
        }
        cdf.iter_mut().for_each(|c| *c /= acc);
        Ok(Self { grid: density.grid.clone(), cdf })
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let u: f64 = rng.gen();
        let k = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
        let h = self.grid.spacing();
        for (o, c) in out.iter_mut().zip(self.grid.point(k)) {
            *o = c + h * (rng.gen::<f64>() - 0.5);
        }
    }
}

#[derive(Clone, Debug)]
pub enum StartMode {
    Origin,
    /// One sampler on the `dN`-dimensional configuration space.
    Joint(StartSampler),
    /// One sampler per particle on `R^d`.
    Independent(Vec<StartSampler>),
}

/// Shape of a path ensemble.
#[derive(Clone, Debug)]
pub struct PathSpec {
    pub particles: usize,
    pub dim: usize,
    pub beta: f64,
    pub steps: usize,
    pub start: StartMode,
}

impl PathSpec {
    pub fn new(particles: usize, dim: usize, beta: f64, steps: usize) -> Self {
        Self { particles, dim, beta, steps, start: StartMode::Origin }
    }

    pub fn with_start(mut self, start: StartMode) -> Self {
        self.start = start;
        self
    }

    pub fn validate(&self) -> Result<(), BmError> {
        if self.particles == 0 || !(1..=3).contains(&self.dim) {
            return Err(BmError::Precondition("need N ≥ 1 and d ∈ {1, 2, 3}".into()));
        }
        if self.steps < 16 || !(self.beta > 0.0) {
            return Err(BmError::Precondition("need M ≥ 16 and beta > 0".into()));
        }
        match &self.start {
            StartMode::Origin => Ok(()),
            StartMode::Joint(s) if s.dim() == self.dim * self.particles => Ok(()),
            StartMode::Independent(v) if v.len() == self.particles && v.iter().all(|s| s.dim() == self.dim) => Ok(()),
            _ => Err(BmError::Precondition("start sampler dimensions do not match N and d".into())),
        }
    }
}

/// `N` discretized paths on `[0, β]` with `M` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    pub particles: usize,
    pub dim: usize,
    pub beta: f64,
    pub steps: usize,
    /// Flat `[particle][time node][coordinate]`.
    pub positions: Vec<f64>,
}

impl PathEnsemble {
    pub fn time_step(&self) -> f64 {
        self.beta / self.steps as f64
    }

    pub fn position(&self, i: usize, m: usize) -> &[f64] {
        let start = (i * (self.steps + 1) + m) * self.dim;
        &self.positions[start..start + self.dim]
    }

    /// Paths sitting at fixed points for the whole horizon.
    pub fn constant(beta: f64, steps: usize, points: &[Vec<f64>]) -> Self {
        let dim = points[0].len();
        let mut positions = Vec::with_capacity(points.len() * (steps + 1) * dim);
        for p in points {
            for _ in 0..=steps {
                positions.extend_from_slice(p);
            }
        }
        Self { particles: points.len(), dim, beta, steps, positions }
    }

    /// Keep every `factor`-th time node (the same Brownian paths at a
    /// coarser step).
    pub fn coarsened(&self, factor: usize) -> Self {
        assert!(factor >= 1 && self.steps % factor == 0, "factor must divide the step count");
        let steps = self.steps / factor;
        let mut positions = Vec::with_capacity(self.particles * (steps + 1) * self.dim);
        for i in 0..self.particles {
            for m in 0..=steps {
                positions.extend_from_slice(self.position(i, m * factor));
            }
        }
        Self { particles: self.particles, dim: self.dim, beta: self.beta, steps, positions }
    }

    /// Same ensemble with particles reordered: particle `k` of the result is
    /// particle `order[k]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut positions = Vec::with_capacity(self.positions.len());
        for &i in order {
            for m in 0..=self.steps {
                positions.extend_from_slice(self.position(i, m));
            }
        }
        Self { positions, ..self.clone() }
    }
}

fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Sample replica `replica` of the ensemble described by `spec`.
pub fn sample_paths(spec: &PathSpec, seed: u64, replica: u64) -> PathEnsemble {
    let mut rng = replica_rng(seed, replica);
    let (n, d, m) = (spec.particles, spec.dim, spec.steps);
    let dt = spec.beta / m as f64;
    let sd = (INCREMENT_VARIANCE_RATE * dt).sqrt();
    let mut starts = vec![0.0; n * d];
    match &spec.start {
        StartMode::Origin => {}
        StartMode::Joint(s) => s.sample(&mut rng, &mut starts),
        StartMode::Independent(ss) => {
            for (i, s) in ss.iter().enumerate() {
                s.sample(&mut rng, &mut starts[i * d..(i + 1) * d]);
            }
        }
    }
    let mut positions = vec![0.0; n * (m + 1) * d];
    for i in 0..n {
        let base = i * (m + 1) * d;
        positions[base..base + d].copy_from_slice(&starts[i * d..(i + 1) * d]);
        for step in 1..=m {
            for c in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                positions[base + step * d + c] = positions[base + (step - 1) * d + c] + sd * z;
            }
        }
    }
    PathEnsemble { particles: n, dim: d, beta: spec.beta, steps: m, positions }
}

/// `H = Σ_i Σ_m W(B^i_{t_m}) Δt` (left endpoints).
pub fn trap_hamiltonian(e: &PathEnsemble, trap: &TrapPotential) -> ExtReal {
    if matches!(trap, TrapPotential::Free) {
        return ExtReal::ZERO;
    }
    let dt = e.time_step();
    let mut total = 0.0;
    for i in 0..e.particles {
        for m in 0..e.steps {
            match trap.eval(e.position(i, m)) {
                ExtReal::Finite(w) => total += w,
                ExtReal::Infinite => return ExtReal::Infinite,
            }
        }
    }
    ExtReal::Finite(total * dt)
}

/// `G = Σ_{i<j} Σ_m v(|B^i_{t_m} - B^j_{t_m}|) Δt`; infinite on hard-core contact.
pub fn interaction_g(e: &PathEnsemble, v: &RadialPairPotential) -> ExtReal {
    if v.is_zero() || e.particles < 2 {
        return ExtReal::ZERO;
    }
    let dt = e.time_step();
    let mut total = 0.0;
    for i in 0..e.particles {
        for j in i + 1..e.particles {
            for m in 0..e.steps {
                match v.eval(distance(e.position(i, m), e.position(j, m))) {
                    ExtReal::Finite(x) => total += x,
                    ExtReal::Infinite => return ExtReal::Infinite,
                }
            }
        }
    }
    ExtReal::Finite(total * dt)
}

/// `K = Σ_{i<j} (1/β) ∬ v(|B^i_s - B^j_t|) ds dt` as a double left-endpoint
/// sum over every `stride`-th time node. Cost `O(N² (M/stride)²)`.
pub fn interaction_k(e: &PathEnsemble, v: &RadialPairPotential, stride: usize) -> Result<ExtReal, BmError> {
    if stride == 0 || e.steps % stride != 0 {
        return Err(BmError::Precondition("stride must divide the step count".into()));
    }
    if v.is_zero() || e.particles < 2 {
        return Ok(ExtReal::ZERO);
    }
    let ds = e.time_step() * stride as f64;
    let mut total = 0.0;
    for i in 0..e.particles {
        for j in i + 1..e.particles {
            for m in (0..e.steps).step_by(stride) {
                let x = e.position(i, m);
                for mm in (0..e.steps).step_by(stride) {
                    match v.eval(distance(x, e.position(j, mm))) {
                        ExtReal::Finite(val) => total += val,
                        ExtReal::Infinite => return Ok(ExtReal::Infinite),
                    }
                }
            }
        }
    }
    Ok(ExtReal::Finite(total * ds * ds / e.beta))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyBreakdown {
    pub trap: ExtReal,
    pub pair_g: ExtReal,
    pub pair_k: ExtReal,
}

pub fn energies(e: &PathEnsemble, trap: &TrapPotential, v: &RadialPairPotential, stride: usize) -> Result<EnergyBreakdown, BmError> {
    Ok(EnergyBreakdown { trap: trap_hamiltonian(e, trap), pair_g: interaction_g(e, v), pair_k: interaction_k(e, v, stride)? })
}

/// Which occupation measure a histogram holds.
#[derive(Clone, Debug, PartialEq)]
pub enum MeasureLabel {
    Particle(usize),
    Mean,
    /// The `dN`-dimensional occupation measure of the joint path.
    Joint,
}

/// Cell weights on a Cartesian grid whose cell centres are the grid nodes.
/// Points outside the grid are counted in the nearest edge cell and their
/// share is reported as `overflow`.
#[derive(Clone, Debug)]
pub struct OccupationHistogram {
    pub grid: Arc<Grid>,
    pub weights: Vec<f64>,
    pub overflow: f64,
    pub label: MeasureLabel,
}

impl OccupationHistogram {
    /// Weights divided by cell volume.
    pub fn density(&self) -> GridFunction {
        GridFunction::new(self.grid.clone(), self.weights.iter().zip(self.grid.volumes()).map(|(w, v)| w / v).collect())
    }

    pub fn total_variation(&self, other: &[f64]) -> f64 {
        0.5 * self.weights.iter().zip(other).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

fn cell_of(grid: &Grid, x: &[f64]) -> (usize, bool) {
    let Geometry::Cartesian { nodes_per_axis: n, half_width, .. } = *grid.geometry() else {
        panic!("histograms need a Cartesian grid");
    };
    let h = grid.spacing();
    let mut idx = 0;
    let mut stride = 1;
    let mut outside = false;
    for &c in x {
        let raw = ((c + half_width) / h - 1.0).round();
        if raw < 0.0 || raw > (n - 1) as f64 || !raw.is_finite() {
            outside = true;
        }
        idx += (raw.max(0.0).min((n - 1) as f64) as usize) * stride;
        stride *= n;
    }
    (idx, outside)
}

fn check_histogram_grid(grid: &Grid, dim: usize) -> Result<(), BmError> {
    if grid.is_radial() || grid.dim() != dim {
        return Err(BmError::Precondition(format!("histogram grid must be Cartesian of dimension {dim}")));
    }
    Ok(())
}

/// Normalized occupation measure of particle `i` (each left time node weighs `Δt/β`).
pub fn occupation(e: &PathEnsemble, i: usize, grid: &Arc<Grid>) -> Result<OccupationHistogram, BmError> {
    check_histogram_grid(grid, e.dim)?;
    let mut weights = vec![0.0; grid.len()];
    let mut outside = 0usize;
    let w = 1.0 / e.steps as f64;
    for m in 0..e.steps {
        let (k, out) = cell_of(grid, e.position(i, m));
        weights[k] += w;
        outside += out as usize;
    }
    Ok(OccupationHistogram {
        grid: grid.clone(),
        weights,
        overflow: outside as f64 / e.steps as f64,
        label: MeasureLabel::Particle(i),
    })
}

/// `(1/N) Σ_i μ^{(i)}`.
pub fn mean_occupation(e: &PathEnsemble, grid: &Arc<Grid>) -> Result<OccupationHistogram, BmError> {
    let mut acc = occupation(e, 0, grid)?;
    for i in 1..e.particles {
        let h = occupation(e, i, grid)?;
        acc.weights.iter_mut().zip(&h.weights).for_each(|(a, b)| *a += b);
        acc.overflow += h.overflow;
    }
    let n = e.particles as f64;
    acc.weights.iter_mut().for_each(|a| *a /= n);
    acc.overflow /= n;
    acc.label = MeasureLabel::Mean;
    Ok(acc)
}

/// Occupation measure of the joint path `(B^1, …, B^N)` in `R^{dN}`.
pub fn joint_occupation(e: &PathEnsemble, grid: &Arc<Grid>) -> Result<OccupationHistogram, BmError> {
    check_histogram_grid(grid, e.dim * e.particles)?;
    let mut weights = vec![0.0; grid.len()];
    let mut outside = 0usize;
    let mut point = vec![0.0; e.dim * e.particles];
    for m in 0..e.steps {
        for i in 0..e.particles {
            point[i * e.dim..(i + 1) * e.dim].copy_from_slice(e.position(i, m));
        }
        let (k, out) = cell_of(grid, &point);
        weights[k] += 1.0 / e.steps as f64;
        outside += out as usize;
    }
    Ok(OccupationHistogram { grid: grid.clone(), weights, overflow: outside as f64 / e.steps as f64, label: MeasureLabel::Joint })
}

fn gaussian_kernel(z2: f64, h: f64, d: usize) -> f64 {
    (2.0 * std::f64::consts::PI * h * h).powf(-(d as f64) / 2.0) * (-z2 / (2.0 * h * h)).exp()
}

/// Kernel estimate of the intersection local time at 0 with bandwidths `h`
/// and `h/2`: `(1/β²) Σ_{m,m'} K_h(B^i_{t_m} - B^j_{t_m'}) Δt²`.
pub fn intersection_local_time(e: &PathEnsemble, i: usize, j: usize, bandwidth: f64) -> Result<(f64, f64), BmError> {
    if i == j || i >= e.particles || j >= e.particles {
        return Err(BmError::Precondition("need two distinct particles".into()));
    }
    if !(bandwidth > 0.0) {
        return Err(BmError::Precondition("bandwidth must be positive".into()));
    }
    let (mut a, mut b) = (0.0, 0.0);
    for m in 0..e.steps {
        let x = e.position(i, m);
        for mm in 0..e.steps {
            let y = e.position(j, mm);
            let z2: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
            a += gaussian_kernel(z2, bandwidth, e.dim);
            b += gaussian_kernel(z2, 0.5 * bandwidth, e.dim);
        }
    }
    let norm = 1.0 / (e.steps as f64).powi(2);
    Ok((a * norm, b * norm))
}

/// Default bandwidth `(2βΔt)^{1/2}`.
pub fn default_bandwidth(e: &PathEnsemble) -> f64 {
    (2.0 * e.beta * e.time_step()).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    /// Weight `exp(-H - G)`.
    Canonical,
    /// Weight `exp(-H - K)`.
    Hartree,
}

#[derive(Clone, Debug)]
pub struct SimulationConfig {
    pub spec: PathSpec,
    pub replicas: usize,
    pub seed: u64,
    pub stride: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreeEnergyEstimate {
    pub value: f64,
    pub std_error: f64,
    pub replicas: usize,
    pub effective_samples: f64,
}

const JACKKNIFE_BLOCKS: usize = 100;

/// Log-weight of one replica under the given model (`-∞` on rejection).
pub fn log_weight(e: &PathEnsemble, model: Model, trap: &TrapPotential, v: &RadialPairPotential, stride: usize) -> Result<f64, BmError> {
    let pair = match model {
        Model::Canonical => interaction_g(e, v),
        Model::Hartree => interaction_k(e, v, stride)?,
    };
    Ok(match trap_hamiltonian(e, trap) + pair {
        ExtReal::Finite(x) => -x,
        ExtReal::Infinite => f64::NEG_INFINITY,
    })
}

fn log_weights(model: Model, cfg: &SimulationConfig, trap: &TrapPotential, v: &RadialPairPotential) -> Result<Vec<f64>, BmError> {
    cfg.spec.validate()?;
    if cfg.replicas < 100 {
        return Err(BmError::Precondition("at least 100 replicas are required".into()));
    }
    if model == Model::Hartree && (cfg.stride == 0 || cfg.spec.steps % cfg.stride != 0) {
        return Err(BmError::Precondition("stride must divide the step count".into()));
    }
    (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| log_weight(&sample_paths(&cfg.spec, cfg.seed, r), model, trap, v, cfg.stride))
        .collect()
}

/// `log(mean exp(l))`, `-∞` when every entry is `-∞`.
fn log_mean_exp(l: &[f64]) -> f64 {
    let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = l.iter().map(|x| (x - max).exp()).sum();
    max + (s / l.len() as f64).ln()
}

/// Effective sample size `(Σw)² / Σw²`.
pub fn effective_sample_size(log_w: &[f64]) -> f64 {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return 0.0;
    }
    let (s1, s2) = log_w.iter().fold((0.0, 0.0), |(a, b), x| {
        let w = (x - max).exp();
        (a + w, b + w * w)
    });
    s1 * s1 / s2
}

/// Delete-one-block jackknife standard error of `estimator`.
pub fn jackknife(values: &[f64], blocks: usize, estimator: impl Fn(&[f64]) -> f64) -> f64 {
    let blocks = blocks.min(values.len()).max(2);
    let size = values.len() / blocks;
    let mut estimates = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let (lo, hi) = (b * size, if b + 1 == blocks { values.len() } else { (b + 1) * size });
        let rest: Vec<f64> = values[..lo].iter().chain(&values[hi..]).copied().collect();
        estimates.push(estimator(&rest));
    }
    let mean = estimates.iter().sum::<f64>() / blocks as f64;
    let var = estimates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() * (blocks - 1) as f64 / blocks as f64;
    var.sqrt()
}

/// `-(1/(Nβ)) log` of the replica mean of the model weight.
pub fn free_energy(model: Model, cfg: &SimulationConfig, trap: &TrapPotential, v: &RadialPairPotential) -> Result<FreeEnergyEstimate, BmError> {
    let l = log_weights(model, cfg, trap, v)?;
    free_energy_from_log_weights(&l, cfg.spec.particles, cfg.spec.beta)
}

pub fn free_energy_from_log_weights(l: &[f64], particles: usize, beta: f64) -> Result<FreeEnergyEstimate, BmError> {
    let scale = -1.0 / (particles as f64 * beta);
    let lm = log_mean_exp(l);
    if lm == f64::NEG_INFINITY {
        return Err(BmError::ZeroAcceptance { replicas: l.len() });
    }
    let std_error = jackknife(l, JACKKNIFE_BLOCKS, |x| scale * log_mean_exp(x));
    Ok(FreeEnergyEstimate {
        value: scale * lm,
        std_error: if std_error.is_finite() { std_error } else { f64::INFINITY },
        replicas: l.len(),
        effective_samples: effective_sample_size(l),
    })
}

pub fn free_energy_canonical(cfg: &SimulationConfig, trap: &TrapPotential, v: &RadialPairPotential) -> Result<FreeEnergyEstimate, BmError> {
    free_energy(Model::Canonical, cfg, trap, v)
}

pub fn free_energy_hartree(cfg: &SimulationConfig, trap: &TrapPotential, v: &RadialPairPotential) -> Result<FreeEnergyEstimate, BmError> {
    free_energy(Model::Hartree, cfg, trap, v)
}

#[derive(Clone, Debug)]
pub struct WeightedOccupation {
    pub histogram: OccupationHistogram,
    pub effective_samples: f64,
    /// Raised when the effective sample size drops below 10.
    pub low_ess_warning: bool,
}

const CHUNK: usize = 256;

/// Importance-weighted replica average of the mean occupation measure.
pub fn weighted_mean_occupation(
    model: Model,
    cfg: &SimulationConfig,
    trap: &TrapPotential,
    v: &RadialPairPotential,
    grid: &Arc<Grid>,
) -> Result<WeightedOccupation, BmError> {
    cfg.spec.validate()?;
    check_histogram_grid(grid, cfg.spec.dim)?;
    let chunks: Vec<usize> = (0..cfg.replicas).step_by(CHUNK).collect();
    // per chunk: local max log-weight, Σw·hist, Σw·overflow, Σw, Σw²
    type Partial = (f64, Vec<f64>, f64, f64, f64);
    let partials: Vec<Partial> = chunks
        .par_iter()
        .map(|&start| -> Result<Partial, BmError> {
            let end = (start + CHUNK).min(cfg.replicas);
            let mut items = Vec::with_capacity(end - start);
            for r in start..end {
                let e = sample_paths(&cfg.spec, cfg.seed, r as u64);
                let lw = log_weight(&e, model, trap, v, cfg.stride)?;
                items.push((lw, mean_occupation(&e, grid)?));
            }
            let max = items.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
            let mut acc = vec![0.0; grid.len()];
            let (mut over, mut s1, mut s2) = (0.0, 0.0, 0.0);
            if max > f64::NEG_INFINITY {
                for (lw, h) in &items {
                    let w = (lw - max).exp();
                    acc.iter_mut().zip(&h.weights).for_each(|(a, b)| *a += w * b);
                    over += w * h.overflow;
                    s1 += w;
                    s2 += w * w;
                }
            }
            Ok((max, acc, over, s1, s2))
        })
        .collect::<Result<_, _>>()?;
    let max = partials.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(BmError::ZeroAcceptance { replicas: cfg.replicas });
    }
    let mut weights = vec![0.0; grid.len()];
    let (mut over, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (m, acc, o, a, b) in &partials {
        if *m == f64::NEG_INFINITY {
            continue;
        }
        let f = (m - max).exp();
        weights.iter_mut().zip(acc).for_each(|(w, x)| *w += f * x);
        over += f * o;
        s1 += f * a;
        s2 += f * f * b;
    }
    weights.iter_mut().for_each(|w| *w /= s1);
    let ess = s1 * s1 / s2;
    Ok(WeightedOccupation {
        histogram: OccupationHistogram { grid: grid.clone(), weights, overflow: over / s1, label: MeasureLabel::Mean },
        effective_samples: ess,
        low_ess_warning: ess < 10.0,
    })
}

/// Replica mean of the intersection local time at `h` and `h/2` with
/// jackknife errors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalTimeEstimate {
    pub bandwidth: f64,
    pub at_h: f64,
    pub at_half_h: f64,
    pub error_h: f64,
    pub error_half_h: f64,
}

pub fn local_time_estimate(cfg: &SimulationConfig, bandwidth: Option<f64>) -> Result<LocalTimeEstimate, BmError> {
    cfg.spec.validate()?;
    if cfg.spec.particles < 2 || !(2..=3).contains(&cfg.spec.dim) {
        return Err(BmError::Precondition("intersection local times need N ≥ 2 and d ∈ {2, 3}".into()));
    }
    let dt = cfg.spec.beta / cfg.spec.steps as f64;
    let h = bandwidth.unwrap_or((2.0 * cfg.spec.beta * dt).sqrt());
    let pairs: Vec<(f64, f64)> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| intersection_local_time(&sample_paths(&cfg.spec, cfg.seed, r), 0, 1, h))
        .collect::<Result<_, _>>()?;
    let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    Ok(LocalTimeEstimate {
        bandwidth: h,
        at_h: mean(&a),
        at_half_h: mean(&b),
        error_h: jackknife(&a, JACKKNIFE_BLOCKS, mean),
        error_half_h: jackknife(&b, JACKKNIFE_BLOCKS, mean),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_start_and_determinism() {
        let spec = PathSpec::new(3, 2, 1.0, 64);
        let a = sample_paths(&spec, 7, 3);
        let b = sample_paths(&spec, 7, 3);
        assert_eq!(a, b);
        for i in 0..3 {
            assert_eq!(a.position(i, 0), &[0.0, 0.0]);
        }
        assert_ne!(a, sample_paths(&spec, 7, 4));
    }

    #[test]
    fn constant_paths() {
        let e = PathEnsemble::constant(2.0, 32, &[vec![0.5], vec![1.0]]);
        let w = TrapPotential::harmonic(1.0).unwrap();
        let t = trap_hamiltonian(&e, &w).to_f64();
        assert!((t - 2.0 * (0.25 + 1.0)).abs() < 1e-12);
        let v = RadialPairPotential::gaussian(1.0, 1.0).unwrap();
        let expected = 2.0 * (-0.25f64).exp();
        assert!((interaction_g(&e, &v).to_f64() - expected).abs() < 1e-12);
        assert!((interaction_k(&e, &v, 4).unwrap().to_f64() - expected).abs() < 1e-12);
        let grid = Grid::cartesian(1, 9, 2.0);
        let occ = occupation(&e, 0, &grid).unwrap();
        assert_eq!(occ.weights.iter().filter(|&&w| w > 0.0).count(), 1);
        assert!((occ.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_particle_has_no_pair_terms() {
        let e = sample_paths(&PathSpec::new(1, 1, 1.0, 32), 1, 0);
        let v = RadialPairPotential::square_well(1.0, 1.0).unwrap();
        assert_eq!(interaction_g(&e, &v), ExtReal::ZERO);
        assert_eq!(interaction_k(&e, &v, 1).unwrap(), ExtReal::ZERO);
    }

    #[test]
    fn local_time_of_constant_paths() {
        let e = PathEnsemble::constant(1.0, 16, &[vec![0.0, 0.0], vec![0.0, 0.0]]);
        let (a, b) = intersection_local_time(&e, 0, 1, 0.1).unwrap();
        assert!((a - gaussian_kernel(0.0, 0.1, 2)).abs() < 1e-9);
        assert!((b - gaussian_kernel(0.0, 0.05, 2)).abs() < 1e-9);
        let far = PathEnsemble::constant(1.0, 16, &[vec![0.0, 0.0], vec![5.0, 0.0]]);
        assert!(intersection_local_time(&far, 0, 1, 0.1).unwrap().0 < 1e-100);
    }

    #[test]
    fn free_system_has_zero_free_energy() {
        let cfg = SimulationConfig { spec: PathSpec::new(2, 1, 1.0, 32), replicas: 100, seed: 3, stride: 1 };
        let f = free_energy_canonical(&cfg, &TrapPotential::Free, &RadialPairPotential::zero()).unwrap();
        assert_eq!(f.value, 0.0);
        assert_eq!(f.effective_samples, 100.0);
    }

    #[test]
    fn hard_core_rejection() {
        let cfg = SimulationConfig { spec: PathSpec::new(2, 1, 1.0, 32), replicas: 100, seed: 3, stride: 1 };
        let hc = RadialPairPotential::hard_core(1.0).unwrap();
        let err = free_energy_canonical(&cfg, &TrapPotential::Free, &hc).unwrap_err();
        assert_eq!(err, BmError::ZeroAcceptance { replicas: 100 });
    }

    #[test]
    fn start_sampler_stays_in_support() {
        let grid = Grid::cartesian(1, 21, 1.0);
        let density = GridFunction::from_fn(grid, |x| if x[0].abs() < 0.3 { 1.0 } else { 0.0 });
        let s = StartSampler::new(&density).unwrap();
        let spec = PathSpec::new(1, 1, 1.0, 16).with_start(StartMode::Independent(vec![s]));
        for r in 0..200 {
            let x = sample_paths(&spec, 5, r).position(0, 0)[0];
            assert!(x.abs() < 0.3 + 0.1 / 2.0 + 1e-12, "{x}");
        }
    }
}
