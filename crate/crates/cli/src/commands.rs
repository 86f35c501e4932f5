//! Subcommand implementations. Each returns its headline numbers and writes
//! CSV outputs into the run's output set.

use std::path::Path;
use std::sync::Arc;

use gpbm_core::bm::{self, Model, PathSpec, SimulationConfig};
use gpbm_core::gp::{self, GpError, GpSettings};
use gpbm_core::grid::{Geometry, Grid, GridFunction};
use gpbm_core::hartree::{self, HartreeError, HartreeSettings};
use gpbm_core::potentials::{rescale_hartree, RadialPairPotential, TrapPotential};
use gpbm_core::ratefn::{self, RateEvaluation, RateSettings};
use gpbm_core::scattering;
use gpbm_core::ExtReal;
use serde_json::json;

use crate::config::{self, field_error, require, LoadedConfig, ModelName, RateName, Scaling};
use crate::error::CliError;
use crate::output::{differences, num, OutputSet};

pub struct Outcome {
    pub headline: serde_json::Value,
    pub errors: Vec<String>,
    pub converged: bool,
}

fn ext(x: ExtReal) -> String {
    match x {
        ExtReal::Finite(v) => num(v),
        ExtReal::Infinite => "inf".into(),
    }
}

fn ext_json(x: ExtReal) -> serde_json::Value {
    match x {
        ExtReal::Finite(v) => json!(v),
        ExtReal::Infinite => json!("inf"),
    }
}

fn grid_spec(grid: &Grid) -> String {
    match *grid.geometry() {
        Geometry::Cartesian { dim, nodes_per_axis, half_width } => format!("cartesian:d={dim}:n={nodes_per_axis}:L={half_width}"),
        Geometry::Radial { dim, nodes, radius } => format!("radial:d={dim}:n={nodes}:R={radius}"),
    }
}

fn build_grid(dim: usize, trap: &TrapPotential, nodes: Option<usize>, extent: Option<f64>, prefix: &str) -> Result<Arc<Grid>, CliError> {
    let nodes = nodes.unwrap_or(if dim == 1 { 255 } else { 128 });
    if nodes < 8 {
        return Err(field_error(&format!("{prefix}.nodes"), "at least 8 nodes are required"));
    }
    Ok(match extent {
        None => gp::default_grid(dim, trap, nodes),
        Some(l) => {
            let l = config::positive(l, &format!("{prefix}.extent"))?;
            if dim == 1 {
                Grid::cartesian(1, nodes, l)
            } else {
                Grid::radial(dim, nodes, l)
            }
        }
    })
}

fn dump_function(out: &mut OutputSet, name: &str, f: &GridFunction) -> Result<(), CliError> {
    let grid = &f.grid;
    let coords = if grid.is_radial() { 1 } else { grid.dim() };
    let mut header: Vec<String> = if grid.is_radial() { vec!["r".into()] } else { (1..=coords).map(|i| format!("x{i}")).collect() };
    header.push("value".into());
    let rows: Vec<Vec<String>> = (0..grid.len())
        .map(|k| {
            let mut row: Vec<String> = grid.point(k).into_iter().map(num).collect();
            row.push(num(f.values[k]));
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(name, &header, &rows)
}

pub fn scatter(cfg: &LoadedConfig, out: &mut OutputSet) -> Result<Outcome, CliError> {
    let section = require(cfg.config.scatter.as_ref(), "scatter")?;
    let ids: Vec<String> = match &section.potentials {
        Some(ids) => ids.clone(),
        None => cfg.config.pair.keys().cloned().collect(),
    };
    if ids.is_empty() {
        return Err(field_error("scatter.potentials", "no pair potentials to evaluate"));
    }
    if section.dims.is_empty() {
        return Err(field_error("scatter.dims", "list is empty"));
    }
    let mut rows = Vec::new();
    let mut headline = Vec::new();
    for id in &ids {
        let v = cfg.pair(id, "scatter.potentials")?;
        for &d in &section.dims {
            if !(2..=3).contains(&d) {
                return Err(field_error("scatter.dims", format!("scattering lengths are defined for d = 2, 3, got {d}")));
            }
            let report = scattering::scattering_report(&v, d).map_err(|e| CliError::module(&format!("scatter {id} d={d}"), e))?;
            rows.push(vec![id.clone(), d.to_string(), num(report.length), ext(report.born_length), num(report.tail_estimate)]);
            headline.push(json!({
                "potential": id, "d": d, "a": report.length, "a_born": ext_json(report.born_length),
                "tail_estimate": report.tail_estimate, "degenerate": report.degenerate,
            }));
        }
    }
    out.csv("scatter.csv", &["potential_id", "d", "a", "a_born", "tail_estimate"], &rows)?;
    Ok(Outcome { headline: json!(headline), errors: vec![], converged: true })
}

pub fn gp(cfg: &LoadedConfig, out: &mut OutputSet) -> Result<Outcome, CliError> {
    let s = require(cfg.config.gp.as_ref(), "gp")?;
    let dim = config::dimension(s.dim, "gp.dim")?;
    if !(s.alpha >= 0.0 && s.alpha.is_finite()) {
        return Err(field_error("gp.alpha", "must be nonnegative"));
    }
    let trap = cfg.trap()?;
    let grid = build_grid(dim, &trap, s.nodes, s.extent, "gp")?;
    let mut settings = GpSettings::default();
    if let Some(tol) = s.tol {
        settings.tol = config::positive(tol, "gp.tol")?;
    }
    if let Some(m) = s.max_iterations {
        settings.max_iterations = m;
    }
    let (result, converged) = match gp::gp_minimize(&trap, s.alpha, grid.clone(), &settings) {
        Ok(r) => (r, true),
        Err(GpError::NotConverged(r)) => (*r, false),
        Err(e) => return Err(CliError::module("gp", e)),
    };
    let spec = grid_spec(&grid);
    out.csv(
        "gp.csv",
        &["alpha", "grid", "chi", "lambda", "residual", "iterations"],
        &[vec![num(s.alpha), spec.clone(), num(result.energy), num(result.multiplier), num(result.residual), result.iterations.to_string()]],
    )?;
    if s.dump {
        dump_function(out, "gp_minimizer.csv", &result.minimizer)?;
    }
    let errors = if converged { vec![] } else { vec![format!("gradient flow stopped with residual {}", result.residual)] };
    Ok(Outcome {
        headline: json!({
            "alpha": s.alpha, "grid": spec, "energy": result.energy, "multiplier": result.multiplier,
            "residual": result.residual, "iterations": result.iterations,
        }),
        errors,
        converged,
    })
}

pub fn hartree(cfg: &LoadedConfig, out: &mut OutputSet) -> Result<Outcome, CliError> {
    let s = require(cfg.config.hartree.as_ref(), "hartree")?;
    let dim = config::dimension(s.dim, "hartree.dim")?;
    let ns = config::sweep(&s.n, "hartree.n")?;
    if ns.contains(&0) {
        return Err(field_error("hartree.n", "particle numbers must be positive"));
    }
    let trap = cfg.trap()?;
    let v = cfg.pair(&s.pair, "hartree.pair")?;
    let grid = build_grid(dim, &trap, s.nodes, s.extent, "hartree")?;
    let mut settings = HartreeSettings::default();
    if let Some(tol) = s.tol {
        settings.tol = config::positive(tol, "hartree.tol")?;
    }
    if let Some(m) = s.max_sweeps {
        settings.max_sweeps = m;
    }
    let mut rows = Vec::new();
    let mut energies = Vec::new();
    let mut headline = Vec::new();
    let mut errors = Vec::new();
    for &n in &ns {
        let vn = match s.scaling {
            Scaling::None => v.clone(),
            Scaling::Hartree => rescale_hartree(&v, n, dim),
        };
        let run = if s.symmetric {
            hartree::symmetric_hartree(n, &trap, &vn, grid.clone(), &settings)
        } else {
            hartree::hartree_minimize(n, &trap, &vn, grid.clone(), &settings)
        };
        let result = match run {
            Ok(r) => r,
            Err(HartreeError::NotConverged(r)) => {
                errors.push(format!("N={n}: coordinate descent stopped with residual {}", r.stationarity_residual));
                *r
            }
            Err(e) => return Err(CliError::module(&format!("hartree N={n}"), e)),
        };
        let lambdas: Vec<String> = result.state.multipliers.iter().map(|x| num(*x)).collect();
        energies.push(result.energy_per_particle);
        rows.push(vec![
            n.to_string(),
            s.scaling.label().to_string(),
            num(result.energy_per_particle),
            num(result.stationarity_residual),
            result.symmetric.to_string(),
            lambdas.join(";"),
        ]);
        headline.push(json!({
            "n": n, "chi": result.energy_per_particle, "residual": result.stationarity_residual,
            "symmetric": result.symmetric, "sweeps": result.sweeps,
        }));
        if s.dump {
            for (i, f) in result.state.factors.iter().enumerate() {
                dump_function(out, &format!("hartree_n{n}_factor{i}.csv"), f)?;
            }
        }
    }
    for (row, d) in rows.iter_mut().zip(differences(&energies)) {
        row.push(d);
    }
    out.csv("hartree.csv", &["n", "scaling", "chi", "residual", "symmetric", "lambdas", "difference"], &rows)?;
    let converged = errors.is_empty();
    Ok(Outcome { headline: json!({ "grid": grid_spec(&grid), "points": headline }), errors, converged })
}

pub fn simulate(cfg: &LoadedConfig, seed: u64, out: &mut OutputSet) -> Result<Outcome, CliError> {
    let s = require(cfg.config.simulate.as_ref(), "simulate")?;
    let dim = config::dimension(s.dim, "simulate.dim")?;
    if s.n.is_list() && s.beta.is_list() {
        return Err(field_error("simulate", "sweep exactly one of `n` and `beta`"));
    }
    let ns = config::sweep(&s.n, "simulate.n")?;
    let betas = config::sweep(&s.beta, "simulate.beta")?;
    for &b in &betas {
        config::positive(b, "simulate.beta")?;
    }
    if ns.contains(&0) {
        return Err(field_error("simulate.n", "particle numbers must be positive"));
    }
    if s.steps < 16 {
        return Err(field_error("simulate.steps", "at least 16 time steps are required"));
    }
    if s.replicas < 100 {
        return Err(field_error("simulate.replicas", "at least 100 replicas are required"));
    }
    if s.stride == 0 || s.steps % s.stride != 0 {
        return Err(field_error("simulate.stride", "must be positive and divide `steps`"));
    }
    let trap = cfg.trap()?;
    let v = match &s.pair {
        Some(id) => cfg.pair(id, "simulate.pair")?,
        None => RadialPairPotential::zero(),
    };
    let model = match s.model {
        ModelName::Canonical => Model::Canonical,
        ModelName::Hartree => Model::Hartree,
    };
    let histogram_grid = match &s.histogram {
        Some(h) => {
            if h.cells < 3 {
                return Err(field_error("simulate.histogram.cells", "at least 3 cells are required"));
            }
            Some(Grid::cartesian(dim, h.cells, config::positive(h.half_width, "simulate.histogram.half_width")?))
        }
        None => None,
    };
    let points: Vec<(usize, f64)> = if s.n.is_list() {
        ns.iter().map(|&n| (n, betas[0])).collect()
    } else {
        betas.iter().map(|&b| (ns[0], b)).collect()
    };
    let mut rows = Vec::new();
    let mut values = Vec::new();
    let mut hist_rows = Vec::new();
    let mut headline = Vec::new();
    let mut errors = Vec::new();
    for &(n, beta) in &points {
        let sim = SimulationConfig { spec: PathSpec::new(n, dim, beta, s.steps), replicas: s.replicas, seed, stride: s.stride };
        let est = bm::free_energy(model, &sim, &trap, &v).map_err(|e| CliError::module(&format!("simulate N={n} beta={beta}"), e))?;
        values.push(est.value);
        rows.push(vec![num(beta), n.to_string(), num(est.value), num(est.std_error), num(est.effective_samples)]);
        headline.push(json!({
            "beta": beta, "n": n, "estimate": est.value, "std_error": est.std_error, "effective_samples": est.effective_samples,
        }));
        if let Some(grid) = &histogram_grid {
            let occ = bm::weighted_mean_occupation(model, &sim, &trap, &v, grid)
                .map_err(|e| CliError::module(&format!("simulate histogram N={n} beta={beta}"), e))?;
            if occ.low_ess_warning {
                errors.push(format!("N={n} beta={beta}: effective sample size {} is below 10", occ.effective_samples));
            }
            for k in 0..grid.len() {
                let mut row = vec![num(beta), n.to_string()];
                row.extend(grid.point(k).into_iter().map(num));
                row.push(num(occ.histogram.weights[k]));
                hist_rows.push(row);
            }
        }
    }
    for (row, d) in rows.iter_mut().zip(differences(&values)) {
        row.push(d);
    }
    out.csv("simulate.csv", &["beta", "n", "estimate", "std_error", "effective_samples", "difference"], &rows)?;
    if histogram_grid.is_some() {
        let mut header = vec!["beta".to_string(), "n".to_string()];
        header.extend((1..=dim).map(|i| format!("x{i}")));
        header.push("weight".into());
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        out.csv("simulate_histogram.csv", &header, &hist_rows)?;
    }
    Ok(Outcome { headline: json!({ "seed": seed, "points": headline }), errors, converged: true })
}

/// Density on a Cartesian grid from rows `(x_1, .., x_d, value)` covering
/// every node of a symmetric uniform grid. Values are renormalized to unit
/// mass; the mass found in the file is returned alongside.
pub fn read_density(path: &Path, field: &str) -> Result<(GridFunction, f64), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| field_error(field, format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| field_error(field, format!("{}: {e}", path.display())))?;
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if line == 0 => continue,
            Err(_) => return Err(field_error(field, format!("{} line {}: non-numeric entry", path.display(), line + 1))),
        }
    }
    let bad = |msg: &str| field_error(field, format!("{}: {msg}", path.display()));
    let Some(first) = rows.first() else {
        return Err(bad("no data rows"));
    };
    let dim = first.len().saturating_sub(1);
    if !(1..=3).contains(&dim) || rows.iter().any(|r| r.len() != dim + 1) {
        return Err(bad("expected 2 to 4 columns in every row"));
    }
    let mut axis: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    axis.sort_by(f64::total_cmp);
    axis.dedup();
    let n = axis.len();
    if n < 3 {
        return Err(bad("fewer than 3 nodes per axis"));
    }
    let h = (axis[n - 1] - axis[0]) / (n - 1) as f64;
    let half_width = axis[n - 1] + h;
    if (axis[0] + axis[n - 1]).abs() > 1e-6 * half_width {
        return Err(bad("grid must be symmetric about the origin"));
    }
    if rows.len() != n.pow(dim as u32) {
        return Err(bad("rows do not cover a full tensor grid"));
    }
    let grid = Grid::cartesian(dim, n, half_width);
    let mut values = vec![f64::NAN; grid.len()];
    for r in &rows {
        let mut k = 0;
        for c in (0..dim).rev() {
            let idx = ((r[c] + half_width) / h).round() - 1.0;
            if !(idx >= 0.0 && idx < n as f64) || (r[c] - (-half_width + (idx + 1.0) * h)).abs() > 1e-6 * h {
                return Err(bad("coordinates are not on a uniform grid"));
            }
            k = k * n + idx as usize;
        }
        if !values[k].is_nan() {
            return Err(bad("duplicate node"));
        }
        values[k] = r[dim];
    }
    if values.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(bad("values must be finite and nonnegative"));
    }
    let mass = grid.integral(&values);
    if !(mass > 0.0) {
        return Err(bad("density has zero mass"));
    }
    values.iter_mut().for_each(|x| *x /= mass);
    Ok((GridFunction::new(grid, values), mass))
}

pub fn ldp(cfg: &LoadedConfig, out: &mut OutputSet) -> Result<Outcome, CliError> {
    let s = require(cfg.config.ldp.as_ref(), "ldp")?;
    let files = config::sweep(&s.density, "ldp.density")?;
    let mut densities = Vec::new();
    let mut masses = Vec::new();
    for f in &files {
        let (mu, mass) = read_density(&cfg.resolve(f), "ldp.density")?;
        densities.push(mu);
        masses.push(mass);
    }
    if s.rate != RateName::Hartree && densities.len() != 1 {
        return Err(field_error("ldp.density", "this rate takes a single density"));
    }
    let mut settings = RateSettings::default();
    if let Some(b) = s.bound {
        settings.bound = config::positive(b, "ldp.bound")?;
    }
    if let Some(t) = s.tol {
        settings.tol = config::positive(t, "ldp.tol")?;
    }
    if let Some(m) = s.max_iterations {
        settings.max_iterations = m;
    }
    let trap = cfg.trap()?;
    let pair = || -> Result<RadialPairPotential, CliError> {
        match &s.pair {
            Some(id) => cfg.pair(id, "ldp.pair"),
            None => Ok(RadialPairPotential::zero()),
        }
    };
    let beta = || config::positive(require(s.beta, "ldp.beta")?, "ldp.beta");
    let mu = &densities[0];
    let rate_err = |e: ratefn::RateError| CliError::module("ldp", e);
    let eval: RateEvaluation = match s.rate {
        RateName::DonskerVaradhan => plain(ratefn::donsker_varadhan(mu).map_err(rate_err)?),
        RateName::Canonical => {
            let particles = require(s.particles, "ldp.particles")?;
            plain(ratefn::canonical_rate(mu, &trap, &pair()?, particles, s.chi).map_err(rate_err)?)
        }
        RateName::Hartree => plain(ratefn::hartree_rate(&densities, &trap, &pair()?, s.chi).map_err(rate_err)?),
        RateName::JBeta => ratefn::j_beta(mu, beta()?, &settings).map_err(rate_err)?,
        RateName::Meanfield => ratefn::meanfield_rate(mu, &trap, s.g, beta()?, s.chi, &settings).map_err(rate_err)?,
    };
    let rate_label = format!("{:?}", s.rate).to_lowercase();
    out.csv(
        "ldp.csv",
        &["rate", "value", "converged", "clamped", "gradient_norm", "iterations", "leak"],
        &[vec![
            rate_label.clone(),
            ext(eval.value),
            eval.converged.to_string(),
            eval.clamped.to_string(),
            num(eval.gradient_norm),
            eval.iterations.to_string(),
            num(eval.leak),
        ]],
    )?;
    if let Some(f) = &eval.maximizer {
        dump_function(out, "ldp_maximizer.csv", &GridFunction::new(mu.grid.clone(), f.clone()))?;
    }
    let mut errors = Vec::new();
    if !eval.converged {
        errors.push(format!("ascent stalled with projected gradient {}", eval.gradient_norm));
    }
    if eval.leak > ratefn::LEAK_TOLERANCE {
        errors.push(format!("tilted evolution leaks {:.3e} of its mass; enlarge the grid", eval.leak));
    }
    Ok(Outcome {
        headline: json!({
            "rate": rate_label, "value": ext_json(eval.value), "converged": eval.converged, "clamped": eval.clamped,
            "input_masses": masses,
        }),
        errors,
        converged: eval.converged,
    })
}

fn plain(value: ExtReal) -> RateEvaluation {
    RateEvaluation { value, converged: true, clamped: false, gradient_norm: 0.0, iterations: 0, maximizer: None, leak: 0.0 }
}
