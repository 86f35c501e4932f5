//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one line per criterion; exits nonzero when any criterion fails.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use gpbm_core::bm::{self, Model, PathSpec, SimulationConfig, StartMode, StartSampler};
use gpbm_core::gp::{self, GpSettings};
use gpbm_core::grid::{Grid, GridFunction};
use gpbm_core::hartree::{self, HartreeSettings};
use gpbm_core::potentials::{rescale_gp, rescale_hartree, RadialPairPotential, TrapPotential};
use gpbm_core::quad;
use gpbm_core::ratefn::{self, CumulantSolver, RateSettings};
use gpbm_core::scattering;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Report {
    id: usize,
    pass: bool,
    detail: String,
}

fn report(id: usize, pass: bool, detail: String) -> Report {
    Report { id, pass, detail }
}

fn harmonic() -> TrapPotential {
    TrapPotential::harmonic(1.0).unwrap()
}

fn square_well(c: f64) -> RadialPairPotential {
    RadialPairPotential::square_well(c, 1.0).unwrap()
}

fn criterion_1() -> Report {
    let hc = scattering::scattering_report(&RadialPairPotential::hard_core(1.0).unwrap(), 3).unwrap().length;
    let mut worst: f64 = (hc - 1.0).abs();
    let mut detail = format!("hard core a = {hc:.12}");
    for c in [0.5, 2.0, 8.0] {
        let kappa = (c / 2.0f64).sqrt();
        let exact = 1.0 - kappa.tanh() / kappa;
        let a = scattering::scattering_report(&square_well(c), 3).unwrap().length;
        worst = worst.max((a - exact).abs());
        detail += &format!(", c={c}: {a:.10} vs {exact:.10}");
    }
    report(1, worst < 1e-6, format!("{detail}; max error {worst:.2e}"))
}

fn criterion_2() -> Report {
    let mut worst: f64 = 0.0;
    for v in [RadialPairPotential::hard_core(1.0).unwrap(), square_well(2.0)] {
        for d in [2, 3] {
            let base = scattering::scattering_report(&v, d).unwrap().length;
            for xi in [0.5, 2.0, 10.0] {
                let a = scattering::scattering_report(&rescale_gp(&v, xi), d).unwrap().length;
                worst = worst.max((a - xi * base).abs() / (xi * base).abs());
            }
        }
    }
    report(2, worst < 1e-6, format!("max relative deviation {worst:.2e}"))
}

fn criterion_3() -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut strict = true;
    let mut worst: f64 = 0.0;
    let mut min_gap = f64::INFINITY;
    for k in 0..10 {
        let v = if k % 2 == 0 {
            RadialPairPotential::gaussian(rng.gen_range(0.2..6.0), rng.gen_range(0.3..2.0)).unwrap()
        } else {
            RadialPairPotential::square_well(rng.gen_range(0.2..10.0), rng.gen_range(0.5..2.0)).unwrap()
        };
        let rep = scattering::scattering_report(&v, 3).unwrap();
        let born = rep.born_length.to_f64();
        strict &= rep.length < born;
        min_gap = min_gap.min(born - rep.length);
        let sol = scattering::solve_scattering_ode(&v, scattering::default_r_max(&v), scattering::DEFAULT_STEPS).unwrap();
        let identity = scattering::identity_integral(&v, &sol);
        worst = worst.max((identity - 8.0 * PI * rep.length).abs() / (8.0 * PI * rep.length));
    }
    report(3, strict && worst < 1e-4, format!("a < ã on 10/10: {strict} (min gap {min_gap:.3e}); identity max rel error {worst:.2e}"))
}

fn criterion_4() -> Report {
    let trap = harmonic();
    let settings = GpSettings::default();
    let mut pass = true;
    let mut detail = Vec::new();
    for d in 1..=3 {
        let coarse = if d == 1 { Grid::cartesian(1, 127, 8.0) } else { Grid::radial(d, 64, 8.0) };
        let fine = coarse.refined();
        let rc = gp::gp_minimize(&trap, 0.0, coarse, &settings).unwrap();
        let rf = gp::gp_minimize(&trap, 0.0, fine, &settings).unwrap();
        let (ec, ef) = ((rc.energy - d as f64).abs(), (rf.energy - d as f64).abs());
        let order = (ec / ef).log2();
        let ok = ef < 2e-3 && rf.residual < 1e-6 && rc.residual < 1e-6 && order >= 1.8;
        pass &= ok;
        detail.push(format!("d={d}: χ={:.6} residual {:.1e} order {order:.2}", rf.energy, rf.residual));
    }
    report(4, pass, detail.join("; "))
}

fn line_grid() -> Arc<Grid> {
    Grid::cartesian(1, 127, 6.0)
}

fn criterion_5() -> Report {
    let grid = line_grid();
    let trap = harmonic();
    let settings = HartreeSettings::default();
    let v = square_well(2.0);
    let oracle = hartree::two_body_oracle(&trap, &v, &grid).unwrap();
    let prod = hartree::hartree_minimize(2, &trap, &v, grid.clone(), &settings).unwrap();
    let gap = prod.energy_per_particle - oracle.chi;
    let zero = RadialPairPotential::zero();
    let oracle0 = hartree::two_body_oracle(&trap, &zero, &grid).unwrap();
    let prod0 = hartree::hartree_minimize(2, &trap, &zero, grid, &settings).unwrap();
    let gap0 = prod0.energy_per_particle - oracle0.chi;
    report(
        5,
        gap >= 0.0 && gap0.abs() < 1e-6,
        format!("χ⊗₂ = {:.8}, χ₂ = {:.8}, gap {gap:.3e}; v ≡ 0 gap {gap0:.1e}", prod.energy_per_particle, oracle.chi),
    )
}

fn criterion_6() -> Report {
    let trap = harmonic();
    let v = RadialPairPotential::gaussian(2.0, 1.0).unwrap();
    let grid = Grid::radial(2, 96, 7.0);
    let alpha = scattering::born_length(&v, 2).unwrap();
    let target = gp::gp_minimize(&trap, alpha, grid.clone(), &GpSettings::default()).unwrap().energy;
    let mut devs = Vec::new();
    for n in [4usize, 8, 16, 32] {
        let vn = rescale_hartree(&v, n, 2);
        let r = hartree::symmetric_hartree(n, &trap, &vn, grid.clone(), &HartreeSettings::default()).unwrap();
        devs.push(r.energy_per_particle - target);
    }
    let monotone = devs.windows(2).all(|w| w[1].abs() <= w[0].abs());
    let pass = devs[3].abs() < devs[0].abs() / 2.0;
    let listed: Vec<String> = devs.iter().map(|d| format!("{d:.3e}")).collect();
    report(6, pass, format!("χ^GP_ã = {target:.6}; deviations [{}]; monotone trend {monotone}", listed.join(", ")))
}

/// `-Λ_β(-W)` for `W = x²` on a fine line grid.
fn fk_oracle(beta: f64) -> f64 {
    let grid = Grid::cartesian(1, 301, 9.0);
    let f: Vec<f64> = (0..grid.len()).map(|k| -grid.radius(k).powi(2)).collect();
    -CumulantSolver::new(&grid, beta).unwrap().value(&f).unwrap().value
}

fn criterion_7() -> (Report, Vec<f64>) {
    let trap = harmonic();
    let v = RadialPairPotential::zero();
    let mut pass = true;
    let mut estimates = Vec::new();
    let mut detail = Vec::new();
    for beta in [1.0, 2.0, 4.0] {
        let cfg = SimulationConfig { spec: PathSpec::new(1, 1, beta, 1024), replicas: 10_000, seed: 7, stride: 1 };
        let est = bm::free_energy_canonical(&cfg, &trap, &v).unwrap();
        let oracle = fk_oracle(beta);
        let ok = (est.value - oracle).abs() <= 3.0 * est.std_error + 2e-2;
        pass &= ok;
        estimates.push(est.value);
        detail.push(format!("β={beta}: {:.4} ± {:.4} vs {oracle:.4}", est.value, est.std_error));
    }
    let monotone = estimates.windows(2).all(|w| w[0] < w[1] && (1.0 - w[1]).abs() < (1.0 - w[0]).abs());
    (report(7, pass && monotone, format!("{}; monotone toward 1: {monotone}", detail.join(", "))), estimates)
}

fn criterion_8() -> (Report, Vec<f64>) {
    let trap = harmonic();
    let grid = line_grid();
    let (beta, steps, replicas, stride, seed) = (4.0, 512, 10_000, 8, 11);
    let zero = RadialPairPotential::zero();
    let cfg0 = SimulationConfig { spec: PathSpec::new(2, 1, beta, steps), replicas, seed, stride };
    let c0 = bm::free_energy_canonical(&cfg0, &trap, &zero).unwrap();
    let h0 = bm::free_energy_hartree(&cfg0, &trap, &zero).unwrap();
    let identical = c0.value.to_bits() == h0.value.to_bits() && c0.std_error.to_bits() == h0.std_error.to_bits();

    let v = square_well(2.0);
    let oracle = hartree::two_body_oracle(&trap, &v, &grid).unwrap();
    let prod = hartree::hartree_minimize(2, &trap, &v, grid.clone(), &HartreeSettings::default()).unwrap();
    let joint = StartMode::Joint(StartSampler::new(&oracle.ground_state).unwrap());
    let independent = StartMode::Independent(prod.state.factors.iter().map(|h| StartSampler::new(h).unwrap()).collect());
    let cfg_c = SimulationConfig { spec: PathSpec::new(2, 1, beta, steps).with_start(joint), replicas, seed, stride };
    let cfg_h = SimulationConfig { spec: PathSpec::new(2, 1, beta, steps).with_start(independent), replicas, seed, stride };
    let c = bm::free_energy_canonical(&cfg_c, &trap, &v).unwrap();
    let h = bm::free_energy_hartree(&cfg_h, &trap, &v).unwrap();
    let dc = c.value - oracle.chi;
    let dh = h.value - prod.energy_per_particle;
    let ordered = prod.energy_per_particle >= oracle.chi;
    let pass = identical && dc.abs() <= 3.0 * c.std_error && dh.abs() <= 3.0 * h.std_error && ordered;
    let detail = format!(
        "v ≡ 0 bit-identical: {identical}; canonical {:.5} ± {:.5} vs χ₂ {:.5} ({:+.2}σ); hartree {:.5} ± {:.5} vs χ⊗₂ {:.5} ({:+.2}σ); targets ordered: {ordered}",
        c.value, c.std_error, oracle.chi, dc / c.std_error, h.value, h.std_error, prod.energy_per_particle, dh / h.std_error
    );
    (report(8, pass, detail), vec![c0.value, h0.value, c.value, c.std_error, h.value, h.std_error])
}

/// Cell masses of `e^{-x²}/√π` on the histogram cells.
fn ground_density_cells(grid: &Grid) -> Vec<f64> {
    let h = grid.spacing();
    (0..grid.len())
        .map(|k| {
            let x = grid.point(k)[0];
            quad::integrate(|y| (-y * y).exp() / PI.sqrt(), x - 0.5 * h, x + 0.5 * h, &[], 2)
        })
        .collect()
}

fn criterion_9() -> (Report, Vec<f64>) {
    let trap = harmonic();
    let hist = Grid::cartesian(1, 33, 4.25);
    let cfg = SimulationConfig { spec: PathSpec::new(1, 1, 8.0, 512), replicas: 100_000, seed: 5, stride: 1 };
    let occ = bm::weighted_mean_occupation(Model::Canonical, &cfg, &trap, &RadialPairPotential::zero(), &hist).unwrap();
    let oracle = ground_density_cells(&hist);
    let tv = occ.histogram.total_variation(&oracle);
    let mut fingerprint = occ.histogram.weights.clone();
    fingerprint.push(occ.effective_samples);
    (
        report(9, tv < 0.1, format!("TV = {tv:.4} (ESS {:.0}, overflow {:.2e})", occ.effective_samples, occ.histogram.overflow)),
        fingerprint,
    )
}

fn random_density(grid: &Arc<Grid>, rng: &mut ChaCha8Rng) -> GridFunction {
    let bumps: Vec<(Vec<f64>, f64, f64)> = (0..3)
        .map(|_| {
            let centre = (0..grid.dim()).map(|_| rng.gen_range(-1.5..1.5)).collect();
            (centre, rng.gen_range(0.4..1.5), rng.gen_range(0.2..1.0))
        })
        .collect();
    let mut mu = GridFunction::from_fn(grid.clone(), |x| {
        bumps
            .iter()
            .map(|(c, w, a)| a * (-x.iter().zip(c).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / (w * w)).exp())
            .sum::<f64>()
            + 1e-6
    });
    let mass = grid.integral(&mu.values);
    mu.values.iter_mut().for_each(|x| *x /= mass);
    mu
}

fn criterion_10() -> Report {
    let trap = harmonic();
    let v = square_well(2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut lines = Vec::new();
    let mut pass = true;

    // canonical, N = 2 on the product grid
    let line = Grid::cartesian(1, 47, 5.0);
    let product = Grid::cartesian(2, 47, 5.0);
    let oracle = hartree::two_body_oracle(&trap, &v, &line).unwrap();
    let mut min_c = f64::INFINITY;
    for _ in 0..100 {
        let mu = random_density(&product, &mut rng);
        min_c = min_c.min(ratefn::canonical_rate(&mu, &trap, &v, 2, oracle.chi).unwrap().to_f64());
    }
    let at_c = ratefn::canonical_rate(&oracle.ground_state.squared(), &trap, &v, 2, oracle.chi).unwrap().to_f64();
    let ok = min_c >= -1e-6 && at_c.abs() < 1e-3;
    pass &= ok;
    lines.push(format!("canonical min {min_c:.3e}, at minimizer {at_c:.1e}"));

    // Hartree, N = 2
    let prod = hartree::hartree_minimize(2, &trap, &v, line.clone(), &HartreeSettings::default()).unwrap();
    let mut min_h = f64::INFINITY;
    for _ in 0..100 {
        let mus = [random_density(&line, &mut rng), random_density(&line, &mut rng)];
        min_h = min_h.min(ratefn::hartree_rate(&mus, &trap, &v, prod.energy_per_particle).unwrap().to_f64());
    }
    let squares: Vec<GridFunction> = prod.state.factors.iter().map(GridFunction::squared).collect();
    let at_h = ratefn::hartree_rate(&squares, &trap, &v, prod.energy_per_particle).unwrap().to_f64();
    let ok = min_h >= -1e-6 && at_h.abs() < 1e-3;
    pass &= ok;
    lines.push(format!("hartree min {min_h:.3e}, at minimizer {at_h:.1e}"));

    // mean field at finite β
    let settings = RateSettings::default();
    let (g, beta) = (0.5, 2.0);
    let mgrid = Grid::cartesian(1, 41, 6.0);
    let mf = ratefn::chi_otimes_beta(g, &trap, beta, &mgrid, &settings, false).unwrap();
    let mut min_m = f64::INFINITY;
    for _ in 0..100 {
        let mu = random_density(&mgrid, &mut rng);
        min_m = min_m.min(ratefn::meanfield_rate(&mu, &trap, g, beta, mf.value, &settings).unwrap().value.to_f64());
    }
    let at_m = ratefn::meanfield_rate(&mf.density, &trap, g, beta, mf.value, &settings).unwrap().value.to_f64();
    let ok = min_m >= -1e-6 && at_m.abs() < 1e-3;
    pass &= ok;
    lines.push(format!("meanfield min {min_m:.3e}, at minimizer {at_m:.1e}"));

    // Fenchel-Young: J(μ) ≥ ⟨μ, f⟩ - Λ(f), 20 densities × 5 test functions
    let fgrid = Grid::cartesian(1, 61, 9.0);
    let solver = CumulantSolver::new(&fgrid, beta).unwrap();
    let mut worst_fy = f64::NEG_INFINITY;
    for _ in 0..20 {
        let mu = random_density(&fgrid, &mut rng);
        let j = ratefn::j_beta(&mu, beta, &settings).unwrap().value.to_f64();
        let masses = mu.masses();
        for _ in 0..5 {
            let (a, b, c) = (rng.gen_range(-1.0..1.0), rng.gen_range(0.2..2.0), rng.gen_range(0.5..1.5));
            let f: Vec<f64> = (0..fgrid.len()).map(|k| a * (b * fgrid.point(k)[0]).sin() - c * fgrid.radius(k).powi(2)).collect();
            let lambda = solver.value(&f).unwrap().value;
            let pairing: f64 = masses.iter().zip(&f).map(|(m, x)| m * x).sum();
            worst_fy = worst_fy.max(pairing - lambda - j);
        }
    }
    let ok = worst_fy <= 1e-4;
    pass &= ok;
    lines.push(format!("Fenchel-Young max violation {worst_fy:.2e}"));

    // shift covariance of Λ
    let mut worst_shift: f64 = 0.0;
    for _ in 0..10 {
        let c = rng.gen_range(-3.0..3.0);
        let f: Vec<f64> = (0..fgrid.len()).map(|k| rng.gen_range(-1.0..0.5) - fgrid.radius(k).powi(2)).collect();
        let shifted: Vec<f64> = f.iter().map(|x| x + c).collect();
        let d = solver.value(&shifted).unwrap().value - solver.value(&f).unwrap().value;
        worst_shift = worst_shift.max((d - c).abs());
    }
    let ok = worst_shift < 1e-8;
    pass &= ok;
    lines.push(format!("Λ(f+c) - Λ(f) - c max {worst_shift:.1e}"));
    report(10, pass, lines.join("; "))
}

fn criterion_11(first: &[Vec<f64>]) -> Report {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let again = pool.install(|| vec![criterion_7().1, criterion_8().1, criterion_9().1]);
    let identical = first
        .iter()
        .zip(&again)
        .all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    report(11, identical, format!("criteria 7-9 rerun on one thread: bit-identical {identical}"))
}

fn main() {
    let mut reports = Vec::new();
    let mut fingerprints = Vec::new();
    let timed = |f: &mut dyn FnMut() -> Report| {
        let t = Instant::now();
        let mut r = f();
        r.detail += &format!(" [{:.1} s]", t.elapsed().as_secs_f64());
        r
    };
    for f in [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6] {
        reports.push(timed(&mut || f()));
        print_last(&reports);
    }
    for f in [criterion_7, criterion_8, criterion_9] {
        reports.push(timed(&mut || {
            let (r, fp) = f();
            fingerprints.push(fp);
            r
        }));
        print_last(&reports);
    }
    reports.push(timed(&mut criterion_10));
    print_last(&reports);
    reports.push(timed(&mut || criterion_11(&fingerprints)));
    print_last(&reports);
    let failed: Vec<usize> = reports.iter().filter(|r| !r.pass).map(|r| r.id).collect();
    println!("acceptance: {}/{} criteria passed", reports.len() - failed.len(), reports.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

fn print_last(reports: &[Report]) {
    let r = reports.last().unwrap();
    println!("criterion {}: {} {}", r.id, if r.pass { "PASS" } else { "FAIL" }, r.detail);
}
