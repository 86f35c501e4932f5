//! Box-constrained limited-memory BFGS for smooth concave maximization.

use std::collections::VecDeque;

#[derive(Clone, Debug)]
pub struct AscentOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    /// Largest component of the projected gradient at `x`.
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Whether any coordinate ends on the box boundary.
    pub at_bound: bool,
}

const MEMORY: usize = 12;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximize `eval` over `[-bound, bound]^n` from `x0`. `eval` returns the
/// value and the gradient. Stops when the projected gradient is below `tol`
/// in the sup norm.
pub fn maximize_in_box(
    x0: Vec<f64>,
    bound: f64,
    tol: f64,
    max_iterations: usize,
    eval: impl FnMut(&[f64]) -> (f64, Vec<f64>),
) -> AscentOutcome {
    let n = x0.len();
    maximize_scaled(x0, &vec![bound; n], &vec![1.0; n], tol, max_iterations, eval)
}

/// As [`maximize_in_box`] with per-coordinate bounds `|x_k| ≤ bounds[k]`;
/// the stopping test uses `|∂_k| · gauge[k]`.
pub fn maximize_scaled(
    x0: Vec<f64>,
    bounds: &[f64],
    gauge: &[f64],
    tol: f64,
    max_iterations: usize,
    mut eval: impl FnMut(&[f64]) -> (f64, Vec<f64>),
) -> AscentOutcome {
    let n = x0.len();
    let project = |x: &mut [f64]| x.iter_mut().zip(bounds).for_each(|(v, b)| *v = v.clamp(-b, *b));
    // work with the minimization of -eval
    let mut x = x0;
    project(&mut x);
    let (v, g) = eval(&x);
    let mut value = -v;
    let mut grad: Vec<f64> = g.into_iter().map(|x| -x).collect();
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let pinned = |x: &[f64], g: &[f64], i: usize| (x[i] <= -bounds[i] && g[i] > 0.0) || (x[i] >= bounds[i] && g[i] < 0.0);
    let pg_norm = |x: &[f64], g: &[f64]| (0..n).filter(|&i| !pinned(x, g, i)).map(|i| (g[i] * gauge[i]).abs()).fold(0.0, f64::max);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        if pg_norm(&x, &grad) < tol {
            converged = true;
            break;
        }
        let free: Vec<bool> = (0..n).map(|i| !pinned(&x, &grad, i)).collect();
        let mut q: Vec<f64> = (0..n).map(|i| if free[i] { grad[i] } else { 0.0 }).collect();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = memory.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|qi| *qi *= gamma);
        }
        for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = (0..n).map(|i| if free[i] { -q[i] } else { 0.0 }).collect();
        if dot(&dir, &grad) >= 0.0 {
            memory.clear();
            dir = (0..n).map(|i| if free[i] { -grad[i] } else { 0.0 }).collect();
        }
        let mut step = if memory.is_empty() {
            let g_inf = (0..n).filter(|&i| free[i]).map(|i| grad[i].abs()).fold(0.0, f64::max);
            1.0 / g_inf.max(1e-300)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            project(&mut trial);
            let delta: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let (tv, tg) = eval(&trial);
            let tv = -tv;
            if tv <= value + 1e-4 * dot(&grad, &delta) || (tv <= value && dot(&delta, &delta) < 1e-30) {
                accepted = Some((trial, tv, tg.into_iter().map(|x| -x).collect::<Vec<f64>>(), delta));
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some((trial, tv, tg, s)) = accepted else {
            if memory.is_empty() {
                break;
            }
            memory.clear();
            continue;
        };
        let y: Vec<f64> = tg.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if memory.len() == MEMORY {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }
        let stalled = (value - tv).abs() <= 1e-16 * value.abs().max(1.0);
        x = trial;
        value = tv;
        grad = tg;
        if stalled && pg_norm(&x, &grad) >= tol && memory.is_empty() {
            break;
        }
    }
    let gradient_norm = pg_norm(&x, &grad);
    let at_bound = x.iter().zip(bounds).any(|(v, b)| v.abs() >= *b);
    AscentOutcome { x, value: -value, gradient_norm, iterations, converged: converged || gradient_norm < tol, at_bound }
}
