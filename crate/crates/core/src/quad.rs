//! Quadrature and small special-function helpers shared by the radial solvers.

use std::f64::consts::PI;
use std::sync::OnceLock;

const GAUSS_ORDER: usize = 20;

/// Gauss-Legendre nodes and weights on [-1, 1], computed once by Newton
/// iteration on the Legendre recurrence.
fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GAUSS_ORDER;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

/// Single Gauss-Legendre panel on [a, b].
pub fn gauss_panel(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (nodes, weights) = gauss_legendre();
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    nodes
        .iter()
        .zip(weights)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Composite Gauss-Legendre on [a, b], splitting at every breakpoint inside
/// the interval and using `panels` panels per piece.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, breakpoints: &[f64], panels: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut cuts = vec![a];
    cuts.extend(breakpoints.iter().copied().filter(|&x| x > a && x < b));
    cuts.push(b);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let h = (w[1] - w[0]) / panels as f64;
        for k in 0..panels {
            total += gauss_panel(&f, w[0] + k as f64 * h, w[0] + (k + 1) as f64 * h);
        }
    }
    total
}

/// Outcome of an improper integral toward the origin.
#[derive(Clone, Debug, PartialEq)]
pub enum Improper {
    Finite(f64),
    Infinite,
    /// Neither converged nor diverged within the shell budget.
    Indeterminate { partial_sums: Vec<f64> },
}

const SHELL_BUDGET: usize = 400;
const RELATIVE_STOP: f64 = 1e-8;
const DIVERGENCE_CAP: f64 = 1e12;
const MONOTONE_RUN: usize = 8;

/// Integrate `f` over (0, upper] through dyadic shells
/// [upper·2^{-k-1}, upper·2^{-k}], refining toward the origin until the
/// relative change drops below 1e-8 (finite) or the partial sum exceeds 1e12
/// (infinite).
pub fn integrate_to_origin(f: impl Fn(f64) -> f64, upper: f64, breakpoints: &[f64]) -> Improper {
    let smallest_break = breakpoints
        .iter()
        .copied()
        .filter(|&b| b > 0.0 && b < upper)
        .fold(upper, f64::min);
    shell_series(upper, smallest_break, |lo, hi| integrate(&f, lo, hi, breakpoints, 2))
}

/// Sum dyadic shell contributions `shell(lo, hi)` toward the origin with the
/// stopping rules of [`integrate_to_origin`]. A run of nondecreasing positive
/// shell contributions is reported as infinite: a convergent integrand must
/// eventually shrink them geometrically. Convergence is only judged once the
/// shells sit below `smallest_break`.
pub fn shell_series(upper: f64, smallest_break: f64, mut shell: impl FnMut(f64, f64) -> f64) -> Improper {
    let mut sum = 0.0;
    let mut partial_sums = Vec::new();
    let mut shells: Vec<f64> = Vec::new();
    for k in 0..SHELL_BUDGET {
        let hi = upper * 0.5f64.powi(k as i32);
        let lo = 0.5 * hi;
        let c = shell(lo, hi);
        sum += c;
        partial_sums.push(sum);
        shells.push(c);
        if !sum.is_finite() || sum.abs() > DIVERGENCE_CAP {
            return Improper::Infinite;
        }
        if k < 10 || hi > smallest_break {
            continue;
        }
        if shells.len() > MONOTONE_RUN {
            let tail = &shells[shells.len() - MONOTONE_RUN - 1..];
            if tail[0] > 0.0 && tail.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)) {
                return Improper::Infinite;
            }
        }
        if c.abs() <= RELATIVE_STOP * sum.abs() || (c == 0.0 && sum == 0.0) {
            return Improper::Finite(sum);
        }
    }
    Improper::Indeterminate { partial_sums }
}

/// Surface area of the unit sphere in R^d (ω_1 = 2, ω_2 = 2π, ω_3 = 4π).
pub fn unit_sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("unsupported dimension {d}"),
    }
}

/// Polynomial extrapolation to `x = 0` through the points `(xs[i], ys[i])`
/// (Neville's scheme). Returns the diagonal of the tableau: the estimate
/// using 1, 2, ..., n points.
pub fn neville_to_zero(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut table = ys.to_vec();
    let mut diagonal = vec![table[0]];
    for level in 1..n {
        for i in 0..n - level {
            let (xa, xb) = (xs[i], xs[i + level]);
            table[i] = (xb * table[i] - xa * table[i + 1]) / (xb - xa);
        }
        diagonal.push(table[0]);
    }
    diagonal
}

/// Bessel function of the first kind, order zero (Abramowitz & Stegun
/// 9.4.1 / 9.4.3; absolute error below 1e-7).
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 3.0 {
        let y = (x / 3.0).powi(2);
        1.0 + y
            * (-2.2499997
                + y * (1.2656208
                    + y * (-0.3163866 + y * (0.0444479 + y * (-0.0039444 + y * 0.0002100)))))
    } else {
        let y = 3.0 / x;
        let f0 = 0.79788456
            + y * (-0.00000077
                + y * (-0.00552740
                    + y * (-0.00009512 + y * (0.00137237 + y * (-0.00072805 + y * 0.00014476)))));
        let theta = x - 0.78539816
            + y * (-0.04166397
                + y * (-0.00003954
                    + y * (0.00262573 + y * (-0.00054125 + y * (-0.00029333 + y * 0.00013558)))));
        f0 * theta.cos() / x.sqrt()
    }
}

/// sin(x)/x with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Radial kernel of the d-dimensional Fourier transform of a radial
/// function: J0 in d = 2, sin(x)/x in d = 3, cos(x) in d = 1.
pub fn radial_fourier_kernel(d: usize, x: f64) -> f64 {
    match d {
        1 => x.cos(),
        2 => bessel_j0(x),
        3 => sinc(x),
        _ => panic!("unsupported dimension {d}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_integrates_polynomials_exactly() {
        let v = integrate(|x| x.powi(7) - 3.0 * x * x, 0.0, 2.0, &[], 1);
        assert!((v - (256.0 / 8.0 - 8.0)).abs() < 1e-12);
    }

    #[test]
    fn breakpoints_handle_jumps() {
        let step = |x: f64| if x < 0.3 { 1.0 } else { 0.0 };
        let v = integrate(step, 0.0, 1.0, &[0.3], 1);
        assert!((v - 0.3).abs() < 1e-14);
    }

    #[test]
    fn improper_integrals() {
        // ∫_0^1 r^{-1/2} dr = 2
        match integrate_to_origin(|r| r.powf(-0.5), 1.0, &[]) {
            Improper::Finite(v) => assert!((v - 2.0).abs() < 1e-6, "{v}"),
            other => panic!("{other:?}"),
        }
        // ∫_0^1 r^{-1} dr diverges logarithmically
        assert_eq!(integrate_to_origin(|r| 1.0 / r, 1.0, &[]), Improper::Infinite);
        // ∫_0^1 r^{-2} dr diverges like a power
        assert_eq!(integrate_to_origin(|r| r.powi(-2), 1.0, &[]), Improper::Infinite);
    }

    #[test]
    fn singular_part_below_a_breakpoint_is_not_missed() {
        let f = |r: f64| if r <= 0.01 { 1.0 / r } else { 0.0 };
        assert_eq!(integrate_to_origin(f, 1.0, &[0.01]), Improper::Infinite);
    }

    #[test]
    fn neville_recovers_polynomials() {
        let xs = [0.1, 0.2, 0.3, 0.4];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 + x - 3.0 * x * x).collect();
        let d = neville_to_zero(&xs, &ys);
        assert!((d[3] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bessel_reference_values() {
        // reference values of J0 to 9 digits
        for (x, j) in [
            (0.0, 1.0),
            (1.0, 0.765197687),
            (2.404825558, 0.0),
            (5.0, -0.177596771),
            (10.0, -0.245935765),
            (30.0, -0.086367983),
        ] {
            assert!((bessel_j0(x) - j).abs() < 2e-7, "J0({x})");
        }
    }
}
