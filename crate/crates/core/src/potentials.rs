//! Trap and pair potentials, their classification and rescalings.
//!
//! A pair potential is stored as a unit-scale [`PairShape`] together with an
//! amplitude and a length: `v(r) = amplitude · shape(r / length)`. Both
//! rescaling families used by the limit theorems only touch those two
//! numbers, so rescalings compose exactly.

use std::f64::consts::PI;

use thiserror::Error;

use crate::ext::ExtReal;
use crate::quad::{self, Improper};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("invalid potential: {0}")]
    Invalid(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("quadrature did not settle within the shell budget (last partial sum {last:?})")]
    Indeterminate { partial_sums: Vec<f64>, last: Option<f64> },
}

/// Unit-scale profile of a radial pair potential.
#[derive(Clone, Debug, PartialEq)]
pub enum PairShape {
    Zero,
    /// `∞` on `[0, radius)`, zero beyond.
    HardCore { radius: f64 },
    /// `height` on `[0, radius]`, zero beyond.
    SquareWell { height: f64, radius: f64 },
    /// `∞` on `[0, core)`, `height` on `[core, radius]`, zero beyond.
    HardCoreShoulder { core: f64, height: f64, radius: f64 },
    /// `coefficient · r^{-exponent}` on `(0, cutoff]`, zero beyond.
    InversePower { coefficient: f64, exponent: f64, cutoff: f64 },
    /// `height · exp(-r²/width²)`.
    Gaussian { height: f64, width: f64 },
    /// Two-column table, linearly interpolated; zero beyond the last node.
    /// Infinite entries must form a prefix (the hard core).
    Tabulated { radii: Vec<f64>, values: Vec<ExtReal> },
}

impl PairShape {
    fn eval(&self, r: f64) -> ExtReal {
        match *self {
            PairShape::Zero => ExtReal::ZERO,
            PairShape::HardCore { radius } => {
                if r < radius {
                    ExtReal::Infinite
                } else {
                    ExtReal::ZERO
                }
            }
            PairShape::SquareWell { height, radius } => {
                ExtReal::Finite(if r <= radius { height } else { 0.0 })
            }
            PairShape::HardCoreShoulder { core, height, radius } => {
                if r < core {
                    ExtReal::Infinite
                } else if r <= radius {
                    ExtReal::Finite(height)
                } else {
                    ExtReal::ZERO
                }
            }
            PairShape::InversePower { coefficient, exponent, cutoff } => {
                if r > cutoff {
                    ExtReal::ZERO
                } else if r == 0.0 {
                    if exponent > 0.0 && coefficient > 0.0 {
                        ExtReal::Infinite
                    } else if exponent == 0.0 {
                        ExtReal::Finite(coefficient)
                    } else {
                        ExtReal::ZERO
                    }
                } else {
                    ExtReal::Finite(coefficient * r.powf(-exponent))
                }
            }
            PairShape::Gaussian { height, width } => {
                ExtReal::Finite(height * (-(r / width).powi(2)).exp())
            }
            PairShape::Tabulated { ref radii, ref values } => tabulated_eval(radii, values, r),
        }
    }

    fn core(&self) -> f64 {
        match *self {
            PairShape::HardCore { radius } => radius,
            PairShape::HardCoreShoulder { core, .. } => core,
            PairShape::Tabulated { ref radii, ref values } => values
                .iter()
                .zip(radii)
                .filter(|(v, _)| v.is_infinite())
                .map(|(_, &r)| r)
                .fold(0.0, f64::max),
            _ => 0.0,
        }
    }

    fn lower_bound(&self) -> f64 {
        match *self {
            PairShape::Zero | PairShape::HardCore { .. } | PairShape::InversePower { .. } => 0.0,
            PairShape::SquareWell { height, .. } | PairShape::HardCoreShoulder { height, .. } => {
                height.min(0.0)
            }
            PairShape::Gaussian { height, .. } => height.min(0.0),
            PairShape::Tabulated { ref values, .. } => values
                .iter()
                .filter_map(|v| v.finite())
                .fold(0.0, f64::min),
        }
    }

    fn support(&self) -> Option<f64> {
        match *self {
            PairShape::Zero => Some(0.0),
            PairShape::HardCore { radius } => Some(radius),
            PairShape::SquareWell { radius, .. } | PairShape::HardCoreShoulder { radius, .. } => {
                Some(radius)
            }
            PairShape::InversePower { cutoff, .. } => Some(cutoff),
            PairShape::Gaussian { .. } => None,
            PairShape::Tabulated { ref radii, .. } => radii.last().copied(),
        }
    }

    fn effective_support(&self) -> f64 {
        match *self {
            PairShape::Gaussian { width, .. } => 6.5 * width,
            _ => self.support().unwrap_or(0.0),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match *self {
            PairShape::Zero | PairShape::Gaussian { .. } => vec![],
            PairShape::HardCore { radius } => vec![radius],
            PairShape::SquareWell { radius, .. } => vec![radius],
            PairShape::HardCoreShoulder { core, radius, .. } => vec![core, radius],
            PairShape::InversePower { cutoff, .. } => vec![cutoff],
            PairShape::Tabulated { ref radii, .. } => radii.clone(),
        }
    }

    fn validate(&self) -> Result<(), PotentialError> {
        let bad = |m: &str| Err(PotentialError::Invalid(m.to_string()));
        match *self {
            PairShape::Zero => Ok(()),
            PairShape::HardCore { radius } if !(radius >= 0.0) => bad("hard-core radius must be nonnegative"),
            PairShape::SquareWell { radius, height } if !(radius >= 0.0 && height.is_finite()) => {
                bad("square well needs a nonnegative radius and finite height")
            }
            PairShape::HardCoreShoulder { core, height, radius }
                if !(core >= 0.0 && radius >= core && height.is_finite()) =>
            {
                bad("shoulder needs 0 <= core <= radius and finite height")
            }
            PairShape::InversePower { coefficient, cutoff, .. } if !(coefficient >= 0.0 && cutoff > 0.0) => {
                bad("inverse power needs coefficient >= 0 (bounded below) and cutoff > 0")
            }
            PairShape::Gaussian { width, height } if !(width > 0.0 && height.is_finite()) => {
                bad("gaussian needs a positive width")
            }
            PairShape::Tabulated { ref radii, ref values } => {
                if radii.is_empty() || radii.len() != values.len() {
                    return bad("table needs matching, nonempty radius and value columns");
                }
                if radii[0] < 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("table radii must be nonnegative and strictly increasing");
                }
                let first_finite = values.iter().position(|v| v.is_finite()).unwrap_or(values.len());
                if values[first_finite..].iter().any(|v| v.is_infinite()) {
                    return bad("infinite table entries must form a prefix (the hard core)");
                }
                if first_finite == values.len() {
                    return bad("table has no finite entries");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn tabulated_eval(radii: &[f64], values: &[ExtReal], r: f64) -> ExtReal {
    let last = radii.len() - 1;
    if r > radii[last] {
        return ExtReal::ZERO;
    }
    if r <= radii[0] {
        return values[0];
    }
    let k = radii.partition_point(|&x| x < r) - 1;
    match (values[k], values[k + 1]) {
        (_, ExtReal::Infinite) => ExtReal::Infinite,
        // between the last infinite node and the first finite one
        (ExtReal::Infinite, right) => right,
        (ExtReal::Finite(a), ExtReal::Finite(b)) => {
            let t = (r - radii[k]) / (radii[k + 1] - radii[k]);
            ExtReal::Finite(a + t * (b - a))
        }
    }
}

/// Soft-core versus hard-core classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoreClass {
    SoftCore,
    HardCore,
}

/// Radial pair interaction `v(|x - y|)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialPairPotential {
    shape: PairShape,
    amplitude: f64,
    length: f64,
    cutoff: Option<f64>,
}

impl RadialPairPotential {
    pub fn new(shape: PairShape) -> Result<Self, PotentialError> {
        shape.validate()?;
        Ok(Self { shape, amplitude: 1.0, length: 1.0, cutoff: None })
    }

    pub fn zero() -> Self {
        Self::new(PairShape::Zero).unwrap()
    }

    pub fn hard_core(radius: f64) -> Result<Self, PotentialError> {
        Self::new(PairShape::HardCore { radius })
    }

    pub fn square_well(height: f64, radius: f64) -> Result<Self, PotentialError> {
        Self::new(PairShape::SquareWell { height, radius })
    }

    pub fn gaussian(height: f64, width: f64) -> Result<Self, PotentialError> {
        Self::new(PairShape::Gaussian { height, width })
    }

    pub fn shape(&self) -> &PairShape {
        &self.shape
    }

    /// `v(r)` for `r ≥ 0`.
    pub fn eval(&self, r: f64) -> ExtReal {
        if let Some(c) = self.cutoff {
            if r > c {
                return ExtReal::ZERO;
            }
        }
        match self.shape.eval(r / self.length) {
            ExtReal::Finite(x) => ExtReal::Finite(self.amplitude * x),
            ExtReal::Infinite => ExtReal::Infinite,
        }
    }

    /// Value with infinity mapped to `None`; convenient inside quadratures
    /// that only run outside the hard core.
    pub fn finite_value(&self, r: f64) -> Option<f64> {
        self.eval(r).finite()
    }

    /// The radius `a = sup{r : v(r) = ∞}`.
    pub fn hard_core_radius(&self) -> f64 {
        self.length * self.shape.core()
    }

    /// `inf v`.
    pub fn lower_bound(&self) -> f64 {
        self.amplitude * self.shape.lower_bound()
    }

    /// `R*` when the potential vanishes beyond a finite radius.
    pub fn support_radius(&self) -> Option<f64> {
        let own = self.shape.support().map(|s| s * self.length);
        match (own, self.cutoff) {
            (Some(a), Some(c)) => Some(a.min(c)),
            (Some(a), None) => Some(a),
            (None, c) => c,
        }
    }

    /// A radius beyond which `v` is numerically zero.
    pub fn effective_support(&self) -> f64 {
        let own = self.shape.effective_support() * self.length;
        self.cutoff.map_or(own, |c| own.min(c))
    }

    /// Radii where `v` is discontinuous or changes formula.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.shape.breakpoints().iter().map(|x| x * self.length).collect();
        b.extend(self.cutoff);
        b
    }

    /// True for `v ≡ 0`.
    pub fn is_zero(&self) -> bool {
        matches!(self.shape, PairShape::Zero)
    }

    /// `v · 1_{[0, radius]}`.
    pub fn truncated(&self, radius: f64) -> Self {
        let mut out = self.clone();
        out.cutoff = Some(self.cutoff.map_or(radius, |c| c.min(radius)));
        out
    }

    /// Scale the amplitude and length: `r ↦ amplitude · v(r / length)`.
    fn scaled(&self, amplitude: f64, length: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            amplitude: self.amplitude * amplitude,
            length: self.length * length,
            cutoff: self.cutoff.map(|c| c * length),
        }
    }
}

/// `r ↦ ξ^{-2} v(r/ξ)`; the scattering length scales by `ξ`.
pub fn rescale_gp(v: &RadialPairPotential, xi: f64) -> RadialPairPotential {
    assert!(xi > 0.0, "rescaling factor must be positive");
    v.scaled(xi.powi(-2), xi)
}

/// `r ↦ N^{d-1} v(rN)`.
pub fn rescale_hartree(v: &RadialPairPotential, n: usize, d: usize) -> RadialPairPotential {
    assert!(n >= 1, "particle count must be positive");
    assert!((1..=3).contains(&d), "dimension must be 1, 2 or 3");
    let n = n as f64;
    v.scaled(n.powi(d as i32 - 1), 1.0 / n)
}

/// Soft-core iff `a = 0` and `∫_{B_1(0)} v(|x|) dx < ∞`.
pub fn classify(v: &RadialPairPotential, d: usize) -> Result<CoreClass, PotentialError> {
    if v.hard_core_radius() > 0.0 {
        return Ok(CoreClass::HardCore);
    }
    let omega = quad::unit_sphere_area(d);
    let integrand = |r: f64| match v.eval(r) {
        ExtReal::Finite(x) => omega * x * r.powi(d as i32 - 1),
        ExtReal::Infinite => f64::INFINITY,
    };
    match quad::integrate_to_origin(integrand, 1.0, &v.breakpoints()) {
        Improper::Finite(_) => Ok(CoreClass::SoftCore),
        Improper::Infinite => Ok(CoreClass::HardCore),
        Improper::Indeterminate { partial_sums } => Err(PotentialError::Indeterminate {
            last: partial_sums.last().copied(),
            partial_sums,
        }),
    }
}

/// Result of checking the Green-function integrability condition.
#[derive(Clone, Debug, PartialEq)]
pub struct HartreeAssumption {
    pub holds: bool,
    /// `∫_{B_ε(0)} |y|^{-1} ṽ(|y|) dy` (`+∞` when the check fails).
    pub integral: ExtReal,
}

const HULL_SAMPLES_PER_OCTAVE: usize = 64;

/// Check, in d = 3, that a decreasing envelope `ṽ ≥ v` on `(0, ε)` satisfies
/// `∫_{B_ε(0)} |y|^{-1} ṽ(|y|) dy < ∞`.
///
/// Without an explicit envelope the smallest decreasing majorant of `v`
/// (running maximum from the right) is built on a log-spaced sample grid.
pub fn validate_hartree_assumption(
    v: &RadialPairPotential,
    epsilon: f64,
    envelope: Option<&dyn Fn(f64) -> f64>,
) -> Result<HartreeAssumption, PotentialError> {
    if !(epsilon > 0.0) {
        return Err(PotentialError::Precondition("epsilon must be positive".into()));
    }
    if v.hard_core_radius() > 0.0 {
        return Err(PotentialError::Precondition(
            "the Green-function condition concerns soft-core potentials".into(),
        ));
    }
    let samples_in = |lo: f64, hi: f64| -> Vec<f64> {
        (0..=HULL_SAMPLES_PER_OCTAVE)
            .map(|j| hi * (lo / hi).powf(j as f64 / HULL_SAMPLES_PER_OCTAVE as f64))
            .collect()
    };
    let value = |r: f64| v.eval(r).to_f64();

    if let Some(env) = envelope {
        // precondition: decreasing and dominating on a probe grid
        let mut previous = f64::NEG_INFINITY;
        for k in (0..40).rev() {
            let hi = epsilon * 0.5f64.powi(k);
            for r in samples_in(0.5 * hi, hi).into_iter().rev() {
                let e = env(r);
                if e < previous - 1e-12 * previous.abs() {
                    return Err(PotentialError::Precondition("envelope is not decreasing".into()));
                }
                if e < value(r) {
                    return Err(PotentialError::Precondition("envelope does not dominate v".into()));
                }
                previous = e;
            }
        }
        let result = quad::integrate_to_origin(|r| 4.0 * PI * env(r) * r, epsilon, &[]);
        return Ok(verdict(result));
    }

    // Piecewise-constant running maximum, integrated exactly against 4π r dr.
    let mut running_max = f64::NEG_INFINITY;
    let result = quad::shell_series(epsilon, epsilon, |lo, hi| {
        let pts = samples_in(lo, hi);
        let mut shell = 0.0;
        for w in pts.windows(2) {
            let (outer, inner) = (w[0], w[1]);
            running_max = running_max.max(value(inner)).max(value(outer));
            if running_max == f64::INFINITY {
                return f64::INFINITY;
            }
            shell += 4.0 * PI * running_max * 0.5 * (outer * outer - inner * inner);
        }
        shell
    });
    Ok(verdict(result))
}

fn verdict(result: Improper) -> HartreeAssumption {
    match result {
        Improper::Finite(x) => HartreeAssumption { holds: true, integral: ExtReal::Finite(x) },
        _ => HartreeAssumption { holds: false, integral: ExtReal::Infinite },
    }
}

/// Confining trap potential `W`.
#[derive(Clone, Debug, PartialEq)]
pub enum TrapPotential {
    /// `W ≡ 0`. Not confining; accepted for test runs only.
    Free,
    /// `W(x) = stiffness · |x|²`.
    Harmonic { stiffness: f64 },
    /// `0` inside the open ball, `∞` outside.
    HardWallBall { radius: f64 },
    /// Radial table `|x| ↦ W`, linearly interpolated and continued beyond
    /// the last node by the quadratic envelope `W_last (r / r_last)²`.
    Tabulated { radii: Vec<f64>, values: Vec<ExtReal> },
}

impl TrapPotential {
    pub fn harmonic(stiffness: f64) -> Result<Self, PotentialError> {
        if !(stiffness > 0.0) {
            return Err(PotentialError::Invalid("harmonic stiffness must be positive".into()));
        }
        Ok(TrapPotential::Harmonic { stiffness })
    }

    pub fn hard_wall(radius: f64) -> Result<Self, PotentialError> {
        if !(radius > 0.0) {
            return Err(PotentialError::Invalid("ball radius must be positive".into()));
        }
        Ok(TrapPotential::HardWallBall { radius })
    }

    pub fn tabulated(radii: Vec<f64>, values: Vec<ExtReal>) -> Result<Self, PotentialError> {
        let bad = |m: &str| Err(PotentialError::Invalid(m.to_string()));
        if radii.len() < 2 || radii.len() != values.len() {
            return bad("trap table needs at least two rows");
        }
        if radii[0] != 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
            return bad("trap table radii must start at 0 and increase");
        }
        if values.iter().any(|v| v.finite().is_some_and(|x| x < 0.0)) {
            return bad("trap values must be nonnegative");
        }
        if values[0].is_infinite() {
            return bad("the origin must lie where the trap is finite");
        }
        match values.last().unwrap() {
            ExtReal::Finite(x) if *x <= 0.0 => return bad("last trap value must be positive (confinement)"),
            _ => {}
        }
        Ok(TrapPotential::Tabulated { radii, values })
    }

    /// `W` as a function of `|x|`.
    pub fn eval_radial(&self, r: f64) -> ExtReal {
        match self {
            TrapPotential::Free => ExtReal::ZERO,
            TrapPotential::Harmonic { stiffness } => ExtReal::Finite(stiffness * r * r),
            TrapPotential::HardWallBall { radius } => {
                if r < *radius {
                    ExtReal::ZERO
                } else {
                    ExtReal::Infinite
                }
            }
            TrapPotential::Tabulated { radii, values } => {
                let last = radii.len() - 1;
                if r >= radii[last] {
                    return match values[last] {
                        ExtReal::Finite(w) => ExtReal::Finite(w * (r / radii[last]).powi(2)),
                        ExtReal::Infinite => ExtReal::Infinite,
                    };
                }
                let k = radii.partition_point(|&x| x <= r) - 1;
                match (values[k], values[k + 1]) {
                    (ExtReal::Finite(a), ExtReal::Finite(b)) => {
                        let t = (r - radii[k]) / (radii[k + 1] - radii[k]);
                        ExtReal::Finite(a + t * (b - a))
                    }
                    _ => ExtReal::Infinite,
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> ExtReal {
        self.eval_radial(x.iter().map(|c| c * c).sum::<f64>().sqrt())
    }

    /// `inf W`.
    pub fn lower_bound(&self) -> f64 {
        match self {
            TrapPotential::Tabulated { values, .. } => values
                .iter()
                .filter_map(|v| v.finite())
                .fold(f64::INFINITY, f64::min),
            _ => 0.0,
        }
    }

    pub fn is_confining(&self) -> bool {
        !matches!(self, TrapPotential::Free)
    }
}

/// The dN-dimensional lifts `Σ_i W(x_i)` and `Σ_{i<j} v(|x_i - x_j|)`.
#[derive(Clone, Debug)]
pub struct LiftedPotentials<'a> {
    pub particles: usize,
    pub trap: &'a TrapPotential,
    pub pair: &'a RadialPairPotential,
}

impl LiftedPotentials<'_> {
    pub fn trap_sum(&self, positions: &[&[f64]]) -> ExtReal {
        assert_eq!(positions.len(), self.particles);
        positions.iter().map(|x| self.trap.eval(x)).sum()
    }

    pub fn pair_sum(&self, positions: &[&[f64]]) -> ExtReal {
        assert_eq!(positions.len(), self.particles);
        let mut total = ExtReal::ZERO;
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                total = total + self.pair.eval(distance(positions[i], positions[j]));
            }
        }
        total
    }
}

pub fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_examples() {
        let hard = RadialPairPotential::hard_core(1.0).unwrap();
        assert_eq!(classify(&hard, 3).unwrap(), CoreClass::HardCore);
        assert_eq!(classify(&RadialPairPotential::zero(), 3).unwrap(), CoreClass::SoftCore);
        let coulomb = RadialPairPotential::new(PairShape::InversePower {
            coefficient: 1.0,
            exponent: 1.0,
            cutoff: 1.0,
        })
        .unwrap();
        assert_eq!(classify(&coulomb, 3).unwrap(), CoreClass::SoftCore);
        // r^{-3} in d = 3 diverges logarithmically
        let cube = RadialPairPotential::new(PairShape::InversePower {
            coefficient: 1.0,
            exponent: 3.0,
            cutoff: 1.0,
        })
        .unwrap();
        assert_eq!(classify(&cube, 3).unwrap(), CoreClass::HardCore);
        // ... but r^{-3} is integrable enough in no dimension below 4; r^{-1.5} in d=2 is not
        let p15 = RadialPairPotential::new(PairShape::InversePower {
            coefficient: 1.0,
            exponent: 2.5,
            cutoff: 1.0,
        })
        .unwrap();
        assert_eq!(classify(&p15, 2).unwrap(), CoreClass::HardCore);
    }

    #[test]
    fn inverse_power_ball_integral_matches_closed_form() {
        // ∫_{B_1} |x|^{-1} dx = 4π ∫_0^1 r dr = 2π
        let v = RadialPairPotential::new(PairShape::InversePower {
            coefficient: 1.0,
            exponent: 1.0,
            cutoff: 1.0,
        })
        .unwrap();
        let f = |r: f64| 4.0 * PI * v.eval(r).to_f64() * r * r;
        match quad::integrate_to_origin(f, 1.0, &v.breakpoints()) {
            Improper::Finite(x) => assert!((x - 2.0 * PI).abs() < 1e-6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rescalings() {
        let v = RadialPairPotential::square_well(2.0, 1.0).unwrap();
        assert_eq!(rescale_gp(&v, 1.0), v);
        assert_eq!(rescale_hartree(&v, 1, 3), v);
        let hc = RadialPairPotential::hard_core(1.0).unwrap();
        assert_eq!(rescale_gp(&hc, 0.5).hard_core_radius(), 0.5);
        assert_eq!(rescale_hartree(&hc, 4, 3).hard_core_radius(), 0.25);
        let v2 = rescale_gp(&rescale_gp(&v, 0.3), 4.0);
        let v12 = rescale_gp(&v, 1.2);
        for k in 0..200 {
            let r = k as f64 * 0.01;
            let (a, b) = (v2.eval(r).to_f64(), v12.eval(r).to_f64());
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "r = {r}: {a} vs {b}");
        }
    }

    #[test]
    fn hartree_rescaling_divides_the_integral_by_n() {
        // oracle: ∫ v_N(|y|) dy in d = 3 by radial quadrature equals ∫ v / N
        let v = RadialPairPotential::gaussian(1.5, 0.7).unwrap();
        let total = |p: &RadialPairPotential| {
            quad::integrate(|r| 4.0 * PI * r * r * p.eval(r).to_f64(), 0.0, p.effective_support(), &[], 64)
        };
        for n in [2usize, 5, 16] {
            let ratio = total(&rescale_hartree(&v, n, 3)) / total(&v);
            assert!((ratio - 1.0 / n as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn classification_is_scale_invariant() {
        let soft = RadialPairPotential::gaussian(3.0, 0.4).unwrap();
        let hard = RadialPairPotential::hard_core(0.7).unwrap();
        for v in [soft, hard] {
            let c = classify(&v, 3).unwrap();
            assert_eq!(classify(&rescale_gp(&v, 0.25), 3).unwrap(), c);
            assert_eq!(classify(&rescale_hartree(&v, 8, 3), 3).unwrap(), c);
        }
    }

    #[test]
    fn green_function_condition() {
        let bounded = RadialPairPotential::square_well(3.0, 1.0).unwrap();
        assert!(validate_hartree_assumption(&bounded, 0.5, None).unwrap().holds);
        let coulomb = RadialPairPotential::new(PairShape::InversePower {
            coefficient: 1.0,
            exponent: 1.0,
            cutoff: 2.0,
        })
        .unwrap();
        let res = validate_hartree_assumption(&coulomb, 0.5, None).unwrap();
        assert!(res.holds);
        // 4π ∫_0^ε r^{-1} r dr = 4π ε; the hull is slightly above v on each sample cell
        let got = res.integral.to_f64();
        assert!((got - 2.0 * PI).abs() < 0.05 * 2.0 * PI, "{got}");
        let cube = RadialPairPotential::new(PairShape::InversePower {
            coefficient: 1.0,
            exponent: 3.0,
            cutoff: 2.0,
        })
        .unwrap();
        assert!(!validate_hartree_assumption(&cube, 0.5, None).unwrap().holds);
        let increasing = |r: f64| r;
        assert!(matches!(
            validate_hartree_assumption(&bounded, 0.5, Some(&increasing)),
            Err(PotentialError::Precondition(_))
        ));
    }

    #[test]
    fn tabulated_pair_with_core() {
        let v = RadialPairPotential::new(PairShape::Tabulated {
            radii: vec![0.0, 0.5, 1.0, 2.0],
            values: vec![ExtReal::Infinite, ExtReal::Infinite, ExtReal::Finite(4.0), ExtReal::Finite(0.0)],
        })
        .unwrap();
        assert_eq!(v.hard_core_radius(), 0.5);
        assert!(v.eval(0.3).is_infinite());
        assert_eq!(v.eval(0.7), ExtReal::Finite(4.0));
        assert_eq!(v.eval(1.5), ExtReal::Finite(2.0));
        assert_eq!(v.eval(3.0), ExtReal::ZERO);
        let bad = RadialPairPotential::new(PairShape::Tabulated {
            radii: vec![0.0, 1.0, 2.0],
            values: vec![ExtReal::Finite(1.0), ExtReal::Infinite, ExtReal::Finite(0.0)],
        });
        assert!(bad.is_err());
    }

    #[test]
    fn trap_table_extrapolates_by_envelope() {
        let w = TrapPotential::tabulated(vec![0.0, 1.0, 2.0], vec![0.0.into(), 1.0.into(), 4.0.into()]).unwrap();
        assert_eq!(w.eval_radial(0.5), ExtReal::Finite(0.5));
        assert_eq!(w.eval_radial(4.0), ExtReal::Finite(16.0));
        assert!(TrapPotential::tabulated(vec![0.0, 1.0], vec![0.0.into(), 0.0.into()]).is_err());
        let ball = TrapPotential::hard_wall(1.0).unwrap();
        assert!(ball.eval(&[0.6, 0.9]).is_infinite());
        assert_eq!(ball.eval(&[0.0, 0.0]), ExtReal::ZERO);
    }

    #[test]
    fn lifted_sums_match_direct_summation() {
        let w = TrapPotential::harmonic(1.0).unwrap();
        let v = RadialPairPotential::gaussian(1.0, 1.0).unwrap();
        let lifted = LiftedPotentials { particles: 3, trap: &w, pair: &v };
        let xs = [[0.1, 0.2], [-1.0, 0.5], [0.3, -0.7]];
        let refs: Vec<&[f64]> = xs.iter().map(|x| &x[..]).collect();
        let trap: f64 = xs.iter().map(|x| x[0] * x[0] + x[1] * x[1]).sum();
        assert!((lifted.trap_sum(&refs).to_f64() - trap).abs() < 1e-14);
        let mut pair = 0.0;
        for i in 0..3 {
            for j in i + 1..3 {
                pair += (-distance(&xs[i], &xs[j]).powi(2)).exp();
            }
        }
        assert!((lifted.pair_sum(&refs).to_f64() - pair).abs() < 1e-14);
    }
}
