//! Illness-death model: the prevalence balance law, misclassification
//! correction, integration along characteristics, and the specificity solve.
//!
//! Along a characteristic (a birth cohort, `t - a` constant) the true
//! prevalence obeys
//!
//! ```text
//! dp/dτ = (1 - p) · { i - m · p · (R - 1) / [1 + p · (R - 1)] }
//! ```
//!
//! Observed prevalence and incidence are contaminated by imperfect
//! sensitivity/specificity. Given a sensitivity, the specificity is the value
//! that makes the corrected observations satisfy the balance law over one
//! survey interval.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roots::{brent, Tolerance};
use crate::scalar::Real;

/// Smallest admissible Youden index `se + sp - 1`.
pub const MIN_YOUDEN: f64 = 1e-6;
/// Upper end of the specificity search is `1 - SP_UPPER_GAP`.
pub const SP_UPPER_GAP: f64 = 1e-9;
/// Lower end of the specificity search never goes below this.
pub const SP_FLOOR: f64 = 0.5;

const SCAN_INTERVALS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IdmError {
    #[error("invalid accuracy: se = {se}, sp = {sp} (need se, sp in (0, 1] and se + sp - 1 > {MIN_YOUDEN})")]
    InvalidAccuracy { se: f64, sp: f64 },
    #[error("invalid epidemiological state: {0}")]
    InvalidState(String),
    #[error("invalid characteristic inputs: {0}")]
    InvalidInputs(String),
    #[error("non-finite hazard at t = {t}, a = {a}")]
    NonFiniteField { t: f64, a: f64 },
    #[error("step count must be at least 1")]
    ZeroSteps,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("no admissible specificity root for se = {se}")]
    NoRoot { se: f64 },
    #[error("invalid sensitivity {0}")]
    InvalidSensitivity(f64),
}

/// Sensitivity and specificity of the coded diagnoses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPair<T> {
    se: T,
    sp: T,
}

impl<T: Real> AccuracyPair<T> {
    pub fn new(se: T, sp: T) -> Result<Self, IdmError> {
        let ok = se > T::zero()
            && se <= T::one()
            && sp > T::zero()
            && sp <= T::one()
            && se + sp - T::one() > T::lit(MIN_YOUDEN);
        if ok {
            Ok(Self { se, sp })
        } else {
            Err(IdmError::InvalidAccuracy { se: se.as_f64(), sp: sp.as_f64() })
        }
    }

    pub fn perfect() -> Self {
        Self { se: T::one(), sp: T::one() }
    }

    pub fn se(&self) -> T {
        self.se
    }

    pub fn sp(&self) -> T {
        self.sp
    }

    pub fn fpr(&self) -> T {
        T::one() - self.sp
    }

    pub fn fnr(&self) -> T {
        T::one() - self.se
    }

    pub fn youden(&self) -> T {
        self.se + self.sp - T::one()
    }
}

/// True proportion from an observed one: `(obs - 1 + sp) / (se + sp - 1)`.
///
/// The result may fall outside `[0, 1]`; callers decide what that means.
#[inline]
pub fn correct_proportion<T: Real>(obs: T, acc: &AccuracyPair<T>) -> T {
    (obs - acc.fpr()) / acc.youden()
}

/// Observed proportion produced by a true one: `se·x + (1 - sp)·(1 - x)`.
#[inline]
pub fn apparent_proportion<T: Real>(true_value: T, acc: &AccuracyPair<T>) -> T {
    acc.se * true_value + acc.fpr() * (T::one() - true_value)
}

/// Prevalence, incidence, general mortality and mortality rate ratio at one
/// point of the Lexis diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpiPoint<T> {
    pub p: T,
    pub i: T,
    pub m: T,
    pub ratio: T,
}

impl<T: Real> EpiPoint<T> {
    pub fn new(p: T, i: T, m: T, ratio: T) -> Result<Self, IdmError> {
        if !(p >= T::zero() && p <= T::one()) {
            return Err(IdmError::InvalidState(format!("prevalence {p} outside [0, 1]")));
        }
        if !(i >= T::zero()) || !(m >= T::zero()) {
            return Err(IdmError::InvalidState(format!("negative rate (i = {i}, m = {m})")));
        }
        if !(ratio > T::zero()) {
            return Err(IdmError::InvalidState(format!("mortality rate ratio {ratio} not positive")));
        }
        Ok(Self { p, i, m, ratio })
    }
}

/// Right-hand side of the prevalence balance law.
#[inline]
pub fn pde_rhs<T: Real>(state: &EpiPoint<T>) -> T {
    balance_rhs(state.p, state.i, state.m, state.ratio)
}

/// Unchecked form of [`pde_rhs`]; also used with corrected prevalences that
/// may lie outside `[0, 1]` while searching.
#[inline]
pub fn balance_rhs<T: Real>(p: T, i: T, m: T, ratio: T) -> T {
    let excess = ratio - T::one();
    (T::one() - p) * (i - m * p * excess / (T::one() + p * excess))
}

/// Hazards seen by a cohort at calendar time `t` and age `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hazards<T> {
    pub incidence: T,
    pub mortality: T,
    pub ratio: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrated<T> {
    pub p: T,
    /// The raw integration result left `[0, 1]` and was clamped.
    pub clamped: bool,
}

/// Integrates the balance law along `t = t0 + τ`, `a = a0 + τ` for
/// `τ ∈ [0, delta]` with `steps` classical Runge-Kutta steps.
pub fn integrate_characteristic<T, F>(
    p0: T,
    field: F,
    t0: T,
    a0: T,
    delta: T,
    steps: usize,
) -> Result<Integrated<T>, IdmError>
where
    T: Real,
    F: Fn(T, T) -> Hazards<T>,
{
    if steps == 0 {
        return Err(IdmError::ZeroSteps);
    }
    if !(p0 >= T::zero() && p0 <= T::one()) {
        return Err(IdmError::InvalidState(format!("initial prevalence {p0} outside [0, 1]")));
    }
    let h = delta / T::lit(steps as f64);
    let half = T::lit(0.5);
    let sixth = T::lit(1.0 / 6.0);
    let two = T::lit(2.0);

    let rhs = |tau: T, p: T| -> Result<T, IdmError> {
        let (t, a) = (t0 + tau, a0 + tau);
        let hz = field(t, a);
        if !(hz.incidence.is_finite() && hz.mortality.is_finite() && hz.ratio.is_finite()) {
            return Err(IdmError::NonFiniteField { t: t.as_f64(), a: a.as_f64() });
        }
        Ok(balance_rhs(p, hz.incidence, hz.mortality, hz.ratio))
    };

    let mut p = p0;
    for k in 0..steps {
        let tau = h * T::lit(k as f64);
        let k1 = rhs(tau, p)?;
        let k2 = rhs(tau + half * h, p + half * h * k1)?;
        let k3 = rhs(tau + half * h, p + half * h * k2)?;
        let k4 = rhs(tau + h, p + h * k3)?;
        p = p + h * sixth * (k1 + two * k2 + two * k3 + k4);
    }

    if !p.is_finite() {
        return Err(IdmError::NonFiniteField { t: (t0 + delta).as_f64(), a: (a0 + delta).as_f64() });
    }
    let clamped = p < T::zero() || p > T::one();
    Ok(Integrated { p: p.max(T::zero()).min(T::one()), clamped })
}

/// How the balance law is discretized over one survey interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Rates and the averaged corrected prevalence at the characteristic
    /// midpoint only. Second order in the survey gap.
    Midpoint,
    /// Hermite-Simpson: the balance law at both endpoints and at the midpoint,
    /// with the midpoint prevalence from cubic Hermite interpolation. Fourth
    /// order in the survey gap.
    #[default]
    HermiteSimpson,
    /// Shooting: the corrected start prevalence is carried along the
    /// characteristic with `steps` classical Runge-Kutta steps and compared
    /// with the corrected end prevalence.
    Rk4 { steps: usize },
}

impl Quadrature {
    /// Number of equally spaced rate nodes along the characteristic.
    pub fn node_count(self) -> usize {
        match self {
            Quadrature::Midpoint => 1,
            Quadrature::HermiteSimpson => 3,
            Quadrature::Rk4 { steps } => 2 * steps + 1,
        }
    }

    /// Position of each node as a fraction of the survey gap.
    pub fn node_fractions(self) -> Vec<f64> {
        match self.node_count() {
            1 => vec![0.5],
            n => (0..n).map(|k| k as f64 / (n - 1) as f64).collect(),
        }
    }
}

/// Observed incidence, mortality and rate ratio at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedRates<T> {
    pub i_obs: T,
    pub m: T,
    pub ratio: T,
}

impl<T: Real> ObservedRates<T> {
    fn check(&self, node: usize) -> Result<(), IdmError> {
        if !(self.i_obs > T::zero() && self.i_obs.is_finite()) {
            return Err(IdmError::InvalidInputs(format!("observed incidence {} at node {node}", self.i_obs)));
        }
        if !(self.m >= T::zero() && self.m.is_finite()) {
            return Err(IdmError::InvalidInputs(format!("mortality {} at node {node}", self.m)));
        }
        if !(self.ratio > T::zero() && self.ratio.is_finite()) {
            return Err(IdmError::InvalidInputs(format!("mortality rate ratio {} at node {node}", self.ratio)));
        }
        Ok(())
    }
}

/// Everything the specificity solve needs for one (grid age, sex) cell.
///
/// The start and end prevalences are observed at `(t1, a - δ/2)` and
/// `(t2, a + δ/2)`. `nodes` holds the rates at the positions given by
/// [`Quadrature::node_fractions`] along the characteristic; for the
/// midpoint rule that is the single point `(t_mid, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicInputs<T> {
    pub p_obs_start: T,
    pub p_obs_end: T,
    pub delta: T,
    pub nodes: Vec<ObservedRates<T>>,
    pub quadrature: Quadrature,
}

impl<T: Real> CharacteristicInputs<T> {
    /// Midpoint-only inputs, solved with [`Quadrature::Midpoint`].
    pub fn new(
        p_obs_start: T,
        p_obs_end: T,
        i_obs_mid: T,
        m_mid: T,
        ratio_mid: T,
        delta: T,
    ) -> Result<Self, IdmError> {
        let mid = ObservedRates { i_obs: i_obs_mid, m: m_mid, ratio: ratio_mid };
        Self::with_nodes(p_obs_start, p_obs_end, vec![mid], delta, Quadrature::Midpoint)
    }

    pub fn with_nodes(
        p_obs_start: T,
        p_obs_end: T,
        nodes: Vec<ObservedRates<T>>,
        delta: T,
        quadrature: Quadrature,
    ) -> Result<Self, IdmError> {
        let unit = |x: T| x > T::zero() && x < T::one();
        if !unit(p_obs_start) || !unit(p_obs_end) {
            return Err(IdmError::InvalidInputs(format!(
                "observed prevalences ({p_obs_start}, {p_obs_end}) must lie in (0, 1)"
            )));
        }
        if nodes.len() != quadrature.node_count() || nodes.is_empty() {
            return Err(IdmError::InvalidInputs(format!(
                "{quadrature:?} needs {} rate nodes, got {}",
                quadrature.node_count(),
                nodes.len()
            )));
        }
        for (k, n) in nodes.iter().enumerate() {
            n.check(k)?;
        }
        if !(delta > T::zero()) {
            return Err(IdmError::InvalidInputs(format!("survey gap {delta}")));
        }
        Ok(Self { p_obs_start, p_obs_end, delta, nodes, quadrature })
    }

    /// Rates at the characteristic midpoint `(t_mid, a)`.
    pub fn mid(&self) -> &ObservedRates<T> {
        &self.nodes[self.nodes.len() / 2]
    }

    /// Corrected start and end prevalence and midpoint incidence.
    pub fn corrected(&self, acc: &AccuracyPair<T>) -> (T, T, T) {
        (
            correct_proportion(self.p_obs_start, acc),
            correct_proportion(self.p_obs_end, acc),
            correct_proportion(self.mid().i_obs, acc),
        )
    }
}

/// Residual of the discretized balance at false-positive ratio `x = 1 - sp`.
#[inline]
fn residual_at<T: Real>(x: T, se: T, inp: &CharacteristicInputs<T>) -> T {
    let half = T::lit(0.5);
    let inv_youden = (se - x).recip();
    let correct = |obs: T| (obs - x) * inv_youden;
    let rhs = |p: T, r: &ObservedRates<T>| balance_rhs(p, correct(r.i_obs), r.m, r.ratio);
    let p1 = correct(inp.p_obs_start);
    let p2 = correct(inp.p_obs_end);
    let delta = inp.delta;
    match (inp.quadrature, inp.nodes.as_slice()) {
        (Quadrature::Midpoint, [mid]) => (p2 - p1) / delta - rhs(half * (p1 + p2), mid),
        (Quadrature::HermiteSimpson, [n0, n1, n2]) => {
            let f1 = rhs(p1, n0);
            let f2 = rhs(p2, n2);
            let p_mid = half * (p1 + p2) + delta * T::lit(0.125) * (f1 - f2);
            let fm = rhs(p_mid, n1);
            (p2 - p1) / delta - (f1 + T::lit(4.0) * fm + f2) / T::lit(6.0)
        }
        (Quadrature::Rk4 { steps }, nodes) => {
            let h = delta / T::lit(steps as f64);
            let mut p = p1;
            for w in nodes.windows(3).step_by(2) {
                let k1 = rhs(p, &w[0]);
                let k2 = rhs(p + half * h * k1, &w[1]);
                let k3 = rhs(p + half * h * k2, &w[1]);
                let k4 = rhs(p + h * k3, &w[2]);
                p = p + h / T::lit(6.0) * (k1 + T::lit(2.0) * (k2 + k3) + k4);
            }
            (p2 - p) / delta
        }
        _ => T::nan(),
    }
}

/// Balance residual `g(sp)`: finite difference of the corrected prevalence
/// over the interval minus the discretized right-hand side.
pub fn specificity_residual<T: Real>(sp: T, se: T, inputs: &CharacteristicInputs<T>) -> T {
    residual_at(T::one() - sp, se, inputs)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveFlags {
    /// More than one admissible root in the search interval.
    pub multiple_roots: bool,
    /// The returned root corrects an observation to a value outside `[0, 1]`.
    pub clamped_correction: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecificityEstimate<T> {
    pub sp: T,
    pub residual: T,
    pub flags: SolveFlags,
    pub iterations: usize,
}

impl<T: Real> SpecificityEstimate<T> {
    pub fn fpr(&self) -> T {
        T::one() - self.sp
    }
}

fn corrections_admissible<T: Real>(x: T, se: T, inp: &CharacteristicInputs<T>) -> bool {
    let youden = se - x;
    let unit = |obs: T| {
        let v = (obs - x) / youden;
        v >= T::zero() && v <= T::one()
    };
    unit(inp.p_obs_start) && unit(inp.p_obs_end) && inp.nodes.iter().all(|r| unit(r.i_obs))
}

/// Solves the balance residual for specificity given sensitivity `se`.
///
/// Scans `[max(0.5, 1 - se + 1e-6), 1 - 1e-9]` for sign changes, refines
/// each with Brent's method and returns the root nearest to 1. Sign changes
/// across a pole of the residual are discarded. Only roots whose corrected
/// values lie in `[0, 1]` count towards `multiple_roots`.
pub fn solve_specificity<T: Real>(
    se: T,
    inputs: &CharacteristicInputs<T>,
) -> Result<SpecificityEstimate<T>, SolveError> {
    if !(se > T::zero() && se <= T::one()) {
        return Err(SolveError::InvalidSensitivity(se.as_f64()));
    }
    let x_lo = T::lit(SP_UPPER_GAP);
    let x_hi = (T::one() - T::lit(SP_FLOOR)).min(se - T::lit(MIN_YOUDEN));
    if !(x_hi > x_lo) {
        return Err(SolveError::NoRoot { se: se.as_f64() });
    }

    let g = |x: T| residual_at(x, se, inputs);
    let tol = Tolerance::<T>::default();
    // A converged sign change with a residual this large is a pole.
    let accept = |r: T| r.abs() <= T::lit(1e-8);

    // Quadratic node spacing: fine near sp = 1 where plausible roots live.
    let node = |j: usize| {
        let u = T::lit(j as f64 / SCAN_INTERVALS as f64);
        x_lo + (x_hi - x_lo) * u * u
    };

    let mut roots: Vec<(T, T, usize)> = Vec::new();
    // A root in [1 - 1e-9, 1] is reported at the upper search bound.
    let g_one = g(T::zero());
    let g_first = g(x_lo);
    if g_first == T::zero()
        || (g_one.is_finite() && (g_one.abs() <= tol.ftol || g_one.signum() != g_first.signum()))
    {
        roots.push((x_lo, g_first, 0));
    }

    let mut prev = (x_lo, g_first);
    for j in 1..=SCAN_INTERVALS {
        let x = node(j);
        let gx = g(x);
        if gx.is_finite() && prev.1.is_finite() && prev.1 != T::zero() {
            if gx == T::zero() {
                roots.push((x, gx, 0));
            } else if gx.signum() != prev.1.signum() {
                if let Ok(r) = brent(g, prev.0, x, prev.1, gx, tol) {
                    if accept(r.fx) {
                        roots.push((r.x, r.fx, r.iterations));
                    }
                }
            }
        }
        prev = (x, gx);
    }

    let &(x, residual, iterations) = roots.first().ok_or(SolveError::NoRoot { se: se.as_f64() })?;
    let admissible = roots.iter().filter(|r| corrections_admissible(r.0, se, inputs)).count();
    let flags = SolveFlags {
        multiple_roots: admissible > 1,
        clamped_correction: !corrections_admissible(x, se, inputs),
    };
    Ok(SpecificityEstimate { sp: T::one() - x, residual, flags, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acc(se: f64, sp: f64) -> AccuracyPair<f64> {
        AccuracyPair::new(se, sp).unwrap()
    }

    #[test]
    fn accuracy_rejects_nonpositive_youden() {
        assert!(AccuracyPair::new(0.5, 0.5).is_err());
        assert!(AccuracyPair::new(1.1, 0.9).is_err());
        assert!(AccuracyPair::new(0.6, 0.4 + 2e-6).is_ok());
        let a = acc(0.9, 0.995);
        assert!((a.fpr() - 0.005).abs() < 1e-15);
        assert!((a.fnr() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rhs_reference_values() {
        let st = |p, i, m, r| EpiPoint::new(p, i, m, r).unwrap();
        assert_eq!(pde_rhs(&st(0.0, 0.013, 0.2, 3.0)), 0.013);
        assert_eq!(pde_rhs(&st(1.0, 0.013, 0.2, 3.0)), 0.0);
        assert!((pde_rhs(&st(0.3f64, 0.02, 0.05, 1.0)) - 0.7 * 0.02).abs() < 1e-15);
        // 0.9 · (0.01 − 0.02·0.1·1/1.1)
        let v: f64 = pde_rhs(&st(0.1, 0.01, 0.02, 2.0));
        assert!((v - 0.9 * (0.01 - 0.002 / 1.1)).abs() < 1e-15);
        assert!((v - 0.007_363_636_363_636).abs() < 1e-12);
    }

    #[test]
    fn epi_point_validation() {
        assert!(EpiPoint::new(1.2, 0.01, 0.01, 2.0).is_err());
        assert!(EpiPoint::new(0.2, -0.01, 0.01, 2.0).is_err());
        assert!(EpiPoint::new(0.2, 0.01, 0.01, 0.0).is_err());
    }

    #[test]
    fn correction_examples() {
        assert_eq!(correct_proportion(0.08, &AccuracyPair::perfect()), 0.08);
        let a = acc(0.9, 0.99);
        assert!(correct_proportion(1.0 - 0.99, &a).abs() < 1e-15);
        assert!((correct_proportion(0.08, &a) - 0.07 / 0.89).abs() < 1e-15);
        assert!((correct_proportion(0.08, &a) - 0.078_651_685).abs() < 1e-9);
        assert!((apparent_proportion(0.0, &a) - 0.01).abs() < 1e-15);
        assert!((apparent_proportion(1.0, &a) - 0.9).abs() < 1e-15);
        for x in [0.0, 0.07, 0.5] {
            let back = correct_proportion(apparent_proportion(x, &a), &a);
            assert!((back - x).abs() < 1e-12);
        }
    }

    #[test]
    fn correction_in_f32() {
        let a = AccuracyPair::new(0.9f32, 0.99).unwrap();
        let back = correct_proportion(apparent_proportion(0.3f32, &a), &a);
        assert!((back - 0.3).abs() < 1e-5);
    }

    #[test]
    fn integrator_fixed_points_and_closed_form() {
        let no_inc = |_: f64, _: f64| Hazards { incidence: 0.0, mortality: 0.02, ratio: 2.0 };
        let r = integrate_characteristic(0.0, no_inc, 2009.0, 40.0, 6.0, 8).unwrap();
        assert_eq!(r.p, 0.0);
        let r = integrate_characteristic(1.0, no_inc, 2009.0, 40.0, 6.0, 8).unwrap();
        assert_eq!(r.p, 1.0);
        assert!(!r.clamped);

        let constant = |_: f64, _: f64| Hazards { incidence: 0.01, mortality: 0.03, ratio: 1.0 };
        let r = integrate_characteristic(0.0, constant, 2009.0, 40.0, 6.0, 64).unwrap();
        assert!((r.p - (1.0 - (-0.06f64).exp())).abs() < 1e-9);
        assert!((r.p - 0.058_235_5).abs() < 1e-7);
    }

    #[test]
    fn integrator_errors() {
        let bad = |_: f64, a: f64| Hazards {
            incidence: if a > 42.0 { f64::NAN } else { 0.01 },
            mortality: 0.01,
            ratio: 2.0,
        };
        assert!(matches!(
            integrate_characteristic(0.1, bad, 2009.0, 40.0, 6.0, 6),
            Err(IdmError::NonFiniteField { .. })
        ));
        let ok = |_: f64, _: f64| Hazards { incidence: 0.01, mortality: 0.01, ratio: 2.0 };
        assert_eq!(integrate_characteristic(0.1, ok, 0.0, 0.0, 1.0, 0), Err(IdmError::ZeroSteps));
    }

    #[test]
    fn characteristic_inputs_validation() {
        assert!(CharacteristicInputs::new(0.0, 0.1, 0.01, 0.01, 2.0, 6.0).is_err());
        assert!(CharacteristicInputs::new(0.05, 0.1, 0.01, 0.01, 2.0, 0.0).is_err());
        assert!(CharacteristicInputs::new(0.05, 0.1, 0.01, 0.01, -1.0, 6.0).is_err());
    }

    #[test]
    fn no_root_when_observed_change_is_unreachable() {
        // Prevalence climbing 0.01 -> 0.9 in six years cannot be balanced by
        // an incidence of 0.1 % per year for any admissible specificity.
        let inp = CharacteristicInputs::new(0.01, 0.9, 0.001, 0.01, 2.0, 6.0).unwrap();
        assert_eq!(solve_specificity(0.9, &inp), Err(SolveError::NoRoot { se: 0.9 }));
    }

    #[test]
    fn residual_finite_outside_unit_interval() {
        let inp = CharacteristicInputs::new(0.02, 0.03, 0.004, 0.01, 2.0, 6.0).unwrap();
        // At sp = 0.9 the corrected prevalences are negative.
        let g: f64 = specificity_residual(0.9, 0.9, &inp);
        assert!(g.is_finite());
    }

    #[test]
    fn invalid_sensitivity() {
        let inp = CharacteristicInputs::new(0.05, 0.06, 0.01, 0.01, 2.0, 6.0).unwrap();
        assert!(matches!(solve_specificity(0.0, &inp), Err(SolveError::InvalidSensitivity(_))));
        assert!(matches!(solve_specificity(1.5, &inp), Err(SolveError::InvalidSensitivity(_))));
    }

    /// Builds observed inputs whose true end prevalence satisfies the
    /// discrete balance exactly at `acc`, so the solver must recover `acc.sp()`.
    fn consistent_inputs(acc: &AccuracyPair<f64>, quadrature: Quadrature) -> CharacteristicInputs<f64> {
        let delta = 6.0;
        let p1 = 0.12;
        let rates = |a: f64| ObservedRates {
            i_obs: apparent_proportion(0.004 * (0.05 * (a - 60.0)).exp(), acc),
            m: 0.01 * (0.09 * (a - 60.0)).exp(),
            ratio: 1.5 + 1.5 / (1.0 + ((a - 55.0) / 10.0).exp()),
        };
        let build = |p2: f64| {
            let nodes = quadrature.node_fractions().iter().map(|f| rates(57.0 + f * delta)).collect();
            CharacteristicInputs::with_nodes(
                apparent_proportion(p1, acc),
                apparent_proportion(p2, acc),
                nodes,
                delta,
                quadrature,
            )
            .unwrap()
        };
        let (mut lo, mut hi) = (0.01, 0.6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let g = specificity_residual(acc.sp(), acc.se(), &build(mid));
            if g < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        build(0.5 * (lo + hi))
    }

    #[test]
    fn recovers_specificity_from_consistent_data() {
        let truth = acc(0.9, 0.995);
        for q in [Quadrature::Midpoint, Quadrature::HermiteSimpson, Quadrature::Rk4 { steps: 3 }] {
            let inp = consistent_inputs(&truth, q);
            let est = solve_specificity(0.9, &inp).unwrap();
            assert!((est.sp - 0.995).abs() < 1e-6, "{q:?}: {}", est.sp);
            assert!(!est.flags.multiple_roots && !est.flags.clamped_correction);
        }
    }

    #[test]
    fn perfect_test_gives_unit_specificity() {
        let inp = consistent_inputs(&AccuracyPair::perfect(), Quadrature::HermiteSimpson);
        let est = solve_specificity(1.0, &inp).unwrap();
        assert!(est.fpr() <= 1e-8, "{}", est.fpr());
    }

    #[test]
    fn midpoint_constructor_matches_midpoint_quadrature() {
        let a = CharacteristicInputs::new(0.05, 0.07, 0.01, 0.02, 2.0, 6.0).unwrap();
        assert_eq!(a.quadrature, Quadrature::Midpoint);
        let x = 0.004f64;
        let p1 = (0.05 - x) / (0.9 - x);
        let p2 = (0.07 - x) / (0.9 - x);
        let i = (0.01 - x) / (0.9 - x);
        let expected = (p2 - p1) / 6.0 - balance_rhs(0.5 * (p1 + p2), i, 0.02, 2.0);
        assert!((specificity_residual(1.0 - x, 0.9, &a) - expected).abs() < 1e-15);
    }

    #[test]
    fn pole_crossings_are_not_roots() {
        // Low prevalence with a large rate ratio: for strongly negative
        // corrected prevalence 1 + p(R - 1) vanishes and the residual jumps sign.
        let r = ObservedRates { i_obs: 0.0062f64, m: 0.0009, ratio: 2.98 };
        for q in [Quadrature::Midpoint, Quadrature::HermiteSimpson, Quadrature::Rk4 { steps: 2 }] {
            let inp = CharacteristicInputs::with_nodes(0.0056, 0.0067, vec![r; q.node_count()], 6.0, q).unwrap();
            let xs: Vec<f64> = (0..=20_000).map(|k| 1e-9 + 0.4999 * k as f64 / 20_000.0).collect();
            let g: Vec<f64> = xs.iter().map(|&x| specificity_residual(1.0 - x, 0.9, &inp)).collect();
            let jumps = g.windows(2).filter(|w| w[0].signum() != w[1].signum() && (w[1] - w[0]).abs() > 0.1);
            assert!(jumps.count() >= 1, "{q:?}: expected a pole in the search range");
            let est = solve_specificity(0.9, &inp).unwrap();
            assert!(est.residual.abs() < 1e-8);
            assert!(!est.flags.multiple_roots);
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn correction_inverts_apparent(se in 0.5f64..1.0, sp in 0.5f64..1.0, x in 0.0f64..1.0) {
                prop_assume!(se + sp - 1.0 > 1e-3);
                let a = AccuracyPair::new(se, sp).unwrap();
                let back = correct_proportion(apparent_proportion(x, &a), &a);
                prop_assert!((back - x).abs() < 1e-9);
            }

            #[test]
            fn integrator_stays_in_unit_interval(
                p0 in 0.0f64..=1.0,
                inc in 0.0f64..2.0,
                mort in 0.0f64..2.0,
                ratio in 0.2f64..20.0,
                steps in 1usize..40,
            ) {
                let field = move |_: f64, _: f64| Hazards { incidence: inc, mortality: mort, ratio };
                let r = integrate_characteristic(p0, field, 2000.0, 30.0, 6.0, steps).unwrap();
                prop_assert!((0.0..=1.0).contains(&r.p));
            }
        }
    }
}
