//! Single-year curves, false-positive counts and empirical quantiles.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{ObservationRecord, Sex};
use crate::illnessdeath::{correct_proportion, AccuracyPair};
use crate::montecarlo::FprDrawMatrix;
use crate::scalar::Real;

/// Ages summed over when converting ratios into counts (inclusive).
pub const COUNT_AGE_MIN: u32 = 20;
pub const COUNT_AGE_MAX: u32 = 100;

/// Quantile levels reported for every distribution.
pub const REPORT_PROBS: [f64; 3] = [0.025, 0.5, 0.975];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregateError {
    #[error("curve has no nodes")]
    EmptyCurve,
    #[error("curve ages must be strictly increasing and match the value count")]
    MalformedCurve,
    #[error("empty sample")]
    EmptySample,
    #[error("non-finite sample value")]
    NonFiniteSample,
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("negative or out-of-range input: {0}")]
    NegativeInput(String),
    #[error("no {0} population records")]
    MissingPopulation(Sex),
}

/// Values on strictly increasing ages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeCurve<T> {
    ages: Vec<T>,
    values: Vec<T>,
}

impl<T: Real> AgeCurve<T> {
    pub fn new(ages: Vec<T>, values: Vec<T>) -> Result<Self, AggregateError> {
        if ages.is_empty() {
            return Err(AggregateError::EmptyCurve);
        }
        if ages.len() != values.len() || ages.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(AggregateError::MalformedCurve);
        }
        Ok(Self { ages, values })
    }

    pub fn ages(&self) -> &[T] {
        &self.ages
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Linear interpolation, constant beyond the end nodes.
    pub fn at(&self, age: T) -> T {
        let n = self.ages.len();
        if age <= self.ages[0] {
            return self.values[0];
        }
        if age >= self.ages[n - 1] {
            return self.values[n - 1];
        }
        let j = self.ages.partition_point(|&a| a <= age) - 1;
        let (a0, a1) = (self.ages[j], self.ages[j + 1]);
        let w = (age - a0) / (a1 - a0);
        self.values[j] + w * (self.values[j + 1] - self.values[j])
    }
}

pub fn interpolate_curve<T: Real>(nodes: &AgeCurve<T>, query_ages: &[T]) -> Result<AgeCurve<T>, AggregateError> {
    AgeCurve::new(query_ages.to_vec(), query_ages.iter().map(|&a| nodes.at(a)).collect())
}

/// `Σ_{a=20}^{100} (1 − p(a)) · N(a) · FPR(a)` over integer ages.
pub fn false_positive_count<T: Real>(
    fpr: &AgeCurve<T>,
    prev: &AgeCurve<T>,
    pop: &AgeCurve<T>,
) -> Result<T, AggregateError> {
    let mut total = T::zero();
    for age in COUNT_AGE_MIN..=COUNT_AGE_MAX {
        let a = T::lit(f64::from(age));
        let (f, p, n) = (fpr.at(a), prev.at(a), pop.at(a));
        if f < T::zero() || n < T::zero() || p < T::zero() || p > T::one() {
            return Err(AggregateError::NegativeInput(format!(
                "age {age}: fpr {f}, prevalence {p}, population {n}"
            )));
        }
        total = total + (T::one() - p) * n * f;
    }
    Ok(total)
}

/// Order-statistic quantiles with linear interpolation between adjacent
/// order statistics (position `(n − 1)·p`).
pub fn empirical_quantiles<T: Real>(samples: &[T], probs: &[T]) -> Result<Vec<T>, AggregateError> {
    if samples.is_empty() {
        return Err(AggregateError::EmptySample);
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(AggregateError::NonFiniteSample);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    probs.iter().map(|&p| quantile_sorted(&sorted, p)).collect()
}

fn quantile_sorted<T: Real>(sorted: &[T], p: T) -> Result<T, AggregateError> {
    if !(p >= T::zero() && p <= T::one()) {
        return Err(AggregateError::InvalidProbability(p.as_f64()));
    }
    let n = sorted.len();
    let h = T::lit((n - 1) as f64) * p;
    let lo = h.floor().to_usize().unwrap_or(0).min(n - 1);
    if lo + 1 >= n {
        return Ok(sorted[n - 1]);
    }
    let frac = h - T::lit(lo as f64);
    Ok(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
}

/// Single-year population curve for one sex. Grouped records are spread
/// uniformly over their integer ages; open-ended groups up to age 100.
pub fn population_curve(records: &[ObservationRecord], sex: Sex) -> Result<AgeCurve<f64>, AggregateError> {
    let mut by_age = std::collections::BTreeMap::<i64, f64>::new();
    for r in records.iter().filter(|r| r.sex == sex) {
        let lo = r.age_lo.round() as i64;
        let hi = r.age_hi.map_or(lo.max(i64::from(COUNT_AGE_MAX)), |h| h.round() as i64);
        let width = (hi - lo + 1).max(1) as f64;
        for a in lo..=hi {
            *by_age.entry(a).or_default() += r.value / width;
        }
    }
    if by_age.is_empty() {
        return Err(AggregateError::MissingPopulation(sex));
    }
    let (ages, values) = by_age.into_iter().map(|(a, v)| (a as f64, v)).unzip();
    AgeCurve::new(ages, values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

impl Quantiles {
    pub fn of(samples: &[f64]) -> Result<Self, AggregateError> {
        let q = empirical_quantiles(samples, &REPORT_PROBS)?;
        Ok(Self { q025: q[0], q50: q[1], q975: q[2] })
    }
}

/// Per-draw false-positive counts.
///
/// A draw contributes to a sex when every grid cell of that sex solved;
/// it contributes to `total` only when both sexes did, so `total[k]` is
/// exactly `male + female` of the same draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountDistribution {
    pub male: Vec<f64>,
    pub female: Vec<f64>,
    pub total: Vec<f64>,
    pub excluded_male: usize,
    pub excluded_female: usize,
    pub excluded_total: usize,
}

impl CountDistribution {
    pub fn by_sex(&self, sex: Sex) -> &[f64] {
        match sex {
            Sex::Male => &self.male,
            Sex::Female => &self.female,
        }
    }

    pub fn quantiles(&self) -> Result<[(&'static str, Quantiles); 3], AggregateError> {
        Ok([
            ("male", Quantiles::of(&self.male)?),
            ("female", Quantiles::of(&self.female)?),
            ("total", Quantiles::of(&self.total)?),
        ])
    }
}

/// Count for one draw and sex, or `None` if any grid cell has no root.
pub fn draw_count(
    m: &FprDrawMatrix,
    draw: usize,
    sex: Sex,
    pop: &AgeCurve<f64>,
) -> Result<Option<f64>, AggregateError> {
    let se = m.se[draw];
    let n = m.ages.len();
    let mut fpr = Vec::with_capacity(n);
    let mut prev = Vec::with_capacity(n);
    for (j, _) in m.ages.iter().enumerate() {
        let Some(x) = m.fpr(draw, sex, j) else { return Ok(None) };
        let p_obs = m.reference_prevalence(sex, j);
        let p = match AccuracyPair::new(se, 1.0 - x) {
            Ok(acc) => correct_proportion(p_obs, &acc).clamp(0.0, 1.0),
            Err(_) => return Ok(None),
        };
        fpr.push(x);
        prev.push(p);
    }
    let fpr = AgeCurve::new(m.ages.clone(), fpr)?;
    let prev = AgeCurve::new(m.ages.clone(), prev)?;
    false_positive_count(&fpr, &prev, pop).map(Some)
}

pub fn count_distribution(
    m: &FprDrawMatrix,
    male_pop: &AgeCurve<f64>,
    female_pop: &AgeCurve<f64>,
) -> Result<CountDistribution, AggregateError> {
    let per_draw: Vec<(Option<f64>, Option<f64>)> = (0..m.n_draws())
        .into_par_iter()
        .map(|k| Ok((draw_count(m, k, Sex::Male, male_pop)?, draw_count(m, k, Sex::Female, female_pop)?)))
        .collect::<Result<_, AggregateError>>()?;

    let mut out = CountDistribution {
        male: Vec::new(),
        female: Vec::new(),
        total: Vec::new(),
        excluded_male: 0,
        excluded_female: 0,
        excluded_total: 0,
    };
    for (male, female) in per_draw {
        match male {
            Some(v) => out.male.push(v),
            None => out.excluded_male += 1,
        }
        match female {
            Some(v) => out.female.push(v),
            None => out.excluded_female += 1,
        }
        match (male, female) {
            (Some(a), Some(b)) => out.total.push(a + b),
            _ => out.excluded_total += 1,
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FprQuantileRow {
    pub sex: Sex,
    pub age: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    pub n: usize,
}

/// Quantiles of the surviving draws for every (sex, grid age) cell.
pub fn fpr_quantiles(m: &FprDrawMatrix) -> Result<Vec<FprQuantileRow>, AggregateError> {
    let mut rows = Vec::new();
    for sex in Sex::ALL {
        for (j, &age) in m.ages.iter().enumerate() {
            let vals: Vec<f64> = (0..m.n_draws()).filter_map(|k| m.fpr(k, sex, j)).collect();
            let q = Quantiles::of(&vals)?;
            rows.push(FprQuantileRow { sex, age, q025: q.q025, q50: q.q50, q975: q.q975, n: vals.len() });
        }
    }
    Ok(rows)
}
