//! Forward generator for synthetic datasets with known accuracy.
//!
//! True prevalence comes from integrating the balance law along each cohort
//! from prevalence 0 at birth; observations pass through the
//! misclassification model with the generative (se*, sp*).

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{representative_age, write_table, DataError, Dataset, ObservationRecord, Sex, TableKind};
use crate::illnessdeath::{apparent_proportion, integrate_characteristic, AccuracyPair, Hazards, IdmError};
use crate::surfaces::{EpiSurfaces, SurveyDesign};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("field evaluation failed: {0}")]
    Field(#[from] IdmError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("serializing truth record: {0}")]
    Json(#[from] serde_json::Error),
}

/// Closed-form hazard fields used by the generator.
///
/// * mortality: `ln m = intercept[sex] + slope · a`
/// * incidence: `floor + peak[sex] · exp(-((a - peak_age) / width)²)`,
///   scaled by `exp(trend · (t - trend_year))`
/// * rate ratio: `old + (young - old) / (1 + exp((a - mid_age) / scale))`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricFields {
    pub mortality_intercept: [f64; 2],
    pub mortality_slope: f64,
    pub incidence_floor: f64,
    pub incidence_peak: [f64; 2],
    pub incidence_peak_age: f64,
    pub incidence_width: f64,
    pub incidence_trend: f64,
    pub trend_year: f64,
    pub ratio_young: f64,
    pub ratio_old: f64,
    pub ratio_mid_age: f64,
    pub ratio_scale: f64,
}

impl ParametricFields {
    pub fn reference() -> Self {
        Self {
            mortality_intercept: [-9.75, -10.25],
            mortality_slope: 0.09,
            incidence_floor: 1e-5,
            incidence_peak: [0.012, 0.010],
            incidence_peak_age: 70.0,
            incidence_width: 22.0,
            incidence_trend: 0.0,
            trend_year: 2012.0,
            ratio_young: 3.0,
            ratio_old: 1.5,
            ratio_mid_age: 55.0,
            ratio_scale: 10.0,
        }
    }

    pub fn incidence(&self, t: f64, a: f64, sex: Sex) -> f64 {
        let z = (a - self.incidence_peak_age) / self.incidence_width;
        (self.incidence_floor + self.incidence_peak[sex.index()] * (-z * z).exp())
            * (self.incidence_trend * (t - self.trend_year)).exp()
    }

    pub fn mortality(&self, _t: f64, a: f64, sex: Sex) -> f64 {
        (self.mortality_intercept[sex.index()] + self.mortality_slope * a).exp()
    }

    pub fn ratio(&self, a: f64, _sex: Sex) -> f64 {
        self.ratio_old + (self.ratio_young - self.ratio_old) / (1.0 + ((a - self.ratio_mid_age) / self.ratio_scale).exp())
    }

    pub fn hazards(&self, t: f64, a: f64, sex: Sex) -> Hazards<f64> {
        Hazards { incidence: self.incidence(t, a, sex), mortality: self.mortality(t, a, sex), ratio: self.ratio(a, sex) }
    }
}

/// `N(a) = size[sex] · exp(-(a / scale_age[sex])^shape)` for ages 0…100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationPyramid {
    pub size: [f64; 2],
    pub scale_age: [f64; 2],
    pub shape: f64,
}

impl PopulationPyramid {
    pub fn reference() -> Self {
        Self { size: [420_000.0, 430_000.0], scale_age: [82.0, 87.0], shape: 6.0 }
    }

    pub fn count(&self, age: f64, sex: Sex) -> f64 {
        let i = sex.index();
        (self.size[i] * (-(age / self.scale_age[i]).powf(self.shape)).exp()).round()
    }
}

/// Optional sampling noise on the observed tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Persons per prevalence group.
    pub prevalence_denominator: u64,
    /// Person-years per incidence group.
    pub incidence_person_years: f64,
}

pub type AgeBand = (f64, Option<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub fields: ParametricFields,
    /// Generative accuracy, indexed by sex.
    pub accuracy: [AccuracyPair<f64>; 2],
    pub survey_years: (i32, i32),
    pub incidence_years: Vec<i32>,
    pub mortality_years: Vec<i32>,
    pub prevalence_groups: Vec<AgeBand>,
    pub incidence_groups: Vec<AgeBand>,
    /// Single years of age with mortality records (inclusive).
    pub mortality_ages: (u32, u32),
    pub mrr_ages: Vec<f64>,
    pub population: PopulationPyramid,
    /// Integration steps per year of age for the true prevalence.
    pub steps_per_year: usize,
    pub noise: Option<NoiseSpec>,
    pub seed: u64,
}

fn five_year_groups(first: f64, last_open: f64) -> Vec<AgeBand> {
    let mut g = vec![(0.0, Some(first - 1.0))];
    let mut lo = first;
    while lo < last_open {
        g.push((lo, Some(lo + 4.0)));
        lo += 5.0;
    }
    g.push((last_open, None));
    g
}

impl ScenarioSpec {
    /// Layout mirroring the claims tables: 17 prevalence groups in 2009 and
    /// 2015, five incidence groups for 2012-2014, single-year mortality for
    /// 2010-2014, sp* = 0.995 and se* = 0.9 for both sexes.
    pub fn reference() -> Self {
        let acc = AccuracyPair::new(0.9, 0.995).expect("valid reference accuracy");
        Self {
            fields: ParametricFields::reference(),
            accuracy: [acc, acc],
            survey_years: (2009, 2015),
            incidence_years: vec![2012, 2013, 2014],
            mortality_years: (2010..=2014).collect(),
            prevalence_groups: five_year_groups(15.0, 90.0),
            incidence_groups: vec![
                (0.0, Some(19.0)),
                (20.0, Some(39.0)),
                (40.0, Some(59.0)),
                (60.0, Some(79.0)),
                (80.0, None),
            ],
            mortality_ages: (0, 100),
            mrr_ages: (0..=14).map(|k| 20.0 + 5.0 * f64::from(k)).collect(),
            population: PopulationPyramid::reference(),
            steps_per_year: 4,
            noise: None,
            seed: 1,
        }
    }

    /// Replaces the prevalence and incidence layouts by single-year groups
    /// over `lo..=hi`.
    pub fn with_single_year_groups(mut self, lo: u32, hi: u32) -> Self {
        let g: Vec<AgeBand> = (lo..=hi).map(|a| (f64::from(a), Some(f64::from(a)))).collect();
        self.prevalence_groups = g.clone();
        self.incidence_groups = g;
        self
    }

    pub fn survey(&self) -> SurveyDesign {
        SurveyDesign { t1: f64::from(self.survey_years.0), t2: f64::from(self.survey_years.1) }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.survey_years.1 <= self.survey_years.0 {
            return bad("survey years must be increasing");
        }
        if self.prevalence_groups.is_empty() || self.incidence_groups.is_empty() {
            return bad("empty age-group layout");
        }
        if self.incidence_years.is_empty() || self.mortality_years.is_empty() || self.mrr_ages.is_empty() {
            return bad("missing incidence, mortality or MRR coverage");
        }
        if self.steps_per_year == 0 {
            return bad("steps_per_year must be positive");
        }
        for a in [0.0, 50.0, 100.0] {
            for sex in Sex::ALL {
                let h = self.fields.hazards(f64::from(self.survey_years.0), a, sex);
                if !(h.incidence > 0.0 && h.mortality > 0.0 && h.ratio > 0.0) {
                    return bad("hazard fields must be positive");
                }
            }
        }
        Ok(())
    }

    /// True prevalence at calendar time `t` and age `a`, integrating the
    /// cohort born at `t - a` from prevalence 0.
    pub fn true_prevalence(&self, t: f64, a: f64, sex: Sex) -> Result<f64, IdmError> {
        if a <= 0.0 {
            return Ok(0.0);
        }
        let steps = (a * self.steps_per_year as f64).ceil().max(1.0) as usize;
        let r = integrate_characteristic(0.0, |tt, aa| self.fields.hazards(tt, aa, sex), t - a, 0.0, a, steps)?;
        Ok(r.p)
    }

    pub fn accuracy_for(&self, sex: Sex) -> &AccuracyPair<f64> {
        &self.accuracy[sex.index()]
    }
}

/// Observation-free view of a scenario as smooth surfaces (the exact oracle).
impl EpiSurfaces for ScenarioSpec {
    fn observed_prevalence(&self, year: f64, age: f64, sex: Sex) -> f64 {
        self.true_prevalence(year, age, sex)
            .map_or(f64::NAN, |p| apparent_proportion(p, self.accuracy_for(sex)))
    }

    fn observed_incidence(&self, year: f64, age: f64, sex: Sex) -> f64 {
        apparent_proportion(self.fields.incidence(year, age, sex), self.accuracy_for(sex))
    }

    fn mortality(&self, year: f64, age: f64, sex: Sex) -> f64 {
        self.fields.mortality(year, age, sex)
    }

    fn mortality_ratio(&self, _year: f64, age: f64, sex: Sex) -> f64 {
        self.fields.ratio(age, sex)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruePrevalenceRow {
    pub sex: Sex,
    pub year: i32,
    /// Indexed by integer age 0…100.
    pub prevalence: Vec<f64>,
}

/// Hidden truth kept alongside a generated dataset for test assertions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub accuracy: [AccuracyPair<f64>; 2],
    pub survey_years: (i32, i32),
    pub prevalence: Vec<TruePrevalenceRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub dataset: Dataset,
    pub truth: Truth,
}

pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut dataset = Dataset::default();

    for sex in Sex::ALL {
        let acc = spec.accuracy_for(sex);
        for year in [spec.survey_years.0, spec.survey_years.1] {
            for &(lo, hi) in &spec.prevalence_groups {
                let age = representative_age(lo, hi);
                let obs = apparent_proportion(spec.true_prevalence(f64::from(year), age, sex)?, acc);
                let value = match &spec.noise {
                    Some(n) => noisy_proportion(&mut rng, obs, n.prevalence_denominator)?,
                    None => obs,
                };
                dataset.prevalence.push(ObservationRecord { sex, year: Some(year), age_lo: lo, age_hi: hi, value });
            }
        }
        for &year in &spec.incidence_years {
            for &(lo, hi) in &spec.incidence_groups {
                let age = representative_age(lo, hi);
                let obs = apparent_proportion(spec.fields.incidence(f64::from(year), age, sex), acc);
                let value = match &spec.noise {
                    Some(n) => noisy_rate(&mut rng, obs, n.incidence_person_years)?,
                    None => obs,
                };
                dataset.incidence.push(ObservationRecord { sex, year: Some(year), age_lo: lo, age_hi: hi, value });
            }
        }
        for &year in &spec.mortality_years {
            for a in spec.mortality_ages.0..=spec.mortality_ages.1 {
                let a = f64::from(a);
                dataset.mortality.push(ObservationRecord {
                    sex,
                    year: Some(year),
                    age_lo: a,
                    age_hi: Some(a),
                    value: spec.fields.mortality(f64::from(year), a + 0.5, sex),
                });
            }
        }
        for &a in &spec.mrr_ages {
            dataset.mrr.push(ObservationRecord { sex, year: None, age_lo: a, age_hi: Some(a), value: spec.fields.ratio(a, sex) });
        }
        for a in 0..=100 {
            let a = f64::from(a);
            dataset.population.push(ObservationRecord {
                sex,
                year: None,
                age_lo: a,
                age_hi: Some(a),
                value: spec.population.count(a, sex),
            });
        }
    }

    let mut prevalence = Vec::new();
    for sex in Sex::ALL {
        for year in [spec.survey_years.0, spec.survey_years.1] {
            let values = (0..=100)
                .map(|a| spec.true_prevalence(f64::from(year), f64::from(a), sex))
                .collect::<Result<Vec<_>, _>>()?;
            prevalence.push(TruePrevalenceRow { sex, year, prevalence: values });
        }
    }

    let truth = Truth { accuracy: spec.accuracy, survey_years: spec.survey_years, prevalence };
    Ok(Scenario { spec: spec.clone(), dataset, truth })
}

fn noisy_proportion(rng: &mut ChaCha8Rng, p: f64, n: u64) -> Result<f64, SynthError> {
    let dist = Binomial::new(n, p).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let k = dist.sample(rng).clamp(1, n.saturating_sub(1).max(1));
    Ok(k as f64 / n as f64)
}

fn noisy_rate(rng: &mut ChaCha8Rng, rate: f64, person_years: f64) -> Result<f64, SynthError> {
    let dist = Poisson::new(rate * person_years).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    Ok(dist.sample(rng).max(1.0) / person_years)
}

impl Scenario {
    /// `Σ_{a=20}^{100} (1 − p*(t, a)) · N(a) · (1 − sp*)` for one sex.
    pub fn true_false_positives(&self, t: f64, sex: Sex) -> Result<f64, IdmError> {
        let fpr = self.spec.accuracy_for(sex).fpr();
        let mut total = 0.0;
        for a in crate::aggregate::COUNT_AGE_MIN..=crate::aggregate::COUNT_AGE_MAX {
            let a = f64::from(a);
            let p = self.spec.true_prevalence(t, a, sex)?;
            total += (1.0 - p) * self.spec.population.count(a, sex) * fpr;
        }
        Ok(total)
    }

    /// Writes the five input tables and `truth.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir).map_err(|source| SynthError::Io { path: dir.display().to_string(), source })?;
        for kind in TableKind::ALL {
            let path = dir.join(kind.file_name());
            let file = std::fs::File::create(&path)
                .map_err(|source| SynthError::Io { path: path.display().to_string(), source })?;
            write_table(std::io::BufWriter::new(file), kind, self.dataset.table(kind))?;
        }
        let path = dir.join("truth.json");
        let doc = TruthDocument { truth: self.truth.clone(), spec: self.spec.clone() };
        let json = serde_json::to_string_pretty(&doc)?;
        std::fs::write(&path, json + "\n").map_err(|source| SynthError::Io { path: path.display().to_string(), source })
    }
}

/// Contents of `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthDocument {
    pub truth: Truth,
    pub spec: ScenarioSpec,
}

impl TruthDocument {
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| SynthError::Io { path: path.display().to_string(), source })?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_prevalence() {
        let mut spec = ScenarioSpec::reference();
        spec.fields.incidence_floor = 0.01;
        spec.fields.incidence_peak = [0.0, 0.0];
        spec.fields.ratio_young = 1.0;
        spec.fields.ratio_old = 1.0;
        for a in [10.0, 40.0, 85.0] {
            let p = spec.true_prevalence(2009.0, a, Sex::Male).unwrap();
            assert!((p - (1.0 - (-0.01 * a).exp())).abs() < 1e-8, "age {a}: {p}");
        }
    }

    #[test]
    fn perfect_accuracy_observes_truth() {
        let mut spec = ScenarioSpec::reference();
        spec.accuracy = [AccuracyPair::perfect(); 2];
        let sc = generate_scenario(&spec).unwrap();
        for r in &sc.dataset.prevalence {
            let p = spec.true_prevalence(f64::from(r.year.unwrap()), r.representative_age(), r.sex).unwrap();
            assert_eq!(r.value, p);
        }
        for r in &sc.dataset.incidence {
            let i = spec.fields.incidence(f64::from(r.year.unwrap()), r.representative_age(), r.sex);
            assert_eq!(r.value, i);
        }
    }

    #[test]
    fn reference_layout() {
        let sc = generate_scenario(&ScenarioSpec::reference()).unwrap();
        assert_eq!(sc.dataset.prevalence.len(), 2 * 2 * 17);
        assert_eq!(sc.dataset.incidence.len(), 2 * 3 * 5);
        assert_eq!(sc.dataset.survey_gap(), Some(6.0));
        assert_eq!(sc.truth.prevalence.len(), 4);
    }

    #[test]
    fn deterministic_with_noise() {
        let mut spec = ScenarioSpec::reference();
        spec.noise = Some(NoiseSpec { prevalence_denominator: 200_000, incidence_person_years: 500_000.0 });
        let a = generate_scenario(&spec).unwrap();
        let b = generate_scenario(&spec).unwrap();
        assert_eq!(a, b);
        let clean = generate_scenario(&ScenarioSpec::reference()).unwrap();
        assert_ne!(a.dataset.prevalence, clean.dataset.prevalence);
        assert!(a.dataset.prevalence.iter().all(|r| r.value > 0.0 && r.value < 1.0));
    }

    #[test]
    fn rejects_bad_spec() {
        let mut spec = ScenarioSpec::reference();
        spec.survey_years = (2015, 2009);
        assert!(matches!(generate_scenario(&spec), Err(SynthError::InvalidSpec(_))));
    }
}
