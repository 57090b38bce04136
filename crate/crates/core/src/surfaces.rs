//! Smooth inputs to the specificity solve.

use serde::{Deserialize, Serialize};

use crate::datamodel::Sex;
use crate::illnessdeath::{CharacteristicInputs, IdmError, ObservedRates, Quadrature};
use crate::linkfit::{FitError, FittedSurface};

/// Two prevalence surveys `t1 < t2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurveyDesign {
    pub t1: f64,
    pub t2: f64,
}

impl SurveyDesign {
    pub fn new(t1: f64, t2: f64) -> Result<Self, IdmError> {
        if !(t2 > t1) {
            return Err(IdmError::InvalidInputs(format!("survey years {t1}, {t2} not increasing")));
        }
        Ok(Self { t1, t2 })
    }

    pub fn gap(&self) -> f64 {
        self.t2 - self.t1
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.t1 + self.t2)
    }
}

/// Observed prevalence/incidence and true mortality/MRR as smooth functions
/// of (calendar year, age, sex).
pub trait EpiSurfaces: Sync {
    fn observed_prevalence(&self, year: f64, age: f64, sex: Sex) -> f64;
    fn observed_incidence(&self, year: f64, age: f64, sex: Sex) -> f64;
    fn mortality(&self, year: f64, age: f64, sex: Sex) -> f64;
    fn mortality_ratio(&self, year: f64, age: f64, sex: Sex) -> f64;
}

/// Inputs for the characteristic centered at `(t_mid, age)`.
pub fn characteristic_inputs<S: EpiSurfaces + ?Sized>(
    surfaces: &S,
    survey: &SurveyDesign,
    age: f64,
    sex: Sex,
    quadrature: Quadrature,
) -> Result<CharacteristicInputs<f64>, IdmError> {
    let gap = survey.gap();
    let (t0, a0) = (survey.t1, age - 0.5 * gap);
    let nodes = quadrature
        .node_fractions()
        .into_iter()
        .map(|f| {
            let (t, a) = (t0 + f * gap, a0 + f * gap);
            ObservedRates {
                i_obs: surfaces.observed_incidence(t, a, sex),
                m: surfaces.mortality(t, a, sex),
                ratio: surfaces.mortality_ratio(t, a, sex),
            }
        })
        .collect();
    CharacteristicInputs::with_nodes(
        surfaces.observed_prevalence(survey.t1, a0, sex),
        surfaces.observed_prevalence(survey.t2, age + 0.5 * gap, sex),
        nodes,
        gap,
        quadrature,
    )
}

/// The four fitted surfaces of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSet {
    pub survey: SurveyDesign,
    pub prevalence: FittedSurface<f64>,
    pub incidence: FittedSurface<f64>,
    pub mortality: FittedSurface<f64>,
    pub mrr: FittedSurface<f64>,
}

impl SurfaceSet {
    pub fn check(&self) -> Result<(), FitError> {
        self.prevalence.check()?;
        self.incidence.check()?;
        self.mortality.check()?;
        self.mrr.check()
    }
}

impl EpiSurfaces for SurfaceSet {
    fn observed_prevalence(&self, year: f64, age: f64, sex: Sex) -> f64 {
        self.prevalence.eval(year, age, sex)
    }

    fn observed_incidence(&self, year: f64, age: f64, sex: Sex) -> f64 {
        self.incidence.eval(year, age, sex)
    }

    fn mortality(&self, year: f64, age: f64, sex: Sex) -> f64 {
        self.mortality.eval(year, age, sex)
    }

    fn mortality_ratio(&self, year: f64, age: f64, sex: Sex) -> f64 {
        self.mrr.eval(year, age, sex)
    }
}
