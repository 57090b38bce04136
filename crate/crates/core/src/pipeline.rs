//! Fitting the four input surfaces from a [`Dataset`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{Dataset, ObservationRecord, RepresentativeAges, TableKind};
use crate::illnessdeath::IdmError;
use crate::linkfit::{fit_surface, BasisSpec, FitError, FittedSurface, Link, SurfacePoint};
use crate::surfaces::{SurfaceSet, SurveyDesign};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("prevalence must be reported for exactly two survey years, found {0:?}")]
    SurveyYears(Vec<i32>),
    #[error("{table} table: no observations left to fit")]
    NoData { table: TableKind },
    #[error("fitting the {table} surface: {source}")]
    Fit {
        table: TableKind,
        #[source]
        source: FitError,
    },
    #[error(transparent)]
    Survey(#[from] IdmError),
}

/// Model choices for the surface fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub prevalence_df: usize,
    pub incidence_df: usize,
    pub mrr_df: usize,
    pub mortality_degree: usize,
    /// Prevalence groups ending below this age are left out of the fit.
    pub prevalence_min_age: Option<f64>,
    /// Inclusive age range of the mortality fit.
    pub mortality_ages: (f64, f64),
    #[serde(default)]
    pub representative_ages: RepresentativeAges,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            prevalence_df: 4,
            incidence_df: 3,
            mrr_df: 3,
            mortality_degree: 2,
            prevalence_min_age: Some(15.0),
            mortality_ages: (15.0, 95.0),
            representative_ages: RepresentativeAges::default(),
        }
    }
}

pub fn survey_design(d: &Dataset) -> Result<SurveyDesign, PipelineError> {
    match d.survey_years().as_slice() {
        &[t1, t2] => Ok(SurveyDesign::new(f64::from(t1), f64::from(t2))?),
        other => Err(PipelineError::SurveyYears(other.to_vec())),
    }
}

fn points<'a>(
    records: impl Iterator<Item = &'a ObservationRecord>,
    default_year: f64,
    age: impl Fn(&ObservationRecord) -> f64,
) -> Vec<SurfacePoint<f64>> {
    records
        .map(|r| SurfacePoint {
            year: r.year.map_or(default_year, f64::from),
            age: age(r),
            sex: r.sex,
            value: r.value,
        })
        .collect()
}

fn fit(
    table: TableKind,
    pts: &[SurfacePoint<f64>],
    basis: impl FnOnce(&[f64]) -> Result<BasisSpec<f64>, FitError>,
    link: Link,
    center: f64,
) -> Result<FittedSurface<f64>, PipelineError> {
    if pts.is_empty() {
        return Err(PipelineError::NoData { table });
    }
    let ages: Vec<f64> = pts.iter().map(|p| p.age).collect();
    let wrap = |source| PipelineError::Fit { table, source };
    let spec = basis(&ages).map_err(wrap)?;
    fit_surface(pts, spec, link, center).map_err(wrap)
}

pub fn fit_prevalence(d: &Dataset, opts: &FitOptions, survey: &SurveyDesign) -> Result<FittedSurface<f64>, PipelineError> {
    let keep = |r: &&ObservationRecord| match (opts.prevalence_min_age, r.age_hi) {
        (Some(min), Some(hi)) => hi >= min,
        _ => true,
    };
    let reps = &opts.representative_ages;
    let pts = points(d.prevalence.iter().filter(keep), survey.midpoint(), |r| reps.age(r.age_lo, r.age_hi));
    let df = opts.prevalence_df;
    fit(
        TableKind::Prevalence,
        &pts,
        |a| BasisSpec::natural_spline_from_ages(a, df, true, true),
        Link::Logit,
        survey.midpoint(),
    )
}

pub fn fit_incidence(d: &Dataset, opts: &FitOptions, survey: &SurveyDesign) -> Result<FittedSurface<f64>, PipelineError> {
    let reps = &opts.representative_ages;
    let pts = points(d.incidence.iter(), survey.midpoint(), |r| reps.age(r.age_lo, r.age_hi));
    let df = opts.incidence_df;
    fit(
        TableKind::Incidence,
        &pts,
        |a| BasisSpec::natural_spline_from_ages(a, df, true, true),
        Link::Log,
        survey.midpoint(),
    )
}

/// Quadratic in age with sex interaction; years are pooled.
pub fn fit_mortality(d: &Dataset, opts: &FitOptions, survey: &SurveyDesign) -> Result<FittedSurface<f64>, PipelineError> {
    let (lo, hi) = opts.mortality_ages;
    let pts = points(
        d.mortality.iter().filter(|r| r.age_lo >= lo && r.age_lo <= hi),
        survey.midpoint(),
        ObservationRecord::representative_age,
    );
    let degree = opts.mortality_degree;
    fit(TableKind::Mortality, &pts, |_| BasisSpec::polynomial(degree, false, true), Link::Log, survey.midpoint())
}

pub fn fit_mrr(d: &Dataset, opts: &FitOptions, survey: &SurveyDesign) -> Result<FittedSurface<f64>, PipelineError> {
    let pts = points(d.mrr.iter(), survey.midpoint(), |r| r.age_lo);
    let df = opts.mrr_df;
    fit(
        TableKind::Mrr,
        &pts,
        |a| BasisSpec::natural_spline_from_ages(a, df, false, true),
        Link::Log,
        survey.midpoint(),
    )
}

/// Fits all four surfaces. A supplied `mortality` surface is used as is and
/// the mortality table may then be empty.
pub fn fit_surfaces(
    d: &Dataset,
    opts: &FitOptions,
    mortality: Option<FittedSurface<f64>>,
) -> Result<SurfaceSet, PipelineError> {
    let survey = survey_design(d)?;
    let mortality = match mortality {
        Some(m) => {
            m.check().map_err(|source| PipelineError::Fit { table: TableKind::Mortality, source })?;
            m
        }
        None => fit_mortality(d, opts, &survey)?,
    };
    Ok(SurfaceSet {
        survey,
        prevalence: fit_prevalence(d, opts, &survey)?,
        incidence: fit_incidence(d, opts, &survey)?,
        mortality,
        mrr: fit_mrr(d, opts, &survey)?,
    })
}
