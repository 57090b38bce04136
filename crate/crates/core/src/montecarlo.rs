//! Sensitivity sampling and the per-draw specificity solve over the age grid.
//!
//! Draw `k` uses a ChaCha stream selected by `k` under the run seed, so its
//! sensitivity (and therefore its whole row) is independent of how draws are
//! scheduled across threads.

use std::fmt;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::Sex;
use crate::illnessdeath::{solve_specificity, CharacteristicInputs, IdmError, Quadrature};
use crate::surfaces::{characteristic_inputs, EpiSurfaces, SurveyDesign};

/// Stored FPR values never exceed this.
pub const FPR_CAP: f64 = 0.5;

#[derive(Debug, Error)]
pub enum McError {
    #[error("invalid Monte Carlo configuration: {0}")]
    InvalidConfig(String),
    #[error("bad inputs at age {age} ({sex}): {source}")]
    Inputs { age: f64, sex: Sex, source: IdmError },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_draws: usize,
    pub se_min: f64,
    pub se_max: f64,
    pub seed: u64,
    pub age_grid: Vec<f64>,
    #[serde(default)]
    pub quadrature: Quadrature,
}

/// `25, 32.5, …, 85`.
pub fn default_age_grid() -> Vec<f64> {
    (0..9).map(|k| 25.0 + 7.5 * f64::from(k)).collect()
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_draws: 100_000,
            se_min: 0.5,
            se_max: 0.999,
            seed: 20_220_225,
            age_grid: default_age_grid(),
            quadrature: Quadrature::default(),
        }
    }
}

impl McConfig {
    /// Checks the sampler range and that the grid is coarser than `gap`.
    /// A degenerate range `se_min == se_max` is allowed.
    pub fn validate(&self, gap: f64) -> Result<(), McError> {
        let bad = |m: String| Err(McError::InvalidConfig(m));
        if self.n_draws == 0 {
            return bad("n_draws must be positive".into());
        }
        if !(self.se_min >= 0.5 && self.se_min <= self.se_max && self.se_max < 1.0) {
            return bad(format!("need 0.5 <= se_min <= se_max < 1, got [{}, {}]", self.se_min, self.se_max));
        }
        if self.age_grid.is_empty() {
            return bad("empty age grid".into());
        }
        for w in self.age_grid.windows(2) {
            if !(w[1] - w[0] > gap) {
                return bad(format!("grid spacing {} must exceed survey gap {gap}", w[1] - w[0]));
            }
        }
        Ok(())
    }
}

/// Sensitivity of draw `k`; depends only on `(seed, k)` and the range.
pub fn sensitivity_for_draw(cfg: &McConfig, k: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(k);
    let dist = Uniform::new_inclusive(cfg.se_min, cfg.se_max).expect("validated range");
    dist.sample(&mut rng)
}

pub fn sample_sensitivities(cfg: &McConfig) -> Vec<f64> {
    (0..cfg.n_draws as u64).into_par_iter().map(|k| sensitivity_for_draw(cfg, k)).collect()
}

/// Per-cell diagnostic bits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellFlags(u8);

impl CellFlags {
    pub const NO_ROOT: CellFlags = CellFlags(1);
    pub const MULTIPLE_ROOTS: CellFlags = CellFlags(2);
    pub const CLAMPED_CORRECTION: CellFlags = CellFlags(4);
    pub const FPR_CAPPED: CellFlags = CellFlags(8);

    const NAMES: [(CellFlags, &'static str); 4] = [
        (Self::NO_ROOT, "no_root"),
        (Self::MULTIPLE_ROOTS, "multiple_roots"),
        (Self::CLAMPED_CORRECTION, "clamped_correction"),
        (Self::FPR_CAPPED, "fpr_capped"),
    ];

    pub fn contains(self, other: CellFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn insert(&mut self, other: CellFlags) {
        self.0 |= other.0;
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        let mut out = CellFlags::default();
        for part in s.split('|').map(str::trim).filter(|p| !p.is_empty()) {
            let (flag, _) = Self::NAMES
                .iter()
                .find(|(_, n)| *n == part)
                .ok_or_else(|| format!("unknown flag `{part}`"))?;
            out.insert(*flag);
        }
        Ok(out)
    }
}

impl fmt::Display for CellFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = Self::NAMES.iter().filter(|(fl, _)| self.contains(*fl)).map(|(_, n)| *n).collect();
        f.write_str(&names.join("|"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawCell {
    /// NaN when the draw was excluded for this cell.
    fpr: f64,
    flags: CellFlags,
}

impl DrawCell {
    pub fn solved(fpr: f64, flags: CellFlags) -> Self {
        Self { fpr, flags }
    }

    pub fn excluded() -> Self {
        Self { fpr: f64::NAN, flags: CellFlags::NO_ROOT }
    }

    pub fn fpr(&self) -> Option<f64> {
        (!self.fpr.is_nan()).then_some(self.fpr)
    }

    pub fn flags(&self) -> CellFlags {
        self.flags
    }
}

/// FPR estimates indexed by (draw, sex, grid age).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FprDrawMatrix {
    pub config: McConfig,
    pub survey: SurveyDesign,
    pub ages: Vec<f64>,
    pub se: Vec<f64>,
    cells: Vec<DrawCell>,
    /// No-root counts per `(sex, age)`, indexed `sex * n_ages + age`.
    pub excluded: Vec<usize>,
    /// Observed prevalence at `(t_mid, age)`, indexed like `excluded`.
    reference_prevalence: Vec<f64>,
}

impl FprDrawMatrix {
    /// Assembles a matrix from parts, e.g. when reading `fpr_draws.csv` back.
    /// `cells` is ordered draw-major, then sex, then age.
    pub fn from_parts(
        config: McConfig,
        survey: SurveyDesign,
        se: Vec<f64>,
        cells: Vec<DrawCell>,
        reference_prevalence: Vec<f64>,
    ) -> Result<Self, McError> {
        let ages = config.age_grid.clone();
        let n = ages.len();
        if cells.len() != se.len() * 2 * n || reference_prevalence.len() != 2 * n {
            return Err(McError::InvalidConfig("draw matrix dimensions do not match".into()));
        }
        let mut excluded = vec![0; 2 * n];
        for (i, c) in cells.iter().enumerate() {
            if c.fpr().is_none() {
                excluded[i % (2 * n)] += 1;
            }
        }
        Ok(Self { config, survey, ages, se, cells, excluded, reference_prevalence })
    }

    pub fn n_draws(&self) -> usize {
        self.se.len()
    }

    #[inline]
    fn idx(&self, draw: usize, sex: Sex, age: usize) -> usize {
        (draw * 2 + sex.index()) * self.ages.len() + age
    }

    pub fn cell(&self, draw: usize, sex: Sex, age: usize) -> &DrawCell {
        &self.cells[self.idx(draw, sex, age)]
    }

    pub fn fpr(&self, draw: usize, sex: Sex, age: usize) -> Option<f64> {
        self.cell(draw, sex, age).fpr()
    }

    pub fn excluded_count(&self, sex: Sex, age: usize) -> usize {
        self.excluded[sex.index() * self.ages.len() + age]
    }

    pub fn reference_prevalence(&self, sex: Sex, age: usize) -> f64 {
        self.reference_prevalence[sex.index() * self.ages.len() + age]
    }

    pub fn cells(&self) -> &[DrawCell] {
        &self.cells
    }

    /// Number of cells carrying `flag`.
    pub fn flag_count(&self, flag: CellFlags) -> usize {
        self.cells.iter().filter(|c| c.flags.contains(flag)).count()
    }
}

fn solve_cell(se: f64, inputs: &CharacteristicInputs<f64>) -> DrawCell {
    match solve_specificity(se, inputs) {
        Ok(est) => {
            let mut flags = CellFlags::default();
            if est.flags.multiple_roots {
                flags.insert(CellFlags::MULTIPLE_ROOTS);
            }
            if est.flags.clamped_correction {
                flags.insert(CellFlags::CLAMPED_CORRECTION);
            }
            let mut fpr = est.fpr();
            if fpr > FPR_CAP {
                fpr = FPR_CAP;
                flags.insert(CellFlags::FPR_CAPPED);
            }
            DrawCell::solved(fpr, flags)
        }
        Err(_) => DrawCell::excluded(),
    }
}

/// Runs the specificity solve for every draw, sex and grid age on the
/// current rayon pool.
pub fn estimate_fpr_grid<S: EpiSurfaces + ?Sized>(
    cfg: &McConfig,
    surfaces: &S,
    survey: &SurveyDesign,
) -> Result<FprDrawMatrix, McError> {
    cfg.validate(survey.gap())?;
    let n_ages = cfg.age_grid.len();

    // The characteristic inputs do not depend on the draw.
    let mut inputs = Vec::with_capacity(2 * n_ages);
    let mut reference_prevalence = Vec::with_capacity(2 * n_ages);
    for sex in Sex::ALL {
        for &age in &cfg.age_grid {
            let inp = characteristic_inputs(surfaces, survey, age, sex, cfg.quadrature)
                .map_err(|source| McError::Inputs { age, sex, source })?;
            inputs.push(inp);
            reference_prevalence.push(surfaces.observed_prevalence(survey.midpoint(), age, sex));
        }
    }

    let se = sample_sensitivities(cfg);
    let mut cells = vec![DrawCell::excluded(); cfg.n_draws * 2 * n_ages];
    cells.par_chunks_mut(2 * n_ages).zip(se.par_iter()).for_each(|(row, &se_k)| {
        for (cell, inp) in row.iter_mut().zip(&inputs) {
            *cell = solve_cell(se_k, inp);
        }
    });

    FprDrawMatrix::from_parts(cfg.clone(), *survey, se, cells, reference_prevalence)
}

/// [`estimate_fpr_grid`] on a dedicated pool of `workers` threads.
pub fn estimate_fpr_grid_with_workers<S: EpiSurfaces + ?Sized>(
    cfg: &McConfig,
    surfaces: &S,
    survey: &SurveyDesign,
    workers: usize,
) -> Result<FprDrawMatrix, McError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| McError::ThreadPool(e.to_string()))?;
    pool.install(|| estimate_fpr_grid(cfg, surfaces, survey))
}
