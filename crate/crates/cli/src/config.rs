use std::path::{Path, PathBuf};

use idm_fpr::datamodel::{load_table, Dataset, TableKind};
use idm_fpr::linkfit::FittedSurface;
use idm_fpr::montecarlo::McConfig;
use idm_fpr::pipeline::FitOptions;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// File name of a serialized mortality surface inside a data directory.
pub const MORTALITY_SURFACE_FILE: &str = "mortality_surface.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPaths {
    pub prevalence: PathBuf,
    pub incidence: PathBuf,
    /// Raw mortality rates; ignored when `mortality_surface` is set.
    pub mortality: Option<PathBuf>,
    /// Previously fitted mortality surface (JSON).
    pub mortality_surface: Option<PathBuf>,
    pub mrr: PathBuf,
    pub population: PathBuf,
}

impl InputPaths {
    /// Standard file names in `dir`. A `mortality_surface.json` is used only
    /// when there is no `mortality.csv`.
    pub fn from_dir(dir: &Path) -> Self {
        let table = |k: TableKind| dir.join(k.file_name());
        let mortality = table(TableKind::Mortality);
        let surface = dir.join(MORTALITY_SURFACE_FILE);
        let (mortality, mortality_surface) = if !mortality.exists() && surface.exists() {
            (None, Some(surface))
        } else {
            (Some(mortality), None)
        };
        Self {
            prevalence: table(TableKind::Prevalence),
            incidence: table(TableKind::Incidence),
            mortality,
            mortality_surface,
            mrr: table(TableKind::Mrr),
            population: table(TableKind::Population),
        }
    }

    /// `(label, path)` of every file that will be read.
    pub fn files(&self) -> Vec<(&'static str, &Path)> {
        let mut out = vec![
            ("prevalence", self.prevalence.as_path()),
            ("incidence", self.incidence.as_path()),
        ];
        match (&self.mortality_surface, &self.mortality) {
            (Some(s), _) => out.push(("mortality_surface", s.as_path())),
            (None, Some(m)) => out.push(("mortality", m.as_path())),
            (None, None) => {}
        }
        out.push(("mrr", self.mrr.as_path()));
        out.push(("population", self.population.as_path()));
        out
    }

    pub fn check(&self) -> Result<(), CliError> {
        if self.mortality.is_none() && self.mortality_surface.is_none() {
            return Err(CliError::NoMortality);
        }
        for (_, path) in self.files() {
            if !path.is_file() {
                return Err(CliError::MissingInput(path.to_owned()));
            }
        }
        Ok(())
    }

    /// Reads every table, plus the mortality surface if one is configured.
    pub fn load(&self) -> Result<(Dataset, Option<FittedSurface<f64>>), CliError> {
        self.check()?;
        let mut d = Dataset {
            prevalence: load_table(&self.prevalence, TableKind::Prevalence)?,
            incidence: load_table(&self.incidence, TableKind::Incidence)?,
            mrr: load_table(&self.mrr, TableKind::Mrr)?,
            population: load_table(&self.population, TableKind::Population)?,
            ..Dataset::default()
        };
        let surface = match (&self.mortality_surface, &self.mortality) {
            (Some(path), _) => Some(read_surface(path)?),
            (None, Some(path)) => {
                d.mortality = load_table(path, TableKind::Mortality)?;
                None
            }
            (None, None) => return Err(CliError::NoMortality),
        };
        Ok((d, surface))
    }
}

pub fn read_surface(path: &Path) -> Result<FittedSurface<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let s: FittedSurface<f64> = serde_json::from_str(&text).map_err(|e| CliError::format(path, e))?;
    s.check().map_err(|e| CliError::format(path, e))?;
    Ok(s)
}

/// Everything a full run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub inputs: InputPaths,
    pub mc: McConfig,
    pub fit: FitOptions,
    pub out_dir: PathBuf,
    pub figures: bool,
    /// Worker threads; `None` uses all cores. Does not affect results.
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn new(inputs: InputPaths, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            inputs,
            mc: McConfig::default(),
            fit: FitOptions::default(),
            out_dir: out_dir.into(),
            figures: false,
            threads: None,
        }
    }
}

/// Parses an age grid written either as a list (`25,32.5,40`) or as a
/// range `start:stop:step` with inclusive stop.
pub fn parse_age_grid(s: &str) -> Result<Vec<f64>, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("not a number: `{t}`"));
    let parts: Vec<&str> = s.split(':').collect();
    let ages = match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if step.is_nan() || step <= 0.0 || stop < start {
                return Err(format!("bad range `{s}`"));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            (0..=n).map(|k| start + step * k as f64).collect()
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(format!("expected a list or start:stop:step, got `{s}`")),
    };
    if ages.is_empty() || ages.windows(2).any(|w| w[1] <= w[0]) {
        return Err(format!("ages must be strictly increasing: `{s}`"));
    }
    Ok(ages)
}
