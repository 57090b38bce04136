//! The staged pipeline: load, fit, estimate, aggregate, write.

use std::path::{Path, PathBuf};

use idm_fpr::aggregate::{count_distribution, fpr_quantiles, population_curve, CountDistribution, FprQuantileRow};
use idm_fpr::aggregate::{COUNT_AGE_MAX, COUNT_AGE_MIN};
use idm_fpr::datamodel::{validate_dataset, Dataset, Sex, TableKind, ValidationIssue};
use idm_fpr::linkfit::FittedSurface;
use idm_fpr::montecarlo::{estimate_fpr_grid, estimate_fpr_grid_with_workers, FprDrawMatrix, McConfig};
use idm_fpr::pipeline::fit_surfaces;
use idm_fpr::surfaces::SurfaceSet;

use crate::config::{InputPaths, RunConfig};
use crate::error::CliError;
use crate::figures;
use crate::outputs::{self, CountExclusions, FlagTotals, RunMetadata, SurfaceSummary};

/// A file to be written, relative to the output directory.
pub struct OutputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl OutputFile {
    pub fn new(name: impl Into<String>, bytes: impl Into<Vec<u8>>) -> Self {
        Self { name: name.into(), bytes: bytes.into() }
    }
}

#[derive(Debug)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub surfaces: SurfaceSet,
    pub matrix: FprDrawMatrix,
    pub fpr_quantiles: Vec<FprQuantileRow>,
    pub counts: CountDistribution,
    pub metadata: RunMetadata,
    pub written: Vec<PathBuf>,
}

/// Reads and validates the inputs for estimation on `age_grid`.
pub fn load_inputs(
    inputs: &InputPaths,
    age_grid: &[f64],
) -> Result<(Dataset, Option<FittedSurface<f64>>), CliError> {
    let (d, mortality) = inputs.load()?;
    let mut report = validate_dataset(&d, age_grid);
    if mortality.is_some() {
        report.issues.retain(|i| {
            !matches!(
                i,
                ValidationIssue::EmptyTable { kind: TableKind::Mortality }
                    | ValidationIssue::MissingStratum { kind: TableKind::Mortality, .. }
            )
        });
    }
    if report.is_ok() {
        Ok((d, mortality))
    } else {
        Err(CliError::Invalid(report))
    }
}

pub fn estimate(surfaces: &SurfaceSet, mc: &McConfig, threads: Option<usize>) -> Result<FprDrawMatrix, CliError> {
    let m = match threads {
        Some(w) => estimate_fpr_grid_with_workers(mc, surfaces, &surfaces.survey, w)?,
        None => estimate_fpr_grid(mc, surfaces, &surfaces.survey)?,
    };
    Ok(m)
}

pub fn aggregate(m: &FprDrawMatrix, d: &Dataset) -> Result<(Vec<FprQuantileRow>, CountDistribution), CliError> {
    let male = population_curve(&d.population, Sex::Male)?;
    let female = population_curve(&d.population, Sex::Female)?;
    Ok((fpr_quantiles(m)?, count_distribution(m, &male, &female)?))
}

fn csv_bytes(path: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<(), CliError>) -> Result<OutputFile, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(OutputFile::new(path, buf))
}

pub fn draws_file(m: &FprDrawMatrix) -> Result<OutputFile, CliError> {
    csv_bytes(outputs::FPR_DRAWS, |b| {
        outputs::write_fpr_draws(b, m).map_err(|e| CliError::format(outputs::FPR_DRAWS, e))
    })
}

pub fn quantiles_file(rows: &[FprQuantileRow]) -> Result<OutputFile, CliError> {
    csv_bytes(outputs::FPR_QUANTILES, |b| {
        outputs::write_fpr_quantiles(b, rows).map_err(|e| CliError::format(outputs::FPR_QUANTILES, e))
    })
}

pub fn counts_file(c: &CountDistribution) -> Result<OutputFile, CliError> {
    csv_bytes(outputs::COUNTS_QUANTILES, |b| outputs::write_counts_quantiles(b, c))
}

pub fn surfaces_file(s: &SurfaceSet) -> OutputFile {
    OutputFile::new(outputs::SURFACES, outputs::to_json(s))
}

/// Writes `files` into `out_dir` all-or-nothing: everything is first written
/// to a staging directory inside `out_dir`, then moved into place. If
/// `out_dir` had to be created and writing fails, it is removed again.
pub fn write_outputs(out_dir: &Path, files: &[OutputFile]) -> Result<Vec<PathBuf>, CliError> {
    let created = !out_dir.exists();
    std::fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
    let result = stage_and_move(out_dir, files);
    if result.is_err() && created {
        let _ = std::fs::remove_dir_all(out_dir);
    }
    result
}

fn stage_and_move(out_dir: &Path, files: &[OutputFile]) -> Result<Vec<PathBuf>, CliError> {
    let staging = tempfile::Builder::new().prefix(".staging-").tempdir_in(out_dir).map_err(CliError::io(out_dir))?;
    for f in files {
        let path = staging.path().join(&f.name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
        std::fs::write(&path, &f.bytes).map_err(CliError::io(&path))?;
    }
    let mut written = Vec::with_capacity(files.len());
    for f in files {
        let dest = out_dir.join(&f.name);
        if let Some(parent) = dest.parent() {
            std::fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
        std::fs::rename(staging.path().join(&f.name), &dest).map_err(CliError::io(&dest))?;
        written.push(dest);
    }
    Ok(written)
}

fn metadata(
    cfg: &RunConfig,
    surfaces: &SurfaceSet,
    m: &FprDrawMatrix,
    counts: &CountDistribution,
    outputs: Vec<String>,
) -> Result<RunMetadata, CliError> {
    let inputs = cfg
        .inputs
        .files()
        .into_iter()
        .map(|(table, path)| outputs::fingerprint(table, path))
        .collect::<Result<_, _>>()?;
    Ok(RunMetadata {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.mc.seed,
        mc: cfg.mc.clone(),
        fit: cfg.fit.clone(),
        survey: surfaces.survey,
        surfaces: SurfaceSummary::all(surfaces),
        inputs,
        excluded_draws: RunMetadata::exclusions(m),
        flags: FlagTotals::of(m),
        count_exclusions: CountExclusions {
            male: counts.excluded_male,
            female: counts.excluded_female,
            total: counts.excluded_total,
        },
        count_ages: (COUNT_AGE_MIN, COUNT_AGE_MAX),
        notes: vec![RunMetadata::extrapolation_note(m)],
        outputs,
    })
}

/// Runs the whole pipeline and writes its outputs. Nothing is written
/// unless every stage succeeds.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport, CliError> {
    let (d, mortality) = load_inputs(&cfg.inputs, &cfg.mc.age_grid)?;
    let surfaces = fit_surfaces(&d, &cfg.fit, mortality)?;
    let matrix = estimate(&surfaces, &cfg.mc, cfg.threads)?;
    let (quantiles, counts) = aggregate(&matrix, &d)?;

    let mut files = vec![
        surfaces_file(&surfaces),
        draws_file(&matrix)?,
        quantiles_file(&quantiles)?,
        counts_file(&counts)?,
    ];
    if cfg.figures {
        files.extend(figures::all(&d, &surfaces, &matrix, &quantiles, &counts));
    }
    let mut names: Vec<String> = files.iter().map(|f| f.name.clone()).collect();
    names.push(outputs::METADATA.to_string());
    let meta = metadata(cfg, &surfaces, &matrix, &counts, names)?;
    files.push(OutputFile::new(outputs::METADATA, outputs::to_json(&meta)));

    let written = write_outputs(&cfg.out_dir, &files)?;
    Ok(RunReport {
        out_dir: cfg.out_dir.clone(),
        surfaces,
        matrix,
        fpr_quantiles: quantiles,
        counts,
        metadata: meta,
        written,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_write_leaves_no_directory() {
        let root = tempfile::tempdir().unwrap();
        let out = root.path().join("out");
        let files = [OutputFile::new("a.txt", "a"), OutputFile::new("a.txt/b.txt", "b")];
        assert!(write_outputs(&out, &files).is_err());
        assert!(!out.exists());
    }

    #[test]
    fn writes_nested_files_and_removes_staging() {
        let root = tempfile::tempdir().unwrap();
        let files = [OutputFile::new("x.csv", "1"), OutputFile::new("figures/y.svg", "<svg/>")];
        let written = write_outputs(root.path(), &files).unwrap();
        assert_eq!(written.len(), 2);
        assert_eq!(std::fs::read_to_string(root.path().join("figures/y.svg")).unwrap(), "<svg/>");
        let names: Vec<_> = std::fs::read_dir(root.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 2, "{names:?}");
    }
}
