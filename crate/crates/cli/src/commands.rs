//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use idm_fpr::aggregate::{count_distribution, fpr_quantiles, population_curve};
use idm_fpr::datamodel::{load_table, Sex, TableKind};
use idm_fpr::illnessdeath::{AccuracyPair, Quadrature};
use idm_fpr::montecarlo::McConfig;
use idm_fpr::pipeline::{fit_surfaces, FitOptions};
use idm_fpr::surfaces::{EpiSurfaces, SurfaceSet};
use idm_fpr::synthdata::{generate_scenario, NoiseSpec, ScenarioSpec};

use crate::config::{parse_age_grid, InputPaths, RunConfig};
use crate::error::CliError;
use crate::figures;
use crate::outputs;
use crate::run::{self, write_outputs, OutputFile};

#[derive(Debug, Parser)]
#[command(name = "idm-fpr", version, about = "Estimate the false-positive ratio of diagnoses in claims data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with known test accuracy.
    Simulate(SimulateArgs),
    /// Fit the four input surfaces and write surfaces.json.
    Fit(FitArgs),
    /// Solve for the false-positive ratio on every draw from fitted surfaces.
    Estimate(EstimateArgs),
    /// Turn a draw matrix into false-positive counts.
    Aggregate(AggregateArgs),
    /// Draw the diagnostic figures for a finished run.
    Plot(PlotArgs),
    /// Fit, estimate, aggregate and write all outputs.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Directory holding prevalence.csv, incidence.csv, mortality.csv, mrr.csv
    /// and population.csv; individual files below override it.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub prevalence: Option<PathBuf>,
    #[arg(long)]
    pub incidence: Option<PathBuf>,
    #[arg(long, conflicts_with = "mortality_surface")]
    pub mortality: Option<PathBuf>,
    /// Previously fitted mortality surface (JSON) used instead of a table.
    #[arg(long)]
    pub mortality_surface: Option<PathBuf>,
    #[arg(long)]
    pub mrr: Option<PathBuf>,
    #[arg(long)]
    pub population: Option<PathBuf>,
}

impl InputArgs {
    pub fn resolve(&self) -> Result<InputPaths, CliError> {
        let base = self.data.as_deref().map(InputPaths::from_dir);
        let pick = |explicit: &Option<PathBuf>, from: Option<&PathBuf>, name: &str| {
            explicit
                .clone()
                .or_else(|| from.cloned())
                .ok_or_else(|| CliError::Argument(format!("--{name} (or --data) is required")))
        };
        let mut paths = InputPaths {
            prevalence: pick(&self.prevalence, base.as_ref().map(|b| &b.prevalence), "prevalence")?,
            incidence: pick(&self.incidence, base.as_ref().map(|b| &b.incidence), "incidence")?,
            mortality: base.as_ref().and_then(|b| b.mortality.clone()),
            mortality_surface: base.as_ref().and_then(|b| b.mortality_surface.clone()),
            mrr: pick(&self.mrr, base.as_ref().map(|b| &b.mrr), "mrr")?,
            population: pick(&self.population, base.as_ref().map(|b| &b.population), "population")?,
        };
        if let Some(m) = &self.mortality {
            paths.mortality = Some(m.clone());
            paths.mortality_surface = None;
        }
        if let Some(s) = &self.mortality_surface {
            paths.mortality_surface = Some(s.clone());
            paths.mortality = None;
        }
        Ok(paths)
    }
}

#[derive(Debug, Args)]
pub struct FitOptionArgs {
    #[arg(long)]
    pub prevalence_df: Option<usize>,
    #[arg(long)]
    pub incidence_df: Option<usize>,
    #[arg(long)]
    pub mrr_df: Option<usize>,
    #[arg(long)]
    pub mortality_degree: Option<usize>,
}

impl FitOptionArgs {
    pub fn options(&self) -> FitOptions {
        let d = FitOptions::default();
        FitOptions {
            prevalence_df: self.prevalence_df.unwrap_or(d.prevalence_df),
            incidence_df: self.incidence_df.unwrap_or(d.incidence_df),
            mrr_df: self.mrr_df.unwrap_or(d.mrr_df),
            mortality_degree: self.mortality_degree.unwrap_or(d.mortality_degree),
            ..d
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QuadratureArg {
    Midpoint,
    HermiteSimpson,
    Rk4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgeGrid(pub Vec<f64>);

fn parse_ages(s: &str) -> Result<AgeGrid, String> {
    parse_age_grid(s).map(AgeGrid)
}

#[derive(Debug, Args)]
pub struct McArgs {
    /// Number of Monte Carlo draws.
    #[arg(long, default_value_t = McConfig::default().n_draws)]
    pub draws: usize,
    #[arg(long, default_value_t = McConfig::default().seed)]
    pub seed: u64,
    #[arg(long, default_value_t = McConfig::default().se_min)]
    pub se_min: f64,
    #[arg(long, default_value_t = McConfig::default().se_max)]
    pub se_max: f64,
    /// Age grid as a list (`25,40,55`) or `start:stop:step`.
    #[arg(long, default_value = "25:85:7.5", value_parser = parse_ages)]
    pub ages: AgeGrid,
    /// Integration rule for the prevalence balance along each cohort.
    #[arg(long, value_enum, default_value = "hermite-simpson")]
    pub quadrature: QuadratureArg,
    /// Sub-steps per survey gap for `--quadrature rk4`.
    #[arg(long, default_value_t = 2)]
    pub rk4_steps: usize,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    pub threads: Option<usize>,
}

impl McArgs {
    pub fn config(&self) -> Result<McConfig, CliError> {
        let quadrature = match self.quadrature {
            QuadratureArg::Midpoint => Quadrature::Midpoint,
            QuadratureArg::HermiteSimpson => Quadrature::HermiteSimpson,
            QuadratureArg::Rk4 if self.rk4_steps == 0 => {
                return Err(CliError::Argument("--rk4-steps must be positive".into()))
            }
            QuadratureArg::Rk4 => Quadrature::Rk4 { steps: self.rk4_steps },
        };
        Ok(McConfig {
            n_draws: self.draws,
            se_min: self.se_min,
            se_max: self.se_max,
            seed: self.seed,
            age_grid: self.ages.0.clone(),
            quadrature,
        })
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Scenario description (JSON); the reference scenario when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// True sensitivity for both sexes.
    #[arg(long)]
    pub sensitivity: Option<f64>,
    /// True specificity for both sexes.
    #[arg(long)]
    pub specificity: Option<f64>,
    /// Add binomial/Poisson sampling noise with this many persons per
    /// prevalence group.
    #[arg(long)]
    pub noise_denominator: Option<u64>,
    /// Person-years per incidence group when noise is added.
    #[arg(long, default_value_t = 1e6, requires = "noise_denominator")]
    pub noise_person_years: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    #[command(flatten)]
    pub fit: FitOptionArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// surfaces.json written by `fit`.
    #[arg(long)]
    pub surfaces: PathBuf,
    #[command(flatten)]
    pub mc: McArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// fpr_draws.csv written by `estimate`.
    #[arg(long)]
    pub draws_file: PathBuf,
    /// surfaces.json the draws were estimated from.
    #[arg(long)]
    pub surfaces: PathBuf,
    #[arg(long)]
    pub population: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    /// Directory with surfaces.json and fpr_draws.csv from an earlier run.
    #[arg(long)]
    pub results: PathBuf,
    /// Figures go to `<out>/figures`; defaults to the results directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    #[command(flatten)]
    pub fit: FitOptionArgs,
    #[command(flatten)]
    pub mc: McArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the SVG figures.
    #[arg(long)]
    pub figures: bool,
}

fn read_surfaces(path: &Path) -> Result<SurfaceSet, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let s: SurfaceSet = serde_json::from_str(&text).map_err(|e| CliError::format(path, e))?;
    s.check().map_err(|e| CliError::format(path, e))?;
    Ok(s)
}

fn read_draws(path: &Path, s: &SurfaceSet) -> Result<idm_fpr::montecarlo::FprDrawMatrix, CliError> {
    let mid = s.survey.midpoint();
    outputs::read_fpr_draws(path, s.survey, |sex, age| s.observed_prevalence(mid, age, sex))
}

fn simulate(a: &SimulateArgs) -> Result<Vec<PathBuf>, CliError> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(CliError::io(p))?;
            serde_json::from_str(&text).map_err(|e| CliError::format(p, e))?
        }
        None => ScenarioSpec::reference(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if a.sensitivity.is_some() || a.specificity.is_some() {
        for sex in Sex::ALL {
            let cur = spec.accuracy[sex.index()];
            let acc = AccuracyPair::new(a.sensitivity.unwrap_or(cur.se()), a.specificity.unwrap_or(cur.sp()))
                .map_err(|e| CliError::Argument(e.to_string()))?;
            spec.accuracy[sex.index()] = acc;
        }
    }
    if let Some(n) = a.noise_denominator {
        spec.noise = Some(NoiseSpec { prevalence_denominator: n, incidence_person_years: a.noise_person_years });
    }
    let scenario = generate_scenario(&spec)?;
    let staging = tempfile::tempdir().map_err(CliError::io(std::env::temp_dir()))?;
    scenario.write_to(staging.path())?;
    let mut files = Vec::new();
    let mut names: Vec<String> = TableKind::ALL.iter().map(|k| k.file_name().to_string()).collect();
    names.push("truth.json".into());
    for name in names {
        let p = staging.path().join(&name);
        files.push(OutputFile::new(name, std::fs::read(&p).map_err(CliError::io(&p))?));
    }
    write_outputs(&a.out, &files)
}

fn fit(a: &FitArgs) -> Result<Vec<PathBuf>, CliError> {
    let inputs = a.inputs.resolve()?;
    let (d, mortality) = run::load_inputs(&inputs, &McConfig::default().age_grid)?;
    let surfaces = fit_surfaces(&d, &a.fit.options(), mortality)?;
    write_outputs(&a.out, &[run::surfaces_file(&surfaces)])
}

fn estimate(a: &EstimateArgs) -> Result<Vec<PathBuf>, CliError> {
    let surfaces = read_surfaces(&a.surfaces)?;
    let m = run::estimate(&surfaces, &a.mc.config()?, a.mc.threads)?;
    let q = fpr_quantiles(&m)?;
    write_outputs(&a.out, &[run::draws_file(&m)?, run::quantiles_file(&q)?])
}

fn aggregate(a: &AggregateArgs) -> Result<Vec<PathBuf>, CliError> {
    let surfaces = read_surfaces(&a.surfaces)?;
    let m = read_draws(&a.draws_file, &surfaces)?;
    let pop = load_table(&a.population, TableKind::Population)?;
    let male = population_curve(&pop, Sex::Male)?;
    let female = population_curve(&pop, Sex::Female)?;
    let counts = count_distribution(&m, &male, &female)?;
    write_outputs(&a.out, &[run::counts_file(&counts)?, run::quantiles_file(&fpr_quantiles(&m)?)?])
}

fn plot(a: &PlotArgs) -> Result<Vec<PathBuf>, CliError> {
    let inputs = a.inputs.resolve()?;
    let (d, _) = inputs.load()?;
    let surfaces = read_surfaces(&a.results.join(outputs::SURFACES))?;
    let m = read_draws(&a.results.join(outputs::FPR_DRAWS), &surfaces)?;
    let (q, counts) = run::aggregate(&m, &d)?;
    let out = a.out.clone().unwrap_or_else(|| a.results.clone());
    write_outputs(&out, &figures::all(&d, &surfaces, &m, &q, &counts))
}

fn run_all(a: &RunArgs) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = RunConfig::new(a.inputs.resolve()?, &a.out);
    cfg.fit = a.fit.options();
    cfg.mc = a.mc.config()?;
    cfg.figures = a.figures;
    cfg.threads = a.mc.threads;
    let report = run::run_pipeline(&cfg)?;
    for (label, q) in report.counts.quantiles()? {
        println!(
            "{label:>6}: {:.1}k (95% interval {:.1}k - {:.1}k)",
            q.q50 / 1e3,
            q.q025 / 1e3,
            q.q975 / 1e3
        );
    }
    Ok(report.written)
}

/// Executes a parsed command, returning the files written.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Estimate(a) => estimate(a),
        Command::Aggregate(a) => aggregate(a),
        Command::Plot(a) => plot(a),
        Command::Run(a) => run_all(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn run_flags_parse() {
        let cli = Cli::try_parse_from([
            "idm-fpr", "run", "--data", "d", "--out", "o", "--draws", "50", "--seed", "7", "--se-min", "0.9",
            "--se-max", "0.95", "--ages", "30:60:10", "--quadrature", "rk4", "--rk4-steps", "3", "--threads", "2",
            "--prevalence-df", "6", "--figures",
        ])
        .unwrap();
        let Command::Run(a) = cli.command else { panic!("not run") };
        let cfg = a.mc.config().unwrap();
        assert_eq!(cfg.n_draws, 50);
        assert_eq!(cfg.age_grid, vec![30.0, 40.0, 50.0, 60.0]);
        assert_eq!(cfg.quadrature, Quadrature::Rk4 { steps: 3 });
        assert_eq!(a.fit.options().prevalence_df, 6);
        assert_eq!(a.fit.options().incidence_df, 3);
        assert!(a.figures);
        assert_eq!(a.mc.threads, Some(2));
    }

    #[test]
    fn explicit_paths_override_data_dir() {
        let args = InputArgs {
            data: Some("d".into()),
            prevalence: Some("p.csv".into()),
            incidence: None,
            mortality: None,
            mortality_surface: Some("m.json".into()),
            mrr: None,
            population: None,
        };
        let p = args.resolve().unwrap();
        assert_eq!(p.prevalence, PathBuf::from("p.csv"));
        assert_eq!(p.incidence, PathBuf::from("d/incidence.csv"));
        assert_eq!(p.mortality, None);
        assert_eq!(p.mortality_surface, Some(PathBuf::from("m.json")));
        let none = InputArgs { data: None, prevalence: None, incidence: None, mortality: None, mortality_surface: None, mrr: None, population: None };
        assert!(matches!(none.resolve(), Err(CliError::Argument(_))));
    }
}
