//! Result tables and run metadata.

use std::io::Write;
use std::path::Path;

use idm_fpr::aggregate::{CountDistribution, FprQuantileRow, COUNT_AGE_MAX, COUNT_AGE_MIN};
use idm_fpr::datamodel::Sex;
use idm_fpr::linkfit::FittedSurface;
use idm_fpr::montecarlo::{CellFlags, DrawCell, FprDrawMatrix, McConfig};
use idm_fpr::pipeline::FitOptions;
use idm_fpr::surfaces::{SurfaceSet, SurveyDesign};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const FPR_DRAWS: &str = "fpr_draws.csv";
pub const FPR_QUANTILES: &str = "fpr_quantiles.csv";
pub const COUNTS_QUANTILES: &str = "counts_quantiles.csv";
pub const SURFACES: &str = "surfaces.json";
pub const METADATA: &str = "run_metadata.json";

fn num(v: f64) -> String {
    format!("{v}")
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::format(path, e)
}

pub fn write_fpr_draws<W: Write>(w: W, m: &FprDrawMatrix) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["draw", "sex", "age", "se", "fpr", "flags"])?;
    for k in 0..m.n_draws() {
        let se = num(m.se[k]);
        for sex in Sex::ALL {
            for (j, &age) in m.ages.iter().enumerate() {
                let cell = m.cell(k, sex, j);
                let fpr = cell.fpr().map(num).unwrap_or_default();
                out.write_record([k.to_string(), sex.to_string(), num(age), se.clone(), fpr, cell.flags().to_string()])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads `fpr_draws.csv` back into a matrix. The sampler range in the
/// returned config is the observed range of `se`.
pub fn read_fpr_draws(
    path: &Path,
    survey: SurveyDesign,
    reference_prevalence: impl Fn(Sex, f64) -> f64,
) -> Result<FprDrawMatrix, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut rows: Vec<(usize, Sex, f64, f64, DrawCell)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| CliError::format(path, format!("line {line}: bad {what}"));
        let field = |i: usize| rec.get(i).unwrap_or("");
        let draw: usize = field(0).parse().map_err(|_| bad("draw"))?;
        let sex: Sex = field(1).parse().map_err(|_| bad("sex"))?;
        let age: f64 = field(2).parse().map_err(|_| bad("age"))?;
        let se: f64 = field(3).parse().map_err(|_| bad("se"))?;
        let flags = CellFlags::parse(field(5)).map_err(|e| bad(&e))?;
        let cell = match field(4) {
            "" => DrawCell::excluded(),
            v => DrawCell::solved(v.parse().map_err(|_| bad("fpr"))?, flags),
        };
        rows.push((draw, sex, age, se, cell));
    }
    let mut ages: Vec<f64> = rows.iter().map(|r| r.2).collect();
    ages.sort_by(f64::total_cmp);
    ages.dedup();
    let n_draws = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    if rows.len() != n_draws * 2 * ages.len() {
        return Err(CliError::format(path, "incomplete draw matrix"));
    }
    let mut se = vec![f64::NAN; n_draws];
    let mut cells = vec![DrawCell::excluded(); rows.len()];
    for (draw, sex, age, s, cell) in rows {
        let j = ages.iter().position(|&a| a == age).expect("collected above");
        se[draw] = s;
        cells[(draw * 2 + sex.index()) * ages.len() + j] = cell;
    }
    let (lo, hi) = se.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let cfg = McConfig { n_draws, se_min: lo, se_max: hi, age_grid: ages.clone(), ..McConfig::default() };
    let reference = Sex::ALL.iter().flat_map(|&s| ages.iter().map(move |&a| (s, a))).map(|(s, a)| reference_prevalence(s, a)).collect();
    Ok(FprDrawMatrix::from_parts(cfg, survey, se, cells, reference)?)
}

pub fn write_fpr_quantiles<W: Write>(w: W, rows: &[FprQuantileRow]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sex", "age", "q025", "q50", "q975"])?;
    for r in rows {
        out.write_record([r.sex.to_string(), num(r.age), num(r.q025), num(r.q50), num(r.q975)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_counts_quantiles<W: Write>(w: W, counts: &CountDistribution) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    let wrap = |e: csv::Error| CliError::format(COUNTS_QUANTILES, e);
    out.write_record(["sex", "q025_thousands", "q50_thousands", "q975_thousands"]).map_err(wrap)?;
    for (label, q) in counts.quantiles()? {
        out.write_record([label.to_string(), num(q.q025 / 1e3), num(q.q50 / 1e3), num(q.q975 / 1e3)])
            .map_err(wrap)?;
    }
    out.flush().map_err(|e| CliError::format(COUNTS_QUANTILES, e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFingerprint {
    pub table: String,
    pub path: String,
    pub sha256: String,
}

pub fn fingerprint(table: &str, path: &Path) -> Result<InputFingerprint, CliError> {
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    let digest = Sha256::digest(&bytes);
    let sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok(InputFingerprint { table: table.into(), path: path.display().to_string(), sha256 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSummary {
    pub name: String,
    pub link: String,
    pub basis: String,
    pub degrees_of_freedom: usize,
    pub knots: Option<Vec<f64>>,
    pub columns: usize,
    pub rss: f64,
    pub df_resid: usize,
}

impl SurfaceSummary {
    pub fn of(name: &str, s: &FittedSurface<f64>) -> Self {
        let basis = match s.basis.knots() {
            Some(_) => "natural_cubic_spline",
            None => "polynomial",
        };
        Self {
            name: name.into(),
            link: format!("{:?}", s.link).to_lowercase(),
            basis: basis.into(),
            degrees_of_freedom: s.basis.degrees_of_freedom(),
            knots: s.basis.knots().map(<[f64]>::to_vec),
            columns: s.coefficients.len(),
            rss: s.rss,
            df_resid: s.df_resid,
        }
    }

    pub fn all(set: &SurfaceSet) -> Vec<Self> {
        vec![
            Self::of("prevalence", &set.prevalence),
            Self::of("incidence", &set.incidence),
            Self::of("mortality", &set.mortality),
            Self::of("mrr", &set.mrr),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellExclusions {
    pub sex: Sex,
    pub age: f64,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagTotals {
    pub no_root: usize,
    pub multiple_roots: usize,
    pub clamped_correction: usize,
    pub fpr_capped: usize,
}

impl FlagTotals {
    pub fn of(m: &FprDrawMatrix) -> Self {
        Self {
            no_root: m.flag_count(CellFlags::NO_ROOT),
            multiple_roots: m.flag_count(CellFlags::MULTIPLE_ROOTS),
            clamped_correction: m.flag_count(CellFlags::CLAMPED_CORRECTION),
            fpr_capped: m.flag_count(CellFlags::FPR_CAPPED),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountExclusions {
    pub male: usize,
    pub female: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub seed: u64,
    pub mc: McConfig,
    pub fit: FitOptions,
    pub survey: SurveyDesign,
    pub surfaces: Vec<SurfaceSummary>,
    pub inputs: Vec<InputFingerprint>,
    pub excluded_draws: Vec<CellExclusions>,
    pub flags: FlagTotals,
    pub count_exclusions: CountExclusions,
    pub count_ages: (u32, u32),
    pub notes: Vec<String>,
    pub outputs: Vec<String>,
}

impl RunMetadata {
    pub fn extrapolation_note(m: &FprDrawMatrix) -> String {
        let lo = m.ages.first().copied().unwrap_or(f64::NAN);
        let hi = m.ages.last().copied().unwrap_or(f64::NAN);
        format!(
            "false-positive counts sum over ages {COUNT_AGE_MIN}-{COUNT_AGE_MAX}; FPR and corrected \
             prevalence are held constant outside the estimation grid {lo}-{hi}"
        )
    }

    pub fn exclusions(m: &FprDrawMatrix) -> Vec<CellExclusions> {
        Sex::ALL
            .iter()
            .flat_map(|&sex| m.ages.iter().enumerate().map(move |(j, &age)| (sex, j, age)))
            .map(|(sex, j, age)| CellExclusions { sex, age, excluded: m.excluded_count(sex, j) })
            .collect()
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;
    use idm_fpr::synthdata::ScenarioSpec;

    #[test]
    fn draws_round_trip_through_csv() {
        let spec = ScenarioSpec::reference();
        let survey = spec.survey();
        let cfg = McConfig { n_draws: 25, ..McConfig::default() };
        let m = idm_fpr::montecarlo::estimate_fpr_grid(&cfg, &spec, &survey).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(FPR_DRAWS);
        write_fpr_draws(std::fs::File::create(&path).unwrap(), &m).unwrap();
        let back = read_fpr_draws(&path, survey, |s, a| {
            let j = m.ages.iter().position(|&x| x == a).unwrap();
            m.reference_prevalence(s, j)
        })
        .unwrap();
        assert_eq!(back.se, m.se);
        let key = |c: &DrawCell| (c.fpr(), c.flags());
        assert!(back.cells().iter().map(key).eq(m.cells().iter().map(key)));
        assert_eq!(back.excluded, m.excluded);
        assert_eq!(back.ages, m.ages);
    }

    #[test]
    fn fingerprint_is_sha256() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "abc").unwrap();
        let f = fingerprint("x", &p).unwrap();
        assert_eq!(f.sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
