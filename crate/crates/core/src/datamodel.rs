//! Input records, CSV ingestion and dataset validation.

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("{kind} table is missing column `{column}`")]
    MissingColumn { kind: TableKind, column: &'static str },
    #[error("line {line}: cannot parse {column} value `{value}`")]
    Parse { line: u64, column: &'static str, value: String },
    #[error("line {line}: {message}")]
    Domain { line: u64, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    pub const ALL: [Sex; 2] = [Sex::Male, Sex::Female];

    /// Design-matrix coding: male 0, female 1.
    pub fn indicator(self) -> f64 {
        match self {
            Sex::Male => 0.0,
            Sex::Female => 1.0,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Male => "male",
            Sex::Female => "female",
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Sex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" | "men" => Ok(Sex::Male),
            "female" | "f" | "women" => Ok(Sex::Female),
            other => Err(format!("unknown sex `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableKind {
    Prevalence,
    Incidence,
    Mortality,
    Mrr,
    Population,
}

impl TableKind {
    pub const ALL: [TableKind; 5] = [
        TableKind::Prevalence,
        TableKind::Incidence,
        TableKind::Mortality,
        TableKind::Mrr,
        TableKind::Population,
    ];

    /// Column names in canonical order.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            TableKind::Prevalence => &["sex", "year", "age_lo", "age_hi", "prevalence"],
            TableKind::Incidence => &["sex", "year", "age_lo", "age_hi", "rate"],
            TableKind::Mortality => &["sex", "year", "age", "rate"],
            TableKind::Mrr => &["sex", "age", "ratio"],
            TableKind::Population => &["sex", "age", "count"],
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            TableKind::Prevalence => "prevalence.csv",
            TableKind::Incidence => "incidence.csv",
            TableKind::Mortality => "mortality.csv",
            TableKind::Mrr => "mrr.csv",
            TableKind::Population => "population.csv",
        }
    }

    fn has_year(self) -> bool {
        matches!(self, TableKind::Prevalence | TableKind::Incidence | TableKind::Mortality)
    }

    fn grouped(self) -> bool {
        matches!(self, TableKind::Prevalence | TableKind::Incidence)
    }

    fn check_value(self, v: f64) -> Result<(), String> {
        let ok = match self {
            TableKind::Prevalence => v > 0.0 && v < 1.0,
            TableKind::Incidence | TableKind::Mortality | TableKind::Mrr => v > 0.0 && v.is_finite(),
            TableKind::Population => v >= 0.0 && v.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            let want = match self {
                TableKind::Prevalence => "in (0, 1)",
                TableKind::Population => ">= 0",
                _ => "> 0",
            };
            Err(format!("{self} value {v} must be {want}"))
        }
    }
}

impl fmt::Display for TableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TableKind::Prevalence => "prevalence",
            TableKind::Incidence => "incidence",
            TableKind::Mortality => "mortality",
            TableKind::Mrr => "mrr",
            TableKind::Population => "population",
        };
        f.write_str(s)
    }
}

/// One age-group × year × sex data point.
///
/// Single-age tables (mortality, MRR, population) store `age_lo == age_hi`.
/// `year` is `None` for tables without a calendar dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub sex: Sex,
    pub year: Option<i32>,
    pub age_lo: f64,
    pub age_hi: Option<f64>,
    pub value: f64,
}

impl ObservationRecord {
    pub fn representative_age(&self) -> f64 {
        representative_age(self.age_lo, self.age_hi)
    }
}

/// Representative age of an inclusive integer-year group: bounded groups map
/// to `(lo + hi + 1) / 2`, open-ended groups to `lo + 2.5`.
pub fn representative_age(age_lo: f64, age_hi: Option<f64>) -> f64 {
    match age_hi {
        Some(hi) => (age_lo + hi + 1.0) / 2.0,
        None => age_lo + 2.5,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeOverride {
    pub age_lo: f64,
    pub age_hi: Option<f64>,
    pub age: f64,
}

/// Representative ages with optional per-group overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RepresentativeAges {
    pub overrides: Vec<AgeOverride>,
}

impl RepresentativeAges {
    pub fn age(&self, age_lo: f64, age_hi: Option<f64>) -> f64 {
        self.overrides
            .iter()
            .find(|o| o.age_lo == age_lo && o.age_hi == age_hi)
            .map_or_else(|| representative_age(age_lo, age_hi), |o| o.age)
    }
}

pub fn load_table(path: &Path, kind: TableKind) -> Result<Vec<ObservationRecord>, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io { path: path.to_owned(), source })?;
    parse_table(file, kind)
}

/// Parses a table from any reader. Either every row is returned or the
/// whole load fails with the offending line.
pub fn parse_table<R: Read>(reader: R, kind: TableKind) -> Result<Vec<ObservationRecord>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut index = Vec::with_capacity(kind.columns().len());
    for &col in kind.columns() {
        let pos = headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}').eq_ignore_ascii_case(col))
            .ok_or(DataError::MissingColumn { kind, column: col })?;
        index.push(pos);
    }

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(index[i]).unwrap_or("");
        let num = |i: usize| -> Result<f64, DataError> {
            let raw = field(i);
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DataError::Parse { line, column: kind.columns()[i], value: raw.to_owned() })
        };

        let sex: Sex = field(0)
            .parse()
            .map_err(|_| DataError::Parse { line, column: "sex", value: field(0).to_owned() })?;
        let mut col = 1;
        let year = if kind.has_year() {
            let raw = field(col);
            let y = raw
                .parse::<i32>()
                .map_err(|_| DataError::Parse { line, column: "year", value: raw.to_owned() })?;
            col += 1;
            Some(y)
        } else {
            None
        };
        let (age_lo, age_hi) = if kind.grouped() {
            let lo = num(col)?;
            let hi = if field(col + 1).is_empty() { None } else { Some(num(col + 1)?) };
            col += 2;
            (lo, hi)
        } else {
            let a = num(col)?;
            col += 1;
            (a, Some(a))
        };
        let value = num(col)?;

        if age_lo < 0.0 {
            return Err(DataError::Domain { line, message: format!("negative age {age_lo}") });
        }
        if let Some(hi) = age_hi {
            if hi < age_lo {
                return Err(DataError::Domain {
                    line,
                    message: format!("age_hi {hi} below age_lo {age_lo}"),
                });
            }
        }
        kind.check_value(value).map_err(|message| DataError::Domain { line, message })?;
        out.push(ObservationRecord { sex, year, age_lo, age_hi, value });
    }
    Ok(out)
}

/// Writes records in the CSV layout `parse_table` reads back.
pub fn write_table<W: std::io::Write>(
    writer: W,
    kind: TableKind,
    records: &[ObservationRecord],
) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(kind.columns())?;
    for r in records {
        let mut row: Vec<String> = vec![r.sex.to_string()];
        if kind.has_year() {
            row.push(r.year.unwrap_or_default().to_string());
        }
        row.push(fmt_num(r.age_lo));
        if kind.grouped() {
            row.push(r.age_hi.map(fmt_num).unwrap_or_default());
        }
        row.push(fmt_num(r.value));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| DataError::Csv(e.into()))?;
    Ok(())
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub prevalence: Vec<ObservationRecord>,
    pub incidence: Vec<ObservationRecord>,
    pub mortality: Vec<ObservationRecord>,
    pub mrr: Vec<ObservationRecord>,
    pub population: Vec<ObservationRecord>,
}

impl Dataset {
    pub fn table(&self, kind: TableKind) -> &[ObservationRecord] {
        match kind {
            TableKind::Prevalence => &self.prevalence,
            TableKind::Incidence => &self.incidence,
            TableKind::Mortality => &self.mortality,
            TableKind::Mrr => &self.mrr,
            TableKind::Population => &self.population,
        }
    }

    pub fn table_mut(&mut self, kind: TableKind) -> &mut Vec<ObservationRecord> {
        match kind {
            TableKind::Prevalence => &mut self.prevalence,
            TableKind::Incidence => &mut self.incidence,
            TableKind::Mortality => &mut self.mortality,
            TableKind::Mrr => &mut self.mrr,
            TableKind::Population => &mut self.population,
        }
    }

    /// Loads all five tables from their standard file names in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, DataError> {
        let mut d = Dataset::default();
        for kind in TableKind::ALL {
            *d.table_mut(kind) = load_table(&dir.join(kind.file_name()), kind)?;
        }
        Ok(d)
    }

    /// Distinct prevalence survey years, ascending.
    pub fn survey_years(&self) -> Vec<i32> {
        let mut years: Vec<i32> = self.prevalence.iter().filter_map(|r| r.year).collect();
        years.sort_unstable();
        years.dedup();
        years
    }

    /// Gap between the two prevalence surveys, if there are exactly two.
    pub fn survey_gap(&self) -> Option<f64> {
        match self.survey_years().as_slice() {
            [t1, t2] => Some(f64::from(t2 - t1)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum ValidationIssue {
    /// Prevalence must come from exactly two survey years.
    MissingSurvey { years: Vec<i32> },
    EmptyTable { kind: TableKind },
    MissingStratum { kind: TableKind, sex: Sex, year: Option<i32> },
    NonContiguous { kind: TableKind, sex: Sex, year: Option<i32>, age: f64 },
    OutOfDomain { kind: TableKind, index: usize, value: f64 },
    GridNotIncreasing,
    /// Grid spacing must exceed the survey gap.
    GridTooFine { spacing: f64, gap: f64 },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::MissingSurvey { years } => {
                write!(f, "prevalence needs exactly two survey years, found {years:?}")
            }
            ValidationIssue::EmptyTable { kind } => write!(f, "{kind} table is empty"),
            ValidationIssue::MissingStratum { kind, sex, year } => match year {
                Some(y) => write!(f, "{kind} has no {sex} records for {y}"),
                None => write!(f, "{kind} has no {sex} records"),
            },
            ValidationIssue::NonContiguous { kind, sex, year, age } => {
                write!(f, "{kind} ({sex}, {year:?}) age groups not contiguous at age {age}")
            }
            ValidationIssue::OutOfDomain { kind, index, value } => {
                write!(f, "{kind} record {index} has out-of-domain value {value}")
            }
            ValidationIssue::GridNotIncreasing => f.write_str("age grid must be strictly increasing"),
            ValidationIssue::GridTooFine { spacing, gap } => write!(
                f,
                "age grid spacing {spacing} must be coarser than the survey gap {gap}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Lists every reason the dataset cannot feed an estimation on `age_grid`.
pub fn validate_dataset(d: &Dataset, age_grid: &[f64]) -> ValidationReport {
    let mut issues = Vec::new();

    let years = d.survey_years();
    if years.len() != 2 {
        issues.push(ValidationIssue::MissingSurvey { years: years.clone() });
    }

    for kind in TableKind::ALL {
        let table = d.table(kind);
        if table.is_empty() {
            issues.push(ValidationIssue::EmptyTable { kind });
            continue;
        }
        for (index, r) in table.iter().enumerate() {
            let bad_age = r.age_lo < 0.0 || r.age_hi.is_some_and(|h| h < r.age_lo);
            if kind.check_value(r.value).is_err() || bad_age {
                issues.push(ValidationIssue::OutOfDomain { kind, index, value: r.value });
            }
        }
        for sex in Sex::ALL {
            if kind == TableKind::Prevalence {
                for &y in &years {
                    if !table.iter().any(|r| r.sex == sex && r.year == Some(y)) {
                        issues.push(ValidationIssue::MissingStratum { kind, sex, year: Some(y) });
                    }
                }
            } else if !table.iter().any(|r| r.sex == sex) {
                issues.push(ValidationIssue::MissingStratum { kind, sex, year: None });
            }
        }
        if kind != TableKind::Mrr {
            check_contiguity(kind, table, &mut issues);
        }
    }

    if age_grid.windows(2).any(|w| w[1] <= w[0]) {
        issues.push(ValidationIssue::GridNotIncreasing);
    } else if let (Some(gap), Some(spacing)) = (
        d.survey_gap(),
        age_grid.windows(2).map(|w| w[1] - w[0]).reduce(f64::min),
    ) {
        if spacing <= gap {
            issues.push(ValidationIssue::GridTooFine { spacing, gap });
        }
    }

    ValidationReport { issues }
}

fn check_contiguity(kind: TableKind, table: &[ObservationRecord], issues: &mut Vec<ValidationIssue>) {
    let mut strata: Vec<(Sex, Option<i32>)> = table.iter().map(|r| (r.sex, r.year)).collect();
    strata.sort();
    strata.dedup();
    for (sex, year) in strata {
        let mut groups: Vec<&ObservationRecord> =
            table.iter().filter(|r| r.sex == sex && r.year == year).collect();
        groups.sort_by(|a, b| a.age_lo.total_cmp(&b.age_lo));
        for pair in groups.windows(2) {
            let expected = pair[0].age_hi.map(|h| h + 1.0);
            if expected != Some(pair[1].age_lo) {
                issues.push(ValidationIssue::NonContiguous { kind, sex, year, age: pair[1].age_lo });
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PREV: &str = "sex,year,age_lo,age_hi,prevalence\n\
                        male,2009,20,24,0.004\n\
                        male,2009,25,29,0.008\n\
                        female,2015,80,84,0.31\n\
                        female,2015,90,,0.28\n";

    #[test]
    fn parses_prevalence() {
        let recs = parse_table(PREV.as_bytes(), TableKind::Prevalence).unwrap();
        assert_eq!(recs.len(), 4);
        assert_eq!(recs[0].sex, Sex::Male);
        assert_eq!(recs[0].year, Some(2009));
        assert_eq!(recs[3].age_hi, None);
        assert_eq!(recs[3].representative_age(), 92.5);
        assert_eq!(recs[2].representative_age(), 82.5);
    }

    #[test]
    fn crlf_matches_lf() {
        let crlf: Vec<u8> = PREV.bytes().flat_map(|b| if b == b'\n' { vec![b'\r', b'\n'] } else { vec![b] }).collect();
        assert!(crlf.windows(2).any(|w| w == b"\r\n"));
        let a = parse_table(PREV.as_bytes(), TableKind::Prevalence).unwrap();
        let b = parse_table(crlf.as_slice(), TableKind::Prevalence).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn out_of_domain_prevalence_names_line() {
        let bad = "sex,year,age_lo,age_hi,prevalence\nmale,2009,20,24,0.1\nmale,2009,25,29,1.2\n";
        match parse_table(bad.as_bytes(), TableKind::Prevalence) {
            Err(DataError::Domain { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("1.2"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_and_bad_cell() {
        let no_rate = "sex,year,age_lo,age_hi\nmale,2012,20,39\n";
        assert!(matches!(
            parse_table(no_rate.as_bytes(), TableKind::Incidence),
            Err(DataError::MissingColumn { column: "rate", .. })
        ));
        let bad_cell = "sex,age,ratio\nfemale,40,abc\n";
        assert!(matches!(
            parse_table(bad_cell.as_bytes(), TableKind::Mrr),
            Err(DataError::Parse { line: 2, column: "ratio", .. })
        ));
        let bad_sex = "sex,age,count\nother,40,10\n";
        assert!(matches!(
            parse_table(bad_sex.as_bytes(), TableKind::Population),
            Err(DataError::Parse { column: "sex", .. })
        ));
    }

    #[test]
    fn columns_in_any_order() {
        let t = "age,count,sex\n40,1000,female\n";
        let r = parse_table(t.as_bytes(), TableKind::Population).unwrap();
        assert_eq!(r[0].value, 1000.0);
        assert_eq!(r[0].sex, Sex::Female);
    }

    #[test]
    fn representative_age_rules() {
        assert_eq!(representative_age(80.0, Some(84.0)), 82.5);
        assert_eq!(representative_age(90.0, None), 92.5);
        assert_eq!(representative_age(20.0, Some(39.0)), 30.0);
        let ages = RepresentativeAges {
            overrides: vec![AgeOverride { age_lo: 90.0, age_hi: None, age: 93.0 }],
        };
        assert_eq!(ages.age(90.0, None), 93.0);
        assert_eq!(ages.age(80.0, Some(84.0)), 82.5);
    }

    #[test]
    fn round_trip_through_writer() {
        let recs = parse_table(PREV.as_bytes(), TableKind::Prevalence).unwrap();
        let mut buf = Vec::new();
        write_table(&mut buf, TableKind::Prevalence, &recs).unwrap();
        assert_eq!(parse_table(buf.as_slice(), TableKind::Prevalence).unwrap(), recs);
    }
}
