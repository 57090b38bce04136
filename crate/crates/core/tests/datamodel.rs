use idm_fpr::datamodel::*;
use idm_fpr::montecarlo::default_age_grid;
use idm_fpr::synthdata::{generate_scenario, ScenarioSpec};

fn reference_dataset() -> Dataset {
    generate_scenario(&ScenarioSpec::reference()).unwrap().dataset
}

#[test]
fn claims_shaped_dataset_validates() {
    let d = reference_dataset();
    assert_eq!(d.survey_gap(), Some(6.0));
    let report = validate_dataset(&d, &default_age_grid());
    assert!(report.is_ok(), "{:?}", report.issues);
}

#[test]
fn grid_finer_than_gap_is_flagged() {
    let d = reference_dataset();
    let grid: Vec<f64> = (0..13).map(|k| 25.0 + 5.0 * k as f64).collect();
    let report = validate_dataset(&d, &grid);
    assert!(report
        .issues
        .iter()
        .any(|i| matches!(i, ValidationIssue::GridTooFine { spacing, gap } if *spacing == 5.0 && *gap == 6.0)));
}

#[test]
fn single_survey_is_flagged() {
    let mut d = reference_dataset();
    d.prevalence.retain(|r| r.year == Some(2009));
    let report = validate_dataset(&d, &default_age_grid());
    assert!(report.issues.iter().any(|i| matches!(i, ValidationIssue::MissingSurvey { .. })));
}

#[test]
fn gap_in_age_groups_is_flagged() {
    let mut d = reference_dataset();
    let drop = d
        .prevalence
        .iter()
        .position(|r| r.sex == Sex::Female && r.year == Some(2015) && r.age_lo == 40.0)
        .unwrap();
    d.prevalence.remove(drop);
    let report = validate_dataset(&d, &default_age_grid());
    assert!(report
        .issues
        .iter()
        .any(|i| matches!(i, ValidationIssue::NonContiguous { kind: TableKind::Prevalence, sex: Sex::Female, .. })));
}

#[test]
fn every_table_round_trips_through_csv() {
    let d = reference_dataset();
    let dir = tempfile::tempdir().unwrap();
    for kind in TableKind::ALL {
        let path = dir.path().join(kind.file_name());
        write_table(std::fs::File::create(&path).unwrap(), kind, d.table(kind)).unwrap();
        let back = load_table(&path, kind).unwrap();
        assert_eq!(back.as_slice(), d.table(kind), "{kind}");
    }
}

#[test]
fn missing_file_reports_path() {
    let err = load_table(std::path::Path::new("/nonexistent/mortality.csv"), TableKind::Mortality).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/mortality.csv"), "{err}");
}

#[test]
fn domain_errors_name_the_line() {
    let csv = "sex,year,age_lo,age_hi,prevalence\nmale,2009,20,24,0.02\nmale,2009,25,29,1.2\n";
    match parse_table(csv.as_bytes(), TableKind::Prevalence) {
        Err(DataError::Domain { line, .. }) => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
    let csv = "sex,year,age_lo,age_hi,prevalence\nmale,2009,20,24,abc\n";
    assert!(matches!(parse_table(csv.as_bytes(), TableKind::Prevalence), Err(DataError::Parse { line: 2, .. })));
    let csv = "sex,year,age_lo,prevalence\nmale,2009,20,0.1\n";
    assert!(matches!(
        parse_table(csv.as_bytes(), TableKind::Prevalence),
        Err(DataError::MissingColumn { column: "age_hi", .. })
    ));
}

#[test]
fn representative_ages() {
    assert_eq!(representative_age(80.0, Some(84.0)), 82.5);
    assert_eq!(representative_age(90.0, None), 92.5);
    assert_eq!(representative_age(20.0, Some(39.0)), 30.0);
    let reps = RepresentativeAges {
        overrides: vec![AgeOverride { age_lo: 90.0, age_hi: None, age: 94.0 }],
    };
    assert_eq!(reps.age(90.0, None), 94.0);
    assert_eq!(reps.age(80.0, Some(84.0)), 82.5);
    // Monotone in both bounds for bounded groups.
    let mut last = f64::NEG_INFINITY;
    for lo in 0..90 {
        let a = representative_age(lo as f64, Some(lo as f64 + 4.0));
        assert!(a > last);
        last = a;
    }
}
