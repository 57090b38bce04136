use idm_fpr::datamodel::Sex;
use idm_fpr::linalg::Matrix;
use idm_fpr::linkfit::*;
use idm_fpr::pipeline::{fit_surfaces, FitOptions};
use idm_fpr::synthdata::{generate_scenario, ScenarioSpec};

fn pts(f: impl Fn(f64, Sex) -> f64, ages: impl Iterator<Item = f64> + Clone, year: f64) -> Vec<SurfacePoint<f64>> {
    Sex::ALL
        .iter()
        .flat_map(|&sex| ages.clone().map(move |age| (sex, age)))
        .map(|(sex, age)| SurfacePoint { year, age, sex, value: f(age, sex) })
        .collect()
}

#[test]
fn quadratic_fit_of_gompertz_mortality_is_monotone() {
    let data = pts(|a, _| (-10.0 + 0.1 * a).exp(), (40..=90).map(f64::from), 2012.0);
    let spec = BasisSpec::polynomial(2, false, true).unwrap();
    let fit = fit_surface(&data, spec, Link::Log, 2012.0).unwrap();
    for sex in Sex::ALL {
        let mut last = 0.0;
        for k in 0..=500 {
            let a = 40.0 + 0.1 * k as f64;
            let m = fit.eval(2012.0, a, sex);
            assert!(m > last, "not increasing at {a}");
            last = m;
        }
        assert!((fit.eval(2012.0, 60.0, sex) - (-4.0f64).exp()).abs() < 1e-12);
    }
}

#[test]
fn three_point_line() {
    let x = Matrix::<f64>::from_rows(&[vec![1.0, 1.0], vec![1.0, 2.0], vec![1.0, 4.0]]).unwrap();
    let y = [3.0, 5.0, 9.0];
    let fit = fit_ols(&x, &y, &["1".into(), "a".into()]).unwrap();
    assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
    assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
}

#[test]
fn residuals_orthogonal_to_design() {
    let spec = BasisSpec::natural_spline(vec![20.0, 40.0, 60.0, 80.0], true, true).unwrap();
    let mut data = Vec::new();
    for year in [2009.0, 2015.0] {
        data.extend(pts(|a, s| 0.01 + 0.002 * a + (a * 0.3).sin() * 0.01 + s.indicator() * 0.01, (20..=85).step_by(5).map(f64::from), year));
    }
    let design: Vec<DesignPoint<f64>> =
        data.iter().map(|p| DesignPoint { age: p.age, time: p.year - 2012.0, sex: p.sex }).collect();
    let x = build_design(&design, &spec);
    let y: Vec<f64> = data.iter().map(|p| p.value).collect();
    let fit = fit_ols(&x, &y, &spec.column_names()).unwrap();
    let fitted = x.mul_vec(&fit.coefficients);
    let r: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let xtr = x.tr_mul_vec(&r);
    let norm_y = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(xtr.iter().all(|v| v.abs() <= 1e-8 * norm_y));
}

#[test]
fn representable_target_is_reproduced() {
    // Logit-linear in age with a sex shift lies in the spline span.
    let truth = |a: f64, s: Sex| 1.0 / (1.0 + (-(-5.0 + 0.05 * a + 0.3 * s.indicator())).exp());
    let data = pts(truth, (15..=95).step_by(5).map(f64::from), 2012.0);
    let ages: Vec<f64> = data.iter().map(|p| p.age).collect();
    let spec = BasisSpec::natural_spline_from_ages(&ages, 4, false, true).unwrap();
    let fit = fit_surface(&data, spec, Link::Logit, 2012.0).unwrap();
    for p in &data {
        assert!((fit.eval(p.year, p.age, p.sex) - p.value).abs() < 1e-10);
    }
    assert!(fit.rss < 1e-20);
}

#[test]
fn fitted_reference_surfaces() {
    let sc = generate_scenario(&ScenarioSpec::reference()).unwrap();
    let set = fit_surfaces(&sc.dataset, &FitOptions::default(), None).unwrap();
    assert_eq!(set.prevalence.coefficients.len(), 20);
    assert_eq!(set.incidence.coefficients.len(), 16);
    assert_eq!(set.mortality.coefficients.len(), 6);
    assert_eq!(set.mrr.coefficients.len(), 8);
    for sex in Sex::ALL {
        for a in 0..=110 {
            let p = set.prevalence.eval(2012.0, f64::from(a), sex);
            assert!(p > 0.0 && p < 1.0);
            assert!(set.incidence.eval(2012.0, f64::from(a), sex) > 0.0);
        }
        // Mortality is exactly log-linear in the scenario, so the quadratic fit is exact.
        let m = set.mortality.eval(2012.0, 70.5, sex);
        let truth = sc.spec.fields.mortality(2012.0, 70.5, sex);
        assert!((m / truth - 1.0).abs() < 1e-9);
    }
    // Serialized surfaces evaluate identically after a JSON round trip.
    let json = serde_json::to_string(&set.prevalence).unwrap();
    let back: FittedSurface<f64> = serde_json::from_str(&json).unwrap();
    back.check().unwrap();
    assert_eq!(back.eval(2010.0, 47.0, Sex::Female), set.prevalence.eval(2010.0, 47.0, Sex::Female));
}

#[test]
fn supplied_mortality_surface_replaces_the_table() {
    let sc = generate_scenario(&ScenarioSpec::reference()).unwrap();
    let full = fit_surfaces(&sc.dataset, &FitOptions::default(), None).unwrap();
    let mut d = sc.dataset.clone();
    d.mortality.clear();
    let set = fit_surfaces(&d, &FitOptions::default(), Some(full.mortality.clone())).unwrap();
    assert_eq!(set, full);
    assert!(fit_surfaces(&d, &FitOptions::default(), None).is_err());
}

#[test]
fn fits_in_single_precision() {
    let data: Vec<SurfacePoint<f32>> = (0..20)
        .map(|k| SurfacePoint { year: 0.0, age: 20.0 + 3.0 * k as f32, sex: Sex::Male, value: (-6.0 + 0.05 * (20.0 + 3.0 * k as f32)).exp() })
        .collect();
    let spec = BasisSpec::<f32>::polynomial(1, false, false).unwrap();
    let fit = fit_surface(&data, spec, Link::Log, 0.0).unwrap();
    assert!((fit.coefficients[1] - 0.05).abs() < 1e-4);
}
