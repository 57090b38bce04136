//! Link transforms, spline/polynomial design matrices and least-squares
//! surfaces evaluated back on the natural scale.

mod spline;

pub use spline::NaturalSplineBasis;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::empirical_quantiles;
use crate::datamodel::Sex;
use crate::linalg::{lstsq, LinalgError, Matrix};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("{link:?} link undefined at {value}")]
    Domain { link: Link, value: f64 },
    #[error("invalid knots: {0}")]
    InvalidKnots(String),
    #[error("degrees of freedom must be at least 1")]
    InvalidDegrees,
    #[error("{rows} observations cannot determine {cols} coefficients")]
    TooFewObservations { rows: usize, cols: usize },
    #[error("rank-deficient design; dependent columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("{0}")]
    Linalg(LinalgError),
    #[error("coefficient vector has {got} entries, design has {expected} columns")]
    CoefficientLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Logit,
    Log,
}

pub fn link_forward<T: Real>(link: Link, x: T) -> Result<T, FitError> {
    match link {
        Link::Logit if x > T::zero() && x < T::one() => Ok((x / (T::one() - x)).ln()),
        Link::Log if x > T::zero() && x.is_finite() => Ok(x.ln()),
        _ => Err(FitError::Domain { link, value: x.as_f64() }),
    }
}

pub fn link_inverse<T: Real>(link: Link, y: T) -> T {
    match link {
        Link::Logit => {
            if y >= T::zero() {
                T::one() / (T::one() + (-y).exp())
            } else {
                let e = y.exp();
                e / (T::one() + e)
            }
        }
        Link::Log => y.exp(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisKind<T> {
    /// Knots include both boundary knots; `df = knots.len() - 1`.
    NaturalCubicSpline { knots: Vec<T> },
    /// Raw powers `a, a², …, a^degree`.
    Polynomial { degree: usize },
}

/// Age basis plus which covariates enter and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec<T> {
    pub kind: BasisKind<T>,
    /// Centered calendar time enters linearly.
    pub time: bool,
    pub sex: bool,
    /// Full tensor expansion (`basis * t * s`); otherwise main effects only.
    pub interaction: bool,
}

impl<T: Real> BasisSpec<T> {
    pub fn natural_spline(knots: Vec<T>, time: bool, sex: bool) -> Result<Self, FitError> {
        if knots.len() < 2 {
            return Err(FitError::InvalidKnots("need at least two knots".into()));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(FitError::InvalidKnots(format!("not strictly increasing: {knots:?}")));
        }
        Ok(Self { kind: BasisKind::NaturalCubicSpline { knots }, time, sex, interaction: true })
    }

    /// Boundary knots at the data range, `df - 1` interior knots at equally
    /// spaced quantiles of the data ages.
    pub fn natural_spline_from_ages(ages: &[T], df: usize, time: bool, sex: bool) -> Result<Self, FitError> {
        if df == 0 {
            return Err(FitError::InvalidDegrees);
        }
        let probs: Vec<T> = (0..=df).map(|j| T::lit(j as f64 / df as f64)).collect();
        let knots = empirical_quantiles(ages, &probs)
            .map_err(|_| FitError::InvalidKnots("no data ages".into()))?;
        Self::natural_spline(knots, time, sex)
    }

    pub fn polynomial(degree: usize, time: bool, sex: bool) -> Result<Self, FitError> {
        if degree == 0 {
            return Err(FitError::InvalidDegrees);
        }
        Ok(Self { kind: BasisKind::Polynomial { degree }, time, sex, interaction: true })
    }

    pub fn degrees_of_freedom(&self) -> usize {
        match &self.kind {
            BasisKind::NaturalCubicSpline { knots } => knots.len() - 1,
            BasisKind::Polynomial { degree } => *degree,
        }
    }

    pub fn knots(&self) -> Option<&[T]> {
        match &self.kind {
            BasisKind::NaturalCubicSpline { knots } => Some(knots),
            BasisKind::Polynomial { .. } => None,
        }
    }

    fn age_labels(&self) -> Vec<String> {
        let n = self.degrees_of_freedom();
        match self.kind {
            BasisKind::NaturalCubicSpline { .. } => (1..=n).map(|k| format!("ns{k}")).collect(),
            BasisKind::Polynomial { .. } => {
                (1..=n).map(|k| if k == 1 { "a".into() } else { format!("a^{k}") }).collect()
            }
        }
    }

    /// Column labels in design order.
    pub fn column_names(&self) -> Vec<String> {
        let mut age = vec!["1".to_string()];
        age.extend(self.age_labels());
        let time: &[&str] = if self.time { &["", "t"] } else { &[""] };
        let sex: &[&str] = if self.sex { &["", "s"] } else { &[""] };
        if !self.interaction {
            let mut names = age;
            names.extend(time.iter().skip(1).map(|s| s.to_string()));
            names.extend(sex.iter().skip(1).map(|s| s.to_string()));
            return names;
        }
        let mut names = Vec::new();
        for s in sex {
            for t in time {
                for a in &age {
                    let parts: Vec<&str> =
                        [a.as_str(), t, s].into_iter().filter(|p| !p.is_empty() && *p != "1").collect();
                    names.push(if parts.is_empty() { "1".into() } else { parts.join(":") });
                }
            }
        }
        names
    }

    pub fn column_count(&self) -> usize {
        let age = self.degrees_of_freedom() + 1;
        let t = usize::from(self.time);
        let s = usize::from(self.sex);
        if self.interaction {
            age * (1 + t) * (1 + s)
        } else {
            age + t + s
        }
    }

    /// Evaluator that can be reused across many rows.
    pub fn evaluator(&self) -> DesignRows<'_, T> {
        let spline = match &self.kind {
            BasisKind::NaturalCubicSpline { knots } => Some(NaturalSplineBasis::new(knots)),
            BasisKind::Polynomial { .. } => None,
        };
        DesignRows { spec: self, spline }
    }
}

/// Natural-spline basis values at `age` (without the constant term).
pub fn ns_basis<T: Real>(age: T, spec: &BasisSpec<T>) -> Vec<T> {
    match &spec.kind {
        BasisKind::NaturalCubicSpline { knots } => {
            let mut out = Vec::new();
            NaturalSplineBasis::new(knots).eval_into(age, &mut out);
            out
        }
        BasisKind::Polynomial { degree } => (1..=*degree).map(|k| age.powi(k as i32)).collect(),
    }
}

/// Covariates of one design row. `time` is already centered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignPoint<T> {
    pub age: T,
    pub time: T,
    pub sex: Sex,
}

pub struct DesignRows<'a, T> {
    spec: &'a BasisSpec<T>,
    spline: Option<NaturalSplineBasis<T>>,
}

impl<T: Real> DesignRows<'_, T> {
    pub fn row_into(&self, pt: &DesignPoint<T>, out: &mut Vec<T>) {
        let mut age = vec![T::one()];
        match (&self.spline, &self.spec.kind) {
            (Some(ns), _) => ns.eval_into(pt.age, &mut age),
            (None, BasisKind::Polynomial { degree }) => {
                age.extend((1..=*degree).map(|k| pt.age.powi(k as i32)));
            }
            (None, BasisKind::NaturalCubicSpline { .. }) => unreachable!("spline evaluator built"),
        }
        let s = T::lit(pt.sex.indicator());
        if !self.spec.interaction {
            out.extend(age);
            if self.spec.time {
                out.push(pt.time);
            }
            if self.spec.sex {
                out.push(s);
            }
            return;
        }
        let sex_f: &[T] = if self.spec.sex { &[T::one(), s] } else { &[T::one()] };
        let time_f: &[T] = if self.spec.time { &[T::one(), pt.time] } else { &[T::one()] };
        for &sf in sex_f {
            for &tf in time_f {
                out.extend(age.iter().map(|&a| a * tf * sf));
            }
        }
    }

    pub fn row(&self, pt: &DesignPoint<T>) -> Vec<T> {
        let mut out = Vec::with_capacity(self.spec.column_count());
        self.row_into(pt, &mut out);
        out
    }
}

/// Design matrix for `points`: tensor expansion
/// `{1, basis(a)…} ⊗ {1, t} ⊗ {1, s}` (factors present per `spec`).
pub fn build_design<T: Real>(points: &[DesignPoint<T>], spec: &BasisSpec<T>) -> Matrix<T> {
    let eval = spec.evaluator();
    let cols = spec.column_count();
    let mut m = Matrix::zeros(points.len(), cols);
    let mut buf = Vec::with_capacity(cols);
    for (r, pt) in points.iter().enumerate() {
        buf.clear();
        eval.row_into(pt, &mut buf);
        for (c, &v) in buf.iter().enumerate() {
            m.set(r, c, v);
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit<T> {
    pub coefficients: Vec<T>,
    pub rss: T,
    pub df_resid: usize,
}

/// Ordinary least squares by pivoted QR. Rank deficiency reports the
/// offending columns by name.
pub fn fit_ols<T: Real>(x: &Matrix<T>, y: &[T], names: &[String]) -> Result<OlsFit<T>, FitError> {
    if x.rows() < x.cols() {
        return Err(FitError::TooFewObservations { rows: x.rows(), cols: x.cols() });
    }
    match lstsq(x, y) {
        Ok(ls) => Ok(OlsFit { coefficients: ls.coefficients, rss: ls.rss, df_resid: ls.df_resid }),
        Err(LinalgError::RankDeficient { dependent, .. }) => Err(FitError::RankDeficient {
            columns: dependent
                .into_iter()
                .map(|i| names.get(i).cloned().unwrap_or_else(|| format!("#{i}")))
                .collect(),
        }),
        Err(e) => Err(FitError::Linalg(e)),
    }
}

/// One observation for [`fit_surface`], on the natural scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint<T> {
    pub year: T,
    pub age: T,
    pub sex: Sex,
    pub value: T,
}

/// Fitted smooth surface over (calendar time, age, sex).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedSurface<T> {
    pub basis: BasisSpec<T>,
    pub link: Link,
    /// Calendar year subtracted from `year` before it enters the design.
    pub time_center: T,
    pub column_names: Vec<String>,
    pub coefficients: Vec<T>,
    pub rss: T,
    pub df_resid: usize,
}

pub fn fit_surface<T: Real>(
    points: &[SurfacePoint<T>],
    basis: BasisSpec<T>,
    link: Link,
    time_center: T,
) -> Result<FittedSurface<T>, FitError> {
    let design_pts: Vec<DesignPoint<T>> = points
        .iter()
        .map(|p| DesignPoint { age: p.age, time: p.year - time_center, sex: p.sex })
        .collect();
    let y = points
        .iter()
        .map(|p| link_forward(link, p.value))
        .collect::<Result<Vec<T>, _>>()?;
    let x = build_design(&design_pts, &basis);
    let names = basis.column_names();
    let fit = fit_ols(&x, &y, &names)?;
    Ok(FittedSurface {
        basis,
        link,
        time_center,
        column_names: names,
        coefficients: fit.coefficients,
        rss: fit.rss,
        df_resid: fit.df_resid,
    })
}

impl<T: Real> FittedSurface<T> {
    /// Checks that a deserialized surface is self-consistent.
    pub fn check(&self) -> Result<(), FitError> {
        if let BasisKind::NaturalCubicSpline { knots } = &self.basis.kind {
            BasisSpec::natural_spline(knots.clone(), self.basis.time, self.basis.sex)?;
        }
        let expected = self.basis.column_count();
        if self.coefficients.len() != expected {
            return Err(FitError::CoefficientLength { expected, got: self.coefficients.len() });
        }
        Ok(())
    }

    /// Value on the link scale.
    pub fn linear_predictor(&self, year: T, age: T, sex: Sex) -> T {
        let pt = DesignPoint { age, time: year - self.time_center, sex };
        let row = self.basis.evaluator().row(&pt);
        row.iter().zip(&self.coefficients).fold(T::zero(), |s, (&x, &b)| s + x * b)
    }

    pub fn eval(&self, year: T, age: T, sex: Sex) -> T {
        link_inverse(self.link, self.linear_predictor(year, age, sex))
    }
}

/// Evaluates `f` at a single point; same as [`FittedSurface::eval`].
pub fn eval_surface<T: Real>(f: &FittedSurface<T>, year: T, age: T, sex: Sex) -> T {
    f.eval(year, age, sex)
}
