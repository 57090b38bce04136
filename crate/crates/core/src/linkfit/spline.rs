//! Natural cubic spline basis.
//!
//! The basis is the cardinal (Lagrange) family of natural cubic splines on a
//! knot vector: basis function `j` is the natural interpolating spline that
//! is 1 at knot `j` and 0 at every other knot. Beyond the boundary knots each
//! function continues linearly. Dropping the first function leaves
//! `knots.len() - 1` columns whose span together with a constant is the full
//! natural spline space, the same space as R's `ns(x, df)` plus intercept.

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct NaturalSplineBasis<T> {
    knots: Vec<T>,
    /// `second[j][k]`: second derivative at knot `j` of cardinal function `k`.
    second: Vec<Vec<T>>,
}

impl<T: Real> NaturalSplineBasis<T> {
    /// `knots` must be strictly increasing with at least two entries; callers
    /// validate this.
    #[allow(clippy::needless_range_loop)]
    pub fn new(knots: &[T]) -> Self {
        let n = knots.len();
        debug_assert!(n >= 2);
        let mut second = vec![vec![T::zero(); n]; n];
        if n > 2 {
            let six = T::lit(6.0);
            let two = T::lit(2.0);
            let h: Vec<T> = knots.windows(2).map(|w| w[1] - w[0]).collect();
            // Interior unknowns M_1..M_{n-2}; M_0 = M_{n-1} = 0.
            let inner = n - 2;
            let lower: Vec<T> = (0..inner).map(|r| h[r]).collect();
            let diag: Vec<T> = (0..inner).map(|r| two * (h[r] + h[r + 1])).collect();
            let upper: Vec<T> = (0..inner).map(|r| h[r + 1]).collect();
            for k in 0..n {
                let rhs: Vec<T> = (0..inner)
                    .map(|r| {
                        let j = r + 1;
                        let y = |i: usize| if i == k { T::one() } else { T::zero() };
                        six * ((y(j + 1) - y(j)) / h[j] - (y(j) - y(j - 1)) / h[j - 1])
                    })
                    .collect();
                let m = solve_tridiagonal(&lower, &diag, &upper, rhs);
                for (r, v) in m.into_iter().enumerate() {
                    second[r + 1][k] = v;
                }
            }
        }
        Self { knots: knots.to_vec(), second }
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    /// Number of columns produced by [`Self::eval_into`] (intercept dropped).
    pub fn dim(&self) -> usize {
        self.knots.len() - 1
    }

    /// Values of all cardinal functions at `x`, including the first.
    pub fn eval_full(&self, x: T) -> Vec<T> {
        let n = self.knots.len();
        let kn = &self.knots;
        let six = T::lit(6.0);
        let mut out = vec![T::zero(); n];

        if x < kn[0] || x > kn[n - 1] {
            // Linear continuation with the boundary slope.
            let (j, at, dx) = if x < kn[0] { (0, 0, x - kn[0]) } else { (n - 2, n - 1, x - kn[n - 1]) };
            let h = kn[j + 1] - kn[j];
            for (k, o) in out.iter_mut().enumerate() {
                let y0 = if k == j { T::one() } else { T::zero() };
                let y1 = if k == j + 1 { T::one() } else { T::zero() };
                let (m0, m1) = (self.second[j][k], self.second[j + 1][k]);
                let slope = if at == 0 {
                    (y1 - y0) / h - h * (T::lit(2.0) * m0 + m1) / six
                } else {
                    (y1 - y0) / h + h * (m0 + T::lit(2.0) * m1) / six
                };
                let base = if at == 0 { y0 } else { y1 };
                *o = base + slope * dx;
            }
            return out;
        }

        let j = match kn.iter().rposition(|&k| k <= x) {
            Some(j) if j >= n - 1 => n - 2,
            Some(j) => j,
            None => 0,
        };
        let h = kn[j + 1] - kn[j];
        let a = (kn[j + 1] - x) / h;
        let b = T::one() - a;
        let ca = (a * a * a - a) * h * h / six;
        let cb = (b * b * b - b) * h * h / six;
        for (k, o) in out.iter_mut().enumerate() {
            let y0 = if k == j { T::one() } else { T::zero() };
            let y1 = if k == j + 1 { T::one() } else { T::zero() };
            *o = a * y0 + b * y1 + ca * self.second[j][k] + cb * self.second[j + 1][k];
        }
        out
    }

    /// Appends the `dim()` basis values at `x` to `out`.
    pub fn eval_into(&self, x: T, out: &mut Vec<T>) {
        out.extend(self.eval_full(x).into_iter().skip(1));
    }
}

fn solve_tridiagonal<T: Real>(lower: &[T], diag: &[T], upper: &[T], mut rhs: Vec<T>) -> Vec<T> {
    let n = diag.len();
    let mut c = vec![T::zero(); n];
    let mut d = diag.to_vec();
    for i in 0..n {
        if i > 0 {
            let w = lower[i] / d[i - 1];
            d[i] = d[i] - w * c[i - 1];
            rhs[i] = rhs[i] - w * rhs[i - 1];
        }
        c[i] = upper[i];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let next = if i + 1 < n { c[i] * x[i + 1] } else { T::zero() };
        x[i] = (rhs[i] - next) / d[i];
    }
    x
}
