//! Dense least squares via Householder QR with column pivoting.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("least squares needs rows >= columns (got {rows} x {cols})")]
    Underdetermined { rows: usize, cols: usize },
    #[error("design matrix is rank deficient (rank {rank} of {cols}); dependent columns {dependent:?}")]
    RankDeficient { rank: usize, cols: usize, dependent: Vec<usize> },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::Dimension("ragged rows".into()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).fold(T::zero(), |acc, (&a, &b)| acc + a * b))
            .collect()
    }

    /// `Xᵀ v`
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for (r, &vr) in v.iter().enumerate().take(self.rows) {
            for (o, &x) in out.iter_mut().zip(self.row(r)) {
                *o = *o + x * vr;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares<T> {
    pub coefficients: Vec<T>,
    pub residuals: Vec<T>,
    pub rss: T,
    pub df_resid: usize,
}

/// Minimizes `‖y − Xβ‖²`.
///
/// Columns whose pivoted diagonal falls below `max(m, n) · ε · |R₀₀|` are
/// treated as linearly dependent and reported by original index.
pub fn lstsq<T: Real>(x: &Matrix<T>, y: &[T]) -> Result<LeastSquares<T>, LinalgError> {
    let (m, n) = (x.rows, x.cols);
    if y.len() != m {
        return Err(LinalgError::Dimension(format!("{} rows but {} targets", m, y.len())));
    }
    if m < n || n == 0 {
        return Err(LinalgError::Underdetermined { rows: m, cols: n });
    }

    // Column-major working copy.
    let mut a: Vec<Vec<T>> = (0..n).map(|c| (0..m).map(|r| x.get(r, c)).collect()).collect();
    let mut b = y.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut diag = vec![T::zero(); n];
    let rank_tol = T::lit(m.max(n) as f64) * T::epsilon();
    let mut r00 = T::zero();

    for k in 0..n {
        let norm_below = |col: &Vec<T>| col[k..].iter().fold(T::zero(), |s, &v| s + v * v).sqrt();
        let (best, best_norm) = (k..n)
            .map(|j| (j, norm_below(&a[j])))
            .fold((k, -T::one()), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        a.swap(k, best);
        perm.swap(k, best);

        if k == 0 {
            r00 = best_norm;
        }
        if best_norm <= rank_tol * r00 || best_norm == T::zero() {
            let mut dependent = perm[k..].to_vec();
            dependent.sort_unstable();
            return Err(LinalgError::RankDeficient { rank: k, cols: n, dependent });
        }

        let alpha = if a[k][k] > T::zero() { -best_norm } else { best_norm };
        let mut v: Vec<T> = a[k][k..].to_vec();
        v[0] = v[0] - alpha;
        let vnorm2 = v.iter().fold(T::zero(), |s, &t| s + t * t);
        diag[k] = alpha;

        if vnorm2 > T::zero() {
            let two = T::lit(2.0);
            for col in a.iter_mut().skip(k + 1) {
                let dot = v.iter().zip(&col[k..]).fold(T::zero(), |s, (&p, &q)| s + p * q);
                let f = two * dot / vnorm2;
                for (c, &vi) in col[k..].iter_mut().zip(&v) {
                    *c = *c - f * vi;
                }
            }
            let dot = v.iter().zip(&b[k..]).fold(T::zero(), |s, (&p, &q)| s + p * q);
            let f = two * dot / vnorm2;
            for (c, &vi) in b[k..].iter_mut().zip(&v) {
                *c = *c - f * vi;
            }
        }
    }

    // Back substitution on R (upper triangle stored column-wise in `a`).
    let mut z = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s = s - a[j][i] * z[j];
        }
        z[i] = s / diag[i];
    }
    let mut coefficients = vec![T::zero(); n];
    for (k, &orig) in perm.iter().enumerate() {
        coefficients[orig] = z[k];
    }

    let fitted = x.mul_vec(&coefficients);
    let residuals: Vec<T> = y.iter().zip(&fitted).map(|(&yi, &fi)| yi - fi).collect();
    let rss = residuals.iter().fold(T::zero(), |s, &r| s + r * r);
    Ok(LeastSquares { coefficients, residuals, rss, df_resid: m - n })
}
