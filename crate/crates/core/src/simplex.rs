//! Dense primal simplex for `max c'x  s.t.  Ax = b, x >= 0` started from a
//! caller-supplied basis whose columns form an identity matrix.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-12;

pub(crate) struct StandardForm {
    /// Row-major constraint matrix, `rows x cols`.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// For each row, the column that is basic in it. `a[:, basis[r]]` must be the r-th unit vector.
    pub basis: Vec<usize>,
}

pub(crate) struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
}

pub(crate) fn maximize(mut lp: StandardForm) -> Result<Solution> {
    let rows = lp.a.len();
    let cols = lp.c.len();
    if lp.b.len() != rows || lp.basis.len() != rows || lp.a.iter().any(|r| r.len() != cols) {
        return Err(Error::Solver("inconsistent dimensions".into()));
    }
    if lp.b.iter().any(|&v| v < 0.0) {
        return Err(Error::Solver("right-hand side must be non-negative".into()));
    }
    for (r, &col) in lp.basis.iter().enumerate() {
        for (i, row) in lp.a.iter().enumerate() {
            let expect = if i == r { 1.0 } else { 0.0 };
            if row[col] != expect {
                return Err(Error::Solver(format!("column {col} is not unit vector {r}")));
            }
        }
    }

    // Reduced costs for the starting basis.
    let mut reduced = lp.c.clone();
    for (r, &col) in lp.basis.iter().enumerate() {
        let cb = lp.c[col];
        if cb != 0.0 {
            for (j, red) in reduced.iter_mut().enumerate() {
                *red -= cb * lp.a[r][j];
            }
        }
    }

    // Bland's rule: smallest improving column, ties in the ratio test by
    // smallest basic column. Guarantees termination under degeneracy.
    let max_iter = 50 * (rows + cols) + 1000;
    for _ in 0..max_iter {
        let Some(enter) = (0..cols).find(|&j| reduced[j] > PIVOT_TOL) else {
            let mut x = vec![0.0; cols];
            for (r, &col) in lp.basis.iter().enumerate() {
                x[col] = lp.b[r].max(0.0);
            }
            let objective = x.iter().zip(&lp.c).map(|(x, c)| x * c).sum();
            return Ok(Solution { x, objective });
        };

        let mut leave: Option<(usize, f64)> = None;
        for r in 0..rows {
            let coef = lp.a[r][enter];
            if coef > PIVOT_TOL {
                let ratio = lp.b[r] / coef;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - PIVOT_TOL
                            || (ratio <= lratio + PIVOT_TOL && lp.basis[r] < lp.basis[lr])
                        {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
        }
        let Some((pivot_row, _)) = leave else {
            return Err(Error::Solver("objective is unbounded".into()));
        };

        let pivot = lp.a[pivot_row][enter];
        for v in lp.a[pivot_row].iter_mut() {
            *v /= pivot;
        }
        lp.b[pivot_row] /= pivot;
        let pivot_vals = lp.a[pivot_row].clone();
        let pivot_rhs = lp.b[pivot_row];
        for r in 0..rows {
            if r == pivot_row {
                continue;
            }
            let factor = lp.a[r][enter];
            if factor != 0.0 {
                for (v, p) in lp.a[r].iter_mut().zip(&pivot_vals) {
                    *v -= factor * p;
                }
                lp.a[r][enter] = 0.0;
                lp.b[r] = (lp.b[r] - factor * pivot_rhs).max(0.0);
            }
        }
        let factor = reduced[enter];
        for (v, p) in reduced.iter_mut().zip(&pivot_vals) {
            *v -= factor * p;
        }
        reduced[enter] = 0.0;
        lp.basis[pivot_row] = enter;
    }
    Err(Error::Solver("iteration limit reached".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y  s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  -> 36 at (2, 6)
        let lp = StandardForm {
            a: vec![
                vec![1.0, 0.0, 1.0, 0.0, 0.0],
                vec![0.0, 2.0, 0.0, 1.0, 0.0],
                vec![3.0, 2.0, 0.0, 0.0, 1.0],
            ],
            b: vec![4.0, 12.0, 18.0],
            c: vec![3.0, 5.0, 0.0, 0.0, 0.0],
            basis: vec![2, 3, 4],
        };
        let s = maximize(lp).unwrap();
        assert!((s.objective - 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn unbounded_detected() {
        let lp = StandardForm {
            a: vec![vec![1.0, -1.0, 1.0]],
            b: vec![1.0],
            c: vec![0.0, 1.0, 0.0],
            basis: vec![2],
        };
        assert!(maximize(lp).is_err());
    }

    #[test]
    fn bad_basis_rejected() {
        let lp = StandardForm {
            a: vec![vec![1.0, 2.0]],
            b: vec![1.0],
            c: vec![1.0, 1.0],
            basis: vec![1],
        };
        assert!(maximize(lp).is_err());
    }
}
