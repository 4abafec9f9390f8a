//! Exact Gauss-Jordan elimination over the rationals.

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::rational::Rational;

/// Solves `a · x = b` for square `a`. Any nonzero pivot is exact, so the
/// first one found in the column is used.
pub fn solve(mut a: Vec<Vec<Rational>>, mut b: Vec<Rational>) -> Result<Vec<Rational>> {
    let n = a.len();
    if b.len() != n {
        return Err(Error::DimensionMismatch(n, b.len()));
    }
    if let Some(row) = a.iter().find(|row| row.len() != n) {
        return Err(Error::DimensionMismatch(n, row.len()));
    }

    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero()).ok_or(Error::Singular)?;
        a.swap(col, pivot);
        b.swap(col, pivot);

        let inv = a[col][col].recip();
        for v in a[col][col..].iter_mut() {
            *v *= &inv;
        }
        b[col] *= &inv;

        let (pivot_row, pivot_b) = (a[col].clone(), b[col].clone());
        for r in (0..n).filter(|&r| r != col) {
            if a[r][col].is_zero() {
                continue;
            }
            let factor = a[r][col].clone();
            for (dst, src) in a[r][col..].iter_mut().zip(&pivot_row[col..]) {
                *dst -= &factor * src;
            }
            b[r] -= &factor * &pivot_b;
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    #[test]
    fn solves_small_system() {
        // 2x + y = 3, x + 3y = 5  =>  x = 4/5, y = 7/5
        let a = vec![vec![int(2), int(1)], vec![int(1), int(3)]];
        let x = solve(a, vec![int(3), int(5)]).unwrap();
        assert_eq!(x, vec![ratio(4, 5), ratio(7, 5)]);
    }

    #[test]
    fn needs_row_swap() {
        let a = vec![vec![int(0), int(1)], vec![int(1), int(0)]];
        let x = solve(a, vec![int(7), int(9)]).unwrap();
        assert_eq!(x, vec![int(9), int(7)]);
    }

    #[test]
    fn singular_is_reported() {
        let a = vec![vec![int(1), int(2)], vec![int(2), int(4)]];
        assert!(matches!(solve(a, vec![int(1), int(2)]), Err(Error::Singular)));
    }
}
