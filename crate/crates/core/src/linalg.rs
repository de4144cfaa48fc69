//! Exact Gaussian elimination over ℚ.

use crate::field::Scalar;

/// Reduces `rows` to row echelon form in place and returns the rank.
pub fn row_reduce(rows: &mut [Vec<Scalar>]) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..rows.len()).find(|&r| !rows[r][col].is_zero()) else {
            continue;
        };
        rows.swap(rank, pivot);
        let inv = rows[rank][col].recip().expect("pivot is nonzero");
        for x in &mut rows[rank][col..] {
            *x = &*x * &inv;
        }
        let pivot_row = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r == rank || row[col].is_zero() {
                continue;
            }
            let factor = row[col].clone();
            for (x, pv) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= &(&factor * pv);
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rank
}

pub fn rank(rows: &[Vec<Scalar>]) -> usize {
    let mut m = rows.to_vec();
    row_reduce(&mut m)
}

/// Whether `v` lies in the row space of `rows`.
pub fn in_row_space(rows: &[Vec<Scalar>], v: &[Scalar]) -> bool {
    let mut extended = rows.to_vec();
    extended.push(v.to_vec());
    rank(rows) == rank(&extended)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[i64]) -> Vec<Scalar> {
        v.iter().map(|&x| Scalar::from_int(x)).collect()
    }

    #[test]
    fn rank_and_row_space() {
        let m = vec![row(&[1, 2, 3]), row(&[2, 4, 6]), row(&[0, 1, 1])];
        assert_eq!(rank(&m), 2);
        assert!(in_row_space(&m, &row(&[1, 3, 4])));
        assert!(!in_row_space(&m, &row(&[0, 0, 1])));
    }
}
