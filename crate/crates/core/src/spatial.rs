//! Horizontal length-3 sequences over the features matrix.
//!
//! Cell `(i, j)` becomes `(f[i][j-1], f[i][j], f[i][j+1])`; the first and last
//! columns reuse themselves in place of the missing neighbour. Rows never mix.

use crate::error::{contract, Result};
use crate::features::FeatureMatrix;

pub const SEQUENCE_LEN: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSequence {
    pub row: usize,
    pub col: usize,
    /// Left, centre, right.
    pub steps: [Vec<f64>; SEQUENCE_LEN],
}

impl SpatialSequence {
    pub fn dim(&self) -> usize {
        self.steps[0].len()
    }
}

/// Source columns for the three steps of column `j` in a row of `n` cells.
pub fn neighbor_columns(j: usize, n: usize) -> [usize; SEQUENCE_LEN] {
    debug_assert!(j < n);
    [j.saturating_sub(1), j, (j + 1).min(n - 1)]
}

pub fn make_sequences(features: &FeatureMatrix) -> Result<Vec<SpatialSequence>> {
    let (m, n) = (features.rows(), features.cols());
    if m == 0 || n == 0 {
        return Err(contract("cannot sequence an empty features matrix"));
    }
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            let steps = neighbor_columns(j, n).map(|c| features.get(i, c).to_vec());
            out.push(SpatialSequence { row: i, col: j, steps });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Backend;

    fn matrix(m: usize, n: usize) -> FeatureMatrix {
        let values = (0..m * n * 2).map(|v| v as f64).collect();
        FeatureMatrix::new(m, n, 2, values, Backend::TinyCnn).unwrap()
    }

    #[test]
    fn branches() {
        let f = matrix(2, 3);
        let seqs = make_sequences(&f).unwrap();
        assert_eq!(seqs.len(), 6);
        let s = &seqs[3 + 1];
        assert_eq!((s.row, s.col), (1, 1));
        assert_eq!(s.steps, [f.get(1, 0).to_vec(), f.get(1, 1).to_vec(), f.get(1, 2).to_vec()]);
        assert_eq!(seqs[0].steps, [f.get(0, 0).to_vec(), f.get(0, 0).to_vec(), f.get(0, 1).to_vec()]);
        assert_eq!(seqs[2].steps, [f.get(0, 1).to_vec(), f.get(0, 2).to_vec(), f.get(0, 2).to_vec()]);
    }

    #[test]
    fn single_column_replicates() {
        let f = matrix(3, 1);
        for (i, s) in make_sequences(&f).unwrap().iter().enumerate() {
            let v = f.get(i, 0).to_vec();
            assert_eq!(s.steps, [v.clone(), v.clone(), v]);
        }
    }

    #[test]
    fn constant_matrix_yields_identical_sequences() {
        let f = FeatureMatrix::new(3, 4, 2, vec![0.5; 24], Backend::TinyCnn).unwrap();
        let seqs = make_sequences(&f).unwrap();
        assert!(seqs.iter().all(|s| s.steps == seqs[0].steps));
    }
}
