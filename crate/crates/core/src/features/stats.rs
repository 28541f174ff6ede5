use crate::error::{contract, Result};

use super::matrix::FeatureMatrix;

pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Standardises one feature vector in place.
    pub fn apply_to(&self, v: &mut [f64]) {
        for ((x, m), s) in v.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = (*x - m) / s.max(STD_FLOOR);
        }
    }
}

pub fn fit_stats(train: &[FeatureMatrix]) -> Result<FeatureStats> {
    let first = train.first().ok_or_else(|| contract("fit_stats needs at least one feature matrix"))?;
    let dim = first.dim();
    if let Some(bad) = train.iter().find(|f| f.dim() != dim) {
        return Err(contract(format!("feature dimensions differ: {dim} vs {}", bad.dim())));
    }
    let rows = || train.iter().flat_map(|f| f.values().chunks_exact(dim));
    let count = rows().count() as f64;

    let mut sum = vec![0.0; dim];
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for row in rows() {
        for (d, &x) in row.iter().enumerate() {
            sum[d] += x;
            lo[d] = lo[d].min(x);
            hi[d] = hi[d].max(x);
        }
    }
    // Constant dimensions take their value exactly so they standardise to 0.
    let mean: Vec<f64> = (0..dim).map(|d| if lo[d] == hi[d] { lo[d] } else { sum[d] / count }).collect();

    let mut sq = vec![0.0; dim];
    for row in rows() {
        for (d, &x) in row.iter().enumerate() {
            sq[d] += (x - mean[d]).powi(2);
        }
    }
    let std = sq.into_iter().map(|s| (s / count).sqrt()).collect();
    Ok(FeatureStats { mean, std })
}

pub fn apply_stats(features: &FeatureMatrix, stats: &FeatureStats) -> Result<FeatureMatrix> {
    if features.dim() != stats.dim() {
        return Err(contract(format!(
            "stats fitted for dimension {} applied to dimension {}",
            stats.dim(),
            features.dim()
        )));
    }
    let mut out = features.clone();
    for v in out.values_mut().chunks_exact_mut(stats.dim()) {
        stats.apply_to(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Backend;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, dim: usize) -> FeatureMatrix {
        let values = (0..rows * cols * dim).map(|k| rng.random_range(-5.0..5.0) * (1 + k % dim) as f64 + 3.0).collect();
        FeatureMatrix::new(rows, cols, dim, values, Backend::Precomputed).unwrap()
    }

    #[test]
    fn constant_dimension_standardises_to_zero() {
        let values = vec![0.1, 1.0, 0.1, 2.0, 0.1, 4.0];
        let f = FeatureMatrix::new(1, 3, 2, values, Backend::TinyCnn).unwrap();
        let stats = fit_stats(std::slice::from_ref(&f)).unwrap();
        assert_eq!(stats.std[0], 0.0);
        let g = apply_stats(&f, &stats).unwrap();
        for j in 0..3 {
            assert_eq!(g.get(0, j)[0], 0.0);
        }
    }

    #[test]
    fn standardised_training_mean_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let train: Vec<_> = (0..4).map(|_| random_matrix(&mut rng, 3, 5, 6)).collect();
        let stats = fit_stats(&train).unwrap();
        let standard: Vec<_> = train.iter().map(|f| apply_stats(f, &stats).unwrap()).collect();
        let n = (4 * 15) as f64;
        for d in 0..6 {
            let values = || standard.iter().flat_map(|f| f.values().chunks_exact(6).map(move |r| r[d]));
            let mean: f64 = values().sum::<f64>() / n;
            let var: f64 = values().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() <= 1e-9, "dim {d} mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn double_application_is_not_idempotent_in_general() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f = random_matrix(&mut rng, 2, 2, 3);
        let stats = fit_stats(std::slice::from_ref(&f)).unwrap();
        let once = apply_stats(&f, &stats).unwrap();
        let twice = apply_stats(&once, &stats).unwrap();
        assert_ne!(once, twice);

        let id = FeatureStats::identity(3);
        assert_eq!(apply_stats(&f, &id).unwrap(), f);
    }

    #[test]
    fn mismatched_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(&mut rng, 1, 1, 3);
        let b = random_matrix(&mut rng, 1, 1, 4);
        assert!(fit_stats(&[a.clone(), b.clone()]).is_err());
        assert!(fit_stats(&[]).is_err());
        let stats = fit_stats(&[a]).unwrap();
        assert!(apply_stats(&b, &stats).is_err());
    }
}
