//! Count-level evaluation: MAE, root-mean-square error (reported as "MSE"),
//! MNAE, ascending-count group comparison, dataset statistics, count
//! histograms and seeded k-fold splits.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Error, Result};

/// Ground-truth and predicted per-image counts.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPairs {
    truth: Vec<f64>,
    predicted: Vec<f64>,
}

impl EvalPairs {
    pub fn new(truth: Vec<f64>, predicted: Vec<f64>) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(contract(format!("{} ground-truth counts but {} predictions", truth.len(), predicted.len())));
        }
        if truth.iter().chain(&predicted).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(contract("counts must be finite and nonnegative"));
        }
        Ok(Self { truth, predicted })
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn truth(&self) -> &[f64] {
        &self.truth
    }

    pub fn predicted(&self) -> &[f64] {
        &self.predicted
    }

    fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.truth.iter().copied().zip(self.predicted.iter().copied())
    }

    fn nonempty(&self, metric: &str) -> Result<f64> {
        if self.is_empty() {
            return Err(contract(format!("{metric} needs at least one image")));
        }
        Ok(self.len() as f64)
    }

    /// Drops images whose ground truth is zero (MNAE is undefined there).
    pub fn without_zero_truth(&self) -> (Self, usize) {
        let (kept, dropped): (Vec<_>, Vec<_>) = self.pairs().partition(|(z, _)| *z != 0.0);
        let (truth, predicted) = kept.into_iter().unzip();
        (Self { truth, predicted }, dropped.len())
    }
}

pub fn mae(pairs: &EvalPairs) -> Result<f64> {
    let m = pairs.nonempty("MAE")?;
    Ok(pairs.pairs().map(|(z, p)| (z - p).abs()).sum::<f64>() / m)
}

/// Root of the mean squared count error.
pub fn mse(pairs: &EvalPairs) -> Result<f64> {
    let m = pairs.nonempty("MSE")?;
    Ok((pairs.pairs().map(|(z, p)| (z - p).powi(2)).sum::<f64>() / m).sqrt())
}

pub fn mnae(pairs: &EvalPairs) -> Result<f64> {
    let m = pairs.nonempty("MNAE")?;
    if let Some(k) = pairs.truth.iter().position(|&z| z == 0.0) {
        return Err(Error::UndefinedMetric(format!("MNAE is undefined: image {k} has a ground-truth count of 0")));
    }
    Ok(pairs.pairs().map(|(z, p)| (z - p).abs() / z).sum::<f64>() / m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    /// Original image indices in this group.
    pub members: Vec<usize>,
    pub mean_truth: f64,
    pub mean_predicted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub groups: Vec<Group>,
}

impl GroupReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["group_index", "mean_gt", "mean_pred"])?;
        for (k, g) in self.groups.iter().enumerate() {
            w.write_record([k.to_string(), g.mean_truth.to_string(), g.mean_predicted.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sizes of `k` contiguous near-equal parts of `n` items; the first
/// `n mod k` parts get one extra item.
pub fn partition_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|g| n / k + usize::from(g < n % k)).collect()
}

/// Sorts images by ascending true count (stable) and averages truth and
/// prediction within `k` contiguous groups.
pub fn group_comparison(pairs: &EvalPairs, k: usize) -> Result<GroupReport> {
    if k == 0 || pairs.len() < k {
        return Err(contract(format!("cannot form {k} groups from {} images", pairs.len())));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs.truth[a].total_cmp(&pairs.truth[b]));
    let mut start = 0;
    let groups = partition_sizes(pairs.len(), k)
        .into_iter()
        .map(|size| {
            let members = order[start..start + size].to_vec();
            start += size;
            let n = size as f64;
            Group {
                mean_truth: members.iter().map(|&i| pairs.truth[i]).sum::<f64>() / n,
                mean_predicted: members.iter().map(|&i| pairs.predicted[i]).sum::<f64>() / n,
                members,
            }
        })
        .collect();
    Ok(GroupReport { groups })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Split {
    Fixed { train: usize, test: usize },
    KFold(usize),
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub images: usize,
    pub split: Split,
    pub max: f64,
    pub min: f64,
    pub average: f64,
    /// `WxH` when every image shares one size, otherwise `different`.
    pub resolution: String,
    pub total_people: f64,
}

impl DatasetStats {
    /// Average at one decimal, as dataset tables usually print it.
    pub fn average_display(&self) -> String {
        format!("{:.1}", self.average)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let (train, test) = match &self.split {
            Split::Fixed { train, test } => (train.to_string(), test.to_string()),
            Split::KFold(k) => (format!("{k}-fold"), String::new()),
            Split::None => (String::new(), String::new()),
        };
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "n_train", "n_test", "max", "min", "average", "resolution"])?;
        w.write_record([
            self.images.to_string(),
            train,
            test,
            self.max.to_string(),
            self.min.to_string(),
            self.average_display(),
            self.resolution.clone(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

pub fn dataset_stats(counts: &[f64], split: Split, resolutions: &[(usize, usize)]) -> Result<DatasetStats> {
    if counts.is_empty() {
        return Err(contract("dataset statistics need at least one image"));
    }
    if let Split::Fixed { train, test } = split {
        if train + test != counts.len() {
            return Err(contract(format!("split {train}+{test} does not cover {} images", counts.len())));
        }
    }
    let max = counts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = counts.iter().copied().fold(f64::INFINITY, f64::min);
    let total: f64 = counts.iter().sum();
    let resolution = match resolutions.split_first() {
        Some((first, rest)) if rest.iter().all(|r| r == first) => format!("{}x{}", first.0, first.1),
        Some(_) => "different".to_string(),
        None => String::new(),
    };
    Ok(DatasetStats {
        images: counts.len(),
        split,
        max,
        min,
        average: total / counts.len() as f64,
        resolution,
        total_people: total,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_low", "bin_high", "count"])?;
        for (k, c) in self.counts.iter().enumerate() {
            w.write_record([self.edges[k].to_string(), self.edges[k + 1].to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `bins` equal-width edges spanning `[min, max]` of `counts`.
pub fn uniform_edges(counts: &[f64], bins: usize) -> Result<Vec<f64>> {
    if counts.is_empty() || bins == 0 {
        return Err(contract("histogram edges need counts and at least one bin"));
    }
    let lo = counts.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = counts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|k| lo + width * k as f64).collect();
    edges.push(hi);
    Ok(edges)
}

/// Bins are half-open `[e_k, e_{k+1})` except the last, which is closed.
pub fn count_histogram(counts: &[f64], edges: &[f64]) -> Result<Histogram> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
        return Err(contract("histogram edges must be strictly increasing with at least two entries"));
    }
    let (lo, hi) = (edges[0], edges[edges.len() - 1]);
    let mut bins = vec![0usize; edges.len() - 1];
    for &c in counts {
        if !(lo..=hi).contains(&c) {
            return Err(contract(format!("count {c} outside histogram range [{lo}, {hi}]")));
        }
        let k = edges.partition_point(|&e| e <= c).saturating_sub(1).min(bins.len() - 1);
        bins[k] += 1;
    }
    Ok(Histogram { edges: edges.to_vec(), counts: bins })
}

/// Seeded shuffle, then `k` contiguous near-equal folds of item indices.
pub fn kfold_split(items: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(contract(format!("k-fold needs k >= 2, got {k}")));
    }
    if items < k {
        return Err(contract(format!("cannot split {items} items into {k} folds")));
    }
    let mut order: Vec<usize> = (0..items).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut start = 0;
    Ok(partition_sizes(items, k)
        .into_iter()
        .map(|size| {
            let fold = order[start..start + size].to_vec();
            start += size;
            fold
        })
        .collect())
}

/// The three headline metrics of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSet {
    pub mae: f64,
    pub mse: f64,
    pub mnae: Option<f64>,
}

impl MetricSet {
    /// MNAE is `None` when some ground truth is zero.
    pub fn compute(pairs: &EvalPairs) -> Result<Self> {
        let mnae = match mnae(pairs) {
            Ok(v) => Some(v),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self { mae: mae(pairs)?, mse: mse(pairs)?, mnae })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "value"])?;
        w.write_record(["MAE", &self.mae.to_string()])?;
        w.write_record(["MSE", &self.mse.to_string()])?;
        if let Some(v) = self.mnae {
            w.write_record(["MNAE", &v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}
