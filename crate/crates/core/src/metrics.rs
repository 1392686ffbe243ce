//! Alignment metrics between verbalized and internal confidence.
//!
//! Calibration error is `eps = c_v - c_i` in percentage points; it is zero on
//! the `y = x` line. Besides Spearman's rank correlation the module reports
//! the sample standard deviation of `eps`, the mean of `|eps|`, and the
//! standard error of the mean of `eps`.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::confidence::ConfidenceRecord;
use crate::error::MetricError;
use crate::registry::Registry;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonStats {
    pub n: usize,
    pub mean_eps: f64,
    pub sigma_eps: f64,
    pub mean_abs_eps: f64,
    /// Standard error of the mean, `sigma_eps / sqrt(n)`.
    pub sem: f64,
}

/// One (model, dataset) cell of the alignment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRow {
    pub model: String,
    pub dataset: String,
    pub rho: f64,
    pub p_value: f64,
    pub stats: EpsilonStats,
    pub accuracy: f64,
    pub failure_rate: f64,
}

/// `c_v - c_i` for every ok record, in input order. Records with any other
/// status are skipped.
pub fn calibration_errors(records: &[ConfidenceRecord]) -> Result<Vec<f64>, MetricError> {
    let eps: Vec<f64> = records
        .iter()
        .filter_map(ConfidenceRecord::confidences)
        .map(|(v, i)| v - i)
        .collect();
    if eps.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    Ok(eps)
}

pub fn epsilon_stats(eps: &[f64]) -> Result<EpsilonStats, MetricError> {
    let n = eps.len();
    if n < 2 {
        return Err(MetricError::TooFewPoints { required: 2, got: n });
    }
    let nf = n as f64;
    let mean = eps.iter().sum::<f64>() / nf;
    let ss: f64 = eps.iter().map(|e| (e - mean) * (e - mean)).sum();
    let sigma = (ss / (nf - 1.0)).sqrt();
    let mean_abs = eps.iter().map(|e| e.abs()).sum::<f64>() / nf;
    Ok(EpsilonStats {
        n,
        mean_eps: mean,
        sigma_eps: sigma,
        mean_abs_eps: mean_abs,
        sem: sigma / nf.sqrt(),
    })
}

/// Share of ok records answered correctly.
pub fn accuracy(records: &[ConfidenceRecord]) -> Result<f64, MetricError> {
    let (ok, correct) = records
        .iter()
        .filter(|r| r.is_ok())
        .fold((0usize, 0usize), |(n, c), r| (n + 1, c + usize::from(r.correct == Some(true))));
    if ok == 0 {
        return Err(MetricError::EmptyInput);
    }
    Ok(correct as f64 / ok as f64)
}

/// 1-based ranks; tied values share the mean of the positions they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end) as f64 / 2.0 + 1.0;
        for &idx in &order[start..=end] {
            ranks[idx] = rank;
        }
        start = end + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Significance of a rank correlation.
pub trait PValueMethod: Send + Sync {
    fn name(&self) -> &'static str;

    /// Two-sided p-value for `rho` computed from the given rank vectors.
    fn p_value(&self, rho: f64, x_ranks: &[f64], y_ranks: &[f64]) -> f64;
}

/// Student t approximation with `n - 2` degrees of freedom.
#[derive(Debug, Clone, Copy, Default)]
pub struct TApproximation;

impl PValueMethod for TApproximation {
    fn name(&self) -> &'static str {
        "t-approx"
    }

    fn p_value(&self, rho: f64, x_ranks: &[f64], _y_ranks: &[f64]) -> f64 {
        let df = x_ranks.len() as f64 - 2.0;
        if rho.abs() >= 1.0 {
            return 0.0;
        }
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
        (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
    }
}

/// Seeded shuffle test: share of permutations whose |rho| reaches the
/// observed one, with the usual +1 correction.
#[derive(Debug, Clone, Copy)]
pub struct PermutationTest {
    pub shuffles: usize,
    pub seed: u64,
}

impl Default for PermutationTest {
    fn default() -> Self {
        Self {
            shuffles: 10_000,
            seed: 0,
        }
    }
}

impl PValueMethod for PermutationTest {
    fn name(&self) -> &'static str {
        "permutation"
    }

    fn p_value(&self, rho: f64, x_ranks: &[f64], y_ranks: &[f64]) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut shuffled = y_ranks.to_vec();
        let threshold = rho.abs() - 1e-12;
        let mut hits = 0usize;
        for _ in 0..self.shuffles {
            shuffled.shuffle(&mut rng);
            if pearson(x_ranks, &shuffled).is_some_and(|r| r.abs() >= threshold) {
                hits += 1;
            }
        }
        (hits + 1) as f64 / (self.shuffles + 1) as f64
    }
}

/// `t-approx` and `permutation` (10,000 shuffles, seed 0).
pub fn p_value_methods() -> Registry<dyn PValueMethod> {
    let mut r: Registry<dyn PValueMethod> = Registry::new();
    r.register(TApproximation.name(), Arc::new(TApproximation));
    r.register("permutation", Arc::new(PermutationTest::default()));
    r
}

/// Spearman's rho with the t-approximation p-value.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), MetricError> {
    spearman_with(xs, ys, &TApproximation)
}

/// Pearson correlation of average ranks, plus a p-value from `method`.
pub fn spearman_with(
    xs: &[f64],
    ys: &[f64],
    method: &dyn PValueMethod,
) -> Result<(f64, f64), MetricError> {
    if xs.len() != ys.len() {
        return Err(MetricError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(MetricError::TooFewPoints {
            required: 3,
            got: xs.len(),
        });
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let rho = pearson(&rx, &ry).ok_or(MetricError::DegenerateSeries)?;
    Ok((rho, method.p_value(rho, &rx, &ry)))
}

/// Computes one table row from a cell's records. Non-ok records count toward
/// `failure_rate` only.
pub fn evaluate_cell(
    model: &str,
    dataset: &str,
    records: &[ConfidenceRecord],
    method: &dyn PValueMethod,
) -> Result<AlignmentRow, MetricError> {
    if records.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let (c_v, c_i): (Vec<f64>, Vec<f64>) =
        records.iter().filter_map(ConfidenceRecord::confidences).unzip();
    let eps = calibration_errors(records)?;
    let stats = epsilon_stats(&eps)?;
    let (rho, p_value) = spearman_with(&c_v, &c_i, method)?;
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    Ok(AlignmentRow {
        model: model.to_string(),
        dataset: dataset.to_string(),
        rho,
        p_value,
        stats,
        accuracy: accuracy(records)?,
        failure_rate: failed as f64 / records.len() as f64,
    })
}
