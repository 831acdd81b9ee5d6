//! Small statistics helpers: confidence intervals, homogeneity tests, and
//! deterministic per-trial seed derivation.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.575_829_303_548_900_4;

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    assert!(trials > 0, "wilson_interval needs at least one trial");
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = p + z2 / (2.0 * n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    (((center - half) / denom).max(0.0), ((center + half) / denom).min(1.0))
}

/// Standard deviation of an empirical frequency at true probability `p`.
pub fn binomial_sigma(p: f64, trials: u64) -> f64 {
    assert!(trials > 0, "binomial_sigma needs at least one trial");
    (p * (1.0 - p) / trials as f64).sqrt()
}

/// Result of a chi-squared homogeneity test at the 99% level.
#[derive(Clone, Copy, Debug)]
pub struct ChiSquaredResult {
    pub stat: f64,
    pub df: usize,
    pub threshold: f64,
    pub pass: bool,
}

/// Chi-squared homogeneity test across groups (rows) of outcome counts
/// (columns). Columns and rows with zero total are dropped; with fewer than
/// two informative rows or columns the test is vacuous and passes.
pub fn chi_squared_homogeneity(counts: &[Vec<u64>]) -> ChiSquaredResult {
    let cols = counts.first().map(|r| r.len()).unwrap_or(0);
    assert!(counts.iter().all(|r| r.len() == cols), "ragged count table");
    let col_totals: Vec<u64> = (0..cols)
        .map(|j| counts.iter().map(|r| r[j]).sum())
        .collect();
    let keep_cols: Vec<usize> = (0..cols).filter(|j| col_totals[*j] > 0).collect();
    let keep_rows: Vec<usize> = (0..counts.len())
        .filter(|i| counts[*i].iter().sum::<u64>() > 0)
        .collect();
    if keep_rows.len() < 2 || keep_cols.len() < 2 {
        return ChiSquaredResult { stat: 0.0, df: 0, threshold: 0.0, pass: true };
    }
    let grand: u64 = keep_rows
        .iter()
        .map(|&i| keep_cols.iter().map(|&j| counts[i][j]).sum::<u64>())
        .sum();
    let mut stat = 0.0;
    for &i in &keep_rows {
        let row_total: u64 = keep_cols.iter().map(|&j| counts[i][j]).sum();
        for &j in &keep_cols {
            let expected = row_total as f64 * col_totals[j] as f64 / grand as f64;
            let observed = counts[i][j] as f64;
            stat += (observed - expected).powi(2) / expected;
        }
    }
    let df = (keep_rows.len() - 1) * (keep_cols.len() - 1);
    let threshold = ChiSquared::new(df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.99);
    ChiSquaredResult { stat, df, threshold, pass: stat <= threshold }
}

/// Deterministic, well-mixed per-trial seed from a base seed and an index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let x = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    splitmix64(x)
}

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
