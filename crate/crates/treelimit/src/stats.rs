//! Small statistical toolbox: chi-square tests, sample moments, jackknife
//! standard errors and binomial concentration bands used by the Monte Carlo
//! gates.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Outcome of a chi-square test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub df: u64,
    pub p_value: f64,
}

fn chi_square_p(statistic: f64, df: u64) -> f64 {
    if df == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    1.0 - dist.cdf(statistic)
}

/// Goodness-of-fit test of observed counts against cell probabilities.
/// Degrees of freedom: number of cells minus one.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<ChiSquareTest> {
    if observed.len() != probs.len() || observed.is_empty() {
        return Err(Error::MismatchedSamples(format!(
            "{} observed cells vs {} probabilities",
            observed.len(),
            probs.len()
        )));
    }
    let n: u64 = observed.iter().sum();
    let nf = n as f64;
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(probs) {
        let e = nf * p;
        if e > 0.0 {
            let d = o as f64 - e;
            stat += d * d / e;
        } else if o > 0 {
            stat = f64::INFINITY;
        }
    }
    let df = observed.len() as u64 - 1;
    Ok(ChiSquareTest { statistic: stat, df, p_value: chi_square_p(stat, df) })
}

/// Two-sample homogeneity test on a pair of count vectors over the same
/// cells. Cells empty in both samples are dropped.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> Result<ChiSquareTest> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::MismatchedSamples(format!(
            "{} cells vs {} cells",
            a.len(),
            b.len()
        )));
    }
    let tot_a: u64 = a.iter().sum();
    let tot_b: u64 = b.iter().sum();
    let grand = (tot_a + tot_b) as f64;
    let mut stat = 0.0;
    let mut live_cells = 0u64;
    for (&oa, &ob) in a.iter().zip(b) {
        let col = (oa + ob) as f64;
        if col == 0.0 {
            continue;
        }
        live_cells += 1;
        for (o, tot) in [(oa, tot_a), (ob, tot_b)] {
            let e = tot as f64 * col / grand;
            if e > 0.0 {
                let d = o as f64 - e;
                stat += d * d / e;
            }
        }
    }
    let df = live_cells.saturating_sub(1);
    Ok(ChiSquareTest { statistic: stat, df, p_value: chi_square_p(stat, df) })
}

/// Mean, unbiased variance, skewness and excess kurtosis of a sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

pub fn moments(xs: &[f64]) -> Moments {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &x in xs {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let variance = if xs.len() > 1 { m2 * n / (n - 1.0) } else { 0.0 };
    let skewness = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    let excess_kurtosis = if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { 0.0 };
    Moments { n: xs.len() as u64, mean, variance, skewness, excess_kurtosis }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the sample mean.
pub fn mean_se(xs: &[f64]) -> f64 {
    (moments(xs).variance / xs.len() as f64).sqrt()
}

/// Jackknife standard error from a vector of leave-one-out estimates.
pub fn jackknife_se(leave_one_out: &[f64]) -> f64 {
    let r = leave_one_out.len() as f64;
    let m = mean(leave_one_out);
    let ss: f64 = leave_one_out.iter().map(|v| (v - m) * (v - m)).sum();
    ((r - 1.0) / r * ss).sqrt()
}

/// Half-width of a `sigmas`-sigma binomial concentration band for an
/// empirical frequency of an event with probability `p` over `n` trials.
pub fn binomial_band(p: f64, n: u64, sigmas: f64) -> f64 {
    sigmas * (p * (1.0 - p) / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gof_matches_reference_values() {
        // Reference case computed with an independent implementation.
        let obs = [28u64, 31, 40, 35];
        let ps = [0.25; 4];
        let t = chi_square_gof(&obs, &ps).unwrap();
        assert!((t.statistic - 2.417910447761194).abs() < 1e-12);
        assert!((t.p_value - 0.4903093069653883).abs() < 1e-10);
        assert_eq!(t.df, 3);
    }

    #[test]
    fn two_sample_identical_counts_give_zero_statistic() {
        let a = [10u64, 20, 30];
        let t = chi_square_two_sample(&a, &a).unwrap();
        assert!(t.statistic.abs() < 1e-12);
        assert!(t.p_value > 0.999);
    }

    #[test]
    fn two_sample_detects_gross_difference() {
        let a = [1000u64, 0, 0];
        let b = [0u64, 500, 500];
        let t = chi_square_two_sample(&a, &b).unwrap();
        assert!(t.p_value < 1e-6);
    }

    #[test]
    fn moments_hand_case() {
        let m = moments(&[1.0, 2.0, 3.0]);
        assert!((m.mean - 2.0).abs() < 1e-15);
        assert!((m.variance - 1.0).abs() < 1e-15);
        assert!(m.skewness.abs() < 1e-12);
    }

    #[test]
    fn jackknife_of_constant_is_zero() {
        assert_eq!(jackknife_se(&[2.5, 2.5, 2.5, 2.5]), 0.0);
    }

    #[test]
    fn binomial_band_value() {
        let b = binomial_band(0.5, 10_000, 5.0);
        assert!((b - 5.0 * (0.25f64 / 10_000.0).sqrt()).abs() < 1e-15);
    }
}
