//! Goodness-of-fit tests and error estimates used by the observables and
//! the acceptance checks.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Smallest expected count kept in its own bin by the chi-square tests.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
}

impl TestResult {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

fn chi2_sf(x: f64, dof: f64) -> Result<f64> {
    let d =
        ChiSquared::new(dof).map_err(|e| Error::Domain(format!("chi-square dof {dof}: {e}")))?;
    Ok(d.sf(x))
}

/// Scales weights to sum to one. Returns an empty vector for zero total.
pub fn normalize(w: &[f64]) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Vec::new();
    }
    w.iter().map(|x| x / total).collect()
}

/// Groups consecutive bins until each group's expected count reaches
/// `min_expected`; a short final group is merged into the previous one.
fn pool(expected: &[f64], min_expected: f64) -> Vec<std::ops::Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    let mut acc = 0.0;
    for (i, &e) in expected.iter().enumerate() {
        acc += e;
        if acc >= min_expected {
            groups.push(start..i + 1);
            start = i + 1;
            acc = 0.0;
        }
    }
    if start < expected.len() {
        match groups.last_mut() {
            Some(last) => last.end = expected.len(),
            None => groups.push(0..expected.len()),
        }
    }
    groups
}

/// Pearson chi-square goodness of fit of `observed` counts against the
/// probabilities `probs`. Probability mass beyond `probs` is added to the
/// last bin. `fitted` parameters estimated from the data reduce the
/// degrees of freedom.
pub fn chi_square_gof(observed: &[f64], probs: &[f64], fitted: usize) -> Result<TestResult> {
    let n: f64 = observed.iter().sum();
    let len = observed.len().max(probs.len());
    if n <= 0.0 || len == 0 {
        return Err(Error::Domain("chi-square test on empty data".into()));
    }
    let mut obs = observed.to_vec();
    obs.resize(len, 0.0);
    let mut p = probs.to_vec();
    p.resize(len, 0.0);
    let mass: f64 = p.iter().sum();
    p[len - 1] += (1.0 - mass).max(0.0);
    let expected: Vec<f64> = p.iter().map(|q| q * n).collect();
    let groups = pool(&expected, MIN_EXPECTED);
    let mut stat = 0.0;
    for g in &groups {
        let o: f64 = obs[g.clone()].iter().sum();
        let e: f64 = expected[g.clone()].iter().sum();
        if e > 0.0 {
            stat += (o - e).powi(2) / e;
        } else if o > 0.0 {
            stat = f64::INFINITY;
        }
    }
    let dof = groups.len() as f64 - 1.0 - fitted as f64;
    if dof < 1.0 {
        return Err(Error::Domain(format!(
            "{} bins after pooling leave no degrees of freedom",
            groups.len()
        )));
    }
    Ok(TestResult {
        statistic: stat,
        dof,
        p_value: chi2_sf(stat, dof)?,
    })
}

/// Chi-square test that two count histograms come from one distribution.
pub fn chi_square_homogeneity(a: &[f64], b: &[f64]) -> Result<TestResult> {
    let len = a.len().max(b.len());
    let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let na: f64 = a.iter().sum();
    let nb: f64 = b.iter().sum();
    if na <= 0.0 || nb <= 0.0 {
        return Err(Error::Domain("homogeneity test on an empty sample".into()));
    }
    let total = na + nb;
    let pooled: Vec<f64> = (0..len).map(|i| get(a, i) + get(b, i)).collect();
    let smaller = na.min(nb) / total;
    let expected_small: Vec<f64> = pooled.iter().map(|c| c * smaller).collect();
    let groups = pool(&expected_small, MIN_EXPECTED);
    let mut stat = 0.0;
    for g in &groups {
        let oa: f64 = g.clone().map(|i| get(a, i)).sum();
        let ob: f64 = g.clone().map(|i| get(b, i)).sum();
        let c = oa + ob;
        let ea = c * na / total;
        let eb = c * nb / total;
        stat += (oa - ea).powi(2) / ea + (ob - eb).powi(2) / eb;
    }
    let dof = groups.len() as f64 - 1.0;
    if dof < 1.0 {
        // Both samples sit in a single pooled bin: nothing distinguishes them.
        return Ok(TestResult {
            statistic: 0.0,
            dof: 0.0,
            p_value: 1.0,
        });
    }
    Ok(TestResult {
        statistic: stat,
        dof,
        p_value: chi2_sf(stat, dof)?,
    })
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestResult> {
    if samples.is_empty() {
        return Err(Error::Domain("KS test on empty data".into()));
    }
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sn = n.sqrt();
    Ok(TestResult {
        statistic: d,
        dof: n,
        p_value: kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d),
    })
}

/// Mean and sample standard deviation.
pub fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (m, 0.0);
    }
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Mean of a correlated series with its batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatchEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub batches: usize,
}

/// Splits `series` into `batches` contiguous batches, applies `stat` to
/// each and reports the spread of the batch values.
pub fn batch_statistic(
    series: &[f64],
    batches: usize,
    stat: impl Fn(&[f64]) -> f64,
) -> Result<BatchEstimate> {
    if batches < 2 || series.len() < 2 * batches {
        return Err(Error::Domain(format!(
            "{} points cannot form {batches} batches",
            series.len()
        )));
    }
    let size = series.len() / batches;
    let values: Vec<f64> = (0..batches)
        .map(|b| stat(&series[b * size..(b + 1) * size]))
        .collect();
    let (_, sd) = mean_sd(&values);
    Ok(BatchEstimate {
        mean: stat(&series[..batches * size]),
        stderr: sd / (batches as f64).sqrt(),
        batches,
    })
}

pub fn batch_means(series: &[f64], batches: usize) -> Result<BatchEstimate> {
    batch_statistic(series, batches, |s| mean_sd(s).0)
}

/// Coefficient of determination of a fit.
pub fn r_squared(y: &[f64], fit: &[f64]) -> f64 {
    let (m, _) = mean_sd(y);
    let ss_tot: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
    let ss_res: f64 = y.iter().zip(fit).map(|(a, b)| (a - b).powi(2)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pooling_meets_minimum() {
        let g = pool(&[1.0, 1.0, 4.0, 10.0, 2.0], 5.0);
        assert_eq!(g, vec![0..3, 3..5]);
    }

    #[test]
    fn gof_accepts_true_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = [0.5, 0.3, 0.2];
        let mut counts = [0.0; 3];
        for _ in 0..10_000 {
            let u: f64 = rng.random();
            let k = if u < 0.5 {
                0
            } else if u < 0.8 {
                1
            } else {
                2
            };
            counts[k] += 1.0;
        }
        assert!(chi_square_gof(&counts, &p, 0).unwrap().passes(0.01));
        assert!(!chi_square_gof(&counts, &[0.4, 0.4, 0.2], 0)
            .unwrap()
            .passes(0.01));
    }

    #[test]
    fn homogeneity() {
        let r = chi_square_homogeneity(&[50.0, 30.0, 20.0], &[100.0, 60.0, 40.0]).unwrap();
        assert!(r.statistic < 1e-12);
        let r = chi_square_homogeneity(&[90.0, 10.0], &[10.0, 90.0]).unwrap();
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn ks_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..5000)
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        assert!(ks_test(&x, |v| 1.0 - (-v).exp()).unwrap().passes(0.01));
        assert!(!ks_test(&x, |v| 1.0 - (-1.2 * v).exp())
            .unwrap()
            .passes(0.01));
    }

    #[test]
    fn kolmogorov_reference_values() {
        assert!((kolmogorov_sf(1.36) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_sf(1.63) - 0.0098).abs() < 1e-3);
    }

    #[test]
    fn batch_errors() {
        let x: Vec<f64> = (0..1000).map(|i| (i % 10) as f64).collect();
        let b = batch_means(&x, 10).unwrap();
        assert_eq!(b.mean, 4.5);
        assert_eq!(b.stderr, 0.0);
        assert!(batch_means(&x[..5], 10).is_err());
    }

    #[test]
    fn r_squared_limits() {
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 1.0);
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]), 0.0);
    }

    #[test]
    fn normalized_sums_to_one() {
        let p = normalize(&[3.0, 1.0, 6.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(normalize(&[0.0]).is_empty());
    }
}
