//! Small statistics toolbox for checking samplers against their laws.

use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi2Test {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

pub fn chi2_sf(statistic: f64, dof: usize) -> f64 {
    ChiSquared::new(dof as f64)
        .expect("positive degrees of freedom")
        .sf(statistic)
}

/// Pearson goodness-of-fit of `observed` counts against cell probabilities.
/// Cells with zero probability must have zero counts and are skipped.
pub fn chi2_goodness_of_fit(observed: &[u64], probabilities: &[f64]) -> Chi2Test {
    assert_eq!(observed.len(), probabilities.len());
    let n: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(probabilities) {
        if p == 0.0 {
            assert_eq!(o, 0, "count in a zero-probability cell");
            continue;
        }
        let e = p * n as f64;
        stat += (o as f64 - e).powi(2) / e;
        cells += 1;
    }
    let dof = cells.saturating_sub(1).max(1);
    Chi2Test {
        statistic: stat,
        dof,
        p_value: chi2_sf(stat, dof),
    }
}

/// Binned two-sample chi-square test for integer samples. Bin edges are
/// quantiles of the pooled sample, merged so each bin holds at least
/// `min_count` pooled observations.
pub fn chi2_two_sample(a: &[u64], b: &[u64], bins: usize, min_count: usize) -> Chi2Test {
    assert!(!a.is_empty() && !b.is_empty() && bins >= 2);
    let mut pooled: Vec<u64> = a.iter().chain(b).copied().collect();
    pooled.sort_unstable();
    let n = pooled.len();

    // Upper edges (inclusive) of each bin, deduplicated.
    let mut edges: Vec<u64> = (1..bins).map(|k| pooled[k * n / bins]).collect();
    edges.dedup();
    let bin_of = |x: u64| edges.partition_point(|&e| e < x);
    let nb = edges.len() + 1;
    let mut ca = vec![0u64; nb];
    let mut cb = vec![0u64; nb];
    a.iter().for_each(|&x| ca[bin_of(x)] += 1);
    b.iter().for_each(|&x| cb[bin_of(x)] += 1);

    let (ca, cb) = merge_sparse(ca, cb, min_count as u64);
    let (na, nb_tot) = (a.len() as f64, b.len() as f64);
    let k1 = (nb_tot / na).sqrt();
    let k2 = (na / nb_tot).sqrt();
    let stat: f64 = ca
        .iter()
        .zip(&cb)
        .filter(|(r, s)| **r + **s > 0)
        .map(|(&r, &s)| (k1 * r as f64 - k2 * s as f64).powi(2) / (r + s) as f64)
        .sum();
    let dof = ca.len().saturating_sub(1).max(1);
    Chi2Test {
        statistic: stat,
        dof,
        p_value: chi2_sf(stat, dof),
    }
}

fn merge_sparse(ca: Vec<u64>, cb: Vec<u64>, min_count: u64) -> (Vec<u64>, Vec<u64>) {
    let mut oa = Vec::new();
    let mut ob = Vec::new();
    let (mut ra, mut rb) = (0, 0);
    for (a, b) in ca.into_iter().zip(cb) {
        ra += a;
        rb += b;
        if ra + rb >= min_count {
            oa.push(ra);
            ob.push(rb);
            ra = 0;
            rb = 0;
        }
    }
    if ra + rb > 0 {
        match (oa.last_mut(), ob.last_mut()) {
            (Some(la), Some(lb)) => {
                *la += ra;
                *lb += rb;
            }
            _ => {
                oa.push(ra);
                ob.push(rb);
            }
        }
    }
    (oa, ob)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (denominator `n - 1`).
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn standard_error(xs: &[f64]) -> f64 {
    sample_sd(xs) / (xs.len() as f64).sqrt()
}

/// Linear-interpolation quantile of sorted data: position `q (n - 1)`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty() && (0.0..=1.0).contains(&q));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Standard error of an empirical proportion with true value `p`.
pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
