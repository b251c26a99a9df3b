//! Goodness-of-fit helpers: Kolmogorov–Smirnov against a continuous CDF and
//! binned comparisons on the torus.

/// `sup |F_n − F|` for a sample and a CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut values: Vec<f64> = sample.iter().map(|&x| cdf(x)).collect();
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    values
        .iter()
        .enumerate()
        .map(|(i, &f)| (f - i as f64 / n).max((i + 1) as f64 / n - f))
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of statistic `d` at sample size `n`, with Stephens'
/// small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// `(statistic, p-value)`.
pub fn ks_test<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> (f64, f64) {
    let d = ks_statistic(sample, cdf);
    (d, ks_p_value(d, sample.len()))
}

/// Counts of points of `[0, 2π)³` in a `bins³` grid (index `(i·bins + j)·bins + k`).
pub fn torus_histogram(sample: &[[f64; 3]], bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins * bins * bins];
    let cell = |x: f64| ((crate::angle::wrap(x) / crate::angle::TAU * bins as f64) as usize).min(bins - 1);
    for x in sample {
        counts[(cell(x[0]) * bins + cell(x[1])) * bins + cell(x[2])] += 1;
    }
    counts
}

/// Mass of each `bins³` cell under `density`, by a midpoint rule with `sub`
/// points per axis per cell.
pub fn torus_cell_masses<F: FnMut([f64; 3]) -> f64>(mut density: F, bins: usize, sub: usize) -> Vec<f64> {
    let m = bins * sub;
    let h = crate::angle::TAU / m as f64;
    let mut masses = vec![0.0; bins * bins * bins];
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let x = [(a as f64 + 0.5) * h, (b as f64 + 0.5) * h, (c as f64 + 0.5) * h];
                let idx = ((a / sub) * bins + b / sub) * bins + c / sub;
                masses[idx] += density(x) * h * h * h;
            }
        }
    }
    masses
}

/// Largest `|count − n p| / sqrt(n p (1 − p))` over the cells.
pub fn max_cell_z(counts: &[u64], masses: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let n = n as f64;
    counts
        .iter()
        .zip(masses)
        .map(|(&c, &p)| {
            let se = (n * p * (1.0 - p)).sqrt();
            (c as f64 - n * p).abs() / se
        })
        .fold(0.0, f64::max)
}
