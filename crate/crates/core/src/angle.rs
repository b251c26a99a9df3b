//! Angle helpers. Radians are the canonical unit everywhere.

use std::f64::consts::PI;

pub const TAU: f64 = 2.0 * PI;

/// Reduce an angle to `[0, 2π)`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Weighted circular mean direction and mean resultant length.
pub fn circular_mean(data: &[f64], weights: &[f64]) -> (f64, f64) {
    let (mut s, mut c, mut w) = (0.0, 0.0, 0.0);
    for (&x, &wi) in data.iter().zip(weights) {
        s += wi * x.sin();
        c += wi * x.cos();
        w += wi;
    }
    let mean = wrap(s.atan2(c));
    let r = (s * s + c * c).sqrt() / w;
    (mean, r.min(1.0))
}

/// Circular standard deviation `sqrt(-2 ln R̄)`.
pub fn circular_sd(data: &[f64]) -> f64 {
    let w = vec![1.0; data.len()];
    let (_, r) = circular_mean(data, &w);
    if r <= 0.0 {
        return f64::INFINITY;
    }
    (-2.0 * r.ln()).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_handles_negative_and_large() {
        assert!((wrap(-PI / 2.0) - 1.5 * PI).abs() < 1e-15);
        assert!((wrap(5.0 * PI) - PI).abs() < 1e-12);
        assert_eq!(wrap(-1e-300), 0.0);
        assert!(wrap(TAU) < 1e-15);
    }

    #[test]
    fn circular_mean_across_origin() {
        let d = [0.1, TAU - 0.1];
        let (m, r) = circular_mean(&d, &[1.0, 1.0]);
        assert!(m < 1e-12 || (TAU - m) < 1e-12);
        assert!((r - 0.1f64.cos()).abs() < 1e-12);
        assert!(circular_sd(&[1.0, 1.0, 1.0]) < 1e-6);
    }
}
