//! Modified Bessel functions of the first kind, orders 0 and 1.
//!
//! Power series below `ASYMPTOTIC_FROM`, Hankel asymptotic expansion above.
//! Both branches are accurate to about 1e-14 relative; the exponentially
//! scaled forms avoid overflow for large concentrations.

const ASYMPTOTIC_FROM: f64 = 20.0;

fn series(x: f64, order: u32) -> f64 {
    // sum_k (x/2)^{2k+order} / (k! (k+order)!)
    let h = 0.5 * x;
    let q = h * h;
    let mut term = if order == 0 { 1.0 } else { h };
    let mut sum = term;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + order as f64));
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
        k += 1.0;
    }
    sum
}

fn asymptotic_scaled(x: f64, order: u32) -> f64 {
    // e^{-x} I_n(x) ~ 1/sqrt(2πx) Σ_k (-1)^k a_k(n) / x^k
    let mu = 4.0 * (order * order) as f64;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= -(mu - odd * odd) / (kf * 8.0 * x);
        if term.abs() >= prev {
            break;
        }
        prev = term.abs();
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// `e^{-x} I0(x)` for `x >= 0`.
pub fn bessel_i0_scaled(x: f64) -> f64 {
    let x = x.abs();
    if x < ASYMPTOTIC_FROM {
        series(x, 0) * (-x).exp()
    } else {
        asymptotic_scaled(x, 0)
    }
}

/// `e^{-x} I1(x)` for `x >= 0`.
pub fn bessel_i1_scaled(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax < ASYMPTOTIC_FROM {
        series(ax, 1) * (-ax).exp()
    } else {
        asymptotic_scaled(ax, 1)
    };
    v.copysign(x)
}

pub fn bessel_i0(x: f64) -> f64 {
    bessel_i0_scaled(x) * x.abs().exp()
}

pub fn bessel_i1(x: f64) -> f64 {
    bessel_i1_scaled(x) * x.abs().exp()
}

/// `ln I0(x)` without overflow.
pub fn ln_bessel_i0(x: f64) -> f64 {
    bessel_i0_scaled(x).ln() + x.abs()
}

/// Mean resultant length of a von Mises law, `A1(κ) = I1(κ)/I0(κ)`.
pub fn bessel_ratio_a1(kappa: f64) -> f64 {
    bessel_i1_scaled(kappa) / bessel_i0_scaled(kappa)
}
