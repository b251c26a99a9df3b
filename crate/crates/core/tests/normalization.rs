use twcm::angle::TAU;
use twcm::quadrature::{adaptive, periodic};
use twcm::{Marginal, RhoVector, Twcc, TwcmModel};

fn rho(a: f64, b: f64, c: f64) -> RhoVector {
    RhoVector::new(a, b, c).unwrap()
}

fn torus_integral<F: FnMut([f64; 3]) -> f64>(mut f: F, n: usize) -> f64 {
    let h = TAU / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                total += f([i as f64 * h, j as f64 * h, k as f64 * h]);
            }
        }
    }
    total * h * h * h
}

fn protein() -> TwcmModel {
    TwcmModel::new(
        rho(9.18, -1.17, -0.09),
        [
            Marginal::von_mises(1.93, 27.6).unwrap(),
            Marginal::von_mises(2.82, 17.3).unwrap(),
            Marginal::von_mises(6.23, 84.4).unwrap(),
        ],
    )
    .unwrap()
}

fn cylinder() -> TwcmModel {
    TwcmModel::new(
        rho(-2.0, -2.0, 0.25),
        [
            Marginal::wrapped_cauchy(1.0, 0.5).unwrap(),
            Marginal::cardioid(4.0, 0.3).unwrap(),
            Marginal::weibull(2.0, 1.5).unwrap(),
        ],
    )
    .unwrap()
}

#[test]
fn copula_integrates_to_one() {
    for r in [rho(3.0, 3.0, 1.0 / 9.0), rho(9.18, -1.17, -0.09), rho(-2.0, -2.0, 0.25)] {
        let c = Twcc::new(r).unwrap();
        let total = torus_integral(|u| c.density(u), 64);
        assert!((total - 1.0).abs() < 1e-6, "{r}: {total}");
    }
}

#[test]
fn circular_models_integrate_to_one() {
    let wc = TwcmModel::new(
        rho(3.0, 3.0, 1.0 / 9.0),
        [
            Marginal::wrapped_cauchy(1.0, 0.4).unwrap(),
            Marginal::von_mises(2.0, 3.0).unwrap(),
            Marginal::cardioid(5.0, 0.4).unwrap(),
        ],
    )
    .unwrap();
    for m in [protein(), wc] {
        let total = torus_integral(|x| m.density(x).unwrap(), 64);
        assert!((total - 1.0).abs() < 1e-5, "{total}");
    }
}

#[test]
fn cylindrical_model_integrates_to_one() {
    let m = cylinder();
    let top = m.marginals()[2].quantile(1.0 - 1e-10).unwrap();
    let total = adaptive(
        |x| {
            let h = TAU / 48.0;
            let mut s = 0.0;
            for i in 0..48 {
                for j in 0..48 {
                    s += m.density([i as f64 * h, j as f64 * h, x]).unwrap();
                }
            }
            s * h * h
        },
        0.0,
        top,
        1e-9,
    );
    assert!((total - 1.0).abs() < 1e-5, "{total}");
}

#[test]
fn copula_pair_marginal_matches_integration() {
    let c = Twcc::new(rho(3.0, 3.0, 1.0 / 9.0)).unwrap();
    let spec = c.pairwise(0, 1).unwrap();
    for a in 0..32 {
        for b in 0..32 {
            let (u1, u2) = (a as f64 * TAU / 32.0, b as f64 * TAU / 32.0);
            let num = periodic(|u3| c.density([u1, u2, u3]), 128, 0.0);
            assert!((num - spec.density(u1, u2)).abs() < 1e-6);
        }
    }
}

#[test]
fn model_pair_marginals_match_integration() {
    let m = TwcmModel::new(
        rho(3.0, 3.0, 1.0 / 9.0),
        [
            Marginal::wrapped_cauchy(1.0, 0.4).unwrap(),
            Marginal::von_mises(2.0, 3.0).unwrap(),
            Marginal::cardioid(5.0, 0.4).unwrap(),
        ],
    )
    .unwrap();
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let k = 3 - i - j;
        for a in 0..32 {
            for b in 0..32 {
                let (x, y) = (a as f64 * TAU / 32.0, b as f64 * TAU / 32.0);
                let num = periodic(
                    |z| {
                        let mut o = [0.0; 3];
                        o[i] = x;
                        o[j] = y;
                        o[k] = z;
                        m.density(o).unwrap()
                    },
                    256,
                    0.0,
                );
                let closed = m.bivariate_marginal_density(i, j, x, y).unwrap();
                assert!((num - closed).abs() < 1e-6, "({i},{j}) at ({x},{y}): {num} vs {closed}");
            }
        }
    }
}

#[test]
fn marginals_are_recovered_from_the_joint() {
    let m = cylinder();
    let top = m.marginals()[2].quantile(1.0 - 1e-10).unwrap();
    for t in 0..16 {
        let x = t as f64 * TAU / 16.0;
        for i in 0..2 {
            let other = 1 - i;
            let num = adaptive(
                |z| {
                    periodic(
                        |y| {
                            let mut o = [0.0, 0.0, z];
                            o[i] = x;
                            o[other] = y;
                            m.density(o).unwrap()
                        },
                        128,
                        0.0,
                    )
                },
                0.0,
                top,
                1e-10,
            );
            let f = m.marginals()[i].pdf(x).unwrap();
            assert!((num - f).abs() < 1e-5, "coordinate {i} at {x}: {num} vs {f}");
        }
        let z = m.marginals()[2].quantile((t as f64 + 0.5) / 16.0).unwrap();
        let h = TAU / 128.0;
        let mut num = 0.0;
        for a in 0..128 {
            for b in 0..128 {
                num += m.density([a as f64 * h, b as f64 * h, z]).unwrap();
            }
        }
        let f = m.marginals()[2].pdf(z).unwrap();
        assert!((num * h * h - f).abs() < 1e-5, "weibull at {z}: {} vs {f}", num * h * h);
    }
}

#[test]
fn uniform_copula_marginal() {
    let c = Twcc::new(rho(9.18, -1.17, -0.09)).unwrap();
    for t in 0..16 {
        let u1 = t as f64 * TAU / 16.0;
        let h = TAU / 128.0;
        let mut s = 0.0;
        for a in 0..128 {
            for b in 0..128 {
                s += c.density([u1, a as f64 * h, b as f64 * h]);
            }
        }
        assert!((s * h * h - 1.0 / TAU).abs() < 1e-6);
    }
}
