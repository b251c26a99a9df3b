use twcm::angle::TAU;
use twcm::gof::{ks_test, max_cell_z, torus_cell_masses, torus_histogram};
use twcm::{Marginal, RhoVector, Twcc, TwcmModel};

#[test]
fn copula_draws_match_cell_masses() {
    let c = Twcc::new(RhoVector::new(3.0, 3.0, 1.0 / 9.0).unwrap()).unwrap();
    let draws = c.sample(100_000, 2024).unwrap();
    let masses = torus_cell_masses(|u| c.density(u), 8, 8);
    assert!((masses.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let z = max_cell_z(&torus_histogram(&draws, 8), &masses);
    assert!(z < 4.0, "max cell z = {z}");
}

#[test]
fn copula_coordinates_are_uniform() {
    let c = Twcc::new(RhoVector::new(9.18, -1.17, -0.09).unwrap()).unwrap();
    let draws = c.sample(20_000, 7).unwrap();
    for k in 0..3 {
        let col: Vec<f64> = draws.iter().map(|u| u[k]).collect();
        let (_, p) = ks_test(&col, |x| x / TAU);
        assert!(p > 0.01, "coordinate {k}: p = {p}");
    }
}

#[test]
fn model_draws_match_density() {
    let m = TwcmModel::new(
        RhoVector::new(-2.0, -2.0, 0.25).unwrap(),
        [
            Marginal::von_mises(1.0, 2.0).unwrap(),
            Marginal::wrapped_cauchy(3.0, 0.4).unwrap(),
            Marginal::cardioid(5.0, 0.3).unwrap(),
        ],
    )
    .unwrap();
    let draws = m.sample(100_000, 99).unwrap();
    let masses = torus_cell_masses(|x| m.density(x).unwrap(), 8, 6);
    let z = max_cell_z(&torus_histogram(&draws, 8), &masses);
    assert!(z < 4.0, "max cell z = {z}");

    let small = m.sample(10_000, 5).unwrap();
    for k in 0..3 {
        let col: Vec<f64> = small.iter().map(|x| x[k]).collect();
        let f = m.marginals()[k];
        let (_, p) = ks_test(&col, |x| f.cdf(x).unwrap());
        assert!(p > 0.01, "coordinate {k}: p = {p}");
    }
}

#[test]
fn linear_coordinate_follows_its_marginal() {
    let m = TwcmModel::new(
        RhoVector::new(3.0, 3.0, 1.0 / 9.0).unwrap(),
        [Marginal::uniform(), Marginal::wrapped_cauchy(2.0, 0.6).unwrap(), Marginal::weibull(1.7, 2.0).unwrap()],
    )
    .unwrap();
    let draws = m.sample(10_000, 3).unwrap();
    assert!(draws.iter().all(|x| x[2] > 0.0));
    let col: Vec<f64> = draws.iter().map(|x| x[2]).collect();
    let (_, p) = ks_test(&col, |x| m.marginals()[2].cdf(x).unwrap());
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn sampling_is_deterministic() {
    let m = TwcmModel::copula_only(RhoVector::new(3.0, 3.0, 1.0 / 9.0).unwrap()).unwrap();
    assert_eq!(m.sample(500, 1).unwrap(), m.sample(500, 1).unwrap());
    assert_ne!(m.sample(500, 1).unwrap(), m.sample(500, 2).unwrap());
    assert!(m.sample(0, 1).is_err());
}
