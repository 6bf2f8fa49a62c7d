use ambistop_core::excessive::solve_hat_z;
use ambistop_core::solvers::{critical_kappa_floor, floor_indicator, floor_solve, integral_boundary, Boundaries};
use ambistop_core::ModelParams;

fn model(kappa: f64) -> ModelParams {
    ModelParams::new(0.0, 0.5, 0.05, kappa).unwrap()
}

#[test]
fn one_sided_floor_at_half_kappa() {
    let m = model(0.5);
    assert!((integral_boundary(&m).unwrap() - 27.9912).abs() < 1e-4);
    assert!(floor_indicator(&m).unwrap() > 0.0);
    let Boundaries::Lower { z_star } = floor_solve(&m).unwrap().boundaries() else { panic!("one boundary expected") };
    assert!((z_star - 27.9912).abs() < 1e-4);
}

#[test]
fn two_sided_floor_at_high_kappa() {
    let m = model(1.75);
    assert!(floor_indicator(&m).unwrap() < 0.0);
    let Boundaries::TwoSided { z1, z2, .. } = floor_solve(&m).unwrap().boundaries() else {
        panic!("two boundaries expected")
    };
    assert!((z1 - 0.0854).abs() < 1e-4 && (z2 - 22.6858).abs() < 1e-4, "({z1}, {z2})");
    // the upper edge is the switch point of the excessive function referenced at the lower edge
    assert!((solve_hat_z(&m, z1).unwrap() - z2).abs() < 1e-6 * z2);
}

#[test]
fn critical_kappa() {
    let k = critical_kappa_floor(0.0, 0.5, 0.05, 5.0).unwrap();
    assert!((k - 1.59795).abs() < 1e-5, "{k}");
}

#[test]
fn boundary_falls_with_kappa_but_stays_above_twenty() {
    let z: Vec<f64> = (0..=10).map(|i| integral_boundary(&model(i as f64 / 10.0)).unwrap()).collect();
    assert!(z.windows(2).all(|w| w[1] < w[0]), "{z:?}");
    for k in [0.0, 0.5, 1.0, 1.75] {
        assert!(integral_boundary(&model(k)).unwrap() > 20.0);
    }
}
