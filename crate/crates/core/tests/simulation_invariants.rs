use ambistop_core::simulation::{simulate_value, trace_path, Generator, Scheme, SimConfig};
use ambistop_core::solvers::{floor_solve, integral_solve, value};
use ambistop_core::ModelParams;

fn cfg(m: &ModelParams, n: usize, dt: f64, t_max: f64, scheme: Scheme) -> SimConfig {
    SimConfig { t_max, scheme, ..SimConfig::for_model(m, n, dt, 17) }
}

/// Mean over paths of max_t |Z − Y/X| / (Y/X).
fn y_gap(m: &ModelParams, dt: f64, scheme: Scheme) -> f64 {
    let c = cfg(m, 1, dt, 2.0, scheme);
    let mut total = 0.0;
    for path in 0..20 {
        let tr = trace_path(m, &Generator::WorstCase, Some(20.0), &c, 1.0, 5.0, path).unwrap();
        let gap = tr
            .z
            .iter()
            .zip(tr.y.iter().zip(&tr.x))
            .map(|(z, (y, x))| (z - y / x).abs() / (y / x))
            .fold(0.0, f64::max);
        total += gap;
    }
    total / 20.0
}

#[test]
fn z_agrees_with_y_over_x() {
    let m = ModelParams::new(0.0, 0.5, 0.05, 0.5).unwrap();
    // the default scheme advances Z as Y/X
    assert!(y_gap(&m, 1e-3, Scheme::LogXTrapezoidY) < 1e-12);
    // Euler Z drifts from Y/X at first order in dt
    let coarse = y_gap(&m, 2e-3, Scheme::EulerLogXEulerZ);
    let fine = y_gap(&m, 1e-3, Scheme::EulerLogXEulerZ);
    assert!(coarse < 0.05 && fine < 0.75 * coarse, "gap {coarse} at 2e-3, {fine} at 1e-3");
}

#[test]
fn estimates_stable_under_step_halving() {
    let m = ModelParams::new(0.0, 0.5, 0.05, 1.75).unwrap();
    let s = floor_solve(&m).unwrap();
    let a = simulate_value(&m, &s, &Generator::WorstCase, &cfg(&m, 20_000, 1e-3, 20.0, Scheme::default()), 1.0, 15.0)
        .unwrap();
    let b = simulate_value(&m, &s, &Generator::WorstCase, &cfg(&m, 20_000, 5e-4, 20.0, Scheme::default()), 1.0, 15.0)
        .unwrap();
    let se = a.std_error.hypot(b.std_error);
    assert!((a.mean - b.mean).abs() <= 3.0 * se, "{a:?} vs {b:?}");
    let v = value(&s, 1.0, 15.0).unwrap();
    assert!((a.mean - v).abs() <= 3.0 * a.std_error + a.truncation_bias_bound, "{a:?} vs V = {v}");
}

#[test]
fn integral_value_and_plus_kappa_agree() {
    let m = ModelParams::new(0.0, 0.5, 0.05, 0.5).unwrap();
    let s = integral_solve(&m).unwrap();
    let c = cfg(&m, 20_000, 1e-3, 20.0, Scheme::default());
    let worst = simulate_value(&m, &s, &Generator::WorstCase, &c, 1.0, 0.0).unwrap();
    let plus = simulate_value(&m, &s, &Generator::ConstantPlusKappa, &c, 1.0, 0.0).unwrap();
    // the switch point is the band edge, so both generators give the same paths
    assert_eq!(worst, plus);
    let v = value(&s, 1.0, 0.0).unwrap();
    assert!(
        (worst.mean - v).abs() <= 3.0 * worst.std_error + worst.truncation_bias_bound,
        "{worst:?} vs V = {v}"
    );
}
