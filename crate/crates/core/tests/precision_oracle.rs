//! Reference values from a 160-bit software float: series-only Kummer M,
//! Tricomi U through the connection formula, and Gamma through a shifted
//! Stirling series.

use ambistop_core::fundamental::FundamentalPair;
use ambistop_core::special::{kummer_m, log_gamma, tricomi_u};
use ambistop_core::{characteristic_roots, DriftSign, ModelParams};
use dashu_float::FBig;

type F = FBig;

const PREC: usize = 160;

fn hp(x: f64) -> F {
    F::try_from(x).unwrap().with_precision(PREC).value()
}

fn int(n: i64) -> F {
    hp(n as f64)
}

fn to_f64(x: &F) -> f64 {
    x.to_f64().value()
}

fn pi() -> F {
    // Machin: π = 16 atan(1/5) − 4 atan(1/239)
    let atan_inv = |k: i64| -> F {
        let x = int(1) / int(k);
        let x2 = &x * &x;
        let mut term = x.clone();
        let mut sum = x;
        for n in 1..200 {
            term = -(term * &x2);
            sum += &term / int(2 * n + 1);
        }
        sum
    };
    int(16) * atan_inv(5) - int(4) * atan_inv(239)
}

/// Γ(z) for non-integer or positive z, via Γ(z) = Γ(z + N)/(z(z+1)...(z+N−1)).
fn gamma(z: &F) -> F {
    const N: i64 = 40;
    let mut w = z.clone();
    let mut prod = int(1);
    for _ in 0..N {
        prod *= &w;
        w += int(1);
    }
    // Bernoulli numbers B_2 .. B_30
    let bern: [(i64, i64); 15] = [
        (1, 6),
        (-1, 30),
        (1, 42),
        (-1, 30),
        (5, 66),
        (-691, 2730),
        (7, 6),
        (-3617, 510),
        (43867, 798),
        (-174611, 330),
        (854513, 138),
        (-236364091, 2730),
        (8553103, 6),
        (-23749461029, 870),
        (8615841276005, 14322),
    ];
    let half = int(1) / int(2);
    let mut lg = (&w - &half) * w.ln() - &w + (int(2) * pi()).ln() * &half;
    let w2 = &w * &w;
    let mut wpow = w.clone();
    for (k, (num, den)) in bern.iter().enumerate() {
        let k2 = 2 * (k as i64 + 1);
        lg += int(*num) / (int(*den) * int(k2) * int(k2 - 1) * &wpow);
        wpow *= &w2;
    }
    lg.exp() / prod
}

fn kummer_series(a: &F, b: &F, x: &F) -> F {
    let mut term = int(1);
    let mut sum = int(1);
    for n in 0..2000 {
        let nf = int(n);
        term = term * (a + &nf) / (b + &nf) * x / (&nf + int(1));
        sum += &term;
        if n > 10 && to_f64(&term).abs() <= 1e-40 * to_f64(&sum).abs() {
            break;
        }
    }
    sum
}

/// U(a, b, x) = Γ(1−b)/Γ(a−b+1) M(a, b, x) + Γ(b−1)/Γ(a) x^{1−b} M(a−b+1, 2−b, x).
fn tricomi_connection(a: f64, b: f64, x: f64) -> F {
    let (a, b, x) = (hp(a), hp(b), hp(x));
    let one = int(1);
    let t1 = gamma(&(&one - &b)) / gamma(&(&a - &b + &one)) * kummer_series(&a, &b, &x);
    let t2 = gamma(&(&b - &one)) / gamma(&a)
        * x.powf(&(&one - &b))
        * kummer_series(&(&a - &b + &one), &(int(2) - &b), &x);
    t1 + t2
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn oracle_sanity() {
    let g = gamma(&hp(0.5));
    assert!(rel(to_f64(&g), std::f64::consts::PI.sqrt()) < 1e-15);
    assert!(rel(to_f64(&gamma(&hp(5.0))), 24.0) < 1e-15);
    // Kummer transformation U(a, b, x) = x^{1−b} U(a−b+1, 2−b, x)
    let (a, b, x) = (0.3, 1.7, 2.0);
    let lhs = to_f64(&tricomi_connection(a, b, x));
    let rhs = x.powf(1.0 - b) * to_f64(&tricomi_connection(a - b + 1.0, 2.0 - b, x));
    assert!(rel(lhs, rhs) < 1e-14);
}

#[test]
fn kummer_m_against_extended_series() {
    let e1 = hp(1.0).exp() - int(1);
    assert!(rel(kummer_m(1.0, 2.0, 1.0).unwrap().value, to_f64(&e1)) < 1e-14);
    for (a, b, x) in [(0.3, 1.7, 2.0), (2.5, 1.2, 30.0), (0.7, 3.4, 80.0), (1.3, 0.4, 5.0), (4.2, 9.5, 0.01)] {
        let want = to_f64(&kummer_series(&hp(a), &hp(b), &hp(x)));
        let got = kummer_m(a, b, x).unwrap().value;
        assert!(rel(got, want) < 1e-12, "M({a}, {b}, {x}) = {got}, want {want}");
    }
}

#[test]
fn tricomi_u_against_connection_formula() {
    for (a, b, x) in [(0.3, 1.7, 2.0), (1.2, 0.6, 10.0), (2.4, 2.3, 0.5), (0.8, 1.1, 25.0)] {
        let want = to_f64(&tricomi_connection(a, b, x));
        let got = tricomi_u(a, b, x).unwrap().value;
        assert!(rel(got, want) < 1e-9, "U({a}, {b}, {x}) = {got}, want {want}");
    }
}

#[test]
fn log_gamma_against_extended_gamma() {
    for x in [0.1, 0.5, 1.7, 3.25, 11.5, 40.3] {
        let want = to_f64(&gamma(&hp(x)).ln());
        let got = log_gamma(x).unwrap();
        assert!((got - want).abs() < 1e-13 * want.abs().max(1.0), "lnΓ({x}) = {got}, want {want}");
    }
}

/// ψ, φ from the quadratic q² + (1 + 2δ/σ²) q − 2(r − δ)/σ² = 0 in extended precision.
fn roots_hp(m: &ModelParams, sign: f64) -> (F, F) {
    let s2 = hp(m.sigma) * hp(m.sigma);
    let delta = hp(m.mu) - hp(sign * m.kappa) * hp(m.sigma);
    let half_b = (int(1) + int(2) * &delta / &s2) / int(2);
    let c = int(2) * (hp(m.r) - &delta) / &s2;
    let sq = (&half_b * &half_b + c).sqrt();
    (-&half_b + &sq, -half_b - sq)
}

#[test]
fn roots_at_zero_ambiguity() {
    let m = ModelParams::new(0.0, 0.5, 0.05, 0.0).unwrap();
    let (psi, phi) = roots_hp(&m, 1.0);
    let r = characteristic_roots(&m, DriftSign::PlusKappa).unwrap();
    assert!(rel(r.psi, to_f64(&psi)) < 1e-14);
    assert!(rel(r.phi, to_f64(&phi)) < 1e-14);
    assert!((r.psi - 0.3062257).abs() < 1e-7);
}

#[test]
fn wronskian_constant_at_zero_ambiguity() {
    let m = ModelParams::new(0.0, 0.5, 0.05, 0.0).unwrap();
    let (psi, phi) = roots_hp(&m, 1.0);
    let two_over_s2 = int(2) / (hp(0.5) * hp(0.5));
    let want = gamma(&(&psi - &phi + int(1))) / gamma(&psi) * two_over_s2.powf(&(&psi + &phi));
    let got = FundamentalPair::new(&m, DriftSign::PlusKappa).unwrap().wronskian_b();
    assert!(rel(got, to_f64(&want)) < 1e-10, "B = {got}, want {}", to_f64(&want));
}

#[test]
fn fundamental_solutions_against_extended_precision() {
    let m = ModelParams::new(0.0, 0.5, 0.05, 0.5).unwrap();
    for (sign, ds) in [(1.0, DriftSign::PlusKappa), (-1.0, DriftSign::MinusKappa)] {
        let f = FundamentalPair::new(&m, ds).unwrap();
        let (psi, phi) = roots_hp(&m, sign);
        let b = int(1) + &psi - &phi;
        let (psi_f, b_f) = (to_f64(&psi), to_f64(&b));
        for z in [0.5, 5.0, 50.0] {
            let w = 2.0 / (0.25 * z);
            let wp = hp(w).powf(&psi);
            let p_want = to_f64(&(&wp * tricomi_connection(psi_f, b_f, w)));
            let q_want = to_f64(&(&wp * kummer_series(&psi, &b, &hp(w))));
            let p = f.eval_p(z, 0).unwrap();
            let q = f.eval_q(z, 0).unwrap();
            assert!(rel(p, p_want) < 1e-9, "{ds:?} P({z}) = {p}, want {p_want}");
            assert!(rel(q, q_want) < 1e-9, "{ds:?} Q({z}) = {q}, want {q_want}");
        }
    }
}
