//! Acceptance suite. Each criterion passes only if its numerical check holds
//! and it finishes inside its time limit.

use std::time::{Duration, Instant};

use ambistop_core::excessive::{Branch, ExcessiveFunction, Reference};
use ambistop_core::fundamental::FundamentalPair;
use ambistop_core::oracle::{compare, solve_obstacle, GridSpec};
use ambistop_core::simulation::{martingale_check, nash_check, Generator, NashReport, SimConfig};
use ambistop_core::solvers::{
    critical_kappa_floor, exchange_boundary, floor_solve, integral_boundary, integral_solve, upper_boundary_solve,
    Boundaries, StoppingSolution,
};
use ambistop_core::{DriftSign, ModelParams, Payoff};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::csv::{Cell, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub limit: Duration,
}

impl Criterion {
    pub fn line(&self) -> String {
        format!(
            "{} [{:>2}] {}: {} ({:.2} s, limit {} s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64(),
            self.limit.as_secs()
        )
    }
}

pub const ALL: [u32; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

type Check = fn() -> Result<(bool, String), String>;

fn spec(id: u32) -> Option<(&'static str, u64, Check)> {
    Some(match id {
        1 => ("floor critical ambiguity", 10, c1_critical_kappa as Check),
        2 => ("floor single boundary", 1, c2_floor_single),
        3 => ("floor two boundaries", 5, c3_floor_two_sided),
        4 => ("integral boundary first-order condition", 30, c4_integral_foc),
        5 => ("monotone boundary sweeps", 60, c5_monotone_sweeps),
        6 => ("exchange small-strike limit", 10, c6_small_strike),
        7 => ("finite-difference oracle agreement", 120, c7_oracle),
        8 => ("martingale and submartingale profiles", 300, c8_martingale),
        9 => ("Nash equilibrium checks", 600, c9_nash),
        10 => ("analytic structure", 60, c10_structure),
        _ => return None,
    })
}

pub fn run_criterion(id: u32) -> Option<Criterion> {
    let (name, limit, check) = spec(id)?;
    let start = Instant::now();
    let result = check();
    let elapsed = start.elapsed();
    let limit = Duration::from_secs(limit);
    let (ok, detail) = match result {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    Some(Criterion { id, name, pass: ok && elapsed <= limit, detail, elapsed, limit })
}

/// Run the selected criteria in order, calling `report` after each.
pub fn run_all(ids: &[u32], mut report: impl FnMut(&Criterion)) -> Vec<Criterion> {
    ids.iter()
        .filter_map(|&id| {
            let c = run_criterion(id)?;
            report(&c);
            Some(c)
        })
        .collect()
}

pub fn summary_table(results: &[Criterion]) -> Table {
    let mut t = Table::new(&["id", "name", "pass", "elapsed_s", "limit_s", "detail"]);
    for c in results {
        t.push(vec![
            u64::from(c.id).into(),
            c.name.into(),
            u64::from(c.pass).into(),
            c.elapsed.as_secs_f64().into(),
            c.limit.as_secs().into(),
            Cell::Text(format!("\"{}\"", c.detail.replace('"', "'"))),
        ]);
    }
    t
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn model(mu: f64, sigma: f64, r: f64, kappa: f64) -> Result<ModelParams, String> {
    ModelParams::new(mu, sigma, r, kappa).map_err(err)
}

fn c1_critical_kappa() -> Result<(bool, String), String> {
    let k = critical_kappa_floor(0.0, 0.5, 0.05, 5.0).map_err(err)?;
    let ok = (k - 1.59795).abs() <= 1e-3;
    Ok((ok, format!("kappa_hat = {k:.6}, expected 1.59795 +- 1e-3")))
}

fn c2_floor_single() -> Result<(bool, String), String> {
    let s = floor_solve(&model(0.0, 0.5, 0.05, 0.5)?).map_err(err)?;
    match s.boundaries() {
        Boundaries::Lower { z_star } => {
            let ok = (z_star - 27.9912).abs() <= 1e-2;
            Ok((ok, format!("z_bar = {z_star:.5}, expected 27.9912 +- 1e-2")))
        }
        b => Ok((false, format!("unexpected regime {b:?}"))),
    }
}

fn c3_floor_two_sided() -> Result<(bool, String), String> {
    let s = floor_solve(&model(0.0, 0.5, 0.05, 1.75)?).map_err(err)?;
    match s.boundaries() {
        Boundaries::TwoSided { z1, z2, .. } => {
            let ok = (z1 - 0.0854).abs() <= 1e-2 && (z2 - 22.6858).abs() <= 1e-2;
            Ok((ok, format!("(z1, z2) = ({z1:.5}, {z2:.5}), expected (0.0854, 22.6858) +- 1e-2")))
        }
        b => Ok((false, format!("unexpected regime {b:?}"))),
    }
}

/// Valid random models with μ ∈ [−0.05, 0.1], σ ∈ [0.05, 0.6], r ∈ [0.01, 0.15], κ ∈ [0, 1].
pub fn random_models(seed: u64, n: usize) -> Vec<ModelParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mu = rng.random_range(-0.05..0.1);
        let sigma = rng.random_range(0.05..0.6);
        let r = rng.random_range(0.01..0.15);
        let kappa = rng.random_range(0.0..1.0);
        if let Ok(m) = ModelParams::new(mu, sigma, r, kappa) {
            out.push(m);
        }
    }
    out
}

fn c4_integral_foc() -> Result<(bool, String), String> {
    let models = random_models(4, 50);
    let rows = models
        .par_iter()
        .map(|m| -> Result<(f64, f64), String> {
            let zbar = integral_boundary(m).map_err(err)?;
            let plus = FundamentalPair::new(m, DriftSign::PlusKappa).map_err(err)?;
            let (p, p1) = plus.p_pair(zbar).map_err(err)?;
            Ok((zbar * m.r, (p - zbar * p1).abs() / p))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let min_ratio = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let max_res = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let ok = min_ratio > 1.0 && max_res < 1e-8;
    Ok((ok, format!("50 models: min r*z_bar = {min_ratio:.4} (> 1), max |P - zP'|/P = {max_res:.2e} (< 1e-8)")))
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn c5_monotone_sweeps() -> Result<(bool, String), String> {
    let kappas: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
    let sigmas = [0.05, 0.075, 0.1];
    let integral: Vec<Vec<f64>> = sigmas
        .par_iter()
        .map(|&s| {
            kappas
                .iter()
                .map(|&k| integral_boundary(&model(0.02, s, 0.05, k)?).map_err(err))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let exchange = kappas
        .par_iter()
        .map(|&k| exchange_boundary(&model(0.02, 0.1, 0.05, k)?, 0.5).map_err(err))
        .collect::<Result<Vec<_>, _>>()?;
    let dec_k = integral.iter().all(|c| strictly_decreasing(c));
    let inc_s = (0..kappas.len()).all(|j| integral.windows(2).all(|w| w[1][j] > w[0][j]));
    let dec_ex = strictly_decreasing(&exchange);
    Ok((
        dec_k && inc_s && dec_ex,
        format!(
            "integral z_bar decreasing in kappa: {dec_k}, increasing in sigma: {inc_s} \
             (z_bar(0.1, 0) = {:.3}); exchange z* decreasing in kappa: {dec_ex}",
            integral[2][0]
        ),
    ))
}

fn c6_small_strike() -> Result<(bool, String), String> {
    let models = random_models(6, 10);
    let worst = models
        .par_iter()
        .map(|m| -> Result<f64, String> {
            let zbar = integral_boundary(m).map_err(err)?;
            let zs = exchange_boundary(m, 1e-10).map_err(err)?;
            Ok((zs - zbar).abs() / zbar)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok((worst < 1e-6, format!("10 models: max |z*(K=1e-10) - z_bar|/z_bar = {worst:.2e} (< 1e-6)")))
}

fn c7_oracle() -> Result<(bool, String), String> {
    let cases: Vec<(&str, StoppingSolution)> = vec![
        ("integral", integral_solve(&model(0.02, 0.1, 0.05, 0.5)?).map_err(err)?),
        ("exchange", ambistop_core::solvers::exchange_solve(&model(0.02, 0.1, 0.05, 0.5)?, 0.5).map_err(err)?),
        ("floor k=0.5", floor_solve(&model(0.0, 0.5, 0.05, 0.5)?).map_err(err)?),
        ("floor k=1.75", floor_solve(&model(0.0, 0.5, 0.05, 1.75)?).map_err(err)?),
    ];
    let jobs: Vec<(usize, usize)> = (0..cases.len()).flat_map(|i| [(i, 4000), (i, 8000)]).collect();
    let errs = jobs
        .par_iter()
        .map(|&(i, n)| -> Result<f64, String> {
            let s = &cases[i].1;
            let spec = GridSpec::for_model(s.model(), n).map_err(err)?;
            let o = solve_obstacle(s.model(), s.payoff(), &spec).map_err(err)?;
            Ok(compare(s, &o).map_err(err)?.max_rel_error)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, (name, _)) in cases.iter().enumerate() {
        let (e4, e8) = (errs[2 * i], errs[2 * i + 1]);
        ok &= e4 < 1e-3 && e8 < e4;
        parts.push(format!("{name}: {e4:.2e} -> {e8:.2e}"));
    }
    Ok((ok, format!("max rel error N=4000 -> 8000: {}", parts.join("; "))))
}

fn c8_martingale() -> Result<(bool, String), String> {
    let m = model(0.0, 0.5, 0.05, 0.5)?;
    let cfg = SimConfig { t_max: 1.0, ..SimConfig::for_model(&m, 200_000, 1e-3, 8) };
    let cps = [0.25, 0.5, 1.0];
    use Generator::*;
    // (reference, z0, generator, must drift up)
    let cases = [
        (Reference::Finite(20.0), 20.0, WorstCase, false),
        (Reference::Finite(20.0), 20.0, ConstantPlusKappa, false),
        (Reference::Finite(20.0), 20.0, ConstantMinusKappa, true),
        (Reference::Infinity, 20.0, ConstantPlusKappa, false),
        (Reference::Infinity, 20.0, ConstantMinusKappa, true),
        (Reference::Zero, 20.0, WorstCase, false),
        (Reference::Zero, 20.0, ConstantPlusKappa, false),
        (Reference::Finite(10.0), 15.0, WorstCase, false),
        (Reference::Finite(10.0), 15.0, ConstantMinusKappa, true),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (rf, z0, g, up) in cases {
        let rep = martingale_check(&m, rf, &g, &cfg, 1.0, z0, &cps).map_err(err)?;
        let last = rep.checkpoints.last().expect("checkpoints");
        let z = (last.mean - rep.m0) / last.std_error;
        let good = rep.pass() && (!up || rep.drifts_up());
        ok &= good;
        parts.push(format!(
            "{}{rf:?}/{g:?}/{} z={z:+.1}",
            if good { "" } else { "FAILED " },
            if rep.matching { "flat" } else { "one-sided" }
        ));
    }
    let m0 = m.with_kappa(0.0).map_err(err)?;
    let rep = martingale_check(&m0, Reference::Finite(10.0), &WorstCase, &cfg, 1.0, 10.0, &cps).map_err(err)?;
    ok &= rep.pass() && rep.matching;
    parts.push(format!("kappa=0 flat: {}", rep.pass()));
    Ok((ok, parts.join("; ")))
}

fn nash_summary(name: &str, rep: &NashReport) -> String {
    if let Some(why) = &rep.skipped {
        return format!("{name}: skipped ({why})");
    }
    let diffs: Vec<String> = rep.comparisons.iter().map(|c| format!("{:+.1}", c.difference / c.joint_std_error)).collect();
    format!(
        "{name}: V={:.5} MC={:.5}+-{:.5} z-scores [{}]",
        rep.analytic_value,
        rep.equilibrium.mean,
        rep.equilibrium.std_error,
        diffs.join(" ")
    )
}

fn c9_nash() -> Result<(bool, String), String> {
    let cfg = |m: &ModelParams, seed| SimConfig { t_max: 5.0, ..SimConfig::for_model(m, 200_000, 1e-3, seed) };
    let mut ok = true;
    let mut parts = Vec::new();

    let m = model(0.0, 0.5, 0.05, 0.5)?;
    let s = integral_solve(&m).map_err(err)?;
    let rep = nash_check(&m, &s, &cfg(&m, 91), 1.0, 0.0).map_err(err)?;
    let shrunk = rep.comparisons.iter().find(|c| c.label.starts_with("band shrunk")).expect("shrunk comparison");
    let strict = shrunk.difference < -3.0 * shrunk.joint_std_error;
    ok &= rep.pass() && strict;
    parts.push(format!("{} premature stop strictly lower: {strict}", nash_summary("integral", &rep)));

    let m = model(0.0, 0.5, 0.05, 1.75)?;
    let s = floor_solve(&m).map_err(err)?;
    let rep = nash_check(&m, &s, &cfg(&m, 92), 1.0, 1.0).map_err(err)?;
    ok &= rep.pass();
    parts.push(nash_summary("floor two-sided", &rep));

    let m = model(0.6, 0.2, 0.6, 0.25)?;
    let put = Payoff::custom("put", |z: f64| (2.0 - z).max(0.0));
    let s = upper_boundary_solve(&m, &put).map_err(err)?;
    let rep = nash_check(&m, &s, &cfg(&m, 93), 1.0, 2.0).map_err(err)?;
    ok &= rep.pass();
    parts.push(nash_summary("put upper boundary", &rep));

    Ok((ok, parts.join("; ")))
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Largest second divided difference deficit, relative to the local values.
fn convexity_violation(z: &[f64], h: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for i in 1..z.len() - 1 {
        let s0 = (h[i] - h[i - 1]) / (z[i] - z[i - 1]);
        let s1 = (h[i + 1] - h[i]) / (z[i + 1] - z[i]);
        let scale = s0.abs().max(s1.abs()).max(f64::MIN_POSITIVE);
        worst = worst.max((s0 - s1) / scale);
    }
    worst
}

#[derive(Debug, Default, Clone, Copy)]
struct Structure {
    ode: f64,
    wronskian: f64,
    pasting: f64,
    convexity: f64,
    convex_pairs: usize,
}

impl Structure {
    fn max(self, o: Structure) -> Structure {
        Structure {
            ode: self.ode.max(o.ode),
            wronskian: self.wronskian.max(o.wronskian),
            pasting: self.pasting.max(o.pasting),
            convexity: self.convexity.max(o.convexity),
            convex_pairs: self.convex_pairs + o.convex_pairs,
        }
    }
}

/// ODE residual with h'' from a fourth-order difference of the analytic h'.
/// The step shrinks with w = 2/(σ²z), the scale on which Q varies.
fn ode_check(f: &FundamentalPair, z: f64, d1: &dyn Fn(f64) -> Result<f64, String>, h: f64) -> Result<f64, String> {
    let e = 1e-3 * z / (1.0 + f.w(z));
    let h2 = (-d1(z + 2.0 * e)? + 8.0 * d1(z + e)? - 8.0 * d1(z - e)? + d1(z - 2.0 * e)?) / (12.0 * e);
    let h1 = d1(z)?;
    let s2 = f.model().sigma.powi(2);
    let terms = [0.5 * s2 * z * z * h2, (1.0 - f.delta() * z) * h1, f.rho() * h];
    let scale = terms.iter().map(|t| t.abs()).fold(0.0, f64::max);
    Ok(f.ode_residual(z, h, h1, h2).abs() / scale)
}

fn structure_for(m: &ModelParams) -> Result<Structure, String> {
    let mut out = Structure::default();
    let zbar = integral_boundary(m).map_err(err)?;
    // Q grows like e^w with w = 2/(σ²z); keep w ≤ 500 so it stays finite
    let z_lo = (1e-2 * zbar).max(2.0 / (m.sigma * m.sigma * 500.0));
    let zs = log_grid(z_lo, 5.0 * zbar, 60);
    for sign in [DriftSign::PlusKappa, DriftSign::MinusKappa] {
        let f = FundamentalPair::new(m, sign).map_err(err)?;
        let b = f.wronskian_b();
        let (mut p, mut q) = (Vec::new(), Vec::new());
        for &z in &zs {
            let pv = f.eval_p(z, 0).map_err(err)?;
            let qv = f.eval_q(z, 0).map_err(err)?;
            p.push(pv);
            q.push(qv);
            out.ode = out.ode.max(ode_check(&f, z, &|x| f.eval_p(x, 1).map_err(err), pv)?);
            out.ode = out.ode.max(ode_check(&f, z, &|x| f.eval_q(x, 1).map_err(err), qv)?);
            let w = f.scaled_wronskian(z).map_err(err)?;
            out.wronskian = out.wronskian.max((w / b - 1.0).abs());
        }
        // convexity of P and Q needs a positive regime discount
        if f.rho() > 0.0 {
            out.convexity = out.convexity.max(convexity_violation(&zs, &p)).max(convexity_violation(&zs, &q));
            out.convex_pairs += 1;
        }
    }
    for rf in [Reference::Zero, Reference::Finite(0.2 * zbar), Reference::Finite(0.5 * zbar), Reference::Infinity] {
        let u = ExcessiveFunction::build(m, rf).map_err(err)?;
        if let Some(hz) = u.hat_z() {
            let lo = u.eval_branch(hz, Branch::Lower).map_err(err)?;
            let hi = u.eval_branch(hz, Branch::Upper).map_err(err)?;
            for k in 0..3 {
                let scale = lo[k].abs().max(hi[k].abs()).max(f64::MIN_POSITIVE);
                out.pasting = out.pasting.max((lo[k] - hi[k]).abs() / scale);
            }
        }
        let vals = zs.iter().map(|&z| u.eval_u(z, 0).map_err(err)).collect::<Result<Vec<_>, _>>()?;
        out.convexity = out.convexity.max(convexity_violation(&zs, &vals));
    }
    Ok(out)
}

fn c10_structure() -> Result<(bool, String), String> {
    let models = random_models(10, 24);
    let worst = models
        .par_iter()
        .map(structure_for)
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(Structure::default(), Structure::max);
    let ok = worst.ode < 1e-8 && worst.wronskian < 1e-9 && worst.pasting < 1e-6 && worst.convexity <= 1e-9;
    Ok((
        ok,
        format!(
            "24 models: ODE residual {:.1e} (< 1e-8), Wronskian drift {:.1e} (< 1e-9), \
             C2 pasting {:.1e} (< 1e-6), convexity deficit {:.1e} (<= 1e-9) over 96 U_c and \
             {} P/Q pairs with r - delta > 0",
            worst.ode, worst.wronskian, worst.pasting, worst.convexity, worst.convex_pairs
        ),
    ))
}
