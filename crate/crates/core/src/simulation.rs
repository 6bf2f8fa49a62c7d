//! Monte Carlo simulation of (X, Z) under a density generator θ:
//!
//! d ln X = (μ − σθ − ½σ²) dt + σ dW,
//! dZ     = (1 − (μ − σ² − σθ) Z) dt − σ Z dW.
//!
//! ln X is advanced exactly for θ frozen over the step, Z by an explicit Euler
//! step driven by the same increment. Every path owns a ChaCha stream keyed by
//! (seed, path index), and policy variants simulated together share the draws.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::excessive::{ExcessiveFunction, Reference};
use crate::model::{ModelParams, Payoff};
use crate::solvers::{generator_at, Regime, StoppingSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Explicit Euler step of the Z equation.
    EulerLogXEulerZ,
    /// Z advanced as Y/X with Y accumulated by the trapezoid rule:
    /// Z' = (Z + dt/2) X/X' + dt/2. This solves the linear Z equation exactly
    /// up to the quadrature of ∫X, removing the O(dt) drift error Euler makes
    /// when |μ − σ² − σθ| is large.
    #[default]
    LogXTrapezoidY,
}

impl Scheme {
    /// Next Z given the current Z, the Euler drift and the log growth of X.
    #[inline(always)]
    fn step_z(self, z: f64, drift: f64, dt: f64, sigma_dw: f64, dlnx: f64) -> f64 {
        match self {
            Scheme::EulerLogXEulerZ => (z + drift * dt - z * sigma_dw).max(0.0),
            Scheme::LogXTrapezoidY => (z + 0.5 * dt) * (-dlnx).exp() + 0.5 * dt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    pub scheme: Scheme,
    /// Brownian-bridge exit test between grid points. Without it exits are
    /// only seen on the grid, a downward O(√dt) bias in stopped values.
    pub bridge_exit: bool,
}

impl SimConfig {
    /// Horizon 40/r.
    pub fn for_model(model: &ModelParams, n_paths: usize, dt: f64, seed: u64) -> Self {
        Self { n_paths, dt, t_max: 40.0 / model.r, seed, scheme: Scheme::default(), bridge_exit: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max >= 100.0 * self.dt) || !self.t_max.is_finite() {
            return Err(Error::InvalidConfig(format!("t_max must be at least 100 dt, got {}", self.t_max)));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidConfig("n_paths must be at least 1".into()));
        }
        Ok(())
    }

    fn n_steps(&self) -> usize {
        (self.t_max / self.dt).ceil() as usize
    }
}

#[derive(Clone)]
pub enum Generator {
    /// κ sgn(ẑ − z) with the switch point of the solution or excessive
    /// function at hand (θ ≡ κ when there is none).
    WorstCase,
    ConstantPlusKappa,
    ConstantMinusKappa,
    /// θ as a function of z; values outside [−κ, κ] are rejected.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Generator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Generator::WorstCase => write!(f, "WorstCase"),
            Generator::ConstantPlusKappa => write!(f, "ConstantPlusKappa"),
            Generator::ConstantMinusKappa => write!(f, "ConstantMinusKappa"),
            Generator::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub n_stopped: usize,
    /// e^{−r t_max} (unstopped fraction) max over unstopped paths of X_T ĥ,
    /// with ĥ the largest value ratio on the continuation band.
    pub truncation_bias_bound: f64,
}

#[derive(Clone, Copy)]
enum Rule<'a> {
    Switch { kappa: f64, at: Option<f64> },
    Constant(f64),
    Custom(&'a (dyn Fn(f64) -> f64 + Send + Sync), f64),
}

impl Rule<'_> {
    #[inline]
    fn theta(&self, z: f64) -> Result<f64> {
        match *self {
            Rule::Switch { kappa, at } => Ok(generator_at(kappa, at, z)),
            Rule::Constant(t) => Ok(t),
            Rule::Custom(f, kappa) => {
                let t = f(z);
                if !(t.abs() <= kappa * (1.0 + 1e-12)) {
                    return Err(Error::InvalidConfig(format!("custom generator {t} outside [-{kappa}, {kappa}] at z = {z}")));
                }
                Ok(t)
            }
        }
    }
}

impl Generator {
    fn rule(&self, kappa: f64, switch: Option<f64>) -> Rule<'_> {
        match self {
            Generator::WorstCase => Rule::Switch { kappa, at: switch },
            Generator::ConstantPlusKappa => Rule::Constant(kappa),
            Generator::ConstantMinusKappa => Rule::Constant(-kappa),
            Generator::Custom(f) => Rule::Custom(f.as_ref(), kappa),
        }
    }
}

/// A stopping band and generator simulated on shared draws. Stopping happens
/// when Z ≥ hi or, for lo > 0, Z ≤ lo.
#[derive(Clone, Copy)]
struct Variant<'a> {
    rule: Rule<'a>,
    lo: f64,
    hi: f64,
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    /// e^{−rτ} X_τ g(Z_τ) if stopped by t_max, else 0.
    discounted: f64,
    stopped: bool,
    /// ln X and Z at t_max for unstopped paths.
    ln_x: f64,
    z: f64,
}

fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

fn check_initial(x0: f64, y0: f64) -> Result<()> {
    if !(x0 > 0.0) || !(y0 >= 0.0) || !x0.is_finite() || !y0.is_finite() {
        return Err(Error::InvalidInitialState { x0, y0 });
    }
    Ok(())
}

struct State {
    ln_x: f64,
    z: f64,
    alive: bool,
    /// −∞ when there is no lower edge
    lo: f64,
    hi: f64,
}

struct StepCount {
    flagged: u64,
    total: u64,
}

fn simulate_path(
    model: &ModelParams,
    payoff: &Payoff,
    variants: &[Variant],
    cfg: &SimConfig,
    path: u64,
    x0: f64,
    z0: f64,
) -> Result<(Vec<Outcome>, StepCount)> {
    let r = model.r;
    let dt = cfg.dt;
    let sdt = dt.sqrt();
    let n_steps = cfg.n_steps();
    let mut rng = path_rng(cfg.seed, path);
    let mut st: Vec<State> = variants
        .iter()
        .map(|v| State { ln_x: x0.ln(), z: z0, alive: true, lo: if v.lo > 0.0 { v.lo } else { f64::NEG_INFINITY }, hi: v.hi })
        .collect();
    let mut out = vec![Outcome { discounted: 0.0, stopped: false, ln_x: 0.0, z: 0.0 }; variants.len()];
    let mut n_alive = variants.len();
    let mut count = StepCount { flagged: 0, total: 0 };
    let mut buf = [(0.0f64, 0.0f64); 64];
    let mut step = 0;
    while n_alive > 0 && step < n_steps {
        // draws come in blocks; unused ones at the end of a path are discarded
        for b in buf.iter_mut() {
            *b = (sdt * rng.sample::<f64, _>(StandardNormal), rng.random::<f64>());
        }
        let block_end = (step + buf.len()).min(n_steps);
        for (j, s) in st.iter_mut().enumerate() {
            if !s.alive {
                continue;
            }
            let block = &buf[..block_end - step];
            let stop = match variants[j].rule {
                Rule::Switch { kappa, at } => {
                    let at = at.unwrap_or(f64::INFINITY);
                    advance(model, s, block, dt, cfg.scheme, cfg.bridge_exit, &mut count, |z| Ok(if kappa != 0.0 && z > at { -kappa } else { kappa }))?
                }
                Rule::Constant(t) => advance(model, s, block, dt, cfg.scheme, cfg.bridge_exit, &mut count, |_| Ok(t))?,
                rule @ Rule::Custom(..) => advance(model, s, block, dt, cfg.scheme, cfg.bridge_exit, &mut count, |z| rule.theta(z))?,
            };
            if let Some((i, f, lx, e)) = stop {
                let tau = (step + i) as f64 * dt + f * dt;
                out[j] = Outcome { discounted: (lx - r * tau).exp() * payoff.profile(e), stopped: true, ln_x: lx, z: e };
                n_alive -= 1;
            }
        }
        step = block_end;
    }
    for (j, s) in st.iter().enumerate() {
        if s.alive {
            out[j] = Outcome { discounted: 0.0, stopped: false, ln_x: s.ln_x, z: s.z };
        }
    }
    Ok((out, count))
}

/// Advance one state through a block of (Brownian increment, uniform) pairs.
/// Returns the step offset, the crossing fraction, ln X and the edge when it
/// stops.
///
/// Besides the grid crossing, a step that ends inside the band is stopped
/// with the Brownian-bridge probability exp(−2 ln(h/z₀) ln(h/z₁)/(σ²dt)) of
/// ln Z having touched the edge h in between; the crossing is then placed at
/// mid-step.
#[inline(always)]
fn advance<F: Fn(f64) -> Result<f64>>(
    model: &ModelParams,
    s: &mut State,
    block: &[(f64, f64)],
    dt: f64,
    scheme: Scheme,
    bridge: bool,
    count: &mut StepCount,
    theta_of: F,
) -> Result<Option<(usize, f64, f64, f64)>> {
    let (mu, sigma) = (model.mu, model.sigma);
    let s2 = sigma * sigma;
    let near = (4.0 * sigma * dt.sqrt()).exp();
    let (hi_near, lo_near) = (s.hi / near, s.lo * near);
    let (mut ln_x, mut z) = (s.ln_x, s.z);
    for (i, &(dw, u)) in block.iter().enumerate() {
        let theta = theta_of(z)?;
        let drift = 1.0 - (mu - s2 - sigma * theta) * z;
        count.flagged += (dt * drift.abs() > 0.5 * z) as u64;
        let ln_new = ln_x + (mu - sigma * theta - 0.5 * s2) * dt + sigma * dw;
        let z_new = scheme.step_z(z, drift, dt, sigma * dw, ln_new - ln_x);
        let hit = if z_new >= s.hi || z_new <= s.lo {
            let e = if z_new >= s.hi { s.hi } else { s.lo };
            Some((((e - z) / (z_new - z)).clamp(0.0, 1.0), e))
        } else if bridge && (z.max(z_new) > hi_near || z.min(z_new) < lo_near) {
            let p_hi = (-2.0 * (s.hi / z).ln() * (s.hi / z_new).ln() / (s2 * dt)).exp();
            let p_lo = if s.lo > 0.0 { (-2.0 * (z / s.lo).ln() * (z_new / s.lo).ln() / (s2 * dt)).exp() } else { 0.0 };
            if u < p_hi {
                Some((0.5, s.hi))
            } else if u < p_hi + p_lo {
                Some((0.5, s.lo))
            } else {
                None
            }
        } else {
            None
        };
        if let Some((f, e)) = hit {
            s.alive = false;
            count.total += i as u64 + 1;
            // Y = XZ has finite variation, so interpolate ln Y and put X on the
            // edge; interpolating X itself ignores that X and Z move oppositely
            let lx = if z > 0.0 && z_new > 0.0 {
                let (ly0, ly1) = (ln_x + z.ln(), ln_new + z_new.ln());
                ly0 + f * (ly1 - ly0) - e.ln()
            } else {
                ln_x + f * (ln_new - ln_x)
            };
            return Ok(Some((i, f, lx, e)));
        }
        ln_x = ln_new;
        z = z_new;
    }
    count.total += block.len() as u64;
    s.ln_x = ln_x;
    s.z = z;
    Ok(None)
}

/// Runs all paths in parallel; results come back in path-index order.
fn run_paths(
    model: &ModelParams,
    payoff: &Payoff,
    variants: &[Variant],
    cfg: &SimConfig,
    x0: f64,
    z0: f64,
) -> Result<Vec<Vec<Outcome>>> {
    let results: Vec<(Vec<Outcome>, StepCount)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|p| simulate_path(model, payoff, variants, cfg, p, x0, z0))
        .collect::<Result<_>>()?;
    let (flagged, total) = results.iter().fold((0u64, 0u64), |a, (_, c)| (a.0 + c.flagged, a.1 + c.total));
    if total > 0 && flagged as f64 > 1e-3 * total as f64 {
        return Err(Error::StepTooLarge { flagged, total });
    }
    Ok(results.into_iter().map(|(o, _)| o).collect())
}

fn mean_se(samples: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    // Welford, in path order
    let mut n = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for s in samples {
        n += 1;
        let d = s - mean;
        mean += d / n as f64;
        m2 += d * (s - mean);
    }
    let se = if n > 1 { (m2 / (n - 1) as f64 / n as f64).sqrt() } else { 0.0 };
    (mean, se, n)
}

/// Largest value ratio on the continuation band; attained at a finite edge.
fn band_value_cap(solution: &StoppingSolution) -> f64 {
    let (lo, hi) = solution.continuation_band();
    let g = |z: f64| solution.payoff().profile(z);
    match solution.regime() {
        Regime::LowerBoundary => g(hi),
        Regime::UpperBoundary => g(lo),
        Regime::TwoSided => g(lo).max(g(hi)),
    }
}

fn estimate(
    solution: &StoppingSolution,
    cfg: &SimConfig,
    outcomes: &[Vec<Outcome>],
    j: usize,
) -> McEstimate {
    let (mean, std_error, n) = mean_se(outcomes.iter().map(|o| o[j].discounted));
    let n_stopped = outcomes.iter().filter(|o| o[j].stopped).count();
    let max_x = outcomes
        .iter()
        .filter(|o| !o[j].stopped)
        .map(|o| o[j].ln_x)
        .fold(f64::NEG_INFINITY, f64::max);
    let truncation_bias_bound = if n_stopped == n {
        0.0
    } else {
        let frac = (n - n_stopped) as f64 / n as f64;
        frac * (max_x - solution.model().r * cfg.t_max).exp() * band_value_cap(solution)
    };
    McEstimate { mean, std_error, n_paths: n, n_stopped, truncation_bias_bound }
}

fn band(solution: &StoppingSolution) -> (f64, f64) {
    let (lo, hi) = solution.continuation_band();
    match solution.regime() {
        Regime::LowerBoundary => (0.0, hi),
        _ => (lo, hi),
    }
}

/// Estimate E^θ[e^{−rτ*} F(X_τ*, Y_τ*) 1{τ* ≤ t_max}] for the exit time τ* of Z
/// from the continuation band of `solution`.
pub fn simulate_value(
    model: &ModelParams,
    solution: &StoppingSolution,
    generator: &Generator,
    config: &SimConfig,
    x0: f64,
    y0: f64,
) -> Result<McEstimate> {
    check_initial(x0, y0)?;
    config.validate()?;
    if model != solution.model() {
        return Err(Error::MismatchedModel);
    }
    let z0 = y0 / x0;
    if !solution.in_continuation(z0) {
        return Ok(McEstimate {
            mean: solution.payoff().evaluate(x0, y0),
            std_error: 0.0,
            n_paths: config.n_paths,
            n_stopped: config.n_paths,
            truncation_bias_bound: 0.0,
        });
    }
    let (lo, hi) = band(solution);
    let v = Variant { rule: generator.rule(model.kappa, solution.switch_point()), lo, hi };
    let out = run_paths(model, solution.payoff(), &[v], config, x0, z0)?;
    Ok(estimate(solution, config, &out, 0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub t: f64,
    pub mean: f64,
    pub std_error: f64,
    /// Matching generator: |mean − M_0| ≤ 3 SE. Otherwise: mean ≥ M_0 − 3 SE.
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport {
    pub m0: f64,
    /// Whether the generator is the one that makes M a martingale.
    pub matching: bool,
    pub checkpoints: Vec<Checkpoint>,
}

impl MartingaleReport {
    pub fn pass(&self) -> bool {
        self.checkpoints.iter().all(|c| c.pass)
    }

    /// The last checkpoint lies more than 3 SE above M_0.
    pub fn drifts_up(&self) -> bool {
        self.checkpoints.last().is_some_and(|c| c.mean - self.m0 > 3.0 * c.std_error)
    }
}

fn is_matching(generator: &Generator, kappa: f64, switch: Option<f64>) -> bool {
    if kappa == 0.0 {
        return !matches!(generator, Generator::Custom(_));
    }
    match generator {
        Generator::WorstCase => true,
        Generator::ConstantPlusKappa => switch.is_none(),
        _ => false,
    }
}

/// Sample means of M_t = e^{−rt} X_t U_c(Z_t) at the checkpoints, without
/// stopping.
pub fn martingale_check(
    model: &ModelParams,
    reference: Reference,
    generator: &Generator,
    config: &SimConfig,
    x0: f64,
    y0: f64,
    checkpoints: &[f64],
) -> Result<MartingaleReport> {
    check_initial(x0, y0)?;
    config.validate()?;
    if checkpoints.is_empty() {
        return Err(Error::InvalidConfig("no checkpoints".into()));
    }
    let mut cps = checkpoints.to_vec();
    cps.sort_by(f64::total_cmp);
    if cps[0] <= 0.0 || *cps.last().unwrap() > config.t_max {
        return Err(Error::InvalidConfig(format!("checkpoints must lie in (0, t_max = {}]", config.t_max)));
    }
    let u = ExcessiveFunction::build(model, reference)?;
    let z0 = y0 / x0;
    let m0 = x0 * u.eval_u(z0, 0)?;
    let rule = generator.rule(model.kappa, u.hat_z());
    let steps: Vec<usize> = cps.iter().map(|t| ((t / config.dt).round() as usize).max(1)).collect();
    let (mu, sigma) = (model.mu, model.sigma);
    let s2 = sigma * sigma;
    let dt = config.dt;
    let sdt = dt.sqrt();
    let last = *steps.last().unwrap();
    let states: Vec<(Vec<(f64, f64)>, StepCount)> = (0..config.n_paths as u64)
        .into_par_iter()
        .map(|p| -> Result<_> {
            let mut rng = path_rng(config.seed, p);
            let mut ln_x = x0.ln();
            let mut z = z0;
            let mut rec = Vec::with_capacity(steps.len());
            let mut next = 0;
            let mut count = StepCount { flagged: 0, total: 0 };
            for step in 1..=last {
                let xi: f64 = rng.sample(StandardNormal);
                let dw = sdt * xi;
                let theta = rule.theta(z)?;
                let drift = 1.0 - (mu - s2 - sigma * theta) * z;
                count.total += 1;
                if dt * drift.abs() > 0.5 * z {
                    count.flagged += 1;
                }
                let dlnx = (mu - sigma * theta - 0.5 * s2) * dt + sigma * dw;
                ln_x += dlnx;
                z = config.scheme.step_z(z, drift, dt, sigma * dw, dlnx);
                while next < steps.len() && steps[next] == step {
                    rec.push((ln_x, z));
                    next += 1;
                }
            }
            Ok((rec, count))
        })
        .collect::<Result<_>>()?;
    let (flagged, total) = states.iter().fold((0u64, 0u64), |a, (_, c)| (a.0 + c.flagged, a.1 + c.total));
    if flagged as f64 > 1e-3 * total as f64 {
        return Err(Error::StepTooLarge { flagged, total });
    }
    let matching = is_matching(generator, model.kappa, u.hat_z());
    let (z_lo, z_hi) = states
        .iter()
        .flat_map(|(rec, _)| rec.iter().map(|&(_, z)| z))
        .fold((f64::INFINITY, 0.0f64), |(a, b), z| (a.min(z), b.max(z)));
    if !(z_lo > 0.0) {
        return Err(Error::DomainError { what: "martingale_check: Z reached 0", value: z_lo });
    }
    let table = HermiteTable::build(&u, z_lo, z_hi)?;
    let mut out = Vec::with_capacity(cps.len());
    for (k, &step) in steps.iter().enumerate() {
        let t = step as f64 * dt;
        let vals = states.iter().map(|(rec, _)| {
            let (lx, z) = rec[k];
            (lx - model.r * t).exp() * table.eval(z)
        });
        let (mean, std_error, _) = mean_se(vals);
        let pass = if matching {
            (mean - m0).abs() <= 3.0 * std_error
        } else {
            mean >= m0 - 3.0 * std_error
        };
        out.push(Checkpoint { t, mean, std_error, pass });
    }
    Ok(MartingaleReport { m0, matching, checkpoints: out })
}

/// Cubic Hermite interpolation of ln U_c in ln z.
struct HermiteTable {
    lo: f64,
    step: f64,
    v: Vec<f64>,
    d: Vec<f64>,
}

impl HermiteTable {
    const NODES: usize = 4096;

    fn build(u: &ExcessiveFunction, z_lo: f64, z_hi: f64) -> Result<Self> {
        let lo = z_lo.ln();
        let hi = z_hi.ln().max(lo + 1e-9);
        let step = (hi - lo) / (Self::NODES - 1) as f64;
        let mut v = Vec::with_capacity(Self::NODES);
        let mut d = Vec::with_capacity(Self::NODES);
        for i in 0..Self::NODES {
            let z = (lo + step * i as f64).exp();
            let [u0, u1, _] = u.eval_all(z)?;
            v.push(u0.ln());
            d.push(z * u1 / u0);
        }
        Ok(Self { lo, step, v, d })
    }

    fn eval(&self, z: f64) -> f64 {
        let t = ((z.ln() - self.lo) / self.step).clamp(0.0, (Self::NODES - 1) as f64);
        let i = (t as usize).min(Self::NODES - 2);
        let s = t - i as f64;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        (h00 * self.v[i] + h10 * self.step * self.d[i] + h01 * self.v[i + 1] + h11 * self.step * self.d[i + 1]).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub label: String,
    pub estimate: f64,
    /// Paired difference estimate − equilibrium (or − analytic V).
    pub difference: f64,
    pub joint_std_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashReport {
    pub analytic_value: f64,
    pub equilibrium: McEstimate,
    /// Mean of the completion term e^{−r t_max} V(X_T, Y_T) in the
    /// equilibrium estimate.
    pub equilibrium_completion: f64,
    pub comparisons: Vec<Comparison>,
    /// Set when the check was not run.
    pub skipped: Option<String>,
}

impl NashReport {
    pub fn pass(&self) -> bool {
        self.skipped.is_none() && self.comparisons.iter().all(|c| c.pass)
    }
}

/// Nash-equilibrium checks with the exit band perturbed by ±10%.
pub fn nash_check(
    model: &ModelParams,
    solution: &StoppingSolution,
    config: &SimConfig,
    x0: f64,
    y0: f64,
) -> Result<NashReport> {
    nash_check_with(model, solution, config, x0, y0, 0.1)
}

/// As [`nash_check`] with a relative band perturbation `eps`.
///
/// Paths still running at t_max are completed with e^{−r t_max} V(X_T, Y_T),
/// which keeps every inequality exact in expectation: e^{−rt}V is a
/// martingale under the worst case up to τ*, a submartingale under other
/// generators and a supermartingale under the worst case after a deviation
/// in the stopping rule.
pub fn nash_check_with(
    model: &ModelParams,
    solution: &StoppingSolution,
    config: &SimConfig,
    x0: f64,
    y0: f64,
    eps: f64,
) -> Result<NashReport> {
    check_initial(x0, y0)?;
    config.validate()?;
    if model != solution.model() {
        return Err(Error::MismatchedModel);
    }
    let z0 = y0 / x0;
    if !solution.in_continuation(z0) {
        return Err(Error::StartInStopRegion(z0));
    }
    if !(eps >= 0.0 && eps < 1.0) {
        return Err(Error::InvalidConfig(format!("band perturbation must lie in [0, 1), got {eps}")));
    }
    let analytic_value = x0 * solution.value_ratio(z0)?;
    let empty = |reason: String| NashReport {
        analytic_value,
        equilibrium: McEstimate { mean: f64::NAN, std_error: f64::NAN, n_paths: 0, n_stopped: 0, truncation_bias_bound: f64::NAN },
        equilibrium_completion: f64::NAN,
        comparisons: Vec::new(),
        skipped: Some(reason),
    };
    if solution.regime() == Regime::UpperBoundary && !model.upper_boundary_admissible() {
        return Ok(empty(format!(
            "upper-boundary regime needs 2mu > 2kappa*sigma - sigma^2 for a finite exit time ({model})"
        )));
    }
    let (lo, hi) = band(solution);
    let kappa = model.kappa;
    let worst = Generator::WorstCase.rule(kappa, solution.switch_point());
    let (shrunk, expanded) = match solution.regime() {
        Regime::LowerBoundary => ((0.0, hi * (1.0 - eps)), (0.0, hi * (1.0 + eps))),
        Regime::UpperBoundary => ((lo * (1.0 + eps), hi), (lo * (1.0 - eps), hi)),
        Regime::TwoSided => ((lo * (1.0 + eps), hi * (1.0 - eps)), (lo * (1.0 - eps), hi * (1.0 + eps))),
    };
    if !(shrunk.0 < z0 && z0 < shrunk.1) && !(solution.regime() == Regime::LowerBoundary && z0 < shrunk.1) {
        return Err(Error::InvalidConfig(format!("start z = {z0} lies outside the shrunk band")));
    }
    let variants = [
        Variant { rule: worst, lo, hi },
        Variant { rule: Rule::Constant(kappa), lo, hi },
        Variant { rule: Rule::Constant(-kappa), lo, hi },
        Variant { rule: worst, lo: shrunk.0, hi: shrunk.1 },
        Variant { rule: worst, lo: expanded.0, hi: expanded.1 },
    ];
    let out = run_paths(model, solution.payoff(), &variants, config, x0, z0)?;
    let disc_t = (-model.r * config.t_max).exp();
    // completed samples per path and variant
    let completed: Vec<[f64; 5]> = out
        .iter()
        .map(|o| -> Result<[f64; 5]> {
            let mut s = [0.0; 5];
            for j in 0..5 {
                s[j] = if o[j].stopped {
                    o[j].discounted
                } else {
                    disc_t * o[j].ln_x.exp() * solution.value_ratio(o[j].z)?
                };
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let mut equilibrium = estimate(solution, config, &out, 0);
    let (eq_mean, eq_se, _) = mean_se(completed.iter().map(|s| s[0]));
    let equilibrium_completion = eq_mean - equilibrium.mean;
    equilibrium.mean = eq_mean;
    equilibrium.std_error = eq_se;
    let mut comparisons = Vec::new();
    let labels = [
        (1, "generator +kappa at tau*", true),
        (2, "generator -kappa at tau*", true),
        (3, "band shrunk under worst case", false),
        (4, "band expanded under worst case", false),
    ];
    for (j, label, nature_deviates) in labels {
        let (est, _, _) = mean_se(completed.iter().map(|s| s[j]));
        let (d, se, _) = mean_se(completed.iter().map(|s| s[j] - s[0]));
        let pass = if nature_deviates { d >= -3.0 * se } else { d <= 3.0 * se };
        comparisons.push(Comparison { label: label.into(), estimate: est, difference: d, joint_std_error: se, pass });
    }
    let d = eq_mean - analytic_value;
    comparisons.push(Comparison {
        label: "equilibrium vs analytic value".into(),
        estimate: eq_mean,
        difference: d,
        joint_std_error: eq_se,
        pass: d.abs() <= 3.0 * eq_se,
    });
    Ok(NashReport { analytic_value, equilibrium, equilibrium_completion, comparisons, skipped: None })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathTrace {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    /// Trapezoidal ∫X dt added to y0.
    pub y: Vec<f64>,
    /// Z from its own recursion under the configured scheme.
    pub z: Vec<f64>,
}

/// One path without stopping, for diagnostics. `switch` is the level used by
/// `Generator::WorstCase`.
pub fn trace_path(
    model: &ModelParams,
    generator: &Generator,
    switch: Option<f64>,
    config: &SimConfig,
    x0: f64,
    y0: f64,
    path_index: u64,
) -> Result<PathTrace> {
    check_initial(x0, y0)?;
    config.validate()?;
    let rule = generator.rule(model.kappa, switch);
    let (mu, sigma) = (model.mu, model.sigma);
    let s2 = sigma * sigma;
    let dt = config.dt;
    let sdt = dt.sqrt();
    let n = config.n_steps();
    let mut rng = path_rng(config.seed, path_index);
    let mut tr = PathTrace {
        t: Vec::with_capacity(n + 1),
        x: Vec::with_capacity(n + 1),
        y: Vec::with_capacity(n + 1),
        z: Vec::with_capacity(n + 1),
    };
    let (mut x, mut y, mut z) = (x0, y0, y0 / x0);
    tr.t.push(0.0);
    tr.x.push(x);
    tr.y.push(y);
    tr.z.push(z);
    for step in 1..=n {
        let xi: f64 = rng.sample(StandardNormal);
        let dw = sdt * xi;
        let theta = rule.theta(z)?;
        let dlnx = (mu - sigma * theta - 0.5 * s2) * dt + sigma * dw;
        let x_new = x * dlnx.exp();
        y += 0.5 * (x + x_new) * dt;
        let drift = 1.0 - (mu - s2 - sigma * theta) * z;
        z = config.scheme.step_z(z, drift, dt, sigma * dw, dlnx);
        x = x_new;
        tr.t.push(step as f64 * dt);
        tr.x.push(x);
        tr.y.push(y);
        tr.z.push(z);
    }
    Ok(tr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{floor_solve, integral_solve};

    fn cfg(n_paths: usize, dt: f64, t_max: f64) -> SimConfig {
        SimConfig { n_paths, dt, t_max, seed: 7, scheme: Scheme::default(), bridge_exit: true }
    }

    #[test]
    fn config_validation() {
        assert!(cfg(10, 1e-2, 0.5).validate().is_err());
        assert!(cfg(0, 1e-2, 5.0).validate().is_err());
        assert!(cfg(10, 0.0, 5.0).validate().is_err());
        assert!(cfg(10, 1e-2, 1.0).validate().is_ok());
    }

    #[test]
    fn start_in_stop_region_is_immediate() {
        let m = ModelParams::new(0.0, 0.5, 0.05, 0.5).unwrap();
        let s = integral_solve(&m).unwrap();
        let e = simulate_value(&m, &s, &Generator::WorstCase, &cfg(100, 1e-2, 5.0), 1.0, 40.0).unwrap();
        assert_eq!(e.mean, 40.0);
        assert_eq!(e.std_error, 0.0);
        assert!(matches!(
            nash_check(&m, &s, &cfg(10, 1e-2, 5.0), 1.0, 40.0),
            Err(Error::StartInStopRegion(_))
        ));
        assert!(simulate_value(&m, &s, &Generator::WorstCase, &cfg(10, 1e-2, 5.0), 0.0, 1.0).is_err());
    }

    #[test]
    fn reproducible_for_any_worker_count() {
        let m = ModelParams::new(0.0, 0.5, 0.05, 0.5).unwrap();
        let s = integral_solve(&m).unwrap();
        let c = cfg(400, 1e-2, 40.0);
        let a = simulate_value(&m, &s, &Generator::WorstCase, &c, 1.0, 5.0).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| simulate_value(&m, &s, &Generator::WorstCase, &c, 1.0, 5.0).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn zero_perturbation_is_path_identical() {
        let m = ModelParams::new(0.0, 0.5, 0.05, 1.75).unwrap();
        let s = floor_solve(&m).unwrap();
        let r = nash_check_with(&m, &s, &cfg(200, 1e-2, 20.0), 1.0, 1.0, 0.0).unwrap();
        for c in &r.comparisons[2..4] {
            assert_eq!(c.difference, 0.0);
            assert_eq!(c.joint_std_error, 0.0);
        }
    }

    #[test]
    fn custom_generator_outside_bounds_is_rejected() {
        let m = ModelParams::new(0.0, 0.5, 0.05, 0.5).unwrap();
        let s = integral_solve(&m).unwrap();
        let g = Generator::Custom(Arc::new(|_| 0.9));
        assert!(matches!(
            simulate_value(&m, &s, &g, &cfg(4, 1e-2, 5.0), 1.0, 1.0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn coarse_steps_are_flagged() {
        let m = ModelParams::new(0.0, 0.5, 0.05, 0.5).unwrap();
        let s = integral_solve(&m).unwrap();
        let r = simulate_value(&m, &s, &Generator::WorstCase, &cfg(50, 0.5, 50.0), 1.0, 0.01);
        assert!(matches!(r, Err(Error::StepTooLarge { .. })), "{r:?}");
    }
}
