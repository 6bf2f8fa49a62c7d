//! Optimal boundaries, value functions and worst-case generators.

use crate::error::{Error, Result};
use crate::excessive::{floor_gap, integral_root, ExcessiveFunction, Reference};
use crate::fundamental::FundamentalPair;
use crate::model::{DriftSign, ModelParams, Payoff, PayoffKind};
use crate::quad::integrate;
use crate::roots::{brent, expand_geometric};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Continue below z*, stop above.
    LowerBoundary,
    /// Stop below z*, continue above.
    UpperBoundary,
    /// Continue on (z1*, z2*), stop outside.
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundaries {
    Lower { z_star: f64 },
    Upper { z_star: f64 },
    TwoSided { z1: f64, z2: f64, c_star: f64 },
}

#[derive(Debug, Clone)]
pub struct StoppingSolution {
    model: ModelParams,
    payoff: Payoff,
    regime: Regime,
    boundaries: Boundaries,
    excessive: ExcessiveFunction,
    pi_star: f64,
}

impl StoppingSolution {
    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    pub fn payoff(&self) -> &Payoff {
        &self.payoff
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn boundaries(&self) -> Boundaries {
        self.boundaries
    }

    pub fn excessive(&self) -> &ExcessiveFunction {
        &self.excessive
    }

    /// Optimal ratio Π(z*) = g(z*)/U(z*).
    pub fn pi_star(&self) -> f64 {
        self.pi_star
    }

    /// Continuation interval (a, b) in z; `b` may be infinite.
    pub fn continuation_band(&self) -> (f64, f64) {
        match self.boundaries {
            Boundaries::Lower { z_star } => (0.0, z_star),
            Boundaries::Upper { z_star } => (z_star, f64::INFINITY),
            Boundaries::TwoSided { z1, z2, .. } => (z1, z2),
        }
    }

    pub fn in_continuation(&self, z: f64) -> bool {
        let (a, b) = self.continuation_band();
        match self.boundaries {
            Boundaries::Lower { .. } => z < b,
            _ => z > a && z < b,
        }
    }

    /// The level at which the worst-case generator flips from +κ to −κ, if any.
    pub fn switch_point(&self) -> Option<f64> {
        self.excessive.hat_z()
    }

    /// h(z) = V(1, z).
    pub fn value_ratio(&self, z: f64) -> Result<f64> {
        if !(z >= 0.0) || !z.is_finite() {
            return Err(Error::DomainError { what: "value", value: z });
        }
        if !self.in_continuation(z) {
            return Ok(self.payoff.profile(z));
        }
        let zz = z.max(1e-280);
        Ok(self.pi_star * self.excessive.eval_u(zz, 0)?)
    }

    /// h'(z); the payoff slope is used on the stopping region.
    pub fn value_ratio_derivative(&self, z: f64) -> Result<f64> {
        if self.in_continuation(z) {
            Ok(self.pi_star * self.excessive.eval_u(z.max(1e-280), 1)?)
        } else {
            let h = 1e-7 * z.max(1e-3);
            Ok((self.payoff.profile(z + h) - self.payoff.profile(z - h).max(0.0)) / (2.0 * h))
        }
    }
}

/// V(x, y) for the given solution.
pub fn value(solution: &StoppingSolution, x: f64, y: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::DomainError { what: "value x", value: x });
    }
    Ok(x * solution.value_ratio(y / x)?)
}

/// Worst-case density generator κ sgn(ẑ − y/x), sgn(0) = +1.
pub fn worst_case_generator(solution: &StoppingSolution, x: f64, y: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::DomainError { what: "worst_case_generator x", value: x });
    }
    Ok(generator_at(solution.model.kappa, solution.switch_point(), y / x))
}

pub(crate) fn generator_at(kappa: f64, switch: Option<f64>, z: f64) -> f64 {
    if kappa == 0.0 {
        return 0.0;
    }
    match switch {
        Some(hz) if z > hz => -kappa,
        _ => kappa,
    }
}

/// z̄_κ, root of P_κ(z) − zP_κ'(z) = 0 above 1/r.
pub fn integral_boundary(model: &ModelParams) -> Result<f64> {
    let plus = FundamentalPair::new(model, DriftSign::PlusKappa)?;
    integral_root(&plus)
}

pub fn integral_solve(model: &ModelParams) -> Result<StoppingSolution> {
    let u0 = ExcessiveFunction::build(model, Reference::Zero)?;
    let zbar = u0.hat_z().expect("U_0 has a switch point");
    let p = u0.eval_u(zbar, 0)?;
    Ok(StoppingSolution {
        model: *model,
        payoff: Payoff::integral(),
        regime: Regime::LowerBoundary,
        boundaries: Boundaries::Lower { z_star: zbar },
        excessive: u0,
        pi_star: zbar / p,
    })
}

fn exchange_root(u0: &ExcessiveFunction, strike: f64) -> Result<f64> {
    let zbar = u0.hat_z().expect("U_0 has a switch point");
    let foc = |z: f64| -> Result<f64> {
        let [u, u1, _] = u0.eval_all(z)?;
        Ok((u - (z - strike) * u1) / u)
    };
    let lo = zbar.max(strike);
    let (a, b, _, _) = expand_geometric(foc, lo, 1.25, 1e12 * lo, "exchange_boundary")?;
    brent(foc, a, b, 1e-15 * b, "exchange_boundary")
}

/// z*_κ for the exchange payoff (y − Kx)^+.
pub fn exchange_boundary(model: &ModelParams, strike: f64) -> Result<f64> {
    if !(strike > 0.0) || !strike.is_finite() {
        return Err(Error::NonPositiveStrike(strike));
    }
    let u0 = ExcessiveFunction::build(model, Reference::Zero)?;
    exchange_root(&u0, strike)
}

pub fn exchange_solve(model: &ModelParams, strike: f64) -> Result<StoppingSolution> {
    let payoff = Payoff::exchange(strike)?;
    let u0 = ExcessiveFunction::build(model, Reference::Zero)?;
    let z_star = exchange_root(&u0, strike)?;
    let pi_star = (z_star - strike) / u0.eval_u(z_star, 0)?;
    Ok(StoppingSolution {
        model: *model,
        payoff,
        regime: Regime::LowerBoundary,
        boundaries: Boundaries::Lower { z_star },
        excessive: u0,
        pi_star,
    })
}

/// Integral form of the exchange first-order condition, normalised by its
/// boundary term:
///
/// [K U_0'(z̄)/S'_{−κ}(z̄) + ∫_{z̄}^{z*} U_0(t)(1 + (r−μ−κσ)K − rt) m'_{−κ}(t) dt]
///   / (K U_0'(z̄)/S'_{−κ}(z̄)).
pub fn exchange_integral_residual(model: &ModelParams, strike: f64, z_star: f64) -> Result<f64> {
    let u0 = ExcessiveFunction::build(model, Reference::Zero)?;
    let zbar = u0.hat_z().expect("U_0 has a switch point");
    let minus = u0.minus_pair();
    let ls_bar = minus.ln_scale_density(zbar)?;
    let head = strike * u0.eval_u(zbar, 1)?;
    let s2 = model.sigma * model.sigma;
    let rho = model.rho_minus();
    let integrand = |t: f64| -> Result<f64> {
        let u = u0.eval_u(t, 0)?;
        let rel_speed = 2.0 / (s2 * t * t) * (ls_bar - minus.ln_scale_density(t)?).exp();
        Ok(u * (1.0 + rho * strike - model.r * t) * rel_speed)
    };
    let tail = integrate(integrand, zbar, z_star, 1e-9 * head.abs())?;
    Ok((head + tail) / head)
}

/// Indicator z̄_κ − P_κ(z̄_κ) whose sign selects the floor regime.
pub fn floor_indicator(model: &ModelParams) -> Result<f64> {
    let plus = FundamentalPair::new(model, DriftSign::PlusKappa)?;
    let zbar = integral_root(&plus)?;
    Ok(zbar - plus.eval_p(zbar, 0)?)
}

/// Floor payoff max(x, y).
pub fn floor_solve(model: &ModelParams) -> Result<StoppingSolution> {
    let plus = FundamentalPair::new(model, DriftSign::PlusKappa)?;
    let zbar = integral_root(&plus)?;
    let pbar = plus.eval_p(zbar, 0)?;
    if zbar >= pbar {
        let u0 = ExcessiveFunction::build(model, Reference::Zero)?;
        return Ok(StoppingSolution {
            model: *model,
            payoff: Payoff::floor(),
            regime: Regime::LowerBoundary,
            boundaries: Boundaries::Lower { z_star: zbar },
            excessive: u0,
            pi_star: zbar / pbar,
        });
    }
    // G(c) = U_c(ẑ_c) − ẑ_c: scan on a log grid, then bisect
    let gap = |c: f64| floor_gap(&plus, c).map(|(_, g)| g);
    let (c_lo, c_hi) = (1e-6f64, zbar);
    let n = 64;
    let grid: Vec<f64> = (0..n)
        .map(|i| (c_lo.ln() + (c_hi / c_lo).ln() * i as f64 / (n - 1) as f64).exp())
        .collect();
    let mut bracket = None;
    let mut prev = (grid[0], gap(grid[0])?);
    for &c in &grid[1..] {
        let g = gap(c)?;
        if prev.1 > 0.0 && g <= 0.0 {
            bracket = Some((prev.0, c));
            break;
        }
        prev = (c, g);
    }
    let (mut a, mut b) = bracket.ok_or(Error::BracketFailure { what: "floor c-scan", lo: c_lo, hi: c_hi })?;
    for _ in 0..200 {
        if b - a <= 1e-15 * b {
            break;
        }
        let mid = (a * b).sqrt();
        if gap(mid)? > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let c_star = 0.5 * (a + b);
    if c_star > 1.0 {
        return Err(Error::UnexpectedRegime(c_star));
    }
    let u = ExcessiveFunction::build(model, Reference::Finite(c_star))?;
    let z2 = u.hat_z().expect("finite reference has a switch point");
    let pi1 = c_star.max(1.0) / u.eval_u(c_star, 0)?;
    let pi2 = z2 / u.eval_u(z2, 0)?;
    if (pi1 - pi2).abs() > 1e-8 {
        return Err(Error::NotAnEquilibrium(pi1, pi2));
    }
    Ok(StoppingSolution {
        model: *model,
        payoff: Payoff::floor(),
        regime: Regime::TwoSided,
        boundaries: Boundaries::TwoSided { z1: c_star, z2, c_star },
        excessive: u,
        pi_star: pi1,
    })
}

/// κ̂ at which the floor problem switches to two boundaries.
pub fn critical_kappa_floor(mu: f64, sigma: f64, r: f64, kappa_max: f64) -> Result<f64> {
    let step = 0.05;
    let n = (kappa_max / step).ceil() as usize;
    let indicator = |k: f64| -> Result<Option<f64>> {
        match ModelParams::new(mu, sigma, r, k) {
            Ok(m) => floor_indicator(&m).map(Some),
            Err(Error::DegenerateRho(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    for i in 0..=n {
        let k = (i as f64 * step).min(kappa_max);
        if let Some(v) = indicator(k)? {
            if let Some((pk, pv)) = prev {
                if pv.signum() != v.signum() {
                    bracket = Some((pk, k, pv));
                    break;
                }
            }
            prev = Some((k, v));
        }
    }
    let (mut a, mut b, fa) = bracket.ok_or(Error::NoSignChange { lo: 0.0, hi: kappa_max })?;
    while b - a > 1e-10 {
        let mid = 0.5 * (a + b);
        let v = indicator(mid)?.expect("interior of a valid bracket");
        if v.signum() == fa.signum() {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Dispatch on the payoff kind; custom payoffs use the lower-boundary solver.
pub fn solve(model: &ModelParams, payoff: &Payoff) -> Result<StoppingSolution> {
    match payoff.kind() {
        PayoffKind::Integral => integral_solve(model),
        PayoffKind::Exchange { strike } => exchange_solve(model, *strike),
        PayoffKind::Floor => floor_solve(model),
        PayoffKind::Custom { .. } => lower_boundary_solve(model, payoff),
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a) <= 1e-13 * b.abs() {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Generic single-boundary solver with continuation below z*, based on the
/// maximiser of Π_0(z) = g(z)/U_0(z). Requires Π_0 to be non-increasing
/// beyond the maximiser on the search grid.
pub fn lower_boundary_solve(model: &ModelParams, payoff: &Payoff) -> Result<StoppingSolution> {
    let u0 = ExcessiveFunction::build(model, Reference::Zero)?;
    let zbar = u0.hat_z().expect("U_0 has a switch point");
    let grid = log_grid(1e-3 / model.r, 1e3 * zbar, 4000);
    let pi = |z: f64| -> f64 {
        match u0.eval_u(z, 0) {
            Ok(u) => payoff.profile(z) / u,
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let vals: Vec<f64> = grid.iter().map(|&z| pi(z)).collect();
    let (imax, &vmax) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::EmptyGrid)?;
    if !(vmax > 0.0) {
        return Err(Error::NotUnimodal("payoff ratio has no positive maximum".into()));
    }
    for i in imax + 1..vals.len() {
        if vals[i] > vals[i - 1] * (1.0 + 1e-12) {
            return Err(Error::NotUnimodal(format!("ratio increases again at z = {}", grid[i])));
        }
    }
    let a = grid[imax.saturating_sub(1)];
    let b = grid[(imax + 1).min(grid.len() - 1)];
    let z_star = golden_max(pi, a, b);
    let z_star = if pi(z_star) >= vmax { z_star } else { grid[imax] };
    Ok(StoppingSolution {
        model: *model,
        payoff: payoff.clone(),
        regime: Regime::LowerBoundary,
        boundaries: Boundaries::Lower { z_star },
        pi_star: pi(z_star),
        excessive: u0,
    })
}

/// Generic single-boundary solver with stopping below z*, based on the
/// maximiser of Π_∞(z) = g(z)/Q_κ(z). Requires 2μ > 2κσ − σ² and Π_∞
/// non-decreasing below the maximiser on the search grid.
pub fn upper_boundary_solve(model: &ModelParams, payoff: &Payoff) -> Result<StoppingSolution> {
    if !model.upper_boundary_admissible() {
        return Err(Error::PreconditionViolated(format!(
            "upper-boundary solver needs 2mu > 2kappa*sigma - sigma^2 ({model})"
        )));
    }
    let uinf = ExcessiveFunction::build(model, Reference::Infinity)?;
    let plus = *uinf.plus_pair();
    let grid = log_grid(1e-4 / model.r, 1e4 / model.r, 4000);
    let pi = |z: f64| -> f64 {
        let g = payoff.profile(z);
        if g <= 0.0 {
            return g.min(0.0);
        }
        match plus.q_scaled(z) {
            Ok(q) => g / q.value * (-q.ln_scale).exp(),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let vals: Vec<f64> = grid.iter().map(|&z| pi(z)).collect();
    let (imax, &vmax) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::EmptyGrid)?;
    if !(vmax > 0.0) {
        return Err(Error::NotUnimodal("payoff ratio has no positive maximum".into()));
    }
    for i in 1..=imax {
        if vals[i] < vals[i - 1] * (1.0 - 1e-12) {
            return Err(Error::NotUnimodal(format!("ratio decreases below the maximiser at z = {}", grid[i])));
        }
    }
    let a = grid[imax.saturating_sub(1)];
    let b = grid[(imax + 1).min(grid.len() - 1)];
    let z_star = golden_max(pi, a, b);
    let z_star = if pi(z_star) >= vmax { z_star } else { grid[imax] };
    Ok(StoppingSolution {
        model: *model,
        payoff: payoff.clone(),
        regime: Regime::UpperBoundary,
        boundaries: Boundaries::Upper { z_star },
        pi_star: pi(z_star),
        excessive: uinf,
    })
}

/// Grid points at which Π_c(z) = g(z)/U_c(z) attains its grid maximum (to a
/// relative tolerance of 1e-9).
pub fn stopping_set_test(
    model: &ModelParams,
    payoff: &Payoff,
    reference: Reference,
    z_grid: &[f64],
) -> Result<Vec<f64>> {
    if z_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let u = ExcessiveFunction::build(model, reference)?;
    let vals: Vec<f64> = z_grid
        .iter()
        .map(|&z| match u.eval_u(z, 0) {
            Ok(v) => payoff.profile(z) / v,
            Err(Error::Overflow { .. }) => 0.0,
            Err(_) => f64::NAN,
        })
        .collect();
    let best = vals.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    Ok(z_grid
        .iter()
        .zip(&vals)
        .filter(|(_, &v)| v.is_finite() && v >= best - 1e-9 * best.abs())
        .map(|(&z, _)| z)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn floor_model(kappa: f64) -> ModelParams {
        ModelParams::new(0.0, 0.5, 0.05, kappa).unwrap()
    }

    #[test]
    fn integral_boundary_published_value() {
        let z = integral_boundary(&floor_model(0.5)).unwrap();
        assert!((z - 27.9912).abs() < 1e-2, "{z}");
    }

    #[test]
    fn floor_regimes() {
        let s = floor_solve(&floor_model(0.5)).unwrap();
        assert_eq!(s.regime(), Regime::LowerBoundary);
        let s = floor_solve(&floor_model(1.75)).unwrap();
        assert_eq!(s.regime(), Regime::TwoSided);
        match s.boundaries() {
            Boundaries::TwoSided { z1, z2, .. } => {
                assert!((z1 - 0.0854).abs() < 1e-2);
                assert!((z2 - 22.6858).abs() < 1e-2);
            }
            b => panic!("{b:?}"),
        }
    }

    #[test]
    fn critical_kappa_published_value() {
        let k = critical_kappa_floor(0.0, 0.5, 0.05, 10.0).unwrap();
        assert!((k - 1.59795).abs() < 1e-3, "{k}");
    }

    #[test]
    fn exchange_integral_form() {
        let m = ModelParams::new(0.02, 0.1, 0.05, 0.5).unwrap();
        let z = exchange_boundary(&m, 0.5).unwrap();
        let res = exchange_integral_residual(&m, 0.5, z).unwrap();
        assert!(res.abs() < 1e-6, "{res}");
    }

    #[test]
    fn generator_orientation() {
        let s = integral_solve(&floor_model(0.5)).unwrap();
        let zbar = s.switch_point().unwrap();
        assert_eq!(worst_case_generator(&s, 1.0, 0.5 * zbar).unwrap(), 0.5);
        assert_eq!(worst_case_generator(&s, 1.0, zbar).unwrap(), 0.5);
        assert_eq!(worst_case_generator(&s, 1.0, 1.5 * zbar).unwrap(), -0.5);
        let s0 = integral_solve(&floor_model(0.0)).unwrap();
        assert_eq!(worst_case_generator(&s0, 1.0, 0.1).unwrap(), 0.0);
    }
}
