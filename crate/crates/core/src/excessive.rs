//! Pasted excessive functions U_c.
//!
//! Below the switch point ẑ_c the function solves the +κ regime ODE and is a
//! combination of P_κ and Q_κ; above it solves the −κ regime ODE. The upper
//! branch is continued from the C¹ data at ẑ_c by a ladder of Taylor
//! expansions in w = 2/(σ²z), which does not depend on the −κ basis being
//! well conditioned (ψ_{−κ} can be zero or negative).

use crate::error::{Error, Result};
use crate::fundamental::FundamentalPair;
use crate::model::{DriftSign, ModelParams};
use crate::roots::{brent, expand_geometric};

/// Reference point of the family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    Zero,
    Finite(f64),
    Infinity,
}

/// Which regime formula to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy)]
enum Lower {
    P,
    Q,
    /// α Q + β P with α stored as ln α.
    Combination { ln_alpha: f64, beta: f64 },
}

/// Taylor coefficients of H(w0(1 + τ)) at the nodes w_k = ŵ 2^{-k}.
#[derive(Debug, Clone)]
struct Ladder {
    hat_w: f64,
    nodes: Vec<(f64, Vec<f64>)>,
}

const LADDER_MAX_NODES: usize = 220;
const LADDER_MAX_TERMS: usize = 400;

impl Ladder {
    /// Coefficients b_n of H(w0(1+τ)) = Σ b_n τ^n for
    /// w²H'' + w(β − w)H' − γH = 0, from b_0 = H(w0), b_1 = w0 H'(w0).
    fn coefficients(beta: f64, gamma: f64, w0: f64, h: f64, h1: f64) -> Vec<f64> {
        let mut b = Vec::with_capacity(96);
        b.push(h);
        b.push(w0 * h1);
        let scale = h.abs().max(b[1].abs()).max(f64::MIN_POSITIVE);
        let mut quiet = 0;
        for m in 0..LADDER_MAX_TERMS {
            let mf = m as f64;
            let bm1 = if m == 0 { 0.0 } else { b[m - 1] };
            let rhs = -((2.0 * mf * (mf + 1.0) + (beta - w0) * (mf + 1.0)) * b[m + 1]
                + (mf * (mf - 1.0) + (beta - 2.0 * w0) * mf - gamma) * b[m])
                + w0 * (mf - 1.0) * bm1;
            let next = rhs / ((mf + 1.0) * (mf + 2.0));
            b.push(next);
            // terms are used at |τ| ≤ 1/2
            let size = next.abs() * 0.5f64.powi(m as i32 + 2);
            if size < 1e-19 * scale {
                quiet += 1;
                if quiet >= 4 {
                    break;
                }
            } else {
                quiet = 0;
            }
        }
        b
    }

    fn build(model: &ModelParams, hat_z: f64, u: f64, u1: f64) -> Ladder {
        let s2 = model.sigma * model.sigma;
        let delta = model.effective_drift(DriftSign::MinusKappa);
        let beta = 2.0 + 2.0 * delta / s2;
        let gamma = 2.0 * (model.r - delta) / s2;
        let hat_w = 2.0 / (s2 * hat_z);
        let mut w0 = hat_w;
        let mut h = u;
        let mut h1 = -2.0 * u1 / (s2 * hat_w * hat_w);
        let mut nodes = Vec::new();
        for _ in 0..LADDER_MAX_NODES {
            let coef = Self::coefficients(beta, gamma, w0, h, h1);
            let (v, d) = Self::derivative_sum(&coef, -0.5);
            nodes.push((w0, coef));
            let w_next = 0.5 * w0;
            h1 = d / w0;
            h = v;
            w0 = w_next;
            if !(h.is_finite() && h1.is_finite()) || h.abs() > 1e250 {
                break;
            }
        }
        Ladder { hat_w, nodes }
    }

    /// H and dH/dτ at τ.
    fn derivative_sum(coef: &[f64], tau: f64) -> (f64, f64) {
        let mut v = 0.0;
        let mut d = 0.0;
        for (n, &c) in coef.iter().enumerate().rev() {
            v = v * tau + c;
            if n >= 1 {
                d = d * tau + n as f64 * c;
            }
        }
        (v, d)
    }

    /// H(w) and dH/dw for 0 < w ≤ ŵ.
    fn eval(&self, w: f64) -> Option<(f64, f64)> {
        if !(w > 0.0) {
            return None;
        }
        let ratio = self.hat_w / w;
        let mut k = if ratio <= 1.0 { 0 } else { ratio.log2().floor() as usize };
        if k >= self.nodes.len() {
            return None;
        }
        // keep τ in [−1/2, 0] despite rounding in log2
        while k + 1 < self.nodes.len() && w < 0.5 * self.nodes[k].0 {
            k += 1;
        }
        while k > 0 && w > self.nodes[k].0 {
            k -= 1;
        }
        let (w0, coef) = &self.nodes[k];
        let tau = w / w0 - 1.0;
        if tau < -0.5 - 1e-12 {
            return None;
        }
        let (v, d) = Self::derivative_sum(coef, tau);
        Some((v, d / w0))
    }
}

#[derive(Debug, Clone)]
struct Upper {
    hat_z: f64,
    c1: f64,
    c2: f64,
    ladder: Ladder,
}

/// The pasted excessive function U_c.
#[derive(Debug, Clone)]
pub struct ExcessiveFunction {
    model: ModelParams,
    reference: Reference,
    plus: FundamentalPair,
    minus: FundamentalPair,
    lower: Lower,
    upper: Option<Upper>,
}

fn lower_eval(plus: &FundamentalPair, lower: &Lower, z: f64) -> Result<(f64, f64)> {
    match *lower {
        Lower::P => plus.p_pair(z),
        Lower::Q => {
            let q = plus.q_derivs(z)?;
            Ok((q[0], q[1]))
        }
        Lower::Combination { ln_alpha, beta } => {
            let q = plus.q_scaled(z)?;
            let (p, p1) = plus.p_pair(z)?;
            let f = (ln_alpha + q.ln_scale).exp();
            let u = f * q.value + beta * p;
            let u1 = f * q.derivative + beta * p1;
            if !u.is_finite() || !u1.is_finite() {
                return Err(Error::Overflow { what: "eval_u", at: z });
            }
            Ok((u, u1))
        }
    }
}

fn combination(plus: &FundamentalPair, c: f64) -> Result<Lower> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::DomainError { what: "reference point", value: c });
    }
    let (_, p1) = plus.p_pair(c)?;
    let q = plus.q_scaled(c)?;
    let ls = plus.ln_scale_density(c)?;
    let b = plus.wronskian_b();
    let ln_alpha = p1.ln() - ls - b.ln();
    let beta = -q.derivative * (q.ln_scale - ls).exp() / b;
    Ok(Lower::Combination { ln_alpha, beta })
}

/// Root of P(z) − zP'(z) = 0 above 1/r.
pub(crate) fn integral_root(plus: &FundamentalPair) -> Result<f64> {
    let r = plus.model().r;
    let foc = |z: f64| -> Result<f64> {
        let (p, p1) = plus.p_pair(z)?;
        Ok((p - z * p1) / p)
    };
    let (a, b, _, _) = expand_geometric(foc, 1.0 / r, 1.5, 1e12 / r, "integral_boundary")?;
    let root = brent(foc, a, b, 1e-14 * b, "integral_boundary")?;
    Ok(root)
}

/// Unique root ẑ_c > c of D_c(z) = U_c'(z) z − U_c(z).
pub fn solve_hat_z(model: &ModelParams, c: f64) -> Result<f64> {
    let plus = FundamentalPair::new(model, DriftSign::PlusKappa)?;
    let lower = combination(&plus, c)?;
    hat_z_for(&plus, &lower, c)
}

fn hat_z_for(plus: &FundamentalPair, lower: &Lower, c: f64) -> Result<f64> {
    let d = |z: f64| -> Result<f64> {
        let (u, u1) = lower_eval(plus, lower, z)?;
        Ok(u1 * z - u)
    };
    let limit = 1e12 * c.max(1.0);
    let (mut lo, mut hi, mut d_lo, mut d_hi) = expand_geometric(d, c, 2.0, limit, "solve_hat_z")
        .map_err(|e| match e {
            Error::BracketFailure { .. } => Error::BracketFailure { what: "solve_hat_z", lo: c, hi: limit },
            other => other,
        })?;
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let dm = d(mid)?;
        if dm < 0.0 {
            lo = mid;
            d_lo = dm;
        } else {
            hi = mid;
            d_hi = dm;
        }
    }
    let root = if d_hi != d_lo { lo - d_lo * (hi - lo) / (d_hi - d_lo) } else { 0.5 * (lo + hi) };
    Ok(root.clamp(lo, hi))
}

/// ẑ_c and U_c(ẑ_c) − ẑ_c, the gap whose zero fixes the two-sided floor
/// boundaries.
pub(crate) fn floor_gap(plus: &FundamentalPair, c: f64) -> Result<(f64, f64)> {
    let lower = combination(plus, c)?;
    let hz = hat_z_for(plus, &lower, c)?;
    let (u, _) = lower_eval(plus, &lower, hz)?;
    Ok((hz, u - hz))
}

impl ExcessiveFunction {
    pub fn build(model: &ModelParams, reference: Reference) -> Result<Self> {
        let plus = FundamentalPair::new(model, DriftSign::PlusKappa)?;
        let minus = FundamentalPair::new(model, DriftSign::MinusKappa)?;
        let (lower, hat_z) = match reference {
            Reference::Infinity => (Lower::Q, None),
            Reference::Zero => (Lower::P, Some(integral_root(&plus)?)),
            Reference::Finite(c) => {
                let lower = combination(&plus, c)?;
                let hz = hat_z_for(&plus, &lower, c)?;
                (lower, Some(hz))
            }
        };
        let upper = match hat_z {
            None => None,
            Some(hz) => {
                let (u, u1) = lower_eval(&plus, &lower, hz)?;
                let ladder = Ladder::build(model, hz, u, u1);
                let (c1, c2) = paper_coefficients(&minus, hz, u1);
                Some(Upper { hat_z: hz, c1, c2, ladder })
            }
        };
        Ok(Self { model: *model, reference, plus, minus, lower, upper })
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    pub fn reference(&self) -> Reference {
        self.reference
    }

    /// ẑ_c, absent for the Infinity member.
    pub fn hat_z(&self) -> Option<f64> {
        self.upper.as_ref().map(|u| u.hat_z)
    }

    /// (c₁, c₂) of the upper branch in the P_{−κ}, Q_{−κ} basis. NaN when that
    /// basis is degenerate at these parameters.
    pub fn coefficients(&self) -> Option<(f64, f64)> {
        self.upper.as_ref().map(|u| (u.c1, u.c2))
    }

    pub fn plus_pair(&self) -> &FundamentalPair {
        &self.plus
    }

    pub fn minus_pair(&self) -> &FundamentalPair {
        &self.minus
    }

    /// U, U', U'' at z.
    pub fn eval_all(&self, z: f64) -> Result<[f64; 3]> {
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::DomainError { what: "eval_u", value: z });
        }
        match &self.upper {
            Some(up) if z > up.hat_z => self.eval_branch(z, Branch::Upper),
            _ => self.eval_branch(z, Branch::Lower),
        }
    }

    pub fn eval_u(&self, z: f64, order: u8) -> Result<f64> {
        if order > 2 {
            return Err(Error::DomainError { what: "eval_u order", value: order as f64 });
        }
        Ok(self.eval_all(z)?[order as usize])
    }

    /// Evaluate one branch formula regardless of where z lies. The upper branch
    /// is only available for z ≥ ẑ_c.
    pub fn eval_branch(&self, z: f64, branch: Branch) -> Result<[f64; 3]> {
        match branch {
            Branch::Lower => {
                let (u, u1) = lower_eval(&self.plus, &self.lower, z)?;
                Ok([u, u1, self.plus.second_from_ode(z, u, u1)])
            }
            Branch::Upper => {
                let up = self
                    .upper
                    .as_ref()
                    .ok_or(Error::DomainError { what: "upper branch", value: z })?;
                let s2 = self.model.sigma * self.model.sigma;
                let w = 2.0 / (s2 * z);
                let (h, hw) = up
                    .ladder
                    .eval(w)
                    .ok_or(Error::Overflow { what: "eval_u upper branch", at: z })?;
                let u1 = -0.5 * s2 * w * w * hw;
                Ok([h, u1, self.minus.second_from_ode(z, h, u1)])
            }
        }
    }

    /// Δ_c(z) = U_c(z) − U_c'(z) z.
    pub fn delta(&self, z: f64) -> Result<f64> {
        let [u, u1, _] = self.eval_all(z)?;
        Ok(u - u1 * z)
    }

    /// c₁ P_{−κ}(z) + c₂ Q_{−κ}(z), the closed form of the upper branch.
    pub fn upper_closed_form(&self, z: f64) -> Result<f64> {
        let up = self
            .upper
            .as_ref()
            .ok_or(Error::DomainError { what: "upper branch", value: z })?;
        let p = self.minus.eval_p(z, 0)?;
        let q = self.minus.eval_q(z, 0)?;
        Ok(up.c1 * p + up.c2 * q)
    }
}

fn paper_coefficients(minus: &FundamentalPair, hz: f64, u1: f64) -> (f64, f64) {
    let b = minus.wronskian_b();
    let run = || -> Result<(f64, f64)> {
        let (p, p1) = minus.p_pair(hz)?;
        let q = minus.q_derivs(hz)?;
        let s = minus.scale_density(hz)?;
        let c1 = (q[0] - q[1] * hz) / (b * s) * u1;
        let c2 = (p1 * hz - p) / (b * s) * u1;
        Ok((c1, c2))
    };
    if b == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    run().unwrap_or((f64::NAN, f64::NAN))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn floor_model(kappa: f64) -> ModelParams {
        ModelParams::new(0.0, 0.5, 0.05, kappa).unwrap()
    }

    #[test]
    fn boundary_conditions_at_reference() {
        let m = floor_model(1.75);
        let u = ExcessiveFunction::build(&m, Reference::Finite(2.0)).unwrap();
        assert!((u.eval_u(2.0, 0).unwrap() - 1.0).abs() < 1e-12);
        assert!(u.eval_u(2.0, 1).unwrap().abs() < 1e-12);
    }

    #[test]
    fn published_switch_point() {
        let m = floor_model(1.75);
        let hz = solve_hat_z(&m, 0.0854).unwrap();
        assert!((hz - 22.6858).abs() < 1e-2, "{hz}");
    }

    #[test]
    fn small_reference_approaches_integral_boundary() {
        let m = floor_model(0.5);
        let plus = FundamentalPair::new(&m, DriftSign::PlusKappa).unwrap();
        let zbar = integral_root(&plus).unwrap();
        let hz = solve_hat_z(&m, 1e-8).unwrap();
        assert!((hz - zbar).abs() / zbar < 1e-4, "{hz} {zbar}");
    }

    #[test]
    fn infinity_member_is_q() {
        let m = floor_model(0.5);
        let u = ExcessiveFunction::build(&m, Reference::Infinity).unwrap();
        for z in [0.5, 3.0, 40.0, 900.0] {
            assert_eq!(u.eval_u(z, 0).unwrap(), u.plus_pair().eval_q(z, 0).unwrap());
        }
        assert!(u.hat_z().is_none());
    }

    #[test]
    fn ladder_matches_closed_form_when_basis_is_regular() {
        // ψ_{−κ} > 0 here, so c₁P_{−κ} + c₂Q_{−κ} is usable
        let m = ModelParams::new(0.02, 0.1, 0.05, 0.1).unwrap();
        let u = ExcessiveFunction::build(&m, Reference::Zero).unwrap();
        let (c1, c2) = u.coefficients().unwrap();
        assert!(c1 > 0.0 && c2.is_finite());
        let hz = u.hat_z().unwrap();
        for f in [1.0, 1.3, 2.0, 7.0, 40.0, 1e3] {
            let z = hz * f;
            let a = u.eval_u(z, 0).unwrap();
            let b = u.upper_closed_form(z).unwrap();
            assert!((a - b).abs() / b < 1e-9, "z={z} {a} {b}");
        }
    }

    #[test]
    fn c2_pasting_two_sided_floor() {
        let m = floor_model(1.75);
        let u = ExcessiveFunction::build(&m, Reference::Finite(0.0854)).unwrap();
        let hz = u.hat_z().unwrap();
        let lo = u.eval_branch(hz, Branch::Lower).unwrap();
        let hi = u.eval_branch(hz, Branch::Upper).unwrap();
        assert!((lo[0] - hi[0]).abs() < 1e-13 * lo[0]);
        assert!((lo[2] - hi[2]).abs() / lo[2].abs() < 1e-6, "{lo:?} {hi:?}");
    }
}
