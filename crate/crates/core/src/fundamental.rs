//! Increasing and decreasing fundamental solutions of the regime ODEs
//!
//! ½σ²z²h'' + (1 − δz)h' − (r − δ)h = 0,   δ = μ ∓ κσ,
//!
//! written through w = 2/(σ²z) as P = w^ψ U(ψ, b, w) and Q = w^ψ M(ψ, b, w)
//! with b = 1 + ψ − φ.

use crate::error::{Error, Result};
use crate::model::{characteristic_roots, CharacteristicRoots, DriftSign, ModelParams};
use crate::special::{ln_gamma_signed, m_scaled, u_triple, ACCEPT_REL_ERROR};

/// Value and first derivative sharing a common log scale.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ScaledPair {
    pub value: f64,
    pub derivative: f64,
    pub ln_scale: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct FundamentalPair {
    model: ModelParams,
    drift_sign: DriftSign,
    roots: CharacteristicRoots,
    b: f64,
    delta: f64,
    rho: f64,
    wronskian_b: f64,
}

fn check_z(z: f64, what: &'static str) -> Result<()> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::DomainError { what, value: z });
    }
    Ok(())
}

fn check_order(order: u8, what: &'static str) -> Result<()> {
    if order > 2 {
        return Err(Error::DomainError { what, value: order as f64 });
    }
    Ok(())
}

impl FundamentalPair {
    pub fn new(model: &ModelParams, drift_sign: DriftSign) -> Result<Self> {
        let roots = characteristic_roots(model, drift_sign)?;
        let delta = model.effective_drift(drift_sign);
        let rho = model.r - delta;
        let s2 = model.sigma * model.sigma;
        let b = 1.0 + roots.psi - roots.phi;
        let (lg_num, _) = ln_gamma_signed(b);
        let (lg_den, sign_den) = ln_gamma_signed(roots.psi);
        let wronskian_b = if sign_den == 0.0 {
            0.0
        } else {
            sign_den * (lg_num - lg_den + (roots.psi + roots.phi) * (2.0 / s2).ln()).exp()
        };
        Ok(Self { model: *model, drift_sign, roots, b, delta, rho, wronskian_b })
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    pub fn drift_sign(&self) -> DriftSign {
        self.drift_sign
    }

    pub fn roots(&self) -> &CharacteristicRoots {
        &self.roots
    }

    /// Effective drift δ of the regime.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Effective discount r − δ of the regime.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// B = Γ(ψ − φ + 1)/Γ(ψ) (2/σ²)^{ψ+φ}; equals (QP' − PQ')/S'.
    pub fn wronskian_b(&self) -> f64 {
        self.wronskian_b
    }

    pub fn w(&self, z: f64) -> f64 {
        2.0 / (self.model.sigma * self.model.sigma * z)
    }

    /// h'' recovered from the ODE given h and h'.
    pub fn second_from_ode(&self, z: f64, h: f64, h1: f64) -> f64 {
        let s2 = self.model.sigma * self.model.sigma;
        2.0 * (self.rho * h - (1.0 - self.delta * z) * h1) / (s2 * z * z)
    }

    /// ½σ²z²h'' + (1 − δz)h' − ρh.
    pub fn ode_residual(&self, z: f64, h: f64, h1: f64, h2: f64) -> f64 {
        let s2 = self.model.sigma * self.model.sigma;
        0.5 * s2 * z * z * h2 + (1.0 - self.delta * z) * h1 - self.rho * h
    }

    /// P and P'.
    pub fn p_pair(&self, z: f64) -> Result<(f64, f64)> {
        check_z(z, "eval_p")?;
        let w = self.w(z);
        let t = u_triple(self.roots.psi, self.b, w)?;
        if !(t.err <= ACCEPT_REL_ERROR) {
            return Err(Error::NoConvergence { what: "eval_p", est_rel_error: t.err });
        }
        let scale = (self.roots.psi * w.ln() + t.ln_scale).exp();
        let s2 = self.model.sigma * self.model.sigma;
        let p = t.u * scale;
        let p1 = -0.5 * s2 * self.roots.psi * self.roots.phi * w * t.u_a1 * scale;
        if !p.is_finite() || !p1.is_finite() {
            return Err(Error::Overflow { what: "eval_p", at: z });
        }
        Ok((p, p1))
    }

    /// P, P', P''.
    pub fn p_derivs(&self, z: f64) -> Result<[f64; 3]> {
        let (p, p1) = self.p_pair(z)?;
        Ok([p, p1, self.second_from_ode(z, p, p1)])
    }

    pub fn eval_p(&self, z: f64, order: u8) -> Result<f64> {
        check_order(order, "eval_p order")?;
        Ok(self.p_derivs(z)?[order as usize])
    }

    /// Q and Q' as `mant * exp(ln_scale)`.
    pub(crate) fn q_scaled(&self, z: f64) -> Result<ScaledPair> {
        check_z(z, "eval_q")?;
        let w = self.w(z);
        let psi = self.roots.psi;
        let m0 = m_scaled(psi, self.b, w)?;
        let m1 = m_scaled(psi + 1.0, self.b + 1.0, w)?;
        let ln_w = w.ln();
        let ln_scale = psi * ln_w + m0.ln_scale;
        // M(ψ,b,w) + (w/b) M(ψ+1,b+1,w) on the scale of m0
        let ratio = (m1.ln_scale - m0.ln_scale).exp();
        let bracket = m0.mant + w / self.b * m1.mant * ratio;
        let s2 = self.model.sigma * self.model.sigma;
        let derivative = -0.5 * s2 * psi * w * bracket;
        Ok(ScaledPair { value: m0.mant, derivative, ln_scale })
    }

    /// Q, Q', Q''.
    pub fn q_derivs(&self, z: f64) -> Result<[f64; 3]> {
        let q = self.q_scaled(z)?;
        if q.ln_scale > 700.0 {
            return Err(Error::Overflow { what: "eval_q", at: z });
        }
        let scale = q.ln_scale.exp();
        let v = q.value * scale;
        let d = q.derivative * scale;
        if !v.is_finite() || !d.is_finite() {
            return Err(Error::Overflow { what: "eval_q", at: z });
        }
        Ok([v, d, self.second_from_ode(z, v, d)])
    }

    pub fn eval_q(&self, z: f64, order: u8) -> Result<f64> {
        check_order(order, "eval_q order")?;
        Ok(self.q_derivs(z)?[order as usize])
    }

    /// ln S'(z) = (2δ/σ²) ln z + 2/(σ²z).
    pub fn ln_scale_density(&self, z: f64) -> Result<f64> {
        check_z(z, "scale_density")?;
        let s2 = self.model.sigma * self.model.sigma;
        Ok(2.0 * self.delta / s2 * z.ln() + self.w(z))
    }

    pub fn scale_density(&self, z: f64) -> Result<f64> {
        let l = self.ln_scale_density(z)?;
        if l > 709.0 {
            return Err(Error::Overflow { what: "scale_density", at: z });
        }
        Ok(l.exp())
    }

    /// m'(z) = 2/(σ²z²S'(z)), evaluated in log space.
    pub fn speed_density(&self, z: f64) -> Result<f64> {
        let l = self.ln_scale_density(z)?;
        let s2 = self.model.sigma * self.model.sigma;
        Ok(((2.0 / s2).ln() - 2.0 * z.ln() - l).exp())
    }

    /// (QP' − PQ')/S' measured at z.
    pub fn scaled_wronskian(&self, z: f64) -> Result<f64> {
        let (p, p1) = self.p_pair(z)?;
        let q = self.q_scaled(z)?;
        let ls = self.ln_scale_density(z)?;
        Ok((q.value * p1 - p * q.derivative) * (q.ln_scale - ls).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(mu: f64, sigma: f64, r: f64, kappa: f64, sign: DriftSign) -> FundamentalPair {
        FundamentalPair::new(&ModelParams::new(mu, sigma, r, kappa).unwrap(), sign).unwrap()
    }

    #[test]
    fn p_tends_to_one_at_origin() {
        let f = pair(0.0, 0.5, 0.05, 0.5, DriftSign::PlusKappa);
        assert!((f.eval_p(1e-8, 0).unwrap() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn first_order_condition_at_published_boundary() {
        let f = pair(0.0, 0.5, 0.05, 0.5, DriftSign::PlusKappa);
        let z = 27.9912;
        let p = f.eval_p(z, 0).unwrap();
        let p1 = f.eval_p(z, 1).unwrap();
        assert!((p1 * z - p).abs() / p < 1e-3);
    }

    #[test]
    fn wronskian_matches_closed_form() {
        for &(mu, sigma, r, kappa) in &[(0.0, 0.5, 0.05, 0.0), (0.02, 0.1, 0.05, 0.5), (0.0, 0.5, 0.05, 1.75)] {
            let f = pair(mu, sigma, r, kappa, DriftSign::PlusKappa);
            for z in [0.1, 1.0, 10.0] {
                let w = f.scaled_wronskian(z).unwrap();
                assert!((w - f.wronskian_b()).abs() / f.wronskian_b() < 1e-9, "z={z} {w} {}", f.wronskian_b());
            }
        }
    }

    #[test]
    fn q_decreasing_and_order_check() {
        let f = pair(0.0, 0.5, 0.05, 0.5, DriftSign::PlusKappa);
        assert!(f.eval_q(1.0, 1).unwrap() < 0.0);
        assert!(f.eval_q(1.0, 3).is_err());
        assert!(f.eval_p(-1.0, 0).is_err());
    }

    #[test]
    fn q_overflow_is_reported() {
        let f = pair(0.0, 0.5, 0.05, 0.5, DriftSign::PlusKappa);
        assert!(matches!(f.eval_q(1e-4, 0), Err(Error::Overflow { .. })));
    }

    #[test]
    fn scale_and_speed_densities() {
        // μ = κσ makes the power of z vanish
        let f = pair(0.05, 0.5, 0.05, 0.1, DriftSign::PlusKappa);
        assert!((f.scale_density(1.0).unwrap() - (2.0f64 / 0.25).exp()).abs() < 1e-9);
        for z in [0.05, 1.0, 30.0] {
            let s = f.scale_density(z).unwrap();
            let m = f.speed_density(z).unwrap();
            assert!((m * s * 0.25 * z * z / 2.0 - 1.0).abs() < 1e-13);
        }
    }
}
