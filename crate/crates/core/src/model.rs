//! Market and ambiguity primitives, payoff profiles and characteristic roots.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Drift parameters of the underlying GBM together with the ambiguity radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub mu: f64,
    pub sigma: f64,
    pub r: f64,
    pub kappa: f64,
}

impl ModelParams {
    pub fn new(mu: f64, sigma: f64, r: f64, kappa: f64) -> Result<Self> {
        for (name, v) in [("mu", mu), ("sigma", sigma), ("r", r), ("kappa", kappa)] {
            if !v.is_finite() {
                return Err(Error::NonFinite { name });
            }
        }
        if sigma <= 0.0 {
            return Err(Error::NonPositiveSigma(sigma));
        }
        if r <= 0.0 {
            return Err(Error::NonPositiveRate(r));
        }
        if kappa < 0.0 {
            return Err(Error::NegativeKappa(kappa));
        }
        let rho = r - mu + kappa * sigma;
        if rho <= 0.0 {
            return Err(Error::DegenerateRho(rho));
        }
        Ok(Self { mu, sigma, r, kappa })
    }

    /// Same market, different ambiguity radius.
    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        Self::new(self.mu, self.sigma, self.r, kappa)
    }

    /// r - mu + kappa*sigma, the effective discount rate of the +kappa regime.
    pub fn rho_plus(&self) -> f64 {
        self.r - self.mu + self.kappa * self.sigma
    }

    /// r - mu - kappa*sigma; may be zero or negative.
    pub fn rho_minus(&self) -> f64 {
        self.r - self.mu - self.kappa * self.sigma
    }

    /// Whether 2mu > 2kappa*sigma - sigma^2, the condition under which the
    /// upper-boundary theory applies.
    pub fn upper_boundary_admissible(&self) -> bool {
        2.0 * self.mu > 2.0 * self.kappa * self.sigma - self.sigma * self.sigma
    }

    /// Effective drift mu -/+ kappa*sigma of a regime.
    pub fn effective_drift(&self, sign: DriftSign) -> f64 {
        self.mu - sign.factor() * self.kappa * self.sigma
    }
}

impl fmt::Display for ModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mu={} sigma={} r={} kappa={}",
            self.mu, self.sigma, self.r, self.kappa
        )
    }
}

/// Selects the regime ODE: `PlusKappa` discounts at r - mu + kappa*sigma.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DriftSign {
    PlusKappa,
    MinusKappa,
}

impl DriftSign {
    pub fn factor(self) -> f64 {
        match self {
            DriftSign::PlusKappa => 1.0,
            DriftSign::MinusKappa => -1.0,
        }
    }
}

/// Roots of q^2 + (1 + 2 delta / sigma^2) q - 2 (r - delta) / sigma^2 = 0 with
/// delta the effective drift of the regime. `psi` is the larger root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicRoots {
    pub psi: f64,
    pub phi: f64,
    pub drift_sign: DriftSign,
}

pub fn characteristic_roots(model: &ModelParams, drift_sign: DriftSign) -> Result<CharacteristicRoots> {
    let s2 = model.sigma * model.sigma;
    let delta = model.effective_drift(drift_sign);
    let b = 1.0 + 2.0 * delta / s2;
    let c = -2.0 * (model.r - delta) / s2;
    let disc = b * b - 4.0 * c;
    if disc < 0.0 {
        return Err(Error::ComplexRoots(disc));
    }
    let sq = disc.sqrt();
    // cancellation-free pair: one root from the formula, the other from Vieta
    let big = if b >= 0.0 { -0.5 * (b + sq) } else { -0.5 * (b - sq) };
    let (r1, r2) = if big == 0.0 { (0.0, 0.0) } else { (big, c / big) };
    let (psi, phi) = if r1 >= r2 { (r1, r2) } else { (r2, r1) };
    Ok(CharacteristicRoots { psi, phi, drift_sign })
}

#[derive(Clone)]
pub enum PayoffKind {
    Integral,
    Exchange { strike: f64 },
    Floor,
    Custom {
        name: String,
        profile: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for PayoffKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PayoffKind::Integral => write!(f, "Integral"),
            PayoffKind::Exchange { strike } => write!(f, "Exchange({strike})"),
            PayoffKind::Floor => write!(f, "Floor"),
            PayoffKind::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// A positively homogeneous payoff F(x, y) = x g(y / x), stored through its
/// profile g.
#[derive(Clone, Debug)]
pub struct Payoff {
    kind: PayoffKind,
}

impl Payoff {
    pub fn integral() -> Self {
        Self { kind: PayoffKind::Integral }
    }

    pub fn exchange(strike: f64) -> Result<Self> {
        if !(strike > 0.0) || !strike.is_finite() {
            return Err(Error::NonPositiveStrike(strike));
        }
        Ok(Self { kind: PayoffKind::Exchange { strike } })
    }

    pub fn floor() -> Self {
        Self { kind: PayoffKind::Floor }
    }

    pub fn custom<F>(name: impl Into<String>, profile: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            kind: PayoffKind::Custom { name: name.into(), profile: Arc::new(profile) },
        }
    }

    pub fn kind(&self) -> &PayoffKind {
        &self.kind
    }

    pub fn name(&self) -> String {
        match &self.kind {
            PayoffKind::Integral => "integral".into(),
            PayoffKind::Exchange { .. } => "exchange".into(),
            PayoffKind::Floor => "floor".into(),
            PayoffKind::Custom { name, .. } => name.clone(),
        }
    }

    pub fn strike(&self) -> Option<f64> {
        match self.kind {
            PayoffKind::Exchange { strike } => Some(strike),
            _ => None,
        }
    }

    /// g(z) = F(1, z).
    pub fn profile(&self, z: f64) -> f64 {
        match &self.kind {
            PayoffKind::Integral => z,
            PayoffKind::Exchange { strike } => (z - strike).max(0.0),
            PayoffKind::Floor => z.max(1.0),
            PayoffKind::Custom { profile, .. } => profile(z),
        }
    }

    /// F(x, y) for x > 0.
    pub fn evaluate(&self, x: f64, y: f64) -> f64 {
        x * self.profile(y / x)
    }

    /// Two payoffs are the same if they are the same built-in kind with the
    /// same strike. Custom payoffs compare by identity of the profile.
    pub fn same_as(&self, other: &Payoff) -> bool {
        match (&self.kind, &other.kind) {
            (PayoffKind::Integral, PayoffKind::Integral) => true,
            (PayoffKind::Floor, PayoffKind::Floor) => true,
            (PayoffKind::Exchange { strike: a }, PayoffKind::Exchange { strike: b }) => a == b,
            (PayoffKind::Custom { profile: a, .. }, PayoffKind::Custom { profile: b, .. }) => {
                Arc::ptr_eq(a, b)
            }
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_parameter_sets_are_valid() {
        assert!(ModelParams::new(0.02, 0.10, 0.05, 0.5).is_ok());
        assert!(ModelParams::new(0.0, 0.5, 0.05, 1.75).is_ok());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert_eq!(
            ModelParams::new(0.02, -0.1, 0.05, 0.0),
            Err(Error::NonPositiveSigma(-0.1))
        );
        assert_eq!(ModelParams::new(0.02, 0.1, 0.0, 0.0), Err(Error::NonPositiveRate(0.0)));
        assert_eq!(ModelParams::new(0.02, 0.1, 0.05, -1.0), Err(Error::NegativeKappa(-1.0)));
        assert!(matches!(
            ModelParams::new(0.1, 0.1, 0.05, 0.0),
            Err(Error::DegenerateRho(_))
        ));
        assert!(matches!(
            ModelParams::new(f64::NAN, 0.1, 0.05, 0.0),
            Err(Error::NonFinite { name: "mu" })
        ));
    }

    #[test]
    fn roots_at_zero_ambiguity() {
        let m = ModelParams::new(0.0, 0.5, 0.05, 0.0).unwrap();
        let p = characteristic_roots(&m, DriftSign::PlusKappa).unwrap();
        let q = characteristic_roots(&m, DriftSign::MinusKappa).unwrap();
        assert!((p.psi - 0.306_225_774_829_854_98).abs() < 1e-14);
        assert!((p.phi + 1.306_225_774_829_854_98).abs() < 1e-14);
        assert_eq!(p.psi, q.psi);
        assert_eq!(p.phi, q.phi);
    }

    #[test]
    fn minus_regime_with_negative_discount_has_two_negative_roots() {
        let m = ModelParams::new(0.0, 0.5, 0.05, 1.75).unwrap();
        let q = characteristic_roots(&m, DriftSign::MinusKappa).unwrap();
        assert!(q.psi < 0.0 && q.phi < q.psi);
    }

    #[test]
    fn upper_boundary_flag() {
        let m = ModelParams::new(0.02, 0.1, 0.05, 0.5).unwrap();
        assert!(!m.upper_boundary_admissible());
        let m = ModelParams::new(0.02, 0.1, 0.05, 0.1).unwrap();
        assert!(m.upper_boundary_admissible());
    }

    #[test]
    fn payoff_profiles() {
        assert_eq!(Payoff::integral().profile(3.0), 3.0);
        assert_eq!(Payoff::exchange(0.5).unwrap().profile(0.2), 0.0);
        assert_eq!(Payoff::exchange(0.5).unwrap().profile(2.0), 1.5);
        assert_eq!(Payoff::floor().profile(0.3), 1.0);
        assert_eq!(Payoff::floor().evaluate(2.0, 3.0), 3.0);
        assert!(Payoff::exchange(0.0).is_err());
    }
}
