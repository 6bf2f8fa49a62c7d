//! Command-line front end: CSV reproduction of boundaries, value curves and
//! sweeps, Monte Carlo checks and the acceptance suite.

pub mod commands;
pub mod csv;
pub mod settings;
pub mod verify;

use std::io::Write;
use std::path::Path;

use ambistop_core::{Error, ModelParams, Payoff};

pub use settings::{parse_values, Settings};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Model(Error),
    #[error("{0}")]
    Solver(Error),
    #[error("{0}")]
    Simulation(Error),
    #[error("{0}")]
    Io(String),
    #[error("{0} of {1} criteria failed")]
    VerifyFailed(usize, usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::VerifyFailed(..) => 1,
            CliError::Config(_) => 2,
            CliError::Model(_) => 3,
            CliError::Solver(_) => 4,
            CliError::Simulation(_) => 5,
            CliError::Io(_) => 6,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::VerifyFailed(..) => "verify",
            CliError::Config(_) => "config",
            CliError::Model(_) => "model",
            CliError::Solver(_) => "solver",
            CliError::Simulation(_) => "simulation",
            CliError::Io(_) => "io",
        }
    }

    /// One line, `error kind=<kind> code=<n> message="<text>"`.
    pub fn machine_line(&self) -> String {
        let msg = self.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
        format!("error kind={} code={} message=\"{}\"", self.kind(), self.exit_code(), msg)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NonPositiveSigma(_)
            | Error::NonPositiveRate(_)
            | Error::NegativeKappa(_)
            | Error::DegenerateRho(_)
            | Error::NonFinite { .. }
            | Error::NonPositiveStrike(_)
            | Error::PreconditionViolated(_) => CliError::Model(e),
            Error::InvalidInitialState { .. }
            | Error::StepTooLarge { .. }
            | Error::StartInStopRegion(_)
            | Error::InvalidConfig(_) => CliError::Simulation(e),
            _ => CliError::Solver(e),
        }
    }
}

pub fn model_from(settings: &Settings, kappa: f64) -> Result<ModelParams, CliError> {
    let mu = settings.f64_required("mu")?;
    let sigma = settings.f64_required("sigma")?;
    let r = settings.f64_required("r")?;
    Ok(ModelParams::new(mu, sigma, r, kappa)?)
}

/// Payoff names: integral, exchange, floor, put. `exchange` and `put` take
/// `strike`; put is (K − z)^+, solved with the upper-boundary solver.
pub fn payoff_from(settings: &Settings) -> Result<Payoff, CliError> {
    let name = settings.str_or("payoff", "integral");
    match name {
        "integral" => Ok(Payoff::integral()),
        "floor" => Ok(Payoff::floor()),
        "exchange" => Ok(Payoff::exchange(settings.f64_required("strike")?)?),
        "put" => {
            let k = settings.f64_required("strike")?;
            if !(k > 0.0) {
                return Err(Error::NonPositiveStrike(k).into());
            }
            Ok(Payoff::custom("put", move |z: f64| (k - z).max(0.0)))
        }
        other => Err(CliError::Config(format!(
            "--payoff: unknown payoff {other:?} (expected integral, exchange, floor or put)"
        ))),
    }
}

/// Write to `path`, or to stdout when `path` is None.
pub fn emit(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

/// Configure the global rayon pool from AMBISTOP_THREADS, if set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("AMBISTOP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("AMBISTOP_THREADS: expected a positive integer, got {v:?}")))?;
    // a second call (e.g. from tests) keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_mapping() {
        assert_eq!(CliError::from(Error::NonPositiveSigma(0.0)).exit_code(), 3);
        assert_eq!(CliError::from(Error::EmptyGrid).exit_code(), 4);
        assert_eq!(CliError::from(Error::StartInStopRegion(3.0)).exit_code(), 5);
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        let line = CliError::Io("a \"b\"\nc".into()).machine_line();
        assert_eq!(line, "error kind=io code=6 message=\"a \\\"b\\\" c\"");
    }

    #[test]
    fn payoff_names() {
        let mut s = Settings::default();
        s.set_flag("payoff", Some("put"));
        assert!(payoff_from(&s).is_err());
        s.set_flag("strike", Some("2"));
        assert_eq!(payoff_from(&s).unwrap().profile(0.5), 1.5);
        s.set_flag("payoff", Some("straddle"));
        assert_eq!(payoff_from(&s).unwrap_err().exit_code(), 2);
    }
}
