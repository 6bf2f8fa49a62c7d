//! Subcommands. Each handler turns merged settings into a CSV table.

use std::path::PathBuf;

use ambistop_core::excessive::Reference;
use ambistop_core::fundamental::FundamentalPair;
use ambistop_core::simulation::{self, Generator, SimConfig};
use ambistop_core::solvers::{self, Boundaries, StoppingSolution};
use ambistop_core::{DriftSign, ModelParams, Payoff, PayoffKind};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::csv::{Cell, Table};
use crate::{model_from, payoff_from, CliError, Settings};

const RANGE_HELP: &str = "Ranges: `a:b:n` is n+1 equally spaced points from a to b; `a,b,c` is a list; \
both must be strictly increasing. Flags override values read from --config (key = value lines).";

#[derive(Debug, Parser)]
#[command(name = "ambistop", version, about = "Optimal stopping of integral options under drift ambiguity", after_help = RANGE_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Characteristic roots and Wronskian constants of both drift regimes
    Roots(RootsArgs),
    /// Optimal stopping boundaries for one or more kappa values
    Boundary(BoundaryArgs),
    /// Value V(1, z), payoff and worst-case generator along a z grid
    ValueCurve(ValueCurveArgs),
    /// Boundaries over a sigma x kappa grid
    SweepKappa(SweepArgs),
    /// Kappa at which the floor problem becomes two-sided
    CriticalKappa(CriticalArgs),
    /// Monte Carlo value, Nash or martingale checks
    Simulate(SimulateArgs),
    /// Run the acceptance suite and print PASS/FAIL per criterion
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// key = value config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV destination (stdout if absent)
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<String>,
    #[arg(long)]
    pub sigma: Option<String>,
    #[arg(long)]
    pub r: Option<String>,
    /// Single value, list or range depending on the command
    #[arg(long)]
    pub kappa: Option<String>,
    /// integral, exchange, floor or put
    #[arg(long)]
    pub payoff: Option<String>,
    #[arg(long)]
    pub strike: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct RootsArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct BoundaryArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct ValueCurveArgs {
    #[command(flatten)]
    pub common: Common,
    /// z grid (default 0 to twice the largest finite boundary, 400 steps)
    #[arg(long)]
    pub z: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct CriticalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Upper end of the kappa search (default 5)
    #[arg(long)]
    pub kappa_max: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// value, nash or martingale
    #[arg(long)]
    pub check: Option<String>,
    #[arg(long)]
    pub x0: Option<String>,
    #[arg(long)]
    pub y0: Option<String>,
    /// Number of paths (default 100000)
    #[arg(long)]
    pub paths: Option<String>,
    /// Time step (default 1e-3)
    #[arg(long)]
    pub dt: Option<String>,
    /// Horizon (default 40/r, or the last checkpoint)
    #[arg(long)]
    pub t_max: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// worst, plus or minus
    #[arg(long)]
    pub generator: Option<String>,
    /// Martingale reference: zero, infinity or a positive number
    #[arg(long)]
    pub reference: Option<String>,
    /// Martingale checkpoint times (default 0.25,0.5,1)
    #[arg(long)]
    pub checkpoints: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// CSV summary destination
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Criterion ids to run, e.g. 1,2,7 (default all)
    #[arg(long)]
    pub only: Option<String>,
}

/// Merge the config file (if any) with the flags.
pub fn settings_for(common: &Common, extra: &[(&str, &Option<String>)]) -> Result<Settings, CliError> {
    let mut s = match &common.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    s.set_flag("mu", common.mu.as_deref());
    s.set_flag("sigma", common.sigma.as_deref());
    s.set_flag("r", common.r.as_deref());
    s.set_flag("kappa", common.kappa.as_deref());
    s.set_flag("payoff", common.payoff.as_deref());
    s.set_flag("strike", common.strike.as_deref());
    for (k, v) in extra {
        s.set_flag(k, v.as_deref());
    }
    Ok(s)
}

/// Run a command other than `verify`, returning the CSV text.
pub fn run(command: &Command) -> Result<(String, Option<PathBuf>), CliError> {
    let (table, out) = match command {
        Command::Roots(a) => (roots(&settings_for(&a.common, &[])?)?, &a.common.output),
        Command::Boundary(a) => (boundary(&settings_for(&a.common, &[])?)?, &a.common.output),
        Command::ValueCurve(a) => (value_curve(&settings_for(&a.common, &[("z", &a.z)])?)?, &a.common.output),
        Command::SweepKappa(a) => (sweep_kappa(&settings_for(&a.common, &[])?)?, &a.common.output),
        Command::CriticalKappa(a) => {
            (critical_kappa(&settings_for(&a.common, &[("kappa_max", &a.kappa_max)])?)?, &a.common.output)
        }
        Command::Simulate(a) => {
            let extra = [
                ("check", &a.check),
                ("x0", &a.x0),
                ("y0", &a.y0),
                ("paths", &a.paths),
                ("dt", &a.dt),
                ("t_max", &a.t_max),
                ("seed", &a.seed),
                ("generator", &a.generator),
                ("reference", &a.reference),
                ("checkpoints", &a.checkpoints),
            ];
            (simulate(&settings_for(&a.common, &extra)?)?, &a.common.output)
        }
        Command::Verify(_) => return Err(CliError::Config("verify is not a table command".into())),
    };
    Ok((table.render(), out.clone()))
}

/// Solve with the solver that matches the payoff.
pub fn solve(model: &ModelParams, payoff: &Payoff) -> Result<StoppingSolution, CliError> {
    let s = match payoff.kind() {
        PayoffKind::Custom { name, .. } if name == "put" => solvers::upper_boundary_solve(model, payoff)?,
        _ => solvers::solve(model, payoff)?,
    };
    Ok(s)
}

fn kappas(s: &Settings) -> Result<Vec<f64>, CliError> {
    s.list_or("kappa", "0")
}

fn strike_cell(s: &Settings, p: &Payoff) -> Cell {
    match p.kind() {
        PayoffKind::Custom { .. } | PayoffKind::Exchange { .. } => s.f64_or("strike", f64::NAN).unwrap_or(f64::NAN).into(),
        _ => Cell::Empty,
    }
}

fn boundary_cells(s: &StoppingSolution) -> (&'static str, Cell, Cell) {
    match s.boundaries() {
        Boundaries::Lower { z_star } => ("lower", Cell::Empty, z_star.into()),
        Boundaries::Upper { z_star } => ("upper", z_star.into(), Cell::Empty),
        Boundaries::TwoSided { z1, z2, .. } => ("two-sided", z1.into(), z2.into()),
    }
}

pub fn roots(s: &Settings) -> Result<Table, CliError> {
    let mut t = Table::new(&["kappa", "regime", "delta", "rho", "psi", "phi", "wronskian_b"]);
    for k in kappas(s)? {
        let m = model_from(s, k)?;
        for (label, sign) in [("+kappa", DriftSign::PlusKappa), ("-kappa", DriftSign::MinusKappa)] {
            let f = FundamentalPair::new(&m, sign)?;
            t.push(vec![
                k.into(),
                label.into(),
                f.delta().into(),
                f.rho().into(),
                f.roots().psi.into(),
                f.roots().phi.into(),
                f.wronskian_b().into(),
            ]);
        }
    }
    Ok(t)
}

pub fn boundary(s: &Settings) -> Result<Table, CliError> {
    let payoff = payoff_from(s)?;
    let mut t = Table::new(&[
        "payoff", "strike", "mu", "sigma", "r", "kappa", "regime", "z_lower", "z_upper", "switch_point", "pi_star",
    ]);
    let models = kappas(s)?.into_iter().map(|k| model_from(s, k)).collect::<Result<Vec<_>, _>>()?;
    let sols = models.par_iter().map(|m| solve(m, &payoff)).collect::<Result<Vec<_>, _>>()?;
    for (m, sol) in models.iter().zip(&sols) {
        let (regime, lo, hi) = boundary_cells(sol);
        t.push(vec![
            payoff.name().into(),
            strike_cell(s, &payoff),
            m.mu.into(),
            m.sigma.into(),
            m.r.into(),
            m.kappa.into(),
            regime.into(),
            lo,
            hi,
            sol.switch_point().into(),
            sol.pi_star().into(),
        ]);
    }
    Ok(t)
}

fn single_kappa(s: &Settings) -> Result<f64, CliError> {
    let k = kappas(s)?;
    if k.len() != 1 {
        return Err(CliError::Config("--kappa: this command takes a single value".into()));
    }
    Ok(k[0])
}

pub fn value_curve(s: &Settings) -> Result<Table, CliError> {
    let m = model_from(s, single_kappa(s)?)?;
    let payoff = payoff_from(s)?;
    let sol = solve(&m, &payoff)?;
    let zs = match s.raw("z") {
        Some(spec) => crate::parse_values("z", spec)?,
        None => {
            let edge = match sol.boundaries() {
                Boundaries::Lower { z_star } | Boundaries::Upper { z_star } => z_star,
                Boundaries::TwoSided { z2, .. } => z2,
            };
            crate::parse_values("z", &format!("0:{}:400", 2.0 * edge))?
        }
    };
    if zs[0] < 0.0 {
        return Err(CliError::Config("--z: values must be nonnegative".into()));
    }
    let mut t = Table::new(&["z", "value", "payoff", "continue", "generator"]);
    for z in zs {
        let v = sol.value_ratio(z)?;
        let theta = solvers::worst_case_generator(&sol, 1.0, z)?;
        t.push(vec![
            z.into(),
            v.into(),
            payoff.profile(z).into(),
            u64::from(sol.in_continuation(z)).into(),
            theta.into(),
        ]);
    }
    Ok(t)
}

pub fn sweep_kappa(s: &Settings) -> Result<Table, CliError> {
    let payoff = payoff_from(s)?;
    let mu = s.f64_required("mu")?;
    let r = s.f64_required("r")?;
    let sigmas = crate::parse_values(
        "sigma",
        s.raw("sigma").ok_or_else(|| CliError::Config("missing --sigma".into()))?,
    )?;
    let ks = kappas(s)?;
    if ks.len() < 2 {
        return Err(CliError::Config("--kappa: a sweep needs at least 2 values".into()));
    }
    let grid: Vec<(f64, f64)> = sigmas.iter().flat_map(|&sg| ks.iter().map(move |&k| (sg, k))).collect();
    let sols = grid
        .par_iter()
        .map(|&(sg, k)| {
            let m = ModelParams::new(mu, sg, r, k)?;
            solve(&m, &payoff)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let single = match payoff.kind() {
        PayoffKind::Integral => Some("z_bar"),
        PayoffKind::Exchange { .. } | PayoffKind::Custom { .. } => Some("z_star"),
        PayoffKind::Floor => None,
    };
    let mut t = match single {
        Some(col) => Table::new(&["sigma", "kappa", col]),
        None => Table::new(&["sigma", "kappa", "regime", "z1", "z2"]),
    };
    for (&(sg, k), sol) in grid.iter().zip(&sols) {
        let (regime, lo, hi) = boundary_cells(sol);
        match single {
            Some(_) => t.push(vec![sg.into(), k.into(), if regime == "upper" { lo } else { hi }]),
            None => t.push(vec![sg.into(), k.into(), regime.into(), lo, hi]),
        }
    }
    Ok(t)
}

pub fn critical_kappa(s: &Settings) -> Result<Table, CliError> {
    let mu = s.f64_required("mu")?;
    let sigma = s.f64_required("sigma")?;
    let r = s.f64_required("r")?;
    let kmax = s.f64_or("kappa_max", 5.0)?;
    let k = solvers::critical_kappa_floor(mu, sigma, r, kmax)?;
    let mut t = Table::new(&["mu", "sigma", "r", "kappa_hat"]);
    t.push(vec![mu.into(), sigma.into(), r.into(), k.into()]);
    Ok(t)
}

fn generator_from(s: &Settings) -> Result<Generator, CliError> {
    match s.str_or("generator", "worst") {
        "worst" => Ok(Generator::WorstCase),
        "plus" => Ok(Generator::ConstantPlusKappa),
        "minus" => Ok(Generator::ConstantMinusKappa),
        g => Err(CliError::Config(format!("--generator: expected worst, plus or minus, got {g:?}"))),
    }
}

fn reference_from(s: &Settings) -> Result<Reference, CliError> {
    match s.str_or("reference", "zero") {
        "zero" | "0" => Ok(Reference::Zero),
        "infinity" | "inf" => Ok(Reference::Infinity),
        v => {
            let c: f64 = v
                .parse()
                .ok()
                .filter(|c: &f64| *c > 0.0 && c.is_finite())
                .ok_or_else(|| CliError::Config(format!("--reference: expected zero, infinity or c > 0, got {v:?}")))?;
            Ok(Reference::Finite(c))
        }
    }
}

fn snake(label: &str) -> String {
    label
        .replace('+', "plus_")
        .replace('-', "minus_")
        .replace('*', "_star")
        .split(|c: char| !c.is_ascii_alphanumeric() && c != '_')
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

pub fn simulate(s: &Settings) -> Result<Table, CliError> {
    let m = model_from(s, single_kappa(s)?)?;
    let check = s.str_or("check", "value").to_string();
    let x0 = s.f64_or("x0", 1.0)?;
    let y0 = s.f64_required("y0")?;
    let n_paths = s.usize_or("paths", 100_000)?;
    let dt = s.f64_or("dt", 1e-3)?;
    let seed = s.u64_or("seed", 1)?;
    let mut cfg = SimConfig::for_model(&m, n_paths, dt, seed);
    cfg.t_max = s.f64_or("t_max", cfg.t_max)?;
    let mut t = Table::new(&["quantity", "mean", "std_error", "n_paths", "dt", "seed"]);
    let mut row = |q: String, mean: f64, se: f64| {
        t.push(vec![q.into(), mean.into(), se.into(), n_paths.into(), dt.into(), seed.into()]);
    };
    match check.as_str() {
        "value" => {
            let sol = solve(&m, &payoff_from(s)?)?;
            let e = simulation::simulate_value(&m, &sol, &generator_from(s)?, &cfg, x0, y0)?;
            row("value".into(), e.mean, e.std_error);
            row("analytic_value".into(), solvers::value(&sol, x0, y0)?, 0.0);
            row("stopped_fraction".into(), e.n_stopped as f64 / e.n_paths as f64, 0.0);
            row("truncation_bias_bound".into(), e.truncation_bias_bound, 0.0);
        }
        "nash" => {
            let sol = solve(&m, &payoff_from(s)?)?;
            let rep = simulation::nash_check(&m, &sol, &cfg, x0, y0)?;
            if let Some(why) = &rep.skipped {
                return Err(CliError::Simulation(ambistop_core::Error::PreconditionViolated(why.clone())));
            }
            row("equilibrium".into(), rep.equilibrium.mean, rep.equilibrium.std_error);
            row("analytic_value".into(), rep.analytic_value, 0.0);
            for c in &rep.comparisons {
                row(format!("diff_{}", snake(&c.label)), c.difference, c.joint_std_error);
                row(format!("pass_{}", snake(&c.label)), f64::from(u8::from(c.pass)), 0.0);
            }
        }
        "martingale" => {
            let cps = s.list_or("checkpoints", "0.25,0.5,1")?;
            if s.raw("t_max").is_none() {
                cfg.t_max = cps[cps.len() - 1].max(100.0 * dt);
            }
            let rep =
                simulation::martingale_check(&m, reference_from(s)?, &generator_from(s)?, &cfg, x0, y0, &cps)?;
            row("m0".into(), rep.m0, 0.0);
            for c in &rep.checkpoints {
                row(format!("mean_t{}", crate::csv::fmt_num(c.t)), c.mean, c.std_error);
            }
            row("matching".into(), f64::from(u8::from(rep.matching)), 0.0);
            row("pass".into(), f64::from(u8::from(rep.pass())), 0.0);
        }
        other => {
            return Err(CliError::Config(format!("--check: expected value, nash or martingale, got {other:?}")));
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(pairs: &[(&str, &str)]) -> Settings {
        let mut s = Settings::default();
        for (k, v) in pairs {
            s.set_flag(k, Some(v));
        }
        s
    }

    #[test]
    fn labels_become_identifiers() {
        assert_eq!(snake("generator +kappa at tau*"), "generator_plus_kappa_at_tau_star");
        assert_eq!(snake("band shrunk under worst case"), "band_shrunk_under_worst_case");
    }

    #[test]
    fn sweep_needs_two_points() {
        let s = settings(&[("mu", "0.02"), ("r", "0.05"), ("sigma", "0.1"), ("kappa", "0.5")]);
        assert_eq!(sweep_kappa(&s).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn floor_boundary_row() {
        let s = settings(&[("mu", "0"), ("sigma", "0.5"), ("r", "0.05"), ("kappa", "0.5,1.75"), ("payoff", "floor")]);
        let csv = boundary(&s).unwrap().render();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].contains(",lower,,27.991"), "{csv}");
        assert!(lines[2].contains(",two-sided,0.085"), "{csv}");
    }

    #[test]
    fn invalid_model_maps_to_model_error() {
        let s = settings(&[("mu", "0"), ("sigma", "-0.5"), ("r", "0.05"), ("kappa", "0.5")]);
        assert_eq!(roots(&s).unwrap_err().exit_code(), 3);
    }
}
