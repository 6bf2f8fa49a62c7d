//! Finite-difference obstacle solver for the reduced worst-case problem
//!
//! min(h − g, max_θ −L_θ h) = 0,  L_θ h = ½σ²z²h'' + (1 − (μ − σθ)z)h' − (r − μ + σθ)h,
//!
//! on a logarithmic grid, solved by nested policy iteration: the outer loop
//! updates the stopping set, the inner loop the θ-policy on the continuation
//! set. Used as an independent reference for the closed-form solutions.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelParams, Payoff};
use crate::solvers::{integral_boundary, Boundaries, StoppingSolution};

const MAX_ITER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub z_min: f64,
    pub z_max: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn new(z_min: f64, z_max: f64, n: usize) -> Result<Self> {
        if n < 200 {
            return Err(Error::BadGrid(format!("need at least 200 nodes, got {n}")));
        }
        if !(z_min > 0.0) || !(z_max > z_min) || !z_max.is_finite() {
            return Err(Error::BadGrid(format!("need 0 < z_min < z_max, got [{z_min}, {z_max}]")));
        }
        Ok(Self { z_min, z_max, n })
    }

    /// z_min = 1e-4/r and z_max = 50 max(1/r, z̄_κ).
    pub fn for_model(model: &ModelParams, n: usize) -> Result<Self> {
        let zbar = integral_boundary(model).unwrap_or(1.0 / model.r);
        Self::new(1e-4 / model.r, 50.0 * zbar.max(1.0 / model.r), n)
    }

    pub fn dx(&self) -> f64 {
        (self.z_max / self.z_min).ln() / (self.n - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let lo = self.z_min.ln();
        let dx = self.dx();
        (0..self.n).map(|i| (lo + dx * i as f64).exp()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct GridSolution {
    pub z_nodes: Vec<f64>,
    pub h_values: Vec<f64>,
    pub active_theta: Vec<f64>,
    pub stop_mask: Vec<bool>,
    pub iterations: usize,
    pub residual: f64,
    /// Whether every outer iterate after the first was pointwise no larger
    /// than its predecessor.
    pub monotone_after_first: bool,
    spec: GridSpec,
    model: ModelParams,
    payoff: Payoff,
}

struct Stencil {
    sigma: f64,
    mu: f64,
    r: f64,
    half_s2_dx2: f64,
    dx: f64,
    s2: f64,
}

impl Stencil {
    /// (l, d, u) with (−L_θ h)_i = −l h_{i−1} + d h_i − u h_{i+1}.
    fn row(&self, z: f64, theta: f64) -> (f64, f64, f64) {
        let b = 1.0 / z - (self.mu - self.sigma * theta) - 0.5 * self.s2;
        let c = self.r - self.mu + self.sigma * theta;
        let dd = self.half_s2_dx2;
        let (l, u) = if b.abs() * self.dx <= self.s2 {
            (dd - 0.5 * b / self.dx, dd + 0.5 * b / self.dx)
        } else {
            (dd + (-b).max(0.0) / self.dx, dd + b.max(0.0) / self.dx)
        };
        (l, l + u + c, u)
    }
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / m;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// (−L_θ h)_i / d_i, the normalised continuation residual at interior node i.
fn cont_residual(st: &Stencil, z: &[f64], h: &[f64], i: usize, theta: f64) -> f64 {
    let (l, d, u) = st.row(z[i], theta);
    let (l, d) = if i == 0 { (0.0, d - l) } else { (l, d) };
    let hm = if i == 0 { 0.0 } else { h[i - 1] };
    (-l * hm + d * h[i] - u * h[i + 1]) / d
}

fn best_theta(st: &Stencil, z: &[f64], h: &[f64], i: usize, kappa: f64, current: f64) -> f64 {
    if kappa == 0.0 {
        return 0.0;
    }
    let rp = cont_residual(st, z, h, i, kappa);
    let rm = cont_residual(st, z, h, i, -kappa);
    let scale = h[i].abs().max(1e-300);
    let cur = if current > 0.0 { rp } else { rm };
    let (best, other) = if rp >= rm { (kappa, rp) } else { (-kappa, rm) };
    if other > cur + 1e-14 * scale {
        best
    } else {
        current
    }
}

/// Solve the discrete obstacle problem.
///
/// Large grids are warm-started from the policy of a grid with half as many
/// nodes, recursively; policy iteration moves the free boundary by only a
/// few cells per sweep, so a cold start would need O(N) sweeps.
pub fn solve_obstacle(model: &ModelParams, payoff: &Payoff, spec: &GridSpec) -> Result<GridSolution> {
    let spec = GridSpec::new(spec.z_min, spec.z_max, spec.n)?;
    let init = if spec.n >= 400 {
        let coarse = GridSpec::new(spec.z_min, spec.z_max, spec.n / 2)?;
        let c = solve_obstacle(model, payoff, &coarse)?;
        let ratio = (coarse.n - 1) as f64 / (spec.n - 1) as f64;
        let pick = |i: usize| ((i as f64 * ratio).round() as usize).min(coarse.n - 1);
        let m = spec.n - 1;
        Some((
            (0..m).map(|i| c.stop_mask[pick(i)]).collect::<Vec<_>>(),
            (0..m).map(|i| c.active_theta[pick(i)]).collect::<Vec<_>>(),
        ))
    } else {
        None
    };
    solve_level(model, payoff, spec, init)
}

fn solve_level(
    model: &ModelParams,
    payoff: &Payoff,
    spec: GridSpec,
    init: Option<(Vec<bool>, Vec<f64>)>,
) -> Result<GridSolution> {
    let z = spec.nodes();
    let n = spec.n;
    let m = n - 1; // unknowns 0..m, node m is Dirichlet
    let g: Vec<f64> = z.iter().map(|&zi| payoff.profile(zi)).collect();
    let dx = spec.dx();
    let s2 = model.sigma * model.sigma;
    let st = Stencil {
        sigma: model.sigma,
        mu: model.mu,
        r: model.r,
        half_s2_dx2: 0.5 * s2 / (dx * dx),
        dx,
        s2,
    };
    let kappa = model.kappa;
    let (mut stop, mut theta) = init.unwrap_or_else(|| (vec![false; m], vec![kappa; m]));
    let mut h: Vec<f64>;
    let mut iterations = 0;
    let mut monotone = true;
    let mut outer = 0;
    let mut last_outer: Option<Vec<f64>> = None;
    loop {
        outer += 1;
        if outer > MAX_ITER {
            return Err(Error::NoConvergence { what: "solve_obstacle", est_rel_error: f64::INFINITY });
        }
        // inner: θ-policy iteration with the stopping set frozen
        let mut inner = 0;
        loop {
            iterations += 1;
            inner += 1;
            if inner > MAX_ITER {
                return Err(Error::NoConvergence { what: "solve_obstacle theta policy", est_rel_error: f64::INFINITY });
            }
            let mut lo = vec![0.0; m];
            let mut di = vec![0.0; m];
            let mut up = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for i in 0..m {
                if stop[i] {
                    di[i] = 1.0;
                    rhs[i] = g[i];
                    continue;
                }
                let (l, d, u) = st.row(z[i], theta[i]);
                if i == 0 {
                    di[i] = d - l;
                } else {
                    lo[i] = -l;
                    di[i] = d;
                }
                if i + 1 < m {
                    up[i] = -u;
                } else {
                    rhs[i] += u * g[m];
                }
            }
            let sol = thomas(&lo, &di, &up, &rhs);
            let mut new_h = sol;
            new_h.push(g[m]);
            let mut changed = false;
            for i in 0..m {
                if stop[i] {
                    continue;
                }
                let t = best_theta(&st, &z, &new_h, i, kappa, theta[i]);
                if t != theta[i] {
                    theta[i] = t;
                    changed = true;
                }
            }
            h = new_h;
            if !changed {
                break;
            }
        }
        if let Some(prev) = &last_outer {
            if outer >= 3 {
                let scale = prev.iter().fold(0.0f64, |a: f64, v| a.max(v.abs()));
                if h.iter().zip(prev).any(|(a, b)| *a > *b + 1e-10 * scale) {
                    monotone = false;
                }
            }
        }
        last_outer = Some(h.clone());
        // outer: stopping-set update
        let scale = h.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let tol = 1e-13 * scale;
        let mut changed = false;
        for i in 0..m {
            if stop[i] {
                let t = best_theta(&st, &z, &h, i, kappa, kappa);
                if cont_residual(&st, &z, &h, i, t) < -tol {
                    // enter with the +κ row, which is diagonally dominant since
                    // r − μ + κσ > 0; the θ loop refines it
                    stop[i] = false;
                    theta[i] = kappa;
                    changed = true;
                }
            } else if h[i] - g[i] < -tol {
                stop[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // complementarity residual and active θ on every node
    let scale = h.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut residual = 0.0f64;
    let mut active_theta = vec![kappa; n];
    for i in 0..m {
        let t = best_theta(&st, &z, &h, i, kappa, kappa);
        active_theta[i] = t;
        let r = (h[i] - g[i]).min(cont_residual(&st, &z, &h, i, t));
        residual = residual.max(r.abs() / scale);
    }
    active_theta[m] = active_theta[m - 1];
    let mut stop_mask = stop;
    stop_mask.push(true);
    if residual > 1e-9 {
        return Err(Error::NoConvergence { what: "solve_obstacle residual", est_rel_error: residual });
    }
    Ok(GridSolution {
        z_nodes: z,
        h_values: h,
        active_theta,
        stop_mask,
        iterations,
        residual,
        monotone_after_first: monotone,
        spec,
        model: *model,
        payoff: payoff.clone(),
    })
}

impl GridSolution {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Geometric midpoints between adjacent nodes where the stop mask flips.
    pub fn transitions(&self) -> Vec<f64> {
        self.stop_mask
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] != w[1])
            .map(|(i, _)| (self.z_nodes[i] * self.z_nodes[i + 1]).sqrt())
            .collect()
    }

    /// Linear interpolation of h in ln z.
    pub fn interpolate(&self, z: f64) -> Option<f64> {
        if z < self.spec.z_min || z > self.spec.z_max {
            return None;
        }
        let t = (z / self.spec.z_min).ln() / self.spec.dx();
        let i = (t.floor() as usize).min(self.spec.n - 2);
        let f = t - i as f64;
        Some(self.h_values[i] * (1.0 - f) + self.h_values[i + 1] * f)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: std::io::Error| Error::InvalidConfig(format!("writing {}: {e}", path.display()));
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(f, "z,h,theta,stop").map_err(io)?;
        for i in 0..self.z_nodes.len() {
            writeln!(
                f,
                "{:.12e},{:.12e},{:.12e},{}",
                self.z_nodes[i], self.h_values[i], self.active_theta[i], self.stop_mask[i] as u8
            )
            .map_err(io)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub max_rel_error: f64,
    pub argmax_z: f64,
    pub n_compared: usize,
    /// Distance in cells from each analytic boundary to the nearest oracle
    /// transition (infinite if the oracle has none).
    pub boundary_offsets_cells: Vec<f64>,
    pub oracle_transitions: Vec<f64>,
}

/// Compare V(1, z) from the closed-form solution with the oracle on interior
/// nodes, excluding 5 cells at each edge.
pub fn compare(solution: &StoppingSolution, oracle: &GridSolution) -> Result<ErrorReport> {
    if solution.model() != &oracle.model || !solution.payoff().same_as(&oracle.payoff) {
        return Err(Error::MismatchedModel);
    }
    let n = oracle.z_nodes.len();
    let mut max_rel_error = 0.0f64;
    let mut argmax_z = f64::NAN;
    let mut n_compared = 0;
    for i in 5..n - 5 {
        let z = oracle.z_nodes[i];
        let a = solution.value_ratio(z)?;
        let e = (oracle.h_values[i] - a).abs() / a.abs();
        n_compared += 1;
        if e > max_rel_error || argmax_z.is_nan() {
            max_rel_error = e.max(max_rel_error);
            argmax_z = z;
        }
    }
    let transitions = oracle.transitions();
    let boundaries: Vec<f64> = match solution.boundaries() {
        Boundaries::Lower { z_star } | Boundaries::Upper { z_star } => vec![z_star],
        Boundaries::TwoSided { z1, z2, .. } => vec![z1, z2],
    };
    let dx = oracle.spec.dx();
    let boundary_offsets_cells = boundaries
        .iter()
        .map(|b| {
            transitions
                .iter()
                .map(|t| (t.ln() - b.ln()).abs() / dx)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok(ErrorReport {
        max_rel_error,
        argmax_z,
        n_compared,
        boundary_offsets_cells,
        oracle_transitions: transitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::integral_solve;

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::new(0.1, 10.0, 100).is_err());
        assert!(GridSpec::new(0.0, 10.0, 500).is_err());
        assert!(GridSpec::new(5.0, 1.0, 500).is_err());
    }

    #[test]
    fn integral_boundary_within_a_cell() {
        let m = ModelParams::new(0.0, 0.5, 0.05, 0.5).unwrap();
        let spec = GridSpec::for_model(&m, 2000).unwrap();
        let o = solve_obstacle(&m, &Payoff::integral(), &spec).unwrap();
        let s = integral_solve(&m).unwrap();
        let rep = compare(&s, &o).unwrap();
        assert!(rep.boundary_offsets_cells[0] <= 1.0, "{rep:?}");
        assert!(rep.max_rel_error < 1e-3, "{rep:?}");
    }

    #[test]
    fn exchange_and_two_sided_floor() {
        let m = ModelParams::new(0.02, 0.1, 0.05, 0.5).unwrap();
        let p = Payoff::exchange(0.5).unwrap();
        let o = solve_obstacle(&m, &p, &GridSpec::for_model(&m, 2000).unwrap()).unwrap();
        let rep = compare(&crate::solvers::solve(&m, &p).unwrap(), &o).unwrap();
        assert!(rep.max_rel_error < 1e-3, "{rep:?}");

        let m = ModelParams::new(0.0, 0.5, 0.05, 1.75).unwrap();
        let o = solve_obstacle(&m, &Payoff::floor(), &GridSpec::for_model(&m, 2000).unwrap()).unwrap();
        let rep = compare(&crate::solvers::floor_solve(&m).unwrap(), &o).unwrap();
        assert_eq!(rep.oracle_transitions.len(), 2, "{rep:?}");
        assert!(rep.max_rel_error < 1e-3, "{rep:?}");
    }

    #[test]
    fn active_theta_switches_once() {
        let m = ModelParams::new(0.0, 0.5, 0.05, 0.5).unwrap();
        let o = solve_obstacle(&m, &Payoff::integral(), &GridSpec::for_model(&m, 1000).unwrap()).unwrap();
        let s = integral_solve(&m).unwrap();
        let hz = s.switch_point().unwrap();
        for ((z, t), stop) in o.z_nodes.iter().zip(&o.active_theta).zip(&o.stop_mask) {
            if !stop && (z / hz).ln().abs() > 0.05 {
                assert_eq!(*t, if *z < hz { 0.5 } else { -0.5 }, "z={z}");
            }
        }
        let m0 = m.with_kappa(0.0).unwrap();
        let o0 = solve_obstacle(&m0, &Payoff::integral(), &GridSpec::for_model(&m0, 300).unwrap()).unwrap();
        assert!(o0.active_theta.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn more_ambiguity_lowers_value() {
        let spec = GridSpec::new(2e-3, 1500.0, 600).unwrap();
        let lo = ModelParams::new(0.0, 0.5, 0.05, 0.2).unwrap();
        let hi = lo.with_kappa(0.8).unwrap();
        let a = solve_obstacle(&lo, &Payoff::integral(), &spec).unwrap();
        let b = solve_obstacle(&hi, &Payoff::integral(), &spec).unwrap();
        assert!(a.h_values.iter().zip(&b.h_values).all(|(x, y)| *y <= *x + 1e-12 * x.abs()));
    }

    #[test]
    fn mismatched_inputs() {
        let m = ModelParams::new(0.0, 0.5, 0.05, 0.5).unwrap();
        let o = solve_obstacle(&m, &Payoff::floor(), &GridSpec::for_model(&m, 300).unwrap()).unwrap();
        let s = integral_solve(&m).unwrap();
        assert_eq!(compare(&s, &o), Err(Error::MismatchedModel));
    }
}
