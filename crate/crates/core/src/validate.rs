//! Gradient checks: the κ ratio of finite-difference to adjoint directional
//! derivatives, a per-node central-difference oracle and the tangent/adjoint
//! duality gap.

use std::path::Path;

use crate::adjoint::{self, AdjointSource, Problem, SolverSettings};
use crate::error::{Error, Result};
use crate::gridfn::GridFunction;
use crate::model::{DescriptorModel, Measurements};
use crate::ode::{Tolerances, Trajectory};
use crate::optimize::{problem_cost, problem_gradient, trajectory_cost};

/// Base point of a κ evaluation: `J(g)` and the adjoint prediction
/// `∫ ∇J · g' dr`, reused across many `ε`. Perturbed costs replay the base
/// solve's step sequence, so the difference quotient carries no noise from
/// adaptive step selection.
#[derive(Debug, Clone)]
pub struct KappaProbe<'a> {
    problem: Problem,
    model: &'a DescriptorModel,
    g_prime: &'a GridFunction,
    meas: &'a Measurements,
    xi0: [f64; 2],
    mesh: Vec<f64>,
    base_cost: f64,
    predicted: f64,
}

impl<'a> KappaProbe<'a> {
    pub fn new(
        problem: Problem,
        model: &'a DescriptorModel,
        g_prime: &'a GridFunction,
        meas: &'a Measurements,
        xi0: [f64; 2],
        settings: &SolverSettings,
    ) -> Result<Self> {
        if g_prime.grid() != model.grid() {
            return Err(Error::GridMismatch("perturbation is not on the model grid".into()));
        }
        let (_, traj) = problem_cost(problem, model, meas, xi0, &settings.tol)?;
        let grad = problem_gradient(problem, model, &traj, meas, settings)?;
        let mesh = traj.times().to_vec();
        let base_cost = trajectory_cost(problem, &model.integrate_on_mesh(xi0, &mesh)?, meas)?;
        let predicted = grad
            .sensitivities
            .iter()
            .zip(g_prime.values())
            .map(|(s, v)| s * v)
            .sum();
        Ok(KappaProbe {
            problem,
            model,
            g_prime,
            meas,
            xi0,
            mesh,
            base_cost,
            predicted,
        })
    }

    pub fn base_cost(&self) -> f64 {
        self.base_cost
    }

    /// Adjoint directional derivative `Σ_k S_k g'_k`.
    pub fn predicted(&self) -> f64 {
        self.predicted
    }

    /// One-sided difference quotient divided by the adjoint prediction.
    pub fn kappa(&self, eps: f64) -> Result<f64> {
        if eps == 0.0 || !eps.is_finite() {
            return Err(Error::Invalid(format!("epsilon must be finite and nonzero, got {eps}")));
        }
        if self.predicted.abs() < 1e-30 {
            return Err(Error::DegenerateDirection(format!(
                "adjoint directional derivative {:e} is too small",
                self.predicted
            )));
        }
        let control = self.problem.control(self.model).axpy(eps, self.g_prime)?;
        let perturbed = self.problem.with_control(self.model, control)?;
        let traj = perturbed.integrate_on_mesh(self.xi0, &self.mesh)?;
        let j = trajectory_cost(self.problem, &traj, self.meas)?;
        Ok((j - self.base_cost) / eps / self.predicted)
    }
}

/// κ for a single `ε`.
pub fn kappa(
    problem: Problem,
    m: &DescriptorModel,
    g_prime: &GridFunction,
    eps: f64,
    meas: &Measurements,
    xi0: [f64; 2],
    settings: &SolverSettings,
) -> Result<f64> {
    KappaProbe::new(problem, m, g_prime, meas, xi0, settings)?.kappa(eps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaRow {
    pub epsilon: f64,
    pub n_t: usize,
    pub kappa: f64,
}

impl KappaRow {
    pub fn log10_deviation(&self) -> f64 {
        (self.kappa - 1.0).abs().log10()
    }
}

/// κ over every `(ε, N_T)` pair, with the measurements resampled to each
/// `N_T`. Rows are sorted by `N_T`, then `ε`.
pub fn kappa_sweep(
    problem: Problem,
    m: &DescriptorModel,
    g_prime: &GridFunction,
    eps_list: &[f64],
    n_t_list: &[usize],
    meas: &Measurements,
    xi0: [f64; 2],
    settings: &SolverSettings,
) -> Result<Vec<KappaRow>> {
    let mut n_ts = n_t_list.to_vec();
    n_ts.sort_unstable();
    n_ts.dedup();
    let mut eps: Vec<f64> = eps_list.to_vec();
    eps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut rows = Vec::with_capacity(n_ts.len() * eps.len());
    for n_t in n_ts {
        let resampled = meas.resample(n_t)?;
        let probe = KappaProbe::new(problem, m, g_prime, &resampled, xi0, settings)?;
        for &e in &eps {
            rows.push(KappaRow {
                epsilon: e,
                n_t,
                kappa: probe.kappa(e)?,
            });
        }
    }
    Ok(rows)
}

pub const SWEEP_COLUMNS: &str = "epsilon,n_t,kappa,log10_abs_kappa_minus_1";

pub fn sweep_to_csv_string(rows: &[KappaRow]) -> String {
    let mut s = format!("# columns: {SWEEP_COLUMNS}\n{SWEEP_COLUMNS}\n");
    for r in rows {
        s.push_str(&format!(
            "{:e},{},{:.15e},{:.6}\n",
            r.epsilon,
            r.n_t,
            r.kappa,
            r.log10_deviation()
        ));
    }
    s
}

pub fn write_sweep_csv(rows: &[KappaRow], path: &Path) -> Result<()> {
    std::fs::write(path, sweep_to_csv_string(rows)).map_err(|e| Error::io(path, e))
}

/// Longest run of consecutive `ε` (sorted) with `|κ − 1| ≤ threshold`, as
/// `(ε_lo, ε_hi)`.
pub fn plateau(rows: &[KappaRow], threshold: f64) -> Option<(f64, f64)> {
    let mut sorted: Vec<&KappaRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.epsilon.partial_cmp(&b.epsilon).unwrap());
    let mut best: Option<(f64, f64)> = None;
    let mut start: Option<f64> = None;
    let width = |p: (f64, f64)| (p.1 / p.0).log10();
    for r in sorted {
        if (r.kappa - 1.0).abs() <= threshold {
            let cand = (*start.get_or_insert(r.epsilon), r.epsilon);
            if best.is_none_or(|b| width(cand) > width(b)) {
                best = Some(cand);
            }
        } else {
            start = None;
        }
    }
    best
}

/// Among runs of consecutive `ε` that stay within `threshold` and span at
/// least `decades`, the one with the smallest `sup|κ − 1|`, as
/// `(ε_lo, ε_hi, sup)`. Runs are kept as short as the span allows.
pub fn tightest_window(rows: &[KappaRow], threshold: f64, decades: f64) -> Option<(f64, f64, f64)> {
    let mut sorted: Vec<&KappaRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.epsilon.partial_cmp(&b.epsilon).unwrap());
    let dev: Vec<f64> = sorted.iter().map(|r| (r.kappa - 1.0).abs()).collect();
    let mut best: Option<(f64, f64, f64)> = None;
    for i in 0..sorted.len() {
        let mut sup = 0.0f64;
        for j in i..sorted.len() {
            if !(dev[j] <= threshold) {
                break;
            }
            sup = sup.max(dev[j]);
            if (sorted[j].epsilon / sorted[i].epsilon).log10() >= decades - 1e-9 {
                if best.is_none_or(|b| sup < b.2) {
                    best = Some((sorted[i].epsilon, sorted[j].epsilon, sup));
                }
                break;
            }
        }
    }
    best
}

/// Central, forward and backward difference quotients for one nodal value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeDifferences {
    pub forward: f64,
    pub backward: f64,
    pub central: f64,
}

/// Difference quotients of `J` with respect to the nodal value `k` of the
/// controlled function.
pub fn fd_node_differences(
    problem: Problem,
    m: &DescriptorModel,
    k: usize,
    eps: f64,
    meas: &Measurements,
    xi0: [f64; 2],
    tol: &Tolerances,
) -> Result<NodeDifferences> {
    let grid = m.grid();
    if k >= grid.n_nodes() {
        return Err(Error::Invalid(format!(
            "node {k} outside grid of {} nodes",
            grid.n_nodes()
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Invalid(format!("epsilon must be positive, got {eps}")));
    }
    let mut hat = vec![0.0; grid.n_nodes()];
    hat[k] = 1.0;
    let hat = GridFunction::new(grid, hat)?;
    let cost = |s: f64| -> Result<f64> {
        let control = problem.control(m).axpy(s, &hat)?;
        Ok(problem_cost(problem, &problem.with_control(m, control)?, meas, xi0, tol)?.0)
    };
    let (jp, j0, jm) = (cost(eps)?, cost(0.0)?, cost(-eps)?);
    Ok(NodeDifferences {
        forward: (jp - j0) / eps,
        backward: (j0 - jm) / eps,
        central: (jp - jm) / (2.0 * eps),
    })
}

/// Central-difference estimate of the nodal sensitivity at node `k`.
pub fn fd_node_gradient(
    problem: Problem,
    m: &DescriptorModel,
    k: usize,
    eps: f64,
    meas: &Measurements,
    xi0: [f64; 2],
    tol: &Tolerances,
) -> Result<f64> {
    Ok(fd_node_differences(problem, m, k, eps, meas, xi0, tol)?.central)
}

/// Both sides of the adjoint identity and their relative mismatch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityReport {
    /// `∫ sᵀ ξ' dt` from the tangent solve.
    pub tangent_side: f64,
    /// `∫ ξ*ᵀ B ξ g'(r) dt` from the adjoint solve.
    pub adjoint_side: f64,
    pub relative_gap: f64,
}

/// Evaluates both pairings, each as an extra component of its own ODE.
pub fn duality_gap(
    m: &DescriptorModel,
    traj: &Trajectory<2>,
    problem: Problem,
    g_prime: &GridFunction,
    meas: &Measurements,
    settings: &SolverSettings,
) -> Result<DualityReport> {
    let source = AdjointSource::new(m, traj, meas, problem, settings)?;
    let tangent = adjoint::tangent_augmented(m, traj, problem, g_prime, |t| source.at(t), &settings.tol)?;
    let tangent_side = tangent.last()[2];
    let adjoint_side = adjoint::adjoint_pairing(m, traj, problem, g_prime, |t| source.at(t), &settings.tol)?;
    let scale = tangent_side.abs().max(adjoint_side.abs()).max(1e-30);
    Ok(DualityReport {
        tangent_side,
        adjoint_side,
        relative_gap: (tangent_side - adjoint_side).abs() / scale,
    })
}
