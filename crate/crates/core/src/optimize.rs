//! Cost functionals, a bounded Brent line search and the Polak-Ribière
//! conjugate-gradient loop that reconstructs `g1` (P1) and `g2` (P2).

use std::path::Path;

use crate::adjoint::{assemble_l2_gradient, solve_adjoint, GradientAssembly, Problem, SolverSettings};
use crate::error::{Error, Result};
use crate::gridfn::{BoundaryTags, GridFunction, LeftBc, RightBc};
use crate::model::{norm, unwrapped_phase, DescriptorModel, Measurements};
use crate::ode::{self, Tolerances, Trajectory};
use crate::sobolev::{end_slopes, sobolev_gradient};

/// Parameters of an identification run.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationConfig {
    pub t_final: f64,
    pub n_t: usize,
    pub n_nodes: usize,
    /// Smoothing length for the P1/P2 Sobolev gradients.
    pub ell_grad: f64,
    /// Smoothing length for the P3 smoother.
    pub ell_g3: f64,
    /// Prescribed slope of `g2` at `r°`.
    pub slope_g: f64,
    pub cg_restart: usize,
    pub conv_tol: f64,
    pub min_iters: usize,
    pub max_iters: usize,
    /// First bracket: largest nodal change as a fraction of `max|g|`.
    pub initial_step_fraction: f64,
    /// Bracket growth factor when the minimum sits on the upper end.
    pub bracket_growth: f64,
    pub bracket_expansions: usize,
    /// Brent tolerance relative to the bracket length.
    pub line_search_tol: f64,
    pub xi0: [f64; 2],
    pub solver: SolverSettings,
}

impl Default for IdentificationConfig {
    fn default() -> Self {
        IdentificationConfig {
            t_final: 70.0,
            n_t: 500,
            n_nodes: 75,
            ell_grad: 1.0,
            ell_g3: 0.1,
            slope_g: 0.224,
            cg_restart: 20,
            conv_tol: 1e-7,
            min_iters: 3,
            max_iters: 500,
            initial_step_fraction: 0.1,
            bracket_growth: 2.618,
            bracket_expansions: 12,
            line_search_tol: 1e-4,
            xi0: [0.023, 0.0],
            solver: SolverSettings::default(),
        }
    }
}

impl IdentificationConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("T", self.t_final),
            ("ell_grad", self.ell_grad),
            ("ell_g3", self.ell_g3),
            ("conv_tol", self.conv_tol),
            ("initial_step_fraction", self.initial_step_fraction),
            ("line_search_tol", self.line_search_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_t < 2 {
            return Err(Error::Invalid("n_t must be at least 2".into()));
        }
        if self.n_nodes < 3 {
            return Err(Error::Invalid("n_nodes must be at least 3".into()));
        }
        if self.cg_restart == 0 {
            return Err(Error::Invalid("cg_restart must be positive".into()));
        }
        if !(self.bracket_growth > 1.0) {
            return Err(Error::Invalid("bracket_growth must exceed 1".into()));
        }
        if !self.slope_g.is_finite() || !self.xi0.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid("non-finite slope or initial state".into()));
        }
        Ok(())
    }
}

fn trapezoid(meas: &Measurements, f: impl Fn(usize) -> f64) -> f64 {
    meas.quadrature_weights()
        .iter()
        .enumerate()
        .map(|(i, w)| w * f(i))
        .sum()
}

fn check_traj_window(traj: &Trajectory<2>, meas: &Measurements) -> Result<Vec<[f64; 2]>> {
    if traj.t_start().abs() > 1e-12 || (traj.t_end() - meas.t_final()).abs() > 1e-9 * meas.t_final().max(1.0) {
        return Err(Error::Invalid(
            "trajectory and measurements cover different windows".into(),
        ));
    }
    ode::sample_at(traj, meas.times())
}

/// `½ ∫ (r − r̃)² dt` by the trapezoidal rule on the measurement grid.
pub fn j1_from_trajectory(traj: &Trajectory<2>, meas: &Measurements) -> Result<f64> {
    let states = check_traj_window(traj, meas)?;
    Ok(trapezoid(meas, |i| 0.5 * (norm(states[i]) - meas.r_tilde[i]).powi(2)))
}

/// `∫ (1 − cos(θ − θ̃)) dt` by the trapezoidal rule.
pub fn j2_from_trajectory(traj: &Trajectory<2>, meas: &Measurements) -> Result<f64> {
    check_traj_window(traj, meas)?;
    let theta = unwrapped_phase(traj, meas.times())?;
    Ok(trapezoid(meas, |i| 1.0 - (theta[i] - meas.theta_tilde[i]).cos()))
}

pub fn evaluate_j1(m: &DescriptorModel, meas: &Measurements, xi0: [f64; 2], tol: &Tolerances) -> Result<f64> {
    j1_from_trajectory(&m.integrate(xi0, meas.t_final(), tol)?, meas)
}

pub fn evaluate_j2(m: &DescriptorModel, meas: &Measurements, xi0: [f64; 2], tol: &Tolerances) -> Result<f64> {
    j2_from_trajectory(&m.integrate(xi0, meas.t_final(), tol)?, meas)
}

/// `½ ∫ (g3(r(t)) − ã_Δ(t))² dt` by the trapezoidal rule.
pub fn evaluate_j3(g3: &GridFunction, traj: &Trajectory<2>, meas: &Measurements) -> Result<f64> {
    let states = check_traj_window(traj, meas)?;
    let mut vals = Vec::with_capacity(states.len());
    for (i, xi) in states.iter().enumerate() {
        vals.push(0.5 * (g3.eval(norm(*xi))? - meas.a_delta_tilde[i]).powi(2));
    }
    Ok(trapezoid(meas, |i| vals[i]))
}

/// Cost of `problem` for model `m` together with the forward trajectory.
pub fn problem_cost(
    problem: Problem,
    m: &DescriptorModel,
    meas: &Measurements,
    xi0: [f64; 2],
    tol: &Tolerances,
) -> Result<(f64, Trajectory<2>)> {
    let traj = m.integrate(xi0, meas.t_final(), tol)?;
    Ok((trajectory_cost(problem, &traj, meas)?, traj))
}

/// The problem's cost along an already computed trajectory.
pub fn trajectory_cost(problem: Problem, traj: &Trajectory<2>, meas: &Measurements) -> Result<f64> {
    match problem {
        Problem::P1 => j1_from_trajectory(traj, meas),
        Problem::P2 => j2_from_trajectory(traj, meas),
    }
}

/// Adjoint gradient of the problem's cost along a computed trajectory.
pub fn problem_gradient(
    problem: Problem,
    m: &DescriptorModel,
    traj: &Trajectory<2>,
    meas: &Measurements,
    settings: &SolverSettings,
) -> Result<GradientAssembly> {
    let adj = solve_adjoint(m, traj, meas, problem, settings)?;
    assemble_l2_gradient(traj, &adj, meas, problem, m.grid(), settings)
}

/// Outcome of a line search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchResult {
    pub tau: f64,
    pub value: f64,
    /// No point with `φ(τ) < φ(0)` was found; `tau` is 0.
    pub no_progress: bool,
    pub evaluations: usize,
}

/// Minimizes `φ` over `[0, τ_max]` by Brent's method (golden section with
/// parabolic interpolation). Non-finite values count as `+∞`. Returns
/// `τ = 0` with `no_progress` set when nothing beats `φ(0)`.
pub fn brent_line_search(mut phi: impl FnMut(f64) -> f64, tau_max: f64, tol: f64) -> Result<LineSearchResult> {
    if !(tau_max > 0.0 && tau_max.is_finite()) || !(tol > 0.0) {
        return Err(Error::Invalid(format!(
            "bad line-search bracket (0, {tau_max}] or tolerance {tol}"
        )));
    }
    let mut eval = |t: f64| {
        let v = phi(t);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let phi0 = eval(0.0);
    let mut evaluations = 1;
    let golden = 0.5 * (3.0 - 5f64.sqrt());
    let eps = f64::EPSILON.sqrt();
    let (mut a, mut b) = (0.0, tau_max);
    let mut x = golden * b;
    let mut fx = eval(x);
    evaluations += 1;
    // pull the bracket in until the first probe succeeds
    while !fx.is_finite() && b > tol {
        b = x;
        x = golden * b;
        fx = eval(x);
        evaluations += 1;
    }
    let (mut w, mut v) = (x, x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let tol1 = eps * x.abs() + tol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - mid).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut parabolic = false;
        if e.abs() > tol1 && fx.is_finite() && fw.is_finite() && fv.is_finite() {
            let mut r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            r = e;
            e = d;
            if p.abs() < (0.5 * q * r).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < mid { tol1 } else { -tol1 };
                }
                parabolic = true;
            }
        }
        if !parabolic {
            e = if x < mid { b - x } else { a - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = eval(u);
        evaluations += 1;
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    if fx < phi0 {
        Ok(LineSearchResult {
            tau: x,
            value: fx,
            no_progress: false,
            evaluations,
        })
    } else {
        Ok(LineSearchResult {
            tau: 0.0,
            value: phi0,
            no_progress: true,
            evaluations,
        })
    }
}

/// One row per iterate; row 0 is the initial guess.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: f64,
    /// Step length that produced this iterate.
    pub step: f64,
    /// H1 norm of the Sobolev gradient at this iterate.
    pub grad_norm: f64,
    /// The step that produced this iterate used the plain gradient direction.
    pub restart: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationHistory {
    pub records: Vec<IterationRecord>,
}

impl IterationHistory {
    pub const COLUMNS: &'static str = "iter,cost,step,grad_norm,restart";

    pub fn costs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cost).collect()
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.records.windows(2).all(|w| w[1].cost <= w[0].cost)
    }

    /// Iterations whose step restarted from the plain gradient.
    pub fn restart_iterations(&self) -> Vec<usize> {
        self.records.iter().filter(|r| r.restart).map(|r| r.iter).collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = format!("# columns: {}\n{}\n", Self::COLUMNS, Self::COLUMNS);
        for r in &self.records {
            s.push_str(&format!(
                "{},{:e},{:e},{:e},{}\n",
                r.iter, r.cost, r.step, r.grad_norm, r.restart as u8
            ));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Relative cost change fell below the threshold.
    Converged,
    /// Zero cost or zero gradient.
    ExactOptimum,
    /// No decrease along the steepest-descent direction.
    Stationary,
    MaxIterations,
}

impl Termination {
    pub fn is_converged(self) -> bool {
        !matches!(self, Termination::MaxIterations)
    }
}

#[derive(Debug, Clone)]
pub struct IdentificationOutcome {
    pub estimate: GridFunction,
    pub history: IterationHistory,
    pub termination: Termination,
    /// Largest change of the held one-sided end slopes (left for P1, both
    /// for P2) over all iterates; zero up to round-off.
    pub end_slope_drift: f64,
}

/// Boundary tags a P1 or P2 control must carry.
pub fn problem_tags(problem: Problem, slope_g: f64) -> BoundaryTags {
    match problem {
        Problem::P1 => BoundaryTags::new(LeftBc::Neumann0, RightBc::Dirichlet(0.0)),
        Problem::P2 => BoundaryTags::new(LeftBc::Neumann0, RightBc::Neumann(slope_g)),
    }
}

fn check_initial_bcs(problem: Problem, g: &GridFunction, slope_g: f64) -> Result<()> {
    let scale = g.max_abs().max(1.0);
    let (left, right) = end_slopes(g);
    let slope_tol = 1e-3 * (1.0 + slope_g.abs());
    if left.abs() > slope_tol * scale {
        return Err(Error::Invalid(format!(
            "initial guess has slope {left} at r = 0, expected 0"
        )));
    }
    match problem {
        Problem::P1 => {
            let last = *g.values().last().unwrap();
            if last.abs() > 1e-12 * scale {
                return Err(Error::Invalid(format!("initial g1 is {last} at r°, expected 0")));
            }
        }
        Problem::P2 => {
            if (right - slope_g).abs() > slope_tol * scale {
                return Err(Error::Invalid(format!(
                    "initial g2 has slope {right} at r°, expected {slope_g}"
                )));
            }
        }
    }
    Ok(())
}

/// Builds the model in which the control of `problem` is `g`. P1 runs with
/// `g2 ≡ 0`, which leaves the amplitude dynamics unchanged.
fn model_for(problem: Problem, g: &GridFunction, partner: &GridFunction, r_circle: f64) -> Result<DescriptorModel> {
    let grid = g.grid();
    match problem {
        Problem::P1 => DescriptorModel::new(
            g.clone(),
            GridFunction::zeros(grid),
            GridFunction::zeros(grid),
            r_circle,
        ),
        Problem::P2 => DescriptorModel::new(partner.clone(), g.clone(), GridFunction::zeros(grid), r_circle),
    }
}

struct Iterate {
    g: GridFunction,
    cost: f64,
    grad: GradientAssembly,
    sobolev: GridFunction,
}

/// Reconstructs the control of `problem` by nonlinear conjugate gradients
/// with Sobolev gradients. For P1 `partner` is ignored; for P2 it is the
/// fixed `ĝ1`.
pub fn cg_identify(
    problem: Problem,
    g_init: &GridFunction,
    partner: &GridFunction,
    meas: &Measurements,
    cfg: &IdentificationConfig,
) -> Result<IdentificationOutcome> {
    cfg.validate()?;
    if problem == Problem::P2 && partner.grid() != g_init.grid() {
        return Err(Error::GridMismatch("g1 and g2 grids differ".into()));
    }
    check_initial_bcs(problem, g_init, cfg.slope_g)?;
    let r_circle = g_init.r_max();
    let tags = problem_tags(problem, cfg.slope_g);
    let settings = cfg.solver;
    let tol = settings.tol;

    let cost_of = |g: &GridFunction| -> Result<(f64, Trajectory<2>)> {
        let m = model_for(problem, g, partner, r_circle)?;
        problem_cost(problem, &m, meas, cfg.xi0, &tol)
    };
    let iterate_at = |g: GridFunction, cost: f64, traj: &Trajectory<2>| -> Result<Iterate> {
        let m = model_for(problem, &g, partner, r_circle)?;
        let grad = problem_gradient(problem, &m, traj, meas, &settings)?;
        let sobolev = sobolev_gradient(&grad.l2, cfg.ell_grad, problem)?;
        Ok(Iterate { g, cost, grad, sobolev })
    };

    let g0 = g_init.clone().with_bc(tags);
    let (slope_left0, slope_right0) = end_slopes(&g0);
    let (j0, traj0) = cost_of(&g0)?;
    let mut cur = iterate_at(g0, j0, &traj0)?;
    let mut history = IterationHistory::default();
    let norm_of = |s: &GridFunction| s.h1_inner(s, cfg.ell_grad).map(|v| v.max(0.0).sqrt());
    history.records.push(IterationRecord {
        iter: 0,
        cost: j0,
        step: 0.0,
        grad_norm: norm_of(&cur.sobolev)?,
        restart: false,
    });
    let mut drift = 0.0f64;
    let mut direction: Option<GridFunction> = None;
    let mut prev_sobolev: Option<GridFunction> = None;
    let mut prev_tau: Option<f64> = None;
    let mut termination = Termination::MaxIterations;

    if cur.cost == 0.0 || cur.sobolev.max_abs() == 0.0 {
        termination = Termination::ExactOptimum;
    }

    let mut iter = 0;
    while termination == Termination::MaxIterations && iter < cfg.max_iters {
        iter += 1;
        let scheduled = (iter - 1) % cfg.cg_restart == 0;
        let mut restart = scheduled || direction.is_none();
        let mut d = cur.sobolev.clone();
        if !restart {
            let prev = prev_sobolev.as_ref().unwrap();
            let denom = prev.h1_inner(prev, cfg.ell_grad)?;
            let diff = cur.sobolev.axpy(-1.0, prev)?;
            let beta = if denom > 0.0 {
                (cur.sobolev.h1_inner(&diff, cfg.ell_grad)? / denom).max(0.0)
            } else {
                0.0
            };
            d = cur.sobolev.axpy(beta, direction.as_ref().unwrap())?;
        }
        // directional derivative of J along -d must be negative
        let slope =
            |d: &GridFunction| -> f64 { cur.grad.sensitivities.iter().zip(d.values()).map(|(s, v)| s * v).sum() };
        if !restart && !(slope(&d) > 0.0) {
            d = cur.sobolev.clone();
            restart = true;
        }

        let mut accepted = None;
        loop {
            let result = line_search(&cur, &d, prev_tau, cfg, &cost_of)?;
            if !result.no_progress {
                accepted = Some(result);
                break;
            }
            if restart {
                break;
            }
            d = cur.sobolev.clone();
            restart = true;
        }
        let Some(step) = accepted else {
            termination = Termination::Stationary;
            break;
        };

        let g_new = cur.g.axpy(-step.tau, &d)?;
        let (j_new, traj_new) = cost_of(&g_new)?;
        let rel = (cur.cost - j_new).abs() / cur.cost;
        if problem == Problem::P1 {
            let last = *g_new.values().last().unwrap();
            assert!(last.abs() <= 1e-12, "P1 iterate left g(r°) = 0: {last}");
        }
        assert_eq!(g_new.bc(), tags, "iterate lost its boundary tags");
        let (sl, sr) = end_slopes(&g_new);
        let right_drift = if problem == Problem::P2 {
            (sr - slope_right0).abs()
        } else {
            0.0
        };
        drift = drift.max((sl - slope_left0).abs()).max(right_drift);
        let slope_scale = 1.0 + g_new.max_abs() / g_new.grid().spacing();
        assert!(
            drift <= 1e-10 * slope_scale,
            "iterate changed its end slopes by {drift:e}"
        );

        prev_sobolev = Some(cur.sobolev.clone());
        direction = Some(d);
        prev_tau = Some(step.tau);
        cur = iterate_at(g_new, j_new, &traj_new)?;
        history.records.push(IterationRecord {
            iter,
            cost: j_new,
            step: step.tau,
            grad_norm: norm_of(&cur.sobolev)?,
            restart,
        });
        if j_new == 0.0 || cur.sobolev.max_abs() == 0.0 {
            termination = Termination::ExactOptimum;
        } else if rel <= cfg.conv_tol && iter >= cfg.min_iters {
            termination = Termination::Converged;
        }
    }

    Ok(IdentificationOutcome {
        estimate: cur.g,
        history,
        termination,
        end_slope_drift: drift,
    })
}

/// Brent search along `g − τ d`, growing the bracket while the minimum sits
/// on its upper end and shrinking it when no decrease is found.
fn line_search(
    cur: &Iterate,
    d: &GridFunction,
    prev_tau: Option<f64>,
    cfg: &IdentificationConfig,
    cost_of: &impl Fn(&GridFunction) -> Result<(f64, Trajectory<2>)>,
) -> Result<LineSearchResult> {
    let d_max = d.max_abs();
    if d_max == 0.0 {
        return Ok(LineSearchResult {
            tau: 0.0,
            value: cur.cost,
            no_progress: true,
            evaluations: 0,
        });
    }
    let mut tau_max = match prev_tau {
        Some(t) if t > 0.0 => 2.0 * t,
        _ => cfg.initial_step_fraction * cur.g.max_abs().max(1e-3) / d_max,
    };
    let phi = |tau: f64| -> f64 {
        if tau == 0.0 {
            return cur.cost;
        }
        match cur.g.axpy(-tau, d).and_then(|g| cost_of(&g)) {
            Ok((j, _)) => j,
            Err(_) => f64::INFINITY,
        }
    };
    let mut shrinks = 0;
    let mut expansions = 0;
    loop {
        let res = brent_line_search(phi, tau_max, cfg.line_search_tol * tau_max)?;
        if res.no_progress {
            if shrinks >= 3 {
                return Ok(res);
            }
            shrinks += 1;
            tau_max /= 10.0;
            continue;
        }
        if res.tau >= 0.99 * tau_max && expansions < cfg.bracket_expansions {
            expansions += 1;
            tau_max *= cfg.bracket_growth;
            continue;
        }
        return Ok(res);
    }
}
