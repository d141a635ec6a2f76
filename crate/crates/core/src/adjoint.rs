//! Tangent and adjoint solves for the amplitude (P1) and phase (P2)
//! identification problems, and assembly of the L2 gradient on the r-grid.
//!
//! Along a forward solution `ξ(t)` the linearized dynamics are
//! `dξ'/dt = A(ξ) ξ' + B ξ g'(r)` with
//! `A = g1 I + ξ ∇g1ᵀ + g2 J + Jξ ∇g2ᵀ` and `B = I` for perturbations of
//! `g1`, `B = J` for perturbations of `g2`. The adjoint
//! `-dξ*/dt = Aᵀ ξ* + s(t)`, `ξ*(T) = 0`, carries the misfit source `s` and
//! turns the directional derivative into `∫ ξ*ᵀ B ξ g'(r(t)) dt`.

use crate::error::{Error, Result};
use crate::gridfn::{Grid, GridFunction};
use crate::model::{dot, norm, rotate, unwrapped_phase, DescriptorModel, Measurements};
use crate::ode::{self, Tolerances, Trajectory};

/// Gradient-based identification problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Problem {
    /// Reconstruct `g1` from the amplitude `r̃`.
    P1,
    /// Reconstruct `g2` from the phase `θ̃`.
    P2,
}

impl Problem {
    /// Applies the control forcing matrix: `I ξ` for P1, `J ξ` for P2.
    #[inline]
    pub fn forcing(self, xi: [f64; 2]) -> [f64; 2] {
        match self {
            Problem::P1 => xi,
            Problem::P2 => rotate(xi),
        }
    }

    pub fn control(self, m: &DescriptorModel) -> &GridFunction {
        match self {
            Problem::P1 => &m.g1,
            Problem::P2 => &m.g2,
        }
    }

    /// `m` with the controlled function replaced by `g`.
    pub fn with_control(self, m: &DescriptorModel, g: GridFunction) -> Result<DescriptorModel> {
        match self {
            Problem::P1 => m.with_g1(g),
            Problem::P2 => m.with_g2(g),
        }
    }
}

impl std::fmt::Display for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Problem::P1 => f.write_str("p1"),
            Problem::P2 => f.write_str("p2"),
        }
    }
}

/// Numerical knobs shared by the forward, tangent and adjoint solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: Tolerances,
    /// Degenerate-state floor as a fraction of `r°`.
    pub r_min_fraction: f64,
    /// Approximate number of sub-intervals used for time quadratures of
    /// adjoint pairings; always a refinement of the measurement grid.
    pub quad_points: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: Tolerances::default(),
            r_min_fraction: 1e-6,
            quad_points: 100_000,
        }
    }
}

pub type Matrix2 = [[f64; 2]; 2];

#[inline]
fn mat_vec(a: &Matrix2, x: [f64; 2]) -> [f64; 2] {
    [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]]
}

#[inline]
fn mat_t_vec(a: &Matrix2, x: [f64; 2]) -> [f64; 2] {
    [a[0][0] * x[0] + a[1][0] * x[1], a[0][1] * x[0] + a[1][1] * x[1]]
}

/// Jacobian of the model right-hand side at `ξ`.
pub fn jacobian(m: &DescriptorModel, xi: [f64; 2]) -> Result<Matrix2> {
    let r = norm(xi);
    let g1 = m.g1.eval(r)?;
    let g2 = m.g2.eval(r)?;
    let d1 = m.g1.grad_wrt_state(xi)?;
    let d2 = m.g2.grad_wrt_state(xi)?;
    let jx = rotate(xi);
    Ok([
        [g1 + xi[0] * d1[0] + jx[0] * d2[0], -g2 + xi[0] * d1[1] + jx[0] * d2[1]],
        [g2 + xi[1] * d1[0] + jx[1] * d2[0], g1 + xi[1] * d1[1] + jx[1] * d2[1]],
    ])
}

fn jacobian_or_nan(m: &DescriptorModel, xi: [f64; 2]) -> Matrix2 {
    jacobian(m, xi).unwrap_or([[f64::NAN; 2]; 2])
}

/// Misfit source of the adjoint system, linear in time between its values
/// at the measurement instants.
#[derive(Debug, Clone)]
pub struct AdjointSource<'a> {
    meas: &'a Measurements,
    values: Vec<[f64; 2]>,
}

impl<'a> AdjointSource<'a> {
    /// Samples the source at the measurement times: `((r − r̃)/r) ξ` for P1
    /// and `(sin(θ − θ̃)/r²) Jξ` for P2.
    pub fn new(
        m: &DescriptorModel,
        traj: &Trajectory<2>,
        meas: &'a Measurements,
        problem: Problem,
        settings: &SolverSettings,
    ) -> Result<Self> {
        check_window(traj, meas)?;
        let floor = settings.r_min_fraction * m.r_circle;
        let states = ode::sample_at(traj, meas.times())?;
        let theta = match problem {
            Problem::P2 => Some(unwrapped_phase(traj, meas.times())?),
            Problem::P1 => None,
        };
        let mut values = Vec::with_capacity(states.len());
        for (i, xi) in states.iter().enumerate() {
            let r = norm(*xi);
            if !(r >= floor) {
                return Err(Error::DegenerateState {
                    t: meas.times()[i],
                    r,
                    floor,
                });
            }
            let s = match problem {
                Problem::P1 => {
                    let c = (r - meas.r_tilde[i]) / r;
                    [c * xi[0], c * xi[1]]
                }
                Problem::P2 => {
                    let th = theta.as_ref().unwrap()[i];
                    let c = (th - meas.theta_tilde[i]).sin() / (r * r);
                    let jx = rotate(*xi);
                    [c * jx[0], c * jx[1]]
                }
            };
            values.push(s);
        }
        Ok(AdjointSource { meas, values })
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == [0.0, 0.0])
    }

    pub fn at(&self, t: f64) -> [f64; 2] {
        let (i, s) = self.meas.locate(t);
        let (a, b) = (self.values[i], self.values[i + 1]);
        [(1.0 - s) * a[0] + s * b[0], (1.0 - s) * a[1] + s * b[1]]
    }
}

fn check_window(traj: &Trajectory<2>, meas: &Measurements) -> Result<()> {
    let (t0, t1) = (traj.t_start(), traj.t_end());
    if t0.abs() > 1e-12 || (t1 - meas.t_final()).abs() > 1e-9 * meas.t_final().max(1.0) {
        return Err(Error::Invalid(format!(
            "trajectory spans [{t0}, {t1}] but measurements span [0, {}]",
            meas.t_final()
        )));
    }
    Ok(())
}

/// Backward solution `ξ*(t)` of the adjoint system.
#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    traj: Trajectory<2>,
}

impl AdjointTrajectory {
    pub fn times(&self) -> &[f64] {
        self.traj.times()
    }

    pub fn costates(&self) -> &[[f64; 2]] {
        self.traj.states()
    }

    pub fn eval(&self, t: f64) -> Result<[f64; 2]> {
        self.traj.eval(t)
    }

    pub fn trajectory(&self) -> &Trajectory<2> {
        &self.traj
    }
}

/// Solves the linearized system driven by a perturbation `g_prime` of the
/// function selected by `problem`, from `ξ'(0) = 0`.
pub fn solve_tangent(
    m: &DescriptorModel,
    traj: &Trajectory<2>,
    problem: Problem,
    g_prime: &GridFunction,
    tol: &Tolerances,
) -> Result<Trajectory<2>> {
    let aug = tangent_augmented(m, traj, problem, g_prime, |_| [0.0, 0.0], tol)?;
    let states = aug.states().iter().map(|s| [s[0], s[1]]).collect();
    let derivs = aug.derivatives().iter().map(|d| [d[0], d[1]]).collect();
    Trajectory::from_samples(aug.times().to_vec(), states, derivs)
}

/// Tangent solve with a third component accumulating `∫ s(t)ᵀ ξ'(t) dt`.
pub(crate) fn tangent_augmented(
    m: &DescriptorModel,
    traj: &Trajectory<2>,
    problem: Problem,
    g_prime: &GridFunction,
    source: impl Fn(f64) -> [f64; 2],
    tol: &Tolerances,
) -> Result<Trajectory<3>> {
    if g_prime.grid() != m.grid() {
        return Err(Error::GridMismatch("perturbation is not on the model grid".into()));
    }
    let rhs = |t: f64, y: &[f64; 3]| -> [f64; 3] {
        let xi = match traj.eval(t) {
            Ok(x) => x,
            Err(_) => return [f64::NAN; 3],
        };
        let a = jacobian_or_nan(m, xi);
        let dxi = [y[0], y[1]];
        let lin = mat_vec(&a, dxi);
        let gp = g_prime.eval(norm(xi)).unwrap_or(f64::NAN);
        let bx = problem.forcing(xi);
        let s = source(t);
        [lin[0] + bx[0] * gp, lin[1] + bx[1] * gp, dot(s, dxi)]
    };
    ode::integrate_forward(rhs, [0.0; 3], (traj.t_start(), traj.t_end()), tol)
}

/// Backward adjoint solve for the given problem's misfit source.
pub fn solve_adjoint(
    m: &DescriptorModel,
    traj: &Trajectory<2>,
    meas: &Measurements,
    problem: Problem,
    settings: &SolverSettings,
) -> Result<AdjointTrajectory> {
    let source = AdjointSource::new(m, traj, meas, problem, settings)?;
    solve_adjoint_with_source(m, traj, |t| source.at(t), &settings.tol)
}

/// Backward solve of `-dξ*/dt = Aᵀ ξ* + s(t)` from `ξ*(T) = 0`.
pub fn solve_adjoint_with_source(
    m: &DescriptorModel,
    traj: &Trajectory<2>,
    source: impl Fn(f64) -> [f64; 2],
    tol: &Tolerances,
) -> Result<AdjointTrajectory> {
    let rhs = |t: f64, y: &[f64; 2]| -> [f64; 2] {
        let xi = match traj.eval(t) {
            Ok(x) => x,
            Err(_) => return [f64::NAN; 2],
        };
        let a = jacobian_or_nan(m, xi);
        let at = mat_t_vec(&a, *y);
        let s = source(t);
        [-at[0] - s[0], -at[1] - s[1]]
    };
    let traj = ode::integrate_backward(rhs, [0.0, 0.0], (traj.t_start(), traj.t_end()), tol)?;
    Ok(AdjointTrajectory { traj })
}

/// Adjoint solve with a third component accumulating
/// `∫_t^T ξ*ᵀ B ξ g'(r) dτ`; returns the value at `t = 0`.
pub(crate) fn adjoint_pairing(
    m: &DescriptorModel,
    traj: &Trajectory<2>,
    problem: Problem,
    g_prime: &GridFunction,
    source: impl Fn(f64) -> [f64; 2],
    tol: &Tolerances,
) -> Result<f64> {
    let rhs = |t: f64, y: &[f64; 3]| -> [f64; 3] {
        let xi = match traj.eval(t) {
            Ok(x) => x,
            Err(_) => return [f64::NAN; 3],
        };
        let a = jacobian_or_nan(m, xi);
        let costate = [y[0], y[1]];
        let at = mat_t_vec(&a, costate);
        let s = source(t);
        let gp = g_prime.eval(norm(xi)).unwrap_or(f64::NAN);
        let q = dot(costate, problem.forcing(xi)) * gp;
        [-at[0] - s[0], -at[1] - s[1], -q]
    };
    let aug = ode::integrate_backward(rhs, [0.0; 3], (traj.t_start(), traj.t_end()), tol)?;
    Ok(aug.first()[2])
}

/// Times of the pairing quadrature: each measurement interval split into
/// equal sub-intervals so that roughly `quad_points` intervals result.
pub(crate) fn quadrature_times(meas: &Measurements, quad_points: usize) -> Vec<f64> {
    let n = meas.len();
    let sub = quad_points.div_ceil(n - 1).max(1);
    let times = meas.times();
    let mut out = Vec::with_capacity((n - 1) * sub + 1);
    for i in 0..n - 1 {
        let (a, b) = (times[i], times[i + 1]);
        for j in 0..sub {
            out.push(a + (b - a) * j as f64 / sub as f64);
        }
    }
    out.push(times[n - 1]);
    out
}

/// Nodal sensitivities `∂J/∂g_k = ∫ ξ*ᵀ B ξ φ_k(r(t)) dt` and the L2
/// gradient obtained by dividing by the lumped nodal weights.
#[derive(Debug, Clone)]
pub struct GradientAssembly {
    pub sensitivities: Vec<f64>,
    pub l2: GridFunction,
}

/// Scatters the adjoint pairing integrand onto the hat functions of `grid`
/// along the trajectory.
pub fn assemble_l2_gradient(
    traj: &Trajectory<2>,
    adj: &AdjointTrajectory,
    meas: &Measurements,
    problem: Problem,
    grid: Grid,
    settings: &SolverSettings,
) -> Result<GradientAssembly> {
    if traj.is_empty() || adj.times().is_empty() {
        return Err(Error::Invalid("empty trajectory".into()));
    }
    let times = quadrature_times(meas, settings.quad_points);
    let mut samples = Vec::with_capacity(times.len());
    for &t in &times {
        let xi = traj.eval(t)?;
        let costate = adj.eval(t)?;
        samples.push((t, norm(xi), dot(costate, problem.forcing(xi))));
    }
    let sensitivities = grid.scatter_path(&samples)?;
    let values = sensitivities
        .iter()
        .zip(grid.lumped_weights())
        .map(|(s, w)| s / w)
        .collect();
    Ok(GradientAssembly {
        l2: GridFunction::new(grid, values)?,
        sensitivities,
    })
}

/// Pointwise L2 gradient `ξ*ᵀ B ξ · r / (ξᵀ f)` at the given times, using
/// `dt = r dr / (ξᵀ f)`. Samples where `|ξᵀ f|` is below `1e-8` of its
/// maximum are dropped. Only meaningful where `r(t)` is monotone.
pub fn pointwise_l2_gradient(
    m: &DescriptorModel,
    traj: &Trajectory<2>,
    adj: &AdjointTrajectory,
    problem: Problem,
    times: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let mut rows = Vec::with_capacity(times.len());
    for &t in times {
        let xi = traj.eval(t)?;
        let costate = adj.eval(t)?;
        let radial = dot(xi, m.rhs(xi));
        rows.push((norm(xi), dot(costate, problem.forcing(xi)), radial));
    }
    let max = rows.iter().fold(0.0f64, |a, r| a.max(r.2.abs()));
    Ok(rows
        .into_iter()
        .filter(|(_, _, radial)| radial.abs() > 1e-8 * max)
        .map(|(r, q, radial)| (r, q * r / radial))
        .collect())
}
