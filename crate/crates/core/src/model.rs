//! The phase-invariant descriptor system
//!
//! ```text
//! dξ/dt = (g1(r) I + g2(r) J) ξ,   a3 = g3(r),   r = |ξ|
//! ```
//!
//! with `J` the rotation generator `[[0, -1], [1, 0]]`, the quadratic
//! ground-truth families used for twin experiments, and synthetic
//! measurement generation.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::gridfn::{BoundaryTags, Grid, GridFunction, LeftBc, RightBc};
use crate::ode::{self, Tolerances, Trajectory};

/// `J ξ` for the rotation generator `J = [[0, -1], [1, 0]]`.
#[inline]
pub fn rotate(xi: [f64; 2]) -> [f64; 2] {
    [-xi[1], xi[0]]
}

#[inline]
pub fn norm(xi: [f64; 2]) -> f64 {
    xi[0].hypot(xi[1])
}

#[inline]
pub(crate) fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Wraps an angle difference into `(-π, π]`.
pub(crate) fn wrap_angle(d: f64) -> f64 {
    let mut w = d % (2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    } else if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorModel {
    pub g1: GridFunction,
    pub g2: GridFunction,
    pub g3: GridFunction,
    /// Limit-cycle radius; the right end of the identifiability interval.
    pub r_circle: f64,
}

impl DescriptorModel {
    pub fn new(g1: GridFunction, g2: GridFunction, g3: GridFunction, r_circle: f64) -> Result<Self> {
        let grid = g1.grid();
        for (name, g) in [("g2", &g2), ("g3", &g3)] {
            if g.grid() != grid {
                return Err(Error::GridMismatch(format!("{name} is not on the g1 grid")));
            }
        }
        if !(r_circle > 0.0) {
            return Err(Error::Domain(format!(
                "limit-cycle radius must be positive, got {r_circle}"
            )));
        }
        Ok(DescriptorModel { g1, g2, g3, r_circle })
    }

    pub fn grid(&self) -> Grid {
        self.g1.grid()
    }

    /// Copy with `g1` replaced.
    pub fn with_g1(&self, g1: GridFunction) -> Result<Self> {
        Self::new(g1, self.g2.clone(), self.g3.clone(), self.r_circle)
    }

    pub fn with_g2(&self, g2: GridFunction) -> Result<Self> {
        Self::new(self.g1.clone(), g2, self.g3.clone(), self.r_circle)
    }

    /// `|g1(r°)|`; zero when the model has a limit cycle at `r°`.
    pub fn limit_cycle_residual(&self) -> f64 {
        self.g1.eval(self.r_circle).map(f64::abs).unwrap_or(f64::INFINITY)
    }

    /// Whether `g2 > 0` at every node.
    pub fn has_positive_frequency(&self) -> bool {
        self.g2.values().iter().all(|&v| v > 0.0)
    }

    /// Right-hand side `(g1(r) I + g2(r) J) ξ`.
    pub fn rhs(&self, xi: [f64; 2]) -> [f64; 2] {
        let r = norm(xi);
        let (a, b) = match (self.g1.eval(r), self.g2.eval(r)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => return [f64::NAN, f64::NAN],
        };
        [a * xi[0] - b * xi[1], a * xi[1] + b * xi[0]]
    }

    /// Forward solution on `[0, t_final]`.
    pub fn integrate(&self, xi0: [f64; 2], t_final: f64, tol: &Tolerances) -> Result<Trajectory<2>> {
        ode::integrate_forward(|_, y| self.rhs(*y), xi0, (0.0, t_final), tol)
    }

    /// Integrates with one fixed step between consecutive `mesh` times.
    pub fn integrate_on_mesh(&self, xi0: [f64; 2], mesh: &[f64]) -> Result<Trajectory<2>> {
        ode::integrate_on_mesh(|_, y| self.rhs(*y), xi0, mesh)
    }

    /// Simulates and samples `r`, unwrapped `θ` and `a3 = g3(r)` at
    /// `n_out` equispaced times.
    pub fn simulate(&self, xi0: [f64; 2], t_final: f64, n_out: usize, tol: &Tolerances) -> Result<Simulation> {
        let r0 = norm(xi0);
        if !(r0 > 0.0) {
            return Err(Error::Domain("initial state must be nonzero".into()));
        }
        if !(t_final > 0.0) {
            return Err(Error::Domain(format!("final time must be positive, got {t_final}")));
        }
        if n_out < 2 {
            return Err(Error::Domain("need at least two output samples".into()));
        }
        let trajectory = self.integrate(xi0, t_final, tol)?;
        let times = equispaced(t_final, n_out);
        let states = ode::sample_at(&trajectory, &times)?;
        let theta = unwrapped_phase(&trajectory, &times)?;
        let r: Vec<f64> = states.iter().map(|s| norm(*s)).collect();
        let a3 = r.iter().map(|&r| self.g3.eval(r)).collect::<Result<Vec<_>>>()?;
        Ok(Simulation {
            trajectory,
            times,
            states,
            r,
            theta,
            a3,
        })
    }
}

/// Sampled output of [`DescriptorModel::simulate`].
#[derive(Debug, Clone)]
pub struct Simulation {
    pub trajectory: Trajectory<2>,
    pub times: Vec<f64>,
    pub states: Vec<[f64; 2]>,
    pub r: Vec<f64>,
    pub theta: Vec<f64>,
    pub a3: Vec<f64>,
}

pub(crate) fn equispaced(t_final: f64, n: usize) -> Vec<f64> {
    let dt = t_final / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { t_final } else { i as f64 * dt })
        .collect()
}

/// Continuous phase at the query times (sorted ascending), unwrapped along
/// the integrator steps starting from `atan2(a2, a1)` at the first sample.
pub fn unwrapped_phase(traj: &Trajectory<2>, times: &[f64]) -> Result<Vec<f64>> {
    let steps = traj.times();
    let states = traj.states();
    let mut step_phase = Vec::with_capacity(steps.len());
    let mut prev = states[0][1].atan2(states[0][0]);
    let mut acc = prev;
    for s in states {
        let a = s[1].atan2(s[0]);
        acc += wrap_angle(a - prev);
        prev = a;
        step_phase.push(acc);
    }
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let xi = traj.eval(t)?;
        let i = match steps.partition_point(|&s| s <= t) {
            0 => 0,
            p => p - 1,
        };
        let base = states[i][1].atan2(states[i][0]);
        out.push(step_phase[i] + wrap_angle(xi[1].atan2(xi[0]) - base));
    }
    Ok(out)
}

/// Coefficients of the Landau form `g1 = σ1 − β r²`, `g2 = ω1 + γ r²`,
/// `g3 = α_Δ r²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandauParams {
    pub sigma1: f64,
    pub beta: f64,
    pub omega1: f64,
    pub gamma: f64,
    pub alpha_delta: f64,
}

impl LandauParams {
    /// Radius `√(σ1/β)` of the attracting limit cycle.
    pub fn limit_cycle_radius(&self) -> f64 {
        (self.sigma1 / self.beta).sqrt()
    }
}

pub fn landau_ground_truth(p: &LandauParams, n_nodes: usize) -> Result<DescriptorModel> {
    if !(p.sigma1 > 0.0 && p.beta > 0.0 && p.omega1 > 0.0) {
        return Err(Error::Domain(format!(
            "σ1, β, ω1 must be positive (got {}, {}, {})",
            p.sigma1, p.beta, p.omega1
        )));
    }
    let r_circle = p.limit_cycle_radius();
    let grid = Grid::new(r_circle, n_nodes)?;
    // written as σ1 (1 − (r/r°)²) so that g1(r°) vanishes exactly
    let g1 = GridFunction::from_fn(grid, |r| p.sigma1 * (1.0 - (r / r_circle).powi(2)))?
        .with_bc(BoundaryTags::new(LeftBc::Neumann0, RightBc::Dirichlet(0.0)));
    let g2 = GridFunction::from_fn(grid, |r| p.omega1 + p.gamma * r * r)?.with_bc(BoundaryTags::new(
        LeftBc::Neumann0,
        RightBc::Neumann(2.0 * p.gamma * r_circle),
    ));
    let g3 = GridFunction::from_fn(grid, |r| p.alpha_delta * r * r)?;
    DescriptorModel::new(g1, g2, g3, r_circle)
}

/// Coefficients of the mean-field model with the shift-mode amplitude
/// `a_Δ = α_Δ r²` substituted into the growth rate and frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldParams {
    pub sigma1: f64,
    pub omega1: f64,
    pub alpha_delta: f64,
    pub beta_delta: f64,
    pub gamma_delta: f64,
}

impl MeanFieldParams {
    pub fn limit_cycle_radius(&self) -> f64 {
        (self.sigma1 / (self.alpha_delta * self.beta_delta)).sqrt()
    }

    /// Shift-mode amplitude on the limit cycle, `σ1/β_Δ`.
    pub fn shift_amplitude_on_cycle(&self) -> f64 {
        self.sigma1 / self.beta_delta
    }

    pub fn as_landau(&self) -> LandauParams {
        LandauParams {
            sigma1: self.sigma1,
            beta: self.alpha_delta * self.beta_delta,
            omega1: self.omega1,
            gamma: self.alpha_delta * self.gamma_delta,
            alpha_delta: self.alpha_delta,
        }
    }
}

pub fn mean_field_ground_truth(p: &MeanFieldParams, n_nodes: usize) -> Result<DescriptorModel> {
    if !(p.sigma1 > 0.0 && p.omega1 > 0.0 && p.alpha_delta > 0.0 && p.beta_delta > 0.0) {
        return Err(Error::Domain(
            "σ1, ω1, α_Δ, β_Δ must be positive for a mean-field model".into(),
        ));
    }
    landau_ground_truth(&p.as_landau(), n_nodes)
}

/// Contamination applied to synthetic measurements.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Contamination {
    /// Relative amplitude ε₂ of the `cos 2θ` modulation applied to `r̃`.
    pub second_harmonic: f64,
    pub noise_std: f64,
    pub seed: u64,
}

/// Sampled `r̃`, unwrapped `θ̃` and `ã_Δ` on equispaced times over `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    times: Vec<f64>,
    pub r_tilde: Vec<f64>,
    pub theta_tilde: Vec<f64>,
    pub a_delta_tilde: Vec<f64>,
}

impl Measurements {
    pub fn new(times: Vec<f64>, r_tilde: Vec<f64>, theta_tilde: Vec<f64>, a_delta_tilde: Vec<f64>) -> Result<Self> {
        let n = times.len();
        if n < 2 {
            return Err(Error::Invalid("measurements need at least two samples".into()));
        }
        if r_tilde.len() != n || theta_tilde.len() != n || a_delta_tilde.len() != n {
            return Err(Error::Invalid("measurement series differ in length".into()));
        }
        if times
            .iter()
            .chain(&r_tilde)
            .chain(&theta_tilde)
            .chain(&a_delta_tilde)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Invalid("measurements contain non-finite values".into()));
        }
        if times[0].abs() > 1e-12 {
            return Err(Error::Invalid(format!(
                "measurement times must start at 0, got {}",
                times[0]
            )));
        }
        let t_final = times[n - 1];
        if !(t_final > 0.0) {
            return Err(Error::Invalid("measurement window must have positive length".into()));
        }
        let dt = t_final / (n - 1) as f64;
        for (i, t) in times.iter().enumerate() {
            if (t - i as f64 * dt).abs() > 1e-9 * t_final.max(1.0) {
                return Err(Error::Invalid(format!(
                    "measurement times are not equispaced at sample {i}"
                )));
            }
        }
        if let Some(i) = r_tilde.iter().position(|&r| r < 0.0) {
            return Err(Error::Invalid(format!("negative amplitude at sample {i}")));
        }
        Ok(Measurements {
            times,
            r_tilde,
            theta_tilde,
            a_delta_tilde,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_final(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn dt(&self) -> f64 {
        self.t_final() / (self.len() - 1) as f64
    }

    /// Trapezoidal weights on the sample times.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let dt = self.dt();
        let mut w = vec![dt; self.len()];
        w[0] = 0.5 * dt;
        let n = w.len();
        w[n - 1] = 0.5 * dt;
        w
    }

    /// Index `i` and fraction `s` with `t = (1 - s) t_i + s t_{i+1}`.
    pub(crate) fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.len();
        let x = (t / self.dt()).clamp(0.0, (n - 1) as f64);
        let i = (x.floor() as usize).min(n - 2);
        (i, x - i as f64)
    }

    /// Linear interpolation of a per-sample series at time `t`.
    pub fn interpolate(&self, series: &[f64], t: f64) -> f64 {
        let (i, s) = self.locate(t);
        (1.0 - s) * series[i] + s * series[i + 1]
    }

    /// The same signals linearly interpolated onto `n_t` equispaced samples.
    pub fn resample(&self, n_t: usize) -> Result<Measurements> {
        if n_t < 2 {
            return Err(Error::Domain("need at least two samples".into()));
        }
        let times = equispaced(self.t_final(), n_t);
        let pick = |series: &[f64]| times.iter().map(|&t| self.interpolate(series, t)).collect::<Vec<_>>();
        Measurements::new(
            times.clone(),
            pick(&self.r_tilde),
            pick(&self.theta_tilde),
            pick(&self.a_delta_tilde),
        )
    }

    pub const COLUMNS: &'static str = "t,r_tilde,theta_tilde,a_delta_tilde";

    pub fn to_csv_string(&self) -> String {
        let mut out = format!("# columns: {}\n{}\n", Self::COLUMNS, Self::COLUMNS);
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{:.17e},{:.17e},{:.17e},{:.17e}",
                self.times[i], self.r_tilde[i], self.theta_tilde[i], self.a_delta_tilde[i]
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let what = "measurements csv";
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::parse(what, e))?.clone();
        let expected: Vec<&str> = Self::COLUMNS.split(',').collect();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::parse(what, format!("expected header `{}`", Self::COLUMNS)));
        }
        let mut cols: [Vec<f64>; 4] = Default::default();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::parse(what, e))?;
            if rec.len() != 4 {
                return Err(Error::parse(what, format!("expected 4 columns, found {}", rec.len())));
            }
            for (c, field) in cols.iter_mut().zip(rec.iter()) {
                c.push(field.parse::<f64>().map_err(|e| Error::parse(what, e))?);
            }
        }
        let [t, r, th, a] = cols;
        Measurements::new(t, r, th, a).map_err(|e| Error::parse(what, e))
    }
}

/// Simulates the model and records `r̃ = r`, `θ̃ = θ`, `ã_Δ = g3(r)` at
/// `n_t` equispaced times, optionally modulating `r̃` by `1 + ε₂ cos 2θ`
/// and adding seeded Gaussian noise.
pub fn synthesize_measurements(
    m: &DescriptorModel,
    xi0: [f64; 2],
    t_final: f64,
    n_t: usize,
    contamination: &Contamination,
    tol: &Tolerances,
) -> Result<Measurements> {
    if n_t < 2 {
        return Err(Error::Domain("need at least two measurement samples".into()));
    }
    let sim = m.simulate(xi0, t_final, n_t, tol)?;
    let mut r_tilde = sim.r.clone();
    let mut theta_tilde = sim.theta.clone();
    let mut a_tilde = sim.a3.clone();
    let eps2 = contamination.second_harmonic;
    if eps2 != 0.0 {
        for (r, th) in r_tilde.iter_mut().zip(&sim.theta) {
            *r *= 1.0 + eps2 * (2.0 * th).cos();
        }
    }
    if contamination.noise_std > 0.0 {
        let normal =
            Normal::new(0.0, contamination.noise_std).map_err(|e| Error::Domain(format!("noise level: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(contamination.seed);
        for i in 0..n_t {
            r_tilde[i] = (r_tilde[i] + normal.sample(&mut rng)).max(0.0);
            theta_tilde[i] += normal.sample(&mut rng);
            a_tilde[i] += normal.sample(&mut rng);
        }
    }
    Measurements::new(sim.times, r_tilde, theta_tilde, a_tilde)
}

/// Rescales two POD amplitude series to equal energy while conserving the
/// total, `ā_i = √((λ1 + λ2) / (2 λ_i)) a_i`.
pub fn rescale_amplitudes(a1: &[f64], a2: &[f64], lambda1: f64, lambda2: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(lambda1 > 0.0 && lambda2 > 0.0) {
        return Err(Error::Domain(format!(
            "eigenvalues must be positive, got {lambda1} and {lambda2}"
        )));
    }
    let total = lambda1 + lambda2;
    let s1 = (total / (2.0 * lambda1)).sqrt();
    let s2 = (total / (2.0 * lambda2)).sqrt();
    Ok((a1.iter().map(|a| s1 * a).collect(), a2.iter().map(|a| s2 * a).collect()))
}
