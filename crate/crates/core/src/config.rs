//! Run configuration, read from a TOML file with one table per stage.
//! Every key is optional and unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adjoint::SolverSettings;
use crate::error::{Error, Result};
use crate::gridfn::{Grid, GridFunction};
use crate::model::{
    landau_ground_truth, mean_field_ground_truth, Contamination, DescriptorModel, LandauParams, MeanFieldParams,
};
use crate::ode::Tolerances;
use crate::optimize::IdentificationConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Output directory; relative paths are taken from the config file's
    /// directory.
    pub out_dir: PathBuf,
    /// Measurements file; defaults to `<out_dir>/measurements.csv`.
    pub measurements: Option<PathBuf>,
    pub model: ModelSection,
    pub synth: SynthSection,
    pub ode: OdeSection,
    pub identify: IdentifySection,
    pub init: InitSection,
    pub validate: ValidateSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            out_dir: PathBuf::from("out"),
            measurements: None,
            model: ModelSection::default(),
            synth: SynthSection::default(),
            ode: OdeSection::default(),
            identify: IdentifySection::default(),
            init: InitSection::default(),
            validate: ValidateSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Landau,
    MeanField,
}

/// Ground-truth model used by `synth` and as the reference elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub family: Family,
    pub sigma1: f64,
    pub omega1: f64,
    pub alpha_delta: f64,
    /// Landau family: limit-cycle radius, `β = σ1/r°²`.
    pub r_circle: f64,
    /// Landau family: frequency coefficient in `g2 = ω1 + γ r²`.
    pub gamma: f64,
    /// Mean-field family coefficients.
    pub beta_delta: f64,
    pub gamma_delta: f64,
    pub n_nodes: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let r_circle = 2.3f64;
        let beta = 0.151 / (r_circle * r_circle);
        let gamma = 0.15 / (r_circle * r_circle);
        ModelSection {
            family: Family::Landau,
            sigma1: 0.151,
            omega1: 0.886,
            alpha_delta: 1.0,
            r_circle,
            gamma,
            beta_delta: beta,
            gamma_delta: gamma,
            n_nodes: 75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub t_final: f64,
    pub n_t: usize,
    pub xi0: [f64; 2],
    pub second_harmonic: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            t_final: 70.0,
            n_t: 500,
            xi0: [0.023, 0.0],
            second_harmonic: 0.0,
            noise_std: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeSection {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Tolerances for gradient validation, which compares small differences.
    pub validation_rel_tol: f64,
    pub validation_abs_tol: f64,
    /// Degenerate-state floor as a fraction of `r°`.
    pub r_min_fraction: f64,
    pub quad_points: usize,
}

impl Default for OdeSection {
    fn default() -> Self {
        OdeSection {
            rel_tol: 1e-8,
            abs_tol: 1e-8,
            validation_rel_tol: 1e-12,
            validation_abs_tol: 1e-12,
            r_min_fraction: 1e-6,
            quad_points: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentifySection {
    pub ell_grad: f64,
    pub ell_g3: f64,
    /// End slope `G` of `g2` at `r°`.
    pub slope_g: f64,
    pub cg_restart: usize,
    pub conv_tol: f64,
    pub min_iters: usize,
    pub max_iters: usize,
    pub initial_step_fraction: f64,
    pub bracket_growth: f64,
    pub bracket_expansions: usize,
    pub line_search_tol: f64,
}

impl Default for IdentifySection {
    fn default() -> Self {
        let d = IdentificationConfig::default();
        IdentifySection {
            ell_grad: d.ell_grad,
            ell_g3: d.ell_g3,
            slope_g: d.slope_g,
            cg_restart: d.cg_restart,
            conv_tol: d.conv_tol,
            min_iters: d.min_iters,
            max_iters: d.max_iters,
            initial_step_fraction: d.initial_step_fraction,
            bracket_growth: d.bracket_growth,
            bracket_expansions: d.bracket_expansions,
            line_search_tol: d.line_search_tol,
        }
    }
}

/// Initial guesses `g1⁰ = peak (1 − (r/r°)²)` and
/// `g2⁰ = base + (G r°/2)(r/r°)²`, unless a file is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSection {
    pub g1_peak: f64,
    pub g2_base: f64,
    pub g1_file: Option<PathBuf>,
    pub g2_file: Option<PathBuf>,
}

impl Default for InitSection {
    fn default() -> Self {
        InitSection {
            g1_peak: 0.151,
            g2_base: 0.886,
            g1_file: None,
            g2_file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemName {
    P1,
    P2,
}

/// κ sweep around `scale · truth + shift` in the direction `coeff · r^power`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    pub problem: ProblemName,
    pub epsilons: Vec<f64>,
    pub n_t: Vec<usize>,
    pub control_scale: f64,
    pub control_shift: f64,
    pub g_prime_coeff: f64,
    pub g_prime_power: i32,
}

impl Default for ValidateSection {
    fn default() -> Self {
        ValidateSection {
            problem: ProblemName::P1,
            epsilons: (0..=16).map(|i| 10f64.powf(-9.0 + 0.5 * i as f64)).collect(),
            n_t: vec![50, 500, 5000],
            control_scale: 0.8,
            control_shift: 0.0,
            g_prime_coeff: -1.0,
            g_prime_power: 3,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::parse("config", e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and anchors its relative paths at the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Config::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.anchor(base);
        Ok(cfg)
    }

    fn anchor(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        if let Some(p) = self.measurements.as_mut() {
            fix(p);
        }
        if let Some(p) = self.init.g1_file.as_mut() {
            fix(p);
        }
        if let Some(p) = self.init.g2_file.as_mut() {
            fix(p);
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.n_nodes < 3 {
            return Err(Error::Invalid("model.n_nodes must be at least 3".into()));
        }
        if self.synth.n_t < 2 {
            return Err(Error::Invalid("synth.n_t must be at least 2".into()));
        }
        if !(self.synth.t_final > 0.0) {
            return Err(Error::Invalid("synth.t_final must be positive".into()));
        }
        if !(self.synth.noise_std >= 0.0) {
            return Err(Error::Invalid("synth.noise_std must be nonnegative".into()));
        }
        for (name, v) in [
            ("ode.rel_tol", self.ode.rel_tol),
            ("ode.abs_tol", self.ode.abs_tol),
            ("ode.validation_rel_tol", self.ode.validation_rel_tol),
            ("ode.validation_abs_tol", self.ode.validation_abs_tol),
            ("ode.r_min_fraction", self.ode.r_min_fraction),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be positive")));
            }
        }
        if self.ode.quad_points == 0 {
            return Err(Error::Invalid("ode.quad_points must be positive".into()));
        }
        if self.validate.epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::Invalid("validate.epsilons must be positive".into()));
        }
        if self.validate.n_t.iter().any(|n| *n < 2) {
            return Err(Error::Invalid("validate.n_t entries must be at least 2".into()));
        }
        self.identification(self.synth.n_t).validate()
    }

    pub fn solver(&self) -> SolverSettings {
        SolverSettings {
            tol: Tolerances::new(self.ode.rel_tol, self.ode.abs_tol),
            r_min_fraction: self.ode.r_min_fraction,
            quad_points: self.ode.quad_points,
        }
    }

    pub fn validation_solver(&self) -> SolverSettings {
        SolverSettings {
            tol: Tolerances::new(self.ode.validation_rel_tol, self.ode.validation_abs_tol),
            ..self.solver()
        }
    }

    pub fn contamination(&self) -> Contamination {
        Contamination {
            second_harmonic: self.synth.second_harmonic,
            noise_std: self.synth.noise_std,
            seed: self.synth.seed,
        }
    }

    pub fn truth(&self) -> Result<DescriptorModel> {
        let m = &self.model;
        match m.family {
            Family::Landau => {
                if !(m.r_circle > 0.0) {
                    return Err(Error::Invalid("model.r_circle must be positive".into()));
                }
                let p = LandauParams {
                    sigma1: m.sigma1,
                    beta: m.sigma1 / (m.r_circle * m.r_circle),
                    omega1: m.omega1,
                    gamma: m.gamma,
                    alpha_delta: m.alpha_delta,
                };
                landau_ground_truth(&p, m.n_nodes)
            }
            Family::MeanField => mean_field_ground_truth(
                &MeanFieldParams {
                    sigma1: m.sigma1,
                    omega1: m.omega1,
                    alpha_delta: m.alpha_delta,
                    beta_delta: m.beta_delta,
                    gamma_delta: m.gamma_delta,
                },
                m.n_nodes,
            ),
        }
    }

    pub fn identification(&self, n_t: usize) -> IdentificationConfig {
        let i = &self.identify;
        IdentificationConfig {
            t_final: self.synth.t_final,
            n_t,
            n_nodes: self.model.n_nodes,
            ell_grad: i.ell_grad,
            ell_g3: i.ell_g3,
            slope_g: i.slope_g,
            cg_restart: i.cg_restart,
            conv_tol: i.conv_tol,
            min_iters: i.min_iters,
            max_iters: i.max_iters,
            initial_step_fraction: i.initial_step_fraction,
            bracket_growth: i.bracket_growth,
            bracket_expansions: i.bracket_expansions,
            line_search_tol: i.line_search_tol,
            xi0: self.synth.xi0,
            solver: self.solver(),
        }
    }

    pub fn measurements_path(&self) -> PathBuf {
        self.measurements
            .clone()
            .unwrap_or_else(|| self.out_dir.join("measurements.csv"))
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Initial `g1` guess on `grid`.
    pub fn initial_g1(&self, grid: Grid) -> Result<GridFunction> {
        if let Some(p) = &self.init.g1_file {
            return GridFunction::read_csv(p);
        }
        let (peak, rc) = (self.init.g1_peak, grid.r_max());
        GridFunction::from_fn(grid, |r| peak * (1.0 - (r / rc).powi(2)))
    }

    /// Initial `g2` guess on `grid`, whose slope at `r°` is `G`.
    pub fn initial_g2(&self, grid: Grid) -> Result<GridFunction> {
        if let Some(p) = &self.init.g2_file {
            return GridFunction::read_csv(p);
        }
        let (base, g, rc) = (self.init.g2_base, self.identify.slope_g, grid.r_max());
        GridFunction::from_fn(grid, |r| base + 0.5 * g * rc * (r / rc).powi(2))
    }
}
