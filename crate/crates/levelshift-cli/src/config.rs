//! Model configuration files.
//!
//! A config is a TOML document. It either declares the model explicitly
//! (`[system]` plus one or more `[[coupling]]` tables) or asks for a seeded
//! random model (`[random]`). Unknown keys are rejected.
//!
//! ```toml
//! [system]
//! energies = [0.0, 1.0, 1.0]
//!
//! [[coupling]]
//! g = [[[0, 0], [1, 0], [0, 0]],
//!      [[1, 0], [0, 0], [1, 0]],
//!      [[0, 0], [1, 0], [0, 0]]]
//! reservoir = { beta = 1.0, r_max = 4.0, form_factor = { family = "gaussian_damped", gamma = 1.0, p = 1.0, width = 1.0 } }
//!
//! [run]
//! eps_grid = [0.1, 0.01]
//! ```

use std::path::Path;

use levelshift::lso::{random_model, Coupling, Generator, OpenSystemModel, SpectrumKind};
use levelshift::quad::QuadOptions;
use levelshift::reservoir::{FormFactor, ReservoirSpec};
use levelshift::smallsys::SmallSystem;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Names of the configs compiled into the binary.
pub const BUNDLED: [&str; 5] =
    ["two_level_degenerate", "three_level_b0", "three_level_generic", "simple_spectrum_random", "two_reservoir_ness"];

/// Text of a bundled config.
pub fn bundled(name: &str) -> Option<&'static str> {
    Some(match name {
        "two_level_degenerate" => include_str!("../configs/two_level_degenerate.toml"),
        "three_level_b0" => include_str!("../configs/three_level_b0.toml"),
        "three_level_generic" => include_str!("../configs/three_level_generic.toml"),
        "simple_spectrum_random" => include_str!("../configs/simple_spectrum_random.toml"),
        "two_reservoir_ness" => include_str!("../configs/two_reservoir_ness.toml"),
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemConfig>,
    #[serde(default, rename = "coupling", skip_serializing_if = "Vec::is_empty")]
    pub couplings: Vec<CouplingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomConfig>,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Ascending energy levels.
    pub energies: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degeneracy_tol: Option<f64>,
    /// Ordering of one Bohr sector, as `[i, j]` pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_order: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    /// Row-major `[re, im]` entries.
    pub g: Vec<Vec<[f64; 2]>>,
    pub reservoir: ReservoirConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirConfig {
    pub beta: f64,
    pub form_factor: FormFactorConfig,
    /// Radial cutoff; required except for tables, which end at their last
    /// node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FormFactorConfig {
    PowerCutoff { gamma: f64, p: f64 },
    GaussianDamped { gamma: f64, p: f64, width: f64 },
    Table { points: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomConfig {
    pub seed: u64,
    pub kind: RandomKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomKind {
    Simple,
    Degenerate,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorConfig {
    #[default]
    Standard,
    CLiouville { reference_beta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub eps_grid: Vec<f64>,
    pub kernel_tol: f64,
    pub quad_abs_tol: f64,
    pub quad_rel_tol: f64,
    pub quad_max_panels: usize,
    pub coupling_constant: f64,
    /// Seed of the randomized oracle checks.
    pub seed: u64,
    pub oracle: OracleConfig,
    pub fourth_order: FourthOrderConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let q = QuadOptions::default();
        RunConfig {
            eps_grid: vec![0.1, 0.03, 0.01],
            kernel_tol: levelshift::lso::DEFAULT_KERNEL_TOL,
            quad_abs_tol: q.abs_tol,
            quad_rel_tol: q.rel_tol,
            quad_max_panels: q.max_panels,
            coupling_constant: 0.1,
            seed: 0,
            oracle: OracleConfig::default(),
            fourth_order: FourthOrderConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// Modes per reservoir for the second-order comparison.
    pub n_modes: usize,
    pub eps: f64,
    /// Radial cutoff of the truncation; the reservoir cutoff when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    /// Accepted `‖Λ_build − Λ_oracle‖ / (1 + ‖Λ‖)`.
    pub tolerance: f64,
    pub feshbach_instances: usize,
    /// Modes of the exact Gibbs-derivative truncation.
    pub gibbs_modes: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { n_modes: 2000, eps: 1e-2, r_max: None, tolerance: 5e-3, feshbach_instances: 10, gibbs_modes: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FourthOrderConfig {
    pub n_modes: usize,
    pub eps_grid: Vec<f64>,
    pub max_levels: usize,
    pub rel_tol: f64,
    /// Tolerance of the fourth-order checks, relative.
    pub tolerance: f64,
}

impl Default for FourthOrderConfig {
    fn default() -> Self {
        FourthOrderConfig { n_modes: 1000, eps_grid: vec![0.08, 0.04, 0.02], max_levels: 4, rel_tol: 1e-2, tolerance: 1e-2 }
    }
}

/// A parsed config with its origin.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    /// File path or bundled name.
    pub source: String,
    pub config: ModelConfig,
}

impl LoadedConfig {
    /// Reads `spec` as a file path, or as a bundled config name when no
    /// such file exists.
    pub fn load(spec: &str) -> Result<Self, CliError> {
        let path = Path::new(spec);
        let text = if path.exists() {
            std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {spec}: {e}")))?
        } else if let Some(text) = bundled(spec) {
            text.to_string()
        } else {
            return Err(CliError::Config(format!(
                "{spec} is neither a file nor a bundled config ({})",
                BUNDLED.join(", ")
            )));
        };
        Ok(LoadedConfig { source: spec.to_string(), config: ModelConfig::parse(&text)? })
    }

    /// SHA-256 of the config as interpreted, in hex.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&self.config).expect("configs serialize");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

fn cfg_err(e: levelshift::error::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn positive(name: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {x}")))
    }
}

impl ModelConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ModelConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks the schema constraints serde cannot express.
    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.system, &self.random) {
            (Some(_), Some(_)) => return Err(CliError::Config("declare either [system] or [random], not both".into())),
            (None, None) => return Err(CliError::Config("missing [system] (or [random])".into())),
            (Some(_), None) if self.couplings.is_empty() => {
                return Err(CliError::Config("at least one [[coupling]] is required".into()))
            }
            (None, Some(_)) if !self.couplings.is_empty() => {
                return Err(CliError::Config("a [random] model brings its own coupling".into()))
            }
            _ => {}
        }
        for c in &self.couplings {
            positive("beta", c.reservoir.beta)?;
            match (&c.reservoir.form_factor, c.reservoir.r_max) {
                (FormFactorConfig::Table { .. }, Some(_)) => {
                    return Err(CliError::Config("a table form factor ends at its last node; drop r_max".into()))
                }
                (FormFactorConfig::Table { .. }, None) => {}
                (_, Some(r)) => positive("r_max", r)?,
                (_, None) => return Err(CliError::Config("r_max is required for this form factor".into())),
            }
        }
        if let GeneratorConfig::CLiouville { reference_beta } = self.generator {
            positive("reference_beta", reference_beta)?;
        }
        let run = &self.run;
        if run.eps_grid.is_empty() {
            return Err(CliError::Config("eps_grid must not be empty".into()));
        }
        for &e in &run.eps_grid {
            positive("eps_grid entry", e)?;
        }
        for (name, x) in [
            ("kernel_tol", run.kernel_tol),
            ("quad_abs_tol", run.quad_abs_tol),
            ("quad_rel_tol", run.quad_rel_tol),
            ("oracle.eps", run.oracle.eps),
            ("oracle.tolerance", run.oracle.tolerance),
            ("fourth_order.rel_tol", run.fourth_order.rel_tol),
            ("fourth_order.tolerance", run.fourth_order.tolerance),
        ] {
            positive(name, x)?;
        }
        if !run.coupling_constant.is_finite() {
            return Err(CliError::Config("coupling_constant must be finite".into()));
        }
        if run.oracle.n_modes == 0 || run.fourth_order.n_modes == 0 || run.fourth_order.max_levels == 0 {
            return Err(CliError::Config("mode counts and refinement levels must be positive".into()));
        }
        if run.fourth_order.eps_grid.is_empty() || run.fourth_order.eps_grid.iter().any(|e| !(*e > 0.0)) {
            return Err(CliError::Config("fourth_order.eps_grid must be nonempty and positive".into()));
        }
        Ok(())
    }

    pub fn quadrature(&self) -> QuadOptions {
        QuadOptions { abs_tol: self.run.quad_abs_tol, rel_tol: self.run.quad_rel_tol, max_panels: self.run.quad_max_panels }
    }

    /// Builds the model. Invalid physical parameters are config errors.
    pub fn build(&self) -> Result<OpenSystemModel, CliError> {
        let model = if let Some(r) = &self.random {
            let kind = match r.kind {
                RandomKind::Simple => SpectrumKind::Simple,
                RandomKind::Degenerate => SpectrumKind::Degenerate,
                RandomKind::Mixed => SpectrumKind::Mixed,
            };
            random_model(r.seed, kind).map_err(cfg_err)?
        } else {
            let sys = self.system.as_ref().ok_or_else(|| CliError::Config("missing [system]".into()))?;
            let mut small = match sys.degeneracy_tol {
                Some(tol) => SmallSystem::with_tolerance(sys.energies.clone(), tol),
                None => SmallSystem::new(sys.energies.clone()),
            }
            .map_err(cfg_err)?;
            if let Some(order) = &sys.basis_order {
                small = small.with_basis_order(order.iter().map(|p| (p[0], p[1])).collect()).map_err(cfg_err)?;
            }
            let n = small.dim();
            let couplings = self
                .couplings
                .iter()
                .map(|c| {
                    if c.g.len() != n || c.g.iter().any(|row| row.len() != n) {
                        return Err(CliError::Config(format!("coupling matrix must be {n}x{n}")));
                    }
                    let g = DMatrix::from_fn(n, n, |i, j| Complex64::new(c.g[i][j][0], c.g[i][j][1]));
                    Ok(Coupling { g, reservoir: c.reservoir.build()? })
                })
                .collect::<Result<Vec<_>, _>>()?;
            OpenSystemModel::new(small, couplings).map_err(cfg_err)?
        };
        let generator = match self.generator {
            GeneratorConfig::Standard => Generator::Standard,
            GeneratorConfig::CLiouville { reference_beta } => Generator::CLiouville { reference_beta },
        };
        Ok(model
            .with_generator(generator)
            .map_err(cfg_err)?
            .with_coupling_constant(self.run.coupling_constant)
            .with_quadrature(self.quadrature()))
    }
}

impl ReservoirConfig {
    pub fn build(&self) -> Result<ReservoirSpec, CliError> {
        let r_max = self.r_max.unwrap_or(f64::NAN);
        let ff = match &self.form_factor {
            FormFactorConfig::PowerCutoff { gamma, p } => FormFactor::power_cutoff(*gamma, *p, r_max),
            FormFactorConfig::GaussianDamped { gamma, p, width } => FormFactor::gaussian_damped(*gamma, *p, *width, r_max),
            FormFactorConfig::Table { points } => FormFactor::table(&points.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>()),
        }
        .map_err(cfg_err)?;
        ReservoirSpec::new(self.beta, ff).map_err(cfg_err)
    }
}
