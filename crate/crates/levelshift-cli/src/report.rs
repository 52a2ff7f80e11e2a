//! Serializable run reports.

use std::collections::BTreeMap;

use levelshift::lso::{Check, CheckStatus, Kernel, LevelShiftOperator};
use levelshift::reservoir::Regularization;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::config::LoadedConfig;

/// A complex number as `{"re": …, "im": …}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct C64 {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for C64 {
    fn from(z: Complex64) -> Self {
        C64 { re: z.re, im: z.im }
    }
}

pub fn complex_list(zs: &[Complex64]) -> Vec<C64> {
    zs.iter().copied().map(C64::from).collect()
}

/// Row-major nested lists.
pub fn matrix(m: &DMatrix<Complex64>) -> Vec<Vec<C64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].into()).collect()).collect()
}

pub fn vector(v: &DVector<Complex64>) -> Vec<C64> {
    v.iter().copied().map(C64::from).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_source: String,
    /// SHA-256 of the effective config (after command-line overrides).
    pub config_hash: String,
    pub seed: u64,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tolerances {
    pub eps_grid: Vec<f64>,
    pub kernel_tol: f64,
    pub quad_abs_tol: f64,
    pub quad_rel_tol: f64,
    pub quad_max_panels: usize,
    pub oracle_tolerance: f64,
    pub oracle_modes: usize,
    pub oracle_eps: f64,
}

impl Provenance {
    pub fn of(cfg: &LoadedConfig) -> Self {
        let run = &cfg.config.run;
        Provenance {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            config_source: cfg.source.clone(),
            config_hash: cfg.hash(),
            seed: run.seed,
            tolerances: Tolerances {
                eps_grid: run.eps_grid.clone(),
                kernel_tol: run.kernel_tol,
                quad_abs_tol: run.quad_abs_tol,
                quad_rel_tol: run.quad_rel_tol,
                quad_max_panels: run.quad_max_panels,
                oracle_tolerance: run.oracle.tolerance,
                oracle_modes: run.oracle.n_modes,
                oracle_eps: run.oracle.eps,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub name: Option<String>,
    pub energies: Vec<f64>,
    pub bohr_frequencies: Vec<f64>,
    pub couplings: usize,
    pub generator: String,
    pub ir_class: String,
    pub coupling_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelOut {
    pub dim: usize,
    pub basis: Vec<Vec<C64>>,
    pub singular_values: Vec<f64>,
    /// Absent when nothing was discarded.
    pub gap_ratio: Option<f64>,
    pub ill_conditioned: bool,
}

impl From<&Kernel> for KernelOut {
    fn from(k: &Kernel) -> Self {
        KernelOut {
            dim: k.dim,
            basis: k.basis.iter().map(vector).collect(),
            singular_values: k.singular_values.clone(),
            gap_ratio: k.gap_ratio.is_finite().then_some(k.gap_ratio),
            ill_conditioned: k.ill_conditioned,
        }
    }
}

/// One operator: a limit or one ε of the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorOut {
    /// `"limit"` or the ε value as a string.
    pub regularization: String,
    pub norm: f64,
    pub matrix: Vec<Vec<C64>>,
    pub eigenvalues: Vec<C64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pv_part: Option<Vec<Vec<C64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_part: Option<Vec<Vec<C64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelOut>,
}

pub fn regularization_label(reg: Regularization) -> String {
    match reg {
        Regularization::Limit => "limit".into(),
        Regularization::Epsilon(e) => format!("{e:e}"),
    }
}

impl OperatorOut {
    pub fn new(l: &LevelShiftOperator, eigenvalues: &[Complex64], kernel: Option<&Kernel>) -> Self {
        OperatorOut {
            regularization: regularization_label(l.regularization),
            norm: l.norm(),
            matrix: matrix(&l.matrix),
            eigenvalues: complex_list(eigenvalues),
            pv_part: l.parts.as_ref().map(|p| matrix(&p.pv_part)),
            delta_part: l.parts.as_ref().map(|p| matrix(&p.delta_part)),
            kernel: kernel.map(KernelOut::from),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorOut {
    pub bohr_frequency: f64,
    pub pairs: Vec<[usize; 2]>,
    pub operators: Vec<OperatorOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOut {
    pub name: String,
    pub status: &'static str,
    pub residual: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckOut {
    pub fn passed(&self) -> bool {
        self.status != "fail"
    }
}

impl From<&Check> for CheckOut {
    fn from(c: &Check) -> Self {
        CheckOut {
            name: c.name.clone(),
            status: match c.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "fail",
                CheckStatus::NotApplicable => "not_applicable",
            },
            residual: c.residual,
            tolerance: c.tolerance,
            detail: c.detail.clone(),
        }
    }
}

/// Closed-form comparison for the three-level model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThreeLevelOut {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub beta: f64,
    pub delta: f64,
    pub s: f64,
    pub alpha: f64,
    pub critical_delta: f64,
    pub closed_form: Vec<Vec<C64>>,
    pub closed_form_spectrum: Vec<C64>,
    /// Largest entrywise difference between the built and closed-form
    /// operators.
    pub max_entry_difference: f64,
}

/// Closed-form comparison for the doubly degenerate two-level model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoLevelOut {
    pub xi: f64,
    /// `η` as used by the build, `π δ / 2` with the delta weight `δ`.
    pub eta: f64,
    /// The alternative constant `2π²γ²/(3β)`, reported for comparison.
    pub eta_alternative: f64,
    pub closed_form_spectrum: Vec<C64>,
    pub max_entry_difference: f64,
    pub max_entry_difference_alternative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementOut {
    pub n_modes: usize,
    pub eps_grid: Vec<f64>,
    pub norm: f64,
    pub probe: Option<C64>,
    pub relative_change: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FourthOrderOut {
    pub converged: bool,
    pub refinement: Vec<RefinementOut>,
    pub lambda0_prime: Vec<Vec<C64>>,
    pub norm: f64,
    pub psi_psi: C64,
    pub psi0_psi: C64,
    pub psi0_psi0: C64,
    pub xi1: Option<f64>,
    pub xi2: f64,
    pub predicted_psi0_entry: Option<f64>,
    pub lambda: f64,
    pub d_matrix: Vec<Vec<C64>>,
    pub d_spectrum: Vec<C64>,
    pub reduced_matrix: Vec<Vec<C64>>,
    pub slow_eigenvalue: C64,
    pub slow_rate: f64,
    pub fast_rates: Vec<f64>,
}

/// Everything a command reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: &'static str,
    pub provenance: Provenance,
    pub model: ModelSummary,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sectors: Vec<SectorOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub three_level: Option<ThreeLevelOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub two_level: Option<TwoLevelOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fourth_order: Option<FourthOrderOut>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<CheckOut>,
    pub passed: bool,
    /// Wall-clock seconds per phase; only with `--timing`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<BTreeMap<String, f64>>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    /// Flat CSV: one row per check, or one row per eigenvalue when the
    /// report has no checks.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out += &format!("# command: {}\n", self.command);
        out += &format!("# config: {} sha256={}\n", self.provenance.config_source, self.provenance.config_hash);
        out += &format!("# version: {} seed: {}\n", self.provenance.version, self.provenance.seed);
        if self.checks.is_empty() {
            out += "bohr_frequency,regularization,index,re,im\n";
            for s in &self.sectors {
                for op in &s.operators {
                    for (k, z) in op.eigenvalues.iter().enumerate() {
                        out += &format!("{},{},{},{},{}\n", s.bohr_frequency, op.regularization, k, z.re, z.im);
                    }
                }
            }
        } else {
            out += "name,status,residual,tolerance,detail\n";
            for c in &self.checks {
                out += &format!("{},{},{},{},{}\n", csv_field(&c.name), c.status, c.residual, c.tolerance, csv_field(&c.detail));
            }
        }
        out
    }
}

/// Quotes a field when it contains a delimiter, quote or newline.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
