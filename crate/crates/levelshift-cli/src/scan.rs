//! The `scan` command: one parameter swept over a linear grid.

use levelshift::error::Error;
use levelshift::higher::{d_matrix_and_rates, lambda0_prime_refined, loglog_slope, xi1, PrimeSettings};
use levelshift::lso::{build_lso_eps, build_lso_limit, eigenvalues, kernel_of, OpenSystemModel, ThreeLevel};
use levelshift::reservoir::{FormFactor, IrClass, Profile, ReservoirSpec};
use levelshift::smallsys::SmallSystem;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::config::LoadedConfig;
use crate::report::{complex_list, Provenance, C64};
use crate::{CliError, ScanParam};

/// Column names of the CSV table.
pub const COLUMNS: [&str; 9] =
    ["value", "lso_exists", "kernel_dim", "eigenvalues", "norm_eps_min", "fast_rate", "slow_rate", "xi1", "xi1_over_delta2"];

const COLUMN_DOC: &str = "value: scanned parameter; lso_exists: whether the limit operator exists; \
kernel_dim: kernel dimension of the zero-sector limit; eigenvalues: its eigenvalues as re+imi joined by ';'; \
norm_eps_min: Frobenius norm of the zero-sector operator at the smallest eps; \
fast_rate: lambda^2 times the smallest nonzero Im eigenvalue of the limit; \
slow_rate: lambda^2 times Im of the fourth-order slow eigenvalue (lambda scans of b = 0 three-level models); \
xi1 and xi1_over_delta2: three-level models with p > 0";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub value: f64,
    pub lso_exists: bool,
    pub kernel_dim: Option<usize>,
    pub eigenvalues: Vec<C64>,
    pub norm_eps_min: f64,
    pub fast_rate: Option<f64>,
    pub slow_rate: Option<f64>,
    pub xi1: Option<f64>,
    pub xi1_over_delta2: Option<f64>,
}

/// Why a scan stopped early.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanError {
    pub value: f64,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanTable {
    pub param: String,
    pub provenance: Provenance,
    pub eps_min: f64,
    pub rows: Vec<ScanRow>,
    /// Log-log slopes of the rate columns against the scanned value.
    pub slow_rate_slope: Option<f64>,
    pub fast_rate_slope: Option<f64>,
    /// Refinement trace of the fourth-order operator, when one was computed.
    pub fourth_order_trace: Option<String>,
    pub error: Option<ScanError>,
}

fn fmt_opt<T: std::fmt::Display>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn fmt_complex(z: &C64) -> String {
    format!("{}{:+}i", z.re, z.im)
}

impl ScanTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out += &format!("# levelshift scan of {}\n", self.param);
        out += &format!("# config: {} sha256={}\n", self.provenance.config_source, self.provenance.config_hash);
        out += &format!("# version: {} seed: {} eps_min: {}\n", self.provenance.version, self.provenance.seed, self.eps_min);
        out += &format!("# columns: {COLUMN_DOC}\n");
        if let Some(t) = &self.fourth_order_trace {
            out += &format!("# fourth-order refinement: {t}\n");
        }
        out += &COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            let ev: Vec<String> = r.eigenvalues.iter().map(fmt_complex).collect();
            out += &format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.value,
                r.lso_exists,
                fmt_opt(r.kernel_dim),
                ev.join(";"),
                r.norm_eps_min,
                fmt_opt(r.fast_rate),
                fmt_opt(r.slow_rate),
                fmt_opt(r.xi1),
                fmt_opt(r.xi1_over_delta2)
            );
        }
        if let Some(s) = self.slow_rate_slope {
            out += &format!("# slow_rate_loglog_slope: {s}\n");
        }
        if let Some(s) = self.fast_rate_slope {
            out += &format!("# fast_rate_loglog_slope: {s}\n");
        }
        if let Some(e) = &self.error {
            out += &format!("# error at {}: {}\n", e.value, e.message);
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scan tables serialize");
        s.push('\n');
        s
    }
}

/// `steps` equally spaced values from `from` to `to`, both included.
pub fn linear_grid(from: f64, to: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => vec![],
        1 => vec![from],
        n => (0..n).map(|k| if k == n - 1 { to } else { from + (to - from) * k as f64 / (n - 1) as f64 }).collect(),
    }
}

fn with_exponent(ff: &FormFactor, p: f64) -> Result<FormFactor, CliError> {
    let (gamma, r_max) = (ff.ir_amplitude(), ff.uv_cutoff());
    match ff.profile() {
        Profile::PowerCutoff => Ok(FormFactor::power_cutoff(gamma, p, r_max)?),
        Profile::GaussianDamped { width } => Ok(FormFactor::gaussian_damped(gamma, p, *width, r_max)?),
        Profile::Table { .. } => Err(CliError::Config("a tabulated form factor has no infrared exponent to scan".into())),
    }
}

/// The base model with the scanned parameter set to `value`.
pub fn model_at(base: &OpenSystemModel, param: ScanParam, value: f64) -> Result<OpenSystemModel, CliError> {
    let mut m = base.clone();
    match param {
        ScanParam::P => {
            for c in &mut m.couplings {
                c.reservoir = ReservoirSpec::new(c.reservoir.beta, with_exponent(&c.reservoir.form_factor, value)?)?;
            }
        }
        ScanParam::Beta => {
            for c in &mut m.couplings {
                c.reservoir = ReservoirSpec::new(value, c.reservoir.form_factor.clone())?;
            }
        }
        ScanParam::Delta => {
            if ThreeLevel::from_model(base).is_none() {
                return Err(CliError::Config("a delta scan needs the three-level model".into()));
            }
            if !(value > 0.0) {
                return Err(CliError::Config(format!("delta must be positive, got {value}")));
            }
            let e0 = base.small.energies()[0];
            let mut small = SmallSystem::with_tolerance(vec![e0, e0 + value, e0 + value], base.small.degeneracy_tol())?;
            if let Some(order) = base.small.basis_order() {
                small = small.with_basis_order(order.to_vec())?;
            }
            m.small = small;
        }
        ScanParam::Lambda => m.coupling_constant = value,
    }
    Ok(m)
}

fn row(model: &OpenSystemModel, value: f64, eps_min: f64, kernel_tol: f64, prime: Option<&DMatrix<Complex64>>) -> Result<ScanRow, Error> {
    let lso_exists = model.ir_class() != IrClass::Subcritical;
    let norm_eps_min = build_lso_eps(model, 0.0, eps_min)?.norm();
    let lambda = model.coupling_constant;
    let (mut kernel_dim, mut ev, mut fast_rate) = (None, vec![], None);
    if lso_exists {
        let l0 = build_lso_limit(model, 0.0)?;
        ev = eigenvalues(&l0.matrix)?;
        kernel_dim = Some(kernel_of(&l0.matrix, kernel_tol)?.dim);
        let cut = kernel_tol * (1.0 + l0.norm());
        fast_rate = ev.iter().filter(|z| z.norm() > cut).map(|z| lambda * lambda * z.im).min_by(f64::total_cmp);
    }
    let slow_rate = match prime {
        Some(x) => Some(d_matrix_and_rates(model, x, lambda)?.slow_rate),
        None => None,
    };
    let (mut xi, mut ratio) = (None, None);
    if let Some(tl) = ThreeLevel::from_model(model) {
        let spec = &model.couplings[0].reservoir;
        if tl.delta < spec.r_max() && lso_exists {
            match xi1(spec, tl.delta, &model.quadrature) {
                Ok(v) => {
                    xi = Some(v);
                    ratio = Some(v / (tl.delta * tl.delta));
                }
                Err(Error::DivergentIntegral { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(ScanRow {
        value,
        lso_exists,
        kernel_dim,
        eigenvalues: complex_list(&ev),
        norm_eps_min,
        fast_rate,
        slow_rate,
        xi1: xi,
        xi1_over_delta2: ratio,
    })
}

/// Computes the fourth-order operator a λ scan needs, if the model admits
/// one.
pub fn scan_prime(cfg: &LoadedConfig, model: &OpenSystemModel) -> Result<Option<(DMatrix<Complex64>, String)>, CliError> {
    match ThreeLevel::from_model(model) {
        Some(tl) if tl.b == 0.0 => {
            let f = &cfg.config.run.fourth_order;
            let psi0 = ThreeLevel::psi0();
            let settings = PrimeSettings {
                n_modes: f.n_modes,
                r_max: cfg.config.run.oracle.r_max,
                eps_grid: f.eps_grid.clone(),
                max_levels: f.max_levels,
                rel_tol: f.rel_tol,
                probe: Some((psi0.clone(), psi0)),
            };
            let p = lambda0_prime_refined(model, &settings)?;
            let mut trace = p.trace_summary();
            if !p.converged {
                trace += " (not converged)";
            }
            Ok(Some((p.matrix, trace)))
        }
        _ => Ok(None),
    }
}

/// Runs the scan. The fourth-order operator is computed for λ scans of the
/// `b = 0` three-level model.
pub fn scan(cfg: &LoadedConfig, param: ScanParam, from: f64, to: f64, steps: usize) -> Result<ScanTable, CliError> {
    let base = cfg.config.build()?;
    let prime = if param == ScanParam::Lambda { scan_prime(cfg, &base)? } else { None };
    scan_with(cfg, param, &linear_grid(from, to, steps), prime)
}

/// [`scan`] over explicit values, with a precomputed fourth-order operator
/// and its refinement trace.
pub fn scan_with(
    cfg: &LoadedConfig,
    param: ScanParam,
    values: &[f64],
    prime: Option<(DMatrix<Complex64>, String)>,
) -> Result<ScanTable, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("a scan needs at least one step".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Config("scan bounds must be finite".into()));
    }
    let base = cfg.config.build()?;
    let run = &cfg.config.run;
    let eps_min = run.eps_grid.iter().copied().fold(f64::INFINITY, f64::min);
    // Invalid endpoints are config errors rather than mid-scan failures.
    for v in [values[0], values[values.len() - 1]] {
        model_at(&base, param, v).map_err(|e| match e {
            CliError::Compute(err) => CliError::Config(format!("{param:?} = {v}: {err}")),
            other => other,
        })?;
    }
    let (prime_matrix, trace) = match prime {
        Some((m, t)) => (Some(m), Some(t)),
        None => (None, None),
    };
    let mut table = ScanTable {
        param: format!("{param:?}").to_lowercase(),
        provenance: Provenance::of(cfg),
        eps_min,
        rows: vec![],
        slow_rate_slope: None,
        fast_rate_slope: None,
        fourth_order_trace: trace,
        error: None,
    };
    for &v in values {
        let result = model_at(&base, param, v).and_then(|m| Ok(row(&m, v, eps_min, run.kernel_tol, prime_matrix.as_ref())?));
        match result {
            Ok(r) => table.rows.push(r),
            Err(e) => {
                table.error = Some(ScanError { value: v, message: e.to_string(), exit_code: e.exit_code() });
                break;
            }
        }
    }
    let fit = |f: fn(&ScanRow) -> Option<f64>| {
        let pts: Vec<(f64, f64)> = table.rows.iter().filter_map(|r| f(r).map(|y| (r.value, y))).collect();
        loglog_slope(&pts)
    };
    if param == ScanParam::Lambda {
        table.slow_rate_slope = fit(|r| r.slow_rate);
        table.fast_rate_slope = fit(|r| r.fast_rate);
    }
    Ok(table)
}
