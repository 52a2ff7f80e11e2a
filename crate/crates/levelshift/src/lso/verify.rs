use nalgebra::DMatrix;
use num_complex::Complex64;

use super::closed_form::{c_invariance_applies, ThreeLevel};
use super::spectral::{eigenvalues, kernel_of, matched_distance, hausdorff, Kernel, DEFAULT_KERNEL_TOL};
use super::{build_all, Generator, LevelShiftOperator, OpenSystemModel};
use crate::error::{Error, Result};
use crate::reservoir::{IrClass, Regularization};
use crate::smallsys::gibbs_vector;

/// Outcome of one check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The statement does not apply to this model; the entry is informational.
    NotApplicable,
}

/// A named check with the residual it measured.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub residual: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    pub fn measured(name: impl Into<String>, residual: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        let status = if residual <= tolerance { CheckStatus::Pass } else { CheckStatus::Fail };
        Check { name: name.into(), status, residual, tolerance, detail: detail.into() }
    }

    pub fn not_applicable(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Check { name: name.into(), status: CheckStatus::NotApplicable, residual: 0.0, tolerance: 0.0, detail: detail.into() }
    }

    pub fn passed(&self) -> bool {
        self.status != CheckStatus::Fail
    }
}

/// Spectrum and kernel of the zero-sector operator together with the
/// results of the structural checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    /// Regularization of the operator whose spectrum is reported.
    pub regularization: Regularization,
    pub eigenvalues: Vec<Complex64>,
    pub kernel: Kernel,
    pub checks: Vec<Check>,
}

impl SpectralReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

/// Tolerances for [`verify_theorems_with`]. Absolute tolerances are scaled
/// by `max(1, ‖Λ‖)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub kernel_tol: f64,
    pub symmetry_tol: f64,
    pub real_part_tol: f64,
    pub psd_tol: f64,
    pub gibbs_tol: f64,
    /// Perturbs the zero-sector operators before checking; a negative
    /// control for the symmetry check.
    pub corrupt_fixture: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            kernel_tol: DEFAULT_KERNEL_TOL,
            symmetry_tol: 1e-10,
            real_part_tol: 1e-8,
            psd_tol: 1e-10,
            gibbs_tol: 1e-8,
            corrupt_fixture: false,
        }
    }
}

/// Runs the structural checks with default tolerances.
pub fn verify_theorems(model: &OpenSystemModel, eps_grid: &[f64]) -> Result<SpectralReport> {
    verify_theorems_with(model, eps_grid, &VerifyOptions::default())
}

fn label(reg: Regularization) -> String {
    match reg {
        Regularization::Epsilon(e) => format!("eps={e:e}"),
        Regularization::Limit => "limit".to_string(),
    }
}

fn zero_sector(ops: &[LevelShiftOperator]) -> &LevelShiftOperator {
    ops.iter().find(|l| l.sector.bohr_frequency == 0.0).expect("the zero sector always exists")
}

fn corrupt(ops: &mut [LevelShiftOperator]) {
    for l in ops.iter_mut().filter(|l| l.sector.bohr_frequency == 0.0) {
        let bump = 1e-3 * (1.0 + l.matrix.norm());
        l.matrix[(0, 0)] += Complex64::new(bump, 0.0);
    }
}

/// `(Λ − Λ*)/(2i)`
fn imaginary_part(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m - m.adjoint()) * Complex64::new(0.0, -0.5)
}

fn min_hermitian_eigenvalue(m: &DMatrix<Complex64>) -> f64 {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

fn hermitian_defect(m: &DMatrix<Complex64>) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn reflection_check(ops: &[LevelShiftOperator], reg: Regularization, opts: &VerifyOptions) -> Result<Check> {
    let mut worst = 0.0_f64;
    let mut worst_h = 0.0_f64;
    let mut scale = 1.0_f64;
    let spectra: Vec<Vec<Complex64>> = ops.iter().map(|l| eigenvalues(&l.matrix)).collect::<Result<_>>()?;
    let n = ops.len();
    for k in 0..n {
        // Sectors are sorted, so the mirror of sector k is sector n-1-k.
        let mirror: Vec<Complex64> = spectra[n - 1 - k].iter().map(|z| -z.conj()).collect();
        worst = worst.max(matched_distance(&spectra[k], &mirror)?);
        worst_h = worst_h.max(hausdorff(&spectra[k], &mirror));
        scale = scale.max(ops[k].norm());
    }
    Ok(Check::measured(
        format!("reflection_symmetry[{}]", label(reg)),
        worst,
        opts.symmetry_tol * scale,
        format!("max matched distance {worst:.3e}, Hausdorff {worst_h:.3e} over {n} sectors"),
    ))
}

/// Eigenvalues must lie in the closed upper half plane. For a self-adjoint
/// generator so must the numerical range; out of equilibrium only the
/// eigenvalues are tested and the numerical range is reported.
fn half_plane_check(ops: &[LevelShiftOperator], reg: Regularization, opts: &VerifyOptions, equilibrium: bool) -> Result<Check> {
    let mut min_im = f64::INFINITY;
    let mut min_range = f64::INFINITY;
    let mut scale = 1.0_f64;
    for l in ops {
        for z in eigenvalues(&l.matrix)? {
            min_im = min_im.min(z.im);
        }
        min_range = min_range.min(min_hermitian_eigenvalue(&imaginary_part(&l.matrix)));
        scale = scale.max(l.norm());
    }
    let residual = if equilibrium { (-min_im).max(-min_range).max(0.0) } else { (-min_im).max(0.0) };
    Ok(Check::measured(
        format!("upper_half_plane[{}]", label(reg)),
        residual,
        opts.psd_tol * scale,
        format!("min Im eigenvalue {min_im:.3e}, min numerical-range Im {min_range:.3e}"),
    ))
}

fn simple_spectrum_checks(zero: &LevelShiftOperator, reg: Regularization, opts: &VerifyOptions) -> Vec<Check> {
    let m = &zero.matrix;
    let norm = m.norm();
    let re_norm = m.map(|z| z.re).norm();
    let ratio = if norm > 0.0 { re_norm / norm } else { 0.0 };
    let gamma = m * Complex64::new(0.0, -1.0);
    let herm = hermitian_defect(&gamma);
    let min_eig = min_hermitian_eigenvalue(&gamma);
    let max_im = gamma.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let scale = norm.max(1.0);
    let gamma_residual = herm.max(-min_eig).max(max_im).max(0.0);
    vec![
        Check::measured(
            format!("simple_spectrum_real_part[{}]", label(reg)),
            ratio,
            opts.real_part_tol,
            format!("|Re Λ_0|/|Λ_0| = {ratio:.3e}"),
        ),
        Check::measured(
            format!("simple_spectrum_gamma_psd[{}]", label(reg)),
            gamma_residual,
            opts.psd_tol * scale,
            format!("Γ = Λ_0/i: Hermitian defect {herm:.3e}, min eigenvalue {min_eig:.3e}, max |Im Γ_kl| {max_im:.3e}"),
        ),
    ]
}

/// Checks reflection symmetry, the half-plane property, the simple-spectrum
/// structure, the Gibbs kernel, positivity of the on-shell part, the
/// `c`-independence of the three-level operator and convergence of `Λ(ε)`
/// to the limit. Failures become report entries.
pub fn verify_theorems_with(model: &OpenSystemModel, eps_grid: &[f64], opts: &VerifyOptions) -> Result<SpectralReport> {
    let mut grid: Vec<f64> = eps_grid.to_vec();
    if grid.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidArgument("eps grid entries must be positive".into()));
    }
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup();

    let mut checks = Vec::new();
    let simple = model.small.is_simple();
    let equilibrium = model.is_equilibrium();

    let mut eps_ops: Vec<(f64, Vec<LevelShiftOperator>)> = Vec::new();
    for &eps in &grid {
        let reg = Regularization::Epsilon(eps);
        let mut ops = build_all(model, reg)?;
        if opts.corrupt_fixture {
            corrupt(&mut ops);
        }
        checks.push(reflection_check(&ops, reg, opts)?);
        checks.push(half_plane_check(&ops, reg, opts, equilibrium)?);
        let zero = zero_sector(&ops);
        if simple && equilibrium {
            checks.extend(simple_spectrum_checks(zero, reg, opts));
        } else {
            let norm = zero.norm();
            let ratio = if norm > 0.0 { zero.matrix.map(|z| z.re).norm() / norm } else { 0.0 };
            let why = if simple { "reservoirs out of equilibrium" } else { "H is degenerate" };
            checks.push(Check::not_applicable(
                format!("simple_spectrum_real_part[{}]", label(reg)),
                format!("{why}; |Re Λ_0|/|Λ_0| = {ratio:.3e}"),
            ));
        }
        eps_ops.push((eps, ops));
    }

    let limit = match build_all(model, Regularization::Limit) {
        Ok(mut ops) => {
            if opts.corrupt_fixture {
                corrupt(&mut ops);
            }
            Some(ops)
        }
        Err(Error::NonexistentLso { p }) => {
            checks.push(Check::not_applicable(
                "limit_exists",
                format!("infrared exponent p = {p} < -1/2: the level shift operator does not exist"),
            ));
            None
        }
        Err(e) => return Err(e),
    };

    if let Some(ops) = &limit {
        let reg = Regularization::Limit;
        checks.push(reflection_check(ops, reg, opts)?);
        let zero = zero_sector(ops);
        let scale = 1.0 + zero.norm();
        if simple && equilibrium {
            checks.extend(simple_spectrum_checks(zero, reg, opts));
        }
        match model.equilibrium_beta() {
            Some(beta) => {
                let psi = zero.sector.restrict(&gibbs_vector(&model.small, beta)?);
                let r = (&zero.matrix * &psi).norm();
                checks.push(Check::measured(
                    "gibbs_kernel",
                    r,
                    opts.gibbs_tol * scale,
                    format!("|Λ_0 Ψ_β| = {r:.3e} at beta = {beta}"),
                ));
                if equilibrium && model.generator == Generator::Standard {
                    let parts = zero.parts.as_ref().expect("limit operators carry their parts");
                    let d = &parts.delta_part;
                    let rd = (d * &psi).norm();
                    checks.push(Check::measured(
                        "delta_part_annihilates_gibbs",
                        rd,
                        opts.gibbs_tol * scale,
                        format!("|Λ_δ Ψ_β| = {rd:.3e}"),
                    ));
                    let g = d * Complex64::new(0.0, -1.0);
                    let herm = hermitian_defect(&g);
                    let min_eig = min_hermitian_eigenvalue(&g);
                    let pv_herm = hermitian_defect(&parts.pv_part);
                    let res = herm.max(-min_eig).max(pv_herm).max(0.0);
                    checks.push(Check::measured(
                        "delta_part_positive",
                        res,
                        opts.psd_tol * scale,
                        format!(
                            "Λ_δ/i Hermitian defect {herm:.3e}, min eigenvalue {min_eig:.3e}; PV part Hermitian defect {pv_herm:.3e}"
                        ),
                    ));
                }
            }
            None => checks.push(Check::not_applicable(
                "gibbs_kernel",
                "reservoirs at different temperatures under the standard interaction: no Gibbs vector is expected in the kernel",
            )),
        }
        if c_invariance_applies(model) {
            let mut stripped = model.clone();
            let g = &mut stripped.couplings[0].g;
            g[(1, 2)] = Complex64::new(0.0, 0.0);
            g[(2, 1)] = Complex64::new(0.0, 0.0);
            let l0 = zero_sector(&build_all(&stripped, reg)?).matrix.clone();
            let mut reference = zero.matrix.clone();
            if opts.corrupt_fixture {
                reference[(0, 0)] = l0[(0, 0)];
            }
            let r = (&reference - &l0).norm();
            checks.push(Check::measured(
                "three_level_c_invariance",
                r,
                opts.gibbs_tol * scale,
                format!("|Λ_0(c) − Λ_0(0)| = {r:.3e}"),
            ));
        } else if let Some(p) = ThreeLevel::from_model(model) {
            if model.ir_class() == IrClass::Critical {
                checks.push(Check::not_applicable(
                    "three_level_c_invariance",
                    format!("critical infrared exponent: c = {} enters through the delta weight", p.c),
                ));
            }
        }
        if eps_ops.len() >= 2 {
            let dist: Vec<(f64, f64)> = eps_ops
                .iter()
                .map(|(eps, e_ops)| {
                    let d = e_ops.iter().zip(ops).map(|(a, b)| (&a.matrix - &b.matrix).norm()).fold(0.0, f64::max);
                    (*eps, d)
                })
                .collect();
            let monotone = dist.windows(2).all(|w| w[1].1 < w[0].1);
            let (e0, d0) = dist[0];
            let (e1, d1) = *dist.last().unwrap();
            let slope = (d0.ln() - d1.ln()) / (e0.ln() - e1.ln());
            let residual = if monotone { (0.5 - slope).max(0.0) } else { f64::INFINITY };
            let trace: Vec<String> = dist.iter().map(|(e, d)| format!("{e:e}:{d:.3e}")).collect();
            checks.push(Check::measured(
                "limit_convergence",
                residual,
                0.0,
                format!("|Λ(ε) − Λ| by ε [{}], log-log slope {slope:.3}", trace.join(", ")),
            ));
        }
    }

    let (regularization, zero_matrix) = match &limit {
        Some(ops) => (Regularization::Limit, zero_sector(ops).matrix.clone()),
        None => {
            let (eps, ops) = eps_ops.last().ok_or_else(|| Error::InvalidArgument("empty eps grid for a model without a limit".into()))?;
            (Regularization::Epsilon(*eps), zero_sector(ops).matrix.clone())
        }
    };
    let kernel = kernel_of(&zero_matrix, opts.kernel_tol)?;
    checks.push(Check::measured(
        "kernel_gap",
        if kernel.ill_conditioned { 1.0 } else { 0.0 },
        0.0,
        format!("kernel dimension {}, singular-value gap ratio {:.3e}", kernel.dim, kernel.gap_ratio),
    ));
    Ok(SpectralReport { regularization, eigenvalues: eigenvalues(&zero_matrix)?, kernel, checks })
}
