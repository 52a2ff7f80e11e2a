//! Fourth-order analysis of degenerate small systems.
//!
//! When the kernel of `Λ_0` is larger than the Gibbs direction, the
//! remaining degeneracy is lifted at the next order by
//!
//! ```text
//! Λ_0′ = lim_{ε↓0} P I R̄ I R̄ I R̄ I P,     R̄ = P̄ (L_0 − iε)⁻¹ P̄,
//! ```
//!
//! acting on the `e = 0` sector. `Λ_0′` is evaluated only through the
//! finite-mode oracle. For the three-level model with `b = 0` the radial
//! integrals [`xi1`] and [`xi2`] give a prediction for `Im⟨Ψ_0, Λ_0′Ψ_0⟩`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lso::{build_lso_limit, eigenvalues, kernel_of, OpenSystemModel, ThreeLevel, DEFAULT_KERNEL_TOL};
use crate::oracle::{discretize, extrapolate_to_zero, fourth_order_path_sum, FiniteModeModel};
use crate::quad::{self, QuadOptions};
use crate::reservoir::{IrClass, ReservoirSpec};

/// `ξ₁(Δ) = 2πΔ² ∫_Δ^∞ W(r) W(r−Δ) ρ(r−Δ) (1 + ρ(r)) dr` with the angular
/// weight `W(r) = 4π|g(r)|²`.
///
/// Near `r = Δ` the integrand behaves like `(r−Δ)^{2p−1}`, so the integral
/// exists only for `p > 0`.
pub fn xi1(spec: &ReservoirSpec, delta: f64, opts: &QuadOptions) -> Result<f64> {
    let ff = &spec.form_factor;
    let top = ff.uv_cutoff();
    if !(delta > 0.0) || delta >= top {
        return Err(Error::InvalidArgument(format!("xi1 needs 0 < delta < r_max = {top}, got {delta}")));
    }
    if ff.ir_amplitude() == 0.0 {
        return Ok(0.0);
    }
    if ff.ir_exponent() <= 0.0 {
        return Err(Error::DivergentIntegral { what: "xi1".into(), p: ff.ir_exponent() });
    }
    let beta = spec.beta;
    let mut bp: Vec<f64> = ff
        .breakpoints()
        .iter()
        .flat_map(|&x| [x, x + delta])
        .filter(|&x| x >= delta && x <= top)
        .collect();
    bp.extend([delta, top]);
    let f = |r: f64| {
        let s = r - delta;
        if s <= 0.0 {
            return 0.0;
        }
        let rho_s = 1.0 / (beta * s).exp_m1();
        let one_plus_rho_r = -1.0 / (-beta * r).exp_m1();
        ff.angular_weight(r) * ff.angular_weight(s) * rho_s * one_plus_rho_r
    };
    Ok(2.0 * PI * delta * delta * quad::integrate_real(f, &bp, opts)?)
}

/// `ξ₂ = π ∫ r² W(r)² (2√(ρ(1+ρ)) − 1 − 2ρ)² dr`, evaluated with the
/// equivalent factor `tanh²(βr/4)`. Independent of the level spacing.
pub fn xi2(spec: &ReservoirSpec, opts: &QuadOptions) -> Result<f64> {
    let ff = &spec.form_factor;
    if spec.ir_class() == IrClass::Subcritical {
        return Err(Error::NonexistentLso { p: ff.ir_exponent() });
    }
    let beta = spec.beta;
    let f = |r: f64| {
        let w = ff.angular_weight(r);
        let t = (0.25 * beta * r).tanh();
        r * r * w * w * t * t
    };
    Ok(PI * quad::integrate_real(f, &ff.breakpoints(), opts)?)
}

/// `a²c²ξ₁(Δ) + c⁴ξ₂`, the predicted `Im⟨Ψ_0, Λ_0′Ψ_0⟩` of the `b = 0`
/// three-level model.
pub fn predicted_psi0_entry(a: f64, c: f64, xi1: f64, xi2: f64) -> f64 {
    a * a * c * c * xi1 + c.powi(4) * xi2
}

/// `P I R̄ I R̄ I R̄ I P` at `e = 0` and fixed `ε` on the truncation `fm`,
/// in the basis of `model.small.sector_at(0.0)`.
pub fn lambda0_prime_oracle(model: &OpenSystemModel, fm: &FiniteModeModel, eps: f64) -> Result<DMatrix<Complex64>> {
    if fm.small != model.small || fm.couplings.len() != model.couplings.len() {
        return Err(Error::InvalidArgument("the finite-mode model does not belong to this model".into()));
    }
    fourth_order_path_sum(fm, 0.0, eps)
}

/// Polynomial extrapolation to `ε = 0` of [`lambda0_prime_oracle`] over
/// `eps_grid`.
pub fn lambda0_prime_extrapolated(model: &OpenSystemModel, fm: &FiniteModeModel, eps_grid: &[f64]) -> Result<DMatrix<Complex64>> {
    if eps_grid.is_empty() {
        return Err(Error::InvalidArgument("empty eps grid".into()));
    }
    let samples = eps_grid
        .iter()
        .map(|&eps| Ok((eps, lambda0_prime_oracle(model, fm, eps)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(extrapolate_to_zero(&samples))
}

/// Refinement schedule for [`lambda0_prime_refined`].
#[derive(Debug, Clone, PartialEq)]
pub struct PrimeSettings {
    /// Modes per reservoir at the first level.
    pub n_modes: usize,
    /// Radial cutoff of the truncation; the reservoir cutoff when `None`.
    pub r_max: Option<f64>,
    /// ε grid at the first level.
    pub eps_grid: Vec<f64>,
    /// Number of levels. Each level doubles the modes and halves the grid.
    pub max_levels: usize,
    /// Relative change between consecutive levels accepted as converged.
    pub rel_tol: f64,
    /// Convergence is judged on `⟨u, X v⟩` when set, on the whole matrix
    /// otherwise.
    pub probe: Option<(DVector<Complex64>, DVector<Complex64>)>,
}

impl Default for PrimeSettings {
    fn default() -> Self {
        PrimeSettings { n_modes: 1000, r_max: None, eps_grid: vec![0.08, 0.04, 0.02], max_levels: 4, rel_tol: 1e-2, probe: None }
    }
}

/// One level of the refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementStep {
    pub n_modes: usize,
    pub eps_grid: Vec<f64>,
    /// Frobenius norm of the extrapolated matrix.
    pub norm: f64,
    /// The probe entry, when one is set.
    pub probe: Option<Complex64>,
    /// Relative change of the probe entry (or of the matrix) against the
    /// previous level; absent on the first level.
    pub relative_change: Option<f64>,
}

/// The result of [`lambda0_prime_refined`].
#[derive(Debug, Clone, PartialEq)]
pub struct Lambda0Prime {
    /// Extrapolated matrix of the last level.
    pub matrix: DMatrix<Complex64>,
    pub trace: Vec<RefinementStep>,
    pub converged: bool,
}

impl Lambda0Prime {
    pub fn trace_summary(&self) -> String {
        self.trace
            .iter()
            .map(|s| {
                let mut line = format!("M={} eps_min={:e}: |X|={:.6}", s.n_modes, min_eps(&s.eps_grid), s.norm);
                if let Some(p) = s.probe {
                    line += &format!(", probe={p:.6}");
                }
                if let Some(c) = s.relative_change {
                    line += &format!(", change {c:.3e}");
                }
                line
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

fn min_eps(grid: &[f64]) -> f64 {
    grid.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Refines the extrapolated `Λ_0′` by doubling the modes and halving the ε
/// grid together until the relative change falls below `rel_tol` or the
/// levels run out.
///
/// Entries of `Λ_0′` converge at different rates in ε, so a probe entry
/// is the usual target.
pub fn lambda0_prime_refined(model: &OpenSystemModel, settings: &PrimeSettings) -> Result<Lambda0Prime> {
    if settings.n_modes == 0 || settings.max_levels == 0 {
        return Err(Error::InvalidArgument("refinement needs at least one mode and one level".into()));
    }
    let r_max = settings
        .r_max
        .unwrap_or_else(|| model.couplings.iter().map(|c| c.reservoir.r_max()).fold(0.0, f64::max));
    let mut trace = Vec::new();
    let mut previous: Option<DMatrix<Complex64>> = None;
    for level in 0..settings.max_levels {
        let n_modes = settings.n_modes << level;
        let scale = 0.5f64.powi(level as i32);
        let eps_grid: Vec<f64> = settings.eps_grid.iter().map(|e| e * scale).collect();
        let fm = discretize(model, n_modes, r_max)?;
        let x = lambda0_prime_extrapolated(model, &fm, &eps_grid)?;
        let norm = x.norm();
        let probe = settings.probe.as_ref().map(|(u, v)| u.dotc(&(&x * v)));
        let relative_change = previous.as_ref().map(|p| match (&settings.probe, probe) {
            (Some((u, v)), Some(now)) => (now - u.dotc(&(p * v))).norm() / now.norm().max(f64::MIN_POSITIVE),
            _ => (&x - p).norm() / norm.max(f64::MIN_POSITIVE),
        });
        trace.push(RefinementStep { n_modes, eps_grid, norm, probe, relative_change });
        let done = matches!(relative_change, Some(c) if c < settings.rel_tol) || norm == 0.0;
        if done {
            return Ok(Lambda0Prime { matrix: x, trace, converged: true });
        }
        previous = Some(x);
    }
    Ok(Lambda0Prime { matrix: previous.unwrap_or_default(), trace, converged: false })
}

/// [`lambda0_prime_refined`], with non-convergence as an error carrying
/// the refinement trace.
pub fn lambda0_prime_converged(model: &OpenSystemModel, settings: &PrimeSettings) -> Result<Lambda0Prime> {
    let r = lambda0_prime_refined(model, settings)?;
    if r.converged {
        Ok(r)
    } else {
        Err(Error::NotConverged { what: "fourth-order level shift operator".into(), trace: r.trace_summary() })
    }
}

/// Fourth-order data of the `b = 0` three-level model at coupling `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondCorrection {
    pub lambda: f64,
    pub lambda0_prime: DMatrix<Complex64>,
    /// Level spacing of the model.
    pub delta: f64,
    /// `ξ₁(Δ)`; `None` when the integral diverges (`p ≤ 0`).
    pub xi1: Option<f64>,
    pub xi2: f64,
    /// `a²c²ξ₁(Δ) + c⁴ξ₂` when `ξ₁` exists.
    pub predicted_psi0_entry: Option<f64>,
    /// `λ² [⟨u_i, Λ_0′ u_j⟩]` with `u = (Ψ, Ψ_0)`.
    pub d_matrix: DMatrix<Complex64>,
    /// Eigenvalues of `d_matrix`.
    pub d_spectrum: Vec<Complex64>,
    /// `λ² (Lᴴ R)⁻¹ Lᴴ Λ_0′ R` with `R`, `L` bases of the right and left
    /// kernels of `Λ_0`: the first-order splitting of the zero eigenvalue
    /// of `Λ_0 + λ²Λ_0′`.
    pub reduced_matrix: DMatrix<Complex64>,
    /// Eigenvalue of `reduced_matrix` of largest modulus.
    pub slow_eigenvalue: Complex64,
    /// `λ² Im` of the slow eigenvalue: the decay rate of the mode, `O(λ⁴)`.
    pub slow_rate: f64,
    /// `λ² Im z` for the nonzero eigenvalues `z` of `Λ_0`, ascending.
    pub fast_rates: Vec<f64>,
}

impl SecondCorrection {
    /// `⟨Ψ_0, Λ_0′Ψ_0⟩`
    pub fn psi0_entry(&self) -> Complex64 {
        self.d_matrix[(1, 1)] / (self.lambda * self.lambda)
    }
}

/// Assembles the kernel reduction of `Λ_0′` for a `b = 0` three-level model.
///
/// `d_matrix` uses the vectors `Ψ`, `Ψ_0` as they are; since they are not
/// orthogonal its nonzero eigenvalue differs from the actual splitting,
/// which `reduced_matrix` and `slow_eigenvalue` report.
pub fn d_matrix_and_rates(model: &OpenSystemModel, lambda0_prime: &DMatrix<Complex64>, lambda: f64) -> Result<SecondCorrection> {
    let tl = ThreeLevel::from_model(model)
        .ok_or_else(|| Error::InvalidArgument("the model does not have the three-level structure".into()))?;
    if tl.b != 0.0 {
        return Err(Error::InvalidArgument(format!("the fourth-order reduction needs b = 0, got b = {}", tl.b)));
    }
    if lambda0_prime.nrows() != 5 || lambda0_prime.ncols() != 5 {
        return Err(Error::InvalidArgument("the fourth-order operator must act on the 5-dimensional zero sector".into()));
    }
    if !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be finite, got {lambda}")));
    }
    let l0 = build_lso_limit(model, 0.0)?;
    let right = kernel_of(&l0.matrix, DEFAULT_KERNEL_TOL)?;
    if right.dim != 2 {
        return Err(Error::KernelDimension { found: right.dim, expected: 2 });
    }
    let left = kernel_of(&l0.matrix.adjoint(), DEFAULT_KERNEL_TOL)?;
    if left.dim != 2 {
        return Err(Error::KernelDimension { found: left.dim, expected: 2 });
    }
    let lam2 = Complex64::new(lambda * lambda, 0.0);

    let u = [tl.psi(), ThreeLevel::psi0()];
    let d_matrix = DMatrix::from_fn(2, 2, |i, j| u[i].dotc(&(lambda0_prime * &u[j])) * lam2);
    let d_spectrum = eigenvalues(&d_matrix)?;

    let r = DMatrix::from_columns(&right.basis);
    let l = DMatrix::from_columns(&left.basis);
    let overlap = l.adjoint() * &r;
    let inv = overlap
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("left and right kernels of the zero-sector operator are orthogonal".into()))?;
    let reduced_matrix = inv * l.adjoint() * lambda0_prime * &r * lam2;
    let reduced_spectrum = eigenvalues(&reduced_matrix)?;
    let slow_eigenvalue = reduced_spectrum.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or_default();
    let scale = 1.0 + reduced_matrix.norm();
    if slow_eigenvalue.im < -1e-10 * scale {
        return Err(Error::InvalidArgument(format!("slow eigenvalue {slow_eigenvalue} lies in the lower half plane")));
    }

    let spec = &model.couplings[0].reservoir;
    let opts = &model.quadrature;
    let xi1 = match xi1(spec, tl.delta, opts) {
        Ok(v) => Some(v),
        Err(Error::DivergentIntegral { .. }) => None,
        Err(e) => return Err(e),
    };
    let xi2 = xi2(spec, opts)?;
    let ev0 = eigenvalues(&l0.matrix)?;
    let cut = DEFAULT_KERNEL_TOL * (1.0 + l0.norm());
    let mut fast_rates: Vec<f64> = ev0.iter().filter(|z| z.norm() > cut).map(|z| lambda * lambda * z.im).collect();
    fast_rates.sort_by(f64::total_cmp);

    Ok(SecondCorrection {
        lambda,
        lambda0_prime: lambda0_prime.clone(),
        delta: tl.delta,
        xi1,
        xi2,
        predicted_psi0_entry: xi1.map(|x1| predicted_psi0_entry(tl.a, tl.c, x1, xi2)),
        d_matrix,
        d_spectrum,
        reduced_matrix,
        slow_eigenvalue,
        slow_rate: lambda * lambda * slow_eigenvalue.im,
        fast_rates,
    })
}

/// One coupling of [`rate_scan`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub lambda: f64,
    /// Decay rate of the mode split off at fourth order.
    pub slow_rate: f64,
    /// Smallest second-order decay rate.
    pub fast_rate: f64,
}

/// Rates of [`d_matrix_and_rates`] over a list of couplings.
pub fn rate_scan(model: &OpenSystemModel, lambda0_prime: &DMatrix<Complex64>, lambdas: &[f64]) -> Result<Vec<RatePoint>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let sc = d_matrix_and_rates(model, lambda0_prime, lambda)?;
            let fast_rate = sc.fast_rates.first().copied().unwrap_or(0.0);
            Ok(RatePoint { lambda, slow_rate: sc.slow_rate, fast_rate })
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`. Points with a
/// nonpositive coordinate are skipped; `None` with fewer than two left.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests;
