//! Thermal bosonic reservoirs with massless dispersion `ω(r) = r`.
//!
//! Everything the level shift operator needs from a reservoir is carried by
//! the radial Jacobian `J(r) = r²·W(r)`, where `W(r) = ∫|g(r,σ)|² dσ` is the
//! angular weight (`4π g(r)²` for isotropic profiles), and by the
//! occupation `ρ_β(r) = 1/(e^{βr} − 1)`.
//!
//! Two thermal channels appear:
//!
//! * emission, weight `J(r)(1 + ρ_β(r))`, at frequency `+r`;
//! * absorption, weight `J(r)ρ_β(r)`, at frequency `−r`.
//!
//! Together they form the spectral density `K(ν)`, equal to `J(ν)(1+ρ(ν))`
//! for `ν > 0` and `J(−ν)ρ(−ν)` for `ν < 0`. It obeys the detailed balance
//! relation `K(−ν) = e^{−βν} K(ν)`. The symmetric combination
//! `M(ν) = J(|ν|)/(2 sinh(β|ν|/2)) = e^{−βν/2} K(ν)` weighs the terms that
//! couple both tensor factors.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quad::{self, QuadOptions};

/// Tolerance used to recognise the critical infrared exponent `p = −1/2`.
const CRITICAL_TOL: f64 = 1e-12;

/// Relative drift allowed when sampling `g(r)/r^p` near the origin.
const IR_DRIFT_LIMIT: f64 = 0.01;

/// Radial profile families.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// `g(r) = γ r^p` for `r ≤ R_max`, zero beyond.
    PowerCutoff,
    /// `g(r) = γ r^p e^{−r²/Λ²}`, truncated at `R_max`.
    GaussianDamped { width: f64 },
    /// Linear interpolation through `(r_k, g_k)`, constant below the first
    /// node and zero beyond the last.
    Table { r: Vec<f64>, g: Vec<f64> },
}

/// An isotropic coupling form factor.
#[derive(Debug, Clone, PartialEq)]
pub struct FormFactor {
    ir_exponent: f64,
    ir_amplitude: f64,
    uv_cutoff: f64,
    profile: Profile,
}

/// Infrared regime of a form factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrClass {
    /// `−1 < p < −1/2`: the level shift operator does not exist.
    Subcritical,
    /// `p = −1/2`: zero-frequency terms pick up a finite delta weight.
    Critical,
    /// `p > −1/2`.
    Regular,
}

impl FormFactor {
    pub fn power_cutoff(gamma: f64, p: f64, r_max: f64) -> Result<Self> {
        Self::build(p, gamma, r_max, Profile::PowerCutoff)
    }

    pub fn gaussian_damped(gamma: f64, p: f64, width: f64, r_max: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::InvalidFormFactor(format!("width must be positive, got {width}")));
        }
        Self::build(p, gamma, r_max, Profile::GaussianDamped { width })
    }

    /// A tabulated profile. The infrared exponent is 0 and the amplitude is
    /// the first tabulated value.
    pub fn table(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidFormFactor("a table needs at least two points".into()));
        }
        if points.iter().any(|&(r, g)| !r.is_finite() || !g.is_finite() || r < 0.0 || g < 0.0) {
            return Err(Error::InvalidFormFactor("table entries must be finite and nonnegative".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidFormFactor("table radii must be strictly increasing".into()));
        }
        let (r, g): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
        let gamma = g[0];
        let r_max = *r.last().unwrap();
        Self::build(0.0, gamma, r_max, Profile::Table { r, g })
    }

    fn build(p: f64, gamma: f64, r_max: f64, profile: Profile) -> Result<Self> {
        if !(p > -1.0) || !p.is_finite() {
            return Err(Error::InvalidFormFactor(format!(
                "infrared exponent must exceed -1 (got {p}); otherwise g is not square integrable against r²"
            )));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidFormFactor(format!("amplitude must be nonnegative, got {gamma}")));
        }
        if !(r_max > 0.0) || !r_max.is_finite() {
            return Err(Error::InvalidFormFactor(format!("cutoff must be positive, got {r_max}")));
        }
        let ff = FormFactor { ir_exponent: p, ir_amplitude: gamma, uv_cutoff: r_max, profile };
        let drift = ff.ir_drift();
        if drift > IR_DRIFT_LIMIT {
            return Err(Error::InvalidFormFactor(format!(
                "g(r)/r^p drifts by {drift:.3e} from the declared amplitude on [1e-8, 1e-2]"
            )));
        }
        Ok(ff)
    }

    pub fn ir_exponent(&self) -> f64 {
        self.ir_exponent
    }

    pub fn ir_amplitude(&self) -> f64 {
        self.ir_amplitude
    }

    pub fn uv_cutoff(&self) -> f64 {
        self.uv_cutoff
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Radial profile `g(r)`, zero outside `(0, R_max]`.
    pub fn g(&self, r: f64) -> f64 {
        if !(r > 0.0) || r > self.uv_cutoff {
            return 0.0;
        }
        let (gamma, p) = (self.ir_amplitude, self.ir_exponent);
        match &self.profile {
            Profile::PowerCutoff => gamma * r.powf(p),
            Profile::GaussianDamped { width } => gamma * r.powf(p) * (-(r / width).powi(2)).exp(),
            Profile::Table { r: rs, g } => {
                if r <= rs[0] {
                    return g[0];
                }
                let k = rs.partition_point(|&x| x < r);
                let (r0, r1, g0, g1) = (rs[k - 1], rs[k], g[k - 1], g[k]);
                g0 + (g1 - g0) * (r - r0) / (r1 - r0)
            }
        }
    }

    /// Angular weight `W(r) = 4π g(r)²`.
    pub fn angular_weight(&self, r: f64) -> f64 {
        let g = self.g(r);
        4.0 * PI * g * g
    }

    /// Radial Jacobian `J(r) = r² W(r)`.
    pub fn jacobian(&self, r: f64) -> f64 {
        r * r * self.angular_weight(r)
    }

    /// Largest relative deviation of `g(r)/r^p` from `γ` on a geometric
    /// grid over `[1e-8, 1e-2]` (clipped to the support).
    pub fn ir_drift(&self) -> f64 {
        if self.ir_amplitude == 0.0 {
            return 0.0;
        }
        let hi = 1e-2_f64.min(self.uv_cutoff);
        let lo = 1e-8_f64.min(0.5 * hi);
        let mut worst = 0.0_f64;
        for k in 0..=40 {
            let r = lo * (hi / lo).powf(k as f64 / 40.0);
            let ratio = self.g(r) / r.powf(self.ir_exponent) / self.ir_amplitude;
            worst = worst.max((ratio - 1.0).abs());
        }
        worst
    }

    /// Breakpoints for radial quadrature: the support ends, a geometric
    /// cluster towards `r = 0`, and table nodes.
    pub fn breakpoints(&self) -> Vec<f64> {
        let r_max = self.uv_cutoff;
        let mut bp = vec![0.0, r_max];
        bp.extend(quad::geometric_cluster(0.0, r_max, 40));
        if let Profile::Table { r, .. } = &self.profile {
            bp.extend(r.iter().copied().filter(|&x| x > 0.0 && x < r_max));
        }
        bp
    }
}

/// Classifies the infrared exponent of a form factor.
pub fn ir_classify(ff: &FormFactor) -> IrClass {
    let p = ff.ir_exponent;
    if (p + 0.5).abs() <= CRITICAL_TOL {
        IrClass::Critical
    } else if p < -0.5 {
        IrClass::Subcritical
    } else {
        IrClass::Regular
    }
}

/// Classifies a bare exponent, rejecting `p ≤ −1`.
pub fn classify_exponent(p: f64) -> Result<IrClass> {
    if !(p > -1.0) {
        return Err(Error::InvalidFormFactor(format!("infrared exponent must exceed -1, got {p}")));
    }
    Ok(if (p + 0.5).abs() <= CRITICAL_TOL {
        IrClass::Critical
    } else if p < -0.5 {
        IrClass::Subcritical
    } else {
        IrClass::Regular
    })
}

/// Bose–Einstein occupation `ρ_β(r) = 1/(e^{βr} − 1)`.
///
/// ```
/// let rho = levelshift::reservoir::occupation(1.0, 2f64.ln()).unwrap();
/// assert!((rho - 1.0).abs() < 1e-15);
/// ```
pub fn occupation(beta: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("occupation needs r > 0, got {r}")));
    }
    Ok(rho(beta, r))
}

#[inline]
fn rho(beta: f64, r: f64) -> f64 {
    1.0 / (beta * r).exp_m1()
}

#[inline]
fn one_plus_rho(beta: f64, r: f64) -> f64 {
    -1.0 / (-beta * r).exp_m1()
}

/// A reservoir at inverse temperature `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirSpec {
    pub beta: f64,
    pub form_factor: FormFactor,
}

impl ReservoirSpec {
    pub fn new(beta: f64, form_factor: FormFactor) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidArgument(format!("beta must be positive and finite, got {beta}")));
        }
        Ok(ReservoirSpec { beta, form_factor })
    }

    pub fn ir_class(&self) -> IrClass {
        ir_classify(&self.form_factor)
    }

    pub fn r_max(&self) -> f64 {
        self.form_factor.uv_cutoff
    }

    pub fn jacobian(&self, r: f64) -> f64 {
        self.form_factor.jacobian(r)
    }

    /// Emission weight `J(r)(1 + ρ(r))`.
    pub fn emission(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        self.jacobian(r) * one_plus_rho(self.beta, r)
    }

    /// Absorption weight `J(r)ρ(r)`.
    pub fn absorption(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        self.jacobian(r) * rho(self.beta, r)
    }

    /// Symmetric weight `M(r) = J(r)/(2 sinh(βr/2))` for `r > 0`.
    fn m_weight(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        self.jacobian(r) / (2.0 * (0.5 * self.beta * r).sinh())
    }

    /// Spectral density `K(ν)`; at `ν = 0` the delta weight.
    pub fn spectral_density(&self, nu: f64) -> Result<f64> {
        if nu > 0.0 {
            Ok(self.emission(nu))
        } else if nu < 0.0 {
            Ok(self.absorption(-nu))
        } else {
            delta_weight(self)
        }
    }

    /// `M(ν) = e^{−βν/2} K(ν)`, even in `ν`; at `ν = 0` the delta weight.
    pub fn cross_weight(&self, nu: f64) -> Result<f64> {
        if nu == 0.0 {
            delta_weight(self)
        } else {
            Ok(self.m_weight(nu.abs()))
        }
    }
}

/// The on-shell coupling `s = π Δ² W(Δ) = π J(Δ)`, with a flag set when
/// `Δ` lies outside the support of `g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SCoupling {
    pub value: f64,
    pub outside_support: bool,
}

pub fn s_coupling(spec: &ReservoirSpec, delta: f64) -> Result<SCoupling> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    if delta > spec.r_max() {
        return Ok(SCoupling { value: 0.0, outside_support: true });
    }
    Ok(SCoupling { value: PI * spec.jacobian(delta), outside_support: false })
}

fn check_inside(spec: &ReservoirSpec, delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < spec.r_max()) {
        return Err(Error::InvalidArgument(format!(
            "delta = {delta} must lie strictly inside the support (0, {})",
            spec.r_max()
        )));
    }
    Ok(())
}

/// `α = PV ∫_0^{R} J(r)(1 + ρ(r))/(Δ − r) dr`.
pub fn pv_alpha(spec: &ReservoirSpec, delta: f64, opts: &QuadOptions) -> Result<f64> {
    check_inside(spec, delta)?;
    quad::principal_value(
        |r| spec.emission(r),
        delta,
        0.0,
        spec.r_max(),
        &spec.form_factor.breakpoints(),
        opts,
    )
}

/// `α′ = ∫_0^{R} J(r)ρ(r)/(Δ + r) dr`, the absorption-channel companion of
/// [`pv_alpha`].
pub fn absorption_shift(spec: &ReservoirSpec, delta: f64, opts: &QuadOptions) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    quad::integrate_real(|r| spec.absorption(r) / (delta + r), &spec.form_factor.breakpoints(), opts)
}

/// The real shift entering the three-level operator, `(α + α′)/2`.
///
/// It equals `−Re T(−Δ)` for the half transform `T` of [`half_transform`].
pub fn effective_shift(spec: &ReservoirSpec, delta: f64, opts: &QuadOptions) -> Result<f64> {
    Ok(0.5 * (pv_alpha(spec, delta, opts)? + absorption_shift(spec, delta, opts)?))
}

/// `ξ = ½ ∫ J(r)/r dr` and `η = π δ / 2` with `δ` the [`delta_weight`].
///
/// For isotropic critical profiles `η = 2π²γ²/β`.
pub fn xi_eta(spec: &ReservoirSpec, opts: &QuadOptions) -> Result<(f64, f64)> {
    if spec.ir_class() == IrClass::Subcritical {
        return Err(Error::NonexistentLso { p: spec.form_factor.ir_exponent });
    }
    let xi = 0.5 * quad::integrate_real(|r| spec.jacobian(r) / r, &spec.form_factor.breakpoints(), opts)?;
    let eta = 0.5 * PI * delta_weight(spec)?;
    Ok((xi, eta))
}

/// `δ = β⁻¹ lim_{r→0} r W(r)`; `4πγ²/β` at `p = −1/2`, zero for `p > −1/2`.
pub fn delta_weight(spec: &ReservoirSpec) -> Result<f64> {
    let ff = &spec.form_factor;
    match ir_classify(ff) {
        IrClass::Subcritical => Err(Error::NonexistentLso { p: ff.ir_exponent }),
        IrClass::Regular => Ok(0.0),
        IrClass::Critical => Ok(4.0 * PI * ff.ir_amplitude * ff.ir_amplitude / spec.beta),
    }
}

/// Regularization of the resolvent `(L − e − iε)⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularization {
    Epsilon(f64),
    Limit,
}

/// The thermal half transform at frequency `x`,
///
/// `T_ε(x) = ½ ∫_0^R [ J(r)(1+ρ)/(x + r − iε) + J(r)ρ/(x − r − iε) ] dr`.
///
/// In the limit `ε ↓ 0` this becomes `½ PV(x) + i(π/2) K(−x)`, where
/// `PV(x) = PV ∫ J(r)(x coth(βr/2) − r)/(x² − r²) dr`. Combining both
/// channels under one integral removes their separate `1/r` divergences,
/// and `PV(0) = ∫ J(r)/r dr`. The imaginary part is nonnegative.
pub fn half_transform(spec: &ReservoirSpec, x: f64, reg: Regularization, opts: &QuadOptions) -> Result<Complex64> {
    match reg {
        Regularization::Epsilon(eps) => half_transform_eps(spec, x, eps, opts),
        Regularization::Limit => {
            let re = 0.5 * half_transform_pv(spec, x, opts)?;
            let im = 0.5 * PI * spec.spectral_density(-x)?;
            Ok(Complex64::new(re, im))
        }
    }
}

fn half_transform_pv(spec: &ReservoirSpec, x: f64, opts: &QuadOptions) -> Result<f64> {
    let r_max = spec.r_max();
    let bp = spec.form_factor.breakpoints();
    if x == 0.0 {
        if spec.ir_class() == IrClass::Subcritical {
            return Err(Error::NonexistentLso { p: spec.form_factor.ir_exponent });
        }
        return quad::integrate_real(|r| spec.jacobian(r) / r, &bp, opts);
    }
    let beta = spec.beta;
    let ax = x.abs();
    let f = move |r: f64| {
        if r <= 0.0 {
            return 0.0;
        }
        let coth = 1.0 / (0.5 * beta * r).tanh();
        spec.jacobian(r) * (x * coth - r) / (ax + r)
    };
    if ax < r_max {
        quad::principal_value(f, ax, 0.0, r_max, &bp, opts)
    } else {
        if (ax - r_max) <= 1e-12 * r_max && spec.jacobian(r_max) > 0.0 {
            return Err(Error::InvalidArgument(format!(
                "frequency {x} coincides with the cutoff where the profile jumps"
            )));
        }
        quad::integrate_real(|r| f(r) / (ax - r), &bp, opts)
    }
}

fn lorentz_breakpoints(spec: &ReservoirSpec, centre: f64, eps: f64) -> Vec<f64> {
    let mut bp = spec.form_factor.breakpoints();
    bp.push(centre);
    for k in 0..8 {
        let w = eps * 4f64.powi(k);
        bp.push(centre - w);
        bp.push(centre + w);
    }
    bp.retain(|&r| r >= 0.0 && r <= spec.r_max());
    bp
}

fn half_transform_eps(spec: &ReservoirSpec, x: f64, eps: f64, opts: &QuadOptions) -> Result<Complex64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let bp = lorentz_breakpoints(spec, x.abs(), eps);
    let ie = Complex64::new(0.0, eps);
    let t = quad::integrate(
        |r| {
            if r <= 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            spec.emission(r) / (x + r - ie) + spec.absorption(r) / (x - r - ie)
        },
        &bp,
        opts,
    )?;
    Ok(0.5 * t)
}

/// Weight of the terms coupling both tensor factors at transfer `u`:
/// `∫ M(ν) ε/((u+ν)² + ε²) dν` for `ε > 0`, tending to `π M(u)`.
pub fn cross_transform(spec: &ReservoirSpec, u: f64, reg: Regularization, opts: &QuadOptions) -> Result<f64> {
    match reg {
        Regularization::Limit => Ok(PI * spec.cross_weight(u)?),
        Regularization::Epsilon(eps) => {
            if !(eps > 0.0) {
                return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
            }
            let bp = lorentz_breakpoints(spec, u.abs(), eps);
            let e2 = eps * eps;
            quad::integrate_real(
                |r| {
                    let m = spec.m_weight(r);
                    m * (eps / ((u + r).powi(2) + e2) + eps / ((u - r).powi(2) + e2))
                },
                &bp,
                opts,
            )
        }
    }
}

/// The combination `(2√(ρ(1+ρ)) − 1 − 2ρ)²` appearing in fourth-order
/// rates; algebraically equal to `tanh²(βr/4)`.
pub fn xi2_factor(beta: f64, r: f64) -> f64 {
    let rho = rho(beta, r);
    let v = 2.0 * (rho * (1.0 + rho)).sqrt() - 1.0 - 2.0 * rho;
    v * v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tight() -> QuadOptions {
        QuadOptions { abs_tol: 1e-13, rel_tol: 1e-12, max_panels: 20_000 }
    }

    #[test]
    fn occupation_examples() {
        assert!((occupation(1.0, 2f64.ln()).unwrap() - 1.0).abs() < 1e-15);
        let tail = occupation(2.0, 50.0).unwrap();
        assert!(tail < 1e-43 && tail > 0.0);
        let small = occupation(1.0, 1e-8).unwrap();
        assert!((small * 1e-8 - 1.0).abs() < 1e-6);
        assert!(occupation(1.0, 0.0).is_err());
        assert!(occupation(1.0, -1.0).is_err());
    }

    #[test]
    fn classification_examples() {
        let mk = |p| FormFactor::power_cutoff(1.0, p, 1.0).unwrap();
        assert_eq!(ir_classify(&mk(-0.75)), IrClass::Subcritical);
        assert_eq!(ir_classify(&mk(-0.5)), IrClass::Critical);
        assert_eq!(ir_classify(&mk(0.0)), IrClass::Regular);
        assert!(FormFactor::power_cutoff(1.0, -1.0, 1.0).is_err());
        assert!(classify_exponent(-1.2).is_err());
    }

    #[test]
    fn ir_sampling_rejects_inconsistent_declarations() {
        // A Gaussian narrower than the sampling window breaks the declared limit.
        assert!(FormFactor::gaussian_damped(1.0, 0.0, 0.05, 1.0).is_err());
        assert!(FormFactor::gaussian_damped(1.0, 0.0, 1.0, 5.0).is_ok());
    }

    #[test]
    fn s_coupling_examples() {
        let flat = ReservoirSpec::new(1.0, FormFactor::power_cutoff(1.0, 0.0, 2.0).unwrap()).unwrap();
        let s = s_coupling(&flat, 1.0).unwrap();
        assert!((s.value - 39.478_417_604_357_43).abs() < 1e-10);
        assert!(!s.outside_support);
        let quarter = s_coupling(&flat, 0.5).unwrap().value;
        assert!((quarter - s.value / 4.0).abs() < 1e-12);
        let zero = ReservoirSpec::new(1.0, FormFactor::power_cutoff(0.0, 0.0, 2.0).unwrap()).unwrap();
        assert_eq!(s_coupling(&zero, 1.0).unwrap().value, 0.0);
        let out = s_coupling(&flat, 3.0).unwrap();
        assert!(out.outside_support && out.value == 0.0);
    }

    #[test]
    fn xi_eta_examples() {
        let gamma = 0.7;
        let spec = ReservoirSpec::new(2.0, FormFactor::power_cutoff(gamma, -0.5, 1.0).unwrap()).unwrap();
        let (xi, eta) = xi_eta(&spec, &tight()).unwrap();
        assert!((xi - 2.0 * PI * gamma * gamma).abs() < 1e-10);
        assert!((eta - 2.0 * PI * PI * gamma * gamma / 2.0).abs() < 1e-12);

        let zero = ReservoirSpec::new(1.0, FormFactor::power_cutoff(0.0, 0.5, 1.0).unwrap()).unwrap();
        assert_eq!(xi_eta(&zero, &tight()).unwrap(), (0.0, 0.0));

        let sub = ReservoirSpec::new(1.0, FormFactor::power_cutoff(1.0, -0.75, 1.0).unwrap()).unwrap();
        assert!(matches!(xi_eta(&sub, &tight()), Err(Error::NonexistentLso { .. })));
    }

    #[test]
    fn delta_weight_examples() {
        let mk = |gamma, p, beta| ReservoirSpec::new(beta, FormFactor::power_cutoff(gamma, p, 1.0).unwrap()).unwrap();
        assert_eq!(delta_weight(&mk(1.0, 0.0, 1.0)).unwrap(), 0.0);
        assert!((delta_weight(&mk(1.0, -0.5, 1.0)).unwrap() - 4.0 * PI).abs() < 1e-14);
        assert!((delta_weight(&mk(2.0, -0.5, 4.0)).unwrap() - 4.0 * PI).abs() < 1e-14);
        assert!(matches!(delta_weight(&mk(1.0, -0.75, 1.0)), Err(Error::NonexistentLso { .. })));
    }

    #[test]
    fn detailed_balance_of_spectral_density() {
        let spec =
            ReservoirSpec::new(1.7, FormFactor::gaussian_damped(0.9, 0.5, 1.5, 6.0).unwrap()).unwrap();
        for &nu in &[0.01, 0.3, 1.0, 2.5] {
            let kp = spec.spectral_density(nu).unwrap();
            let km = spec.spectral_density(-nu).unwrap();
            assert!((km - (-spec.beta * nu).exp() * kp).abs() <= 1e-14 * kp);
            let m = spec.cross_weight(nu).unwrap();
            assert!((m - (-0.5 * spec.beta * nu).exp() * kp).abs() <= 1e-14 * kp);
            assert_eq!(m, spec.cross_weight(-nu).unwrap());
        }
    }

    #[test]
    fn zero_profile_gives_zero_transforms() {
        let spec = ReservoirSpec::new(1.0, FormFactor::power_cutoff(0.0, 0.0, 1.0).unwrap()).unwrap();
        for reg in [Regularization::Limit, Regularization::Epsilon(1e-2)] {
            for x in [-0.5, 0.0, 0.5] {
                assert_eq!(half_transform(&spec, x, reg, &tight()).unwrap(), Complex64::new(0.0, 0.0));
            }
        }
        assert_eq!(pv_alpha(&spec, 0.5, &tight()).unwrap(), 0.0);
    }

    #[test]
    fn regularized_transform_has_nonnegative_imaginary_part() {
        let spec = ReservoirSpec::new(0.8, FormFactor::gaussian_damped(1.0, 0.0, 1.0, 5.0).unwrap()).unwrap();
        for x in [-2.0, -0.4, 0.0, 0.4, 2.0] {
            for eps in [1e-1, 1e-2, 1e-3] {
                let t = half_transform(&spec, x, Regularization::Epsilon(eps), &tight()).unwrap();
                assert!(t.im >= 0.0);
            }
        }
    }

    #[test]
    fn regularized_transform_converges_linearly() {
        let spec = ReservoirSpec::new(1.0, FormFactor::gaussian_damped(1.0, 0.0, 1.0, 5.0).unwrap()).unwrap();
        for x in [-1.0, 1.0, 0.0] {
            let lim = half_transform(&spec, x, Regularization::Limit, &tight()).unwrap();
            let mut prev = f64::INFINITY;
            for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
                let t = half_transform(&spec, x, Regularization::Epsilon(eps), &tight()).unwrap();
                let d = (t - lim).norm();
                // At zero frequency the linear IR onset of K gives an extra logarithm.
                let rate = if x == 0.0 { 20.0 * eps * (1.0 - eps.ln()) } else { 5.0 * eps };
                assert!(d < rate * (1.0 + lim.norm()), "x={x} eps={eps} d={d}");
                assert!(d < prev);
                prev = d;
            }
        }
    }

    #[test]
    fn real_part_of_limit_matches_shift_integrals() {
        let spec = ReservoirSpec::new(1.3, FormFactor::gaussian_damped(0.8, 0.5, 1.2, 6.0).unwrap()).unwrap();
        let delta = 0.9;
        let t = half_transform(&spec, -delta, Regularization::Limit, &tight()).unwrap();
        let shift = effective_shift(&spec, delta, &tight()).unwrap();
        assert!((t.re + shift).abs() < 1e-10, "{} vs {}", t.re, -shift);
    }

    #[test]
    fn cross_transform_tends_to_on_shell_weight() {
        let spec = ReservoirSpec::new(1.0, FormFactor::gaussian_damped(1.0, 0.0, 1.0, 5.0).unwrap()).unwrap();
        for u in [-1.0, 0.7] {
            let lim = cross_transform(&spec, u, Regularization::Limit, &tight()).unwrap();
            let c = cross_transform(&spec, u, Regularization::Epsilon(1e-4), &tight()).unwrap();
            assert!((c - lim).abs() < 1e-3 * lim);
        }
    }

    #[test]
    fn xi2_factor_is_tanh_squared() {
        for &beta in &[0.1f64, 1.0, 7.0] {
            for &r in &[1e-3, 0.5, 3.0, 20.0] {
                let t = (beta * r / 4.0).tanh();
                assert!((xi2_factor(beta, r) - t * t).abs() < 1e-12);
            }
        }
    }
}
