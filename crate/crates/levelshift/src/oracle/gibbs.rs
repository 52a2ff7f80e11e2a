use nalgebra::DMatrix;
use num_complex::Complex64;

use super::FiniteModeModel;
use crate::error::{Error, Result};
use crate::lso::Generator;

/// Largest number of modes accepted: the physical space has `N·2^M` states.
pub const MAX_GIBBS_MODES: usize = 10;

const ENERGY_TOL: f64 = 1e-9;

/// One ε of [`gibbs_derivative_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsDerivativeEntry {
    pub eps: f64,
    /// `‖P I R̄ I P Ω‖`
    pub lambda_omega_norm: f64,
    /// `‖P I R̄ I P Ω − (P I P ψ′ − iε P I R̄ ψ′)‖`
    pub residual: f64,
    /// Norm of the three terms, for relative comparisons.
    pub scale: f64,
    /// `‖Im Λ(ε) Ω‖` with `Im Λ = (Λ − Λ*)/2i`; vanishes linearly in ε.
    pub im_part_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsDerivativeReport {
    /// Dimension of the physical space (`N·2^M`).
    pub dim: usize,
    /// `‖P I P ψ′‖`; zero when the coupling links no equal-energy states.
    pub pip_norm: f64,
    /// Smallest nonzero `|E_a − E_b|` among the entries off the kernel.
    pub min_gap: f64,
    pub entries: Vec<GibbsDerivativeEntry>,
}

impl GibbsDerivativeReport {
    pub fn max_relative_residual(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| if e.scale > 0.0 { e.residual / e.scale } else { e.residual })
            .fold(0.0, f64::max)
    }
}

/// Sparse Hermitian matrix as `(row, col, value)` triples.
struct Sparse {
    entries: Vec<(usize, usize, Complex64)>,
}

impl Sparse {
    /// `vX − Xv`
    fn commutator(&self, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let d = x.nrows();
        let mut out = DMatrix::zeros(d, d);
        for &(b, a, val) in &self.entries {
            for col in 0..d {
                out[(b, col)] += val * x[(a, col)];
            }
            let src = x.column(b).clone_owned();
            out.column_mut(a).axpy(-val, &src, Complex64::new(1.0, 0.0));
        }
        out
    }
}

/// Checks the ε-regularized Gibbs-derivative identity on a truncated
/// oscillator model in standard form.
///
/// Each mode becomes a two-level oscillator (occupation 0 or 1) with
/// frequency `r_k`, `h_0 = H ⊗ 1 + Σ r_k n_k` and
/// `v = G ⊗ Σ_k g_k (a_k + a_k*)/√2`. Vectors are `D × D` matrices, the
/// Liouvillean acts as `L_0 X = [h_0, X]`, the interaction as `I X = [v, X]`,
/// and `Ω_λ = e^{−β(h_0 + λv)/2}` is an exact zero branch of `L_0 + λI`.
/// Its derivative follows from divided differences of `x ↦ e^{−βx/2}`.
///
/// With `P` the kernel projection of `L_0` and `R̄ = P̄(L_0 − iε)⁻¹P̄`, the
/// check compares `P I R̄ I P Ω` with `P I P ψ′ − iε P I R̄ ψ′` and reports
/// the decay of `Im Λ(ε) Ω`.
pub fn gibbs_derivative_check(fm: &FiniteModeModel, eps_grid: &[f64]) -> Result<GibbsDerivativeReport> {
    if fm.couplings.len() != 1 || fm.generator != Generator::Standard {
        return Err(Error::InvalidArgument("the Gibbs check needs one coupling and the standard generator".into()));
    }
    let m = fm.modes.len();
    if m > MAX_GIBBS_MODES {
        return Err(Error::InvalidArgument(format!("at most {MAX_GIBBS_MODES} modes, got {m}")));
    }
    if eps_grid.is_empty() || eps_grid.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidArgument("eps grid must be nonempty and positive".into()));
    }
    let n = fm.small.dim();
    let levels = 1usize << m;
    let dim = n * levels;
    let g = &fm.couplings[0];
    let beta = fm.betas[0];
    let energy: Vec<f64> = (0..dim)
        .map(|a| {
            let (s, bits) = (a / levels, a % levels);
            fm.small.energies()[s] + (0..m).filter(|k| bits >> k & 1 == 1).map(|k| fm.modes[k].r).sum::<f64>()
        })
        .collect();
    let mut v = Sparse { entries: Vec::new() };
    for a in 0..dim {
        let (s, bits) = (a / levels, a % levels);
        for (k, mode) in fm.modes.iter().enumerate() {
            let flipped = bits ^ (1 << k);
            let amp = mode.amplitude / std::f64::consts::SQRT_2;
            for sp in 0..n {
                let val = g[(sp, s)] * amp;
                if val != Complex64::new(0.0, 0.0) {
                    v.entries.push((sp * levels + flipped, a, val));
                }
            }
        }
    }

    let e_min = energy.iter().copied().fold(f64::INFINITY, f64::min);
    let f = |x: f64| (-0.5 * beta * (x - e_min)).exp();
    let psi0 = DMatrix::from_fn(dim, dim, |a, b| if a == b { Complex64::new(f(energy[a]), 0.0) } else { Complex64::new(0.0, 0.0) });
    let mut dv = DMatrix::zeros(dim, dim);
    for &(b, a, val) in &v.entries {
        let (eb, ea) = (energy[b], energy[a]);
        let dd = if (eb - ea).abs() <= ENERGY_TOL { -0.5 * beta * f(eb) } else { (f(eb) - f(ea)) / (eb - ea) };
        dv[(b, a)] += val * dd;
    }
    let in_kernel = |a: usize, b: usize| (energy[a] - energy[b]).abs() <= ENERGY_TOL;
    let mut min_gap = f64::INFINITY;
    for a in 0..dim {
        for b in 0..dim {
            let gap = (energy[a] - energy[b]).abs();
            if gap > ENERGY_TOL {
                min_gap = min_gap.min(gap);
            }
        }
    }
    let project = |x: &DMatrix<Complex64>| DMatrix::from_fn(dim, dim, |a, b| if in_kernel(a, b) { x[(a, b)] } else { Complex64::new(0.0, 0.0) });
    let resolve = |x: &DMatrix<Complex64>, eps: f64| {
        DMatrix::from_fn(dim, dim, |a, b| {
            if in_kernel(a, b) {
                Complex64::new(0.0, 0.0)
            } else {
                x[(a, b)] / Complex64::new(energy[a] - energy[b], -eps)
            }
        })
    };

    let pip = project(&v.commutator(&project(&dv)));
    let i_psi0 = v.commutator(&psi0);
    let mut entries = Vec::new();
    for &eps in eps_grid {
        let lam = |e: f64| project(&v.commutator(&resolve(&i_psi0, e)));
        let (plus, minus) = (lam(eps), lam(-eps));
        let tail = project(&v.commutator(&resolve(&dv, eps))) * Complex64::new(0.0, eps);
        let residual = (&plus - (&pip - &tail)).norm();
        let im = (&plus - &minus) * Complex64::new(0.0, -0.5);
        entries.push(GibbsDerivativeEntry {
            eps,
            lambda_omega_norm: plus.norm(),
            residual,
            scale: plus.norm() + pip.norm() + tail.norm(),
            im_part_norm: im.norm(),
        });
    }
    Ok(GibbsDerivativeReport { dim, pip_norm: pip.norm(), min_gap, entries })
}
