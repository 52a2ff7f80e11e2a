use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Spacing of the λ grid on which the eigenbranch is tracked.
pub const BRANCH_STEP: f64 = 1e-4;

/// Number of tracked steps on each side of λ = 0. The difference quotient
/// for `ψ′_0` is taken across the outermost points, which keeps the
/// eigenvector rounding (of order `ε_mach/gap(λ)`) well below the identity
/// tolerance even though the degenerate pair splits only linearly in λ.
pub const BRANCH_STEPS: usize = 100;

const EIGEN_TOL: f64 = 1e-9;

/// A finite-dimensional instance of the Feshbach setting: `K_λ = L_0 + λW`
/// with an eigenvalue `e` of `L_0` that persists along a branch `ψ_λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeshbachInstance {
    pub n: usize,
    pub l0: DMatrix<Complex64>,
    pub w: DMatrix<Complex64>,
    pub e: f64,
    /// Eigenprojection of `L_0` at `e`.
    pub p: DMatrix<Complex64>,
    /// Normalized `ψ_0`.
    pub psi0: DVector<Complex64>,
    /// `ψ′_0` in the gauge `⟨ψ_0, ψ_λ⟩ = 1`.
    pub dpsi0: DVector<Complex64>,
    /// Largest `‖(K_λ − e)ψ_λ‖` over the tracked grid.
    pub branch_residual: f64,
    pub seed: Option<u64>,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    let a = DMatrix::from_fn(n, n, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
    a.qr().q()
}

fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    let a = DMatrix::from_fn(n, n, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
    (&a + a.adjoint()) * c(0.5, 0.0)
}

fn outer(a: &DVector<Complex64>, b: &DVector<Complex64>) -> DMatrix<Complex64> {
    a * b.adjoint()
}

impl FeshbachInstance {
    /// A seeded 8×8 instance: `L_0` with a doubly degenerate eigenvalue
    /// `e = 0` and the remaining eigenvalues in `±[0.5, 2]`, and a Hermitian
    /// `W` for which `ψ_λ = u_1 + λφ` is an exact branch at `e`.
    ///
    /// `φ ⊥ u_1` is random with `⟨φ, L_0 φ⟩ = 0`, `W u_1 = −L_0 φ` and
    /// `W φ = 0`; on the complement of `{u_1, φ}` the perturbation is a
    /// random Hermitian block.
    pub fn random(seed: u64) -> Result<Self> {
        let n = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_unitary(n, &mut rng);
        let mut eig = vec![0.0; n];
        for (k, slot) in eig.iter_mut().enumerate().skip(2) {
            let mag = 0.5 + 1.5 * rng.gen::<f64>();
            *slot = if k % 2 == 0 { mag } else { -mag };
        }
        let l0 = &u * DMatrix::from_diagonal(&DVector::from_iterator(n, eig.iter().map(|&x| c(x, 0.0)))) * u.adjoint();
        let u1: DVector<Complex64> = u.column(0).into();
        let mut coef: Vec<Complex64> = (0..n).map(|_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
        coef[0] = c(0.0, 0.0);
        let pos: f64 = (0..n).filter(|&k| eig[k] > 0.0).map(|k| coef[k].norm_sqr() * eig[k]).sum();
        let neg: f64 = (0..n).filter(|&k| eig[k] < 0.0).map(|k| coef[k].norm_sqr() * eig[k]).sum();
        let t = (-neg / pos).sqrt();
        for k in 0..n {
            if eig[k] > 0.0 {
                coef[k] *= t;
            }
        }
        let phi = &u * DVector::from_vec(coef);
        let v = -(&l0 * &phi);
        let phi_hat = phi.normalize();
        let pi = DMatrix::identity(n, n) - outer(&u1, &u1) - outer(&phi_hat, &phi_hat);
        let w = outer(&v, &u1) + outer(&u1, &v) + &pi * random_hermitian(n, &mut rng) * &pi;
        let mut inst = Self::from_operators(l0, w, 0.0, &u1)?;
        inst.seed = Some(seed);
        Ok(inst)
    }

    /// Tracks the branch of `L_0 + λW` at `e` through `psi0_hint` by
    /// maximal-overlap matching on a λ grid and differentiates it.
    pub fn from_operators(
        l0: DMatrix<Complex64>,
        w: DMatrix<Complex64>,
        e: f64,
        psi0_hint: &DVector<Complex64>,
    ) -> Result<Self> {
        let n = l0.nrows();
        if l0.ncols() != n || w.nrows() != n || w.ncols() != n || psi0_hint.len() != n {
            return Err(Error::InvalidArgument("L0, W and the hint must have matching dimensions".into()));
        }
        let eig = l0.clone().symmetric_eigen();
        let mut p = DMatrix::zeros(n, n);
        for k in 0..n {
            if (eig.eigenvalues[k] - e).abs() <= EIGEN_TOL {
                let uk: DVector<Complex64> = eig.eigenvectors.column(k).into();
                p += outer(&uk, &uk);
            }
        }
        if p.norm() == 0.0 {
            return Err(Error::InvalidArgument(format!("{e} is not an eigenvalue of L0")));
        }
        let psi0 = (&p * psi0_hint).normalize();
        if !psi0.iter().all(|z| z.is_finite()) {
            return Err(Error::InvalidArgument("the hint has no component in the eigenspace".into()));
        }
        let mut branch_residual = 0.0_f64;
        let mut ends = Vec::new();
        for sign in [1.0, -1.0] {
            let mut prev = psi0.clone();
            for k in 1..=BRANCH_STEPS {
                let lambda = sign * BRANCH_STEP * k as f64;
                let (vec, val) = track(&l0, &w, lambda, &prev)?;
                if (val - e).abs() > EIGEN_TOL {
                    return Err(Error::BranchTracking(format!(
                        "the tracked eigenvalue moved to {val} at lambda = {lambda}; e = {e} does not persist"
                    )));
                }
                let gauge = psi0.dotc(&vec);
                let vec = vec / gauge;
                let k_lambda = &l0 + &w * c(lambda, 0.0);
                branch_residual = branch_residual.max((&k_lambda * &vec - &vec * c(e, 0.0)).norm());
                prev = vec;
            }
            ends.push(prev);
        }
        let span = 2.0 * BRANCH_STEP * BRANCH_STEPS as f64;
        let dpsi0 = (&ends[0] - &ends[1]) / c(span, 0.0);
        Ok(FeshbachInstance { n, l0, w, e, p, psi0, dpsi0, branch_residual, seed: None })
    }

    /// The same instance with `W` replaced by `s·W`, branch re-solved.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let mut out = Self::from_operators(self.l0.clone(), &self.w * c(s, 0.0), self.e, &self.psi0)?;
        out.seed = self.seed;
        Ok(out)
    }

    fn p_bar(&self) -> DMatrix<Complex64> {
        DMatrix::identity(self.n, self.n) - &self.p
    }

    /// `P̄(L̄_0 − e − iε)⁻¹P̄ x` by a dense solve.
    fn reduced_resolvent(&self, eps: f64, x: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        let pb = self.p_bar();
        let shifted = &self.l0 - DMatrix::identity(self.n, self.n) * c(self.e, eps);
        let lu = shifted.lu();
        let y = lu.solve(&(&pb * x)).ok_or(Error::SingularSystem(1.0 / eps))?;
        Ok(pb * y)
    }
}

fn track(
    l0: &DMatrix<Complex64>,
    w: &DMatrix<Complex64>,
    lambda: f64,
    prev: &DVector<Complex64>,
) -> Result<(DVector<Complex64>, f64)> {
    let k = l0 + w * c(lambda, 0.0);
    let eig = k.symmetric_eigen();
    let mut overlaps: Vec<(f64, usize)> = (0..eig.eigenvalues.len())
        .map(|j| (eig.eigenvectors.column(j).dotc(prev).norm() / prev.norm(), j))
        .collect();
    overlaps.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (best, j) = overlaps[0];
    let second = overlaps.get(1).map_or(0.0, |o| o.0);
    if best < 0.9 || second > 0.5 {
        return Err(Error::BranchTracking(format!(
            "ambiguous match at lambda = {lambda}: overlaps {best:.3} and {second:.3}"
        )));
    }
    Ok((eig.eigenvectors.column(j).into(), eig.eigenvalues[j]))
}

/// Residuals of the Feshbach identities at one ε.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeshbachEntry {
    pub eps: f64,
    /// `‖PWPψ′_0‖`
    pub lhs_norm: f64,
    /// `‖PWPψ′_0 − PWR̄WPψ_0 − iε PWR̄ψ′_0‖`
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeshbachReport {
    pub entries: Vec<FeshbachEntry>,
    /// `‖lim_{ε↓0} PWR̄WPψ_0 − PWPψ′_0‖`, the limit taken by polynomial
    /// extrapolation through all grid points.
    pub limit_residual: f64,
    pub branch_residual: f64,
}

impl FeshbachReport {
    pub fn max_residual(&self) -> f64 {
        self.entries.iter().map(|e| e.residual).fold(0.0, f64::max)
    }
}

/// Checks `PWPψ′_0 = PWR̄WPψ_0 + iε PWR̄ψ′_0`, `R̄ = P̄(L̄_0 − e − iε)⁻¹P̄`,
/// at every ε of the grid and the ε ↓ 0 limit of the first term.
pub fn feshbach_identity_check(inst: &FeshbachInstance, eps_grid: &[f64]) -> Result<FeshbachReport> {
    if eps_grid.is_empty() || eps_grid.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidArgument("eps grid must be nonempty and positive".into()));
    }
    let p = &inst.p;
    let w = &inst.w;
    let lhs = p * w * p * &inst.dpsi0;
    let wp_psi0 = w * p * &inst.psi0;
    let mut entries = Vec::new();
    let mut samples = Vec::new();
    for &eps in eps_grid {
        let first = p * w * inst.reduced_resolvent(eps, &wp_psi0)?;
        let second = p * w * inst.reduced_resolvent(eps, &inst.dpsi0)? * c(0.0, eps);
        let residual = (&lhs - &first - &second).norm();
        entries.push(FeshbachEntry { eps, lhs_norm: lhs.norm(), residual });
        samples.push((eps, first));
    }
    let limit = extrapolate_to_zero(&samples);
    Ok(FeshbachReport { entries, limit_residual: (&limit - &lhs).norm(), branch_residual: inst.branch_residual })
}

/// Value at 0 of the polynomial through `(x_k, y_k)` (Neville).
pub fn extrapolate_to_zero<T>(samples: &[(f64, T)]) -> T
where
    T: Clone + std::ops::Sub<Output = T> + std::ops::Mul<Complex64, Output = T> + std::ops::Add<Output = T>,
{
    let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let mut p: Vec<T> = samples.iter().map(|s| s.1.clone()).collect();
    let n = p.len();
    for m in 1..n {
        for i in 0..n - m {
            let (xi, xj) = (xs[i], xs[i + m]);
            // P_{i..i+m}(0) = (x_{i+m} P_{i..} − x_i P_{..i+m}) / (x_{i+m} − x_i)
            let num = p[i].clone() * c(xj, 0.0) - p[i + 1].clone() * c(xi, 0.0);
            p[i] = num * c(1.0 / (xj - xi), 0.0);
        }
    }
    p[0].clone()
}
