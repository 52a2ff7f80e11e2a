use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{LevelShiftOperator, OpenSystemModel};
use crate::error::{Error, Result};
use crate::reservoir::{IrClass, Regularization};
use crate::smallsys::{check_hermitian, SectorBasis};

const I: Complex64 = Complex64::new(0.0, 1.0);

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Basis of the zero sector of `diag(e, f, f)` in the order used by the
/// three-level formulas.
pub const THREE_LEVEL_ORDER: [(usize, usize); 5] = [(0, 0), (1, 1), (2, 2), (1, 2), (2, 1)];

/// Zero sector of a doubly degenerate two-level system, lexicographic.
pub fn two_level_sector() -> SectorBasis {
    SectorBasis { bohr_frequency: 0.0, pairs: vec![(0, 0), (0, 1), (1, 0), (1, 1)] }
}

/// `Λ_0 = (ξ + iη) G² ⊗ 1 − (ξ − iη) 1 ⊗ C G² C − 2iη G ⊗ C G C` for a
/// doubly degenerate two-level system, in lexicographic pair order.
pub fn closed_form_2level(g: &DMatrix<Complex64>, xi: f64, eta: f64) -> Result<LevelShiftOperator> {
    if g.nrows() != 2 || g.ncols() != 2 {
        return Err(Error::InvalidArgument("the two-level form needs a 2x2 coupling".into()));
    }
    check_hermitian(g)?;
    if !(eta >= 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be nonnegative, got {eta}")));
    }
    let sector = two_level_sector();
    let g2 = g * g;
    let (plus, minus) = (Complex64::new(xi, eta), Complex64::new(xi, -eta));
    let mut m = DMatrix::zeros(4, 4);
    for (row, &(k, l)) in sector.pairs.iter().enumerate() {
        for (col, &(i, j)) in sector.pairs.iter().enumerate() {
            let mut v = -2.0 * I * eta * g[(k, i)] * g[(l, j)].conj();
            if l == j {
                v += plus * g2[(k, i)];
            }
            if k == i {
                v -= minus * g2[(l, j)].conj();
            }
            m[(row, col)] = v;
        }
    }
    Ok(LevelShiftOperator {
        sector,
        matrix: m,
        regularization: Regularization::Limit,
        parts: None,
        provenance: vec![0],
    })
}

/// The spectrum `{0, 0, z, −z̄}` of [`closed_form_2level`], with
/// `z = (α₁ − α₂)[ξ(α₁ + α₂) + iη(α₁ − α₂)]` for the eigenvalues `α₁, α₂` of `G`.
pub fn two_level_spectrum(g: &DMatrix<Complex64>, xi: f64, eta: f64) -> Result<[Complex64; 4]> {
    check_hermitian(g)?;
    let a = g[(0, 0)].re;
    let d = g[(1, 1)].re;
    let b = g[(0, 1)].norm();
    let mean = 0.5 * (a + d);
    let half = (0.25 * (a - d).powi(2) + b * b).sqrt();
    let (a1, a2) = (mean + half, mean - half);
    let z = (a1 - a2) * Complex64::new(xi * (a1 + a2), eta * (a1 - a2));
    Ok([re(0.0), re(0.0), z, -z.conj()])
}

/// Parameters of the three-level model `H = diag(e, f, f)`,
/// `G = [[0, a, b], [a, 0, c], [b, c, 0]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeLevel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub beta: f64,
    /// Level spacing `Δ = f − e > 0`.
    pub delta: f64,
}

impl ThreeLevel {
    /// `e^{βΔ/2}`
    pub fn q(&self) -> f64 {
        (0.5 * self.beta * self.delta).exp()
    }

    /// The Gibbs direction `[e^{βΔ/2}, 1, 1, 0, 0]`.
    pub fn psi(&self) -> DVector<Complex64> {
        DVector::from_vec(vec![re(self.q()), re(1.0), re(1.0), re(0.0), re(0.0)])
    }

    /// The second kernel direction `[q a/b, a/b − b/a, 0, 1, 1]` (needs `a, b ≠ 0`).
    pub fn chi(&self) -> Result<DVector<Complex64>> {
        if self.a == 0.0 || self.b == 0.0 {
            return Err(Error::InvalidArgument("the second kernel vector needs a, b nonzero".into()));
        }
        let (a, b) = (self.a, self.b);
        Ok(DVector::from_vec(vec![re(self.q() * a / b), re(a / b - b / a), re(0.0), re(1.0), re(1.0)]))
    }

    /// `Ψ_0 = φ_3 ⊗ φ_3`, which spans the kernel together with Ψ when `b = 0`.
    pub fn psi0() -> DVector<Complex64> {
        DVector::from_vec(vec![re(0.0), re(0.0), re(1.0), re(0.0), re(0.0)])
    }

    /// Reads the parameters off a single-coupling model with the
    /// three-level structure (real couplings, vanishing diagonal).
    pub fn from_model(model: &OpenSystemModel) -> Option<Self> {
        if model.couplings.len() != 1 || model.small.dim() != 3 {
            return None;
        }
        let e = model.small.energies();
        let tol = model.small.degeneracy_tol();
        if !((e[1] - e[2]).abs() <= tol && e[1] - e[0] > tol) {
            return None;
        }
        let g = &model.couplings[0].g;
        let real = g.iter().all(|z| z.im.abs() <= 1e-14);
        let zero_diag = (0..3).all(|k| g[(k, k)].norm() <= 1e-14);
        if !real || !zero_diag {
            return None;
        }
        let order_ok = model.small.sector_at(0.0).ok()?.pairs == THREE_LEVEL_ORDER;
        if !order_ok {
            return None;
        }
        Some(ThreeLevel {
            a: g[(0, 1)].re,
            b: g[(0, 2)].re,
            c: g[(1, 2)].re,
            beta: model.couplings[0].reservoir.beta,
            delta: model.small.bohr_frequency(1, 0),
        })
    }
}

/// The 5×5 zero-sector operator of the three-level model.
///
/// With `q = e^{βΔ/2}`, `σ = sinh(βΔ/2)` and `ζ = q − (4i/s) σ α`, it is
/// `(is/2σ)` times
///
/// ```text
/// [ (a²+b²)/q  −a²     −b²     −ab           −ab          ]
/// [ −a²        a²q      0      (ab/2)ζ       (ab/2)ζ̄      ]
/// [ −b²         0      b²q     (ab/2)ζ̄       (ab/2)ζ      ]
/// [ −ab       (ab/2)ζ (ab/2)ζ̄ (a²ζ̄+b²ζ)/2    0            ]
/// [ −ab       (ab/2)ζ̄ (ab/2)ζ  0            (a²ζ+b²ζ̄)/2   ]
/// ```
///
/// `alpha` is the real shift `−Re T(−Δ)` (see
/// [`crate::reservoir::effective_shift`]). A nonzero `critical_delta` adds
/// `iπc²δ` on the diagonal entries 2–5 and `−iπc²δ` at the positions
/// `(2,3), (3,2), (4,5), (5,4)`.
#[allow(clippy::too_many_arguments)]
pub fn closed_form_3level(
    a: f64,
    b: f64,
    c: f64,
    beta: f64,
    delta: f64,
    s: f64,
    alpha: f64,
    critical_delta: f64,
) -> Result<LevelShiftOperator> {
    if !(beta > 0.0) || !(delta > 0.0) {
        return Err(Error::InvalidArgument("beta and delta must be positive".into()));
    }
    if !(s >= 0.0) {
        return Err(Error::InvalidArgument(format!("s must be nonnegative, got {s}")));
    }
    if s == 0.0 && alpha != 0.0 {
        return Err(Error::InvalidArgument("s = 0 with a nonzero shift leaves zeta undefined".into()));
    }
    if !(critical_delta >= 0.0) {
        return Err(Error::InvalidArgument("critical delta weight must be nonnegative".into()));
    }
    let q = (0.5 * beta * delta).exp();
    let sh = (0.5 * beta * delta).sinh();
    let pre = I * s / (2.0 * sh);
    // pre·ζ expanded so that s = 0 stays finite.
    let pz = pre * q + 2.0 * alpha;
    let pzb = pre * q - 2.0 * alpha;
    let (a2, b2, ab) = (a * a, b * b, a * b);
    let mut m = DMatrix::from_row_slice(
        5,
        5,
        &[
            pre * (a2 + b2) / q, -pre * a2, -pre * b2, -pre * ab, -pre * ab,
            -pre * a2, pre * a2 * q, re(0.0), 0.5 * ab * pz, 0.5 * ab * pzb,
            -pre * b2, re(0.0), pre * b2 * q, 0.5 * ab * pzb, 0.5 * ab * pz,
            -pre * ab, 0.5 * ab * pz, 0.5 * ab * pzb, 0.5 * (a2 * pzb + b2 * pz), re(0.0),
            -pre * ab, 0.5 * ab * pzb, 0.5 * ab * pz, re(0.0), 0.5 * (a2 * pz + b2 * pzb),
        ],
    );
    if critical_delta > 0.0 {
        let w = I * std::f64::consts::PI * c * c * critical_delta;
        for k in 1..5 {
            m[(k, k)] += w;
        }
        for (r, col) in [(1, 2), (2, 1), (3, 4), (4, 3)] {
            m[(r, col)] -= w;
        }
    }
    Ok(LevelShiftOperator {
        sector: SectorBasis { bohr_frequency: 0.0, pairs: THREE_LEVEL_ORDER.to_vec() },
        matrix: m,
        regularization: Regularization::Limit,
        parts: None,
        provenance: vec![0],
    })
}

/// The spectrum of the regular three-level operator:
/// `{0, 0, is(a²+b²)coth(βΔ/2), (a²+b²)(±α + (is/2) e^{βΔ}/(e^{βΔ} − 1))}`.
pub fn three_level_spectrum(a: f64, b: f64, beta: f64, delta: f64, s: f64, alpha: f64) -> [Complex64; 5] {
    let n2 = a * a + b * b;
    let x = beta * delta;
    let coth = 1.0 / (0.5 * x).tanh();
    let bose = 1.0 / (-(-x).exp_m1());
    let side = Complex64::new(0.0, 0.5 * s * bose);
    [re(0.0), re(0.0), I * s * n2 * coth, n2 * (re(alpha) + side), n2 * (re(-alpha) + side)]
}

/// Whether a model's limit operator should be independent of `c`.
pub(crate) fn c_invariance_applies(model: &OpenSystemModel) -> bool {
    ThreeLevel::from_model(model).is_some() && model.ir_class() == IrClass::Regular
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lso::eigenvalues;

    #[test]
    fn proportional_to_identity_gives_zero() {
        let g = DMatrix::from_diagonal(&nalgebra::dvector![re(0.7), re(0.7)]);
        let l = closed_form_2level(&g, 1.3, 0.4).unwrap();
        assert!(l.matrix.norm() < 1e-15);
    }

    #[test]
    fn diagonal_coupling_example() {
        let g = DMatrix::from_diagonal(&nalgebra::dvector![re(1.0), re(-1.0)]);
        let l = closed_form_2level(&g, 0.37, 0.5).unwrap();
        // Lexicographic order (00),(01),(10),(11); listed order (11),(22),(12),(21) ↦ 0,3,1,2.
        let expect = [re(0.0), I * 2.0, I * 2.0, re(0.0)];
        for k in 0..4 {
            assert!((l.matrix[(k, k)] - expect[k]).norm() < 1e-15);
        }
        assert!((l.matrix.clone() - DMatrix::from_diagonal(&l.matrix.diagonal())).norm() < 1e-15);
    }

    #[test]
    fn two_level_spectrum_vanishes_for_traceless_real_case() {
        let g = DMatrix::from_diagonal(&nalgebra::dvector![re(1.0), re(-1.0)]);
        let ev = eigenvalues(&closed_form_2level(&g, 1.0, 0.0).unwrap().matrix).unwrap();
        assert!(ev.iter().all(|z| z.norm() < 1e-14));
        let s = two_level_spectrum(&g, 1.0, 0.0).unwrap();
        assert!(s.iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn three_level_zero_couplings() {
        let l = closed_form_3level(0.0, 0.0, 0.0, 1.0, 1.0, 2.0, 0.3, 0.0).unwrap();
        assert_eq!(l.matrix.norm(), 0.0);
        assert!(closed_form_3level(1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.3, 0.0).is_err());
    }

    #[test]
    fn three_level_kernel_and_spectrum() {
        let p = ThreeLevel { a: 0.7, b: 0.4, c: 0.3, beta: 1.3, delta: 1.0 };
        let (s, alpha) = (0.8, 0.37);
        let l = closed_form_3level(p.a, p.b, p.c, p.beta, p.delta, s, alpha, 0.0).unwrap();
        let scale = 1.0 + l.matrix.norm();
        assert!((&l.matrix * p.psi()).norm() <= 1e-14 * scale);
        assert!((&l.matrix * p.chi().unwrap()).norm() <= 1e-14 * scale);
        let ev = eigenvalues(&l.matrix).unwrap();
        let expect = three_level_spectrum(p.a, p.b, p.beta, p.delta, s, alpha);
        assert!(crate::lso::matched_distance(&ev, &expect).unwrap() < 1e-12);
    }
}
