//! The doubled space `K ⊗ K` of a finite-level system.
//!
//! A pair `(i, j)` labels the product vector `φ_i ⊗ φ_j`. The Liouville
//! operator `L_S = H ⊗ 1 − 1 ⊗ H` is diagonal in this basis with eigenvalue
//! `E_i − E_j`, so the doubled space splits into Bohr-frequency sectors.
//! Pairs are stored row-major: pair `(i, j)` has flat index `i·N + j`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default tolerance for grouping nearly equal energies, in energy units.
pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-9;

/// Tolerance for the Hermiticity check on coupling matrices.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// A finite-level system with diagonal Hamiltonian `H = diag(E_0, …, E_{N−1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallSystem {
    energies: Vec<f64>,
    degeneracy_tol: f64,
    basis_order: Option<Vec<(usize, usize)>>,
    /// Representative Bohr frequencies, ascending.
    bohr: Vec<f64>,
    /// Sector index of every pair, row-major.
    sector_of: Vec<usize>,
}

impl SmallSystem {
    /// Builds a system with the default degeneracy tolerance.
    pub fn new(energies: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(energies, DEFAULT_DEGENERACY_TOL)
    }

    /// Builds a system, grouping energies (and Bohr frequencies) that lie
    /// within `degeneracy_tol` of each other.
    pub fn with_tolerance(energies: Vec<f64>, degeneracy_tol: f64) -> Result<Self> {
        if energies.is_empty() {
            return Err(Error::InvalidSystem("at least one energy level is required".into()));
        }
        if energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidSystem("energies must be finite".into()));
        }
        if !(degeneracy_tol >= 0.0) || !degeneracy_tol.is_finite() {
            return Err(Error::InvalidSystem("degeneracy_tol must be a finite nonnegative number".into()));
        }
        if energies.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidSystem("energies must be sorted ascending".into()));
        }
        let (bohr, sector_of) = group_bohr_frequencies(&energies, degeneracy_tol)?;
        Ok(SmallSystem { energies, degeneracy_tol, basis_order: None, bohr, sector_of })
    }

    /// Overrides the ordering of the sector whose pair set equals `order`.
    ///
    /// The three-level model uses this to list the zero sector as
    /// `(0,0), (1,1), (2,2), (1,2), (2,1)`.
    pub fn with_basis_order(mut self, order: Vec<(usize, usize)>) -> Result<Self> {
        let n = self.dim();
        if order.iter().any(|&(i, j)| i >= n || j >= n) {
            return Err(Error::InvalidSystem("basis order refers to a level outside the system".into()));
        }
        let Some(&(i0, j0)) = order.first() else {
            return Err(Error::InvalidSystem("basis order override is empty".into()));
        };
        let sector = self.sector_of[i0 * n + j0];
        let members = self.sector_of.iter().filter(|&&s| s == sector).count();
        let mut seen = vec![false; n * n];
        for &(i, j) in &order {
            if self.sector_of[i * n + j] != sector || seen[i * n + j] {
                return Err(Error::InvalidSystem(
                    "basis order override must list every pair of a single sector exactly once".into(),
                ));
            }
            seen[i * n + j] = true;
        }
        if order.len() != members {
            return Err(Error::InvalidSystem(
                "basis order override must list every pair of a single sector exactly once".into(),
            ));
        }
        self.basis_order = Some(order);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn degeneracy_tol(&self) -> f64 {
        self.degeneracy_tol
    }

    pub fn basis_order(&self) -> Option<&[(usize, usize)]> {
        self.basis_order.as_deref()
    }

    /// Representative Bohr frequencies in ascending order.
    pub fn bohr_frequencies(&self) -> &[f64] {
        &self.bohr
    }

    /// Index into [`bohr_frequencies`](Self::bohr_frequencies) of the pair `(i, j)`.
    pub fn sector_index(&self, i: usize, j: usize) -> usize {
        self.sector_of[i * self.dim() + j]
    }

    /// Representative value of `E_i − E_j`.
    pub fn bohr_frequency(&self, i: usize, j: usize) -> f64 {
        self.bohr[self.sector_index(i, j)]
    }

    /// True when no two energies are grouped together.
    pub fn is_simple(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.sector_index(i, j) != self.sector_index(i, i)))
    }

    /// Locates the sector of Bohr frequency `e`.
    pub fn sector_at(&self, e: f64) -> Result<SectorBasis> {
        let idx = self.sector_position(e)?;
        Ok(self.sector(idx))
    }

    pub(crate) fn sector_position(&self, e: f64) -> Result<usize> {
        let tol = self.degeneracy_tol.max(1e-12 * e.abs());
        self.bohr
            .iter()
            .position(|&b| (b - e).abs() <= tol)
            .ok_or(Error::NotBohrFrequency(e))
    }

    /// The sector with index `idx` into the Bohr frequency list.
    pub fn sector(&self, idx: usize) -> SectorBasis {
        let n = self.dim();
        let mut pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.sector_of[i * n + j] == idx)
            .collect();
        if let Some(order) = &self.basis_order {
            let (i0, j0) = order[0];
            if self.sector_of[i0 * n + j0] == idx {
                pairs = order.clone();
            }
        }
        SectorBasis { bohr_frequency: self.bohr[idx], pairs }
    }
}

fn group_bohr_frequencies(energies: &[f64], tol: f64) -> Result<(Vec<f64>, Vec<usize>)> {
    let n = energies.len();
    let mut positive: Vec<f64> = Vec::new();
    for &ei in energies {
        for &ej in energies {
            let d = ei - ej;
            if d > tol {
                positive.push(d);
            }
        }
    }
    // The zero group must not chain into a positive frequency.
    let mut zero_max = 0.0_f64;
    for &ei in energies {
        for &ej in energies {
            let d = (ei - ej).abs();
            if d <= tol {
                zero_max = zero_max.max(d);
            }
        }
    }
    positive.sort_by(f64::total_cmp);
    if let Some(&first) = positive.first() {
        if tol > 0.0 && first - zero_max <= tol {
            return Err(Error::ToleranceClash(format!(
                "Bohr frequency {first:e} lies within the degeneracy tolerance {tol:e} of the zero group"
            )));
        }
    }
    let mut clusters: Vec<Vec<f64>> = Vec::new();
    for d in positive {
        match clusters.last_mut() {
            Some(c) if d - *c.last().unwrap() <= tol => c.push(d),
            _ => clusters.push(vec![d]),
        }
    }
    let mut reps = Vec::with_capacity(clusters.len());
    for c in &clusters {
        let span = c.last().unwrap() - c[0];
        if span > tol {
            return Err(Error::ToleranceClash(format!(
                "Bohr frequencies between {:e} and {:e} chain together under tolerance {tol:e}",
                c[0],
                c.last().unwrap()
            )));
        }
        reps.push(c.iter().sum::<f64>() / c.len() as f64);
    }
    let mut bohr: Vec<f64> = reps.iter().rev().map(|r| -r).collect();
    bohr.push(0.0);
    bohr.extend(reps.iter().copied());

    let npos = reps.len();
    let mut sector_of = vec![0; n * n];
    for i in 0..n {
        for j in 0..n {
            let d = energies[i] - energies[j];
            let idx = if d.abs() <= tol {
                npos
            } else {
                let k = reps
                    .iter()
                    .position(|&r| (r - d.abs()).abs() <= tol)
                    .expect("every difference belongs to a cluster");
                if d > 0.0 {
                    npos + 1 + k
                } else {
                    npos - 1 - k
                }
            };
            sector_of[i * n + j] = idx;
        }
    }
    Ok((bohr, sector_of))
}

/// The ordered pair basis of one Bohr-frequency sector, `Ran P_e`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorBasis {
    pub bohr_frequency: f64,
    pub pairs: Vec<(usize, usize)>,
}

impl SectorBasis {
    pub fn dim(&self) -> usize {
        self.pairs.len()
    }

    pub fn position(&self, pair: (usize, usize)) -> Option<usize> {
        self.pairs.iter().position(|&p| p == pair)
    }

    /// Restricts a doubled vector to the coordinates of this sector.
    pub fn restrict(&self, v: &DoubledVector) -> DVector<Complex64> {
        DVector::from_iterator(self.dim(), self.pairs.iter().map(|&(i, j)| v.get(i, j)))
    }

    /// Embeds sector coordinates into the full doubled space.
    pub fn embed(&self, n: usize, coords: &DVector<Complex64>) -> DoubledVector {
        let mut v = DoubledVector::zeros(n);
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            v.set(i, j, coords[k]);
        }
        v
    }
}

/// Sectors of the Liouville operator, in ascending Bohr frequency.
///
/// ```
/// use levelshift::smallsys::{bohr_spectrum, SmallSystem};
///
/// let sys = SmallSystem::new(vec![0.0, 1.0]).unwrap();
/// let sectors = bohr_spectrum(&sys);
/// assert_eq!(sectors.len(), 3);
/// assert_eq!(sectors[0].pairs, vec![(0, 1)]);
/// assert_eq!(sectors[1].pairs, vec![(0, 0), (1, 1)]);
/// assert_eq!(sectors[2].pairs, vec![(1, 0)]);
/// ```
pub fn bohr_spectrum(sys: &SmallSystem) -> Vec<SectorBasis> {
    (0..sys.bohr.len()).map(|k| sys.sector(k)).collect()
}

/// A vector of the doubled space, indexed by pairs `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubledVector {
    n: usize,
    coeffs: DVector<Complex64>,
}

impl DoubledVector {
    pub fn zeros(n: usize) -> Self {
        DoubledVector { n, coeffs: DVector::zeros(n * n) }
    }

    /// The product vector `φ_i ⊗ φ_j`.
    pub fn basis(n: usize, i: usize, j: usize) -> Self {
        let mut v = Self::zeros(n);
        v.set(i, j, Complex64::new(1.0, 0.0));
        v
    }

    pub fn from_coefficients(n: usize, coeffs: DVector<Complex64>) -> Result<Self> {
        if coeffs.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients for a {n}-level system, got {}",
                n * n,
                coeffs.len()
            )));
        }
        Ok(DoubledVector { n, coeffs })
    }

    pub fn levels(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.coeffs[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: Complex64) {
        self.coeffs[i * self.n + j] = value;
    }

    pub fn coefficients(&self) -> &DVector<Complex64> {
        &self.coeffs
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.norm()
    }
}

/// The Gibbs vector `Ψ_β ∝ Σ_i e^{−βE_i/2} φ_i ⊗ φ_i`, normalized.
///
/// Weights are shifted by the ground energy before exponentiating, so no
/// finite input overflows.
pub fn gibbs_vector(sys: &SmallSystem, beta: f64) -> Result<DoubledVector> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!("beta must be positive and finite, got {beta}")));
    }
    let e0 = sys.energies[0];
    let n = sys.dim();
    let weights: Vec<f64> = sys.energies.iter().map(|&e| (-0.5 * beta * (e - e0)).exp()).collect();
    let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    let mut v = DoubledVector::zeros(n);
    for (i, w) in weights.iter().enumerate() {
        v.set(i, i, Complex64::new(w / norm, 0.0));
    }
    Ok(v)
}

/// The modular conjugation `(J_S v)[(i, j)] = conj(v[(j, i)])`.
pub fn modular_conjugate(v: &DoubledVector) -> DoubledVector {
    let n = v.n;
    let mut out = DoubledVector::zeros(n);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, v.get(j, i).conj());
        }
    }
    out
}

/// Which tensor factor a coupling matrix acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `G ⊗ 1`
    Left,
    /// `1 ⊗ C G C`, i.e. the entrywise conjugate of `G` on the second index.
    Right,
}

/// Largest entry of `G − G*`.
pub fn hermiticity_defect(g: &DMatrix<Complex64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            worst = worst.max((g[(i, j)] - g[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn check_hermitian(g: &DMatrix<Complex64>) -> Result<()> {
    if !g.is_square() {
        return Err(Error::InvalidArgument("coupling matrix must be square".into()));
    }
    let defect = hermiticity_defect(g);
    if defect > HERMITIAN_TOL {
        return Err(Error::NonHermitian(defect));
    }
    Ok(())
}

/// The action of a coupling matrix on the full pair space (dimension `N²`).
///
/// ```
/// use levelshift::smallsys::{doubled_coupling_action, Side};
/// use nalgebra::DMatrix;
/// use num_complex::Complex64;
///
/// let g = DMatrix::from_diagonal(&nalgebra::dvector![
///     Complex64::new(1.0, 0.0),
///     Complex64::new(-1.0, 0.0)
/// ]);
/// let left = doubled_coupling_action(&g, Side::Left).unwrap();
/// let diag: Vec<f64> = left.diagonal().iter().map(|z| z.re).collect();
/// assert_eq!(diag, vec![1.0, 1.0, -1.0, -1.0]);
/// ```
pub fn doubled_coupling_action(g: &DMatrix<Complex64>, side: Side) -> Result<DMatrix<Complex64>> {
    check_hermitian(g)?;
    let n = g.nrows();
    let mut out = DMatrix::zeros(n * n, n * n);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                match side {
                    // (G ⊗ 1)[(a,b),(c,b)] = G[a,c]
                    Side::Left => out[(a * n + b, c * n + b)] = g[(a, c)],
                    // (1 ⊗ CGC)[(a,b),(a,c)] = conj(G[b,c])
                    Side::Right => out[(a * n + b, a * n + c)] = g[(b, c)].conj(),
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn two_level_ladder_sectors() {
        let sys = SmallSystem::new(vec![0.0, 1.0]).unwrap();
        let s = bohr_spectrum(&sys);
        let freqs: Vec<f64> = s.iter().map(|s| s.bohr_frequency).collect();
        assert_eq!(freqs, vec![-1.0, 0.0, 1.0]);
        assert_eq!(s[0].pairs, vec![(0, 1)]);
        assert_eq!(s[2].pairs, vec![(1, 0)]);
    }

    #[test]
    fn degenerate_two_level_has_one_sector() {
        let sys = SmallSystem::new(vec![0.3, 0.3]).unwrap();
        let s = bohr_spectrum(&sys);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].dim(), 4);
    }

    #[test]
    fn three_level_zero_sector_in_listed_order() {
        let order = vec![(0, 0), (1, 1), (2, 2), (1, 2), (2, 1)];
        let sys = SmallSystem::new(vec![0.0, 1.5, 1.5]).unwrap().with_basis_order(order.clone()).unwrap();
        let zero = sys.sector_at(0.0).unwrap();
        assert_eq!(zero.pairs, order);
        assert_eq!(bohr_spectrum(&sys).len(), 3);
    }

    #[test]
    fn bad_order_override_rejected() {
        let sys = SmallSystem::new(vec![0.0, 1.0, 1.0]).unwrap();
        assert!(sys.clone().with_basis_order(vec![(0, 0), (1, 1)]).is_err());
        assert!(sys.with_basis_order(vec![(0, 0), (0, 1)]).is_err());
    }

    #[test]
    fn near_degeneracies_are_grouped() {
        let sys = SmallSystem::new(vec![0.0, 1.0, 1.0 + 1e-12]).unwrap();
        assert!(!sys.is_simple());
        assert_eq!(sys.sector_at(0.0).unwrap().dim(), 5);
    }

    #[test]
    fn chaining_frequencies_clash() {
        // 1.0, 1.0+0.6e-9, 1.0+1.2e-9 chain into a group wider than the tolerance.
        let r = SmallSystem::new(vec![0.0, 1.0, 2.0 + 0.6e-9, 3.0 + 1.8e-9]);
        assert!(matches!(r, Err(Error::ToleranceClash(_))));
    }

    #[test]
    fn unsorted_energies_rejected() {
        assert!(SmallSystem::new(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn gibbs_vector_examples() {
        let sys = SmallSystem::new(vec![0.0, 0.0]).unwrap();
        let g = gibbs_vector(&sys, 3.0).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((g.get(0, 0).re - h).abs() < 1e-15 && (g.get(1, 1).re - h).abs() < 1e-15);

        let sys = SmallSystem::new(vec![0.0, 1e6]).unwrap();
        let g = gibbs_vector(&sys, 1.0).unwrap();
        assert_eq!(g.get(0, 0).re, 1.0);
        assert_eq!(g.get(1, 1).re, 0.0);

        let sys = SmallSystem::new(vec![-1e4, 1e4]).unwrap();
        let g = gibbs_vector(&sys, 50.0).unwrap();
        assert!(g.norm().is_finite() && (g.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gibbs_vector_matches_three_level_shape() {
        let (beta, delta) = (1.3, 0.8);
        let sys = SmallSystem::new(vec![0.0, delta, delta])
            .unwrap()
            .with_basis_order(vec![(0, 0), (1, 1), (2, 2), (1, 2), (2, 1)])
            .unwrap();
        let g = gibbs_vector(&sys, beta).unwrap();
        let v = sys.sector_at(0.0).unwrap().restrict(&g);
        let q = (beta * delta / 2.0).exp();
        let scale = v[1].re;
        let expect = [q, 1.0, 1.0, 0.0, 0.0];
        for k in 0..5 {
            assert!((v[k].re - scale * expect[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn modular_conjugation_examples() {
        let e01 = DoubledVector::basis(2, 0, 1);
        assert_eq!(modular_conjugate(&e01), DoubledVector::basis(2, 1, 0));

        let mut v = DoubledVector::zeros(2);
        v.set(0, 1, Complex64::new(0.0, 1.0));
        let w = modular_conjugate(&v);
        assert_eq!(w.get(1, 0), Complex64::new(0.0, -1.0));

        let sys = SmallSystem::new(vec![0.0, 0.4, 2.0]).unwrap();
        let g = gibbs_vector(&sys, 0.7).unwrap();
        assert_eq!(modular_conjugate(&g), g);
    }

    #[test]
    fn coupling_action_examples() {
        let id = DMatrix::<Complex64>::identity(3, 3);
        for side in [Side::Left, Side::Right] {
            assert_eq!(doubled_coupling_action(&id, side).unwrap(), DMatrix::identity(9, 9));
        }
        // Real symmetric G acts on the second index unchanged.
        let g = DMatrix::from_row_slice(2, 2, &[c(0.5), c(2.0), c(2.0), c(-1.0)]);
        let right = doubled_coupling_action(&g, Side::Right).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for d in 0..2 {
                    assert_eq!(right[(a * 2 + b, a * 2 + d)], g[(b, d)]);
                }
            }
        }
        // Complex G is conjugated on the right.
        let i = Complex64::new(0.0, 1.0);
        let g = DMatrix::from_row_slice(2, 2, &[c(0.0), i, -i, c(0.0)]);
        let right = doubled_coupling_action(&g, Side::Right).unwrap();
        assert_eq!(right[(0, 1)], -i);
    }

    #[test]
    fn non_hermitian_coupling_rejected() {
        let g = DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]);
        assert!(matches!(doubled_coupling_action(&g, Side::Left), Err(Error::NonHermitian(_))));
    }
}
