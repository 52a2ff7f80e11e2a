use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::LevelShiftOperator;
use crate::error::{Error, Result};

/// Default relative threshold for numerical kernels.
pub const DEFAULT_KERNEL_TOL: f64 = 1e-8;

/// Singular-value ratio across the threshold below which the rank decision
/// is flagged as ill conditioned.
pub const KERNEL_GAP_WARNING: f64 = 10.0;

/// Eigenvalues of a complex square matrix with algebraic multiplicity,
/// sorted by imaginary part, then real part.
pub fn eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = m.clone().try_schur(f64::EPSILON, 10_000).ok_or(Error::Eigensolver)?;
    let ev = schur.eigenvalues().ok_or(Error::Eigensolver)?;
    let mut out: Vec<Complex64> = ev.iter().copied().collect();
    out.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));
    Ok(out)
}

/// Spectrum of a level shift operator, sorted by `(Im, Re)`.
pub fn spectrum(lso: &LevelShiftOperator) -> Result<Vec<Complex64>> {
    eigenvalues(&lso.matrix)
}

/// A numerical kernel from singular-value thresholding.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub dim: usize,
    /// Orthonormal basis, in sector coordinates.
    pub basis: Vec<DVector<Complex64>>,
    /// Singular values in descending order.
    pub singular_values: Vec<f64>,
    /// Smallest retained singular value over the largest discarded one
    /// (infinite when nothing is discarded or the discarded values vanish).
    pub gap_ratio: f64,
    /// Set when `gap_ratio` is below [`KERNEL_GAP_WARNING`].
    pub ill_conditioned: bool,
}

/// Kernel of `m`: right singular vectors whose singular value is at most
/// `tol · σ_max`.
pub fn kernel_of(m: &DMatrix<Complex64>, tol: f64) -> Result<Kernel> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("kernel tolerance must be positive, got {tol}")));
    }
    let n = m.ncols();
    if n == 0 {
        return Ok(Kernel { dim: 0, basis: vec![], singular_values: vec![], gap_ratio: f64::INFINITY, ill_conditioned: false });
    }
    // Pad to square so that the thin SVD still spans the full column space.
    let padded = if m.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.try_svd(false, true, f64::EPSILON, 10_000).ok_or(Error::Eigensolver)?;
    let v_t = svd.v_t.ok_or(Error::Eigensolver)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let smax = sv[0];
    let threshold = tol * smax;
    let mut basis = Vec::new();
    let mut kept_min = f64::INFINITY;
    let mut dropped_max = 0.0_f64;
    for (&k, &s) in order.iter().zip(&sv) {
        if smax == 0.0 || s <= threshold {
            basis.push(v_t.row(k).transpose().map(|z| z.conj()));
            dropped_max = dropped_max.max(s);
        } else {
            kept_min = kept_min.min(s);
        }
    }
    let gap_ratio = if basis.is_empty() || dropped_max == 0.0 { f64::INFINITY } else { kept_min / dropped_max };
    Ok(Kernel { dim: basis.len(), basis, singular_values: sv, gap_ratio, ill_conditioned: gap_ratio < KERNEL_GAP_WARNING })
}

/// Kernel of a level shift operator.
pub fn kernel(lso: &LevelShiftOperator, tol: f64) -> Result<Kernel> {
    kernel_of(&lso.matrix, tol)
}

/// Distance of `v` from the span of an orthonormal family.
pub fn distance_to_span(v: &DVector<Complex64>, basis: &[DVector<Complex64>]) -> f64 {
    let mut r = v.clone();
    for b in basis {
        let c = b.dotc(&r);
        r -= b * c;
    }
    r.norm()
}

/// Hausdorff distance between two finite point sets in the plane.
pub fn hausdorff(a: &[Complex64], b: &[Complex64]) -> f64 {
    let one_way = |x: &[Complex64], y: &[Complex64]| {
        x.iter()
            .map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    one_way(a, b).max(one_way(b, a))
}

/// Pairing of two equally sized multisets minimizing the total distance.
/// Returns `perm` with `a[i]` matched to `b[perm[i]]`.
pub fn optimal_assignment(a: &[Complex64], b: &[Complex64]) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot match multisets of sizes {} and {}",
            a.len(),
            b.len()
        )));
    }
    let cost: Vec<Vec<f64>> = a.iter().map(|p| b.iter().map(|q| (p - q).norm()).collect()).collect();
    Ok(hungarian(&cost))
}

/// Largest pairwise distance under the optimal assignment.
pub fn matched_distance(a: &[Complex64], b: &[Complex64]) -> Result<f64> {
    let perm = optimal_assignment(a, b)?;
    Ok(perm.iter().enumerate().map(|(i, &j)| (a[i] - b[j]).norm()).fold(0.0, f64::max))
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian
/// method with row and column potentials).
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; index 0 is a sentinel column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    perm
}
