//! Brute-force ground truth on finite truncations.
//!
//! Each reservoir is replaced by finitely many radial modes `r_k` with
//! amplitudes `g_k = √(w_k J(r_k))`. In the doubled (Araki–Woods) picture
//! every mode has a left quantum `(k, L)` with `L_R`-eigenvalue `+r_k` and a
//! right quantum `(k, R)` with eigenvalue `−r_k`, and the thermal field is
//!
//! ```text
//! φ_β(g) = Σ_k g_k/√2 · [√(1+ρ_k)(a*_{kL} + a_{kL}) + √ρ_k (a*_{kR} + a_{kR})].
//! ```
//!
//! `J_R` swaps `L` and `R` and conjugates, and `Δ_R` multiplies a quantum
//! of frequency `ω` by `e^{−βω}`. The interaction is assembled literally
//! from these pieces, and the resolvent of `L_0` is diagonal in the Fock
//! basis, so all operators in [`direct_lso_eps`] reduce to sparse
//! applications and entrywise divisions.

mod feshbach;
mod gibbs;

pub use feshbach::*;
pub use gibbs::*;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lso::{Generator, OpenSystemModel};
use crate::quad::gauss_legendre;
use crate::smallsys::SmallSystem;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Nodes per Gauss–Legendre panel in [`radial_grid`].
const PANEL_ORDER: usize = 8;

/// One radial node of a discretized reservoir.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    /// Index of the coupling (and reservoir) the mode belongs to.
    pub reservoir: usize,
    pub r: f64,
    pub weight: f64,
    /// `√(w J(r))`
    pub amplitude: f64,
}

/// Thermal side of a quantum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThermalSide {
    /// Emission side, frequency `+r`.
    Left,
    /// Absorption side, frequency `−r`.
    Right,
}

/// A finite-mode truncation of an open system model.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteModeModel {
    pub small: SmallSystem,
    pub couplings: Vec<DMatrix<Complex64>>,
    pub betas: Vec<f64>,
    pub generator: Generator,
    pub modes: Vec<Mode>,
    /// Reservoir quanta kept per Fock state (1 or 2).
    pub max_excitations: usize,
}

/// Radial nodes and weights on `[0, r_max]`: 8-point Gauss–Legendre panels
/// of equal width, with the first panel split geometrically towards the
/// origin. Exactly `n` nodes; fewer than 8 nodes use one rule.
pub fn radial_grid(n: usize, r_max: f64) -> Vec<(f64, f64)> {
    let rule = |order: usize, a: f64, b: f64, out: &mut Vec<(f64, f64)>| {
        let (x, w) = gauss_legendre(order);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        out.extend(x.iter().zip(&w).map(|(x, w)| (mid + half * x, half * w)));
    };
    let mut out = Vec::with_capacity(n);
    if n < PANEL_ORDER {
        rule(n, 0.0, r_max, &mut out);
        return out;
    }
    let panels = n / PANEL_ORDER;
    let n_ir = if panels > 1 { ((panels as f64).log2() as usize).min(panels - 1) } else { 0 };
    let h = r_max / (panels - n_ir) as f64;
    let mut edges: Vec<f64> = (0..=n_ir).rev().map(|k| h * 0.5f64.powi(k as i32)).collect();
    edges.insert(0, 0.0);
    for k in 2..=(panels - n_ir) {
        edges.push(h * k as f64);
    }
    let last = edges.len() - 2;
    for (i, w) in edges.windows(2).enumerate() {
        let order = if i == last { PANEL_ORDER + n % PANEL_ORDER } else { PANEL_ORDER };
        rule(order, w[0], w[1], &mut out);
    }
    out
}

/// Discretizes every reservoir of `model` with `n_modes` radial nodes on
/// `[0, min(r_max, R_max)]`.
pub fn discretize(model: &OpenSystemModel, n_modes: usize, r_max: f64) -> Result<FiniteModeModel> {
    if n_modes == 0 {
        return Err(Error::InvalidArgument("at least one mode per reservoir is needed".into()));
    }
    if !(r_max > 0.0) {
        return Err(Error::InvalidArgument(format!("r_max must be positive, got {r_max}")));
    }
    let mut modes = Vec::new();
    for (idx, c) in model.couplings.iter().enumerate() {
        let top = r_max.min(c.reservoir.r_max());
        for (r, w) in radial_grid(n_modes, top) {
            let amplitude = (w * c.reservoir.jacobian(r)).sqrt();
            modes.push(Mode { reservoir: idx, r, weight: w, amplitude });
        }
    }
    Ok(FiniteModeModel {
        small: model.small.clone(),
        couplings: model.couplings.iter().map(|c| c.g.clone()).collect(),
        betas: model.couplings.iter().map(|c| c.reservoir.beta).collect(),
        generator: model.generator,
        modes,
        max_excitations: 1,
    })
}

impl FiniteModeModel {
    pub fn with_max_excitations(mut self, k: usize) -> Result<Self> {
        if !(1..=2).contains(&k) {
            return Err(Error::InvalidArgument(format!("max_excitations must be 1 or 2, got {k}")));
        }
        self.max_excitations = k;
        Ok(self)
    }

    /// Number of quanta: two per mode.
    pub fn n_quanta(&self) -> usize {
        2 * self.modes.len()
    }

    /// Mode and side of quantum `q`.
    pub fn quantum(&self, q: usize) -> (usize, ThermalSide) {
        (q / 2, if q % 2 == 0 { ThermalSide::Left } else { ThermalSide::Right })
    }

    /// `L_R`-eigenvalue of quantum `q`.
    pub fn omega(&self, q: usize) -> f64 {
        let (k, side) = self.quantum(q);
        match side {
            ThermalSide::Left => self.modes[k].r,
            ThermalSide::Right => -self.modes[k].r,
        }
    }

    fn beta_of(&self, q: usize) -> f64 {
        self.betas[self.modes[q / 2].reservoir]
    }

    /// Fock states of the truncation as sorted lists of quanta: the vacuum,
    /// all single quanta and, for two excitations, all unordered pairs.
    pub fn sector_bases(&self) -> Vec<Vec<usize>> {
        FockSpace::new(self.n_quanta(), self.max_excitations).states()
    }

    /// The interaction as a sum of small-system superoperators times linear
    /// fields.
    pub fn field_terms(&self) -> Vec<FieldTerm> {
        let n = self.small.dim();
        let nq = self.n_quanta();
        let (ref_beta, modular) = match self.generator {
            Generator::Standard => (0.0, false),
            Generator::CLiouville { reference_beta } => (reference_beta, true),
        };
        let mut terms = Vec::new();
        for (r, g) in self.couplings.iter().enumerate() {
            let beta = self.betas[r];
            let mut field_u = vec![ZERO; nq];
            for (k, m) in self.modes.iter().enumerate().filter(|(_, m)| m.reservoir == r) {
                let rho = 1.0 / (beta * m.r).exp_m1();
                let a = m.amplitude / std::f64::consts::SQRT_2;
                field_u[2 * k] = Complex64::new(a * (1.0 + rho).sqrt(), 0.0);
                field_u[2 * k + 1] = Complex64::new(a * rho.sqrt(), 0.0);
            }
            let field_v = field_u.clone();
            let left = left_multiplication(g);
            terms.push(FieldTerm { small: left.clone(), create: field_u.clone(), annihilate: field_v.clone() });

            // J Δ^{1/2} V Δ^{-1/2} J, factor by factor.
            let s = if modular { 0.5 } else { 0.0 };
            let mut small = DMatrix::from_element(n * n, n * n, ZERO);
            for c in 0..n * n {
                let mut v = DVector::from_element(n * n, ZERO);
                v[c] = ONE;
                let v = small_j(n, &v);
                let v = small_delta(&self.small, ref_beta, -s, &v);
                let v = &left * v;
                let v = small_delta(&self.small, ref_beta, s, &v);
                small.set_column(c, &small_j(n, &v));
            }
            // Creation part: ⟨q| J Δ^{1/2} φ Δ^{-1/2} J |Ω⟩.
            let vac = OneExcitation::vacuum(nq);
            let x = self.reservoir_j(&vac);
            let x = self.reservoir_delta(&x, -s);
            let x = field_apply(&x, &field_u, &field_v);
            let x = self.reservoir_delta(&x, s);
            let create = self.reservoir_j(&x).amp;
            // Annihilation part: ⟨Ω| J Δ^{1/2} φ Δ^{-1/2} J |q⟩. J maps |q⟩ to
            // the partner quantum q^1, which Δ^{-1/2} weighs and φ absorbs.
            let annihilate: Vec<Complex64> = (0..nq)
                .map(|q| (field_v[q ^ 1] * (s * self.beta_of(q) * self.omega(q ^ 1)).exp()).conj())
                .collect();
            terms.push(FieldTerm { small: -small, create, annihilate });
        }
        terms
    }

    fn reservoir_j(&self, x: &OneExcitation) -> OneExcitation {
        let mut out = OneExcitation::zeros(x.amp.len());
        out.vac = x.vac.conj();
        for (q, a) in x.amp.iter().enumerate() {
            out.amp[q ^ 1] = a.conj();
        }
        out
    }

    fn reservoir_delta(&self, x: &OneExcitation, s: f64) -> OneExcitation {
        if s == 0.0 {
            return x.clone();
        }
        let mut out = x.clone();
        for (q, a) in out.amp.iter_mut().enumerate() {
            *a *= (-s * self.beta_of(q) * self.omega(q)).exp();
        }
        out
    }
}

/// A vector in the vacuum plus single-quantum space of the reservoirs.
#[derive(Debug, Clone)]
struct OneExcitation {
    vac: Complex64,
    amp: Vec<Complex64>,
}

impl OneExcitation {
    fn zeros(nq: usize) -> Self {
        OneExcitation { vac: ZERO, amp: vec![ZERO; nq] }
    }
    fn vacuum(nq: usize) -> Self {
        OneExcitation { vac: ONE, amp: vec![ZERO; nq] }
    }
}

/// `Σ_q (u_q a*_q + v_q a_q)` restricted to at most one quantum.
fn field_apply(x: &OneExcitation, u: &[Complex64], v: &[Complex64]) -> OneExcitation {
    let mut out = OneExcitation::zeros(x.amp.len());
    for q in 0..u.len() {
        out.amp[q] += u[q] * x.vac;
        out.vac += v[q] * x.amp[q];
    }
    out
}

/// `c ↦ G c` on doubled vectors `c[(i, j)]`, as an `N² × N²` matrix.
fn left_multiplication(g: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = g.nrows();
    DMatrix::from_fn(n * n, n * n, |row, col| {
        let (i, j) = (row / n, row % n);
        let (k, l) = (col / n, col % n);
        if j == l {
            g[(i, k)]
        } else {
            ZERO
        }
    })
}

fn small_j(n: usize, v: &DVector<Complex64>) -> DVector<Complex64> {
    DVector::from_fn(n * n, |row, _| v[(row % n) * n + row / n].conj())
}

fn small_delta(sys: &SmallSystem, beta: f64, s: f64, v: &DVector<Complex64>) -> DVector<Complex64> {
    if s == 0.0 {
        return v.clone();
    }
    let n = sys.dim();
    let e = sys.energies();
    DVector::from_fn(n * n, |row, _| v[row] * (-s * beta * (e[row / n] - e[row % n])).exp())
}

/// One summand `S ⊗ Σ_q (u_q a*_q + v_q a_q)` of the interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTerm {
    /// Superoperator on doubled small-system vectors (row-major pairs).
    pub small: DMatrix<Complex64>,
    pub create: Vec<Complex64>,
    pub annihilate: Vec<Complex64>,
}

/// Truncated bosonic Fock space over `n_q` quanta.
#[derive(Debug, Clone, Copy)]
struct FockSpace {
    n_q: usize,
    max_exc: usize,
}

impl FockSpace {
    fn new(n_q: usize, max_exc: usize) -> Self {
        FockSpace { n_q, max_exc }
    }

    fn dim(&self) -> usize {
        let mut d = 1 + self.n_q;
        if self.max_exc >= 2 {
            d += self.n_q * (self.n_q + 1) / 2;
        }
        d
    }

    fn single(&self, q: usize) -> usize {
        1 + q
    }

    fn pair(&self, a: usize, b: usize) -> usize {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        1 + self.n_q + hi * (hi + 1) / 2 + lo
    }

    fn states(&self) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        out.extend((0..self.n_q).map(|q| vec![q]));
        if self.max_exc >= 2 {
            for hi in 0..self.n_q {
                for lo in 0..=hi {
                    out.push(vec![lo, hi]);
                }
            }
        }
        out
    }
}

/// A vector of the truncated doubled space: column `s` holds the small-system
/// coefficients attached to Fock state `s`.
type Truncated = DMatrix<Complex64>;

fn apply_field(space: &FockSpace, states: &[Vec<usize>], u: &[Complex64], v: &[Complex64], x: &Truncated) -> Truncated {
    let mut out = Truncated::zeros(x.nrows(), x.ncols());
    let sqrt2 = std::f64::consts::SQRT_2;
    for (s, occ) in states.iter().enumerate() {
        let col = x.column(s);
        if col.iter().all(|z| *z == ZERO) {
            continue;
        }
        match occ.as_slice() {
            [] => {
                for q in 0..space.n_q {
                    if u[q] != ZERO {
                        out.column_mut(space.single(q)).axpy(u[q], &col, ONE);
                    }
                }
            }
            [q] => {
                let q = *q;
                if v[q] != ZERO {
                    out.column_mut(0).axpy(v[q], &col, ONE);
                }
                if space.max_exc >= 2 {
                    for p in 0..space.n_q {
                        if u[p] != ZERO {
                            let f = if p == q { sqrt2 } else { 1.0 };
                            out.column_mut(space.pair(p, q)).axpy(u[p] * f, &col, ONE);
                        }
                    }
                }
            }
            [a, b] => {
                let (a, b) = (*a, *b);
                if a == b {
                    out.column_mut(space.single(a)).axpy(v[a] * sqrt2, &col, ONE);
                } else {
                    out.column_mut(space.single(b)).axpy(v[a], &col, ONE);
                    out.column_mut(space.single(a)).axpy(v[b], &col, ONE);
                }
            }
            _ => unreachable!("at most two quanta are kept"),
        }
    }
    out
}

/// The interaction `W` (or `W*`) on a truncated vector.
fn apply_interaction(
    space: &FockSpace,
    states: &[Vec<usize>],
    terms: &[FieldTerm],
    x: &Truncated,
    adjoint: bool,
) -> Truncated {
    let mut out = Truncated::zeros(x.nrows(), x.ncols());
    for t in terms {
        let y = if adjoint {
            let u: Vec<Complex64> = t.annihilate.iter().map(|z| z.conj()).collect();
            let v: Vec<Complex64> = t.create.iter().map(|z| z.conj()).collect();
            t.small.adjoint() * apply_field(space, states, &u, &v, x)
        } else {
            &t.small * apply_field(space, states, &t.create, &t.annihilate, x)
        };
        out += y;
    }
    out
}

/// `P̄(L_0 − e − iε)⁻¹P̄`, with `P` the vacuum times the sector of `e`.
fn reduced_resolvent(fm: &FiniteModeModel, states: &[Vec<usize>], in_sector: &[bool], e: f64, eps: f64, x: &mut Truncated) {
    let n = fm.small.dim();
    let en = fm.small.energies();
    for (s, occ) in states.iter().enumerate() {
        let w: f64 = occ.iter().map(|&q| fm.omega(q)).sum();
        for row in 0..n * n {
            if occ.is_empty() && in_sector[row] {
                x[(row, s)] = ZERO;
                continue;
            }
            let l = en[row / n] - en[row % n] + w;
            x[(row, s)] /= Complex64::new(l - e, -eps);
        }
    }
}

fn sector_mask(fm: &FiniteModeModel, e: f64) -> Result<(Vec<usize>, Vec<bool>)> {
    let n = fm.small.dim();
    let sector = fm.small.sector_at(e)?;
    let rows: Vec<usize> = sector.pairs.iter().map(|&(i, j)| i * n + j).collect();
    let mut mask = vec![false; n * n];
    for &r in &rows {
        mask[r] = true;
    }
    Ok((rows, mask))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

/// `Λ_e(ε) = P W P̄ (L_0 − e − iε)⁻¹ P̄ W P` on the truncation, in the
/// basis of [`SmallSystem::sector_at`].
///
/// `W` is the interaction of the model's generator built from `V`, the
/// modular conjugations and, for the C-Liouville generator, the modular
/// operator. Only vacuum and single-quantum states enter.
pub fn direct_lso_eps(fm: &FiniteModeModel, e: f64, eps: f64) -> Result<DMatrix<Complex64>> {
    check_eps(eps)?;
    let space = FockSpace::new(fm.n_quanta(), 1);
    resolvent_chain(fm, &space, e, eps, 1)
}

/// `P W R̄ W R̄ W R̄ W P` with `R̄ = P̄(L_0 − e − iε)⁻¹P̄`, evaluated on the
/// two-quantum truncation, which is exact for this product.
pub fn fourth_order_literal(fm: &FiniteModeModel, e: f64, eps: f64) -> Result<DMatrix<Complex64>> {
    check_eps(eps)?;
    let space = FockSpace::new(fm.n_quanta(), 2);
    resolvent_chain(fm, &space, e, eps, 3)
}

fn resolvent_chain(fm: &FiniteModeModel, space: &FockSpace, e: f64, eps: f64, resolvents: usize) -> Result<DMatrix<Complex64>> {
    let n = fm.small.dim();
    let (rows, mask) = sector_mask(fm, e)?;
    let states = space.states();
    let terms = fm.field_terms();
    let d = rows.len();
    let dim = space.dim();
    let mut right = Vec::with_capacity(d);
    let mut left = Vec::with_capacity(d);
    for &r in &rows {
        let mut x = Truncated::zeros(n * n, dim);
        x[(r, 0)] = ONE;
        left.push(apply_interaction(space, &states, &terms, &x, true));
        let mut y = apply_interaction(space, &states, &terms, &x, false);
        for step in 0..resolvents {
            reduced_resolvent(fm, &states, &mask, e, eps, &mut y);
            if step + 1 < resolvents {
                y = apply_interaction(space, &states, &terms, &y, false);
            }
        }
        right.push(y);
    }
    Ok(DMatrix::from_fn(d, d, |a, b| left[a].dotc(&right[b])))
}

/// Bohr sectors of the full pair space: representative frequency and
/// membership mask.
fn pair_sectors(sys: &SmallSystem) -> (Vec<f64>, Vec<Vec<bool>>) {
    let n = sys.dim();
    let freqs = sys.bohr_frequencies().to_vec();
    let masks = (0..freqs.len())
        .map(|b| (0..n * n).map(|row| sys.sector_index(row / n, row % n) == b).collect())
        .collect();
    (freqs, masks)
}

/// `P W R̄ W R̄ W R̄ W P` by Wick's theorem: the ladder, nested and crossed
/// pairings of the four linear fields, each reduced to mode sums over
/// resolvent denominators. Agrees with [`fourth_order_literal`] on the same
/// modes up to rounding, in `O(M²)` time and `O(M)` memory.
pub fn fourth_order_path_sum(fm: &FiniteModeModel, e: f64, eps: f64) -> Result<DMatrix<Complex64>> {
    let p = wick_pairings(fm, e, eps)?;
    Ok(p.ladder + p.nested + p.crossed)
}

/// The three pairing classes of [`fourth_order_path_sum`].
#[derive(Debug, Clone, PartialEq)]
pub struct WickPairings {
    /// Fields paired (1,2)(3,4): two second-order steps through the vacuum,
    /// the middle resolvent restricted to the other Bohr sectors.
    pub ladder: DMatrix<Complex64>,
    /// Pairing (1,4)(2,3).
    pub nested: DMatrix<Complex64>,
    /// Pairing (1,3)(2,4).
    pub crossed: DMatrix<Complex64>,
}

pub fn wick_pairings(fm: &FiniteModeModel, e: f64, eps: f64) -> Result<WickPairings> {
    check_eps(eps)?;
    let n = fm.small.dim();
    let nn = n * n;
    let (rows, mask) = sector_mask(fm, e)?;
    let d = rows.len();
    let terms = fm.field_terms();
    let na = terms.len();
    let nq = fm.n_quanta();
    let omega: Vec<f64> = (0..nq).map(|q| fm.omega(q)).collect();
    let (bohr, masks) = pair_sectors(&fm.small);
    let nb = bohr.len();
    let ie = Complex64::new(0.0, eps);
    let den = |b: usize, w: f64| ONE / (Complex64::new(bohr[b] + w - e, 0.0) - ie);

    // Embedding of the sector and the restricted outer factors.
    let embed = DMatrix::from_fn(nn, d, |row, c| if row == rows[c] { ONE } else { ZERO });
    let outer_left: Vec<DMatrix<Complex64>> = terms.iter().map(|t| embed.transpose() * &t.small).collect();
    let outer_right: Vec<DMatrix<Complex64>> = terms.iter().map(|t| &t.small * &embed).collect();
    let proj: Vec<DMatrix<Complex64>> = masks
        .iter()
        .map(|m| DMatrix::from_fn(nn, nn, |a, b| if a == b && m[a] { ONE } else { ZERO }))
        .collect();
    let weight = |a: usize, b: usize, q: usize| terms[a].annihilate[q] * terms[b].create[q];
    // h_{ab}(y) = Σ_q v_{aq} u_{bq} / (y + ω_q − e − iε)
    let active: Vec<Vec<usize>> = (0..na)
        .flat_map(|a| (0..na).map(move |b| (a, b)))
        .map(|(a, b)| (0..nq).filter(|&q| weight(a, b, q) != ZERO).collect())
        .collect();
    let h = |a: usize, b: usize, y: f64| -> Complex64 {
        active[a * na + b]
            .iter()
            .map(|&q| weight(a, b, q) / (Complex64::new(y + omega[q] - e, 0.0) - ie))
            .sum()
    };

    // Ladder: K P̄ D(0) K with K the full second-order operator.
    let mut k = DMatrix::<Complex64>::zeros(nn, nn);
    for a in 0..na {
        for b in 0..na {
            let diag: Vec<Complex64> = (0..nb).map(|s| h(a, b, bohr[s])).collect();
            let mut mid = terms[b].small.clone();
            for row in 0..nn {
                let f = diag[fm.small.sector_index(row / n, row % n)];
                mid.row_mut(row).iter_mut().for_each(|z| *z *= f);
            }
            k += &terms[a].small * mid;
        }
    }
    let mut middle = DMatrix::<Complex64>::zeros(nn, nn);
    for row in 0..nn {
        if !mask[row] {
            let s = fm.small.sector_index(row / n, row % n);
            middle[(row, row)] = den(s, 0.0);
        }
    }
    let ladder = embed.transpose() * &k * middle * &k * &embed;

    // Nested: Σ_q v_{4q}u_{1q} S4 D(ω_q) [Σ_B h_{32}(ω_q + B) S3 Π_B S2] D(ω_q) S1.
    let inner_blocks: Vec<DMatrix<Complex64>> = (0..na * na * nb)
        .map(|idx| {
            let (a3, rest) = (idx / (na * nb), idx % (na * nb));
            let (a2, b) = (rest / nb, rest % nb);
            &terms[a3].small * &proj[b] * &terms[a2].small
        })
        .collect();
    let mut nested = DMatrix::<Complex64>::zeros(d, d);
    for q in 0..nq {
        let lq: DMatrix<Complex64> = (0..na)
            .filter(|&a| terms[a].annihilate[q] != ZERO)
            .fold(DMatrix::zeros(d, nn), |acc, a| acc + &outer_left[a] * terms[a].annihilate[q]);
        let rq: DMatrix<Complex64> = (0..na)
            .filter(|&a| terms[a].create[q] != ZERO)
            .fold(DMatrix::zeros(nn, d), |acc, a| acc + &outer_right[a] * terms[a].create[q]);
        if lq.iter().all(|z| *z == ZERO) || rq.iter().all(|z| *z == ZERO) {
            continue;
        }
        let mut inner = DMatrix::<Complex64>::zeros(nn, nn);
        for a3 in 0..na {
            for a2 in 0..na {
                if active[a3 * na + a2].is_empty() {
                    continue;
                }
                for b in 0..nb {
                    let f = h(a3, a2, omega[q] + bohr[b]);
                    inner += &inner_blocks[(a3 * na + a2) * nb + b] * f;
                }
            }
        }
        let dq = DMatrix::from_fn(nn, nn, |a, b| {
            if a == b {
                den(fm.small.sector_index(a / n, a % n), omega[q])
            } else {
                ZERO
            }
        });
        nested += lq * &dq * inner * &dq * rq;
    }

    // Crossed: Σ S4 Π_{B3} S3 Π_{B2} S2 Π_{B1} S1 · C(B1, B2, B3) with
    // C = Σ_{q,q'} v_{3q}u_{1q} v_{4q'}u_{2q'} / ((B1+ω_q)(B2+ω_q+ω_q')(B3+ω_q')).
    let mut crossed = DMatrix::<Complex64>::zeros(d, d);
    let pairs: Vec<(usize, usize)> = (0..na).flat_map(|a| (0..na).map(move |b| (a, b))).collect();
    for b2 in 0..nb {
        for b3 in 0..nb {
            // Bracket matrices for each (α1..α4, B1) with this (B2, B3).
            let mut brackets: Vec<(usize, usize, usize, usize, usize, DMatrix<Complex64>)> = Vec::new();
            for (a4, a3) in pairs.iter().copied() {
                let top = &outer_left[a4] * &proj[b3] * &terms[a3].small * &proj[b2];
                if top.iter().all(|z| *z == ZERO) {
                    continue;
                }
                for (a2, a1) in pairs.iter().copied() {
                    for b1 in 0..nb {
                        let m = &top * &terms[a2].small * &proj[b1] * &outer_right[a1];
                        if m.iter().any(|z| *z != ZERO) {
                            brackets.push((a1, a2, a3, a4, b1, m));
                        }
                    }
                }
            }
            if brackets.is_empty() {
                continue;
            }
            // Inner sums over q' for each (α2, α4) that occurs, per q.
            let mut needed: Vec<(usize, usize)> = brackets.iter().map(|b| (b.1, b.3)).collect();
            needed.sort_unstable();
            needed.dedup();
            let mut coeff = vec![ZERO; brackets.len()];
            let mut inner = vec![ZERO; needed.len()];
            for q in 0..nq {
                let any_outer = brackets.iter().any(|b| weight(b.2, b.0, q) != ZERO);
                if !any_outer {
                    continue;
                }
                for (slot, &(a2, a4)) in inner.iter_mut().zip(&needed) {
                    *slot = active[a4 * na + a2]
                        .iter()
                        .map(|&qp| {
                            weight(a4, a2, qp)
                                / ((Complex64::new(bohr[b3] + omega[qp] - e, 0.0) - ie)
                                    * (Complex64::new(bohr[b2] + omega[q] + omega[qp] - e, 0.0) - ie))
                        })
                        .sum();
                }
                for (c, b) in coeff.iter_mut().zip(&brackets) {
                    let w = weight(b.2, b.0, q);
                    if w == ZERO {
                        continue;
                    }
                    let i = needed.binary_search(&(b.1, b.3)).unwrap();
                    *c += w * den(b.4, omega[q]) * inner[i];
                }
            }
            for (c, b) in coeff.iter().zip(&brackets) {
                crossed += &b.5 * *c;
            }
        }
    }
    Ok(WickPairings { ladder, nested, crossed })
}

#[cfg(test)]
mod tests;
