//! Level shift operators `Λ_e(ε) = P_e I P̄_e (L̄_0 − e − iε)⁻¹ P̄_e I P_e`
//! and their limits `Λ_e = lim_{ε↓0} Λ_e(ε)`.
//!
//! For a coupling `I = G ⊗ 1 ⊗ φ_β(g) − J(…)J` the reservoir vacuum
//! expectation reduces the resolvent to the half transforms of
//! [`crate::reservoir`]. With `T(x)` the half transform, `X(u)` the weight of
//! the terms acting on both tensor factors, and `Ḡ` the entrywise conjugate,
//! the matrix element between pairs `(i,j)` and `(k,l)` of one sector is
//!
//! ```text
//! Λ[(k,l),(i,j)] = δ_{lj} Σ_m G_{km} G_{mi} T(E_m − E_i)
//!                − δ_{ki} Σ_m Ḡ_{lm} Ḡ_{mj} conj T(E_m − E_j)
//!                + X(E_i − E_k) G_{ki} Ḡ_{lj}
//! ```
//!
//! summed over couplings. For the standard interaction `X(u) = −i·C(u)`
//! with `C` the [`cross_transform`], which is `π M(u)` in the limit.

mod closed_form;
mod random;
mod spectral;
mod verify;

pub use closed_form::*;
pub use random::*;
pub use spectral::*;
pub use verify::*;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quad::QuadOptions;
use crate::reservoir::{cross_transform, half_transform, IrClass, Regularization, ReservoirSpec};
use crate::smallsys::{bohr_spectrum, check_hermitian, SectorBasis, SmallSystem};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// One coupling `G ⊗ φ_β(g)` to its own reservoir.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub g: DMatrix<Complex64>,
    pub reservoir: ReservoirSpec,
}

/// Which interaction generates the dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Generator {
    /// `I = V − JVJ`, the standard Liouvillean interaction.
    Standard,
    /// `W = V − J Δ^{1/2} V Δ^{−1/2} J`, with the modular operator `Δ` of
    /// the reference state in which the small system sits at inverse
    /// temperature `reference_beta` and each reservoir at its own `β`.
    /// It annihilates that reference state, also when the reservoirs are
    /// at different temperatures.
    CLiouville { reference_beta: f64 },
}

/// A small system with one or more reservoir couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenSystemModel {
    pub small: SmallSystem,
    pub couplings: Vec<Coupling>,
    /// Coupling constant λ; enters only through rate reporting.
    pub coupling_constant: f64,
    pub generator: Generator,
    pub quadrature: QuadOptions,
}

impl OpenSystemModel {
    pub fn new(small: SmallSystem, couplings: Vec<Coupling>) -> Result<Self> {
        if couplings.is_empty() {
            return Err(Error::InvalidArgument("a model needs at least one coupling".into()));
        }
        let n = small.dim();
        for c in &couplings {
            if c.g.nrows() != n || c.g.ncols() != n {
                return Err(Error::InvalidArgument(format!(
                    "coupling matrix is {}x{}, expected {n}x{n}",
                    c.g.nrows(),
                    c.g.ncols()
                )));
            }
            check_hermitian(&c.g)?;
        }
        Ok(OpenSystemModel {
            small,
            couplings,
            coupling_constant: 1.0,
            generator: Generator::Standard,
            quadrature: QuadOptions::default(),
        })
    }

    pub fn with_generator(mut self, generator: Generator) -> Result<Self> {
        if let Generator::CLiouville { reference_beta } = generator {
            if !(reference_beta > 0.0) || !reference_beta.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "reference beta must be positive, got {reference_beta}"
                )));
            }
        }
        self.generator = generator;
        Ok(self)
    }

    pub fn with_coupling_constant(mut self, lambda: f64) -> Self {
        self.coupling_constant = lambda;
        self
    }

    pub fn with_quadrature(mut self, quadrature: QuadOptions) -> Self {
        self.quadrature = quadrature;
        self
    }

    /// The least favourable infrared class over all couplings.
    pub fn ir_class(&self) -> IrClass {
        let classes: Vec<IrClass> = self.couplings.iter().map(|c| c.reservoir.ir_class()).collect();
        if classes.contains(&IrClass::Subcritical) {
            IrClass::Subcritical
        } else if classes.contains(&IrClass::Critical) {
            IrClass::Critical
        } else {
            IrClass::Regular
        }
    }

    /// Inverse temperature of the state the kernel should contain: the
    /// reference temperature for [`Generator::CLiouville`], or the common
    /// reservoir temperature for the standard interaction when all
    /// reservoirs agree.
    pub fn equilibrium_beta(&self) -> Option<f64> {
        match self.generator {
            Generator::CLiouville { reference_beta } => Some(reference_beta),
            Generator::Standard => {
                let b0 = self.couplings[0].reservoir.beta;
                self.couplings.iter().all(|c| c.reservoir.beta == b0).then_some(b0)
            }
        }
    }

    /// True when the model describes a single temperature, so that the
    /// generator is self-adjoint.
    pub fn is_equilibrium(&self) -> bool {
        match self.generator {
            Generator::Standard => self.equilibrium_beta().is_some(),
            Generator::CLiouville { reference_beta } => {
                self.couplings.iter().all(|c| c.reservoir.beta == reference_beta)
            }
        }
    }

    fn check_limit_exists(&self) -> Result<()> {
        for c in &self.couplings {
            if c.reservoir.ir_class() == IrClass::Subcritical {
                return Err(Error::NonexistentLso { p: c.reservoir.form_factor.ir_exponent() });
            }
        }
        Ok(())
    }
}

/// Real-frequency and on-shell parts of a limit operator.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitParts {
    /// Contribution of the principal-value parts; Hermitian.
    pub pv_part: DMatrix<Complex64>,
    /// On-shell contribution; `i` times a Hermitian matrix in equilibrium.
    pub delta_part: DMatrix<Complex64>,
}

/// A level shift operator on one Bohr sector.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelShiftOperator {
    pub sector: SectorBasis,
    pub matrix: DMatrix<Complex64>,
    pub regularization: Regularization,
    /// Present for [`Regularization::Limit`].
    pub parts: Option<LimitParts>,
    /// Indices of the couplings that contributed.
    pub provenance: Vec<usize>,
}

impl LevelShiftOperator {
    pub fn dim(&self) -> usize {
        self.sector.dim()
    }

    /// Frobenius norm of the matrix.
    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }
}

/// Half transforms and cross weights of one coupling at every Bohr frequency.
struct CouplingTransforms {
    /// `T(ω)` indexed by sector.
    t: Vec<Complex64>,
    /// Cross weight `X(u)` indexed by sector.
    x: Vec<Complex64>,
}

fn coupling_transforms(
    model: &OpenSystemModel,
    coupling: &Coupling,
    reg: Regularization,
) -> Result<CouplingTransforms> {
    let spec = &coupling.reservoir;
    let opts = &model.quadrature;
    let freqs = model.small.bohr_frequencies();
    let t = freqs
        .iter()
        .map(|&w| half_transform(spec, w, reg, opts))
        .collect::<Result<Vec<_>>>()?;
    let x = match model.generator {
        Generator::Standard => freqs
            .iter()
            .map(|&u| cross_transform(spec, u, reg, opts).map(|c| -I * c))
            .collect::<Result<Vec<_>>>()?,
        Generator::CLiouville { reference_beta } => freqs
            .iter()
            .zip(&t)
            .map(|(&u, tu)| -2.0 * I * (0.5 * reference_beta * u).exp() * tu.im)
            .collect(),
    };
    Ok(CouplingTransforms { t, x })
}

/// Assembles one coupling's operator on `sector`. With `real_only`, only
/// `Re T` enters and the cross term is dropped, giving the PV part.
fn assemble(
    small: &SmallSystem,
    g: &DMatrix<Complex64>,
    tr: &CouplingTransforms,
    sector: &SectorBasis,
    real_only: bool,
) -> DMatrix<Complex64> {
    let n = small.dim();
    let d = sector.dim();
    let t = |s: usize| if real_only { Complex64::new(tr.t[s].re, 0.0) } else { tr.t[s] };
    let mut out = DMatrix::zeros(d, d);
    for (row, &(k, l)) in sector.pairs.iter().enumerate() {
        for (col, &(i, j)) in sector.pairs.iter().enumerate() {
            let mut v = Complex64::new(0.0, 0.0);
            if l == j {
                for m in 0..n {
                    v += g[(k, m)] * g[(m, i)] * t(small.sector_index(m, i));
                }
            }
            if k == i {
                for m in 0..n {
                    v -= (g[(l, m)] * g[(m, j)]).conj() * t(small.sector_index(m, j)).conj();
                }
            }
            if !real_only {
                v += tr.x[small.sector_index(i, k)] * g[(k, i)] * g[(l, j)].conj();
            }
            out[(row, col)] = v;
        }
    }
    out
}

/// Builds the operator of every sector at one regularization.
pub fn build_all(model: &OpenSystemModel, reg: Regularization) -> Result<Vec<LevelShiftOperator>> {
    if reg == Regularization::Limit {
        model.check_limit_exists()?;
    }
    let transforms = model
        .couplings
        .iter()
        .map(|c| coupling_transforms(model, c, reg))
        .collect::<Result<Vec<_>>>()?;
    Ok(bohr_spectrum(&model.small)
        .into_iter()
        .map(|sector| assemble_sector(model, &transforms, sector, reg))
        .collect())
}

fn assemble_sector(
    model: &OpenSystemModel,
    transforms: &[CouplingTransforms],
    sector: SectorBasis,
    reg: Regularization,
) -> LevelShiftOperator {
    let d = sector.dim();
    let mut matrix = DMatrix::zeros(d, d);
    let mut pv = DMatrix::zeros(d, d);
    for (c, tr) in model.couplings.iter().zip(transforms) {
        matrix += assemble(&model.small, &c.g, tr, &sector, false);
        if reg == Regularization::Limit {
            pv += assemble(&model.small, &c.g, tr, &sector, true);
        }
    }
    let parts = (reg == Regularization::Limit).then(|| LimitParts { delta_part: &matrix - &pv, pv_part: pv });
    LevelShiftOperator {
        sector,
        matrix,
        regularization: reg,
        parts,
        provenance: (0..model.couplings.len()).collect(),
    }
}

fn build_sector(model: &OpenSystemModel, e: f64, reg: Regularization) -> Result<LevelShiftOperator> {
    let sector = model.small.sector_at(e)?;
    if reg == Regularization::Limit {
        model.check_limit_exists()?;
    }
    let transforms = model
        .couplings
        .iter()
        .map(|c| coupling_transforms(model, c, reg))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble_sector(model, &transforms, sector, reg))
}

/// `Λ_e(ε)` for `ε > 0`.
pub fn build_lso_eps(model: &OpenSystemModel, e: f64, eps: f64) -> Result<LevelShiftOperator> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    build_sector(model, e, Regularization::Epsilon(eps))
}

/// The limit `Λ_e`, with its principal-value and on-shell parts.
///
/// Fails with [`Error::NonexistentLso`] when a form factor is subcritical.
pub fn build_lso_limit(model: &OpenSystemModel, e: f64) -> Result<LevelShiftOperator> {
    build_sector(model, e, Regularization::Limit)
}

/// `Σ_r Λ_e^{(r)}`: each coupling's operator built on its own and summed.
pub fn multi_reservoir_lso(model: &OpenSystemModel, e: f64, reg: Regularization) -> Result<LevelShiftOperator> {
    let mut total: Option<LevelShiftOperator> = None;
    for (idx, c) in model.couplings.iter().enumerate() {
        let single = OpenSystemModel { couplings: vec![c.clone()], ..model.clone() };
        let part = build_sector(&single, e, reg)?;
        total = Some(match total {
            None => LevelShiftOperator { provenance: vec![idx], ..part },
            Some(mut acc) => {
                acc.matrix += &part.matrix;
                if let (Some(a), Some(p)) = (acc.parts.as_mut(), part.parts.as_ref()) {
                    a.pv_part += &p.pv_part;
                    a.delta_part += &p.delta_part;
                }
                acc.provenance.push(idx);
                acc
            }
        });
    }
    total.ok_or_else(|| Error::InvalidArgument("a model needs at least one coupling".into()))
}
