use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Coupling, OpenSystemModel};
use crate::error::Result;
use crate::reservoir::{FormFactor, ReservoirSpec};
use crate::smallsys::SmallSystem;

/// Level structure of a [`random_model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumKind {
    /// Nondegenerate energies with pairwise distinct gaps.
    Simple,
    /// At least one repeated energy.
    Degenerate,
    /// Either of the above, chosen by the seed.
    Mixed,
}

/// Smallest separation between distinct Bohr frequencies of a simple
/// random spectrum.
const MIN_GAP: f64 = 0.05;

fn simple_energies(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut e: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
        e.sort_by(f64::total_cmp);
        let mut gaps: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| e[j] - e[i]).collect();
        gaps.push(0.0);
        gaps.sort_by(f64::total_cmp);
        if gaps.windows(2).all(|w| w[1] - w[0] > MIN_GAP) {
            return e;
        }
    }
}

fn degenerate_energies(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut e: Vec<f64> = (0..n).map(|_| 0.5 * rng.gen_range(0..=(n as i32)) as f64).collect();
        e.sort_by(f64::total_cmp);
        if e.windows(2).any(|w| w[0] == w[1]) {
            return e;
        }
    }
}

/// A seeded model with `2 ≤ N ≤ 5` levels, one random Hermitian coupling
/// and a Gaussian-damped reservoir with `p ∈ {−1/2, 0, 1/2, 1}`.
pub fn random_model(seed: u64, kind: SpectrumKind) -> Result<OpenSystemModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=5);
    let degenerate = match kind {
        SpectrumKind::Simple => false,
        SpectrumKind::Degenerate => true,
        SpectrumKind::Mixed => rng.gen_bool(0.5),
    };
    let energies = if degenerate { degenerate_energies(n, &mut rng) } else { simple_energies(n, &mut rng) };
    let a = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)));
    let g = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let p = [-0.5, 0.0, 0.5, 1.0][rng.gen_range(0..4)];
    let gamma = rng.gen_range(0.3..1.0);
    let beta = rng.gen_range(0.5..2.0);
    let spec = ReservoirSpec::new(beta, FormFactor::gaussian_damped(gamma, p, 1.0, 4.0)?)?;
    OpenSystemModel::new(SmallSystem::new(energies)?, vec![Coupling { g, reservoir: spec }])
}
