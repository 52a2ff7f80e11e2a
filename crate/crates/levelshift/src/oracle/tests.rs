use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::*;
use crate::lso::{build_lso_eps, eigenvalues, matched_distance, Coupling, Generator, OpenSystemModel};
use crate::quad::QuadOptions;
use crate::reservoir::{xi_eta, FormFactor, ReservoirSpec};
use crate::smallsys::SmallSystem;

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn tight() -> QuadOptions {
    QuadOptions { abs_tol: 1e-12, rel_tol: 1e-10, max_panels: 20_000 }
}

fn hermitian3() -> DMatrix<Complex64> {
    DMatrix::from_row_slice(
        3,
        3,
        &[
            re(0.3), Complex64::new(0.5, 0.2), Complex64::new(-0.2, 0.4),
            Complex64::new(0.5, -0.2), re(-0.1), Complex64::new(0.3, 0.1),
            Complex64::new(-0.2, -0.4), Complex64::new(0.3, -0.1), re(0.2),
        ],
    )
}

fn random_three_level() -> OpenSystemModel {
    let small = SmallSystem::new(vec![0.0, 0.6, 1.4]).unwrap();
    let spec = ReservoirSpec::new(1.1, FormFactor::gaussian_damped(0.5, 0.5, 1.2, 4.0).unwrap()).unwrap();
    OpenSystemModel::new(small, vec![Coupling { g: hermitian3(), reservoir: spec }]).unwrap().with_quadrature(tight())
}

fn two_reservoir_c_liouville() -> OpenSystemModel {
    let small = SmallSystem::new(vec![0.0, 0.6, 1.4]).unwrap();
    let g2 = DMatrix::from_row_slice(3, 3, &[re(0.0), re(0.4), re(0.1), re(0.4), re(0.0), re(0.3), re(0.1), re(0.3), re(0.0)]);
    let r1 = ReservoirSpec::new(0.5, FormFactor::gaussian_damped(0.5, 0.5, 1.2, 4.0).unwrap()).unwrap();
    let r2 = ReservoirSpec::new(2.0, FormFactor::gaussian_damped(0.4, 0.0, 1.0, 4.0).unwrap()).unwrap();
    OpenSystemModel::new(small, vec![Coupling { g: hermitian3(), reservoir: r1 }, Coupling { g: g2, reservoir: r2 }])
        .unwrap()
        .with_generator(Generator::CLiouville { reference_beta: 1.0 })
        .unwrap()
        .with_quadrature(tight())
}

fn rel_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    (a - b).norm() / (1.0 + b.norm())
}

#[test]
fn grid_has_requested_size_and_weights() {
    for n in [1, 5, 8, 13, 64, 1000] {
        let g = radial_grid(n, 3.0);
        assert_eq!(g.len(), n);
        let total: f64 = g.iter().map(|p| p.1).sum();
        assert!((total - 3.0).abs() < 1e-12);
        assert!(g.iter().all(|&(r, w)| r > 0.0 && r < 3.0 && w > 0.0));
    }
    let one = radial_grid(1, 2.0);
    assert_eq!(one, vec![(1.0, 2.0)]);
}

#[test]
fn single_node_gives_one_left_and_one_right_quantum() {
    let model = random_three_level();
    let fm = discretize(&model, 1, 4.0).unwrap();
    assert_eq!(fm.modes.len(), 1);
    assert_eq!(fm.n_quanta(), 2);
    assert_eq!(fm.sector_bases(), vec![vec![], vec![0], vec![1]]);
    assert_eq!(fm.omega(0), -fm.omega(1));
}

#[test]
fn grid_reproduces_xi() {
    let spec = ReservoirSpec::new(2.0, FormFactor::gaussian_damped(1.0, -0.5, 1.0, 5.0).unwrap()).unwrap();
    let (xi, _) = xi_eta(&spec, &tight()).unwrap();
    let sum: f64 = radial_grid(4096, 5.0).iter().map(|&(r, w)| 0.5 * w * spec.jacobian(r) / r).sum();
    assert!((sum - xi).abs() < 1e-6 * xi.abs(), "{sum} vs {xi}");
}

#[test]
fn zero_coupling_gives_zero() {
    let small = SmallSystem::new(vec![0.0, 1.0]).unwrap();
    let spec = ReservoirSpec::new(1.0, FormFactor::power_cutoff(1.0, 0.0, 2.0).unwrap()).unwrap();
    let model = OpenSystemModel::new(small, vec![Coupling { g: DMatrix::zeros(2, 2), reservoir: spec }]).unwrap();
    let fm = discretize(&model, 16, 2.0).unwrap();
    assert_eq!(direct_lso_eps(&fm, 0.0, 0.1).unwrap().norm(), 0.0);
    let fm2 = fm.clone().with_max_excitations(2).unwrap();
    assert_eq!(fourth_order_literal(&fm2, 0.0, 0.1).unwrap().norm(), 0.0);
    assert_eq!(fourth_order_path_sum(&fm2, 0.0, 0.1).unwrap().norm(), 0.0);
}

#[test]
fn direct_matches_analytic_build_in_every_sector() {
    let model = random_three_level();
    let fm = discretize(&model, 4000, 4.0).unwrap();
    for &e in model.small.bohr_frequencies() {
        let direct = direct_lso_eps(&fm, e, 1e-2).unwrap();
        let built = build_lso_eps(&model, e, 1e-2).unwrap();
        assert!(rel_diff(&direct, &built.matrix) < 5e-3, "e = {e}: {}", rel_diff(&direct, &built.matrix));
        assert!(rel_diff(&direct, &built.matrix) < 1e-6, "e = {e}: {}", rel_diff(&direct, &built.matrix));
    }
}

#[test]
fn direct_matches_build_for_critical_degenerate_model() {
    let small = SmallSystem::new(vec![0.0, 0.0]).unwrap();
    let g = DMatrix::from_row_slice(2, 2, &[re(0.8), Complex64::new(0.3, -0.2), Complex64::new(0.3, 0.2), re(-0.4)]);
    let spec = ReservoirSpec::new(2.0, FormFactor::gaussian_damped(1.0, -0.5, 1.0, 5.0).unwrap()).unwrap();
    let model = OpenSystemModel::new(small, vec![Coupling { g, reservoir: spec }]).unwrap().with_quadrature(tight());
    let fm = discretize(&model, 4000, 5.0).unwrap();
    let direct = direct_lso_eps(&fm, 0.0, 1e-2).unwrap();
    let built = build_lso_eps(&model, 0.0, 1e-2).unwrap();
    assert!(rel_diff(&direct, &built.matrix) < 1e-6, "{}", rel_diff(&direct, &built.matrix));
}

#[test]
fn direct_matches_build_for_c_liouville_two_reservoirs() {
    let model = two_reservoir_c_liouville();
    let fm = discretize(&model, 3000, 4.0).unwrap();
    for &e in model.small.bohr_frequencies() {
        let direct = direct_lso_eps(&fm, e, 2e-2).unwrap();
        let built = build_lso_eps(&model, e, 2e-2).unwrap();
        assert!(rel_diff(&direct, &built.matrix) < 1e-6, "e = {e}: {}", rel_diff(&direct, &built.matrix));
    }
}

#[test]
fn direct_respects_reflection_symmetry() {
    let model = two_reservoir_c_liouville();
    let fm = discretize(&model, 64, 4.0).unwrap();
    for &e in model.small.bohr_frequencies() {
        let a = eigenvalues(&direct_lso_eps(&fm, e, 0.05).unwrap()).unwrap();
        let b: Vec<Complex64> = eigenvalues(&direct_lso_eps(&fm, -e, 0.05).unwrap()).unwrap().iter().map(|z| -z.conj()).collect();
        assert!(matched_distance(&a, &b).unwrap() < 1e-12);
    }
}

#[test]
fn refinement_reduces_error() {
    let model = random_three_level();
    let built = build_lso_eps(&model, 0.6, 5e-2).unwrap();
    let errs: Vec<f64> = [48, 96, 192]
        .iter()
        .map(|&m| rel_diff(&direct_lso_eps(&discretize(&model, m, 4.0).unwrap(), 0.6, 5e-2).unwrap(), &built.matrix))
        .collect();
    assert!(errs[1] < 1.1 * errs[0] && errs[2] < 1.1 * errs[1], "{errs:?}");
    assert!(errs[2] < errs[0]);
}

#[test]
fn path_sum_equals_literal_two_quantum_truncation() {
    for model in [random_three_level(), two_reservoir_c_liouville()] {
        let fm = discretize(&model, 5, 4.0).unwrap().with_max_excitations(2).unwrap();
        for e in [0.0, 0.6] {
            let literal = fourth_order_literal(&fm, e, 0.3).unwrap();
            let wick = fourth_order_path_sum(&fm, e, 0.3).unwrap();
            assert!(literal.norm() > 0.0);
            assert!((&literal - &wick).norm() < 1e-12 * literal.norm(), "{}", (&literal - &wick).norm() / literal.norm());
        }
    }
}

#[test]
fn feshbach_identities_hold_on_random_instances() {
    for seed in 0..5 {
        let inst = FeshbachInstance::random(seed).unwrap();
        assert!(inst.branch_residual < 1e-12, "{}", inst.branch_residual);
        assert!((&inst.p * &inst.psi0 - &inst.psi0).norm() < 1e-12);
        let rep = feshbach_identity_check(&inst, &[1e-2, 1e-3, 1e-4]).unwrap();
        assert!(rep.max_residual() < 1e-10, "{rep:?}");
        assert!(rep.limit_residual < 1e-6, "{rep:?}");
    }
}

#[test]
fn feshbach_scaling_quadruples_second_order_term() {
    let inst = FeshbachInstance::random(7).unwrap();
    let doubled = inst.scaled(2.0).unwrap();
    let a = feshbach_identity_check(&inst, &[1e-2]).unwrap();
    let b = feshbach_identity_check(&doubled, &[1e-2]).unwrap();
    assert!((b.entries[0].lhs_norm - 4.0 * a.entries[0].lhs_norm).abs() < 1e-8 * b.entries[0].lhs_norm);
}

#[test]
fn feshbach_constant_branch_is_trivial() {
    let n = 4;
    let l0 = DMatrix::from_diagonal(&DVector::from_vec(vec![re(0.0), re(0.0), re(1.0), re(-1.5)]));
    let mut w = DMatrix::from_fn(n, n, |i, j| Complex64::new(0.1 * (i + j) as f64, 0.05 * (i as f64 - j as f64)));
    for k in 0..n {
        w[(0, k)] = re(0.0);
        w[(k, 0)] = re(0.0);
    }
    w[(1, 1)] = re(0.7);
    let psi = DVector::from_vec(vec![re(1.0), re(0.0), re(0.0), re(0.0)]);
    let inst = FeshbachInstance::from_operators(l0, w, 0.0, &psi).unwrap();
    assert!(inst.dpsi0.norm() < 1e-12);
    let rep = feshbach_identity_check(&inst, &[1e-2, 1e-4]).unwrap();
    assert!(rep.entries.iter().all(|e| e.lhs_norm < 1e-12 && e.residual < 1e-12));
}

#[test]
fn persisting_eigenvalue_is_required() {
    let l0 = DMatrix::from_diagonal(&DVector::from_vec(vec![re(0.0), re(1.0), re(-1.0)]));
    let w = DMatrix::from_element(3, 3, re(0.3));
    let psi = DVector::from_vec(vec![re(1.0), re(0.0), re(0.0)]);
    assert!(matches!(FeshbachInstance::from_operators(l0, w, 0.0, &psi), Err(Error::BranchTracking(_))));
}

#[test]
fn gibbs_identity_on_small_truncation() {
    let small = SmallSystem::new(vec![0.0, 0.0]).unwrap();
    let g = DMatrix::from_row_slice(2, 2, &[re(0.8), Complex64::new(0.3, -0.2), Complex64::new(0.3, 0.2), re(-0.4)]);
    let spec = ReservoirSpec::new(2.0, FormFactor::gaussian_damped(1.0, -0.5, 1.0, 5.0).unwrap()).unwrap();
    let model = OpenSystemModel::new(small, vec![Coupling { g, reservoir: spec }]).unwrap();
    let fm = discretize(&model, 6, 5.0).unwrap();
    let rep = gibbs_derivative_check(&fm, &[1e-1, 1e-2, 1e-3]).unwrap();
    assert!(rep.pip_norm < 1e-12);
    assert!(rep.max_relative_residual() < 1e-9, "{rep:?}");
    let im: Vec<f64> = rep.entries.iter().map(|e| e.im_part_norm).collect();
    assert!(im[1] < 0.2 * im[0] && im[2] < 0.2 * im[1], "{im:?}");
}

#[test]
fn gibbs_identity_trivial_for_zero_coupling() {
    let small = SmallSystem::new(vec![0.0, 0.5]).unwrap();
    let spec = ReservoirSpec::new(1.0, FormFactor::power_cutoff(1.0, 0.0, 2.0).unwrap()).unwrap();
    let model = OpenSystemModel::new(small, vec![Coupling { g: DMatrix::zeros(2, 2), reservoir: spec }]).unwrap();
    let rep = gibbs_derivative_check(&discretize(&model, 4, 2.0).unwrap(), &[1e-2]).unwrap();
    assert_eq!(rep.entries[0].lambda_omega_norm, 0.0);
    assert_eq!(rep.entries[0].residual, 0.0);
}
