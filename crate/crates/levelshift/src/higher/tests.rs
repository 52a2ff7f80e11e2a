use nalgebra::DMatrix;
use num_complex::Complex64;

use super::*;
use crate::lso::{Coupling, THREE_LEVEL_ORDER};
use crate::reservoir::FormFactor;
use crate::smallsys::SmallSystem;

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn tight() -> QuadOptions {
    QuadOptions { abs_tol: 1e-13, rel_tol: 1e-11, max_panels: 20_000 }
}

fn bump(beta: f64) -> ReservoirSpec {
    ReservoirSpec::new(beta, FormFactor::gaussian_damped(1.0, 1.0, 1.0, 4.0).unwrap()).unwrap()
}

fn b0_model(a: f64, c: f64, delta: f64) -> OpenSystemModel {
    let small = SmallSystem::new(vec![0.0, delta, delta]).unwrap().with_basis_order(THREE_LEVEL_ORDER.to_vec()).unwrap();
    let g = DMatrix::from_row_slice(3, 3, &[re(0.0), re(a), re(0.0), re(a), re(0.0), re(c), re(0.0), re(c), re(0.0)]);
    OpenSystemModel::new(small, vec![Coupling { g, reservoir: bump(1.0) }]).unwrap().with_quadrature(tight())
}

fn cheap_prime(model: &OpenSystemModel) -> DMatrix<Complex64> {
    let fm = discretize(model, 200, 4.0).unwrap();
    lambda0_prime_oracle(model, &fm, 0.05).unwrap()
}

/// Composite Simpson rule with `n` panels on `[a, b]`.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn xi1_matches_brute_force() {
    let spec = bump(1.0);
    let delta = 0.5;
    let w = |r: f64| 4.0 * PI * (r * (-r * r).exp()).powi(2);
    let f = |r: f64| {
        let s = r - delta;
        if s <= 0.0 {
            return 0.0;
        }
        w(r) * w(s) / s.exp_m1() * (1.0 + 1.0 / r.exp_m1())
    };
    let reference = 2.0 * PI * delta * delta * simpson(f, delta, 4.0, 1_000_000);
    let value = xi1(&spec, delta, &tight()).unwrap();
    assert!((value - reference).abs() < 1e-6 * reference, "{value} vs {reference}");
}

#[test]
fn xi1_is_of_order_delta_squared() {
    let spec = bump(1.0);
    let ratios: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&d| xi1(&spec, d, &tight()).unwrap() / (d * d)).collect();
    assert!(ratios.iter().all(|r| *r > 0.0));
    assert!((ratios[2] - ratios[1]).abs() < 0.05 * ratios[2], "{ratios:?}");
    assert!((ratios[2] - ratios[1]).abs() < (ratios[1] - ratios[0]).abs());
}

#[test]
fn xi_integrals_vanish_for_zero_form_factor() {
    let spec = ReservoirSpec::new(1.0, FormFactor::power_cutoff(0.0, 1.0, 3.0).unwrap()).unwrap();
    assert_eq!(xi1(&spec, 0.5, &tight()).unwrap(), 0.0);
    assert_eq!(xi2(&spec, &tight()).unwrap(), 0.0);
}

#[test]
fn xi1_diverges_without_positive_ir_exponent() {
    for p in [0.0, -0.5] {
        let spec = ReservoirSpec::new(1.0, FormFactor::gaussian_damped(1.0, p, 1.0, 4.0).unwrap()).unwrap();
        assert!(matches!(xi1(&spec, 0.5, &tight()), Err(Error::DivergentIntegral { .. })));
    }
    assert!(matches!(xi1(&bump(1.0), 4.5, &tight()), Err(Error::InvalidArgument(_))));
}

#[test]
fn xi2_uses_the_occupation_identity() {
    let spec = bump(0.7);
    let ff = &spec.form_factor;
    let direct = PI
        * quad::integrate_real(
            |r| r * r * ff.angular_weight(r).powi(2) * crate::reservoir::xi2_factor(0.7, r),
            &ff.breakpoints(),
            &tight(),
        )
        .unwrap();
    let value = xi2(&spec, &tight()).unwrap();
    assert!((value - direct).abs() < 1e-9 * value);
}

#[test]
fn xi2_cold_limit_drops_the_thermal_factor() {
    let bare = PI * quad::integrate_real(|r| r * r * bump(1.0).form_factor.angular_weight(r).powi(2), &bump(1.0).form_factor.breakpoints(), &tight()).unwrap();
    let cold = xi2(&bump(1e4), &tight()).unwrap();
    assert!((cold - bare).abs() < 1e-3 * bare, "{cold} vs {bare}");
    assert!(xi2(&bump(1.0), &tight()).unwrap() < bare);
}

#[test]
fn xi2_does_not_depend_on_the_level_spacing() {
    let l1 = cheap_prime(&b0_model(1.0, 1.0, 1.0));
    let l2 = cheap_prime(&b0_model(1.0, 1.0, 0.5));
    let s1 = d_matrix_and_rates(&b0_model(1.0, 1.0, 1.0), &l1, 0.1).unwrap();
    let s2 = d_matrix_and_rates(&b0_model(1.0, 1.0, 0.5), &l2, 0.1).unwrap();
    assert_eq!(s1.xi2, s2.xi2);
    assert_ne!(s1.xi1, s2.xi1);
}

#[test]
fn zero_coupling_gives_zero_prime() {
    let model = b0_model(0.0, 0.0, 1.0);
    assert_eq!(cheap_prime(&model).norm(), 0.0);
    let r = lambda0_prime_converged(&model, &PrimeSettings { n_modes: 16, ..PrimeSettings::default() }).unwrap();
    assert!(r.converged);
    assert_eq!(r.trace.len(), 1);
}

#[test]
fn refinement_reports_its_trace_when_levels_run_out() {
    let model = b0_model(1.0, 1.0, 1.0);
    let settings = PrimeSettings { n_modes: 32, max_levels: 2, rel_tol: 1e-12, ..PrimeSettings::default() };
    match lambda0_prime_converged(&model, &settings) {
        Err(Error::NotConverged { trace, .. }) => assert!(trace.contains("M=32") && trace.contains("M=64"), "{trace}"),
        other => panic!("{other:?}"),
    }
    let psi0 = ThreeLevel::psi0();
    let probed = PrimeSettings { probe: Some((psi0.clone(), psi0)), ..settings };
    let r = lambda0_prime_refined(&model, &probed).unwrap();
    assert!(!r.converged);
    assert!(r.trace.iter().all(|s| s.probe.is_some()));
    assert!(r.trace_summary().contains("probe="));
}

#[test]
fn gibbs_structure_annihilates_the_prime_entries() {
    let model = b0_model(1.0, 1.0, 1.0);
    let fm = discretize(&model, 400, 4.0).unwrap();
    let tl = ThreeLevel::from_model(&model).unwrap();
    let (psi, psi0) = (tl.psi(), ThreeLevel::psi0());
    let mut prev = f64::INFINITY;
    for eps in [0.08, 0.04, 0.02] {
        let l = lambda0_prime_oracle(&model, &fm, eps).unwrap();
        let worst = psi.dotc(&(&l * &psi)).norm().max(psi0.dotc(&(&l * &psi)).norm()) / l.norm();
        assert!(worst < 0.7 * prev, "eps = {eps}: {worst}");
        prev = worst;
        assert!(psi0.dotc(&(&l * &psi0)).im > 0.0);
    }
    assert!(prev < 2e-3, "{prev}");
}

#[test]
fn printed_d_matrix_has_zero_determinant_and_trace_on_psi0() {
    let model = b0_model(1.0, 1.0, 1.0);
    let l = cheap_prime(&model);
    let sc = d_matrix_and_rates(&model, &l, 0.1).unwrap();
    let d = &sc.d_matrix;
    let det = d[(0, 0)] * d[(1, 1)] - d[(0, 1)] * d[(1, 0)];
    assert!(det.norm() < 1e-2 * d.norm_squared(), "{det}");
    let tr = d[(0, 0)] + d[(1, 1)];
    assert!((tr - sc.psi0_entry() * 0.01).norm() < 1e-2 * tr.norm());
}

#[test]
fn slow_eigenvalue_matches_direct_perturbation() {
    let model = b0_model(1.0, 1.0, 1.0);
    let l = cheap_prime(&model);
    let l0 = build_lso_limit(&model, 0.0).unwrap().matrix;
    let lambda = 1e-2;
    let sc = d_matrix_and_rates(&model, &l, lambda).unwrap();
    let mut ev = eigenvalues(&(&l0 + &l * re(lambda * lambda))).unwrap();
    ev.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    // At finite ε the Gibbs direction leaves the kernel only slightly.
    assert!(ev[0].norm() < 1e-2 * ev[1].norm());
    assert!((ev[1] - sc.slow_eigenvalue).norm() < 1e-3 * ev[1].norm(), "{} vs {}", ev[1], sc.slow_eigenvalue);
    // The printed trace misses the overlap factor ‖Ψ‖²/(‖Ψ‖²−1).
    let n2 = ThreeLevel::from_model(&model).unwrap().psi().norm_squared();
    let printed = sc.d_spectrum.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
    assert!((printed * (n2 / (n2 - 1.0)) - sc.slow_eigenvalue).norm() < 2e-2 * sc.slow_eigenvalue.norm());
}

#[test]
fn ineffective_coupling_leaves_degeneracy() {
    let model = b0_model(1.0, 0.0, 1.0);
    let l = cheap_prime(&model);
    let sc = d_matrix_and_rates(&model, &l, 0.1).unwrap();
    assert_eq!(sc.psi0_entry().norm(), 0.0);
    // What remains is the O(ε) defect of the Gibbs direction.
    assert!(sc.slow_eigenvalue.norm() < 1e-2 * 0.01 * l.norm(), "{}", sc.slow_eigenvalue);
    assert_eq!(sc.predicted_psi0_entry, Some(0.0));
}

#[test]
fn doubling_lambda_quadruples_the_slow_eigenvalue() {
    let model = b0_model(1.0, 1.0, 1.0);
    let l = cheap_prime(&model);
    let a = d_matrix_and_rates(&model, &l, 0.05).unwrap();
    let b = d_matrix_and_rates(&model, &l, 0.1).unwrap();
    assert!((b.slow_eigenvalue - a.slow_eigenvalue * 4.0).norm() < 1e-10 * b.slow_eigenvalue.norm());
    assert!((b.slow_rate - 16.0 * a.slow_rate).abs() < 1e-10 * b.slow_rate);
}

#[test]
fn reduction_rejects_models_outside_its_hypothesis() {
    let small = SmallSystem::new(vec![0.0, 1.0, 1.0]).unwrap().with_basis_order(THREE_LEVEL_ORDER.to_vec()).unwrap();
    let g = DMatrix::from_row_slice(3, 3, &[re(0.0), re(1.0), re(0.5), re(1.0), re(0.0), re(1.0), re(0.5), re(1.0), re(0.0)]);
    let generic = OpenSystemModel::new(small, vec![Coupling { g, reservoir: bump(1.0) }]).unwrap();
    let l = DMatrix::zeros(5, 5);
    assert!(matches!(d_matrix_and_rates(&generic, &l, 0.1), Err(Error::InvalidArgument(_))));
    let two = OpenSystemModel::new(
        SmallSystem::new(vec![0.0, 0.0]).unwrap(),
        vec![Coupling { g: DMatrix::from_element(2, 2, re(0.3)), reservoir: bump(1.0) }],
    )
    .unwrap();
    assert!(d_matrix_and_rates(&two, &DMatrix::zeros(4, 4), 0.1).is_err());
}

#[test]
fn rate_exponents_are_four_and_two() {
    let model = b0_model(1.0, 1.0, 1.0);
    let l = cheap_prime(&model);
    let lambdas: Vec<f64> = (0..6).map(|k| 0.01 * 1.5f64.powi(k)).collect();
    let scan = rate_scan(&model, &l, &lambdas).unwrap();
    let slow: Vec<(f64, f64)> = scan.iter().map(|p| (p.lambda, p.slow_rate)).collect();
    let fast: Vec<(f64, f64)> = scan.iter().map(|p| (p.lambda, p.fast_rate)).collect();
    assert!((loglog_slope(&slow).unwrap() - 4.0).abs() < 1e-9);
    assert!((loglog_slope(&fast).unwrap() - 2.0).abs() < 1e-9);
    assert!(scan.iter().all(|p| p.slow_rate < p.fast_rate));
}

#[test]
fn loglog_slope_of_power_law() {
    let pts: Vec<(f64, f64)> = (1..8).map(|k| (k as f64, 3.0 * (k as f64).powf(2.5))).collect();
    assert!((loglog_slope(&pts).unwrap() - 2.5).abs() < 1e-12);
    assert_eq!(loglog_slope(&[(1.0, 1.0)]), None);
    assert_eq!(loglog_slope(&[(1.0, 1.0), (1.0, 2.0)]), None);
}
