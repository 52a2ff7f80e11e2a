//! The `compute`, `verify` and `oracle` commands.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use levelshift::error::Error;
use levelshift::higher::{d_matrix_and_rates, lambda0_prime_refined, PrimeSettings};
use levelshift::lso::{
    build_all, build_lso_eps, closed_form_2level, closed_form_3level, eigenvalues, kernel_of, three_level_spectrum,
    two_level_spectrum, verify_theorems_with, Check, Generator, LevelShiftOperator, OpenSystemModel, ThreeLevel,
    VerifyOptions,
};
use levelshift::oracle::{discretize, direct_lso_eps, feshbach_identity_check, gibbs_derivative_check, FeshbachInstance};
use levelshift::reservoir::{delta_weight, effective_shift, s_coupling, xi_eta, IrClass, Regularization};
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::config::LoadedConfig;
use crate::report::{
    complex_list, matrix, CheckOut, FourthOrderOut, ModelSummary, OperatorOut, Provenance, RefinementOut, RunReport,
    SectorOut, ThreeLevelOut, TwoLevelOut,
};
use crate::CliError;

/// ε values at which the Feshbach identities are checked. The middle
/// point makes the extrapolation to ε = 0 quadratic.
pub const FESHBACH_EPS: [f64; 3] = [1e-2, 1e-3, 1e-4];
/// Accepted residual of the exact Feshbach identities.
pub const FESHBACH_TOL: f64 = 1e-10;
/// Accepted residual of the extrapolated ε ↓ 0 statement.
pub const FESHBACH_LIMIT_TOL: f64 = 1e-6;
/// ε grid of the Gibbs-derivative check.
pub const GIBBS_EPS: [f64; 3] = [1e-1, 1e-2, 1e-3];
/// Accepted relative residual of the Gibbs-derivative identity.
pub const GIBBS_TOL: f64 = 1e-9;
/// Accepted entrywise deviation from the closed forms.
pub const CLOSED_FORM_TOL: f64 = 1e-6;

/// Records phase durations when enabled.
pub struct Timer {
    enabled: bool,
    start: Instant,
    phases: BTreeMap<String, f64>,
}

impl Timer {
    pub fn new(enabled: bool) -> Self {
        Timer { enabled, start: Instant::now(), phases: BTreeMap::new() }
    }

    pub fn lap(&mut self, phase: &str) {
        if self.enabled {
            let now = Instant::now();
            self.phases.insert(phase.to_string(), (now - self.start).as_secs_f64());
            self.start = now;
        }
    }

    pub fn finish(self) -> Option<BTreeMap<String, f64>> {
        self.enabled.then_some(self.phases)
    }
}

pub fn summary(cfg: &LoadedConfig, model: &OpenSystemModel) -> ModelSummary {
    ModelSummary {
        name: cfg.config.name.clone(),
        energies: model.small.energies().to_vec(),
        bohr_frequencies: model.small.bohr_frequencies().to_vec(),
        couplings: model.couplings.len(),
        generator: match model.generator {
            Generator::Standard => "standard".into(),
            Generator::CLiouville { reference_beta } => format!("c_liouville(reference_beta={reference_beta})"),
        },
        ir_class: format!("{:?}", model.ir_class()).to_lowercase(),
        coupling_constant: model.coupling_constant,
    }
}

fn report(command: &'static str, cfg: &LoadedConfig, model: &OpenSystemModel) -> RunReport {
    RunReport {
        command,
        provenance: Provenance::of(cfg),
        model: summary(cfg, model),
        sectors: vec![],
        three_level: None,
        two_level: None,
        fourth_order: None,
        checks: vec![],
        passed: true,
        timing: None,
    }
}

/// Largest entrywise difference of two operators on the same sector,
/// matching basis pairs rather than positions.
pub fn aligned_difference(a: &LevelShiftOperator, b: &LevelShiftOperator) -> f64 {
    let pairs = &a.sector.pairs;
    let mut worst = 0.0_f64;
    for (i, &p) in pairs.iter().enumerate() {
        for (j, &q) in pairs.iter().enumerate() {
            let (Some(bi), Some(bj)) = (b.sector.position(p), b.sector.position(q)) else {
                return f64::INFINITY;
            };
            worst = worst.max((a.matrix[(i, j)] - b.matrix[(bi, bj)]).norm());
        }
    }
    worst
}

fn zero_sector(ops: &[LevelShiftOperator]) -> &LevelShiftOperator {
    ops.iter().find(|l| l.sector.bohr_frequency == 0.0).expect("the zero sector always exists")
}

/// Closed-form comparison for three-level models with `Δ` inside the
/// support of the form factor.
pub fn three_level_section(model: &OpenSystemModel, zero: &LevelShiftOperator) -> Result<Option<ThreeLevelOut>, CliError> {
    let Some(tl) = ThreeLevel::from_model(model) else { return Ok(None) };
    let spec = &model.couplings[0].reservoir;
    if tl.delta >= spec.r_max() {
        return Ok(None);
    }
    let s = s_coupling(spec, tl.delta)?.value;
    let alpha = effective_shift(spec, tl.delta, &model.quadrature)?;
    let critical_delta = delta_weight(spec)?;
    let closed = closed_form_3level(tl.a, tl.b, tl.c, tl.beta, tl.delta, s, alpha, critical_delta)?;
    let spectrum = if critical_delta == 0.0 {
        three_level_spectrum(tl.a, tl.b, tl.beta, tl.delta, s, alpha).to_vec()
    } else {
        eigenvalues(&closed.matrix)?
    };
    Ok(Some(ThreeLevelOut {
        a: tl.a,
        b: tl.b,
        c: tl.c,
        beta: tl.beta,
        delta: tl.delta,
        s,
        alpha,
        critical_delta,
        max_entry_difference: aligned_difference(zero, &closed),
        closed_form: matrix(&closed.matrix),
        closed_form_spectrum: complex_list(&spectrum),
    }))
}

/// Closed-form comparison for a doubly degenerate two-level model.
pub fn two_level_section(model: &OpenSystemModel, zero: &LevelShiftOperator) -> Result<Option<TwoLevelOut>, CliError> {
    if model.small.dim() != 2 || model.small.bohr_frequencies().len() != 1 || model.couplings.len() != 1 {
        return Ok(None);
    }
    if model.generator != Generator::Standard {
        return Ok(None);
    }
    let spec = &model.couplings[0].reservoir;
    let g = &model.couplings[0].g;
    let (xi, eta) = xi_eta(spec, &model.quadrature)?;
    let gamma = spec.form_factor.ir_amplitude();
    let eta_alternative =
        if spec.ir_class() == IrClass::Critical { 2.0 * PI * PI * gamma * gamma / (3.0 * spec.beta) } else { 0.0 };
    let closed = closed_form_2level(g, xi, eta)?;
    let alternative = closed_form_2level(g, xi, eta_alternative)?;
    Ok(Some(TwoLevelOut {
        xi,
        eta,
        eta_alternative,
        closed_form_spectrum: complex_list(&two_level_spectrum(g, xi, eta)?),
        max_entry_difference: aligned_difference(zero, &closed),
        max_entry_difference_alternative: aligned_difference(zero, &alternative),
    }))
}

/// `compute`: operators of every sector, limit and ε grid, with spectra and
/// the kernel of the limit.
pub fn compute(cfg: &LoadedConfig, timing: bool) -> Result<RunReport, CliError> {
    let mut timer = Timer::new(timing);
    let model = cfg.config.build()?;
    let run = &cfg.config.run;
    let limit = build_all(&model, Regularization::Limit)?;
    timer.lap("limit");
    let mut eps_ops = Vec::new();
    for &eps in &run.eps_grid {
        eps_ops.push(build_all(&model, Regularization::Epsilon(eps))?);
    }
    timer.lap("eps_grid");
    let mut out = report("compute", cfg, &model);
    for (k, l) in limit.iter().enumerate() {
        let mut operators = vec![OperatorOut::new(l, &eigenvalues(&l.matrix)?, Some(&kernel_of(&l.matrix, run.kernel_tol)?))];
        for ops in &eps_ops {
            operators.push(OperatorOut::new(&ops[k], &eigenvalues(&ops[k].matrix)?, None));
        }
        out.sectors.push(SectorOut {
            bohr_frequency: l.sector.bohr_frequency,
            pairs: l.sector.pairs.iter().map(|&(i, j)| [i, j]).collect(),
            operators,
        });
    }
    timer.lap("spectra");
    let zero = zero_sector(&limit);
    out.three_level = three_level_section(&model, zero)?;
    out.two_level = two_level_section(&model, zero)?;
    timer.lap("closed_forms");
    out.timing = timer.finish();
    Ok(out)
}

fn closed_form_checks(model: &OpenSystemModel) -> Result<Vec<Check>, CliError> {
    let limit = match build_all(model, Regularization::Limit) {
        Ok(l) => l,
        Err(Error::NonexistentLso { .. }) => return Ok(vec![]),
        Err(e) => return Err(e.into()),
    };
    let zero = zero_sector(&limit);
    let scale = 1.0_f64.max(zero.norm());
    let mut checks = Vec::new();
    if let Some(t) = three_level_section(model, zero)? {
        checks.push(Check::measured(
            "three_level_closed_form",
            t.max_entry_difference,
            CLOSED_FORM_TOL * scale,
            format!("max entry difference {:.3e} (s = {:.6}, alpha = {:.6})", t.max_entry_difference, t.s, t.alpha),
        ));
    }
    if let Some(t) = two_level_section(model, zero)? {
        checks.push(Check::measured(
            "two_level_closed_form",
            t.max_entry_difference,
            CLOSED_FORM_TOL * scale,
            format!("max entry difference {:.3e} with xi = {:.6}, eta = {:.6}", t.max_entry_difference, t.xi, t.eta),
        ));
        if t.eta_alternative > 0.0 {
            checks.push(Check::not_applicable(
                "eta_constant",
                format!(
                    "eta = {:.6} (2π²γ²/β) matches the operator; the constant 2π²γ²/(3β) = {:.6} would leave \
                     a max entry difference {:.3e}",
                    t.eta, t.eta_alternative, t.max_entry_difference_alternative
                ),
            ));
        }
    }
    Ok(checks)
}

fn oracle_r_max(cfg: &LoadedConfig, model: &OpenSystemModel) -> f64 {
    cfg.config
        .run
        .oracle
        .r_max
        .unwrap_or_else(|| model.couplings.iter().map(|c| c.reservoir.r_max()).fold(0.0, f64::max))
}

/// Second-order oracle checks: equivalence with the finite-mode truncation
/// in every sector, the Feshbach identities and the Gibbs-derivative
/// identity.
pub fn oracle_checks(cfg: &LoadedConfig, model: &OpenSystemModel, timer: &mut Timer) -> Result<Vec<Check>, CliError> {
    let o = &cfg.config.run.oracle;
    let mut checks = Vec::new();
    let fm = discretize(model, o.n_modes, oracle_r_max(cfg, model))?;
    for &e in model.small.bohr_frequencies() {
        let direct = direct_lso_eps(&fm, e, o.eps)?;
        let built = build_lso_eps(model, e, o.eps)?;
        let r = (&direct - &built.matrix).norm() / (1.0 + built.norm());
        checks.push(Check::measured(
            format!("oracle_equivalence[e={e}]"),
            r,
            o.tolerance,
            format!("|Λ − Λ_oracle|/(1+|Λ|) = {r:.3e} at eps = {}, {} modes", o.eps, o.n_modes),
        ));
    }
    timer.lap("oracle_equivalence");

    let seed = cfg.config.run.seed;
    let mut worst = 0.0_f64;
    let mut worst_limit = 0.0_f64;
    for k in 0..o.feshbach_instances as u64 {
        let inst = FeshbachInstance::random(seed.wrapping_add(k))?;
        let rep = feshbach_identity_check(&inst, &FESHBACH_EPS)?;
        worst = worst.max(rep.max_residual());
        worst_limit = worst_limit.max(rep.limit_residual);
    }
    if o.feshbach_instances > 0 {
        let seeds = format!("seeds {seed}..{}", seed.wrapping_add(o.feshbach_instances as u64));
        checks.push(Check::measured(
            "feshbach_identity",
            worst,
            FESHBACH_TOL,
            format!("max residual {worst:.3e} over {} instances ({seeds})", o.feshbach_instances),
        ));
        checks.push(Check::measured(
            "feshbach_limit",
            worst_limit,
            FESHBACH_LIMIT_TOL,
            format!("max extrapolated residual {worst_limit:.3e} ({seeds})"),
        ));
    }
    timer.lap("feshbach");

    if model.couplings.len() == 1 && model.generator == Generator::Standard && o.gibbs_modes > 0 {
        let small_fm = discretize(model, o.gibbs_modes, oracle_r_max(cfg, model))?;
        let rep = gibbs_derivative_check(&small_fm, &GIBBS_EPS)?;
        let im: Vec<String> = rep.entries.iter().map(|e| format!("{:e}:{:.3e}", e.eps, e.im_part_norm)).collect();
        checks.push(Check::measured(
            "gibbs_derivative_identity",
            rep.max_relative_residual(),
            GIBBS_TOL,
            format!(
                "truncation of dimension {} with {} modes; |Im Λ(ε) Ω| by ε [{}]",
                rep.dim,
                o.gibbs_modes,
                im.join(", ")
            ),
        ));
    } else {
        checks.push(Check::not_applicable(
            "gibbs_derivative_identity",
            "needs a single coupling under the standard interaction",
        ));
    }
    timer.lap("gibbs_derivative");
    Ok(checks)
}

fn finish(mut out: RunReport, checks: &[Check], timer: Timer) -> RunReport {
    out.checks = checks.iter().map(CheckOut::from).collect();
    out.passed = out.checks.iter().all(CheckOut::passed);
    out.timing = timer.finish();
    out
}

/// `verify`: the structural checks, the closed forms and the second-order
/// oracle checks.
pub fn verify(cfg: &LoadedConfig, corrupt_fixture: bool, timing: bool) -> Result<RunReport, CliError> {
    let mut timer = Timer::new(timing);
    let model = cfg.config.build()?;
    let run = &cfg.config.run;
    let opts = VerifyOptions { kernel_tol: run.kernel_tol, corrupt_fixture, ..VerifyOptions::default() };
    let spectral = verify_theorems_with(&model, &run.eps_grid, &opts)?;
    timer.lap("theorems");
    let mut checks = spectral.checks.clone();
    checks.extend(closed_form_checks(&model)?);
    timer.lap("closed_forms");
    checks.extend(oracle_checks(cfg, &model, &mut timer)?);
    let out = report("verify", cfg, &model);
    Ok(finish(out, &checks, timer))
}

/// `oracle`: the second-order oracle checks and, for the `b = 0`
/// three-level model, the fourth-order analysis.
pub fn oracle(cfg: &LoadedConfig, timing: bool) -> Result<RunReport, CliError> {
    let mut timer = Timer::new(timing);
    let model = cfg.config.build()?;
    let mut checks = oracle_checks(cfg, &model, &mut timer)?;
    let mut out = report("oracle", cfg, &model);
    match ThreeLevel::from_model(&model) {
        Some(tl) if tl.b == 0.0 => {
            let (fourth, fourth_checks) = fourth_order(cfg, &model, &tl)?;
            out.fourth_order = Some(fourth);
            checks.extend(fourth_checks);
            timer.lap("fourth_order");
        }
        _ => checks.push(Check::not_applicable("fourth_order", "needs the three-level model with b = 0")),
    }
    Ok(finish(out, &checks, timer))
}

fn inner(u: &nalgebra::DVector<Complex64>, m: &DMatrix<Complex64>, v: &nalgebra::DVector<Complex64>) -> Complex64 {
    u.dotc(&(m * v))
}

/// Refined `Λ_0′` with the orthogonality checks and the comparison of
/// `Im⟨Ψ_0, Λ_0′Ψ_0⟩` with `a²c²ξ₁(Δ) + c⁴ξ₂`.
pub fn fourth_order(
    cfg: &LoadedConfig,
    model: &OpenSystemModel,
    tl: &ThreeLevel,
) -> Result<(FourthOrderOut, Vec<Check>), CliError> {
    let f = &cfg.config.run.fourth_order;
    let psi0 = ThreeLevel::psi0();
    let settings = PrimeSettings {
        n_modes: f.n_modes,
        r_max: cfg.config.run.oracle.r_max,
        eps_grid: f.eps_grid.clone(),
        max_levels: f.max_levels,
        rel_tol: f.rel_tol,
        probe: Some((psi0.clone(), psi0.clone())),
    };
    let prime = lambda0_prime_refined(model, &settings)?;
    let x = &prime.matrix;
    let norm = x.norm();
    let psi = tl.psi();
    let psi_psi = inner(&psi, x, &psi);
    let psi0_psi = inner(&psi0, x, &psi);
    let psi0_psi0 = inner(&psi0, x, &psi0);
    let sc = d_matrix_and_rates(model, x, model.coupling_constant)?;

    let last_change = prime.trace.last().and_then(|s| s.relative_change).unwrap_or(f64::INFINITY);
    let mut checks = vec![
        Check::measured(
            "fourth_order_converged",
            if prime.converged { 0.0 } else { last_change },
            if prime.converged { 0.0 } else { f.rel_tol },
            prime.trace_summary(),
        ),
        Check::measured(
            "fourth_order_psi_psi",
            psi_psi.norm(),
            f.tolerance * norm,
            format!("|<Ψ, Λ_0′Ψ>| = {:.3e}, |Λ_0′| = {norm:.6}", psi_psi.norm()),
        ),
        Check::measured(
            "fourth_order_psi0_psi",
            psi0_psi.norm(),
            f.tolerance * norm,
            format!("|<Ψ_0, Λ_0′Ψ>| = {:.3e}, |Λ_0′| = {norm:.6}", psi0_psi.norm()),
        ),
    ];
    match sc.predicted_psi0_entry {
        Some(pred) => {
            let rel = (psi0_psi0.im - pred).abs() / pred.abs().max(f64::MIN_POSITIVE);
            checks.push(Check::measured(
                "fourth_order_xi_formula",
                rel,
                f.tolerance,
                format!(
                    "Im<Ψ_0, Λ_0′Ψ_0> = {:.6} against a²c²ξ₁ + c⁴ξ₂ = {pred:.6} (ξ₁ = {:.6}, ξ₂ = {:.6})",
                    psi0_psi0.im,
                    sc.xi1.unwrap_or(f64::NAN),
                    sc.xi2
                ),
            ));
        }
        None => checks.push(Check::not_applicable(
            "fourth_order_xi_formula",
            format!("ξ₁ diverges for p = {}", model.couplings[0].reservoir.form_factor.ir_exponent()),
        )),
    }
    let out = FourthOrderOut {
        converged: prime.converged,
        refinement: prime
            .trace
            .iter()
            .map(|s| RefinementOut {
                n_modes: s.n_modes,
                eps_grid: s.eps_grid.clone(),
                norm: s.norm,
                probe: s.probe.map(Into::into),
                relative_change: s.relative_change,
            })
            .collect(),
        lambda0_prime: matrix(x),
        norm,
        psi_psi: psi_psi.into(),
        psi0_psi: psi0_psi.into(),
        psi0_psi0: psi0_psi0.into(),
        xi1: sc.xi1,
        xi2: sc.xi2,
        predicted_psi0_entry: sc.predicted_psi0_entry,
        lambda: sc.lambda,
        d_matrix: matrix(&sc.d_matrix),
        d_spectrum: complex_list(&sc.d_spectrum),
        reduced_matrix: matrix(&sc.reduced_matrix),
        slow_eigenvalue: sc.slow_eigenvalue.into(),
        slow_rate: sc.slow_rate,
        fast_rates: sc.fast_rates.clone(),
    };
    Ok((out, checks))
}
