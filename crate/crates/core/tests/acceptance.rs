//! Acceptance suite: one test per criterion, each printing a PASS line
//! (run with `cargo test --test acceptance -- --nocapture` to see them).
//!
//! Desk scale throughout: nu = 1, cutoff N = 32 for the chart scenarios,
//! golden-ratio frequency, gamma = 0.01, iota = 4. The certified smallness
//! thresholds are far more conservative than these prescribed scenario
//! sizes, so the runs raise the guard and rely on the residual checks.

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use nullcoord_core::chart::{
    build_chart, build_chart_no_parity, eikonal_residuals, solve_uv, verify_metric_form, NullChart,
};
use nullcoord_core::dioph::{measure_complement, FrequencyVector};
use nullcoord_core::kg::{
    estimate_g_norms, remove_time_derivative, time_removal_identity_residual,
    transform_coefficients, two_sided_residual, KGCoefficients, ReduceStage, ReducedKG,
};
use nullcoord_core::psdo::{
    exp_conjugate, make_h_symbol, reflect_symbol, solve_symbol_d, to_first_order, vee_transform,
    ModeBasis,
};
use nullcoord_core::straighten::{
    straighten_collocation, straighten_newton, StraightenConfig,
};
use nullcoord_core::wave::{
    almost_periodic_check, dispersion_residual, dispersion_roots, evolve_wave, EvolveOptions,
};
use nullcoord_core::{Parity, ParityClass, SobolevIndex, TorusFunction};

const GAMMA: f64 = 0.01;
const CUTOFF: usize = 32;

fn golden() -> FrequencyVector {
    FrequencyVector::golden(1, GAMMA)
}

/// The prescribed scenarios exceed the certified eta* by construction
/// (AC-1's delta is 2.5), and the s1-norm of any full-box function amplifies
/// machine-level spectral dust by bracket^{s1} ~ 1e24 at this cutoff. The
/// guard is configured off here; the residual checks carry the verification.
fn cfg() -> StraightenConfig {
    StraightenConfig { smallness_threshold: f64::INFINITY, ..Default::default() }
}

fn s0() -> SobolevIndex {
    SobolevIndex(nullcoord_core::default_s0(1))
}

/// `1 + eps cos(phi) cos(x)` at the acceptance cutoff.
fn ac_metric(eps: f64) -> TorusFunction {
    TorusFunction::from_modes(
        1,
        CUTOFF,
        true,
        &[
            (vec![0], 0, Complex64::new(1.0, 0.0)),
            (vec![1], 1, Complex64::new(eps / 4.0, 0.0)),
            (vec![1], -1, Complex64::new(eps / 4.0, 0.0)),
        ],
    )
    .unwrap()
}

/// AC-1/AC-2 share one chart build; the suite runs single-threaded on the
/// test binary so a OnceLock is enough.
fn ac1_chart() -> &'static (TorusFunction, NullChart, f64) {
    static CHART: OnceLock<(TorusFunction, NullChart, f64)> = OnceLock::new();
    CHART.get_or_init(|| {
        let a = ac_metric(0.05);
        let w = golden();
        let (u, v, m) = solve_uv(&a, &w, &cfg()).expect("AC-1 chart must build");
        let chart = build_chart(&a, &u, &v, m, &w).expect("AC-1 chart must assemble");
        (a, chart, m)
    })
}

#[test]
fn ac01_eikonal_chart() {
    let (a, chart, m) = ac1_chart();
    let w = golden();
    let (ru, rv) = eikonal_residuals(a, &chart.u, &chart.v, 1.0 / m, 1.0 / m, &w).unwrap();
    assert!(ru <= 1e-9 && rv <= 1e-9, "eikonal residuals {ru:.2e}, {rv:.2e}");
    let rt = chart.round_trip_error().unwrap();
    assert!(rt <= 1e-9, "Psi o Psi^-1 node error {rt:.2e}");
    println!(
        "AC-1 eikonal/chart: PASS (residuals {ru:.2e}/{rv:.2e}, round trip {rt:.2e})"
    );
}

#[test]
fn ac02_conformal_flatness() {
    let (a, chart, _m) = ac1_chart();
    let rep = verify_metric_form(chart, a, 1e-8).unwrap();
    let alpha = chart.alpha();
    assert!(rep.max_cross <= 1e-8, "|g_tauR| = {:.2e}", rep.max_cross);
    // |g_tt/g_RR + alpha^-2| pointwise
    assert!(
        rep.max_tt_ratio_dev <= 1e-8,
        "|g_tt/g_RR + {:.6}| = {:.2e}",
        1.0 / (alpha * alpha),
        rep.max_tt_ratio_dev
    );
    println!(
        "AC-2 conformal flatness: PASS (cross {:.2e}, ratio dev {:.2e})",
        rep.max_cross, rep.max_tt_ratio_dev
    );
}

#[test]
fn ac03_oracle_equivalence() {
    let w = golden();
    let mut rng = ChaCha8Rng::seed_from_u64(314159);
    let mut worst_beta = 0.0f64;
    let mut worst_m = 0.0f64;
    for _ in 0..10 {
        let a0 = TorusFunction::random(1, 14, 2, 0.7, 0.05 * GAMMA, &mut rng);
        let newton = straighten_newton(&a0, &w, &cfg()).unwrap();
        let direct = straighten_collocation(&a0, &w).unwrap();
        worst_m = worst_m.max((newton.m_inf - direct.m_inf).abs());
        worst_beta = worst_beta
            .max(newton.beta.sub(&direct.beta).unwrap().sobolev_norm(s0()));
    }
    assert!(worst_beta <= 1e-8, "beta disagreement {worst_beta:.2e}");
    assert!(worst_m <= 1e-9, "m disagreement {worst_m:.2e}");

    // the x-only cosine case against the quadrature value
    let eps = 0.1;
    let a0 = TorusFunction::from_modes(
        1,
        16,
        true,
        &[(vec![0], 1, Complex64::new(eps / 2.0, 0.0))],
    )
    .unwrap();
    let wq = FrequencyVector::golden(1, 0.1);
    let r = straighten_newton(&a0, &wq, &cfg()).unwrap();
    let exact = (1.0 - eps * eps).sqrt();
    assert!((r.m_inf - exact).abs() <= 1e-9, "quadrature case: {} vs {exact}", r.m_inf);
    println!(
        "AC-3 oracle equivalence: PASS (beta {worst_beta:.2e}, m {worst_m:.2e}, cosine case {:.2e})",
        (r.m_inf - exact).abs()
    );
}

/// Shared small KG setup for AC-4/5/6: ring-1 shapes in the declared parity
/// classes, each |.|_{s1} <= 0.02.
fn ac_kg_coeffs() -> KGCoefficients {
    let c = 0.02;
    let bxx = TorusFunction::from_modes(
        1,
        CUTOFF,
        true,
        &[
            (vec![1], 1, Complex64::new(c / 4.0, 0.0)),
            (vec![1], -1, Complex64::new(c / 4.0, 0.0)),
        ],
    )
    .unwrap();
    // even phi, odd x: cos(phi) sin(x)
    let bx = TorusFunction::from_modes(
        1,
        CUTOFF,
        true,
        &[
            (vec![1], 1, Complex64::new(0.0, -c / 4.0)),
            (vec![1], -1, Complex64::new(0.0, c / 4.0)),
        ],
    )
    .unwrap();
    // odd phi, even x: sin(phi) cos(x)
    let bt = TorusFunction::from_modes(
        1,
        CUTOFF,
        true,
        &[
            (vec![1], 1, Complex64::new(0.0, -c / 4.0)),
            (vec![1], -1, Complex64::new(0.0, -c / 4.0)),
        ],
    )
    .unwrap();
    let b = TorusFunction::from_modes(
        1,
        CUTOFF,
        true,
        &[
            (vec![0], 1, Complex64::new(c / 4.0, 0.0)),
            (vec![1], 1, Complex64::new(c / 8.0, 0.0)),
            (vec![1], -1, Complex64::new(c / 8.0, 0.0)),
        ],
    )
    .unwrap();
    KGCoefficients { bxx, bx, bt, b, mass: 1.0 }
}

fn ac_kg_pipeline() -> &'static (KGCoefficients, NullChart, ReducedKG, ReducedKG) {
    static PIPE: OnceLock<(KGCoefficients, NullChart, ReducedKG, ReducedKG)> = OnceLock::new();
    PIPE.get_or_init(|| {
        let coeffs = ac_kg_coeffs();
        let w = golden();
        let (a, _, _, _) = nullcoord_core::kg::geometric_split(&coeffs, &w).unwrap();
        let (u, v, m) = solve_uv(&a, &w, &cfg()).unwrap();
        let chart = build_chart(&a, &u, &v, m, &w).unwrap();
        let rk = transform_coefficients(&coeffs, &chart, &w).unwrap();
        let removed = remove_time_derivative(&rk, &w).unwrap();
        (coeffs, chart, rk, removed)
    })
}

#[test]
fn ac04_parity_reversibility_suite() {
    let (a, chart, _) = ac1_chart();
    let w = golden();
    let mut worst = 0.0f64;

    // Theorem bullets: the chart preserves the four parity classes
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    for (p, x) in [
        (Parity::Even, Parity::Even),
        (Parity::Even, Parity::Odd),
        (Parity::Odd, Parity::Even),
        (Parity::Odd, Parity::Odd),
    ] {
        let class = ParityClass::new(p, x);
        let f = TorusFunction::random_with_parity(1, CUTOFF, 4, 0.7, 1.0, class, &mut rng);
        worst = worst.max(chart.push(&f).unwrap().parity_violation(class));
    }

    // U/V identities
    worst = worst.max(
        chart.v.sub(&chart.u.reflect_x()).unwrap().sobolev_norm(SobolevIndex(0.0)),
    );
    worst = worst.max(
        chart.v.add(&chart.u.reflect_phi()).unwrap().sobolev_norm(SobolevIndex(0.0)),
    );

    // conformal factor is even-even
    worst = worst.max(chart.conformal_sq.parity_violation(ParityClass::EVEN_EVEN));
    let _ = (a, w);


    // transported KG coefficients carry their classes, and the
    // multiplication operator stage preserves them
    let (_coeffs, _chart2, rk, removed) = ac_kg_pipeline();
    let (vr, vt, vg) = rk.parity_violations();
    worst = worst.max(vr).max(vt).max(vg);
    let p_fun = removed.p.as_ref().unwrap();
    worst = worst.max(p_fun.parity_violation(ParityClass::EVEN_EVEN));
    let g2r = removed.gr.sub(removed.g2_r.as_ref().unwrap()).unwrap();
    worst = worst.max(g2r.parity_violation(ParityClass::EVEN_ODD));
    let gp = removed.g2.as_ref().unwrap().sub(&removed.g).unwrap();
    worst = worst.max(gp.parity_violation(ParityClass::EVEN_EVEN));

    assert!(worst <= 1e-9, "parity/reversibility violation {worst:.2e}");
    println!("AC-4 parity/reversibility suite: PASS (max violation {worst:.2e})");
}

#[test]
fn ac05_manufactured_kg_equivalence() {
    let (coeffs, chart, rk, _) = ac_kg_pipeline();
    let w = golden();
    let mut rng = ChaCha8Rng::seed_from_u64(141421);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let phi = TorusFunction::random(1, CUTOFF, 4, 0.7, 1.0, &mut rng);
        worst = worst.max(two_sided_residual(coeffs, chart, rk, &phi, &w).unwrap());
    }
    assert!(worst <= 1e-8, "two-sided manufactured residual {worst:.2e}");
    println!("AC-5 manufactured KG equivalence: PASS (max residual {worst:.2e})");
}

#[test]
fn ac06_time_derivative_removal() {
    let (_, _, _, removed) = ac_kg_pipeline();
    let w = golden();
    assert_eq!(removed.stage, ReduceStage::TimeRemoved);
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(173205);
    for _ in 0..5 {
        let h = TorusFunction::random(1, CUTOFF, 4, 0.7, 1.0, &mut rng);
        worst = worst.max(time_removal_identity_residual(removed, &h, &w).unwrap());
    }
    assert!(worst <= 1e-9, "operator identity residual {worst:.2e}");

    // null-form special case: G^tau = d_tau F, G^R = -alpha^-2 d_R F
    let alpha = removed.alpha;
    let mut f = TorusFunction::random_with_parity(
        1,
        16,
        3,
        0.7,
        5e-3,
        ParityClass::EVEN_EVEN,
        &mut rng,
    );
    for (m, _c) in f.clone().iter_modes() {
        if m[0] == 0 {
            f.set_coeff(&m[..1], m[1], Complex64::new(0.0, 0.0)).unwrap();
        }
    }
    let nf = ReducedKG {
        stage: ReduceStage::Geometric,
        alpha,
        mass: 1.0,
        gr: f.derivative(nullcoord_core::torus::Dir::X).scale(-1.0 / (alpha * alpha)),
        gtau: f.omega_grad_phi(&w.omega),
        g: TorusFunction::zero(1, 16, true),
        p: None,
        g2_r: None,
        g2: None,
    };
    let nf_removed = remove_time_derivative(&nf, &w).unwrap();
    let leftover = nf_removed.g2_r.as_ref().unwrap().linf_norm();
    assert!(leftover <= 1e-8, "null-form leftover {leftover:.2e}");
    println!(
        "AC-6 time-derivative removal: PASS (identity {worst:.2e}, null form {leftover:.2e})"
    );
}

#[test]
fn ac07_psdo_reduction() {
    let w = golden();
    let (alpha, mass) = (1.0, 1.0);
    let basis = ModeBasis::new(1, 4, 16);

    // G^R even in phi / odd in R, normalized to |.|_{s0} = 0.02
    let mut rng = ChaCha8Rng::seed_from_u64(577215);
    let raw = TorusFunction::random_with_parity(1, 6, 3, 0.6, 1.0, ParityClass::EVEN_ODD, &mut rng);
    let gr = raw.scale(0.02 / raw.sobolev_norm(s0()));
    let g = TorusFunction::random_with_parity(1, 6, 2, 0.6, 0.01, ParityClass::EVEN_EVEN, &mut rng);

    let rk = ReducedKG {
        stage: ReduceStage::TimeRemoved,
        alpha,
        mass,
        gr: gr.clone(),
        gtau: TorusFunction::zero(1, 6, true),
        g: g.clone(),
        p: Some(TorusFunction::constant(1, 6, 1.0)),
        g2_r: Some(gr.clone()),
        g2: Some(g),
    };
    let (d1, d0, dm1) = to_first_order(&rk, basis).unwrap();
    let (v, v_inv) = vee_transform(&gr, mass, basis, 0.05).unwrap();
    let h = make_h_symbol(&gr, mass, basis.n_x);
    let (d, _rep) = solve_symbol_d(&h, &w, alpha, mass).unwrap();
    let (m, m_inv, _, _) = exp_conjugate(&d, &h, &w, alpha, mass, basis).unwrap();
    let du = reflect_symbol(&d);
    let (mu, mu_inv, _, _) = exp_conjugate(&du, &h, &w, alpha, mass, basis).unwrap();
    let total = nullcoord_core::psdo::assemble_t(
        &v, &v_inv, &m, &m_inv, &mu, &mu_inv, &d1, &d0, &dm1, &w,
    )
    .unwrap();

    let order = total.residual_order.fitted_order;
    assert!(order <= -0.7, "transformed generator minus D1 has order {order:.3}");
    let patterns = total
        .t
        .real_to_real_violation()
        .max(total.t.parity_violation())
        .max(total.t.reversibility_violation());
    assert!(patterns <= 1e-12, "T patterns violated by {patterns:.2e}");
    assert!(total.inverse_residual <= 1e-10, "T T^-1 residual {:.2e}", total.inverse_residual);
    println!(
        "AC-7 pseudo-differential reduction: PASS (order {order:.2}, patterns {patterns:.1e}, TT^-1 {:.1e})",
        total.inverse_residual
    );
}

#[test]
fn ac08_diophantine_measure() {
    let gammas = [0.2, 0.1, 0.05, 0.01];
    let rows = measure_complement(&[1.0], &[2.0], |_| 1.0, &gammas, 4.0, 10_000, 64, 20260809);
    for pair in rows.windows(2) {
        assert!(
            pair[1].fraction_excluded < pair[0].fraction_excluded,
            "fractions must strictly decrease: {} !> {}",
            pair[0].fraction_excluded,
            pair[1].fraction_excluded
        );
    }
    let fr: Vec<f64> = rows.iter().map(|r| r.fraction_excluded).collect();
    println!("AC-8 diophantine measure: PASS (fractions {fr:?})");
}

#[test]
fn ac09_no_parity_sobolev_stability() {
    // A = 1 + eps cos(phi + x) with delta = gamma^-1 |A - 1|_{s1} = 0.05
    let eps = 0.05 * GAMMA * 2f64.sqrt();
    let a = TorusFunction::from_modes(
        1,
        CUTOFF,
        true,
        &[
            (vec![0], 0, Complex64::new(1.0, 0.0)),
            (vec![1], 1, Complex64::new(eps / 2.0, 0.0)),
        ],
    )
    .unwrap();
    let w = golden();
    let chart = build_chart_no_parity(&a, &w, &cfg()).unwrap();

    // dispersion roots back-substitute into the stated quadratic
    let mut worst_disp = 0.0f64;
    for k in [1.0, 2.0, 8.0, 32.0] {
        let (wp, wm) = dispersion_roots(chart.rho_plus, chart.rho_minus, k);
        worst_disp = worst_disp
            .max(dispersion_residual(chart.rho_plus, chart.rho_minus, k, wp) / (k * k))
            .max(dispersion_residual(chart.rho_plus, chart.rho_minus, k, wm) / (k * k));
    }
    assert!(worst_disp <= 1e-12, "dispersion back-substitution {worst_disp:.2e}");

    // leapfrog to T = 1000 with dense snapshots for the projection window
    let n = 128;
    let s0v = nullcoord_core::default_s0(1);
    let mut opts = EvolveOptions::new(1000.0, 0.01, n);
    opts.snapshot_until = 40.0;
    opts.norm_stride = 100;
    opts.s = s0v;
    opts.mode_cap = 24;
    let f: Vec<f64> = (0..n)
        .map(|k| {
            let x = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            x.cos() + 0.4 * (2.0 * x).cos() + 0.1 * (3.0 * x).sin()
        })
        .collect();
    let g: Vec<f64> = (0..n)
        .map(|k| {
            let x = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            0.3 * x.sin() - 0.1 * (2.0 * x).sin()
        })
        .collect();
    let state = evolve_wave(&a, &w, &f, &g, &opts).unwrap();
    let ratio = state.sup_norm_ratio();
    assert!(ratio <= 10.0, "sup norm ratio {ratio}");

    let rep = almost_periodic_check(&state, &chart, 64, 8).unwrap();
    assert!(rep.residual_fraction <= 1e-4, "projection residual {:.2e}", rep.residual_fraction);
    println!(
        "AC-9 no-parity Sobolev stability: PASS (ratio {ratio:.3}, projection {:.2e}, dispersion {worst_disp:.1e})",
        rep.residual_fraction
    );
}

#[test]
fn ac10_tame_estimate_shadows() {
    let w = golden();
    let s = s0();
    let iota = w.iota;
    let mu = s.0 + 2.0 * iota + 4.0;
    let cut = 16usize;

    // bracket-1 shapes only: at these loss exponents (s + mu ~ 26) any
    // higher-mode content inflates the bound side by bracket^{26} and the
    // fitted constant would just measure that weight, not the estimate
    let shape = TorusFunction::from_modes(
        1,
        cut,
        true,
        &[
            (vec![1], 1, Complex64::new(0.25, 0.0)),
            (vec![1], -1, Complex64::new(0.25, 0.0)),
            (vec![0], 1, Complex64::new(0.1, 0.0)),
            (vec![1], 0, Complex64::new(0.08, 0.0)),
        ],
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(662607);
    let h_samples: Vec<TorusFunction> =
        (0..3).map(|_| TorusFunction::random(1, cut, 4, 0.7, 1.0, &mut rng)).collect();

    let mut ratios: Vec<Vec<f64>> = vec![Vec::new(); 5];
    let eps_list: Vec<f64> = (0..10).map(|k| 1e-5 * 10f64.powf(k as f64 / 6.0)).collect();
    for &eps in &eps_list {
        let a = shape.scale(eps).add_constant(1.0);
        let (u, v, m) = solve_uv(&a, &w, &cfg()).unwrap();
        let chart = build_chart(&a, &u, &v, m, &w).unwrap();
        let a_minus_1 = a.add_constant(-1.0);

        // es:UVth
        let lhs = u.sobolev_norm(s) + v.sobolev_norm(s);
        let rhs = a_minus_1.sobolev_norm(SobolevIndex(s.0 + 2.0 * iota + 4.0)) / GAMMA;
        ratios[0].push(lhs / rhs);

        // es:tameth over the sample functions
        let mut c_tame = 0.0f64;
        for h in &h_samples {
            let pushed = chart.push(h).unwrap();
            let lhs = pushed.sobolev_norm(s);
            let rhs = h.sobolev_norm(s)
                + a_minus_1.sobolev_norm(SobolevIndex(s.0 + mu)) / GAMMA
                    * h.sobolev_norm(SobolevIndex(1.0));
            c_tame = c_tame.max(lhs / rhs);
        }
        ratios[1].push(c_tame);

        // es:confor
        let lhs = chart.conformal_sq.add_constant(-1.0).sobolev_norm(s);
        let rhs = a_minus_1.sobolev_norm(SobolevIndex(s.0 + mu));
        ratios[2].push(lhs / rhs);

        // es:mathcalg through the KG pipeline with B-coefficients eps-scaled
        let coeffs = KGCoefficients {
            bxx: shape.parity_project(ParityClass::EVEN_EVEN).scale(eps),
            bx: shape.parity_project(ParityClass::EVEN_ODD).scale(eps),
            bt: shape.parity_project(ParityClass::ODD_EVEN).scale(eps),
            b: shape.parity_project(ParityClass::EVEN_EVEN).scale(eps),
            mass: 1.0,
        };
        let (a_kg, _, _, _) = nullcoord_core::kg::geometric_split(&coeffs, &w).unwrap();
        let (u2, v2, m2) = solve_uv(&a_kg, &w, &cfg()).unwrap();
        let chart2 = build_chart(&a_kg, &u2, &v2, m2, &w).unwrap();
        let rk = transform_coefficients(&coeffs, &chart2, &w).unwrap();
        let rows = estimate_g_norms(&rk, &coeffs, &w);
        ratios[3].push(rows[0].ratio);

        // es:mathcalgp through the removal stage
        let removed = remove_time_derivative(&rk, &w).unwrap();
        let g2r = removed.gr.sub(removed.g2_r.as_ref().unwrap()).unwrap();
        let gp = removed.g2.as_ref().unwrap().sub(&removed.g).unwrap();
        let p1 = removed.p.as_ref().unwrap().add_constant(-1.0);
        let lhs = g2r.sobolev_norm(s) + gp.sobolev_norm(s) + p1.sobolev_norm(s);
        let shifted = SobolevIndex(s.0 + s.0 + 3.0 * iota + 7.0);
        let rhs = [&coeffs.bxx, &coeffs.bx, &coeffs.bt, &coeffs.b]
            .iter()
            .map(|f| f.sobolev_norm(shifted) / GAMMA)
            .fold(0.0, f64::max);
        ratios[4].push(lhs / rhs);
    }

    let labels = ["es:UVth", "es:tameth", "es:confor", "es:mathcalg", "es:mathcalgp"];
    let mut spreads = Vec::new();
    for (label, rs) in labels.iter().zip(&ratios) {
        let max = rs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = rs.iter().cloned().fold(f64::INFINITY, f64::min);
        let spread = max / min - 1.0;
        assert!(
            spread <= 0.2,
            "{label}: fitted constant drifts by {:.1}% across the scaling family",
            spread * 100.0
        );
        spreads.push(format!("{label} C = {max:.3} (+-{:.1}%)", spread * 100.0));
    }
    println!("AC-10 tame-estimate shadows: PASS ({})", spreads.join(", "));
}
