mod common;

use common::certified;
use lqropt_core::dare::{dare_residual, riccati_gain};
use lqropt_core::instances::paper_sec5;
use lqropt_core::matlin::{lambda_max, solve_dlyap_transpose, spectral_norm};
use lqropt_core::policy::hewer_gain;
use lqropt_core::{
    classify_gain, evaluate_gain, run_from, run_recorded, verify_global_optimality, Error, Mat, Method,
    RateModel, StopRule,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn riccati_fixed_point_is_consistent() {
    for (p, star) in certified(5, 20) {
        let scale = 1.0 + star.xstar.norm();
        for w in star.value_iterates.windows(2) {
            let drop = lambda_max(&(&w[1] - &w[0])).unwrap();
            assert!(drop <= 1e-9 * (1.0 + w[0].norm()), "value matrices increased by {drop}");
        }
        let at_star = evaluate_gain(&p, &star.kstar).unwrap();
        assert!((&at_star.x - &star.xstar).norm() <= 1e-9 * scale);
        assert!(at_star.n.norm() <= 1e-8);
        assert!(dare_residual(&p, &star.xstar).unwrap() <= 1e-10 * scale);
        let lyap = solve_dlyap_transpose(&p.closed_loop(&star.kstar), &p.stage_weight(&star.kstar)).unwrap();
        assert!((lyap - &star.xstar).norm() <= 1e-9 * scale);
        assert!((riccati_gain(&p, &star.xstar).unwrap() - &star.kstar).norm() <= 1e-10 * (1.0 + star.kstar.norm()));
    }
}

#[test]
fn optimum_beats_sampled_stabilizing_gains() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (p, star) in certified(8, 5) {
        let report = verify_global_optimality(&p, &star, 200, &mut rng).unwrap();
        assert!(report.passed(), "{report:?}");
    }
}

#[test]
fn quasi_newton_is_the_riccati_fixed_point() {
    let stop = StopRule { grad_tol: 1e-12, max_iter: 50 };
    for (p, star) in certified(9, 20) {
        let trace = run_from(&p, &Mat::zeros(p.m(), p.n()), Method::Qn, &star, stop).unwrap();
        assert!(trace.converged);
        for w in trace.records.windows(2) {
            let expected = hewer_gain(&p, &w[0].k).unwrap();
            assert!((&w[1].k - expected).norm() <= 1e-10 * (1.0 + w[1].k.norm()));
        }
    }
}

#[test]
fn all_methods_stay_stabilizing_and_monotone() {
    let instances = certified(1, 50);
    for (idx, (p, star)) in instances.iter().enumerate() {
        let k0 = classify_gain(p, &Mat::zeros(p.m(), p.n())).unwrap();
        for kind in Method::ALL {
            let max_iter = if kind == Method::Gd { 300 } else { 500 };
            let outcome = run_recorded(p, &k0, kind, Some(star), StopRule { grad_tol: 1e-10, max_iter }).unwrap();
            assert!(outcome.failure.is_none(), "instance {idx} {kind}: {:?}", outcome.failure);
            let trace = &outcome.trace;
            assert!(trace.records.iter().all(|r| r.rho < 1.0));
            let violations = trace.invariant_violations();
            assert!(violations.is_empty(), "instance {idx} {kind}: {violations:?}");
            if kind == Method::Qn {
                assert!(trace.converged, "instance {idx} {kind} did not converge");
            } else if trace.iterations() > 0 {
                assert!(trace.last().cost < trace.records[0].cost);
            }
        }
    }
}

#[test]
fn gd_steps_respect_perturbation_bound() {
    for (p, star) in certified(13, 10) {
        let trace = run_from(&p, &Mat::zeros(p.m(), p.n()), Method::Gd, &star, StopRule { grad_tol: 1e-10, max_iter: 100 })
            .unwrap();
        for r in &trace.records {
            let Some(gd) = &r.gd else { continue };
            assert!(gd.phi >= -1e-10);
            if let Some(c) = gd.constants {
                if c.eta <= c.eta0 {
                    assert!(gd.y_eta_norm <= c.beta0 * gd.y_norm * (1.0 + 1e-8));
                }
                assert!(c.eta >= 1e-12);
            }
            assert_eq!(gd.y_norm, spectral_norm(&evaluate_gain(&p, &r.k).unwrap().y));
        }
    }
}

#[test]
fn natural_gradient_linear_envelope() {
    let stop = StopRule { grad_tol: 1e-11, max_iter: 500 };
    let mut fitted = 0;
    for (p, star) in certified(10, 20) {
        let trace = run_from(&p, &Mat::zeros(p.m(), p.n()), Method::Ngd, &star, stop).unwrap();
        let Some(rate) = &trace.rate_estimate else { continue };
        if rate.model != RateModel::Linear {
            continue;
        }
        fitted += 1;
        assert!(rate.linear_parameter < 1.0);
        let floor = 1e-12 * (1.0 + star.cost(&p).abs());
        let gaps: Vec<f64> = trace.cost_gaps().into_iter().take_while(|&e| e > floor).collect();
        let ratios: Vec<f64> = gaps.windows(2).map(|w| w[1] / w[0]).collect();
        let worst = ratios.iter().skip(1).copied().fold(0.0, f64::max);
        assert!(worst < 1.0, "ratios {ratios:?}");
        // envelope over the window the fit is made on
        let q = rate.linear_parameter + 0.05;
        let start = gaps.len() - ratios.len().div_ceil(2).max(2) - 1;
        for (j, e) in gaps.iter().enumerate().skip(start) {
            assert!(*e <= q.powi((j - start) as i32) * gaps[start] * (1.0 + 1e-9), "step {j}: {e} vs q = {q}");
        }
    }
    assert!(fitted >= 10, "only {fitted} runs fitted a linear model");
}

#[test]
fn benchmark_runs_fail_without_minimizer() {
    let p = paper_sec5();
    let k0 = classify_gain(&p, &Mat::zeros(5, 5)).unwrap();
    let stop = StopRule { grad_tol: 1e-10, max_iter: 500 };
    let qn = run_recorded(&p, &k0, Method::Qn, None, stop).unwrap();
    assert!(matches!(qn.failure, Some(Error::SingularCurvature)));
    for kind in [Method::Gd, Method::Ngd] {
        let outcome = run_recorded(&p, &k0, kind, None, stop).unwrap();
        assert!(matches!(outcome.failure, Some(Error::StabilityLost { .. })), "{kind}");
        let costs: Vec<f64> = outcome.trace.records.iter().map(|r| r.cost).collect();
        assert!(costs.windows(2).all(|w| w[1] <= w[0]));
    }
}
