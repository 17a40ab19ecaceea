//! Reverse-mode gradients against central finite differences: every tape
//! primitive, every loss, and the full forward path of each objective.

#[macro_use]
mod support;

use hyperalign_core::grad::{Real, Tape};
use hyperalign_core::train::Objective;
use support::{fused_gradient_suite, loss_gradient_suite, primitive_suite, rng, uniform};

fn assert_all(outcomes: &[support::Outcome]) {
    for o in outcomes {
        println!("{}", o.line());
    }
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.pass()).map(|o| o.line()).collect();
    assert!(failed.is_empty(), "{failed:#?}");
}

#[test]
fn every_primitive_matches_finite_differences() {
    assert_all(&primitive_suite(200, 11));
}

#[test]
fn every_loss_matches_finite_differences() {
    assert_all(&loss_gradient_suite(100, 12));
}

#[test]
fn hyper_forward_path_matches_finite_differences() {
    assert_all(&[fused_gradient_suite(Objective::Hyper, 100, 13)]);
}

#[test]
fn baseline_and_detection_paths_match_finite_differences() {
    assert_all(&[
        fused_gradient_suite(Objective::Baseline, 25, 14),
        fused_gradient_suite(Objective::DetOnly, 25, 15),
    ]);
}

#[test]
fn series_branch_of_sinhc_has_the_analytic_derivative() {
    // d/du sinh(sqrt u)/sqrt u = 1/6 + u/60 + u^2/2520 + ...
    for u in [0.0, 1e-14, 1e-10, 1e-8, 5e-7] {
        let tape = Tape::new();
        let x = tape.var(u);
        let g = tape.backward(x.sinhc_sqrt()).unwrap().wrt(x);
        let want = 1.0 / 6.0 + u / 60.0 + u * u / 2520.0;
        assert!((g - want).abs() <= 1e-12, "u={u}: {g} vs {want}");
    }
}

#[test]
fn acosh_near_one_stays_finite() {
    for x in [1.0, 1.0 + 1e-15, 1.0 + 1e-13, 1.0 + 1e-11] {
        let tape = Tape::new();
        let v = tape.var(x);
        let g = tape.backward(v.acosh()).unwrap().wrt(v);
        assert!(g.is_finite(), "{x}: {g}");
    }
}

#[test]
fn kink_points_take_the_inactive_side() {
    let tape = Tape::new();
    let x = tape.var(0.0);
    let y = tape.var(1.0);
    let out = x.relu() + y.clamp_min(1.0) + y.clamp_max(1.0) + x.abs();
    let g = tape.backward(out).unwrap();
    assert_eq!(g.wrt(x), 0.0);
    assert_eq!(g.wrt(y), 0.0);
}

#[test]
fn repeated_backward_is_bit_identical() {
    let mut r = rng(16);
    let p = uniform(&mut r, 12, -1.0, 1.0);
    let tape = Tape::new();
    let xs = tape.vars(&p);
    let rows: Vec<Vec<_>> = xs.chunks(3).map(|c| c.to_vec()).collect();
    let tau = tape.var(0.3);
    let out = hyperalign_core::objectives::kernel::euclidean_contrastive(&rows[..2], &rows[2..], tau);
    let first = tape.backward(out).unwrap().wrt_all(&xs);
    let second = tape.backward(out).unwrap().wrt_all(&xs);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&first), bits(&second));
}

#[test]
fn linear_and_quadratic_functions() {
    let p = [0.7, -1.3, 2.1];
    let lin = grad_check!(&p, |x| x[0] * 3.0 - x[1] * 2.0 + x[2] * 0.5 + 4.0);
    assert!(lin <= 1e-9, "{lin}");
    let quad = grad_check!(&p, |x| x[0] * x[0] + x[1] * x[2]);
    assert!(quad <= 1e-9, "{quad}");
    let tape = Tape::new();
    let x = tape.var(3.0);
    assert_eq!(tape.backward(x * x).unwrap().wrt(x), 6.0);
    let z = tape.var(2.0);
    let g = tape.backward(z.acosh()).unwrap().wrt(z);
    assert!((g - 1.0 / 3f64.sqrt()).abs() < 1e-15);
}
