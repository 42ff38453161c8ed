//! Properties of the numerical layer: convergence order of the central
//! difference, linear decay of the quadratic remainder, the counterexample
//! demonstration, the composition norm bound, and the power-iteration
//! spectral norm against an eigenvalue-bisection oracle.

use mcalc_core::corpus::golden_corpus;
use mcalc_core::expr::{eval_scalar, evaluate, Env, Expr, Value};
use mcalc_core::frechet::d;
use mcalc_core::numcheck::{
    bound_check, counterexample_demo, fd_directional_scalar, frechet_remainder, spectral_norm,
    CurveSequence, NumError,
};
use mcalc_core::opcalc::poly::PolyMap;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn central_difference_error_is_second_order() {
    // Needs a function with a nonvanishing third derivative; log-det serves.
    let entry = golden_corpus()
        .into_iter()
        .find(|e| e.name == "logdet")
        .unwrap();
    let decls = entry.decls().unwrap();
    let f = entry.scalar().unwrap();
    let d1 = d(&Expr::Scalar(f.clone()), entry.wrt, 1).unwrap();
    let env = Env::random(&decls, &entry.spd_names(), 77);
    let x0 = env.get("X").unwrap().clone();
    let z = env.get("Z").unwrap().clone();
    let exact = match evaluate(&d1.expr, &env).unwrap() {
        Value::Scalar(v) => v,
        _ => unreachable!(),
    };
    let fun = |x: &DMatrix<f64>| -> Result<f64, NumError> {
        eval_scalar(&f, &env.with_bound("X", x.clone())).map_err(|_| NumError::NonFiniteValue)
    };
    let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&h| (fd_directional_scalar(fun, &x0, &z, h).unwrap() - exact).abs())
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log10();
        assert!(
            order >= 1.8,
            "observed order {order:.2} from errors {errs:?}"
        );
    }
}

#[test]
fn quadratic_remainder_decays_linearly_and_vanishes() {
    // tr(X'AX) with its derivative as candidate: the remainder is exactly
    // quadratic, so the ratio scales like ||z||.
    let entry = golden_corpus()
        .into_iter()
        .find(|e| e.name == "rayleigh")
        .unwrap();
    let decls = entry.decls().unwrap();
    let f = entry.scalar().unwrap();
    let d1 = d(&Expr::Scalar(f.clone()), entry.wrt, 1).unwrap();
    let env = Env::random(&decls, &[], 78);
    let x0 = env.get("X").unwrap().clone();

    let fun = |x: &DMatrix<f64>| -> Result<DMatrix<f64>, NumError> {
        let v = eval_scalar(&f, &env.with_bound("X", x.clone()))
            .map_err(|_| NumError::NonFiniteValue)?;
        Ok(DMatrix::from_element(1, 1, v))
    };
    let cand = |z: &DMatrix<f64>| -> Result<DMatrix<f64>, NumError> {
        let v = match evaluate(&d1.expr, &env.with_bound("Z", z.clone()))
            .map_err(|_| NumError::NonFiniteValue)?
        {
            Value::Scalar(v) => v,
            _ => unreachable!(),
        };
        Ok(DMatrix::from_element(1, 1, v))
    };
    let dir = DMatrix::from_fn(3, 2, |i, j| 0.3 + 0.1 * (i * 2 + j) as f64);
    let seq = CurveSequence::straight_line(&dir, 0.5, 0.5, 24).unwrap();
    let ratios = frechet_remainder(fun, cand, &x0, &seq).unwrap();
    // Halving the step halves the ratio, up to round-off at the tail.
    for w in ratios.windows(2).take(10) {
        let q = w[1] / w[0];
        assert!((q - 0.5).abs() < 0.05, "decay factor {q}");
    }
    assert!(*ratios.last().unwrap() < 1e-6);
}

#[test]
fn counterexample_demo_reports_all_pass() {
    let reports = counterexample_demo(1000, 424242).unwrap();
    for r in &reports {
        assert!(r.passed(), "{} failed: {}", r.name, r.to_json_line());
    }
    let final_ratio = reports
        .iter()
        .find(|r| r.name == "curve_remainder_final")
        .unwrap();
    assert!((final_ratio.estimate - 1.0).abs() < 2e-3);
    let analytic = reports
        .iter()
        .find(|r| r.name == "curve_remainder_analytic_dev")
        .unwrap();
    assert!(analytic.estimate < 1e-12);
}

#[test]
fn bound_check_holds_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let mut count = 0;
    for du in [2usize, 3, 4] {
        for dv in [2usize, 3, 4] {
            for dw in [2usize, 3, 4] {
                let g = PolyMap::random(&mut rng, du, dv, 0.7);
                let f = PolyMap::random(&mut rng, dv, dw, 0.7);
                let x = DVector::from_fn(du, |_, _| rng.gen_range(-0.5..0.5));
                let report = bound_check(&f, &g, &x, 64, 91 + count).unwrap();
                assert!(report.passed(), "bound violated: {}", report.to_json_line());
                count += 1;
            }
        }
    }
}

#[test]
fn bound_is_tight_for_identity_inner_map() {
    // g = identity: the bound reduces to ‖D²f‖ <= ‖D²f‖ · 1 + ‖Df‖ · 0.
    let mut rng = ChaCha8Rng::seed_from_u64(92);
    let n = 3;
    let f = PolyMap::random(&mut rng, n, n, 0.7);
    let g = PolyMap::identity(n);
    let x = DVector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5));
    let report = bound_check(&f, &g, &x, 128, 93).unwrap();
    assert!(report.passed());
    // Sampled lower bound comes close to the matricized upper bound.
    assert!(
        report.estimate > 0.2 * report.reference,
        "{}",
        report.to_json_line()
    );
}

#[test]
fn linear_outer_map_leaves_only_the_second_term() {
    let mut rng = ChaCha8Rng::seed_from_u64(94);
    let g = PolyMap::random(&mut rng, 3, 3, 0.7);
    let c1 = nalgebra::DMatrix::from_fn(2, 3, |_, _| rng.gen_range(-1.0..1.0));
    let f = PolyMap::linear(c1);
    let x = DVector::from_fn(3, |_, _| rng.gen_range(-0.5..0.5));
    let report = bound_check(&f, &g, &x, 64, 95).unwrap();
    assert!(report.passed());
}

/// Count of eigenvalues of the symmetric matrix `g` strictly above `lam`,
/// from the inertia of `g - lam I` under symmetric elimination.
fn eigs_above(g: &DMatrix<f64>, lam: f64) -> usize {
    let n = g.nrows();
    let mut m = g.clone();
    for i in 0..n {
        m[(i, i)] -= lam;
    }
    let mut positive = 0;
    for k in 0..n {
        let mut pivot = m[(k, k)];
        if pivot.abs() < 1e-14 {
            pivot = 1e-14; // nudge off the singularity
        }
        if pivot > 0.0 {
            positive += 1;
        }
        for i in (k + 1)..n {
            let factor = m[(i, k)] / pivot;
            for j in k..n {
                let mkj = m[(k, j)];
                m[(i, j)] -= factor * mkj;
            }
        }
    }
    positive
}

fn largest_eig_by_bisection(g: &DMatrix<f64>) -> f64 {
    let n = g.nrows();
    let mut hi = (0..n)
        .map(|i| (0..n).map(|j| g[(i, j)].abs()).sum::<f64>())
        .fold(0.0_f64, f64::max)
        .max(1e-12);
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eigs_above(g, mid) >= 1 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn power_iteration_agrees_with_bisection_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(96);
    for _ in 0..20 {
        let m = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
        let fast = spectral_norm(&m).unwrap();
        let slow = largest_eig_by_bisection(&(m.transpose() * &m)).sqrt();
        let rel = (fast - slow).abs() / slow.max(1e-300);
        assert!(
            rel < 1e-8,
            "power {fast} vs bisection {slow} (rel {rel:.3e})"
        );
    }
}
