//! Finite-difference verification of the symbolic differentiation engine
//! over the golden corpus: first-order agreement, linearity in the
//! direction, the gradient inner-product identity, Hessian symmetry, and
//! agreement of the Hessian with a bilinear finite-difference stencil.

use mcalc_core::corpus::golden_corpus;
use mcalc_core::expr::{eval_scalar, evaluate, Env, Expr, ScalarExpr, Value};
use mcalc_core::frechet::{d, gradient, hessian, inner_product_form, HessianOperator};
use mcalc_core::numcheck::{fd_directional_scalar, fd_step_first, fd_step_second};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scalar_fn<'e>(
    f: &'e ScalarExpr,
    env: &'e Env,
    wrt: &'e str,
) -> impl Fn(&DMatrix<f64>) -> Result<f64, mcalc_core::numcheck::NumError> + 'e {
    move |x: &DMatrix<f64>| {
        eval_scalar(f, &env.with_bound(wrt, x.clone()))
            .map_err(|_| mcalc_core::numcheck::NumError::NonFiniteValue)
    }
}

fn rand_like(rng: &mut impl Rng, m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |_, _| rng.gen_range(-1.0..1.0))
}

#[test]
fn directional_derivative_matches_central_differences() {
    for entry in golden_corpus() {
        let decls = entry.decls().unwrap();
        let f = entry.scalar().unwrap();
        let d1 = d(&Expr::Scalar(f.clone()), entry.wrt, 1).unwrap();
        for sample in 0..10u64 {
            let env = Env::random(&decls, &entry.spd_names(), 1000 + sample);
            let x0 = env.get(entry.wrt).unwrap().clone();
            let z = env.get("Z").unwrap().clone();
            let reference = match evaluate(&d1.expr, &env).unwrap() {
                Value::Scalar(v) => v,
                Value::Matrix(_) => unreachable!(),
            };
            let h = fd_step_first(x0.norm());
            let estimate =
                fd_directional_scalar(scalar_fn(&f, &env, entry.wrt), &x0, &z, h).unwrap();
            let rel = (estimate - reference).abs() / (1.0 + reference.abs());
            assert!(
                rel <= 1e-6,
                "{}: sample {sample}: fd {estimate} vs symbolic {reference} (rel {rel:.3e})",
                entry.name
            );
        }
    }
}

#[test]
fn inverse_rule_matches_central_differences() {
    // Matrix-valued check of d(inv(X)) = -inv(X) Z inv(X) on well-conditioned
    // 4x4 inputs.
    let mut decls = mcalc_core::expr::parse_decls(&["X:4x4:var".to_string()]).unwrap();
    decls
        .declare_directions(mcalc_core::expr::Shape::new(4, 4), 1)
        .unwrap();
    let e = mcalc_core::expr::parse("inv(X)", &decls).unwrap();
    let d1 = d(&e, "X", 1).unwrap();
    for sample in 0..20u64 {
        let env = Env::random(&decls, &["X".to_string()], 800 + sample);
        let x0 = env.get("X").unwrap().clone();
        let z = env.get("Z").unwrap().clone();
        let reference = match evaluate(&d1.expr, &env).unwrap() {
            Value::Matrix(m) => m,
            Value::Scalar(_) => unreachable!(),
        };
        let h = fd_step_first(x0.norm());
        let at = |x: &DMatrix<f64>| match evaluate(&e, &env.with_bound("X", x.clone())).unwrap() {
            Value::Matrix(m) => m,
            Value::Scalar(_) => unreachable!(),
        };
        let estimate = (at(&(&x0 + &z * h)) - at(&(&x0 - &z * h))) / (2.0 * h);
        let rel = (&estimate - &reference).norm() / (1.0 + reference.norm());
        assert!(rel <= 1e-7, "sample {sample}: rel {rel:.3e}");
    }
}

#[test]
fn derivative_is_linear_in_the_direction() {
    for entry in golden_corpus() {
        let decls = entry.decls().unwrap();
        let f = entry.scalar().unwrap();
        let d1 = d(&Expr::Scalar(f), entry.wrt, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for sample in 0..20u64 {
            let env = Env::random(&decls, &entry.spd_names(), 2000 + sample);
            let z_template = env.get("Z").unwrap().clone();
            let z1 = rand_like(&mut rng, &z_template);
            let z2 = rand_like(&mut rng, &z_template);
            let (alpha, beta): (f64, f64) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let at = |zm: DMatrix<f64>| -> f64 {
                match evaluate(&d1.expr, &env.with_bound("Z", zm)).unwrap() {
                    Value::Scalar(v) => v,
                    Value::Matrix(_) => unreachable!(),
                }
            };
            let combined = at(&z1 * alpha + &z2 * beta);
            let split = alpha * at(z1.clone()) + beta * at(z2.clone());
            let rel = (combined - split).abs() / (1.0 + split.abs());
            assert!(
                rel <= 1e-10,
                "{}: linearity violated (rel {rel:.3e})",
                entry.name
            );
        }
    }
}

#[test]
fn gradient_satisfies_the_inner_product_identity() {
    for entry in golden_corpus() {
        let decls = entry.decls().unwrap();
        let f = entry.scalar().unwrap();
        let g = gradient(&f, entry.wrt).unwrap();
        let shape = decls.get(entry.wrt).unwrap().shape;
        let d1 = d(&Expr::Scalar(f), entry.wrt, 1).unwrap();

        // Exact symbolic identity after simplification.
        let Expr::Scalar(lhs) = &d1.expr else {
            unreachable!()
        };
        let rhs = inner_product_form(&g, 1, shape);
        assert_eq!(lhs, &rhs, "{}: tr(Z' G) differs symbolically", entry.name);

        // And numerically.
        for sample in 0..10u64 {
            let env = Env::random(&decls, &entry.spd_names(), 3000 + sample);
            let a = eval_scalar(lhs, &env).unwrap();
            let b = eval_scalar(&rhs, &env).unwrap();
            let rel = (a - b).abs() / (1.0 + b.abs());
            assert!(
                rel <= 1e-10,
                "{}: numeric inner product mismatch",
                entry.name
            );
        }
    }
}

fn bilinear(h: &HessianOperator, env: &Env, z: &DMatrix<f64>, t: &DMatrix<f64>) -> f64 {
    let env = env.with_bound("Z", z.clone()).with_bound("T", t.clone());
    let hval = match evaluate(&Expr::Mat(h.expr.clone()), &env).unwrap() {
        Value::Matrix(m) => m,
        Value::Scalar(_) => unreachable!(),
    };
    (z.transpose() * hval).trace()
}

#[test]
fn hessian_bilinear_form_is_symmetric() {
    for entry in golden_corpus() {
        let decls = entry.decls().unwrap();
        let f = entry.scalar().unwrap();
        let h = hessian(&f, entry.wrt).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for sample in 0..100u64 {
            let env = Env::random(&decls, &entry.spd_names(), 4000 + sample);
            let template = env.get(entry.wrt).unwrap().clone();
            let z = rand_like(&mut rng, &template);
            let t = rand_like(&mut rng, &template);
            let bzt = bilinear(&h, &env, &z, &t);
            let btz = bilinear(&h, &env, &t, &z);
            let err = (bzt - btz).abs();
            assert!(
                err <= 1e-8 * (1.0 + bzt.abs()),
                "{}: asymmetric bilinear form ({bzt} vs {btz})",
                entry.name
            );
        }
    }
}

#[test]
fn hessian_matches_bilinear_fd_stencil() {
    for entry in golden_corpus() {
        let decls = entry.decls().unwrap();
        let f = entry.scalar().unwrap();
        let h = hessian(&f, entry.wrt).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        // Tighter tolerance for the well-conditioned SPD log-det entry.
        let tol = if entry.name == "logdet" { 1e-5 } else { 1e-4 };
        for sample in 0..10u64 {
            let env = Env::random(&decls, &entry.spd_names(), 5000 + sample);
            let x0 = env.get(entry.wrt).unwrap().clone();
            let z = rand_like(&mut rng, &x0);
            let t = rand_like(&mut rng, &x0);
            let reference = bilinear(&h, &env, &z, &t);
            let step = fd_step_second(x0.norm());
            let at = |s: f64, u: f64| {
                eval_scalar(&f, &env.with_bound(entry.wrt, &x0 + &t * s + &z * u)).unwrap()
            };
            let estimate = (at(step, step) - at(step, -step) - at(-step, step) + at(-step, -step))
                / (4.0 * step * step);
            let rel = (estimate - reference).abs() / (1.0 + reference.abs());
            assert!(
                rel <= tol,
                "{}: sample {sample}: stencil {estimate} vs symbolic {reference} (rel {rel:.3e})",
                entry.name
            );
        }
    }
}

#[test]
fn second_derivative_via_fixed_direction_matches_nested_estimate() {
    // Differentiate-then-fix-Z equals the nested finite-difference estimate
    // of the second derivative applied to (Z, T).
    for entry in golden_corpus() {
        let decls = entry.decls().unwrap();
        let f = entry.scalar().unwrap();
        let d1 = d(&Expr::Scalar(f.clone()), entry.wrt, 1).unwrap();
        let d2 = d(&d1.expr, entry.wrt, 2).unwrap();
        for sample in 0..5u64 {
            let env = Env::random(&decls, &entry.spd_names(), 6000 + sample);
            let x0 = env.get(entry.wrt).unwrap().clone();
            let t = env.get("T").unwrap().clone();
            let symbolic = match evaluate(&d2.expr, &env).unwrap() {
                Value::Scalar(v) => v,
                Value::Matrix(_) => unreachable!(),
            };
            // Outer central difference in T of the inner symbolic derivative;
            // one FD layer only, so the first-order step applies.
            let h = fd_step_first(x0.norm());
            let inner = |xm: DMatrix<f64>| -> f64 {
                match evaluate(&d1.expr, &env.with_bound(entry.wrt, xm)).unwrap() {
                    Value::Scalar(v) => v,
                    Value::Matrix(_) => unreachable!(),
                }
            };
            let estimate = (inner(&x0 + &t * h) - inner(&x0 - &t * h)) / (2.0 * h);
            let rel = (estimate - symbolic).abs() / (1.0 + symbolic.abs());
            assert!(
                rel <= 1e-6,
                "{}: nested estimate {estimate} vs symbolic {symbolic} (rel {rel:.3e})",
                entry.name
            );
        }
    }
}
