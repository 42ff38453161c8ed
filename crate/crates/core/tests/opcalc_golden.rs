//! Golden identities, the pre-normalization derivation trace of the
//! third-order expansion, and numeric oracle equivalence of the operator
//! calculus against exact polynomial derivatives of real compositions.

use mcalc_core::opcalc::poly::{
    composition_derivative_exact, composition_derivative_k4_fd, nested_central, PolyMap,
};
use mcalc_core::opcalc::{
    differentiate_raw, evaluate_sum, expand_composition, normalize, Atom, FuncSymbol, OpCtx, OpSum,
    OpTerm, SpaceLabel,
};
use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fg() -> (FuncSymbol, FuncSymbol) {
    (
        FuncSymbol::new("f", "V", "W"),
        FuncSymbol::new("g", "U", "V"),
    )
}

fn dfg(f: &FuncSymbol, g: &FuncSymbol, k: u32) -> Atom {
    Atom::deriv(f, k, Some(g))
}

fn dg(g: &FuncSymbol, k: u32) -> Atom {
    Atom::deriv(g, k, None)
}

#[test]
fn derivation_trace_of_third_order_has_the_expected_intermediate_terms() {
    let (f, g) = fg();
    let (u, v) = (SpaceLabel::new("U"), SpaceLabel::new("V"));
    let second = expand_composition(&f, &g, 2).unwrap();
    let raw = differentiate_raw(&second).unwrap();

    // Pre-normalization, the Leibniz pass yields exactly these five terms,
    // whose grouping is the familiar four-part intermediate expansion.
    let expected = [
        // (D^3 f ∘ g)(Dg ⊗ I)(I ⊗ (Dg ⊗ Dg)) — the factor pair survives raw.
        OpTerm::new(
            1,
            vec![
                vec![dfg(&f, &g, 3)],
                vec![dg(&g, 1), Atom::id(&[v.clone(), v.clone()])],
                vec![Atom::id1(&u), dg(&g, 1), dg(&g, 1)],
            ],
        ),
        OpTerm::new(1, vec![vec![dfg(&f, &g, 2)], vec![dg(&g, 2), dg(&g, 1)]]),
        OpTerm::new(1, vec![vec![dfg(&f, &g, 2)], vec![dg(&g, 1), dg(&g, 2)]]),
        OpTerm::new(
            1,
            vec![
                vec![dfg(&f, &g, 2)],
                vec![dg(&g, 1), Atom::id1(&v)],
                vec![Atom::id1(&u), dg(&g, 2)],
            ],
        ),
        OpTerm::new(1, vec![vec![dfg(&f, &g, 1)], vec![dg(&g, 3)]]),
    ];
    assert_eq!(raw.terms.len(), expected.len());
    for want in &expected {
        assert!(
            raw.terms.iter().any(|t| t == want),
            "missing intermediate term: {want:?}"
        );
    }
    // And it normalizes to the third-order expansion.
    assert_eq!(normalize(&raw), expand_composition(&f, &g, 3).unwrap());
}

fn random_ctx(rng: &mut ChaCha8Rng) -> (OpCtx, FuncSymbol, FuncSymbol, DVector<f64>, DVector<f64>) {
    let du = rng.gen_range(1..=4);
    let dv = rng.gen_range(1..=4);
    let dw = rng.gen_range(1..=4);
    let mut ctx = OpCtx::new();
    ctx.dim("U", du).dim("V", dv).dim("W", dw);
    ctx.bind("g", PolyMap::random(rng, du, dv, 0.5));
    ctx.bind("f", PolyMap::random(rng, dv, dw, 0.5));
    let x = DVector::from_fn(du, |_, _| rng.gen_range(-0.4..0.4));
    let z = DVector::from_fn(du, |_, _| rng.gen_range(-0.4..0.4));
    (
        ctx,
        FuncSymbol::new("f", "V", "W"),
        FuncSymbol::new("g", "U", "V"),
        x,
        z,
    )
}

#[test]
fn expansion_matches_exact_composition_derivatives_up_to_third_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..20 {
        let (ctx, f, g, x, z) = random_ctx(&mut rng);
        let fp = ctx.bindings.get("f").unwrap().clone();
        let gp = ctx.bindings.get("g").unwrap().clone();
        for k in 1..=3usize {
            let sum = expand_composition(&f, &g, k as u32).unwrap();
            let dirs = vec![z.clone(); k];
            let got = evaluate_sum(&sum, &ctx, &x, &dirs, &f.codomain).unwrap();
            let want = composition_derivative_exact(&fp, &gp, &x, &z, k);
            let rel = (&got - &want).norm() / (1.0 + want.norm());
            assert!(rel <= 1e-6, "case {case} k={k}: rel {rel:.3e}");
        }
    }
}

#[test]
fn fourth_order_matches_single_fd_layer_over_exact_third_derivative() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for case in 0..20 {
        let (ctx, f, g, x, z) = random_ctx(&mut rng);
        let fp = ctx.bindings.get("f").unwrap().clone();
        let gp = ctx.bindings.get("g").unwrap().clone();
        let sum = expand_composition(&f, &g, 4).unwrap();
        let dirs = vec![z.clone(); 4];
        let got = evaluate_sum(&sum, &ctx, &x, &dirs, &f.codomain).unwrap();
        let h = f64::EPSILON.cbrt() * (1.0 + x.norm());
        let want = composition_derivative_k4_fd(&fp, &gp, &x, &z, h);
        let rel = (&got - &want).norm() / (1.0 + want.norm());
        assert!(rel <= 1e-4, "case {case}: rel {rel:.3e}");
    }
}

#[test]
fn expansion_matches_nested_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for case in 0..8 {
        let (ctx, f, g, x, z) = random_ctx(&mut rng);
        let fp = ctx.bindings.get("f").unwrap().clone();
        let gp = ctx.bindings.get("g").unwrap().clone();
        let compose = move |p: &DVector<f64>| fp.value(&gp.value(p));
        for k in 1..=4usize {
            let sum = expand_composition(&f, &g, k as u32).unwrap();
            let dirs = vec![z.clone(); k];
            let got = evaluate_sum(&sum, &ctx, &x, &dirs, &f.codomain).unwrap();
            let h = f64::EPSILON.powf(1.0 / (k as f64 + 2.0)) * (1.0 + x.norm());
            let want = nested_central(&compose, &x, &z, k, h);
            let rel = (&got - &want).norm() / (1.0 + want.norm());
            assert!(rel <= 1e-4, "case {case} k={k}: rel {rel:.3e}");
        }
    }
}

#[test]
fn normalization_preserves_semantics() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    for _ in 0..10 {
        let (ctx, f, g, x, z) = random_ctx(&mut rng);
        // Differentiate the second-order expansion and compare the raw
        // (unfused, identity-padded) form against its normal form.
        let second = expand_composition(&f, &g, 2).unwrap();
        let raw = differentiate_raw(&second).unwrap();
        let norm = normalize(&raw);
        let dirs = vec![z.clone(); 3];
        let a = evaluate_sum(&raw, &ctx, &x, &dirs, &f.codomain).unwrap();
        let b = evaluate_sum(&norm, &ctx, &x, &dirs, &f.codomain).unwrap();
        let rel = (&a - &b).norm() / (1.0 + a.norm());
        assert!(
            rel <= 1e-10,
            "normalization changed the value: rel {rel:.3e}"
        );
    }
}

#[test]
fn one_dimensional_case_reproduces_scalar_chain_rule_coefficients() {
    // With scalar f and g the expansion collapses to the classical pattern:
    // k = 3 gives f'''g'^3 + 3 f''g'g'' + f'g'''.
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let mut ctx = OpCtx::new();
    ctx.dim("U", 1).dim("V", 1).dim("W", 1);
    ctx.bind("g", PolyMap::random(&mut rng, 1, 1, 0.8));
    ctx.bind("f", PolyMap::random(&mut rng, 1, 1, 0.8));
    let f = FuncSymbol::new("f", "V", "W");
    let g = FuncSymbol::new("g", "U", "V");
    let x = DVector::from_element(1, 0.3);
    let z = DVector::from_element(1, 1.0);
    let fp = ctx.bindings.get("f").unwrap().clone();
    let gp = ctx.bindings.get("g").unwrap().clone();

    let deriv = |p: &PolyMap, pt: f64, k: usize| -> f64 {
        let at = DVector::from_element(1, pt);
        let ones = vec![DVector::from_element(1, 1.0); k];
        p.dk_apply(&at, &ones)[0]
    };
    let gx = gp.value(&x)[0];
    let (g1, g2, g3) = (deriv(&gp, 0.3, 1), deriv(&gp, 0.3, 2), deriv(&gp, 0.3, 3));
    let (f1, f2, f3) = (deriv(&fp, gx, 1), deriv(&fp, gx, 2), deriv(&fp, gx, 3));
    let classical = f3 * g1 * g1 * g1 + 3.0 * f2 * g1 * g2 + f1 * g3;

    let sum = expand_composition(&f, &g, 3).unwrap();
    let got = evaluate_sum(&sum, &ctx, &x, &vec![z; 3], &f.codomain).unwrap()[0];
    assert!((got - classical).abs() <= 1e-10 * (1.0 + classical.abs()));
}

#[test]
fn higher_order_expansions_stay_well_formed() {
    let (f, g) = fg();
    for k in 1..=6u32 {
        let sum = expand_composition(&f, &g, k).unwrap();
        sum.validate().unwrap();
        assert!(!sum.terms.is_empty());
        // Input arity is k everywhere.
        for t in &sum.terms {
            assert_eq!(t.input_spaces().len(), k as usize);
            assert_eq!(t.output_spaces(), vec![SpaceLabel::new("W")]);
        }
    }
}

#[test]
fn zero_sum_is_preserved_by_the_rewriter() {
    let zero = OpSum::default();
    assert_eq!(normalize(&zero), zero);
    assert_eq!(differentiate_raw(&zero).unwrap(), zero);
}
