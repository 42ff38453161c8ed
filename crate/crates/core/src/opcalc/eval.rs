//! Numeric evaluation of operator terms against polynomial bindings.
//!
//! Directions feed the input slots of the rightmost factor in order; factors
//! apply right to left. On elementary tensors a chain acts slot-wise, so
//! slot values stay separate vectors throughout.

use super::poly::PolyMap;
use super::{Atom, OpError, OpSum, OpTerm, SpaceLabel};
use nalgebra::DVector;
use std::collections::BTreeMap;

/// Dimensions for each space label plus a polynomial map per function symbol.
#[derive(Clone, Debug, Default)]
pub struct OpCtx {
    pub dims: BTreeMap<String, usize>,
    pub bindings: BTreeMap<String, PolyMap>,
}

impl OpCtx {
    pub fn new() -> OpCtx {
        OpCtx::default()
    }

    pub fn dim(&mut self, label: &str, n: usize) -> &mut Self {
        self.dims.insert(label.to_string(), n);
        self
    }

    pub fn bind(&mut self, name: &str, p: PolyMap) -> &mut Self {
        self.bindings.insert(name.to_string(), p);
        self
    }

    fn poly(&self, name: &str) -> Result<&PolyMap, OpError> {
        self.bindings
            .get(name)
            .ok_or_else(|| OpError::UnboundFunction(name.to_string()))
    }

    pub fn space_dim(&self, label: &SpaceLabel) -> Result<usize, OpError> {
        self.dims
            .get(&label.0)
            .copied()
            .ok_or_else(|| OpError::SignatureMismatch(format!("no dimension for space {label}")))
    }
}

/// Evaluate one term at base point `x` with the given direction slots.
pub fn evaluate_term(
    term: &OpTerm,
    ctx: &OpCtx,
    x: &DVector<f64>,
    dirs: &[DVector<f64>],
) -> Result<DVector<f64>, OpError> {
    let expected = term.input_spaces();
    if expected.len() != dirs.len() {
        return Err(OpError::ArityMismatch {
            expected: expected.len(),
            got: dirs.len(),
        });
    }
    for (space, d) in expected.iter().zip(dirs) {
        if ctx.space_dim(space)? != d.len() {
            return Err(OpError::SignatureMismatch(format!(
                "direction of length {} fed to space {space}",
                d.len()
            )));
        }
    }
    let mut slots: Vec<DVector<f64>> = dirs.to_vec();
    for factor in term.factors.iter().rev() {
        let mut next: Vec<DVector<f64>> = Vec::new();
        let mut s = 0usize;
        for atom in factor {
            match atom {
                Atom::Id { spaces } => {
                    for _ in spaces {
                        let v = slots.get(s).ok_or(OpError::ArityMismatch {
                            expected: s + 1,
                            got: slots.len(),
                        })?;
                        next.push(v.clone());
                        s += 1;
                    }
                }
                Atom::Func {
                    func,
                    composed_with,
                } => {
                    let p = ctx.poly(&func.name)?;
                    let base = base_point(ctx, composed_with.as_ref(), x)?;
                    next.push(p.value(&base));
                }
                Atom::Deriv {
                    func,
                    order,
                    composed_with,
                } => {
                    let k = *order as usize;
                    let args = slots.get(s..s + k).ok_or(OpError::ArityMismatch {
                        expected: s + k,
                        got: slots.len(),
                    })?;
                    let p = ctx.poly(&func.name)?;
                    let base = base_point(ctx, composed_with.as_ref(), x)?;
                    next.push(p.dk_apply(&base, args));
                    s += k;
                }
            }
        }
        if s != slots.len() {
            return Err(OpError::ArityMismatch {
                expected: s,
                got: slots.len(),
            });
        }
        slots = next;
    }
    match slots.as_slice() {
        [out] => Ok(out * term.coeff as f64),
        _ => Err(OpError::SignatureMismatch(format!(
            "term leaves {} output slots, expected 1",
            slots.len()
        ))),
    }
}

fn base_point(
    ctx: &OpCtx,
    composed_with: Option<&super::FuncSymbol>,
    x: &DVector<f64>,
) -> Result<DVector<f64>, OpError> {
    match composed_with {
        Some(g) => Ok(ctx.poly(&g.name)?.value(x)),
        None => Ok(x.clone()),
    }
}

/// Evaluate a sum; the zero sum yields the zero vector of `out_space`.
pub fn evaluate_sum(
    sum: &OpSum,
    ctx: &OpCtx,
    x: &DVector<f64>,
    dirs: &[DVector<f64>],
    out_space: &SpaceLabel,
) -> Result<DVector<f64>, OpError> {
    let mut acc = DVector::zeros(ctx.space_dim(out_space)?);
    for term in &sum.terms {
        acc += evaluate_term(term, ctx, x, dirs)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opcalc::{expand_composition, FuncSymbol};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (OpCtx, FuncSymbol, FuncSymbol, DVector<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (du, dv, dw) = (3, 2, 2);
        let mut ctx = OpCtx::new();
        ctx.dim("U", du).dim("V", dv).dim("W", dw);
        ctx.bind("g", PolyMap::random(&mut rng, du, dv, 0.6));
        ctx.bind("f", PolyMap::random(&mut rng, dv, dw, 0.6));
        let x = DVector::from_fn(du, |_, _| rng.gen_range(-0.4..0.4));
        let z = DVector::from_fn(du, |_, _| rng.gen_range(-0.4..0.4));
        let f = FuncSymbol::new("f", "V", "W");
        let g = FuncSymbol::new("g", "U", "V");
        (ctx, f, g, x, z)
    }

    #[test]
    fn first_order_matches_central_difference() {
        let (ctx, f, g, x, z) = setup(11);
        let s = expand_composition(&f, &g, 1).unwrap();
        let got = evaluate_sum(&s, &ctx, &x, std::slice::from_ref(&z), &f.codomain).unwrap();
        let fp = ctx.bindings.get("f").unwrap();
        let gp = ctx.bindings.get("g").unwrap();
        let h = 1e-6;
        let fd =
            (fp.value(&gp.value(&(&x + &z * h))) - fp.value(&gp.value(&(&x - &z * h)))) / (2.0 * h);
        let rel = (&fd - &got).norm() / (1.0 + got.norm());
        assert!(rel < 1e-6, "rel={rel:.3e}");
    }

    #[test]
    fn zero_sum_evaluates_to_zero_vector() {
        let (ctx, f, _, x, z) = setup(12);
        let zero = OpSum::default();
        let got = evaluate_sum(&zero, &ctx, &x, &[z], &f.codomain).unwrap();
        assert_eq!(got, DVector::zeros(2));
    }

    #[test]
    fn second_order_diagonal_is_symmetric_in_the_directions() {
        let (ctx, f, g, x, _) = setup(13);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let z1 = DVector::from_fn(3, |_, _| rng.gen_range(-0.5..0.5));
        let z2 = DVector::from_fn(3, |_, _| rng.gen_range(-0.5..0.5));
        let s = expand_composition(&f, &g, 2).unwrap();
        let a = evaluate_sum(&s, &ctx, &x, &[z1.clone(), z2.clone()], &f.codomain).unwrap();
        let b = evaluate_sum(&s, &ctx, &x, &[z2, z1], &f.codomain).unwrap();
        let rel = (&a - &b).norm() / (1.0 + a.norm());
        assert!(rel < 1e-8, "rel={rel:.3e}");
    }

    #[test]
    fn arity_mismatch_is_reported() {
        let (ctx, f, g, x, z) = setup(14);
        let s = expand_composition(&f, &g, 2).unwrap();
        let err = evaluate_term(&s.terms[0], &ctx, &x, &[z]).unwrap_err();
        assert!(matches!(err, OpError::ArityMismatch { .. }));
    }

    #[test]
    fn unbound_function_is_reported() {
        let (_, f, g, x, z) = setup(15);
        let mut ctx = OpCtx::new();
        ctx.dim("U", 3).dim("V", 2).dim("W", 2);
        let s = expand_composition(&f, &g, 1).unwrap();
        let err = evaluate_sum(&s, &ctx, &x, &[z], &f.codomain).unwrap_err();
        assert!(matches!(err, OpError::UnboundFunction(_)));
    }
}
