//! Symbolic directional (Fréchet) derivatives of concrete expressions, with
//! gradient and Hessian-operator extraction through the Euclidean trace
//! inner product `<A, B> = tr(B'A)`.
//!
//! Differentiation is rule-based; the expression class (polynomials in the
//! entries, matrix inverse, log-determinant) is Fréchet differentiable on
//! its domain, and every rule is cross-checked against finite differences in
//! the test suite.

use crate::expr::simplify::{
    canonicalize_trace_chain, flatten_product, rebuild_matrix, scalar_monomials,
    transpose_canonical, MTerm,
};
use crate::expr::{simplify, Expr, ExprError, MatExpr, ScalarExpr, Shape};
use std::fmt;

#[derive(Clone, PartialEq, Debug)]
pub enum FrechetError {
    /// The requested direction index already occurs in the expression.
    DirectionInUse(usize),
    /// The derivative cannot be put in `tr(Z' G)` form; indicates an input
    /// outside the supported class (or a non-variable differentiation target).
    NotReducible(String),
    Expr(ExprError),
}

impl fmt::Display for FrechetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrechetError::DirectionInUse(k) => {
                write!(f, "direction index {k} already occurs in the expression")
            }
            FrechetError::NotReducible(msg) => write!(f, "not reducible: {msg}"),
            FrechetError::Expr(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for FrechetError {}

impl From<ExprError> for FrechetError {
    fn from(e: ExprError) -> Self {
        FrechetError::Expr(e)
    }
}

/// A directional derivative: an expression linear in `Dir(direction_index)`.
#[derive(Clone, PartialEq, Debug)]
pub struct DirectionalDerivative {
    pub expr: Expr,
    pub wrt: String,
    pub direction_index: usize,
}

/// The Hessian operator `T -> H(T)` of a scalar function, as an expression
/// linear in `Dir(2)`.
#[derive(Clone, PartialEq, Debug)]
pub struct HessianOperator {
    pub expr: MatExpr,
    pub wrt: String,
}

/// Directional derivative of `e` with respect to the variable `x`, using
/// direction index `k`. Other variables and existing directions are held
/// constant.
pub fn d(e: &Expr, x: &str, k: usize) -> Result<DirectionalDerivative, FrechetError> {
    e.sort()?;
    // Direction indices at or above k must be fresh: existing directions are
    // treated as constants, so only lower indices may already occur.
    if let Some(j) = max_dir_index(e) {
        if j >= k {
            return Err(FrechetError::DirectionInUse(j));
        }
    }
    let raw = match e {
        Expr::Mat(m) => Expr::Mat(d_mat(m, x, k)?),
        Expr::Scalar(s) => Expr::Scalar(d_scalar(s, x, k)?),
    };
    Ok(DirectionalDerivative {
        expr: simplify(&raw),
        wrt: x.to_string(),
        direction_index: k,
    })
}

fn d_mat(m: &MatExpr, x: &str, k: usize) -> Result<MatExpr, FrechetError> {
    Ok(match m {
        MatExpr::Var(name, shape) if name == x => MatExpr::Dir(k, *shape),
        MatExpr::Var(_, shape) | MatExpr::Const(_, shape) | MatExpr::Dir(_, shape) => {
            MatExpr::Zero(*shape)
        }
        MatExpr::Identity(n) => MatExpr::Zero(Shape::square(*n)),
        MatExpr::Zero(s) => MatExpr::Zero(*s),
        MatExpr::Add(ts) => MatExpr::Add(
            ts.iter()
                .map(|t| d_mat(t, x, k))
                .collect::<Result<_, _>>()?,
        ),
        MatExpr::Neg(t) => d_mat(t, x, k)?.neg(),
        MatExpr::ScalarMul(s, t) => MatExpr::Add(vec![
            MatExpr::smul(d_scalar(s, x, k)?, (**t).clone()),
            MatExpr::smul((**s).clone(), d_mat(t, x, k)?),
        ]),
        MatExpr::MatMul(a, b) => MatExpr::Add(vec![
            MatExpr::mul(d_mat(a, x, k)?, (**b).clone()),
            MatExpr::mul((**a).clone(), d_mat(b, x, k)?),
        ]),
        MatExpr::Transpose(t) => d_mat(t, x, k)?.t(),
        MatExpr::Inverse(t) => {
            let inv = (**t).clone().inv();
            MatExpr::mul(MatExpr::mul(inv.clone(), d_mat(t, x, k)?), inv).neg()
        }
    })
}

fn d_scalar(s: &ScalarExpr, x: &str, k: usize) -> Result<ScalarExpr, FrechetError> {
    Ok(match s {
        ScalarExpr::Lit(_) => ScalarExpr::lit(0),
        ScalarExpr::Trace(m) => ScalarExpr::trace(d_mat(m, x, k)?),
        ScalarExpr::LogDet(m) => {
            ScalarExpr::trace(MatExpr::mul((**m).clone().inv(), d_mat(m, x, k)?))
        }
        ScalarExpr::SAdd(ts) => ScalarExpr::SAdd(
            ts.iter()
                .map(|t| d_scalar(t, x, k))
                .collect::<Result<_, _>>()?,
        ),
        ScalarExpr::SMul(ts) => {
            let mut sum = Vec::new();
            for i in 0..ts.len() {
                let mut fs = ts.clone();
                fs[i] = d_scalar(&ts[i], x, k)?;
                sum.push(ScalarExpr::SMul(fs));
            }
            ScalarExpr::SAdd(sum)
        }
        ScalarExpr::SNeg(t) => ScalarExpr::SNeg(Box::new(d_scalar(t, x, k)?)),
    })
}

/// Gradient `G` with `d(f, x, 1) == tr(Z' G)` under the trace inner product.
pub fn gradient(f: &ScalarExpr, x: &str) -> Result<MatExpr, FrechetError> {
    let shape = var_shape(f, x)?;
    let dd = d(&Expr::Scalar(f.clone()), x, 1)?;
    let Expr::Scalar(ds) = &dd.expr else {
        unreachable!("scalar derivative")
    };
    extract_linear(ds, 1, shape)
}

/// Hessian operator: differentiate the first derivative holding `Z` fixed,
/// then read the operator off the bilinear trace form.
pub fn hessian(f: &ScalarExpr, x: &str) -> Result<HessianOperator, FrechetError> {
    let shape = var_shape(f, x)?;
    let d1 = d(&Expr::Scalar(f.clone()), x, 1)?;
    let d2 = d(&d1.expr, x, 2)?;
    let Expr::Scalar(ds) = &d2.expr else {
        unreachable!("scalar derivative")
    };
    let h = extract_linear(ds, 1, shape)?;
    Ok(HessianOperator {
        expr: h,
        wrt: x.to_string(),
    })
}

fn max_dir_index(e: &Expr) -> Option<usize> {
    fn in_mat(m: &MatExpr) -> Option<usize> {
        match m {
            MatExpr::Dir(k, _) => Some(*k),
            MatExpr::Const(..) | MatExpr::Var(..) | MatExpr::Identity(_) | MatExpr::Zero(_) => None,
            MatExpr::Add(ts) => ts.iter().filter_map(in_mat).max(),
            MatExpr::Neg(t) | MatExpr::Transpose(t) | MatExpr::Inverse(t) => in_mat(t),
            MatExpr::ScalarMul(s, t) => in_scalar(s).max(in_mat(t)),
            MatExpr::MatMul(a, b) => in_mat(a).max(in_mat(b)),
        }
    }
    fn in_scalar(s: &ScalarExpr) -> Option<usize> {
        match s {
            ScalarExpr::Lit(_) => None,
            ScalarExpr::Trace(m) | ScalarExpr::LogDet(m) => in_mat(m),
            ScalarExpr::SAdd(ts) | ScalarExpr::SMul(ts) => ts.iter().filter_map(in_scalar).max(),
            ScalarExpr::SNeg(t) => in_scalar(t),
        }
    }
    match e {
        Expr::Mat(m) => in_mat(m),
        Expr::Scalar(s) => in_scalar(s),
    }
}

/// Shape of variable `x` as it occurs in `f` (defaults to the only shape
/// consistent with usage; absent variables are rejected).
fn var_shape(f: &ScalarExpr, x: &str) -> Result<Shape, FrechetError> {
    fn scan_mat(m: &MatExpr, x: &str) -> Option<Shape> {
        match m {
            MatExpr::Var(name, s) if name == x => Some(*s),
            MatExpr::Var(..)
            | MatExpr::Const(..)
            | MatExpr::Dir(..)
            | MatExpr::Identity(_)
            | MatExpr::Zero(_) => None,
            MatExpr::Add(ts) => ts.iter().find_map(|t| scan_mat(t, x)),
            MatExpr::Neg(t) | MatExpr::Transpose(t) | MatExpr::Inverse(t) => scan_mat(t, x),
            MatExpr::ScalarMul(s, t) => scan_scalar(s, x).or_else(|| scan_mat(t, x)),
            MatExpr::MatMul(a, b) => scan_mat(a, x).or_else(|| scan_mat(b, x)),
        }
    }
    fn scan_scalar(s: &ScalarExpr, x: &str) -> Option<Shape> {
        match s {
            ScalarExpr::Lit(_) => None,
            ScalarExpr::Trace(m) | ScalarExpr::LogDet(m) => scan_mat(m, x),
            ScalarExpr::SAdd(ts) | ScalarExpr::SMul(ts) => {
                ts.iter().find_map(|t| scan_scalar(t, x))
            }
            ScalarExpr::SNeg(t) => scan_scalar(t, x),
        }
    }
    scan_scalar(f, x).ok_or_else(|| {
        FrechetError::NotReducible(format!("variable {x} does not occur in the expression"))
    })
}

/// Rewrite a derivative that is linear in `Dir(k)` as `tr(Z' G)` and return
/// `G`. Each additive term must contain the direction exactly once, inside a
/// trace, as a bare (possibly transposed) atom.
fn extract_linear(ds: &ScalarExpr, k: usize, shape: Shape) -> Result<MatExpr, FrechetError> {
    let monos = scalar_monomials(ds);
    let mut terms = Vec::new();
    for mono in monos {
        let holders: Vec<usize> = mono
            .factors
            .iter()
            .enumerate()
            .filter(|(_, f)| f.contains_dir(Some(k)))
            .map(|(i, _)| i)
            .collect();
        let [hi] = holders.as_slice() else {
            return Err(FrechetError::NotReducible(format!(
                "a term contains the direction in {} factors",
                holders.len()
            )));
        };
        let holder = &mono.factors[*hi];
        if holder.count_dir(k) != 1 {
            return Err(FrechetError::NotReducible(
                "a term is nonlinear in the direction".to_string(),
            ));
        }
        let ScalarExpr::Trace(arg) = holder else {
            return Err(FrechetError::NotReducible(
                "the direction occurs outside a trace".to_string(),
            ));
        };
        let chain = flatten_product(arg);
        let rest = direction_first_rest(&chain, k).ok_or_else(|| {
            FrechetError::NotReducible(
                "the direction is buried inside a compound factor".to_string(),
            )
        })?;
        let sfactors: Vec<ScalarExpr> = mono
            .factors
            .iter()
            .enumerate()
            .filter(|(i, _)| i != hi)
            .map(|(_, f)| f.clone())
            .collect();
        terms.push(MTerm {
            coeff: mono.coeff,
            sfactors,
            chain: rest,
        });
    }
    Ok(rebuild_matrix(terms, shape))
}

/// Rotate (and if needed flip orientation of) a trace chain so it starts
/// with `Dir(k)` transposed, and return the remaining factors.
fn direction_first_rest(chain: &[MatExpr], k: usize) -> Option<Vec<MatExpr>> {
    let is_dir_t = |a: &MatExpr| matches!(a, MatExpr::Transpose(x) if matches!(**x, MatExpr::Dir(j, _) if j == k));
    let is_dir = |a: &MatExpr| matches!(a, MatExpr::Dir(j, _) if *j == k);

    if let Some(pos) = chain.iter().position(is_dir_t) {
        let rotated: Vec<MatExpr> = chain[pos..]
            .iter()
            .chain(chain[..pos].iter())
            .cloned()
            .collect();
        return Some(rotated[1..].to_vec());
    }
    if let Some(pos) = chain.iter().position(is_dir) {
        // tr(M) = tr(M'): flip so the direction appears transposed.
        let flipped: Vec<MatExpr> = chain.iter().rev().map(transpose_flip).collect();
        let pos = chain.len() - 1 - pos;
        let rotated: Vec<MatExpr> = flipped[pos..]
            .iter()
            .chain(flipped[..pos].iter())
            .cloned()
            .collect();
        return Some(rotated[1..].to_vec());
    }
    None
}

fn transpose_flip(a: &MatExpr) -> MatExpr {
    match a {
        MatExpr::Transpose(x) => (**x).clone(),
        MatExpr::Identity(n) => MatExpr::Identity(*n),
        MatExpr::Inverse(x) => MatExpr::Inverse(Box::new(transpose_canonical(x))),
        MatExpr::Const(..) | MatExpr::Var(..) | MatExpr::Dir(..) => a.clone().t(),
        other => transpose_canonical(other),
    }
}

/// Canonical trace form of `tr(Z' G)` for a given gradient; used to check the
/// defining identity symbolically.
pub fn inner_product_form(g: &MatExpr, k: usize, shape: Shape) -> ScalarExpr {
    let z = MatExpr::Dir(k, shape).t();
    crate::expr::simplify_scalar(&ScalarExpr::trace(MatExpr::mul(z, g.clone())))
}

/// Convenience: canonical chain display of a trace argument (used by tests).
pub fn canonical_chain(m: &MatExpr) -> Vec<MatExpr> {
    canonicalize_trace_chain(&flatten_product(m))
}
