//! Numeric evaluation of expressions against an environment of concrete
//! matrices. Pure: the result depends only on the expression and the
//! environment.

use super::{dir_name, Expr, ExprError, MatExpr, ScalarExpr, Shape};
use crate::expr::parse::Decls;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Binding of symbol names to concrete matrices, plus the seed that
/// produced them (recorded for reproducibility).
#[derive(Clone, Debug)]
pub struct Env {
    bindings: BTreeMap<String, DMatrix<f64>>,
    pub seed: u64,
}

/// Evaluation result: one of the two sorts.
#[derive(Clone, Debug)]
pub enum Value {
    Scalar(f64),
    Matrix(DMatrix<f64>),
}

impl Value {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(x) => Some(*x),
            Value::Matrix(_) => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&DMatrix<f64>> {
        match self {
            Value::Matrix(m) => Some(m),
            Value::Scalar(_) => None,
        }
    }

    /// Frobenius norm (absolute value for scalars).
    pub fn norm(&self) -> f64 {
        match self {
            Value::Scalar(x) => x.abs(),
            Value::Matrix(m) => m.norm(),
        }
    }

    pub fn sub(&self, other: &Value) -> Value {
        match (self, other) {
            (Value::Scalar(a), Value::Scalar(b)) => Value::Scalar(a - b),
            (Value::Matrix(a), Value::Matrix(b)) => Value::Matrix(a - b),
            _ => panic!("sort mismatch in Value::sub"),
        }
    }
}

impl Env {
    pub fn new(seed: u64) -> Env {
        Env {
            bindings: BTreeMap::new(),
            seed,
        }
    }

    pub fn bind(&mut self, name: &str, m: DMatrix<f64>) {
        self.bindings.insert(name.to_string(), m);
    }

    pub fn with_bound(&self, name: &str, m: DMatrix<f64>) -> Env {
        let mut e = self.clone();
        e.bind(name, m);
        e
    }

    pub fn get(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.bindings.get(name)
    }

    /// Sample an environment for every declared symbol. Square symbols named
    /// in `spd` are drawn symmetric positive definite; everything else gets
    /// independent entries in [-1, 1].
    pub fn random(decls: &Decls, spd: &[String], seed: u64) -> Env {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut env = Env::new(seed);
        for d in decls.iter() {
            let m = if spd.iter().any(|n| n == &d.name) && d.shape.is_square() {
                random_spd(&mut rng, d.shape.rows)
            } else {
                random_matrix(&mut rng, d.shape.rows, d.shape.cols)
            };
            env.bind(&d.name, m);
        }
        env
    }
}

/// Dense matrix with independent entries uniform in [-1, 1].
pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Well-conditioned random SPD matrix: Q diag(d) Qᵀ with d in [0.5, 2.5].
pub fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let a = random_matrix(rng, n, n) + DMatrix::identity(n, n) * 2.0;
    let q = a.qr().q();
    let d = DMatrix::from_fn(
        n,
        n,
        |i, j| {
            if i == j {
                rng.gen_range(0.5..2.5)
            } else {
                0.0
            }
        },
    );
    &q * d * q.transpose()
}

/// Evaluate either sort.
pub fn evaluate(e: &Expr, env: &Env) -> Result<Value, ExprError> {
    let v = match e {
        Expr::Mat(m) => Value::Matrix(eval_mat(m, env)?),
        Expr::Scalar(s) => Value::Scalar(eval_scalar(s, env)?),
    };
    let finite = match &v {
        Value::Scalar(x) => x.is_finite(),
        Value::Matrix(m) => m.iter().all(|x| x.is_finite()),
    };
    if !finite {
        return Err(ExprError::NonFiniteValue);
    }
    Ok(v)
}

pub fn eval_mat(m: &MatExpr, env: &Env) -> Result<DMatrix<f64>, ExprError> {
    match m {
        MatExpr::Const(name, shape) | MatExpr::Var(name, shape) => lookup(env, name, *shape),
        MatExpr::Dir(k, shape) => lookup(env, &dir_name(*k), *shape),
        MatExpr::Identity(n) => Ok(DMatrix::identity(*n, *n)),
        MatExpr::Zero(s) => Ok(DMatrix::zeros(s.rows, s.cols)),
        MatExpr::Add(ts) => {
            let mut acc = eval_mat(&ts[0], env)?;
            for t in &ts[1..] {
                acc += eval_mat(t, env)?;
            }
            Ok(acc)
        }
        MatExpr::Neg(t) => Ok(-eval_mat(t, env)?),
        MatExpr::ScalarMul(s, t) => Ok(eval_mat(t, env)? * eval_scalar(s, env)?),
        MatExpr::MatMul(a, b) => Ok(eval_mat(a, env)? * eval_mat(b, env)?),
        MatExpr::Transpose(t) => Ok(eval_mat(t, env)?.transpose()),
        MatExpr::Inverse(t) => {
            let v = eval_mat(t, env)?;
            invert(&v)
        }
    }
}

pub fn eval_scalar(s: &ScalarExpr, env: &Env) -> Result<f64, ExprError> {
    match s {
        ScalarExpr::Lit(c) => Ok(*c.numer() as f64 / *c.denom() as f64),
        ScalarExpr::Trace(m) => Ok(eval_mat(m, env)?.trace()),
        ScalarExpr::LogDet(m) => {
            let v = eval_mat(m, env)?;
            let det = v.determinant();
            // NaN-safe: reject anything that is not strictly positive.
            if det.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
                return Err(ExprError::NonPositiveDeterminant { det });
            }
            Ok(det.ln())
        }
        ScalarExpr::SAdd(ts) => {
            let mut acc = 0.0;
            for t in ts {
                acc += eval_scalar(t, env)?;
            }
            Ok(acc)
        }
        ScalarExpr::SMul(ts) => {
            let mut acc = 1.0;
            for t in ts {
                acc *= eval_scalar(t, env)?;
            }
            Ok(acc)
        }
        ScalarExpr::SNeg(t) => Ok(-eval_scalar(t, env)?),
    }
}

fn lookup(env: &Env, name: &str, shape: Shape) -> Result<DMatrix<f64>, ExprError> {
    let m = env
        .get(name)
        .ok_or_else(|| ExprError::UnboundSymbol(name.to_string()))?;
    if m.nrows() != shape.rows || m.ncols() != shape.cols {
        return Err(ExprError::ShapeMismatch {
            path: format!("binding of {name}"),
            expected: shape,
            found: Shape::new(m.nrows().max(1), m.ncols().max(1)),
        });
    }
    Ok(m.clone())
}

fn invert(v: &DMatrix<f64>) -> Result<DMatrix<f64>, ExprError> {
    let sv = v.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !cond.is_finite() || cond > 1.0 / f64::EPSILON {
        return Err(ExprError::SingularMatrix { cond });
    }
    v.clone()
        .try_inverse()
        .ok_or(ExprError::SingularMatrix { cond })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse::{parse, parse_decls};

    #[test]
    fn trace_of_identity() {
        let env = Env::new(0);
        let v = eval_scalar(&ScalarExpr::trace(MatExpr::Identity(3)), &env).unwrap();
        assert_eq!(v, 3.0);
    }

    #[test]
    fn logdet_of_scaled_identity() {
        let mut env = Env::new(0);
        env.bind("X", DMatrix::identity(2, 2) * 2.0);
        let f = ScalarExpr::logdet(MatExpr::var("X", 2, 2));
        let v = eval_scalar(&f, &env).unwrap();
        assert!((v - 2.0 * 2.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rayleigh_matches_elementwise_triple_sum() {
        let decls = parse_decls(&["X:3x2:var".to_string(), "A:3x3:const".to_string()]).unwrap();
        let env = Env::random(&decls, &[], 7);
        let e = parse("tr(X'*A*X)", &decls).unwrap();
        let got = evaluate(&e, &env).unwrap().as_scalar().unwrap();
        let x = env.get("X").unwrap();
        let a = env.get("A").unwrap();
        let mut want = 0.0;
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..3 {
                    want += x[(j, i)] * a[(j, k)] * x[(k, i)];
                }
            }
        }
        assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }

    #[test]
    fn singular_inverse_is_an_error() {
        let mut env = Env::new(0);
        env.bind("X", DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        let e = MatExpr::var("X", 2, 2).inv();
        assert!(matches!(
            eval_mat(&e, &env),
            Err(ExprError::SingularMatrix { .. })
        ));
    }

    #[test]
    fn nonpositive_determinant_is_an_error() {
        let mut env = Env::new(0);
        env.bind("X", DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
        let f = ScalarExpr::logdet(MatExpr::var("X", 2, 2));
        assert!(matches!(
            eval_scalar(&f, &env),
            Err(ExprError::NonPositiveDeterminant { .. })
        ));
    }

    #[test]
    fn unbound_symbol_is_an_error() {
        let env = Env::new(0);
        let e = MatExpr::var("X", 2, 2);
        assert!(matches!(
            eval_mat(&e, &env),
            Err(ExprError::UnboundSymbol(_))
        ));
    }

    #[test]
    fn env_sampling_is_deterministic_in_the_seed() {
        let decls = parse_decls(&["X:3x2:var".to_string(), "S:3x3:var".to_string()]).unwrap();
        let a = Env::random(&decls, &["S".to_string()], 42);
        let b = Env::random(&decls, &["S".to_string()], 42);
        assert_eq!(a.get("X"), b.get("X"));
        assert_eq!(a.get("S"), b.get("S"));
        // SPD sample really is SPD.
        let s = a.get("S").unwrap();
        assert!((s - s.transpose()).norm() < 1e-12);
        assert!(s.clone().symmetric_eigenvalues().iter().all(|&l| l > 0.0));
    }
}
