//! Shaped ASTs for concrete matrix- and scalar-valued expressions.
//!
//! Matrices and scalars are separate sorts: a `1x1` matrix is not a scalar.
//! Every matrix node has a well-defined [`Shape`]; [`MatExpr::shape`] checks
//! the whole tree and reports the offending node path on mismatch.
//!
//! Coefficients in the symbolic layer are exact rationals; floating point
//! appears only in [`eval`].

mod eval;
mod json;
mod parse;
mod print;
pub(crate) mod simplify;

pub use eval::{eval_mat, eval_scalar, evaluate, random_matrix, random_spd, Env, Value};
pub use json::{expr_from_json, expr_to_json};
pub use parse::{parse, parse_decls, Decls, Role, SymbolDecl};
pub use print::{format_expr, format_expr_latex, format_mat, format_scalar};
pub use simplify::{simplify, simplify_mat, simplify_scalar};

use num::rational::Rational64;
use std::fmt;

/// Row/column dimensions of a matrix expression. Both are at least 1.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub fn new(rows: usize, cols: usize) -> Shape {
        assert!(rows >= 1 && cols >= 1, "shape dimensions must be >= 1");
        Shape { rows, cols }
    }

    pub fn square(n: usize) -> Shape {
        Shape::new(n, n)
    }

    pub fn is_square(self) -> bool {
        self.rows == self.cols
    }

    pub fn transposed(self) -> Shape {
        Shape {
            rows: self.cols,
            cols: self.rows,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// Matrix-valued expression.
///
/// `Dir(k, shape)` is the k-th direction placeholder: a reserved symbol that
/// differentiation introduces (k = 1 prints as `Z`, k = 2 as `T`, k >= 3 as
/// `Z3`, `Z4`, ...). Directions are distinct from [`MatExpr::Var`] so that
/// "linear in the k-th direction" is a structural property.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum MatExpr {
    Const(String, Shape),
    Var(String, Shape),
    Dir(usize, Shape),
    Identity(usize),
    Zero(Shape),
    Add(Vec<MatExpr>),
    Neg(Box<MatExpr>),
    ScalarMul(Box<ScalarExpr>, Box<MatExpr>),
    MatMul(Box<MatExpr>, Box<MatExpr>),
    Transpose(Box<MatExpr>),
    Inverse(Box<MatExpr>),
}

/// Scalar-valued expression. Literals are exact rationals.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum ScalarExpr {
    Lit(Rational64),
    Trace(Box<MatExpr>),
    LogDet(Box<MatExpr>),
    SAdd(Vec<ScalarExpr>),
    SMul(Vec<ScalarExpr>),
    SNeg(Box<ScalarExpr>),
}

/// Either sort, as returned by the parser.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Expr {
    Mat(MatExpr),
    Scalar(ScalarExpr),
}

/// Result of shape inference: a matrix shape or the scalar marker.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Sort {
    Matrix(Shape),
    Scalar,
}

/// Printable name of the k-th direction symbol.
pub fn dir_name(k: usize) -> String {
    match k {
        1 => "Z".to_string(),
        2 => "T".to_string(),
        k => format!("Z{k}"),
    }
}

/// Inverse of [`dir_name`]: `Z -> 1`, `T -> 2`, `Z3 -> 3`, ...
pub fn dir_index(name: &str) -> Option<usize> {
    match name {
        "Z" => Some(1),
        "T" => Some(2),
        _ => {
            let rest = name.strip_prefix('Z')?;
            let k: usize = rest.parse().ok()?;
            if k >= 3 {
                Some(k)
            } else {
                None
            }
        }
    }
}

/// Errors from shape inference, parsing and numeric evaluation.
#[derive(Clone, PartialEq, Debug)]
pub enum ExprError {
    ShapeMismatch {
        path: String,
        expected: Shape,
        found: Shape,
    },
    NonSquare {
        path: String,
        found: Shape,
    },
    InvalidIdentity {
        path: String,
    },
    UnboundSymbol(String),
    SingularMatrix {
        cond: f64,
    },
    NonPositiveDeterminant {
        det: f64,
    },
    NonFiniteValue,
    Syntax {
        line: usize,
        col: usize,
        expected: String,
    },
    UnknownSymbol {
        line: usize,
        col: usize,
        name: String,
    },
    InvalidDeclaration(String),
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprError::ShapeMismatch {
                path,
                expected,
                found,
            } => {
                write!(
                    f,
                    "shape mismatch at {path}: expected {expected}, found {found}"
                )
            }
            ExprError::NonSquare { path, found } => {
                write!(f, "non-square operand at {path}: {found}")
            }
            ExprError::InvalidIdentity { path } => {
                write!(f, "identity dimension must be >= 1 at {path}")
            }
            ExprError::UnboundSymbol(name) => write!(f, "unbound symbol {name}"),
            ExprError::SingularMatrix { cond } => {
                write!(
                    f,
                    "matrix is numerically singular (condition estimate {cond:.3e})"
                )
            }
            ExprError::NonPositiveDeterminant { det } => {
                write!(f, "logdet requires a positive determinant, got {det:.3e}")
            }
            ExprError::NonFiniteValue => write!(f, "non-finite value in evaluation"),
            ExprError::Syntax {
                line,
                col,
                expected,
            } => {
                write!(f, "syntax error at {line}:{col}: expected {expected}")
            }
            ExprError::UnknownSymbol { line, col, name } => {
                write!(f, "unknown symbol {name} at {line}:{col}")
            }
            ExprError::InvalidDeclaration(msg) => write!(f, "invalid declaration: {msg}"),
        }
    }
}

impl std::error::Error for ExprError {}

impl MatExpr {
    pub fn var(name: &str, rows: usize, cols: usize) -> MatExpr {
        MatExpr::Var(name.to_string(), Shape::new(rows, cols))
    }

    pub fn cnst(name: &str, rows: usize, cols: usize) -> MatExpr {
        MatExpr::Const(name.to_string(), Shape::new(rows, cols))
    }

    pub fn dir(k: usize, shape: Shape) -> MatExpr {
        MatExpr::Dir(k, shape)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(a: MatExpr, b: MatExpr) -> MatExpr {
        MatExpr::MatMul(Box::new(a), Box::new(b))
    }

    pub fn add(terms: Vec<MatExpr>) -> MatExpr {
        MatExpr::Add(terms)
    }

    pub fn smul(s: ScalarExpr, m: MatExpr) -> MatExpr {
        MatExpr::ScalarMul(Box::new(s), Box::new(m))
    }

    pub fn t(self) -> MatExpr {
        MatExpr::Transpose(Box::new(self))
    }

    pub fn inv(self) -> MatExpr {
        MatExpr::Inverse(Box::new(self))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(self) -> MatExpr {
        MatExpr::Neg(Box::new(self))
    }

    /// Shape of the whole tree, checking every node.
    pub fn shape(&self) -> Result<Shape, ExprError> {
        self.shape_at("root")
    }

    fn shape_at(&self, path: &str) -> Result<Shape, ExprError> {
        match self {
            MatExpr::Const(_, s) | MatExpr::Var(_, s) | MatExpr::Dir(_, s) | MatExpr::Zero(s) => {
                Ok(*s)
            }
            MatExpr::Identity(n) => {
                if *n == 0 {
                    Err(ExprError::InvalidIdentity {
                        path: path.to_string(),
                    })
                } else {
                    Ok(Shape::square(*n))
                }
            }
            MatExpr::Add(terms) => {
                if terms.is_empty() {
                    return Err(ExprError::InvalidIdentity {
                        path: path.to_string(),
                    });
                }
                let first = terms[0].shape_at(&format!("{path}.add[0]"))?;
                for (i, t) in terms.iter().enumerate().skip(1) {
                    let s = t.shape_at(&format!("{path}.add[{i}]"))?;
                    if s != first {
                        return Err(ExprError::ShapeMismatch {
                            path: format!("{path}.add[{i}]"),
                            expected: first,
                            found: s,
                        });
                    }
                }
                Ok(first)
            }
            MatExpr::Neg(m) => m.shape_at(&format!("{path}.neg")),
            MatExpr::ScalarMul(s, m) => {
                s.validate_at(&format!("{path}.scalar"))?;
                m.shape_at(&format!("{path}.scalarmul"))
            }
            MatExpr::MatMul(a, b) => {
                let sa = a.shape_at(&format!("{path}.matmul[0]"))?;
                let sb = b.shape_at(&format!("{path}.matmul[1]"))?;
                if sa.cols != sb.rows {
                    return Err(ExprError::ShapeMismatch {
                        path: format!("{path}.matmul[1]"),
                        expected: Shape::new(sa.cols, sb.cols),
                        found: sb,
                    });
                }
                Ok(Shape::new(sa.rows, sb.cols))
            }
            MatExpr::Transpose(m) => Ok(m.shape_at(&format!("{path}.transpose"))?.transposed()),
            MatExpr::Inverse(m) => {
                let s = m.shape_at(&format!("{path}.inverse"))?;
                if !s.is_square() {
                    return Err(ExprError::NonSquare {
                        path: format!("{path}.inverse"),
                        found: s,
                    });
                }
                Ok(s)
            }
        }
    }

    /// True if any `Dir` node occurs in the tree (any index when `k` is None).
    pub fn contains_dir(&self, k: Option<usize>) -> bool {
        match self {
            MatExpr::Dir(j, _) => k.is_none_or(|k| *j == k),
            MatExpr::Const(..) | MatExpr::Var(..) | MatExpr::Identity(_) | MatExpr::Zero(_) => {
                false
            }
            MatExpr::Add(ts) => ts.iter().any(|t| t.contains_dir(k)),
            MatExpr::Neg(m) | MatExpr::Transpose(m) | MatExpr::Inverse(m) => m.contains_dir(k),
            MatExpr::ScalarMul(s, m) => s.contains_dir(k) || m.contains_dir(k),
            MatExpr::MatMul(a, b) => a.contains_dir(k) || b.contains_dir(k),
        }
    }

    /// Number of occurrences of `Dir(k)`.
    pub fn count_dir(&self, k: usize) -> usize {
        match self {
            MatExpr::Dir(j, _) => usize::from(*j == k),
            MatExpr::Const(..) | MatExpr::Var(..) | MatExpr::Identity(_) | MatExpr::Zero(_) => 0,
            MatExpr::Add(ts) => ts.iter().map(|t| t.count_dir(k)).sum(),
            MatExpr::Neg(m) | MatExpr::Transpose(m) | MatExpr::Inverse(m) => m.count_dir(k),
            MatExpr::ScalarMul(s, m) => s.count_dir(k) + m.count_dir(k),
            MatExpr::MatMul(a, b) => a.count_dir(k) + b.count_dir(k),
        }
    }
}

impl ScalarExpr {
    pub fn lit(n: i64) -> ScalarExpr {
        ScalarExpr::Lit(Rational64::from_integer(n))
    }

    pub fn ratio(n: i64, d: i64) -> ScalarExpr {
        ScalarExpr::Lit(Rational64::new(n, d))
    }

    pub fn trace(m: MatExpr) -> ScalarExpr {
        ScalarExpr::Trace(Box::new(m))
    }

    pub fn logdet(m: MatExpr) -> ScalarExpr {
        ScalarExpr::LogDet(Box::new(m))
    }

    /// Validate shapes of all embedded matrix expressions.
    pub fn validate(&self) -> Result<(), ExprError> {
        self.validate_at("root")
    }

    fn validate_at(&self, path: &str) -> Result<(), ExprError> {
        match self {
            ScalarExpr::Lit(_) => Ok(()),
            ScalarExpr::Trace(m) => {
                let s = m.shape_at(&format!("{path}.trace"))?;
                if !s.is_square() {
                    return Err(ExprError::NonSquare {
                        path: format!("{path}.trace"),
                        found: s,
                    });
                }
                Ok(())
            }
            ScalarExpr::LogDet(m) => {
                let s = m.shape_at(&format!("{path}.logdet"))?;
                if !s.is_square() {
                    return Err(ExprError::NonSquare {
                        path: format!("{path}.logdet"),
                        found: s,
                    });
                }
                Ok(())
            }
            ScalarExpr::SAdd(ts) => {
                for (i, t) in ts.iter().enumerate() {
                    t.validate_at(&format!("{path}.sadd[{i}]"))?;
                }
                Ok(())
            }
            ScalarExpr::SMul(ts) => {
                for (i, t) in ts.iter().enumerate() {
                    t.validate_at(&format!("{path}.smul[{i}]"))?;
                }
                Ok(())
            }
            ScalarExpr::SNeg(t) => t.validate_at(&format!("{path}.sneg")),
        }
    }

    pub fn contains_dir(&self, k: Option<usize>) -> bool {
        match self {
            ScalarExpr::Lit(_) => false,
            ScalarExpr::Trace(m) | ScalarExpr::LogDet(m) => m.contains_dir(k),
            ScalarExpr::SAdd(ts) | ScalarExpr::SMul(ts) => ts.iter().any(|t| t.contains_dir(k)),
            ScalarExpr::SNeg(t) => t.contains_dir(k),
        }
    }

    pub fn count_dir(&self, k: usize) -> usize {
        match self {
            ScalarExpr::Lit(_) => 0,
            ScalarExpr::Trace(m) | ScalarExpr::LogDet(m) => m.count_dir(k),
            ScalarExpr::SAdd(ts) | ScalarExpr::SMul(ts) => ts.iter().map(|t| t.count_dir(k)).sum(),
            ScalarExpr::SNeg(t) => t.count_dir(k),
        }
    }
}

impl Expr {
    /// Shape inference over either sort.
    pub fn sort(&self) -> Result<Sort, ExprError> {
        match self {
            Expr::Mat(m) => Ok(Sort::Matrix(m.shape()?)),
            Expr::Scalar(s) => {
                s.validate()?;
                Ok(Sort::Scalar)
            }
        }
    }

    pub fn contains_dir(&self, k: Option<usize>) -> bool {
        match self {
            Expr::Mat(m) => m.contains_dir(k),
            Expr::Scalar(s) => s.contains_dir(k),
        }
    }

    pub fn count_dir(&self, k: usize) -> usize {
        match self {
            Expr::Mat(m) => m.count_dir(k),
            Expr::Scalar(s) => s.count_dir(k),
        }
    }
}

/// Shape inference entry point: the unique shape of `e`, or the scalar marker.
pub fn infer_shape(e: &Expr) -> Result<Sort, ExprError> {
    e.sort()
}
