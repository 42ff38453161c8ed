//! Golden corpus of scalar functions used across the verification suites:
//! each entry names a function text, its symbol declarations, the
//! differentiation variable, and which square variables must be sampled
//! symmetric positive definite for the function to be defined.

use crate::expr::{parse, parse_decls, Decls, Expr, ExprError, ScalarExpr};

#[derive(Clone, Copy, Debug)]
pub struct CorpusEntry {
    pub name: &'static str,
    pub text: &'static str,
    pub decls: &'static [&'static str],
    pub wrt: &'static str,
    pub spd: &'static [&'static str],
}

pub fn golden_corpus() -> Vec<CorpusEntry> {
    vec![
        CorpusEntry {
            name: "rayleigh",
            text: "tr(X'*A*X)",
            decls: &["X:3x2:var", "A:3x3:const"],
            wrt: "X",
            spd: &[],
        },
        CorpusEntry {
            name: "rayleigh_square",
            text: "tr(X'*A*X)",
            decls: &["X:3x3:var", "A:3x3:const"],
            wrt: "X",
            spd: &[],
        },
        CorpusEntry {
            name: "linear",
            text: "tr(B'*X)",
            decls: &["X:3x2:var", "B:3x2:const"],
            wrt: "X",
            spd: &[],
        },
        CorpusEntry {
            name: "logdet",
            text: "logdet(X)",
            decls: &["X:4x4:var"],
            wrt: "X",
            spd: &["X"],
        },
        CorpusEntry {
            name: "logdet_inverse",
            text: "logdet(inv(X))",
            decls: &["X:4x4:var"],
            wrt: "X",
            spd: &["X"],
        },
        CorpusEntry {
            name: "trace_of_inverse",
            text: "tr(A*inv(X))",
            decls: &["X:4x4:var", "A:4x4:const"],
            wrt: "X",
            spd: &["X"],
        },
        CorpusEntry {
            name: "sandwich",
            text: "tr(A*X*C)",
            decls: &["X:3x2:var", "A:3x3:const", "C:2x3:const"],
            wrt: "X",
            spd: &[],
        },
        CorpusEntry {
            name: "gram",
            text: "tr(X'*X)",
            decls: &["X:3x2:var"],
            wrt: "X",
            spd: &[],
        },
        CorpusEntry {
            name: "squared_linear",
            text: "tr(B'*X)*tr(B'*X)",
            decls: &["X:3x2:var", "B:3x2:const"],
            wrt: "X",
            spd: &[],
        },
        CorpusEntry {
            name: "mixed",
            text: "tr(X'*A*X) + 2*tr(B'*X)",
            decls: &["X:3x2:var", "A:3x3:const", "B:3x2:const"],
            wrt: "X",
            spd: &[],
        },
    ]
}

impl CorpusEntry {
    /// Declarations including direction symbols shaped like the variable.
    pub fn decls(&self) -> Result<Decls, ExprError> {
        let specs: Vec<String> = self.decls.iter().map(|s| s.to_string()).collect();
        let mut d = parse_decls(&specs)?;
        let shape = d
            .get(self.wrt)
            .ok_or_else(|| ExprError::UnboundSymbol(self.wrt.to_string()))?
            .shape;
        d.declare_directions(shape, 2)?;
        Ok(d)
    }

    pub fn expr(&self) -> Result<Expr, ExprError> {
        parse(self.text, &self.decls()?)
    }

    pub fn scalar(&self) -> Result<ScalarExpr, ExprError> {
        match self.expr()? {
            Expr::Scalar(s) => Ok(s),
            Expr::Mat(_) => Err(ExprError::InvalidDeclaration(format!(
                "{} is not scalar-valued",
                self.name
            ))),
        }
    }

    pub fn spd_names(&self) -> Vec<String> {
        self.spd.iter().map(|s| s.to_string()).collect()
    }
}
