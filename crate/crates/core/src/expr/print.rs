//! Text and LaTeX printers. The text form follows the input grammar, so the
//! canonical output of the simplifier parses back to the identical tree.

use super::{dir_name, Expr, MatExpr, ScalarExpr};
use num::rational::Rational64;

pub fn format_expr(e: &Expr) -> String {
    match e {
        Expr::Mat(m) => format_mat(m),
        Expr::Scalar(s) => format_scalar(s),
    }
}

pub fn format_mat(m: &MatExpr) -> String {
    mat_text(m, Prec::Sum)
}

pub fn format_scalar(s: &ScalarExpr) -> String {
    scalar_text(s, Prec::Sum)
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Prec {
    Sum,
    Product,
    Atom,
}

fn fmt_rat(r: Rational64) -> String {
    if *r.denom() == 1 {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Split a leading minus sign off a term, returning the positive remainder.
fn split_neg_scalar(s: &ScalarExpr) -> Option<ScalarExpr> {
    match s {
        ScalarExpr::Lit(c) if *c < Rational64::from_integer(0) => Some(ScalarExpr::Lit(-*c)),
        ScalarExpr::SNeg(inner) => Some((**inner).clone()),
        ScalarExpr::SMul(fs) => match fs.first() {
            Some(ScalarExpr::Lit(c)) if *c < Rational64::from_integer(0) => {
                let pos = -*c;
                if pos == Rational64::from_integer(1) && fs.len() == 2 {
                    Some(fs[1].clone())
                } else {
                    let mut v = fs.clone();
                    if pos == Rational64::from_integer(1) {
                        v.remove(0);
                    } else {
                        v[0] = ScalarExpr::Lit(pos);
                    }
                    Some(ScalarExpr::SMul(v))
                }
            }
            _ => None,
        },
        _ => None,
    }
}

fn split_neg_mat(m: &MatExpr) -> Option<MatExpr> {
    match m {
        MatExpr::Neg(inner) => Some((**inner).clone()),
        MatExpr::ScalarMul(s, inner) => {
            let pos = split_neg_scalar(s)?;
            if pos == ScalarExpr::lit(1) {
                Some((**inner).clone())
            } else {
                Some(MatExpr::ScalarMul(Box::new(pos), inner.clone()))
            }
        }
        _ => None,
    }
}

fn wrap(s: String, inner: Prec, outer: Prec) -> String {
    if inner < outer {
        format!("({s})")
    } else {
        s
    }
}

fn mat_prec(m: &MatExpr) -> Prec {
    match m {
        MatExpr::Add(_) => Prec::Sum,
        MatExpr::Neg(_) | MatExpr::ScalarMul(..) | MatExpr::MatMul(..) => Prec::Product,
        _ => Prec::Atom,
    }
}

fn scalar_prec(s: &ScalarExpr) -> Prec {
    match s {
        ScalarExpr::SAdd(_) => Prec::Sum,
        ScalarExpr::SNeg(_) | ScalarExpr::SMul(_) => Prec::Product,
        ScalarExpr::Lit(c) if *c < Rational64::from_integer(0) => Prec::Product,
        _ => Prec::Atom,
    }
}

fn mat_text(m: &MatExpr, outer: Prec) -> String {
    let s = match m {
        MatExpr::Const(name, _) | MatExpr::Var(name, _) => name.clone(),
        MatExpr::Dir(k, _) => dir_name(*k),
        MatExpr::Identity(n) => format!("I({n})"),
        MatExpr::Zero(_) => "0".to_string(),
        MatExpr::Add(terms) => {
            let mut out = String::new();
            for (i, t) in terms.iter().enumerate() {
                if i == 0 {
                    out.push_str(&mat_text(t, Prec::Product));
                } else if let Some(pos) = split_neg_mat(t) {
                    out.push_str(" - ");
                    out.push_str(&mat_text(&pos, Prec::Product));
                } else {
                    out.push_str(" + ");
                    out.push_str(&mat_text(t, Prec::Product));
                }
            }
            out
        }
        MatExpr::Neg(inner) => format!("-{}", mat_text(inner, Prec::Product)),
        MatExpr::ScalarMul(s, inner) => {
            if let Some(pos) = split_neg_mat(m) {
                format!("-{}", mat_text(&pos, Prec::Product))
            } else {
                format!(
                    "{}*{}",
                    scalar_text(s, Prec::Atom),
                    mat_text(inner, Prec::Product)
                )
            }
        }
        MatExpr::MatMul(a, b) => {
            format!("{}*{}", mat_text(a, Prec::Product), mat_text(b, Prec::Atom))
        }
        MatExpr::Transpose(inner) => format!("{}'", mat_text(inner, Prec::Atom)),
        MatExpr::Inverse(inner) => format!("inv({})", mat_text(inner, Prec::Sum)),
    };
    wrap(s, mat_prec(m), outer)
}

fn scalar_text(s: &ScalarExpr, outer: Prec) -> String {
    let out = match s {
        ScalarExpr::Lit(c) => fmt_rat(*c),
        ScalarExpr::Trace(m) => format!("tr({})", mat_text(m, Prec::Sum)),
        ScalarExpr::LogDet(m) => format!("logdet({})", mat_text(m, Prec::Sum)),
        ScalarExpr::SAdd(terms) => {
            let mut out = String::new();
            for (i, t) in terms.iter().enumerate() {
                if i == 0 {
                    out.push_str(&scalar_text(t, Prec::Product));
                } else if let Some(pos) = split_neg_scalar(t) {
                    out.push_str(" - ");
                    out.push_str(&scalar_text(&pos, Prec::Product));
                } else {
                    out.push_str(" + ");
                    out.push_str(&scalar_text(t, Prec::Product));
                }
            }
            out
        }
        ScalarExpr::SMul(fs) => {
            if let Some(pos) = split_neg_scalar(s) {
                format!("-{}", scalar_text(&pos, Prec::Product))
            } else {
                fs.iter()
                    .map(|f| scalar_text(f, Prec::Atom))
                    .collect::<Vec<_>>()
                    .join("*")
            }
        }
        ScalarExpr::SNeg(inner) => format!("-{}", scalar_text(inner, Prec::Product)),
    };
    wrap(out, scalar_prec(s), outer)
}

pub fn format_expr_latex(e: &Expr) -> String {
    match e {
        Expr::Mat(m) => mat_latex(m, Prec::Sum),
        Expr::Scalar(s) => scalar_latex(s, Prec::Sum),
    }
}

fn mat_latex(m: &MatExpr, outer: Prec) -> String {
    let s = match m {
        MatExpr::Const(name, _) | MatExpr::Var(name, _) => name.clone(),
        MatExpr::Dir(k, _) => dir_name(*k),
        MatExpr::Identity(n) => format!("I_{{{n}}}"),
        MatExpr::Zero(_) => "0".to_string(),
        MatExpr::Add(terms) => {
            let mut out = String::new();
            for (i, t) in terms.iter().enumerate() {
                if i == 0 {
                    out.push_str(&mat_latex(t, Prec::Product));
                } else if let Some(pos) = split_neg_mat(t) {
                    out.push_str(" - ");
                    out.push_str(&mat_latex(&pos, Prec::Product));
                } else {
                    out.push_str(" + ");
                    out.push_str(&mat_latex(t, Prec::Product));
                }
            }
            out
        }
        MatExpr::Neg(inner) => format!("-{}", mat_latex(inner, Prec::Product)),
        MatExpr::ScalarMul(s, inner) => {
            if let Some(pos) = split_neg_mat(m) {
                format!("-{}", mat_latex(&pos, Prec::Product))
            } else {
                format!(
                    "{}\\,{}",
                    scalar_latex(s, Prec::Atom),
                    mat_latex(inner, Prec::Product)
                )
            }
        }
        MatExpr::MatMul(a, b) => {
            format!(
                "{} {}",
                mat_latex(a, Prec::Product),
                mat_latex(b, Prec::Atom)
            )
        }
        MatExpr::Transpose(inner) => format!("{{{}}}^{{T}}", mat_latex(inner, Prec::Atom)),
        MatExpr::Inverse(inner) => format!("{{{}}}^{{-1}}", mat_latex(inner, Prec::Atom)),
    };
    wrap(s, mat_prec(m), outer)
}

fn scalar_latex(s: &ScalarExpr, outer: Prec) -> String {
    let out = match s {
        ScalarExpr::Lit(c) => fmt_rat(*c),
        ScalarExpr::Trace(m) => {
            format!(
                "\\operatorname{{tr}}\\left\\{{{}\\right\\}}",
                mat_latex(m, Prec::Sum)
            )
        }
        ScalarExpr::LogDet(m) => {
            format!("\\log\\det\\left({}\\right)", mat_latex(m, Prec::Sum))
        }
        ScalarExpr::SAdd(terms) => {
            let mut out = String::new();
            for (i, t) in terms.iter().enumerate() {
                if i == 0 {
                    out.push_str(&scalar_latex(t, Prec::Product));
                } else if let Some(pos) = split_neg_scalar(t) {
                    out.push_str(" - ");
                    out.push_str(&scalar_latex(&pos, Prec::Product));
                } else {
                    out.push_str(" + ");
                    out.push_str(&scalar_latex(t, Prec::Product));
                }
            }
            out
        }
        ScalarExpr::SMul(fs) => {
            if let Some(pos) = split_neg_scalar(s) {
                format!("-{}", scalar_latex(&pos, Prec::Product))
            } else {
                fs.iter()
                    .map(|f| scalar_latex(f, Prec::Atom))
                    .collect::<Vec<_>>()
                    .join("\\,")
            }
        }
        ScalarExpr::SNeg(inner) => format!("-{}", scalar_latex(inner, Prec::Product)),
    };
    wrap(out, scalar_prec(s), outer)
}
