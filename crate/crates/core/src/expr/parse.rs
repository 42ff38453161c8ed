//! Lexer and recursive-descent parser for the expression grammar:
//!
//! ```text
//! expr    := term (('+'|'-') term)*
//! term    := factor ('*' factor)*
//! factor  := rational | matom | '(' expr ')' | '-' factor
//! matom   := ident postfix* | 'tr' '(' expr ')' | 'logdet' '(' expr ')'
//!          | 'inv' '(' expr ')' | 'I' '(' integer ')' | '(' expr ')' postfix*
//! postfix := '\''                      # transpose
//! ident   := [A-Za-z][A-Za-z0-9_]*
//! rational:= integer ('/' integer)?
//! ```
//!
//! Symbols are declared out of band as `NAME:RxC:{const|var|dir}`. The
//! parser folds unary minus into rational coefficients, so text produced by
//! the printers parses back to the same tree.

use super::{dir_index, Expr, ExprError, MatExpr, ScalarExpr, Shape};
use num::rational::Rational64;
use std::collections::BTreeMap;

const RESERVED: [&str; 4] = ["tr", "logdet", "inv", "I"];

/// Role of a declared symbol.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Role {
    Const,
    Var,
    Dir,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SymbolDecl {
    pub name: String,
    pub shape: Shape,
    pub role: Role,
}

/// Symbol table mapping identifiers to role and shape.
#[derive(Clone, Default, Debug)]
pub struct Decls {
    map: BTreeMap<String, SymbolDecl>,
}

impl Decls {
    pub fn new() -> Decls {
        Decls::default()
    }

    /// Insert a declaration, rejecting redefinition with a different shape or role.
    pub fn insert(&mut self, decl: SymbolDecl) -> Result<(), ExprError> {
        if RESERVED.contains(&decl.name.as_str()) {
            return Err(ExprError::InvalidDeclaration(format!(
                "{} is a reserved word",
                decl.name
            )));
        }
        if decl.role == Role::Dir && dir_index(&decl.name).is_none() {
            return Err(ExprError::InvalidDeclaration(format!(
                "direction symbols must be named Z, T, Z3, Z4, ... (got {})",
                decl.name
            )));
        }
        if let Some(prev) = self.map.get(&decl.name) {
            if *prev != decl {
                return Err(ExprError::InvalidDeclaration(format!(
                    "symbol {} redeclared with a different shape or role",
                    decl.name
                )));
            }
            return Ok(());
        }
        self.map.insert(decl.name.clone(), decl);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&SymbolDecl> {
        self.map.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SymbolDecl> {
        self.map.values()
    }

    /// Declare the direction symbols `Z, T, Z3, ..` up to `count`, all of `shape`.
    pub fn declare_directions(&mut self, shape: Shape, count: usize) -> Result<(), ExprError> {
        for k in 1..=count {
            self.insert(SymbolDecl {
                name: super::dir_name(k),
                shape,
                role: Role::Dir,
            })?;
        }
        Ok(())
    }
}

/// Parse declaration strings of the form `NAME:RxC:{const|var|dir}`.
pub fn parse_decls(specs: &[String]) -> Result<Decls, ExprError> {
    let mut decls = Decls::new();
    for spec in specs {
        decls.insert(parse_one_decl(spec)?)?;
    }
    Ok(decls)
}

fn parse_one_decl(spec: &str) -> Result<SymbolDecl, ExprError> {
    let bad = || ExprError::InvalidDeclaration(format!("expected NAME:RxC:role, got {spec}"));
    let mut parts = spec.split(':');
    let name = parts.next().ok_or_else(bad)?.trim();
    let shape_s = parts.next().ok_or_else(bad)?.trim();
    let role_s = parts.next().ok_or_else(bad)?.trim();
    if parts.next().is_some() || name.is_empty() {
        return Err(bad());
    }
    if !name.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
        || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
    {
        return Err(ExprError::InvalidDeclaration(format!(
            "bad symbol name {name}"
        )));
    }
    let (r, c) = shape_s.split_once(['x', 'X']).ok_or_else(bad)?;
    let rows: usize = r.trim().parse().map_err(|_| bad())?;
    let cols: usize = c.trim().parse().map_err(|_| bad())?;
    if rows == 0 || cols == 0 {
        return Err(ExprError::InvalidDeclaration(format!(
            "dimensions must be >= 1 in {spec}"
        )));
    }
    let role = match role_s {
        "const" => Role::Const,
        "var" => Role::Var,
        "dir" => Role::Dir,
        _ => return Err(bad()),
    };
    Ok(SymbolDecl {
        name: name.to_string(),
        shape: Shape::new(rows, cols),
        role,
    })
}

#[derive(Clone, PartialEq, Debug)]
enum Tok {
    Ident(String),
    Int(i64),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Quote,
}

#[derive(Clone, Debug)]
struct Lexed {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Lexed>, ExprError> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&ch) = chars.peek() {
        let (l, c) = (line, col);
        match ch {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
                continue;
            }
            ' ' | '\t' | '\r' => {
                chars.next();
                col += 1;
                continue;
            }
            '+' => out.push(Lexed {
                tok: Tok::Plus,
                line: l,
                col: c,
            }),
            '-' => out.push(Lexed {
                tok: Tok::Minus,
                line: l,
                col: c,
            }),
            '*' => out.push(Lexed {
                tok: Tok::Star,
                line: l,
                col: c,
            }),
            '/' => out.push(Lexed {
                tok: Tok::Slash,
                line: l,
                col: c,
            }),
            '(' => out.push(Lexed {
                tok: Tok::LParen,
                line: l,
                col: c,
            }),
            ')' => out.push(Lexed {
                tok: Tok::RParen,
                line: l,
                col: c,
            }),
            '\'' => out.push(Lexed {
                tok: Tok::Quote,
                line: l,
                col: c,
            }),
            _ if ch.is_ascii_digit() => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_digit() {
                        s.push(d);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                let n: i64 = s.parse().map_err(|_| ExprError::Syntax {
                    line: l,
                    col: c,
                    expected: "integer".to_string(),
                })?;
                out.push(Lexed {
                    tok: Tok::Int(n),
                    line: l,
                    col: c,
                });
                continue;
            }
            _ if ch.is_ascii_alphabetic() => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        s.push(d);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                out.push(Lexed {
                    tok: Tok::Ident(s),
                    line: l,
                    col: c,
                });
                continue;
            }
            _ => {
                return Err(ExprError::Syntax {
                    line: l,
                    col: c,
                    expected: format!("valid token, found {ch:?}"),
                })
            }
        }
        chars.next();
        col += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Lexed>,
    pos: usize,
    decls: &'a Decls,
    end_line: usize,
    end_col: usize,
}

/// Parse `text` against the declared symbol table.
pub fn parse(text: &str, decls: &Decls) -> Result<Expr, ExprError> {
    let toks = lex(text)?;
    let (end_line, end_col) = toks.last().map(|t| (t.line, t.col + 1)).unwrap_or((1, 1));
    let mut p = Parser {
        toks,
        pos: 0,
        decls,
        end_line,
        end_col,
    };
    let e = p.parse_expr()?;
    if let Some(t) = p.peek() {
        return Err(ExprError::Syntax {
            line: t.line,
            col: t.col,
            expected: "end of input".to_string(),
        });
    }
    // Final whole-tree shape check so ill-shaped trees never escape the parser.
    e.sort()?;
    Ok(e)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Lexed> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Lexed> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> (usize, usize) {
        self.peek()
            .map(|t| (t.line, t.col))
            .unwrap_or((self.end_line, self.end_col))
    }

    fn err(&self, expected: &str) -> ExprError {
        let (line, col) = self.here();
        ExprError::Syntax {
            line,
            col,
            expected: expected.to_string(),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ExprError> {
        match self.peek() {
            Some(t) if t.tok == tok => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(what)),
        }
    }

    fn parse_expr(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.parse_term()?;
        loop {
            let neg = match self.peek().map(|t| t.tok.clone()) {
                Some(Tok::Plus) => false,
                Some(Tok::Minus) => true,
                _ => break,
            };
            let (line, col) = self.here();
            self.pos += 1;
            let mut rhs = self.parse_term()?;
            if neg {
                rhs = negate(rhs);
            }
            acc = add_exprs(acc, rhs, line, col)?;
        }
        Ok(acc)
    }

    fn parse_term(&mut self) -> Result<Expr, ExprError> {
        let mut factors = vec![self.parse_factor()?];
        while matches!(self.peek().map(|t| &t.tok), Some(Tok::Star)) {
            self.pos += 1;
            factors.push(self.parse_factor()?);
        }
        fold_product(factors, self)
    }

    fn parse_factor(&mut self) -> Result<Expr, ExprError> {
        match self.peek().map(|t| t.tok.clone()) {
            Some(Tok::Minus) => {
                self.pos += 1;
                Ok(negate(self.parse_factor()?))
            }
            Some(Tok::Int(n)) => {
                self.pos += 1;
                // rational := integer ('/' integer)?
                if matches!(self.peek().map(|t| &t.tok), Some(Tok::Slash)) {
                    self.pos += 1;
                    match self.next().map(|t| t.tok) {
                        Some(Tok::Int(d)) if d != 0 => {
                            Ok(Expr::Scalar(ScalarExpr::Lit(Rational64::new(n, d))))
                        }
                        _ => Err(self.err("nonzero integer denominator")),
                    }
                } else {
                    Ok(Expr::Scalar(ScalarExpr::Lit(Rational64::from_integer(n))))
                }
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.parse_expr()?;
                self.expect(Tok::RParen, "closing parenthesis")?;
                self.parse_postfix(inner)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                let atom = self.parse_named(&name)?;
                self.parse_postfix(atom)
            }
            _ => Err(self.err("rational, identifier or parenthesized expression")),
        }
    }

    fn parse_named(&mut self, name: &str) -> Result<Expr, ExprError> {
        match name {
            "tr" | "logdet" | "inv" => {
                self.expect(Tok::LParen, &format!("( after {name}"))?;
                let (line, col) = self.here();
                let arg = self.parse_expr()?;
                self.expect(Tok::RParen, "closing parenthesis")?;
                let m = match arg {
                    Expr::Mat(m) => m,
                    Expr::Scalar(_) => {
                        return Err(ExprError::Syntax {
                            line,
                            col,
                            expected: format!("matrix argument to {name}"),
                        })
                    }
                };
                Ok(match name {
                    "tr" => Expr::Scalar(ScalarExpr::Trace(Box::new(m))),
                    "logdet" => Expr::Scalar(ScalarExpr::LogDet(Box::new(m))),
                    _ => Expr::Mat(MatExpr::Inverse(Box::new(m))),
                })
            }
            "I" if matches!(self.peek().map(|t| &t.tok), Some(Tok::LParen)) => {
                self.pos += 1;
                let n = match self.next().map(|t| t.tok) {
                    Some(Tok::Int(n)) if n >= 1 => n as usize,
                    _ => return Err(self.err("positive integer dimension")),
                };
                self.expect(Tok::RParen, "closing parenthesis")?;
                Ok(Expr::Mat(MatExpr::Identity(n)))
            }
            _ => {
                let (line, col) = self.here();
                match self.decls.get(name) {
                    Some(decl) => Ok(Expr::Mat(match decl.role {
                        Role::Const => MatExpr::Const(decl.name.clone(), decl.shape),
                        Role::Var => MatExpr::Var(decl.name.clone(), decl.shape),
                        Role::Dir => MatExpr::Dir(
                            dir_index(&decl.name).expect("checked at insert"),
                            decl.shape,
                        ),
                    })),
                    None => Err(ExprError::UnknownSymbol {
                        line,
                        col: col.saturating_sub(name.len()),
                        name: name.to_string(),
                    }),
                }
            }
        }
    }

    fn parse_postfix(&mut self, mut e: Expr) -> Result<Expr, ExprError> {
        while matches!(self.peek().map(|t| &t.tok), Some(Tok::Quote)) {
            let (line, col) = self.here();
            self.pos += 1;
            e = match e {
                Expr::Mat(m) => Expr::Mat(MatExpr::Transpose(Box::new(m))),
                Expr::Scalar(_) => {
                    return Err(ExprError::Syntax {
                        line,
                        col,
                        expected: "matrix operand for transpose".to_string(),
                    })
                }
            };
        }
        Ok(e)
    }
}

/// Negate with the sign folded into a rational coefficient, so printed
/// canonical forms parse back unchanged.
fn negate(e: Expr) -> Expr {
    match e {
        Expr::Scalar(s) => Expr::Scalar(negate_scalar(s)),
        Expr::Mat(m) => Expr::Mat(negate_mat(m)),
    }
}

fn negate_scalar(s: ScalarExpr) -> ScalarExpr {
    match s {
        ScalarExpr::Lit(c) => ScalarExpr::Lit(-c),
        ScalarExpr::SMul(mut fs) => {
            if let Some(ScalarExpr::Lit(c)) = fs.first() {
                fs[0] = ScalarExpr::Lit(-*c);
                ScalarExpr::SMul(fs)
            } else {
                let mut v = vec![ScalarExpr::lit(-1)];
                v.extend(fs);
                ScalarExpr::SMul(v)
            }
        }
        ScalarExpr::SNeg(inner) => *inner,
        other => ScalarExpr::SMul(vec![ScalarExpr::lit(-1), other]),
    }
}

fn negate_mat(m: MatExpr) -> MatExpr {
    match m {
        MatExpr::ScalarMul(s, inner) => MatExpr::ScalarMul(Box::new(negate_scalar(*s)), inner),
        MatExpr::Neg(inner) => *inner,
        other => MatExpr::smul(ScalarExpr::lit(-1), other),
    }
}

fn add_exprs(lhs: Expr, rhs: Expr, line: usize, col: usize) -> Result<Expr, ExprError> {
    match (lhs, rhs) {
        (Expr::Scalar(a), Expr::Scalar(b)) => {
            let mut terms = match a {
                ScalarExpr::SAdd(ts) => ts,
                other => vec![other],
            };
            match b {
                ScalarExpr::SAdd(ts) => terms.extend(ts),
                other => terms.push(other),
            }
            Ok(Expr::Scalar(ScalarExpr::SAdd(terms)))
        }
        (Expr::Mat(a), Expr::Mat(b)) => {
            let sa = a.shape()?;
            let sb = b.shape()?;
            if sa != sb {
                return Err(ExprError::ShapeMismatch {
                    path: format!("input {line}:{col}"),
                    expected: sa,
                    found: sb,
                });
            }
            let mut terms = match a {
                MatExpr::Add(ts) => ts,
                other => vec![other],
            };
            match b {
                MatExpr::Add(ts) => terms.extend(ts),
                other => terms.push(other),
            }
            Ok(Expr::Mat(MatExpr::Add(terms)))
        }
        _ => Err(ExprError::Syntax {
            line,
            col,
            expected: "operands of the same sort (cannot add scalar and matrix)".to_string(),
        }),
    }
}

/// Fold a factor list into the canonical product shape: scalar factors are
/// collected in front, matrix factors chain left-associatively, and a mixed
/// product becomes `ScalarMul(scalars, chain)`.
fn fold_product(factors: Vec<Expr>, p: &Parser<'_>) -> Result<Expr, ExprError> {
    let mut scalars: Vec<ScalarExpr> = Vec::new();
    let mut chain: Option<MatExpr> = None;
    for f in factors {
        match f {
            Expr::Scalar(ScalarExpr::SMul(fs)) => scalars.extend(fs),
            Expr::Scalar(s) => scalars.push(s),
            Expr::Mat(MatExpr::ScalarMul(s, m)) => {
                match *s {
                    ScalarExpr::SMul(fs) => scalars.extend(fs),
                    other => scalars.push(other),
                }
                chain = Some(match chain {
                    None => *m,
                    Some(acc) => {
                        check_mul_shapes(&acc, &m, p)?;
                        MatExpr::mul(acc, *m)
                    }
                });
            }
            Expr::Mat(m) => {
                chain = Some(match chain {
                    None => m,
                    Some(acc) => {
                        check_mul_shapes(&acc, &m, p)?;
                        MatExpr::mul(acc, m)
                    }
                });
            }
        }
    }
    let scalar_part = build_smul(scalars);
    match (scalar_part, chain) {
        (None, Some(m)) => Ok(Expr::Mat(m)),
        (Some(s), Some(m)) => Ok(Expr::Mat(MatExpr::smul(s, m))),
        (Some(s), None) => Ok(Expr::Scalar(s)),
        (None, None) => Err(p.err("non-empty product")),
    }
}

fn check_mul_shapes(a: &MatExpr, b: &MatExpr, p: &Parser<'_>) -> Result<(), ExprError> {
    let sa = a.shape()?;
    let sb = b.shape()?;
    if sa.cols != sb.rows {
        let (line, col) = p.here();
        return Err(ExprError::ShapeMismatch {
            path: format!("input {line}:{col}"),
            expected: Shape::new(sa.cols, sb.cols.max(1)),
            found: sb,
        });
    }
    Ok(())
}

fn build_smul(mut scalars: Vec<ScalarExpr>) -> Option<ScalarExpr> {
    if scalars.is_empty() {
        return None;
    }
    if scalars.len() == 1 {
        return Some(scalars.pop().unwrap());
    }
    // Keep any literal coefficient in front.
    let mut coeff = Rational64::from_integer(1);
    let mut rest = Vec::new();
    for s in scalars {
        match s {
            ScalarExpr::Lit(c) => coeff *= c,
            other => rest.push(other),
        }
    }
    if rest.is_empty() {
        return Some(ScalarExpr::Lit(coeff));
    }
    if coeff == Rational64::from_integer(1) && rest.len() == 1 {
        return Some(rest.pop().unwrap());
    }
    let mut out = Vec::new();
    if coeff != Rational64::from_integer(1) {
        out.push(ScalarExpr::Lit(coeff));
    }
    out.extend(rest);
    if out.len() == 1 {
        Some(out.pop().unwrap())
    } else {
        Some(ScalarExpr::SMul(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decls() -> Decls {
        parse_decls(&[
            "X:3x2:var".to_string(),
            "A:3x3:const".to_string(),
            "B:3x2:const".to_string(),
            "Y:3x3:var".to_string(),
        ])
        .unwrap()
    }

    #[test]
    fn parses_rayleigh_quotient() {
        let e = parse("tr(X' * A * X)", &decls()).unwrap();
        let x = MatExpr::var("X", 3, 2);
        let a = MatExpr::cnst("A", 3, 3);
        let want = Expr::Scalar(ScalarExpr::trace(MatExpr::mul(
            MatExpr::mul(x.clone().t(), a),
            x,
        )));
        assert_eq!(e, want);
    }

    #[test]
    fn parses_logdet_of_inverse() {
        let e = parse("logdet(inv(Y))", &decls()).unwrap();
        let want = Expr::Scalar(ScalarExpr::logdet(MatExpr::var("Y", 3, 3).inv()));
        assert_eq!(e, want);
    }

    #[test]
    fn reports_unclosed_paren() {
        match parse("tr(X + B", &decls()) {
            Err(ExprError::Syntax { expected, .. }) => {
                assert!(expected.contains("closing parenthesis"))
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn reports_unknown_symbol_with_position() {
        match parse("tr(Q)", &decls()) {
            Err(ExprError::UnknownSymbol { name, line, .. }) => {
                assert_eq!(name, "Q");
                assert_eq!(line, 1);
            }
            other => panic!("expected unknown symbol, got {other:?}"),
        }
    }

    #[test]
    fn rejects_mixed_sort_addition() {
        assert!(matches!(
            parse("tr(Y) + X", &decls()),
            Err(ExprError::Syntax { .. })
        ));
    }

    #[test]
    fn rejects_shape_mismatch_in_product() {
        assert!(matches!(
            parse("X * A", &decls()),
            Err(ExprError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn rational_literals() {
        let e = parse("1/2 * tr(Y)", &decls()).unwrap();
        match e {
            Expr::Scalar(ScalarExpr::SMul(fs)) => {
                assert_eq!(fs[0], ScalarExpr::ratio(1, 2));
                assert!(matches!(fs[1], ScalarExpr::Trace(_)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negation_folds_into_coefficient() {
        let e = parse("-2*tr(Y)", &decls()).unwrap();
        match e {
            Expr::Scalar(ScalarExpr::SMul(fs)) => assert_eq!(fs[0], ScalarExpr::lit(-2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn identity_literal_and_transpose_postfix() {
        let e = parse("(A*Y)'", &decls()).unwrap();
        assert!(matches!(e, Expr::Mat(MatExpr::Transpose(_))));
        let i = parse("I(3)", &decls()).unwrap();
        assert_eq!(i, Expr::Mat(MatExpr::Identity(3)));
    }

    #[test]
    fn reserved_names_rejected_in_decls() {
        assert!(parse_decls(&["tr:3x3:const".to_string()]).is_err());
        assert!(parse_decls(&["W:3x3:dir".to_string()]).is_err());
        assert!(parse_decls(&["Z:3x2:dir".to_string()]).is_ok());
    }
}
