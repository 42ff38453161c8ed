//! JSON AST export/import. Every node serializes as
//! `{"op": <tag>, ..., "shape": [r,c] | null, "children": [...]}` with a
//! stable field order; scalar nodes carry `"shape": null`.

use super::{Expr, ExprError, MatExpr, ScalarExpr, Shape};
use num::rational::Rational64;
use serde_json::{Map, Value};

pub fn expr_to_json(e: &Expr) -> Result<Value, ExprError> {
    e.sort()?;
    Ok(match e {
        Expr::Mat(m) => mat_to_json(m),
        Expr::Scalar(s) => scalar_to_json(s),
    })
}

fn node(op: &str, extra: Vec<(&str, Value)>, shape: Option<Shape>, children: Vec<Value>) -> Value {
    let mut map = Map::new();
    map.insert("op".to_string(), Value::String(op.to_string()));
    for (k, v) in extra {
        map.insert(k.to_string(), v);
    }
    let shape_v = match shape {
        Some(s) => serde_json::json!([s.rows, s.cols]),
        None => Value::Null,
    };
    map.insert("shape".to_string(), shape_v);
    map.insert("children".to_string(), Value::Array(children));
    Value::Object(map)
}

fn mat_to_json(m: &MatExpr) -> Value {
    let shape = m.shape().ok();
    match m {
        MatExpr::Const(name, _) => node(
            "const",
            vec![("name", Value::String(name.clone()))],
            shape,
            vec![],
        ),
        MatExpr::Var(name, _) => node(
            "var",
            vec![("name", Value::String(name.clone()))],
            shape,
            vec![],
        ),
        MatExpr::Dir(k, _) => node(
            "dir",
            vec![("index", Value::from(*k as u64))],
            shape,
            vec![],
        ),
        MatExpr::Identity(_) => node("identity", vec![], shape, vec![]),
        MatExpr::Zero(_) => node("zero", vec![], shape, vec![]),
        MatExpr::Add(ts) => node("add", vec![], shape, ts.iter().map(mat_to_json).collect()),
        MatExpr::Neg(t) => node("neg", vec![], shape, vec![mat_to_json(t)]),
        MatExpr::ScalarMul(s, t) => node(
            "scalar_mul",
            vec![],
            shape,
            vec![scalar_to_json(s), mat_to_json(t)],
        ),
        MatExpr::MatMul(a, b) => node(
            "matmul",
            vec![],
            shape,
            vec![mat_to_json(a), mat_to_json(b)],
        ),
        MatExpr::Transpose(t) => node("transpose", vec![], shape, vec![mat_to_json(t)]),
        MatExpr::Inverse(t) => node("inverse", vec![], shape, vec![mat_to_json(t)]),
    }
}

fn scalar_to_json(s: &ScalarExpr) -> Value {
    match s {
        ScalarExpr::Lit(c) => {
            let value = if *c.denom() == 1 {
                format!("{}", c.numer())
            } else {
                format!("{}/{}", c.numer(), c.denom())
            };
            node("lit", vec![("value", Value::String(value))], None, vec![])
        }
        ScalarExpr::Trace(m) => node("trace", vec![], None, vec![mat_to_json(m)]),
        ScalarExpr::LogDet(m) => node("logdet", vec![], None, vec![mat_to_json(m)]),
        ScalarExpr::SAdd(ts) => node(
            "sadd",
            vec![],
            None,
            ts.iter().map(scalar_to_json).collect(),
        ),
        ScalarExpr::SMul(ts) => node(
            "smul",
            vec![],
            None,
            ts.iter().map(scalar_to_json).collect(),
        ),
        ScalarExpr::SNeg(t) => node("sneg", vec![], None, vec![scalar_to_json(t)]),
    }
}

pub fn expr_from_json(v: &Value) -> Result<Expr, ExprError> {
    let e = any_from_json(v)?;
    e.sort()?;
    Ok(e)
}

fn bad(msg: &str) -> ExprError {
    ExprError::InvalidDeclaration(format!("malformed JSON AST: {msg}"))
}

fn any_from_json(v: &Value) -> Result<Expr, ExprError> {
    let obj = v.as_object().ok_or_else(|| bad("expected object"))?;
    let op = obj
        .get("op")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing op"))?;
    match op {
        "lit" | "trace" | "logdet" | "sadd" | "smul" | "sneg" => {
            Ok(Expr::Scalar(scalar_from_json(v)?))
        }
        _ => Ok(Expr::Mat(mat_from_json(v)?)),
    }
}

fn shape_from_json(obj: &Map<String, Value>) -> Result<Shape, ExprError> {
    let arr = obj
        .get("shape")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing shape"))?;
    if arr.len() != 2 {
        return Err(bad("shape must be [rows, cols]"));
    }
    let r = arr[0].as_u64().ok_or_else(|| bad("bad rows"))? as usize;
    let c = arr[1].as_u64().ok_or_else(|| bad("bad cols"))? as usize;
    if r == 0 || c == 0 {
        return Err(bad("dimensions must be >= 1"));
    }
    Ok(Shape::new(r, c))
}

fn children(obj: &Map<String, Value>, n: Option<usize>) -> Result<&Vec<Value>, ExprError> {
    let kids = obj
        .get("children")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing children"))?;
    if let Some(n) = n {
        if kids.len() != n {
            return Err(bad(&format!("expected {n} children, got {}", kids.len())));
        }
    }
    Ok(kids)
}

fn mat_from_json(v: &Value) -> Result<MatExpr, ExprError> {
    let obj = v.as_object().ok_or_else(|| bad("expected object"))?;
    let op = obj
        .get("op")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing op"))?;
    match op {
        "const" | "var" => {
            let name = obj
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| bad("missing name"))?
                .to_string();
            let shape = shape_from_json(obj)?;
            Ok(if op == "const" {
                MatExpr::Const(name, shape)
            } else {
                MatExpr::Var(name, shape)
            })
        }
        "dir" => {
            let k = obj
                .get("index")
                .and_then(Value::as_u64)
                .ok_or_else(|| bad("missing direction index"))? as usize;
            if k == 0 {
                return Err(bad("direction index must be >= 1"));
            }
            Ok(MatExpr::Dir(k, shape_from_json(obj)?))
        }
        "identity" => {
            let s = shape_from_json(obj)?;
            if !s.is_square() {
                return Err(bad("identity shape must be square"));
            }
            Ok(MatExpr::Identity(s.rows))
        }
        "zero" => Ok(MatExpr::Zero(shape_from_json(obj)?)),
        "add" => {
            let kids = children(obj, None)?;
            if kids.is_empty() {
                return Err(bad("add needs children"));
            }
            Ok(MatExpr::Add(
                kids.iter().map(mat_from_json).collect::<Result<_, _>>()?,
            ))
        }
        "neg" => {
            let kids = children(obj, Some(1))?;
            Ok(MatExpr::Neg(Box::new(mat_from_json(&kids[0])?)))
        }
        "scalar_mul" => {
            let kids = children(obj, Some(2))?;
            Ok(MatExpr::ScalarMul(
                Box::new(scalar_from_json(&kids[0])?),
                Box::new(mat_from_json(&kids[1])?),
            ))
        }
        "matmul" => {
            let kids = children(obj, Some(2))?;
            Ok(MatExpr::MatMul(
                Box::new(mat_from_json(&kids[0])?),
                Box::new(mat_from_json(&kids[1])?),
            ))
        }
        "transpose" => {
            let kids = children(obj, Some(1))?;
            Ok(MatExpr::Transpose(Box::new(mat_from_json(&kids[0])?)))
        }
        "inverse" => {
            let kids = children(obj, Some(1))?;
            Ok(MatExpr::Inverse(Box::new(mat_from_json(&kids[0])?)))
        }
        other => Err(bad(&format!("unknown matrix op {other}"))),
    }
}

fn scalar_from_json(v: &Value) -> Result<ScalarExpr, ExprError> {
    let obj = v.as_object().ok_or_else(|| bad("expected object"))?;
    let op = obj
        .get("op")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing op"))?;
    match op {
        "lit" => {
            let text = obj
                .get("value")
                .and_then(Value::as_str)
                .ok_or_else(|| bad("missing value"))?;
            let rat = match text.split_once('/') {
                Some((n, d)) => {
                    let n: i64 = n.parse().map_err(|_| bad("bad numerator"))?;
                    let d: i64 = d.parse().map_err(|_| bad("bad denominator"))?;
                    if d == 0 {
                        return Err(bad("zero denominator"));
                    }
                    Rational64::new(n, d)
                }
                None => Rational64::from_integer(text.parse().map_err(|_| bad("bad integer"))?),
            };
            Ok(ScalarExpr::Lit(rat))
        }
        "trace" => {
            let kids = children(obj, Some(1))?;
            Ok(ScalarExpr::Trace(Box::new(mat_from_json(&kids[0])?)))
        }
        "logdet" => {
            let kids = children(obj, Some(1))?;
            Ok(ScalarExpr::LogDet(Box::new(mat_from_json(&kids[0])?)))
        }
        "sadd" => {
            let kids = children(obj, None)?;
            Ok(ScalarExpr::SAdd(
                kids.iter()
                    .map(scalar_from_json)
                    .collect::<Result<_, _>>()?,
            ))
        }
        "smul" => {
            let kids = children(obj, None)?;
            Ok(ScalarExpr::SMul(
                kids.iter()
                    .map(scalar_from_json)
                    .collect::<Result<_, _>>()?,
            ))
        }
        "sneg" => {
            let kids = children(obj, Some(1))?;
            Ok(ScalarExpr::SNeg(Box::new(scalar_from_json(&kids[0])?)))
        }
        other => Err(bad(&format!("unknown scalar op {other}"))),
    }
}
