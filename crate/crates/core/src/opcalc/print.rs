//! Pretty-printing of operator sums: text (`(D^2f∘g)(Dg⊗Dg) + (Df∘g)D^2g`),
//! LaTeX, and a JSON form.

use super::{Atom, Chain, OpSum, OpTerm};
use serde_json::{json, Value};

fn deriv_prefix(order: u32) -> String {
    match order {
        1 => "D".to_string(),
        k => format!("D^{k}"),
    }
}

/// Bare atom text, without factor parentheses.
pub fn format_atom(a: &Atom) -> String {
    match a {
        Atom::Deriv {
            func,
            order,
            composed_with: None,
        } => {
            format!("{}{}", deriv_prefix(*order), func.name)
        }
        Atom::Deriv {
            func,
            order,
            composed_with: Some(g),
        } => {
            format!("({}{}∘{})", deriv_prefix(*order), func.name, g.name)
        }
        Atom::Func {
            func,
            composed_with: None,
        } => func.name.clone(),
        Atom::Func {
            func,
            composed_with: Some(g),
        } => format!("({}∘{})", func.name, g.name),
        Atom::Id { .. } => "I".to_string(),
    }
}

fn format_chain(c: &Chain) -> String {
    if c.len() == 1 {
        format_atom(&c[0])
    } else {
        format!(
            "({})",
            c.iter().map(format_atom).collect::<Vec<_>>().join("⊗")
        )
    }
}

pub fn format_op_term(t: &OpTerm) -> String {
    let body: String = t.factors.iter().map(format_chain).collect();
    match t.coeff {
        1 => body,
        -1 => format!("-{body}"),
        c => format!("{c}{body}"),
    }
}

/// Grouped sum display: consecutive two-factor terms sharing a head factor
/// print as `head[(tail1) + c(tail2) + ...]`, matching the usual layout of
/// higher-order chain-rule expansions.
pub fn format_op_sum(s: &OpSum) -> String {
    if s.terms.is_empty() {
        return "0".to_string();
    }
    let mut pieces: Vec<String> = Vec::new();
    let mut i = 0;
    while i < s.terms.len() {
        let t = &s.terms[i];
        let mut j = i + 1;
        while j < s.terms.len()
            && t.factors.len() == 2
            && s.terms[j].factors.len() == 2
            && s.terms[j].factors[0] == t.factors[0]
        {
            j += 1;
        }
        if j - i > 1 {
            let head = format_chain(&t.factors[0]);
            let tails: Vec<String> = s.terms[i..j]
                .iter()
                .map(|u| {
                    let tail = format_chain(&u.factors[1]);
                    match u.coeff {
                        1 => tail,
                        -1 => format!("-{tail}"),
                        c => format!("{c}{tail}"),
                    }
                })
                .collect();
            pieces.push(format!("{head}[{}]", tails.join(" + ")));
        } else {
            pieces.push(format_op_term(t));
        }
        i = j;
    }
    let mut out = String::new();
    for (i, p) in pieces.iter().enumerate() {
        if i == 0 {
            out.push_str(p);
        } else if let Some(rest) = p.strip_prefix('-') {
            out.push_str(" - ");
            out.push_str(rest);
        } else {
            out.push_str(" + ");
            out.push_str(p);
        }
    }
    out
}

fn latex_atom(a: &Atom) -> String {
    let d = |order: u32| match order {
        1 => "D".to_string(),
        k => format!("D^{{{k}}}"),
    };
    match a {
        Atom::Deriv {
            func,
            order,
            composed_with: None,
        } => format!("{}{}", d(*order), func.name),
        Atom::Deriv {
            func,
            order,
            composed_with: Some(g),
        } => {
            format!("({}{} \\circ {})", d(*order), func.name, g.name)
        }
        Atom::Func {
            func,
            composed_with: None,
        } => func.name.clone(),
        Atom::Func {
            func,
            composed_with: Some(g),
        } => {
            format!("({} \\circ {})", func.name, g.name)
        }
        Atom::Id { .. } => "I".to_string(),
    }
}

fn latex_chain(c: &Chain) -> String {
    if c.len() == 1 {
        latex_atom(&c[0])
    } else {
        format!(
            "({})",
            c.iter()
                .map(latex_atom)
                .collect::<Vec<_>>()
                .join(" \\otimes ")
        )
    }
}

pub fn format_op_sum_latex(s: &OpSum) -> String {
    if s.terms.is_empty() {
        return "0".to_string();
    }
    s.terms
        .iter()
        .map(|t| {
            let body = t
                .factors
                .iter()
                .map(latex_chain)
                .collect::<Vec<_>>()
                .join("\\,");
            match t.coeff {
                1 => body,
                -1 => format!("-{body}"),
                c => format!("{c}\\,{body}"),
            }
        })
        .collect::<Vec<_>>()
        .join(" + ")
}

fn atom_json(a: &Atom) -> Value {
    match a {
        Atom::Deriv {
            func,
            order,
            composed_with,
        } => json!({
            "kind": "deriv",
            "func": func.name,
            "order": order,
            "compose": composed_with.as_ref().map(|g| g.name.clone()),
        }),
        Atom::Func {
            func,
            composed_with,
        } => json!({
            "kind": "func",
            "func": func.name,
            "compose": composed_with.as_ref().map(|g| g.name.clone()),
        }),
        Atom::Id { spaces } => json!({
            "kind": "id",
            "spaces": spaces.iter().map(|s| s.0.clone()).collect::<Vec<_>>(),
        }),
    }
}

pub fn op_sum_to_json(s: &OpSum) -> Value {
    json!({
        "terms": s.terms.iter().map(|t| json!({
            "coeff": t.coeff,
            "factors": t.factors.iter().map(|c| c.iter().map(atom_json).collect::<Vec<_>>()).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    })
}
