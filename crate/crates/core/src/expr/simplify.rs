//! Canonicalizing simplifier.
//!
//! Strategy: distribute to a flat sum of products (transposes pushed onto
//! atoms, scalars hoisted out of chains, identities absorbed, adjacent
//! `P*inv(P)` pairs cancelled), canonicalize each trace by cyclic rotation
//! and `tr(M) = tr(M')` orientation, then re-factor: collect identical
//! terms and merge sums of traces/products that differ in a single factor,
//! as in `tr(Z'*A*X) + tr(X'*A*Z) -> tr(Z'*(A + A')*X)`.
//!
//! Trace rotation prefers a transposed direction atom in front (the form a
//! gradient is read from); otherwise the lexicographically least rotation
//! under the structural order on atoms wins.

use super::{Expr, MatExpr, ScalarExpr, Shape};
use num::rational::Rational64;

pub fn simplify(e: &Expr) -> Expr {
    match e {
        Expr::Mat(m) => Expr::Mat(simplify_mat(m)),
        Expr::Scalar(s) => Expr::Scalar(simplify_scalar(s)),
    }
}

pub fn simplify_mat(m: &MatExpr) -> MatExpr {
    match m.shape() {
        Ok(sh) => rebuild_matrix(mat_nf(m), sh),
        Err(_) => m.clone(),
    }
}

pub fn simplify_scalar(s: &ScalarExpr) -> ScalarExpr {
    if s.validate().is_err() {
        return s.clone();
    }
    rebuild_scalar(scalar_nf(s))
}

fn one() -> Rational64 {
    Rational64::from_integer(1)
}

fn zero() -> Rational64 {
    Rational64::from_integer(0)
}

/// Matrix term: `coeff * sfactors * chain`. An empty chain denotes the
/// identity matrix (arises from cancellations; the ambient shape is square
/// there by construction).
#[derive(Clone, PartialEq, Eq, Debug)]
pub(crate) struct MTerm {
    pub coeff: Rational64,
    pub sfactors: Vec<ScalarExpr>,
    pub chain: Vec<MatExpr>,
}

/// Scalar monomial: `coeff * factors`, factors canonical scalar atoms.
#[derive(Clone, PartialEq, Eq, Debug)]
pub(crate) struct Mono {
    pub coeff: Rational64,
    pub factors: Vec<ScalarExpr>,
}

/// Flatten a product tree into its factor list.
pub(crate) fn flatten_product(m: &MatExpr) -> Vec<MatExpr> {
    match m {
        MatExpr::MatMul(a, b) => {
            let mut v = flatten_product(a);
            v.extend(flatten_product(b));
            v
        }
        other => vec![other.clone()],
    }
}

/// Left-fold a chain back into a product expression. Empty chains are the
/// caller's responsibility.
pub(crate) fn rebuild_chain(chain: &[MatExpr]) -> MatExpr {
    let mut it = chain.iter().cloned();
    let first = it.next().expect("non-empty chain");
    it.fold(first, MatExpr::mul)
}

fn chain_mul(a: &[MatExpr], b: &[MatExpr]) -> Vec<MatExpr> {
    let mut chain: Vec<MatExpr> = a
        .iter()
        .chain(b.iter())
        .filter(|x| !matches!(x, MatExpr::Identity(_)))
        .cloned()
        .collect();
    // Cancel adjacent P * inv(P) pairs.
    loop {
        let mut cancelled = false;
        for i in 0..chain.len().saturating_sub(1) {
            let inverse_pair = match (&chain[i], &chain[i + 1]) {
                (MatExpr::Inverse(x), y) | (y, MatExpr::Inverse(x)) => **x == *y,
                _ => false,
            };
            if inverse_pair {
                chain.drain(i..=i + 1);
                cancelled = true;
                break;
            }
        }
        if !cancelled {
            return chain;
        }
    }
}

fn transpose_atom(a: &MatExpr) -> MatExpr {
    match a {
        MatExpr::Transpose(x) => (**x).clone(),
        MatExpr::Identity(n) => MatExpr::Identity(*n),
        MatExpr::Zero(s) => MatExpr::Zero(s.transposed()),
        MatExpr::Inverse(x) => MatExpr::Inverse(Box::new(transpose_canonical(x))),
        MatExpr::Const(..) | MatExpr::Var(..) | MatExpr::Dir(..) => a.clone().t(),
        other => transpose_canonical(other),
    }
}

/// Transpose of an already-canonical expression, with the transpose pushed
/// down onto atoms.
pub(crate) fn transpose_canonical(m: &MatExpr) -> MatExpr {
    match m.shape() {
        Ok(sh) => {
            let terms = mat_nf(m)
                .into_iter()
                .map(|t| MTerm {
                    coeff: t.coeff,
                    sfactors: t.sfactors,
                    chain: t.chain.iter().rev().map(transpose_atom).collect(),
                })
                .collect();
            rebuild_matrix(terms, sh.transposed())
        }
        Err(_) => m.clone().t(),
    }
}

fn mat_nf(m: &MatExpr) -> Vec<MTerm> {
    match m {
        MatExpr::Const(..) | MatExpr::Var(..) | MatExpr::Dir(..) | MatExpr::Identity(_) => {
            vec![MTerm {
                coeff: one(),
                sfactors: vec![],
                chain: vec![m.clone()],
            }]
        }
        MatExpr::Zero(_) => vec![],
        MatExpr::Add(ts) => ts.iter().flat_map(mat_nf).collect(),
        MatExpr::Neg(t) => {
            let mut v = mat_nf(t);
            for term in &mut v {
                term.coeff = -term.coeff;
            }
            v
        }
        MatExpr::ScalarMul(s, t) => {
            let monos = scalar_nf(s);
            let terms = mat_nf(t);
            let mut out = Vec::new();
            for mono in &monos {
                for term in &terms {
                    let mut sf = term.sfactors.clone();
                    sf.extend(mono.factors.iter().cloned());
                    sf.sort();
                    out.push(MTerm {
                        coeff: term.coeff * mono.coeff,
                        sfactors: sf,
                        chain: term.chain.clone(),
                    });
                }
            }
            out
        }
        MatExpr::MatMul(a, b) => {
            let ta = mat_nf(a);
            let tb = mat_nf(b);
            let mut out = Vec::new();
            for x in &ta {
                for y in &tb {
                    let mut sf = x.sfactors.clone();
                    sf.extend(y.sfactors.iter().cloned());
                    sf.sort();
                    out.push(MTerm {
                        coeff: x.coeff * y.coeff,
                        sfactors: sf,
                        chain: chain_mul(&x.chain, &y.chain),
                    });
                }
            }
            out
        }
        MatExpr::Transpose(t) => mat_nf(t)
            .into_iter()
            .map(|term| MTerm {
                coeff: term.coeff,
                sfactors: term.sfactors,
                chain: term.chain.iter().rev().map(transpose_atom).collect(),
            })
            .collect(),
        MatExpr::Inverse(t) => {
            let sh = t.shape().expect("well-shaped");
            let terms = mat_nf(t);
            if terms.is_empty() {
                let atom = MatExpr::Inverse(Box::new(MatExpr::Zero(sh)));
                return vec![MTerm {
                    coeff: one(),
                    sfactors: vec![],
                    chain: vec![atom],
                }];
            }
            if terms.len() == 1
                && terms[0].sfactors.is_empty()
                && terms[0]
                    .chain
                    .iter()
                    .all(|a| a.shape().map(|s| s.is_square()).unwrap_or(false))
            {
                let t0 = &terms[0];
                let chain = t0.chain.iter().rev().map(invert_atom).collect();
                return vec![MTerm {
                    coeff: t0.coeff.recip(),
                    sfactors: vec![],
                    chain,
                }];
            }
            let atom = MatExpr::Inverse(Box::new(rebuild_matrix(terms, sh)));
            vec![MTerm {
                coeff: one(),
                sfactors: vec![],
                chain: vec![atom],
            }]
        }
    }
}

fn invert_atom(a: &MatExpr) -> MatExpr {
    match a {
        MatExpr::Inverse(x) => (**x).clone(),
        MatExpr::Identity(n) => MatExpr::Identity(*n),
        other => other.clone().inv(),
    }
}

fn scalar_nf(s: &ScalarExpr) -> Vec<Mono> {
    match s {
        ScalarExpr::Lit(c) => {
            if *c == zero() {
                vec![]
            } else {
                vec![Mono {
                    coeff: *c,
                    factors: vec![],
                }]
            }
        }
        ScalarExpr::SNeg(t) => {
            let mut v = scalar_nf(t);
            for m in &mut v {
                m.coeff = -m.coeff;
            }
            v
        }
        ScalarExpr::SAdd(ts) => ts.iter().flat_map(scalar_nf).collect(),
        ScalarExpr::SMul(ts) => {
            let mut acc = vec![Mono {
                coeff: one(),
                factors: vec![],
            }];
            for t in ts {
                let tn = scalar_nf(t);
                let mut next = Vec::new();
                for a in &acc {
                    for b in &tn {
                        let mut fs = a.factors.clone();
                        fs.extend(b.factors.iter().cloned());
                        fs.sort();
                        next.push(Mono {
                            coeff: a.coeff * b.coeff,
                            factors: fs,
                        });
                    }
                }
                acc = next;
            }
            acc
        }
        ScalarExpr::Trace(m) => {
            let sh = m.shape().expect("well-shaped");
            trace_of_terms(mat_nf(m), sh)
        }
        ScalarExpr::LogDet(m) => {
            let inner = simplify_mat(m);
            if let MatExpr::Identity(_) = inner {
                return vec![];
            }
            vec![Mono {
                coeff: one(),
                factors: vec![ScalarExpr::LogDet(Box::new(inner))],
            }]
        }
    }
}

fn trace_of_terms(terms: Vec<MTerm>, sh: Shape) -> Vec<Mono> {
    let mut out = Vec::new();
    for t in terms {
        if t.chain.is_empty() {
            out.push(Mono {
                coeff: t.coeff * Rational64::from_integer(sh.rows as i64),
                factors: t.sfactors,
            });
            continue;
        }
        if let [MatExpr::Identity(n)] = t.chain.as_slice() {
            out.push(Mono {
                coeff: t.coeff * Rational64::from_integer(*n as i64),
                factors: t.sfactors,
            });
            continue;
        }
        let chain = canonicalize_trace_chain(&t.chain);
        let mut fs = t.sfactors;
        fs.push(ScalarExpr::Trace(Box::new(rebuild_chain(&chain))));
        fs.sort();
        out.push(Mono {
            coeff: t.coeff,
            factors: fs,
        });
    }
    out
}

/// Rank used to pick the rotation a trace is displayed in: a transposed
/// direction first, then an untransposed direction, then anything.
fn dir_rank(a: &MatExpr) -> (u8, usize) {
    match a {
        MatExpr::Transpose(x) => match **x {
            MatExpr::Dir(k, _) => (0, k),
            _ => (2, 0),
        },
        MatExpr::Dir(k, _) => (1, *k),
        _ => (2, 0),
    }
}

/// Canonical representative of a trace argument under cyclic rotation and
/// the `tr(M) = tr(M')` orientation flip.
pub(crate) fn canonicalize_trace_chain(chain: &[MatExpr]) -> Vec<MatExpr> {
    let flipped: Vec<MatExpr> = chain.iter().rev().map(transpose_atom).collect();
    let mut best: Option<((u8, usize), Vec<MatExpr>)> = None;
    for base in [chain, flipped.as_slice()] {
        for r in 0..base.len() {
            let rotated: Vec<MatExpr> = base[r..].iter().chain(base[..r].iter()).cloned().collect();
            let key = dir_rank(&rotated[0]);
            match &best {
                Some((bk, bc)) if (*bk, bc) <= (key, &rotated) => {}
                _ => best = Some((key, rotated)),
            }
        }
    }
    best.expect("non-empty chain").1
}

fn collect_monos(mut monos: Vec<Mono>) -> Vec<Mono> {
    monos.sort_by(|a, b| a.factors.cmp(&b.factors));
    let mut out: Vec<Mono> = Vec::new();
    for m in monos {
        match out.last_mut() {
            Some(last) if last.factors == m.factors => last.coeff += m.coeff,
            _ => out.push(m),
        }
    }
    out.retain(|m| m.coeff != zero());
    out
}

fn collect_mterms(mut terms: Vec<MTerm>) -> Vec<MTerm> {
    terms.sort_by(|a, b| (&a.chain, &a.sfactors).cmp(&(&b.chain, &b.sfactors)));
    let mut out: Vec<MTerm> = Vec::new();
    for t in terms {
        match out.last_mut() {
            Some(last) if last.chain == t.chain && last.sfactors == t.sfactors => {
                last.coeff += t.coeff
            }
            _ => out.push(t),
        }
    }
    out.retain(|t| t.coeff != zero());
    out
}

/// Factor slot combining two atoms with their coefficients.
fn merged_slot(k1: Rational64, a: &MatExpr, k2: Rational64, b: &MatExpr) -> (Rational64, MatExpr) {
    if k1 == k2 {
        (k1, simplify_mat(&MatExpr::Add(vec![a.clone(), b.clone()])))
    } else {
        let sa = MatExpr::smul(ScalarExpr::Lit(k1), a.clone());
        let sb = MatExpr::smul(ScalarExpr::Lit(k2), b.clone());
        (one(), simplify_mat(&MatExpr::Add(vec![sa, sb])))
    }
}

/// The single differing factor between two sorted factor lists, if there is
/// exactly one on each side.
fn single_diff<'x>(
    a: &'x [ScalarExpr],
    b: &'x [ScalarExpr],
) -> Option<(usize, &'x ScalarExpr, usize, &'x ScalarExpr)> {
    if a.len() != b.len() {
        return None;
    }
    let mut only_a = Vec::new();
    let mut only_b = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => {
                only_a.push(i);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                only_b.push(j);
                j += 1;
            }
        }
    }
    only_a.extend(i..a.len());
    only_b.extend(j..b.len());
    if let ([ia], [ib]) = (only_a.as_slice(), only_b.as_slice()) {
        Some((*ia, &a[*ia], *ib, &b[*ib]))
    } else {
        None
    }
}

fn trace_arg(s: &ScalarExpr) -> Option<Vec<MatExpr>> {
    match s {
        ScalarExpr::Trace(m) => Some(flatten_product(m)),
        _ => None,
    }
}

/// Merge pairs of trace monomials whose chains agree in all but one
/// direction-free slot, up to rotation and orientation.
fn merge_traces(mut monos: Vec<Mono>) -> Vec<Mono> {
    'outer: loop {
        for i in 0..monos.len() {
            for j in (i + 1)..monos.len() {
                if let Some(merged) = try_merge_traces(&monos[i], &monos[j]) {
                    monos.remove(j);
                    monos.remove(i);
                    monos.push(merged);
                    monos = collect_monos(monos);
                    continue 'outer;
                }
            }
        }
        return monos;
    }
}

fn try_merge_traces(a: &Mono, b: &Mono) -> Option<Mono> {
    let (ia, fa, _ib, fb) = single_diff(&a.factors, &b.factors)?;
    let c1 = trace_arg(fa)?;
    let c2 = trace_arg(fb)?;
    if c1.len() != c2.len() || c1.is_empty() {
        return None;
    }
    let flipped: Vec<MatExpr> = c2.iter().rev().map(transpose_atom).collect();
    for base in [&c2, &flipped] {
        for r in 0..base.len() {
            let cand: Vec<MatExpr> = base[r..].iter().chain(base[..r].iter()).cloned().collect();
            let diffs: Vec<usize> = (0..c1.len()).filter(|&d| c1[d] != cand[d]).collect();
            if let [d] = diffs.as_slice() {
                if c1[*d].contains_dir(None) || cand[*d].contains_dir(None) {
                    continue;
                }
                // The differing atoms must share a shape for the sum to form.
                match (c1[*d].shape(), cand[*d].shape()) {
                    (Ok(s1), Ok(s2)) if s1 == s2 => {}
                    _ => continue,
                }
                let (coeff, slot) = merged_slot(a.coeff, &c1[*d], b.coeff, &cand[*d]);
                let mut chain = c1.clone();
                chain[*d] = slot;
                let chain = canonicalize_trace_chain(&chain);
                let mut fs: Vec<ScalarExpr> = a
                    .factors
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != ia)
                    .map(|(_, f)| f.clone())
                    .collect();
                fs.push(ScalarExpr::Trace(Box::new(rebuild_chain(&chain))));
                fs.sort();
                return Some(Mono { coeff, factors: fs });
            }
        }
    }
    None
}

/// Merge matrix terms with equal scalar parts whose chains differ in one
/// direction-free slot: `A*X + A'*X -> (A + A')*X`.
fn merge_mterms(mut terms: Vec<MTerm>) -> Vec<MTerm> {
    'outer: loop {
        for i in 0..terms.len() {
            for j in (i + 1)..terms.len() {
                if let Some(merged) = try_merge_mterms(&terms[i], &terms[j]) {
                    terms.remove(j);
                    terms.remove(i);
                    terms.push(merged);
                    terms = collect_mterms(terms);
                    continue 'outer;
                }
            }
        }
        return terms;
    }
}

fn try_merge_mterms(a: &MTerm, b: &MTerm) -> Option<MTerm> {
    // Chains of length one have no common factor to pull out; their sum is
    // already canonical as a plain sum.
    if a.sfactors != b.sfactors || a.chain.len() != b.chain.len() || a.chain.len() < 2 {
        return None;
    }
    let diffs: Vec<usize> = (0..a.chain.len())
        .filter(|&d| a.chain[d] != b.chain[d])
        .collect();
    let [d] = diffs.as_slice() else { return None };
    if a.chain[*d].contains_dir(None) || b.chain[*d].contains_dir(None) {
        return None;
    }
    // The differing atoms must share a shape, or the merged sum is ill-formed.
    if a.chain[*d].shape().ok()? != b.chain[*d].shape().ok()? {
        return None;
    }
    let (coeff, slot) = merged_slot(a.coeff, &a.chain[*d], b.coeff, &b.chain[*d]);
    let mut chain = a.chain.clone();
    chain[*d] = slot;
    Some(MTerm {
        coeff,
        sfactors: a.sfactors.clone(),
        chain,
    })
}

pub(crate) fn rebuild_matrix(terms: Vec<MTerm>, sh: Shape) -> MatExpr {
    // Cancellations leave the identity as an empty chain; materialize it so
    // ordering and collection agree with explicit identity atoms.
    let terms = terms
        .into_iter()
        .map(|mut t| {
            if t.chain.is_empty() {
                t.chain.push(MatExpr::Identity(sh.rows));
            }
            t
        })
        .collect();
    let terms = merge_mterms(collect_mterms(terms));
    if terms.is_empty() {
        return MatExpr::Zero(sh);
    }
    let built: Vec<MatExpr> = terms
        .into_iter()
        .map(|t| {
            let chain_expr = rebuild_chain(&t.chain);
            match scalar_part(t.coeff, t.sfactors) {
                None => chain_expr,
                Some(s) => MatExpr::smul(s, chain_expr),
            }
        })
        .collect();
    if built.len() == 1 {
        built.into_iter().next().unwrap()
    } else {
        MatExpr::Add(built)
    }
}

fn scalar_part(coeff: Rational64, factors: Vec<ScalarExpr>) -> Option<ScalarExpr> {
    if coeff == one() && factors.is_empty() {
        return None;
    }
    Some(build_mono(coeff, factors))
}

fn build_mono(coeff: Rational64, factors: Vec<ScalarExpr>) -> ScalarExpr {
    if factors.is_empty() {
        return ScalarExpr::Lit(coeff);
    }
    if coeff == one() {
        return if factors.len() == 1 {
            factors.into_iter().next().unwrap()
        } else {
            ScalarExpr::SMul(factors)
        };
    }
    let mut fs = vec![ScalarExpr::Lit(coeff)];
    fs.extend(factors);
    ScalarExpr::SMul(fs)
}

fn rebuild_scalar(monos: Vec<Mono>) -> ScalarExpr {
    let monos = merge_traces(collect_monos(monos));
    if monos.is_empty() {
        return ScalarExpr::Lit(zero());
    }
    let built: Vec<ScalarExpr> = monos
        .into_iter()
        .map(|m| build_mono(m.coeff, m.factors))
        .collect();
    if built.len() == 1 {
        built.into_iter().next().unwrap()
    } else {
        ScalarExpr::SAdd(built)
    }
}

/// Collected (but unmerged) monomials of a scalar expression; used by
/// gradient and Hessian extraction.
pub(crate) fn scalar_monomials(s: &ScalarExpr) -> Vec<Mono> {
    collect_monos(scalar_nf(s))
}
