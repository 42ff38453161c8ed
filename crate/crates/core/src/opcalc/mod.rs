//! Abstract operator calculus over uninterpreted function symbols.
//!
//! Terms are integer-weighted products of *factors*; each factor is a flat
//! tensor chain of atoms (`D^k f`, `D^k f ∘ g`, `f`, `I`). Composition reads
//! right to left: the rightmost factor receives the direction slots. The
//! rewriter differentiates such sums (product, chain and tensor rules) and
//! normalizes by fusing adjacent factors slot-by-slot with
//! `(A ⊗ B)(C ⊗ D) = AC ⊗ BD`, identity atoms absorbing. Tensor chains are
//! never reordered.

mod eval;
pub mod poly;
mod print;

pub use eval::{evaluate_sum, evaluate_term, OpCtx};
pub use print::{format_atom, format_op_sum, format_op_sum_latex, format_op_term, op_sum_to_json};

use std::cmp::Ordering;
use std::fmt;

/// Abstract vector-space tag. Compared by name; no dimensions at this layer.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct SpaceLabel(pub String);

impl SpaceLabel {
    pub fn new(name: &str) -> SpaceLabel {
        SpaceLabel(name.to_string())
    }
}

impl fmt::Display for SpaceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An uninterpreted function symbol with typed domain and codomain.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct FuncSymbol {
    pub name: String,
    pub domain: SpaceLabel,
    pub codomain: SpaceLabel,
}

impl FuncSymbol {
    pub fn new(name: &str, domain: &str, codomain: &str) -> FuncSymbol {
        FuncSymbol {
            name: name.to_string(),
            domain: SpaceLabel::new(domain),
            codomain: SpaceLabel::new(codomain),
        }
    }
}

/// One slot of a tensor chain.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Atom {
    /// `D^order func`, optionally composed with another map (`D^k f ∘ g`).
    Deriv {
        func: FuncSymbol,
        order: u32,
        composed_with: Option<FuncSymbol>,
    },
    /// The bare function value (consumes no direction slots).
    Func {
        func: FuncSymbol,
        composed_with: Option<FuncSymbol>,
    },
    /// Identity on a (possibly multi-slot) space.
    Id { spaces: Vec<SpaceLabel> },
}

pub type Chain = Vec<Atom>;

/// `coeff * factors[0] ∘ factors[1] ∘ ...` — output on the left, input on
/// the right.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct OpTerm {
    pub coeff: i64,
    pub factors: Vec<Chain>,
}

/// Normal-form sum of operator terms.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct OpSum {
    pub terms: Vec<OpTerm>,
}

#[derive(Clone, PartialEq, Debug)]
pub enum OpError {
    SignatureMismatch(String),
    ArityMismatch { expected: usize, got: usize },
    UnboundFunction(String),
}

impl fmt::Display for OpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpError::SignatureMismatch(msg) => write!(f, "signature mismatch: {msg}"),
            OpError::ArityMismatch { expected, got } => {
                write!(
                    f,
                    "arity mismatch: expected {expected} directions, got {got}"
                )
            }
            OpError::UnboundFunction(name) => write!(f, "no binding for function {name}"),
        }
    }
}

impl std::error::Error for OpError {}

impl Atom {
    pub fn deriv(func: &FuncSymbol, order: u32, composed_with: Option<&FuncSymbol>) -> Atom {
        Atom::Deriv {
            func: func.clone(),
            order,
            composed_with: composed_with.cloned(),
        }
    }

    pub fn id(spaces: &[SpaceLabel]) -> Atom {
        Atom::Id {
            spaces: spaces.to_vec(),
        }
    }

    pub fn id1(space: &SpaceLabel) -> Atom {
        Atom::Id {
            spaces: vec![space.clone()],
        }
    }

    /// Direction slots this atom consumes.
    pub fn input_spaces(&self) -> Vec<SpaceLabel> {
        match self {
            Atom::Deriv { func, order, .. } => vec![func.domain.clone(); *order as usize],
            Atom::Func { .. } => vec![],
            Atom::Id { spaces } => spaces.clone(),
        }
    }

    /// Output slots this atom produces.
    pub fn output_spaces(&self) -> Vec<SpaceLabel> {
        match self {
            Atom::Deriv { func, .. } | Atom::Func { func, .. } => vec![func.codomain.clone()],
            Atom::Id { spaces } => spaces.clone(),
        }
    }

    /// The space this atom is a field over: the domain of the inner map for
    /// composed atoms, the function's own domain otherwise.
    pub fn base_space(&self) -> Option<SpaceLabel> {
        match self {
            Atom::Deriv {
                func,
                composed_with,
                ..
            }
            | Atom::Func {
                func,
                composed_with,
            } => Some(
                composed_with
                    .as_ref()
                    .map(|g| g.domain.clone())
                    .unwrap_or_else(|| func.domain.clone()),
            ),
            Atom::Id { .. } => None,
        }
    }

    pub fn is_id(&self) -> bool {
        matches!(self, Atom::Id { .. })
    }

    fn deriv_order(&self) -> u32 {
        match self {
            Atom::Deriv { order, .. } => *order,
            _ => 0,
        }
    }
}

pub fn chain_input(chain: &[Atom]) -> Vec<SpaceLabel> {
    chain.iter().flat_map(|a| a.input_spaces()).collect()
}

pub fn chain_output(chain: &[Atom]) -> Vec<SpaceLabel> {
    chain.iter().flat_map(|a| a.output_spaces()).collect()
}

impl OpTerm {
    pub fn new(coeff: i64, factors: Vec<Chain>) -> OpTerm {
        OpTerm { coeff, factors }
    }

    /// Input signature: the slots of the rightmost factor.
    pub fn input_spaces(&self) -> Vec<SpaceLabel> {
        self.factors
            .last()
            .map(|c| chain_input(c))
            .unwrap_or_default()
    }

    pub fn output_spaces(&self) -> Vec<SpaceLabel> {
        self.factors
            .first()
            .map(|c| chain_output(c))
            .unwrap_or_default()
    }

    /// The common base space of the term's atoms.
    pub fn base_space(&self) -> Option<SpaceLabel> {
        self.factors.iter().flatten().find_map(|a| a.base_space())
    }

    /// Check adjacent-factor signature compatibility and base consistency.
    pub fn validate(&self) -> Result<(), OpError> {
        if self.factors.is_empty() {
            return Err(OpError::SignatureMismatch(
                "term with no factors".to_string(),
            ));
        }
        for w in self.factors.windows(2) {
            let need = chain_input(&w[0]);
            let have = chain_output(&w[1]);
            if need != have {
                return Err(OpError::SignatureMismatch(format!(
                    "factor expects [{}], got [{}]",
                    join_spaces(&need),
                    join_spaces(&have)
                )));
            }
        }
        let mut base: Option<SpaceLabel> = None;
        for a in self.factors.iter().flatten() {
            if let Some(b) = a.base_space() {
                match &base {
                    None => base = Some(b),
                    Some(prev) if *prev != b => {
                        return Err(OpError::SignatureMismatch(format!(
                            "mixed base spaces {prev} and {b}"
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

fn join_spaces(v: &[SpaceLabel]) -> String {
    v.iter().map(|s| s.0.clone()).collect::<Vec<_>>().join(", ")
}

impl OpSum {
    pub fn from_terms(terms: Vec<OpTerm>) -> OpSum {
        OpSum { terms }
    }

    pub fn validate(&self) -> Result<(), OpError> {
        for t in &self.terms {
            t.validate()?;
        }
        Ok(())
    }
}

enum DiffAtom {
    /// Single-atom replacement (`D^k g -> D^{k+1} g`).
    Bump(Atom),
    /// Chain-rule split: `head ∘ tail` replaces the atom.
    Split { head: Atom, tail: Chain },
}

fn diff_atom(a: &Atom) -> Option<DiffAtom> {
    match a {
        Atom::Id { .. } => None,
        Atom::Deriv {
            func,
            order,
            composed_with: None,
        } => Some(DiffAtom::Bump(Atom::deriv(func, order + 1, None))),
        Atom::Func {
            func,
            composed_with: None,
        } => Some(DiffAtom::Bump(Atom::deriv(func, 1, None))),
        Atom::Deriv {
            func,
            order,
            composed_with: Some(g),
        } => {
            let mut tail = vec![Atom::deriv(g, 1, None)];
            let inner = a.input_spaces();
            if !inner.is_empty() {
                tail.push(Atom::id(&inner));
            }
            Some(DiffAtom::Split {
                head: Atom::deriv(func, order + 1, Some(g)),
                tail,
            })
        }
        Atom::Func {
            func,
            composed_with: Some(g),
        } => Some(DiffAtom::Split {
            head: Atom::deriv(func, 1, Some(g)),
            tail: vec![Atom::deriv(g, 1, None)],
        }),
    }
}

/// Insert an identity slot for `base` so it emerges at output position `pos`
/// of `chain`; returns the rewritten chain and the corresponding input
/// position (for threading through the next factor down).
fn insert_id_at_output_pos(chain: &[Atom], pos: usize, base: &SpaceLabel) -> (Chain, usize) {
    let mut out = Vec::with_capacity(chain.len() + 1);
    let mut cum_out = 0usize;
    let mut cum_in = 0usize;
    let mut inserted: Option<usize> = None;
    for a in chain {
        let n_out = a.output_spaces().len();
        let n_in = a.input_spaces().len();
        if inserted.is_none() {
            if cum_out == pos {
                out.push(Atom::id1(base));
                inserted = Some(cum_in);
            } else if pos < cum_out + n_out {
                // Interior of this atom's span: only identities are splittable.
                if let Atom::Id { spaces } = a {
                    let split = pos - cum_out;
                    out.push(Atom::id(&spaces[..split]));
                    out.push(Atom::id1(base));
                    out.push(Atom::id(&spaces[split..]));
                    inserted = Some(cum_in + split);
                    cum_out += n_out;
                    cum_in += n_in;
                    continue;
                }
                // Non-identity atoms span one output slot, so this is
                // unreachable for well-formed chains; fall through to append.
            }
        }
        out.push(a.clone());
        cum_out += n_out;
        cum_in += n_in;
    }
    if inserted.is_none() {
        out.push(Atom::id1(base));
        inserted = Some(cum_in);
    }
    (out, inserted.unwrap())
}

/// One derivative of every term, without normalization: the Leibniz sum over
/// factors and chain slots, with chain-rule splits and identity padding.
pub fn differentiate_raw(s: &OpSum) -> Result<OpSum, OpError> {
    s.validate()?;
    let mut out = Vec::new();
    for term in &s.terms {
        let base = match term.base_space() {
            Some(b) => b,
            None => continue, // all-identity term: derivative vanishes
        };
        for i in 0..term.factors.len() {
            let factor = &term.factors[i];
            for j in 0..factor.len() {
                let Some(diff) = diff_atom(&factor[j]) else {
                    continue;
                };
                let pos: usize = factor[..j].iter().map(|a| a.input_spaces().len()).sum();
                let mut factors: Vec<Chain> = term.factors[..i].to_vec();
                match diff {
                    DiffAtom::Bump(new_atom) => {
                        let mut f = factor.clone();
                        f[j] = new_atom;
                        factors.push(f);
                    }
                    DiffAtom::Split { head, tail } => {
                        let mut f1 = factor.clone();
                        f1[j] = head;
                        factors.push(f1);
                        let mut f2: Chain = Vec::new();
                        for sib in &factor[..j] {
                            let sp = sib.input_spaces();
                            if !sp.is_empty() {
                                f2.push(Atom::id(&sp));
                            }
                        }
                        f2.extend(tail);
                        for sib in &factor[j + 1..] {
                            let sp = sib.input_spaces();
                            if !sp.is_empty() {
                                f2.push(Atom::id(&sp));
                            }
                        }
                        factors.push(f2);
                    }
                }
                let mut thread = pos;
                for suffix in &term.factors[i + 1..] {
                    let (padded, next) = insert_id_at_output_pos(suffix, thread, &base);
                    factors.push(padded);
                    thread = next;
                }
                out.push(OpTerm {
                    coeff: term.coeff,
                    factors,
                });
            }
        }
    }
    Ok(OpSum::from_terms(out))
}

/// Derivative in normal form.
pub fn differentiate(s: &OpSum) -> Result<OpSum, OpError> {
    Ok(normalize(&differentiate_raw(s)?))
}

fn split_unit_ids(chain: &[Atom]) -> Chain {
    let mut out = Vec::new();
    for a in chain {
        match a {
            Atom::Id { spaces } if spaces.len() > 1 => {
                out.extend(spaces.iter().map(Atom::id1));
            }
            other => out.push(other.clone()),
        }
    }
    out
}

fn merge_adjacent_ids(chain: Vec<Atom>) -> Chain {
    let mut out: Chain = Vec::new();
    for a in chain {
        match (out.last_mut(), &a) {
            (Some(Atom::Id { spaces: prev }), Atom::Id { spaces }) => {
                prev.extend(spaces.iter().cloned())
            }
            _ => out.push(a),
        }
    }
    out
}

/// Fuse `p ∘ q` into a single chain when every slot pairs a non-identity
/// atom with identities on the other side.
fn fuse(p: &[Atom], q: &[Atom]) -> Option<Chain> {
    if chain_input(p) != chain_output(q) {
        return None;
    }
    let p_atoms = split_unit_ids(p);
    let q_atoms = split_unit_ids(q);
    // After unit-splitting, every q atom produces exactly one interface slot.
    let mut result: Chain = Vec::new();
    let mut s = 0usize;
    for a in &p_atoms {
        let arity = a.input_spaces().len();
        match a {
            Atom::Func { .. } => result.push(a.clone()),
            Atom::Id { .. } => {
                result.push(q_atoms.get(s)?.clone());
                s += 1;
            }
            Atom::Deriv { .. } => {
                if !q_atoms.get(s..s + arity)?.iter().all(Atom::is_id) {
                    return None;
                }
                result.push(a.clone());
                s += arity;
            }
        }
    }
    if s != q_atoms.len() {
        return None;
    }
    Some(merge_adjacent_ids(result))
}

fn normalize_term(mut term: OpTerm) -> OpTerm {
    loop {
        let mut changed = false;
        for f in &mut term.factors {
            let merged = merge_adjacent_ids(std::mem::take(f));
            *f = merged;
        }
        let mut i = 0;
        while i + 1 < term.factors.len() {
            if let Some(fused) = fuse(&term.factors[i], &term.factors[i + 1]) {
                term.factors[i] = fused;
                term.factors.remove(i + 1);
                changed = true;
            } else {
                i += 1;
            }
        }
        if term.factors.len() > 1 {
            let before = term.factors.len();
            let input_sig = term.input_spaces();
            term.factors.retain(|f| !f.iter().all(Atom::is_id));
            if term.factors.is_empty() {
                // Entirely identity: keep one representative factor.
                term.factors.push(vec![Atom::id(&input_sig)]);
            }
            changed |= term.factors.len() != before;
        }
        if !changed {
            return term;
        }
    }
}

fn atom_rank(a: &Atom) -> u8 {
    match a {
        Atom::Deriv { .. } => 0,
        Atom::Func { .. } => 1,
        Atom::Id { .. } => 2,
    }
}

/// Structural order on atoms: derivatives first, higher orders before lower
/// (so `D^2g ⊗ Dg` sorts before `Dg ⊗ D^2g`).
pub fn cmp_atom(a: &Atom, b: &Atom) -> Ordering {
    atom_rank(a).cmp(&atom_rank(b)).then_with(|| match (a, b) {
        (
            Atom::Deriv {
                func: f1,
                order: k1,
                composed_with: c1,
            },
            Atom::Deriv {
                func: f2,
                order: k2,
                composed_with: c2,
            },
        ) => f1.name.cmp(&f2.name).then(k2.cmp(k1)).then_with(|| {
            c1.as_ref()
                .map(|c| &c.name)
                .cmp(&c2.as_ref().map(|c| &c.name))
        }),
        (
            Atom::Func {
                func: f1,
                composed_with: c1,
            },
            Atom::Func {
                func: f2,
                composed_with: c2,
            },
        ) => f1.name.cmp(&f2.name).then_with(|| {
            c1.as_ref()
                .map(|c| &c.name)
                .cmp(&c2.as_ref().map(|c| &c.name))
        }),
        (Atom::Id { spaces: s1 }, Atom::Id { spaces: s2 }) => s1.cmp(s2),
        _ => Ordering::Equal,
    })
}

fn cmp_chain(a: &[Atom], b: &[Atom]) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        let c = cmp_atom(x, y);
        if c != Ordering::Equal {
            return c;
        }
    }
    a.len().cmp(&b.len())
}

fn cmp_factors(a: &[Chain], b: &[Chain]) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        let c = cmp_chain(x, y);
        if c != Ordering::Equal {
            return c;
        }
    }
    a.len().cmp(&b.len())
}

fn outer_order(t: &OpTerm) -> u32 {
    t.factors
        .first()
        .map(|c| c.iter().map(Atom::deriv_order).max().unwrap_or(0))
        .unwrap_or(0)
}

/// Canonical term order: descending outer derivative order, then the
/// structural chain order.
pub fn cmp_term_key(a: &OpTerm, b: &OpTerm) -> Ordering {
    outer_order(b)
        .cmp(&outer_order(a))
        .then_with(|| cmp_factors(&a.factors, &b.factors))
}

/// Normal form: fuse factors, absorb identities, collect like terms with
/// integer coefficients, drop zeros, sort canonically. Tensor chains are
/// never reordered.
pub fn normalize(s: &OpSum) -> OpSum {
    let mut terms: Vec<OpTerm> = s.terms.iter().cloned().map(normalize_term).collect();
    terms.sort_by(|a, b| cmp_term_key(a, b).then_with(|| a.coeff.cmp(&b.coeff)));
    let mut out: Vec<OpTerm> = Vec::new();
    for t in terms {
        match out.last_mut() {
            Some(last) if last.factors == t.factors => last.coeff += t.coeff,
            _ => out.push(t),
        }
    }
    out.retain(|t| t.coeff != 0);
    OpSum::from_terms(out)
}

/// The order-`k` expansion of `D^k(f ∘ g)`: start from
/// `(Df ∘ g) Dg` and differentiate `k - 1` times, normalizing each step.
pub fn expand_composition(f: &FuncSymbol, g: &FuncSymbol, k: u32) -> Result<OpSum, OpError> {
    if g.codomain != f.domain {
        return Err(OpError::SignatureMismatch(format!(
            "codomain of {} is {}, domain of {} is {}",
            g.name, g.codomain, f.name, f.domain
        )));
    }
    if k == 0 {
        return Err(OpError::SignatureMismatch("order must be >= 1".to_string()));
    }
    let base = OpSum::from_terms(vec![OpTerm::new(
        1,
        vec![
            vec![Atom::deriv(f, 1, Some(g))],
            vec![Atom::deriv(g, 1, None)],
        ],
    )]);
    let mut sum = normalize(&base);
    for _ in 1..k {
        sum = differentiate(&sum)?;
    }
    Ok(sum)
}
