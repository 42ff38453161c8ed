//! Coordinate-free matrix calculus engine.
//!
//! Four layers:
//!
//! * [`expr`] — shaped ASTs for concrete matrix/scalar expressions, with a
//!   parser, canonicalizing simplifier, pretty printers and a numeric
//!   evaluator.
//! * [`frechet`] — symbolic directional (Fréchet) derivatives of concrete
//!   expressions, plus gradient and Hessian-operator extraction through the
//!   trace inner product.
//! * [`opcalc`] — an abstract operator calculus over uninterpreted function
//!   symbols: tensor-product chains, a term rewriter, and the mechanical
//!   expansion of `D^k(f∘g)` to any order.
//! * [`numcheck`] — finite-difference and remainder-ratio oracles that verify
//!   every symbolic result numerically, plus a norm-bound checker and a
//!   classical Gâteaux-but-not-Fréchet counterexample.

pub mod corpus;
pub mod expr;
pub mod frechet;
pub mod numcheck;
pub mod opcalc;
