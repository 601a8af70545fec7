//! Dynamical grammars: rule-based stochastic models with jump and continuous
//! rules, simulated exactly and checked against their master equation.

pub mod expr;
pub mod engine;
pub mod grammar;
pub mod matching;
pub mod model;
pub mod operator;
pub mod rng;
pub mod store;

pub use expr::{Env, Expr, Value};
pub use grammar::{compose, parse_grammar, pretty_print, validate, Grammar};
pub use model::Model;
pub use rng::RandomStream;
pub use store::{TermId, TermStore};
