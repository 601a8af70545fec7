//! Dynamical grammars: AST, text parser, pretty printer, validation and
//! composition by multiset union.

mod compose;
mod lexer;
mod parser;
mod printer;
mod validate;

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::expr::{DistributionSpec, Expr};

pub use compose::{compose, ComposeError};
pub use parser::parse_grammar;
pub use printer::pretty_print;
pub use validate::{validate, Diagnostic, DiagnosticKind};

/// Source position (1-based). Positions never take part in structural
/// equality, so a re-parsed grammar compares equal to the original.
#[derive(Clone, Copy, Debug, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

impl Eq for Span {}

impl std::fmt::Display for Span {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: {message}")]
    Syntax { line: u32, col: u32, message: String },
    #[error("{line}:{col}: {message}")]
    Sort { line: u32, col: u32, message: String },
}

impl ParseError {
    pub fn position(&self) -> (u32, u32) {
        match self {
            ParseError::Syntax { line, col, .. } | ParseError::Sort { line, col, .. } => (*line, *col),
        }
    }

    pub fn message(&self) -> &str {
        match self {
            ParseError::Syntax { message, .. } | ParseError::Sort { message, .. } => message,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sort {
    /// Integer slot, optionally restricted to `lo..=hi`.
    Int(Option<(i64, i64)>),
    Real,
    /// Real vector of the grammar's dimension.
    Vector,
}

impl Sort {
    pub fn is_real(self) -> bool {
        self == Sort::Real
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlotDecl {
    pub name: Option<String>,
    pub sort: Sort,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeciesDecl {
    pub name: String,
    pub slots: Vec<SlotDecl>,
    pub span: Span,
}

impl SpeciesDecl {
    pub fn sorts(&self) -> impl Iterator<Item = Sort> + '_ {
        self.slots.iter().map(|s| s.sort)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstDecl {
    pub name: String,
    pub value: f64,
    pub span: Span,
}

/// One slot of a left-hand-side pattern.
#[derive(Clone, Debug, PartialEq)]
pub enum SlotPattern {
    /// Binds (first occurrence) or constrains (repeat) a rule variable.
    Var(String),
    Int(i64),
    Real(f64),
    /// Literal given by a grammar constant.
    Const(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TermPattern {
    pub species: String,
    pub slots: Vec<SlotPattern>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TermTemplate {
    pub species: String,
    pub slots: Vec<Expr>,
    pub span: Span,
}

/// A fresh variable drawn when a jump rule fires: `name [: vec] ~ Dist(...)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FreshVar {
    pub name: String,
    pub vector: bool,
    pub dist: DistributionSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JumpBody {
    pub propensity: Expr,
    pub fresh: Vec<FreshVar>,
}

/// `d<target>/dt = rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Derivative {
    pub target: String,
    pub rhs: Expr,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousBody {
    pub derivatives: Vec<Derivative>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RuleBody {
    Jump(JumpBody),
    Continuous(ContinuousBody),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub name: String,
    pub multiplicity: u32,
    pub lhs: Vec<TermPattern>,
    pub rhs: Vec<TermTemplate>,
    pub body: RuleBody,
    pub span: Span,
}

impl Rule {
    pub fn is_jump(&self) -> bool {
        matches!(self.body, RuleBody::Jump(_))
    }

    pub fn jump(&self) -> Option<&JumpBody> {
        match &self.body {
            RuleBody::Jump(j) => Some(j),
            RuleBody::Continuous(_) => None,
        }
    }

    pub fn continuous(&self) -> Option<&ContinuousBody> {
        match &self.body {
            RuleBody::Continuous(c) => Some(c),
            RuleBody::Jump(_) => None,
        }
    }

    /// Pattern variables in order of first appearance.
    pub fn lhs_vars(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for p in &self.lhs {
            for s in &p.slots {
                if let SlotPattern::Var(v) = s {
                    if !out.contains(&v.as_str()) {
                        out.push(v);
                    }
                }
            }
        }
        out
    }

    /// True if the propensity reads the reserved `age` variable.
    pub fn uses_age(&self) -> bool {
        self.jump()
            .map(|j| j.propensity.mentions_var(crate::expr::AGE))
            .unwrap_or(false)
    }

    /// Copy with bound variables renamed to `_v0, _v1, ...` in order of first
    /// appearance, name cleared and multiplicity reset. Two rules are the
    /// same multiset element iff their canonical forms are equal.
    pub fn canonical(&self) -> Rule {
        let mut order: Vec<String> = self.lhs_vars().into_iter().map(String::from).collect();
        if let RuleBody::Jump(j) = &self.body {
            for f in &j.fresh {
                if !order.contains(&f.name) {
                    order.push(f.name.clone());
                }
            }
        }
        let rename = |v: &str| -> String {
            if let Some(i) = order.iter().position(|o| o == v) {
                return format!("_v{i}");
            }
            // Differentials `dX` of continuous targets follow their variable.
            if let Some(base) = v.strip_prefix('d') {
                if let Some(i) = order.iter().position(|o| o == base) {
                    return format!("d_v{i}");
                }
            }
            v.to_string()
        };
        let lhs = self
            .lhs
            .iter()
            .map(|p| TermPattern {
                species: p.species.clone(),
                slots: p
                    .slots
                    .iter()
                    .map(|s| match s {
                        SlotPattern::Var(v) => SlotPattern::Var(rename(v)),
                        other => other.clone(),
                    })
                    .collect(),
                span: p.span,
            })
            .collect();
        let rhs = self
            .rhs
            .iter()
            .map(|t| TermTemplate {
                species: t.species.clone(),
                slots: t.slots.iter().map(|e| e.map_vars(&rename)).collect(),
                span: t.span,
            })
            .collect();
        let body = match &self.body {
            RuleBody::Jump(j) => RuleBody::Jump(JumpBody {
                propensity: j.propensity.map_vars(&rename),
                fresh: j
                    .fresh
                    .iter()
                    .map(|f| FreshVar {
                        name: rename(&f.name),
                        vector: f.vector,
                        dist: f.dist.map_vars(&rename),
                    })
                    .collect(),
            }),
            RuleBody::Continuous(c) => RuleBody::Continuous(ContinuousBody {
                derivatives: c
                    .derivatives
                    .iter()
                    .map(|d| Derivative {
                        target: rename(&d.target),
                        rhs: d.rhs.map_vars(&rename),
                    })
                    .collect(),
            }),
        };
        Rule {
            name: String::new(),
            multiplicity: 1,
            lhs,
            rhs,
            body,
            span: self.span,
        }
    }
}

pub const DEFAULT_DIM: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct Grammar {
    pub name: String,
    pub dim: usize,
    pub constants: Vec<ConstDecl>,
    pub species: Vec<SpeciesDecl>,
    pub rules: Vec<Rule>,
}

impl Grammar {
    pub fn empty(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            dim: DEFAULT_DIM,
            constants: Vec::new(),
            species: Vec::new(),
            rules: Vec::new(),
        }
    }

    pub fn species(&self, name: &str) -> Option<&SpeciesDecl> {
        self.species.iter().find(|s| s.name == name)
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.iter().find(|c| c.name == name).map(|c| c.value)
    }

    pub fn rule(&self, name: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.name == name)
    }

    pub fn constant_map(&self) -> BTreeMap<String, f64> {
        self.constants.iter().map(|c| (c.name.clone(), c.value)).collect()
    }

    pub fn has_continuous_rules(&self) -> bool {
        self.rules.iter().any(|r| !r.is_jump())
    }

    /// Content digest of the canonical text; stamped into every output so
    /// artifacts from different grammars are never compared.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(pretty_print(self).as_bytes()))
    }

    /// Structural equivalence as multisets: same dimension, constants and
    /// species (as maps), and the same total multiplicity for every
    /// canonical rule. Names and rule order are ignored.
    pub fn equivalent(&self, other: &Grammar) -> bool {
        if self.dim != other.dim || self.constant_map() != other.constant_map() {
            return false;
        }
        let species = |g: &Grammar| -> BTreeMap<String, Vec<Sort>> {
            g.species.iter().map(|s| (s.name.clone(), s.sorts().collect())).collect()
        };
        if species(self) != species(other) {
            return false;
        }
        let tally = |g: &Grammar| -> Vec<(Rule, u64)> {
            let mut out: Vec<(Rule, u64)> = Vec::new();
            for r in &g.rules {
                let c = r.canonical();
                match out.iter_mut().find(|(k, _)| *k == c) {
                    Some((_, m)) => *m += r.multiplicity as u64,
                    None => out.push((c, r.multiplicity as u64)),
                }
            }
            out
        };
        let (a, b) = (tally(self), tally(other));
        a.len() == b.len() && a.iter().all(|(r, m)| b.iter().any(|(s, n)| r == s && m == n))
    }
}
