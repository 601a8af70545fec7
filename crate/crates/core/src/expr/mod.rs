//! Rate-function expressions.
//!
//! An [`Expr`] is the concrete form of a propensity, an ODE right-hand side,
//! a template slot or a distribution parameter. Evaluation is pure and total
//! on its domain: anything that would produce a non-finite number is reported
//! as [`EvalError::Domain`] instead.

pub mod dist;
mod fmt;
pub mod quad;
pub mod special;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dist::{sample, DistributionSpec, Family, ResolvedDist};
pub use special::{
    erlang_hazard, hazard_from_density, normal_pdf, upper_incomplete_gamma, DEFAULT_QUAD_TOL,
    SURVIVOR_EPSILON,
};

/// Name of the reserved variable holding a match's age in jump propensities.
pub const AGE: &str = "age";

/// Runtime value of an expression or a term slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Real(f64),
    Vector(Vec<f64>),
    Bool(bool),
}

impl Value {
    /// Scalar numeric view; `None` for vectors and booleans.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Real(r) => Some(*r),
            _ => None,
        }
    }

    /// Equality used by pattern literals and repeated variables: integers and
    /// reals compare by numeric value.
    pub fn numeric_eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Vector(a), Value::Vector(b)) => a == b,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (a, b) => match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => x == y,
                _ => false,
            },
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Value::Int(_) => "integer",
            Value::Real(_) => "real",
            Value::Vector(_) => "vector",
            Value::Bool(_) => "boolean",
        }
    }
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r:?}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Vector(v) => {
                write!(f, "[")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{x:?}")?;
                }
                write!(f, "]")
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builtin {
    Exp,
    Log,
    Sqrt,
    Abs,
    Norm,
    Min,
    Max,
    /// Indicator Θ: `step(bool)` is 0/1, `step(x)` is 1 for x > 0.
    Step,
    /// `normal_pdf(x; mean, sd)`, isotropic product density for vectors.
    NormalPdf,
    ErlangHazard,
    IncompleteGammaUpper,
}

impl Builtin {
    pub fn from_name(name: &str) -> Option<Builtin> {
        Some(match name {
            "exp" => Builtin::Exp,
            "log" => Builtin::Log,
            "sqrt" => Builtin::Sqrt,
            "abs" => Builtin::Abs,
            "norm" => Builtin::Norm,
            "min" => Builtin::Min,
            "max" => Builtin::Max,
            "step" | "Θ" => Builtin::Step,
            "normal_pdf" => Builtin::NormalPdf,
            "erlang_hazard" => Builtin::ErlangHazard,
            "incomplete_gamma_upper" => Builtin::IncompleteGammaUpper,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Exp => "exp",
            Builtin::Log => "log",
            Builtin::Sqrt => "sqrt",
            Builtin::Abs => "abs",
            Builtin::Norm => "norm",
            Builtin::Min => "min",
            Builtin::Max => "max",
            Builtin::Step => "step",
            Builtin::NormalPdf => "normal_pdf",
            Builtin::ErlangHazard => "erlang_hazard",
            Builtin::IncompleteGammaUpper => "incomplete_gamma_upper",
        }
    }

    /// Accepted argument counts (inclusive bounds).
    pub fn arity(self) -> (usize, usize) {
        match self {
            Builtin::Min | Builtin::Max => (2, usize::MAX),
            Builtin::NormalPdf | Builtin::ErlangHazard => (3, 3),
            Builtin::IncompleteGammaUpper => (2, 2),
            _ => (1, 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Int(i64),
    Real(f64),
    /// Reference to a grammar-level constant.
    Const(String),
    /// Reference to a rule variable (pattern binding, fresh draw, or `age`).
    Var(String),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Builtin, Vec<Expr>),
    /// Set membership, `x in {a, b, ...}`.
    In(Box<Expr>, Vec<Expr>),
    Vector(Vec<Expr>),
    /// Hazard of a waiting-time density at the given age, by quadrature.
    Hazard(Box<Expr>, Box<DistributionSpec>),
}

impl Expr {
    pub fn binary(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    /// Visits every rule-variable reference.
    pub fn for_each_var<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Var(v) => f(v),
            Expr::Int(_) | Expr::Real(_) | Expr::Const(_) => {}
            Expr::Neg(e) | Expr::Not(e) => e.for_each_var(f),
            Expr::Binary(_, l, r) => {
                l.for_each_var(f);
                r.for_each_var(f);
            }
            Expr::Call(_, args) | Expr::Vector(args) => args.iter().for_each(|a| a.for_each_var(f)),
            Expr::In(e, set) => {
                e.for_each_var(f);
                set.iter().for_each(|a| a.for_each_var(f));
            }
            Expr::Hazard(t, d) => {
                t.for_each_var(f);
                d.params.iter().for_each(|a| a.for_each_var(f));
            }
        }
    }

    pub fn mentions_var(&self, name: &str) -> bool {
        let mut found = false;
        self.for_each_var(&mut |v| found |= v == name);
        found
    }

    /// Rewrites every `Var` through `f` (used for canonical renaming).
    pub fn map_vars(&self, f: &impl Fn(&str) -> String) -> Expr {
        let rec = |e: &Expr| e.map_vars(f);
        match self {
            Expr::Var(v) => Expr::Var(f(v)),
            Expr::Int(_) | Expr::Real(_) | Expr::Const(_) => self.clone(),
            Expr::Neg(e) => Expr::Neg(Box::new(rec(e))),
            Expr::Not(e) => Expr::Not(Box::new(rec(e))),
            Expr::Binary(op, l, r) => Expr::Binary(*op, Box::new(rec(l)), Box::new(rec(r))),
            Expr::Call(b, args) => Expr::Call(*b, args.iter().map(rec).collect()),
            Expr::Vector(args) => Expr::Vector(args.iter().map(rec).collect()),
            Expr::In(e, set) => Expr::In(Box::new(rec(e)), set.iter().map(rec).collect()),
            Expr::Hazard(t, d) => Expr::Hazard(Box::new(rec(t)), Box::new(d.map_vars(f))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("domain error in `{node}`: {reason}")]
    Domain { node: String, reason: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// The survivor probability of a delay fell below [`SURVIVOR_EPSILON`];
    /// the hazard is effectively infinite.
    #[error("survivor probability {survivor:e} below threshold at t = {t}")]
    SurvivorUnderflow { t: f64, survivor: f64 },
}

fn domain(node: &Expr, reason: impl Into<String>) -> EvalError {
    EvalError::Domain {
        node: node.to_string(),
        reason: reason.into(),
    }
}

/// Variable bindings plus the grammar's constants.
#[derive(Clone, Debug, Default)]
pub struct Env {
    vars: BTreeMap<String, Value>,
    consts: Arc<BTreeMap<String, f64>>,
}

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_constants(consts: Arc<BTreeMap<String, f64>>) -> Self {
        Self {
            vars: BTreeMap::new(),
            consts,
        }
    }

    pub fn bind(&mut self, name: impl Into<String>, value: Value) {
        self.vars.insert(name.into(), value);
    }

    pub fn with(mut self, name: impl Into<String>, value: Value) -> Self {
        self.bind(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.vars.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Value> {
        self.vars.get_mut(name)
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.consts.get(name).copied()
    }

    pub fn vars(&self) -> &BTreeMap<String, Value> {
        &self.vars
    }
}

fn finite(node: &Expr, x: f64) -> Result<Value, EvalError> {
    if x.is_finite() {
        Ok(Value::Real(x))
    } else {
        Err(domain(node, "non-finite result"))
    }
}

fn scalar(node: &Expr, v: &Value) -> Result<f64, EvalError> {
    v.as_f64()
        .ok_or_else(|| domain(node, format!("expected a number, found a {}", v.kind())))
}

fn boolean(node: &Expr, v: &Value) -> Result<bool, EvalError> {
    match v {
        Value::Bool(b) => Ok(*b),
        other => Err(domain(node, format!("expected a boolean, found a {}", other.kind()))),
    }
}

/// Evaluates `expr` in `env`.
pub fn eval(expr: &Expr, env: &Env) -> Result<Value, EvalError> {
    match expr {
        Expr::Int(i) => Ok(Value::Int(*i)),
        Expr::Real(r) => finite(expr, *r),
        Expr::Var(name) => env
            .get(name)
            .cloned()
            .ok_or_else(|| EvalError::UnboundVariable(name.clone())),
        Expr::Const(name) => env
            .constant(name)
            .map(Value::Real)
            .ok_or_else(|| EvalError::UnboundVariable(name.clone())),
        Expr::Neg(e) => match eval(e, env)? {
            Value::Int(i) => i
                .checked_neg()
                .map(Value::Int)
                .ok_or_else(|| domain(expr, "integer overflow")),
            Value::Real(r) => Ok(Value::Real(-r)),
            Value::Vector(v) => Ok(Value::Vector(v.into_iter().map(|x| -x).collect())),
            Value::Bool(_) => Err(domain(expr, "cannot negate a boolean")),
        },
        Expr::Not(e) => Ok(Value::Bool(!boolean(expr, &eval(e, env)?)?)),
        Expr::Binary(op, l, r) => eval_binary(expr, *op, l, r, env),
        Expr::In(e, set) => {
            let x = eval(e, env)?;
            for item in set {
                if x.numeric_eq(&eval(item, env)?) {
                    return Ok(Value::Bool(true));
                }
            }
            Ok(Value::Bool(false))
        }
        Expr::Vector(items) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                out.push(scalar(expr, &eval(item, env)?)?);
            }
            Ok(Value::Vector(out))
        }
        Expr::Call(b, args) => eval_call(expr, *b, args, env),
        Expr::Hazard(t, d) => {
            let age = scalar(expr, &eval(t, env)?)?;
            let dist = d.resolve(env)?;
            let h = hazard_from_density(|x| dist.pdf(x), age, DEFAULT_QUAD_TOL)?;
            finite(expr, h)
        }
    }
}

/// Evaluates to a scalar real (integers widen).
pub fn eval_real(expr: &Expr, env: &Env) -> Result<f64, EvalError> {
    let v = eval(expr, env)?;
    scalar(expr, &v)
}

fn eval_binary(node: &Expr, op: BinOp, l: &Expr, r: &Expr, env: &Env) -> Result<Value, EvalError> {
    // Short-circuit logical operators first.
    match op {
        BinOp::And => {
            return Ok(Value::Bool(
                boolean(node, &eval(l, env)?)? && boolean(node, &eval(r, env)?)?,
            ))
        }
        BinOp::Or => {
            return Ok(Value::Bool(
                boolean(node, &eval(l, env)?)? || boolean(node, &eval(r, env)?)?,
            ))
        }
        _ => {}
    }
    let a = eval(l, env)?;
    let b = eval(r, env)?;
    match op {
        BinOp::Eq => return Ok(Value::Bool(a.numeric_eq(&b))),
        BinOp::Ne => return Ok(Value::Bool(!a.numeric_eq(&b))),
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
            let (x, y) = (scalar(node, &a)?, scalar(node, &b)?);
            return Ok(Value::Bool(match op {
                BinOp::Lt => x < y,
                BinOp::Le => x <= y,
                BinOp::Gt => x > y,
                _ => x >= y,
            }));
        }
        _ => {}
    }
    match (&a, &b) {
        (Value::Int(x), Value::Int(y)) if matches!(op, BinOp::Add | BinOp::Sub | BinOp::Mul) => {
            let res = match op {
                BinOp::Add => x.checked_add(*y),
                BinOp::Sub => x.checked_sub(*y),
                _ => x.checked_mul(*y),
            };
            res.map(Value::Int)
                .ok_or_else(|| domain(node, "integer overflow"))
        }
        (Value::Vector(x), Value::Vector(y)) => match op {
            BinOp::Add | BinOp::Sub => {
                if x.len() != y.len() {
                    return Err(domain(
                        node,
                        format!("vector dimensions differ ({} vs {})", x.len(), y.len()),
                    ));
                }
                let sign = if op == BinOp::Add { 1.0 } else { -1.0 };
                Ok(Value::Vector(
                    x.iter().zip(y).map(|(p, q)| p + sign * q).collect(),
                ))
            }
            _ => Err(domain(node, format!("operator `{}` is not defined on vectors", op.symbol()))),
        },
        (Value::Vector(v), s) | (s, Value::Vector(v)) => {
            let s = scalar(node, s)?;
            let vector_on_left = matches!(a, Value::Vector(_));
            let out: Vec<f64> = match op {
                BinOp::Mul => v.iter().map(|x| x * s).collect(),
                BinOp::Div if vector_on_left => {
                    if s == 0.0 {
                        return Err(domain(node, "division by zero"));
                    }
                    v.iter().map(|x| x / s).collect()
                }
                _ => {
                    return Err(domain(
                        node,
                        format!("operator `{}` between a vector and a scalar", op.symbol()),
                    ))
                }
            };
            if out.iter().all(|x| x.is_finite()) {
                Ok(Value::Vector(out))
            } else {
                Err(domain(node, "non-finite result"))
            }
        }
        _ => {
            let (x, y) = (scalar(node, &a)?, scalar(node, &b)?);
            let res = match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => {
                    if y == 0.0 {
                        return Err(domain(node, "division by zero"));
                    }
                    x / y
                }
                BinOp::Pow => x.powf(y),
                _ => unreachable!("comparison and logic handled above"),
            };
            finite(node, res)
        }
    }
}

fn eval_call(node: &Expr, b: Builtin, args: &[Expr], env: &Env) -> Result<Value, EvalError> {
    let (lo, hi) = b.arity();
    if args.len() < lo || args.len() > hi {
        return Err(domain(node, format!("`{}` takes {lo}..{hi} arguments", b.name())));
    }
    let real = |i: usize| -> Result<f64, EvalError> { scalar(node, &eval(&args[i], env)?) };
    match b {
        Builtin::Exp => finite(node, real(0)?.exp()),
        Builtin::Log => {
            let x = real(0)?;
            if x <= 0.0 {
                return Err(domain(node, format!("log of nonpositive value {x}")));
            }
            finite(node, x.ln())
        }
        Builtin::Sqrt => {
            let x = real(0)?;
            if x < 0.0 {
                return Err(domain(node, format!("sqrt of negative value {x}")));
            }
            finite(node, x.sqrt())
        }
        Builtin::Abs => match eval(&args[0], env)? {
            Value::Int(i) => i
                .checked_abs()
                .map(Value::Int)
                .ok_or_else(|| domain(node, "integer overflow")),
            v => finite(node, scalar(node, &v)?.abs()),
        },
        Builtin::Norm => match eval(&args[0], env)? {
            Value::Vector(v) => finite(node, v.iter().map(|x| x * x).sum::<f64>().sqrt()),
            v => finite(node, scalar(node, &v)?.abs()),
        },
        Builtin::Min | Builtin::Max => {
            let vals = args
                .iter()
                .map(|a| eval(a, env))
                .collect::<Result<Vec<_>, _>>()?;
            if vals.iter().all(|v| matches!(v, Value::Int(_))) {
                let ints = vals.iter().map(|v| match v {
                    Value::Int(i) => *i,
                    _ => unreachable!(),
                });
                let res = if b == Builtin::Min { ints.min() } else { ints.max() };
                return Ok(Value::Int(res.expect("arity >= 2")));
            }
            let mut acc = scalar(node, &vals[0])?;
            for v in &vals[1..] {
                let x = scalar(node, v)?;
                acc = if b == Builtin::Min { acc.min(x) } else { acc.max(x) };
            }
            finite(node, acc)
        }
        Builtin::Step => match eval(&args[0], env)? {
            Value::Bool(t) => Ok(Value::Real(if t { 1.0 } else { 0.0 })),
            v => Ok(Value::Real(if scalar(node, &v)? > 0.0 { 1.0 } else { 0.0 })),
        },
        Builtin::NormalPdf => {
            let x = eval(&args[0], env)?;
            let mean = eval(&args[1], env)?;
            let sd = real(2)?;
            finite(node, normal_pdf_value(node, &x, &mean, sd)?)
        }
        Builtin::ErlangHazard => {
            let t = real(0)?;
            let n = integral(node, &eval(&args[1], env)?)?;
            let lambda = real(2)?;
            finite(node, erlang_hazard(t, n, lambda)?)
        }
        Builtin::IncompleteGammaUpper => {
            let s = real(0)?;
            let x = real(1)?;
            finite(node, upper_incomplete_gamma(s, x)?)
        }
    }
}

/// Accepts integers and integral reals.
pub(crate) fn integral(node: &Expr, v: &Value) -> Result<i64, EvalError> {
    match v {
        Value::Int(i) => Ok(*i),
        Value::Real(r) if r.fract() == 0.0 && r.abs() < 9.0e15 => Ok(*r as i64),
        other => Err(domain(node, format!("expected an integer, found {other}"))),
    }
}

fn normal_pdf_value(node: &Expr, x: &Value, mean: &Value, sd: f64) -> Result<f64, EvalError> {
    if !(sd > 0.0) {
        return Err(domain(node, format!("normal_pdf scale must be positive, got {sd}")));
    }
    match (x, mean) {
        (Value::Vector(xs), Value::Vector(ms)) => {
            if xs.len() != ms.len() {
                return Err(domain(node, "normal_pdf mean has the wrong dimension"));
            }
            Ok(xs.iter().zip(ms).map(|(a, m)| normal_pdf(*a, *m, sd)).product())
        }
        (Value::Vector(xs), m) => {
            let m = scalar(node, m)?;
            Ok(xs.iter().map(|a| normal_pdf(*a, m, sd)).product())
        }
        (x, m) => Ok(normal_pdf(scalar(node, x)?, scalar(node, m)?, sd)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(n: &str) -> Expr {
        Expr::Var(n.into())
    }

    #[test]
    fn arithmetic_example() {
        // 2*V + 1 at V = 3
        let e = Expr::binary(
            BinOp::Add,
            Expr::binary(BinOp::Mul, Expr::Int(2), var("V")),
            Expr::Int(1),
        );
        let env = Env::new().with("V", Value::Int(3));
        assert_eq!(eval(&e, &env).unwrap(), Value::Int(7));
        let env = Env::new().with("V", Value::Real(3.0));
        assert_eq!(eval_real(&e, &env).unwrap(), 7.0);
    }

    #[test]
    fn step_of_false_is_zero() {
        let e = Expr::Call(
            Builtin::Step,
            vec![Expr::binary(BinOp::Lt, var("chi"), Expr::Const("chi_max".into()))],
        );
        let consts = Arc::new(BTreeMap::from([("chi_max".to_string(), 2.0)]));
        let env = Env::with_constants(consts).with("chi", Value::Int(2));
        assert_eq!(eval_real(&e, &env).unwrap(), 0.0);
        let env = env.with("chi", Value::Int(1));
        assert_eq!(eval_real(&e, &env).unwrap(), 1.0);
    }

    #[test]
    fn standard_normal_density_at_zero() {
        let oracle = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let e = Expr::Call(Builtin::NormalPdf, vec![Expr::Int(0), Expr::Int(0), Expr::Int(1)]);
        let got = eval_real(&e, &Env::new()).unwrap();
        assert!((got - oracle).abs() < 1e-15);
        assert!((got - 0.3989422804).abs() < 1e-10);
    }

    #[test]
    fn isotropic_vector_density_is_product() {
        let e = Expr::Call(
            Builtin::NormalPdf,
            vec![
                Expr::Vector(vec![Expr::Real(0.5), Expr::Real(-1.0)]),
                Expr::Int(0),
                Expr::Real(2.0),
            ],
        );
        let got = eval_real(&e, &Env::new()).unwrap();
        let want = normal_pdf(0.5, 0.0, 2.0) * normal_pdf(-1.0, 0.0, 2.0);
        assert_eq!(got, want);
    }

    #[test]
    fn unbound_and_domain_errors() {
        assert_eq!(
            eval(&var("q"), &Env::new()),
            Err(EvalError::UnboundVariable("q".into()))
        );
        let log0 = Expr::Call(Builtin::Log, vec![Expr::Int(0)]);
        assert!(matches!(eval(&log0, &Env::new()), Err(EvalError::Domain { .. })));
        let div0 = Expr::binary(BinOp::Div, Expr::Int(1), Expr::Real(0.0));
        assert!(matches!(eval(&div0, &Env::new()), Err(EvalError::Domain { .. })));
        let overflow = Expr::Call(Builtin::Exp, vec![Expr::Real(1000.0)]);
        assert!(matches!(eval(&overflow, &Env::new()), Err(EvalError::Domain { .. })));
        let frac_pow = Expr::binary(BinOp::Pow, Expr::Real(-2.0), Expr::Real(0.5));
        assert!(matches!(eval(&frac_pow, &Env::new()), Err(EvalError::Domain { .. })));
    }

    #[test]
    fn vector_arithmetic() {
        let env = Env::new()
            .with("x", Value::Vector(vec![1.0, 2.0]))
            .with("dx", Value::Vector(vec![0.5, -0.5]));
        let sum = Expr::binary(BinOp::Add, var("x"), var("dx"));
        assert_eq!(eval(&sum, &env).unwrap(), Value::Vector(vec![1.5, 1.5]));
        let diff = Expr::binary(BinOp::Sub, var("x"), var("dx"));
        let n = Expr::Call(Builtin::Norm, vec![diff]);
        assert!((eval_real(&n, &env).unwrap() - (0.25f64 + 6.25).sqrt()).abs() < 1e-15);
        let scaled = Expr::binary(BinOp::Div, var("x"), Expr::Int(2));
        assert_eq!(eval(&scaled, &env).unwrap(), Value::Vector(vec![0.5, 1.0]));
        let bad = Expr::binary(BinOp::Mul, var("x"), var("dx"));
        assert!(eval(&bad, &env).is_err());
    }

    #[test]
    fn membership_and_logic() {
        let e = Expr::In(Box::new(var("d")), vec![Expr::Int(0), Expr::Int(1)]);
        assert_eq!(eval(&e, &Env::new().with("d", Value::Int(1))).unwrap(), Value::Bool(true));
        assert_eq!(eval(&e, &Env::new().with("d", Value::Int(2))).unwrap(), Value::Bool(false));
        let both = Expr::binary(BinOp::And, e.clone(), Expr::Not(Box::new(e)));
        assert_eq!(eval(&both, &Env::new().with("d", Value::Int(0))).unwrap(), Value::Bool(false));
    }

    #[test]
    fn evaluation_is_bit_identical() {
        let e = Expr::Call(
            Builtin::ErlangHazard,
            vec![var("t"), Expr::Int(3), Expr::Real(1.7)],
        );
        let env = Env::new().with("t", Value::Real(0.731));
        let a = eval_real(&e, &env).unwrap();
        let b = eval_real(&e, &env).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
