//! Distribution declarations for fresh rule variables and delay densities.

use rand_distr::{Distribution, StandardNormal};

use super::{eval, eval_real, integral, EvalError, Env, Expr, Value};
use crate::rng::RandomStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Exponential,
    Erlang,
    Normal,
    Bernoulli,
    Categorical,
    Uniform,
    DiscreteUniform,
}

impl Family {
    pub fn from_name(name: &str) -> Option<Family> {
        Some(match name {
            "Exponential" => Family::Exponential,
            "Erlang" => Family::Erlang,
            "Normal" => Family::Normal,
            "Bernoulli" => Family::Bernoulli,
            "Categorical" => Family::Categorical,
            "Uniform" => Family::Uniform,
            "DiscreteUniform" => Family::DiscreteUniform,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Exponential => "Exponential",
            Family::Erlang => "Erlang",
            Family::Normal => "Normal",
            Family::Bernoulli => "Bernoulli",
            Family::Categorical => "Categorical",
            Family::Uniform => "Uniform",
            Family::DiscreteUniform => "DiscreteUniform",
        }
    }

    /// Accepted parameter counts (inclusive).
    pub fn arity(self) -> (usize, usize) {
        match self {
            Family::Exponential | Family::Bernoulli => (1, 1),
            Family::Categorical => (1, usize::MAX),
            _ => (2, 2),
        }
    }

    /// Discrete families draw integers.
    pub fn is_discrete(self) -> bool {
        matches!(self, Family::Bernoulli | Family::Categorical | Family::DiscreteUniform)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistributionSpec {
    pub family: Family,
    pub params: Vec<Expr>,
}

/// A distribution with its parameters evaluated and checked.
#[derive(Clone, Debug, PartialEq)]
pub enum ResolvedDist {
    Exponential { rate: f64 },
    Erlang { shape: u32, rate: f64 },
    Normal { mean: f64, sd: f64 },
    /// Normal with a per-component mean, used for vector draws.
    NormalVec { mean: Vec<f64>, sd: f64 },
    Bernoulli { p: f64 },
    Categorical { weights: Vec<f64>, total: f64 },
    Uniform { lo: f64, hi: f64 },
    DiscreteUniform { lo: i64, hi: i64 },
}

fn invalid(msg: String) -> EvalError {
    EvalError::InvalidParameter(msg)
}

impl DistributionSpec {
    pub fn new(family: Family, params: Vec<Expr>) -> Self {
        Self { family, params }
    }

    pub fn map_vars(&self, f: &impl Fn(&str) -> String) -> Self {
        Self {
            family: self.family,
            params: self.params.iter().map(|p| p.map_vars(f)).collect(),
        }
    }

    /// Evaluates the parameters in `env` and checks them against the
    /// family's domain.
    pub fn resolve(&self, env: &Env) -> Result<ResolvedDist, EvalError> {
        let (lo, hi) = self.family.arity();
        let n = self.params.len();
        if n < lo || n > hi {
            return Err(invalid(format!(
                "{} takes {lo}..{hi} parameters, got {n}",
                self.family.name()
            )));
        }
        let real = |i: usize| eval_real(&self.params[i], env);
        let positive = |what: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(x)
            } else {
                Err(invalid(format!("{} {what} must be positive, got {x}", self.family.name())))
            }
        };
        Ok(match self.family {
            Family::Exponential => ResolvedDist::Exponential {
                rate: positive("rate", real(0)?)?,
            },
            Family::Erlang => {
                let shape = integral(&self.params[0], &eval(&self.params[0], env)?)?;
                if !(1..=u32::MAX as i64).contains(&shape) {
                    return Err(invalid(format!("Erlang shape must be a positive integer, got {shape}")));
                }
                ResolvedDist::Erlang {
                    shape: shape as u32,
                    rate: positive("rate", real(1)?)?,
                }
            }
            Family::Normal => {
                let sd = positive("standard deviation", real(1)?)?;
                match eval(&self.params[0], env)? {
                    Value::Vector(mean) => ResolvedDist::NormalVec { mean, sd },
                    v => ResolvedDist::Normal {
                        mean: v
                            .as_f64()
                            .ok_or_else(|| invalid(format!("Normal mean must be numeric, got {v}")))?,
                        sd,
                    },
                }
            }
            Family::Bernoulli => {
                let p = real(0)?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(invalid(format!("Bernoulli p must lie in [0, 1], got {p}")));
                }
                ResolvedDist::Bernoulli { p }
            }
            Family::Categorical => {
                let weights = (0..n).map(real).collect::<Result<Vec<_>, _>>()?;
                if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                    return Err(invalid(format!("Categorical weights must be >= 0, got {weights:?}")));
                }
                let total: f64 = weights.iter().sum();
                if !(total > 0.0) {
                    return Err(invalid("Categorical weights must have a positive sum".into()));
                }
                ResolvedDist::Categorical { weights, total }
            }
            Family::Uniform => {
                let (lo, hi) = (real(0)?, real(1)?);
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(invalid(format!("Uniform needs lo < hi, got [{lo}, {hi}]")));
                }
                ResolvedDist::Uniform { lo, hi }
            }
            Family::DiscreteUniform => {
                let lo = integral(&self.params[0], &eval(&self.params[0], env)?)?;
                let hi = integral(&self.params[1], &eval(&self.params[1], env)?)?;
                if lo > hi {
                    return Err(invalid(format!("DiscreteUniform needs lo <= hi, got [{lo}, {hi}]")));
                }
                ResolvedDist::DiscreteUniform { lo, hi }
            }
        })
    }
}

impl ResolvedDist {
    /// One draw. Vector-valued only for [`ResolvedDist::NormalVec`].
    pub fn sample(&self, rng: &mut RandomStream) -> Value {
        match self {
            ResolvedDist::Exponential { rate } => Value::Real(rng.unit_exponential() / rate),
            ResolvedDist::Erlang { shape, rate } => {
                let s: f64 = (0..*shape).map(|_| rng.unit_exponential()).sum();
                Value::Real(s / rate)
            }
            ResolvedDist::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                Value::Real(mean + sd * z)
            }
            ResolvedDist::NormalVec { mean, sd } => Value::Vector(
                mean.iter()
                    .map(|m| {
                        let z: f64 = StandardNormal.sample(rng);
                        m + sd * z
                    })
                    .collect(),
            ),
            ResolvedDist::Bernoulli { p } => Value::Int((rng.uniform() < *p) as i64),
            ResolvedDist::Categorical { weights, total } => {
                let r = rng.uniform() * total;
                let mut acc = 0.0;
                let mut last_positive = 0;
                for (i, w) in weights.iter().enumerate() {
                    if *w > 0.0 {
                        last_positive = i;
                        acc += w;
                        if r < acc {
                            return Value::Int(i as i64);
                        }
                    }
                }
                // Rounding left r at the very top of the range.
                Value::Int(last_positive as i64)
            }
            ResolvedDist::Uniform { lo, hi } => Value::Real(lo + (hi - lo) * rng.uniform()),
            ResolvedDist::DiscreteUniform { lo, hi } => {
                let span = (hi - lo + 1) as f64;
                let k = ((rng.uniform() * span) as i64).min(hi - lo);
                Value::Int(lo + k)
            }
        }
    }

    /// Draws a `dim`-vector of independent components. Scalar normals are
    /// broadcast into an isotropic vector normal.
    pub fn sample_vector(&self, dim: usize, rng: &mut RandomStream) -> Result<Value, EvalError> {
        let comps = match self {
            ResolvedDist::NormalVec { mean, .. } if mean.len() != dim => {
                return Err(invalid(format!(
                    "Normal mean has dimension {}, expected {dim}",
                    mean.len()
                )))
            }
            ResolvedDist::NormalVec { .. } => return Ok(self.sample(rng)),
            d if d.is_discrete() => {
                return Err(invalid("vector draws need a continuous family".into()))
            }
            d => (0..dim)
                .map(|_| d.sample(rng).as_f64().expect("scalar continuous draw"))
                .collect(),
        };
        Ok(Value::Vector(comps))
    }

    pub fn is_discrete(&self) -> bool {
        matches!(
            self,
            ResolvedDist::Bernoulli { .. } | ResolvedDist::Categorical { .. } | ResolvedDist::DiscreteUniform { .. }
        )
    }

    /// Density of a continuous scalar family (zero outside the support).
    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            ResolvedDist::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
            ResolvedDist::Erlang { shape, rate } => {
                if x < 0.0 {
                    return 0.0;
                }
                let n = *shape as f64;
                let ln = n * rate.ln() + (n - 1.0) * x.ln() - rate * x - ln_factorial(*shape - 1);
                if x == 0.0 {
                    if *shape == 1 {
                        *rate
                    } else {
                        0.0
                    }
                } else {
                    ln.exp()
                }
            }
            ResolvedDist::Normal { mean, sd } => super::normal_pdf(x, *mean, *sd),
            ResolvedDist::Uniform { lo, hi } => {
                if x >= *lo && x <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    }

    /// Log probability (mass or density) of an outcome.
    pub fn log_density(&self, v: &Value) -> f64 {
        match (self, v) {
            (ResolvedDist::NormalVec { mean, sd }, Value::Vector(xs)) => xs
                .iter()
                .zip(mean)
                .map(|(x, m)| super::normal_pdf(*x, *m, *sd).ln())
                .sum(),
            (d, Value::Vector(xs)) => xs.iter().map(|x| d.pdf(*x).ln()).sum(),
            (d, v) if d.is_discrete() => d
                .outcomes()
                .into_iter()
                .find(|(o, _)| o.numeric_eq(v))
                .map(|(_, p)| p.ln())
                .unwrap_or(f64::NEG_INFINITY),
            (d, v) => v.as_f64().map(|x| d.pdf(x).ln()).unwrap_or(f64::NEG_INFINITY),
        }
    }

    /// Outcomes with positive probability of a discrete family.
    pub fn outcomes(&self) -> Vec<(Value, f64)> {
        match self {
            ResolvedDist::Bernoulli { p } => [(0, 1.0 - p), (1, *p)]
                .into_iter()
                .filter(|(_, q)| *q > 0.0)
                .map(|(k, q)| (Value::Int(k), q))
                .collect(),
            ResolvedDist::Categorical { weights, total } => weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(i, w)| (Value::Int(i as i64), w / total))
                .collect(),
            ResolvedDist::DiscreteUniform { lo, hi } => {
                let p = 1.0 / (hi - lo + 1) as f64;
                (*lo..=*hi).map(|k| (Value::Int(k), p)).collect()
            }
            _ => Vec::new(),
        }
    }
}

fn ln_factorial(k: u32) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Draws one value from `dist` with parameters evaluated in `env`.
pub fn sample(dist: &DistributionSpec, env: &Env, rng: &mut RandomStream) -> Result<Value, EvalError> {
    Ok(dist.resolve(env)?.sample(rng))
}
