//! Hazard functions and the special functions they need.

use super::{quad, EvalError};

/// Below this survivor probability a delay is considered to have fired.
pub const SURVIVOR_EPSILON: f64 = 1e-12;

/// Default absolute tolerance for the survivor integral.
pub const DEFAULT_QUAD_TOL: f64 = 1e-9;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_677_939_946_059_934_381_868;

pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    INV_SQRT_2PI / sd * (-0.5 * z * z).exp()
}

/// Upper incomplete gamma `Γ(s, x) = ∫_x^∞ τ^{s-1} e^{-τ} dτ`.
pub fn upper_incomplete_gamma(s: f64, x: f64) -> Result<f64, EvalError> {
    if !(s > 0.0) || !(x >= 0.0) || !s.is_finite() || !x.is_finite() {
        return Err(EvalError::InvalidParameter(format!(
            "incomplete gamma needs s > 0 and x >= 0, got s = {s}, x = {x}"
        )));
    }
    if x == 0.0 {
        return Ok(statrs::function::gamma::gamma(s));
    }
    let q = statrs::function::gamma::checked_gamma_ur(s, x)
        .map_err(|e| EvalError::InvalidParameter(e.to_string()))?;
    Ok(q * statrs::function::gamma::gamma(s))
}

/// Hazard of the Erlang(`n`, `lambda`) waiting time at age `t`:
/// `λ^n t^{n-1} e^{-λt} / Γ(n, λt)`.
///
/// For integer shape `Γ(n, x) = (n-1)! e^{-x} Σ_{k<n} x^k/k!`, so the ratio
/// reduces to `λ (x^{n-1}/(n-1)!) / Σ_{k<n} x^k/k!` with `x = λt`, which is
/// evaluated without forming the exponential factors. At `t = 0` this is the
/// limit: `λ` for `n = 1`, `0` otherwise.
pub fn erlang_hazard(t: f64, n: i64, lambda: f64) -> Result<f64, EvalError> {
    if n < 1 || !(lambda > 0.0) || !(t >= 0.0) || !lambda.is_finite() || !t.is_finite() {
        return Err(EvalError::InvalidParameter(format!(
            "erlang_hazard needs t >= 0, n >= 1, lambda > 0; got t = {t}, n = {n}, lambda = {lambda}"
        )));
    }
    if n == 1 {
        return Ok(lambda);
    }
    let x = lambda * t;
    if x == 0.0 {
        return Ok(0.0);
    }
    let m = (n - 1) as f64;
    if x < 1.0 {
        // Σ_{k=0}^{m} x^k/k!, terms shrinking.
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..n {
            term *= x / k as f64;
            sum += term;
        }
        Ok(lambda * term / sum)
    } else {
        // Divide through by x^m/m!: Σ_{j=0}^{m} m!/(m-j)! x^{-j}.
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..n {
            term *= (m - (j - 1) as f64) / x;
            sum += term;
        }
        Ok(lambda / sum)
    }
}

/// Time-varying rate equivalent to a waiting-time density:
/// `ρ(t) = P(t) / (1 - ∫_0^t P)`.
///
/// Fails with [`EvalError::SurvivorUnderflow`] when the survivor falls below
/// [`SURVIVOR_EPSILON`].
pub fn hazard_from_density(
    density: impl Fn(f64) -> f64,
    t: f64,
    quad_tol: f64,
) -> Result<f64, EvalError> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(EvalError::InvalidParameter(format!("hazard age must be >= 0, got {t}")));
    }
    if !(quad_tol > 0.0) {
        return Err(EvalError::InvalidParameter(format!(
            "quadrature tolerance must be positive, got {quad_tol}"
        )));
    }
    let (mass, _) = quad::integrate(&density, 0.0, t, quad_tol);
    let survivor = 1.0 - mass;
    if survivor < SURVIVOR_EPSILON {
        return Err(EvalError::SurvivorUnderflow { t, survivor });
    }
    let p = density(t);
    if !(p >= 0.0) {
        return Err(EvalError::InvalidParameter(format!("density negative at t = {t}")));
    }
    Ok(p / survivor)
}
