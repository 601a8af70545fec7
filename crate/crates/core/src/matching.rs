//! Pattern tests and ordered-injective match counting, shared by the term
//! store and the exact operator builder.

use crate::expr::Value;
use crate::model::{CompiledPattern, SlotTest};

/// Tests `params` against `pattern`, extending the partial assignment
/// `vals`. On failure `vals` may be partially written; callers pass a copy.
pub fn bind_pattern(pattern: &CompiledPattern, params: &[Value], vals: &mut [Option<Value>]) -> bool {
    for (test, v) in pattern.slots.iter().zip(params) {
        match test {
            SlotTest::Bind(i) => vals[*i] = Some(v.clone()),
            SlotTest::Check(i) => match &vals[*i] {
                Some(b) if b.numeric_eq(v) => {}
                _ => return false,
            },
            SlotTest::Literal(l) => {
                if !l.numeric_eq(v) {
                    return false;
                }
            }
        }
    }
    true
}

/// `n (n-1) ... (n-k+1)`: ordered ways to bind `k` patterns to distinct
/// members of a class of `n` interchangeable terms.
pub fn falling_factorial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    (0..k).map(|i| n - i).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn falling_factorial_values() {
        assert_eq!(falling_factorial(3, 2), 6);
        assert_eq!(falling_factorial(2, 1), 2);
        assert_eq!(falling_factorial(1, 2), 0);
        assert_eq!(falling_factorial(5, 0), 1);
    }

    #[test]
    fn repeated_variable_must_agree() {
        let p = CompiledPattern {
            species: 0,
            slots: vec![SlotTest::Bind(0), SlotTest::Check(0), SlotTest::Literal(Value::Int(7))],
        };
        let mut vals = vec![None];
        assert!(bind_pattern(&p, &[Value::Int(1), Value::Real(1.0), Value::Int(7)], &mut vals));
        let mut vals = vec![None];
        assert!(!bind_pattern(&p, &[Value::Int(1), Value::Int(2), Value::Int(7)], &mut vals));
        let mut vals = vec![None];
        assert!(!bind_pattern(&p, &[Value::Int(1), Value::Int(1), Value::Int(8)], &mut vals));
    }
}
