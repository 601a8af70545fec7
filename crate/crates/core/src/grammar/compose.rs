use std::collections::BTreeSet;

use thiserror::Error;

use super::*;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ComposeError {
    #[error("declaration conflict: {0}")]
    DeclarationConflict(String),
}

/// Multiset union of two grammars. A rule of `g2` that equals a rule of `g1`
/// up to variable renaming adds its multiplicity to that rule; any other
/// rule is appended, renamed if its name is taken.
pub fn compose(g1: &Grammar, g2: &Grammar) -> Result<Grammar, ComposeError> {
    let conflict = |m: String| Err(ComposeError::DeclarationConflict(m));
    let mut out = g1.clone();
    if g1.dim != g2.dim {
        return conflict(format!("dimension {} vs {}", g1.dim, g2.dim));
    }
    for c in &g2.constants {
        match g1.constant(&c.name) {
            Some(v) if v.to_bits() != c.value.to_bits() => {
                return conflict(format!("constant `{}` is {v:?} vs {:?}", c.name, c.value))
            }
            Some(_) => {}
            None => out.constants.push(c.clone()),
        }
    }
    for s in &g2.species {
        match g1.species(&s.name) {
            Some(prev) if !prev.sorts().eq(s.sorts()) => {
                return conflict(format!("species `{}` declared with different slots", s.name))
            }
            Some(_) => {}
            None => out.species.push(s.clone()),
        }
    }
    let canon: Vec<Rule> = out.rules.iter().map(Rule::canonical).collect();
    let mut names: BTreeSet<String> = out.rules.iter().map(|r| r.name.clone()).collect();
    for r in &g2.rules {
        let c = r.canonical();
        if let Some(i) = canon.iter().position(|k| *k == c) {
            let m = &mut out.rules[i].multiplicity;
            *m = m.checked_add(r.multiplicity).ok_or_else(|| {
                ComposeError::DeclarationConflict(format!("multiplicity of `{}` overflows", r.name))
            })?;
            continue;
        }
        let mut rule = r.clone();
        let mut k = 2;
        while names.contains(&rule.name) {
            rule.name = format!("{}_{k}", r.name);
            k += 1;
        }
        names.insert(rule.name.clone());
        out.rules.push(rule);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BIRTH: &str = "grammar B { const b = 1.0; species A[]; rule birth: 0 -> A[] with b; }";
    const DEATH: &str = "grammar D { const d = 1.0; species A[]; rule death: A[] -> 0 with d; }";

    #[test]
    fn identity_and_doubling() {
        let g = parse_grammar(BIRTH).unwrap();
        let e = Grammar::empty("E");
        assert_eq!(compose(&g, &e).unwrap(), g);
        let gg = compose(&g, &g).unwrap();
        assert_eq!(gg.rules.len(), 1);
        assert_eq!(gg.rules[0].multiplicity, 2);
    }

    #[test]
    fn renamed_variables_merge() {
        let a = parse_grammar("grammar A { species C[int]; rule r: C[n] -> C[n + 1] with n; }").unwrap();
        let b = parse_grammar("grammar B { species C[int]; rule s: C[m] -> C[m + 1] with m; }").unwrap();
        let ab = compose(&a, &b).unwrap();
        assert_eq!(ab.rules.len(), 1);
        assert_eq!(ab.rules[0].multiplicity, 2);
    }

    #[test]
    fn distinct_rules_concatenate() {
        let bd = compose(&parse_grammar(BIRTH).unwrap(), &parse_grammar(DEATH).unwrap()).unwrap();
        assert_eq!(bd.rules.len(), 2);
        assert_eq!(bd.constants.len(), 2);
        assert!(validate(&bd).is_empty());
    }

    #[test]
    fn name_clash_is_renamed() {
        let a = parse_grammar("grammar A { species X[]; rule r: X[] -> 0 with 1; }").unwrap();
        let b = parse_grammar("grammar B { species X[]; rule r: 0 -> X[] with 1; }").unwrap();
        let ab = compose(&a, &b).unwrap();
        assert_eq!(ab.rules[1].name, "r_2");
    }

    #[test]
    fn conflicts() {
        let a = parse_grammar("grammar A { const k = 1.0; species X[int]; }").unwrap();
        let b = parse_grammar("grammar B { const k = 2.0; }").unwrap();
        let c = parse_grammar("grammar C { species X[real]; }").unwrap();
        assert!(compose(&a, &b).is_err());
        assert!(compose(&a, &c).is_err());
    }
}
