//! Random count-based grammars and a from-scratch match enumerator.

use std::collections::BTreeSet;

use dyngram::engine::InitialTerm;
use dyngram::grammar::{SlotPattern, Sort};
use dyngram::store::TermRecord;
use dyngram::{Grammar, RandomStream, Value};
use rand::Rng;

/// Slot domains of the three species every random grammar declares.
pub const SPECIES: [(&str, &[(i64, i64)]); 3] = [("A", &[]), ("B", &[(0, 2)]), ("C", &[(0, 1), (0, 2)])];

fn pick<'a, T>(rng: &mut RandomStream, xs: &'a [T]) -> &'a T {
    &xs[rng.random_range(0..xs.len())]
}

/// Source text of a random count-based grammar: one to four jump rules over
/// `A[]`, `B[int(0..2)]` and `C[int(0..1), int(0..2)]`, with pattern
/// literals, repeated variables, discrete draws and multiplicities.
pub fn random_grammar(seed: u64, name: &str) -> String {
    let mut rng = RandomStream::new(seed);
    let mut src = format!("grammar {name} {{\n");
    let n_consts = 3;
    for c in 0..n_consts {
        let v: f64 = rng.random_range(0.1..3.0);
        src.push_str(&format!("  const k{c} = {v:?};\n"));
    }
    src.push_str("  species A[];\n  species B[int(0..2)];\n  species C[int(0..1), int(0..2)];\n");
    let n_rules = rng.random_range(1..=4);
    for r in 0..n_rules {
        let mut bound: Vec<(String, (i64, i64))> = Vec::new();
        let n_lhs = rng.random_range(0..=2);
        let mut lhs = Vec::new();
        for _ in 0..n_lhs {
            let (sp, doms) = *pick(&mut rng, &SPECIES);
            let slots: Vec<String> = doms
                .iter()
                .map(|&(lo, hi)| {
                    if rng.random_bool(0.6) {
                        let v = pick(&mut rng, &["x", "y", "z"]).to_string();
                        if !bound.iter().any(|(b, _)| *b == v) {
                            bound.push((v.clone(), (lo, hi)));
                        }
                        v
                    } else {
                        rng.random_range(lo..=hi).to_string()
                    }
                })
                .collect();
            lhs.push(format!("{sp}[{}]", slots.join(", ")));
        }
        let fresh = match rng.random_range(0..6) {
            0 => Some(("Bernoulli(0.3)", (0, 1))),
            1 => Some(("DiscreteUniform(0, 2)", (0, 2))),
            2 => Some(("Categorical(1.0, 2.0, 0.5)", (0, 2))),
            _ => None,
        };
        let mut sources = bound.clone();
        if let Some((_, dom)) = fresh {
            sources.push(("j".into(), dom));
        }
        let n_rhs = rng.random_range(if n_lhs == 0 { 1 } else { 0 }..=2);
        let mut rhs = Vec::new();
        for _ in 0..n_rhs {
            let (sp, doms) = *pick(&mut rng, &SPECIES);
            let slots: Vec<String> = doms
                .iter()
                .map(|&(lo, hi)| {
                    // Variables only go where their whole range fits.
                    let fits: Vec<&String> =
                        sources.iter().filter(|(_, (a, b))| *a >= lo && *b <= hi).map(|(v, _)| v).collect();
                    if !fits.is_empty() && rng.random_bool(0.7) {
                        pick(&mut rng, &fits).to_string()
                    } else {
                        rng.random_range(lo..=hi).to_string()
                    }
                })
                .collect();
            rhs.push(format!("{sp}[{}]", slots.join(", ")));
        }
        let k = rng.random_range(0..n_consts);
        let propensity = match bound.first() {
            Some((v, _)) if rng.random_bool(0.5) => format!("k{k} * ({v} + 1)"),
            _ => format!("k{k}"),
        };
        let mult = if rng.random_bool(0.2) { " * 2" } else { "" };
        let side = |xs: &[String]| if xs.is_empty() { "0".to_string() } else { xs.join(", ") };
        src.push_str(&format!("  rule r{r}{mult}: {} -> {} with {propensity}", side(&lhs), side(&rhs)));
        if let Some((d, _)) = fresh {
            src.push_str(&format!(" choosing j ~ {d}"));
        }
        src.push_str(";\n");
    }
    src.push_str("}\n");
    src
}

/// A random term of one of the three species.
pub fn random_term(rng: &mut RandomStream) -> (String, Vec<Value>) {
    let (sp, doms) = *pick(rng, &SPECIES);
    (sp.to_string(), doms.iter().map(|&(lo, hi)| Value::Int(rng.random_range(lo..=hi))).collect())
}

pub fn random_seed_state(rng: &mut RandomStream, max_terms: usize) -> Vec<InitialTerm> {
    (0..rng.random_range(0..=max_terms))
        .map(|_| {
            let (species, params) = random_term(rng);
            InitialTerm { species, params, count: 1 }
        })
        .collect()
}

/// Every ordered tuple of distinct live terms matching each rule's left-hand
/// side, found by trying all tuples against the grammar's own patterns.
pub fn brute_force_matches(g: &Grammar, terms: &[TermRecord]) -> Vec<BTreeSet<Vec<u64>>> {
    g.rules
        .iter()
        .map(|rule| {
            let mut out = BTreeSet::new();
            let k = rule.lhs.len();
            let n = terms.len();
            if k == 0 {
                out.insert(Vec::new());
                return out;
            }
            let mut idx = vec![0usize; k];
            'tuples: loop {
                let distinct = (0..k).all(|a| (a + 1..k).all(|b| idx[a] != idx[b]));
                if distinct && n > 0 {
                    let mut env: Vec<(String, Value)> = Vec::new();
                    let ok = rule.lhs.iter().zip(&idx).all(|(p, &i)| {
                        let t = &terms[i];
                        t.species == p.species
                            && p.slots.iter().zip(&t.params).all(|(s, v)| match s {
                                SlotPattern::Var(x) => match env.iter().find(|(y, _)| y == x) {
                                    Some((_, b)) => b.numeric_eq(v),
                                    None => {
                                        env.push((x.clone(), v.clone()));
                                        true
                                    }
                                },
                                SlotPattern::Int(i) => Value::Int(*i).numeric_eq(v),
                                SlotPattern::Real(r) => Value::Real(*r).numeric_eq(v),
                                SlotPattern::Const(c) => Value::Real(g.constant(c).unwrap()).numeric_eq(v),
                            })
                    });
                    if ok {
                        out.insert(idx.iter().map(|&i| terms[i].id).collect());
                    }
                }
                for a in (0..k).rev() {
                    idx[a] += 1;
                    if idx[a] < n {
                        continue 'tuples;
                    }
                    idx[a] = 0;
                }
                break;
            }
            out
        })
        .collect()
}

/// Whether every slot of `g` is a bounded integer.
pub fn is_count_based(g: &Grammar) -> bool {
    g.species.iter().all(|s| s.sorts().all(|t| matches!(t, Sort::Int(Some(_)))))
}
