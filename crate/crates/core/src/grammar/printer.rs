use std::fmt::Write;

use super::*;

fn sort_text(s: Sort) -> String {
    match s {
        Sort::Int(None) => "int".into(),
        Sort::Int(Some((lo, hi))) => format!("int({lo}..{hi})"),
        Sort::Real => "real".into(),
        Sort::Vector => "vec".into(),
    }
}

fn slot_text(s: &SlotPattern) -> String {
    match s {
        SlotPattern::Var(v) | SlotPattern::Const(v) => v.clone(),
        SlotPattern::Int(i) => i.to_string(),
        SlotPattern::Real(r) => format!("{r:?}"),
    }
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(", ")
}

fn lhs_text(lhs: &[TermPattern]) -> String {
    if lhs.is_empty() {
        return "0".into();
    }
    join(lhs, |p| format!("{}[{}]", p.species, join(&p.slots, slot_text)))
}

fn rhs_text(rhs: &[TermTemplate]) -> String {
    if rhs.is_empty() {
        return "0".into();
    }
    join(rhs, |t| format!("{}[{}]", t.species, join(&t.slots, |e| e.to_string())))
}

pub fn rule_text(r: &Rule) -> String {
    let mut s = format!("rule {}", r.name);
    if r.multiplicity != 1 {
        write!(s, " * {}", r.multiplicity).unwrap();
    }
    write!(s, ": {} -> {}", lhs_text(&r.lhs), rhs_text(&r.rhs)).unwrap();
    match &r.body {
        RuleBody::Jump(j) => {
            write!(s, " with {}", j.propensity).unwrap();
            if !j.fresh.is_empty() {
                let f = join(&j.fresh, |f| {
                    format!("{}{} ~ {}", f.name, if f.vector { ": vec" } else { "" }, f.dist)
                });
                write!(s, " choosing {f}").unwrap();
            }
        }
        RuleBody::Continuous(c) => {
            let d = join(&c.derivatives, |d| format!("d{}/dt = {}", d.target, d.rhs));
            write!(s, " solving {{ {d} }}").unwrap();
        }
    }
    s.push(';');
    s
}

/// Canonical text; parsing it gives back a structurally equal grammar.
pub fn pretty_print(g: &Grammar) -> String {
    let mut s = format!("grammar {} {{\n  dim {};\n", g.name, g.dim);
    for c in &g.constants {
        writeln!(s, "  const {} = {:?};", c.name, c.value).unwrap();
    }
    for sp in &g.species {
        let slots = join(&sp.slots, |d| match &d.name {
            Some(n) => format!("{n}: {}", sort_text(d.sort)),
            None => sort_text(d.sort),
        });
        writeln!(s, "  species {}[{slots}];", sp.name).unwrap();
    }
    for r in &g.rules {
        writeln!(s, "  {}", rule_text(r)).unwrap();
    }
    s.push_str("}\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_rule_keyword() {
        let g = parse_grammar("grammar G { species A[]; rule r: A[] -> 0 with 1.0; }").unwrap();
        let text = pretty_print(&g);
        assert_eq!(text.matches("rule").count(), 1);
        assert_eq!(parse_grammar(&text).unwrap(), g);
    }

    #[test]
    fn multiplicity_survives() {
        let g = parse_grammar("grammar G { species A[int]; rule r * 3: A[n] -> A[n + 1] with 2 ^ n; }").unwrap();
        let back = parse_grammar(&pretty_print(&g)).unwrap();
        assert_eq!(back.rules[0].multiplicity, 3);
        assert_eq!(back, g);
    }
}
