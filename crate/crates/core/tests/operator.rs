mod common;

use common::*;
use dyngram::engine::{simulate_ensemble, InitialTerm, SimOptions};
use dyngram::operator::{
    build_generator, check_compositionality, enumerate_states, solve, transient_distribution, Caps,
    GeneratorMatrix, OperatorError, DEFAULT_MAX_STATES,
};
use dyngram::{compose, parse_grammar, Model, Value};

const BIRTH: &str = "grammar Birth { const b = 1.0; species A[]; rule birth: 0 -> A[] with b; }";
const DEATH: &str = "grammar Death { const d = 1.0; species A[]; rule death: A[] -> 0 with d; }";

fn generator(src: &str, seed: &[InitialTerm], caps: &Caps) -> GeneratorMatrix {
    let m = model(src);
    let space = enumerate_states(&m, seed, caps, DEFAULT_MAX_STATES).unwrap();
    build_generator(&m, &space).unwrap()
}

fn delta(n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n];
    p[0] = 1.0;
    p
}

#[test]
fn birth_death_cap_two() {
    let m = corpus_model("birth-death");
    let space = enumerate_states(&m, &[], &Caps::uniform(2), DEFAULT_MAX_STATES).unwrap();
    assert_eq!(space.states(), &[vec![0], vec![1], vec![2]]);
    let w = build_generator(&m, &space).unwrap();
    assert_eq!(w.to_dense(), vec![vec![-1.0, 1.0, 0.0], vec![1.0, -2.0, 2.0], vec![0.0, 1.0, -2.0]]);
    assert!(w.is_boundary(2));
    assert!(!w.is_boundary(1));
}

#[test]
fn no_rules_keeps_the_seed() {
    let m = model("grammar Empty { species A[]; }");
    let space = enumerate_states(&m, &init("A", 2), &Caps::uniform(5), DEFAULT_MAX_STATES).unwrap();
    assert_eq!(space.states(), &[vec![2]]);
    let w = build_generator(&m, &space).unwrap();
    assert_eq!(w.nnz(), 0);
    assert_eq!(w.to_dense(), vec![vec![0.0]]);
}

#[test]
fn rejects_grammars_that_are_not_count_based() {
    let caps = Caps::uniform(3);
    for src in [
        "grammar R { species A[x: real]; rule r: A[x] -> 0 with x; }",
        "grammar F { species A[x: real]; rule g: A[x] -> A[x + dx] solving { dx/dt = 1 }; }",
        "grammar Age { species A[]; rule r: A[] -> 0 with age; }",
        "grammar U { species A[int]; rule r: A[n] -> 0 with 1; }",
        "grammar E { species A[int(0..2)]; rule r: A[n] -> A[k] with 1 choosing k ~ Exponential(1.0); }",
    ] {
        let m = model(src);
        let e = enumerate_states(&m, &[], &caps, DEFAULT_MAX_STATES).unwrap_err();
        assert!(matches!(e, OperatorError::NotCountBased(_)), "{src}: {e:?}");
    }
}

#[test]
fn missing_cap_and_large_space_are_errors() {
    let m = corpus_model("abswitch");
    let e = enumerate_states(&m, &init("A", 1), &Caps::default().with("A", 1), DEFAULT_MAX_STATES).unwrap_err();
    assert!(matches!(e, OperatorError::MissingCap(ref s) if s == "B"), "{e:?}");
    let m = corpus_model("birth-death");
    let e = enumerate_states(&m, &[], &Caps::uniform(100), 50).unwrap_err();
    assert!(matches!(e, OperatorError::CapTooLarge { limit: 50 }), "{e:?}");
}

#[test]
fn domain_classes_and_discrete_draws() {
    // A[k] moves to a uniformly chosen level at rate k + 1; self moves vanish.
    let src = "grammar Hop { species A[int(0..2)]; rule hop: A[k] -> A[j] with k + 1 choosing j ~ DiscreteUniform(0, 2); }";
    let m = model(src);
    let seed = [InitialTerm { species: "A".into(), params: vec![Value::Int(0)], count: 1 }];
    let space = enumerate_states(&m, &seed, &Caps::uniform(1), DEFAULT_MAX_STATES).unwrap();
    assert_eq!(space.classes.len(), 3);
    assert_eq!(space.states(), &[vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
    let w = build_generator(&m, &space).unwrap();
    let third = 1.0 / 3.0;
    let expect = [
        [-2.0 * third, 2.0 * third, 3.0 * third],
        [third, -4.0 * third, 3.0 * third],
        [third, 2.0 * third, -6.0 * third],
    ];
    for (i, row) in expect.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert!((w.get(i, j) - v).abs() < 1e-15, "({i},{j}) {} vs {v}", w.get(i, j));
        }
    }
}

#[test]
fn pair_rule_counts_ordered_matches() {
    // Two of three A's annihilate at rate 1 per ordered pair: 3 * 2 from n = 3.
    let w = generator(
        "grammar Pair { species A[]; rule r: A[], A[] -> 0 with 1; }",
        &init("A", 3),
        &Caps::uniform(3),
    );
    assert_eq!(w.to_dense(), vec![vec![-6.0, 0.0], vec![6.0, 0.0]]);
}

#[test]
fn two_state_closed_form() {
    let m = corpus_model("abswitch");
    let (dist, _, space) = solve(&m, &corpus_init("abswitch"), &Caps::uniform(1), 1.0, 1e-12).unwrap();
    let a = space.index_of(&[1, 0]).unwrap();
    let exact = (1.0 + (-2.0f64).exp()) / 2.0;
    assert!((dist.p[a] - exact).abs() < 1e-10, "{} vs {exact}", dist.p[a]);
    assert!((dist.p[a] - 0.5676676).abs() < 5e-8);
    assert_eq!(dist.boundary_mass, 0.0);
}

#[test]
fn birth_death_reaches_truncated_poisson() {
    let cap = 12;
    let w = generator(&corpus_source("birth-death"), &[], &Caps::uniform(cap));
    let p0 = delta(w.dim());
    let p10 = transient_distribution(&w, &p0, 10.0, 1e-12);
    let p20 = transient_distribution(&w, &p0, 20.0, 1e-12);
    assert!(tv(&p10, &p20) <= 1e-4, "{}", tv(&p10, &p20));
    // Detailed balance: pi(n + 1) / pi(n) = 1 / (n + 1).
    let mut pi = vec![1.0];
    for n in 0..cap as usize {
        pi.push(pi[n] / (n + 1) as f64);
    }
    let z: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= z);
    assert!(tv(&p20, &pi) <= 1e-8, "{}", tv(&p20, &pi));
    assert!(w.boundary_mass(&p20) < 1e-4);
}

#[test]
fn zero_time_is_identity() {
    let w = generator(&corpus_source("birth-death"), &[], &Caps::uniform(4));
    let p0 = vec![0.1, 0.2, 0.3, 0.4, 0.0];
    assert_eq!(transient_distribution(&w, &p0, 0.0, 1e-9), p0);
}

#[test]
fn semigroup_property() {
    let tol = 1e-10;
    let m = corpus_model("predator-prey");
    let space = enumerate_states(&m, &corpus_init("predator-prey"), &Caps::uniform(8), DEFAULT_MAX_STATES).unwrap();
    let w = build_generator(&m, &space).unwrap();
    let p0 = delta(w.dim());
    let direct = transient_distribution(&w, &p0, 1.5, tol);
    let split = transient_distribution(&w, &transient_distribution(&w, &p0, 0.5, tol), 1.0, tol);
    assert!(tv(&direct, &split) <= 2.0 * tol, "{}", tv(&direct, &split));
    assert!((direct.iter().sum::<f64>() - 1.0).abs() <= tol);
    assert!(direct.iter().all(|x| *x >= 0.0));
}

#[test]
fn columns_sum_to_zero() {
    for (name, cap) in [("birth-death", 12), ("abswitch", 1), ("predator-prey", 8)] {
        let m = corpus_model(name);
        let space = enumerate_states(&m, &corpus_init(name), &Caps::uniform(cap), DEFAULT_MAX_STATES).unwrap();
        let w = build_generator(&m, &space).unwrap();
        assert!(w.max_column_sum() <= 1e-12, "{name}: {}", w.max_column_sum());
        assert!(w.triplets().all(|(i, j, v)| i == j || v >= 0.0), "{name}");
    }
}

#[test]
fn birth_plus_death_is_birth_death() {
    let g1 = parse_grammar(BIRTH).unwrap();
    let g2 = parse_grammar(DEATH).unwrap();
    let report = check_compositionality(&g1, &g2, &[], &Caps::uniform(12)).unwrap();
    assert_eq!(report.max_residual, 0.0);
    assert_eq!(report.max_float_residual, 0.0);
    assert_eq!(report.states, 13);
    let union = Model::compile(&compose(&g1, &g2).unwrap()).unwrap();
    let space = enumerate_states(&union, &[], &Caps::uniform(12), DEFAULT_MAX_STATES).unwrap();
    let w = build_generator(&union, &space).unwrap();
    assert_eq!(w, generator(&corpus_source("birth-death"), &[], &Caps::uniform(12)));
}

#[test]
fn empty_partner_changes_nothing() {
    let g1 = parse_grammar(&corpus_source("predator-prey")).unwrap();
    let g2 = parse_grammar("grammar Nothing { species prey[]; }").unwrap();
    let report = check_compositionality(&g1, &g2, &corpus_init("predator-prey"), &Caps::uniform(6)).unwrap();
    assert_eq!(report.max_residual, 0.0);
}

#[test]
fn self_union_doubles() {
    let g = parse_grammar(BIRTH).unwrap();
    let gg = Model::compile(&compose(&g, &g).unwrap()).unwrap();
    let single = Model::compile(&g).unwrap();
    let caps = Caps::uniform(10);
    let space = enumerate_states(&gg, &[], &caps, DEFAULT_MAX_STATES).unwrap();
    let w2 = build_generator(&gg, &space).unwrap();
    let w1 = build_generator(&single, &space).unwrap();
    for (i, j, v) in w1.triplets() {
        assert_eq!(w2.get(i, j), 2.0 * v);
    }
    assert_eq!(w1.nnz(), w2.nnz());
    let report = check_compositionality(&g, &g, &[], &caps).unwrap();
    assert_eq!(report.max_residual, 0.0);
}

#[test]
fn exported_triplets_and_legend() {
    let m = corpus_model("birth-death");
    let space = enumerate_states(&m, &[], &Caps::uniform(2), DEFAULT_MAX_STATES).unwrap();
    let w = build_generator(&m, &space).unwrap();
    let mut text = Vec::new();
    w.write_triplets(&mut text).unwrap();
    let text = String::from_utf8(text).unwrap();
    assert_eq!(text.lines().count(), w.nnz());
    assert!(text.lines().any(|l| l == "1 2 2.0"));
    let mut legend = Vec::new();
    space.write_legend(&mut legend).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&legend).unwrap();
    assert_eq!(v["states"], serde_json::json!([[0], [1], [2]]));
    assert_eq!(v["classes"][0]["species"], "A");
}

/// Largest per-species TV distance between the simulated and exact count
/// marginals at `t`, and the exact boundary mass.
fn marginal_distance(name: &str, caps: &Caps, t: f64, seed: u64) -> (f64, f64) {
    let m = corpus_model(name);
    let init = corpus_init(name);
    let (dist, _, space) = solve(&m, &init, caps, t, 1e-12).unwrap();
    let n = 10_000;
    let finals: Vec<Vec<u32>> = simulate_ensemble(&m, &init, &SimOptions::new(t, seed), n)
        .into_iter()
        .map(|r| {
            let fs = r.unwrap().footer.final_state;
            m.species.iter().map(|sp| fs.iter().filter(|t| t.species == sp.name).count() as u32).collect()
        })
        .collect();
    let worst = (0..m.species.len())
        .map(|k| {
            let sim = histogram(&finals.iter().map(|c| c[k] as usize).collect::<Vec<_>>());
            let mut exact = vec![0.0; sim.len()];
            for (s, p) in space.states().iter().zip(&dist.p) {
                let c = space.species_totals(s, m.species.len())[k] as usize;
                if c >= exact.len() {
                    exact.resize(c + 1, 0.0);
                }
                exact[c] += p;
            }
            tv(&sim, &exact)
        })
        .fold(0.0, f64::max);
    (worst, dist.boundary_mass)
}

#[test]
fn abswitch_agrees_with_simulation() {
    let (d, boundary) = marginal_distance("abswitch", &Caps::uniform(1), 0.7, 21);
    assert!(d <= 0.02, "{d}");
    assert_eq!(boundary, 0.0);
}

#[test]
fn predator_prey_agrees_with_simulation() {
    let (d, boundary) = marginal_distance("predator-prey", &Caps::uniform(8), 1.0, 22);
    assert!(d <= 0.02, "{d}");
    assert!(boundary < 1e-4, "{boundary}");
}
