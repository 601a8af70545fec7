//! End-to-end acceptance checks, one line per criterion. Runs without the
//! libtest harness so the report is always printed.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::random::*;
use common::*;
use dyngram::engine::{
    initial_store, restore_times, simulate_ct, simulate_dt, simulate_ensemble, EngineError, SimOptions,
};
use dyngram::model::RuleKind;
use dyngram::operator::{build_generator, check_compositionality, enumerate_states, solve, Caps};
use dyngram::store::TermId;
use dyngram::{compose, parse_grammar, pretty_print, validate, Model, RandomStream, TermStore};
use rand::Rng;

const REPLICAS: u64 = 10_000;
/// Two empirical event-count histograms at 1e4 each differ by about 0.02 on
/// noise alone, so the bridge compares larger ensembles.
const BRIDGE_REPLICAS: u64 = 100_000;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dyngram")).args(args).output().unwrap()
}

fn corpus_path(name: &str) -> String {
    corpus_dir().join(name).to_string_lossy().into_owned()
}

fn master_equation_agreement() -> Check {
    let start = Instant::now();
    let m = corpus_model("birth-death");
    let (dist, _, space) = solve(&m, &[], &Caps::uniform(12), 5.0, 1e-12).unwrap();
    let counts: Vec<usize> = simulate_ensemble(&m, &[], &SimOptions::new(5.0, 101), REPLICAS)
        .into_iter()
        .map(|r| r.unwrap().footer.final_state.len())
        .collect();
    let mut exact = vec![0.0; space.len()];
    for (s, p) in space.states().iter().zip(&dist.p) {
        exact[s[0] as usize] += p;
    }
    let d = tv(&histogram(&counts), &exact);
    let secs = start.elapsed().as_secs_f64();
    ensure(
        d <= 0.02 && dist.boundary_mass < 1e-4 && secs <= 60.0,
        format!("tv {d:.4} (<= 0.02), boundary mass {:.1e} (< 1e-4), {secs:.1} s (<= 60)", dist.boundary_mass),
    )
}

fn compositionality() -> Check {
    let mut pairs: Vec<(dyngram::Grammar, dyngram::Grammar)> = (0..5u64)
        .map(|k| {
            let g1 = parse_grammar(&random_grammar(1000 + 2 * k, "G1")).unwrap();
            let g2 = parse_grammar(&random_grammar(1001 + 2 * k, "G2")).unwrap();
            // Random constants share names; keep the two sets apart.
            let g2 = parse_grammar(&pretty_print(&g2).replace(" k", " bk").replace("(k", "(bk")).unwrap();
            (g1, g2)
        })
        .collect();
    pairs.push((
        parse_grammar("grammar Birth { const b = 1.0; species A[]; rule birth: 0 -> A[] with b; }").unwrap(),
        parse_grammar("grammar Death { const d = 1.0; species A[]; rule death: A[] -> 0 with d; }").unwrap(),
    ));
    let mut worst: f64 = 0.0;
    let mut doubling_ok = true;
    let mut rng = RandomStream::new(77);
    for (g1, g2) in &pairs {
        let seed = random_seed_state(&mut rng, 2);
        let seed = if g1.species.len() == 1 { Vec::new() } else { seed };
        let caps = Caps::uniform(if g1.species.len() == 1 { 12 } else { 2 });
        worst = worst.max(check_compositionality(g1, g2, &seed, &caps).unwrap().max_residual);
        for g in [g1, g2] {
            let single = Model::compile(g).unwrap();
            let double = Model::compile(&compose(g, g).unwrap()).unwrap();
            let space = enumerate_states(&double, &seed, &caps, 200_000).unwrap();
            let w1 = build_generator(&single, &space).unwrap();
            let w2 = build_generator(&double, &space).unwrap();
            doubling_ok &= w1.nnz() == w2.nnz() && w1.triplets().all(|(i, j, v)| w2.get(i, j) == 2.0 * v);
        }
    }
    ensure(
        worst == 0.0 && doubling_ok,
        format!("{} pairs, max residual {worst:e} (== 0), self-union doubles exactly: {doubling_ok}", pairs.len()),
    )
}

fn conservation() -> Check {
    let mut worst: f64 = 0.0;
    let mut states = 0;
    for seed in 0..100u64 {
        let g = parse_grammar(&random_grammar(5000 + seed, "G")).unwrap();
        let m = Model::compile(&g).unwrap();
        let mut rng = RandomStream::new(seed);
        let init = random_seed_state(&mut rng, 3);
        let space = enumerate_states(&m, &init, &Caps::uniform(3), 200_000).unwrap();
        states += space.len();
        worst = worst.max(build_generator(&m, &space).unwrap().max_column_sum());
    }
    ensure(worst <= 1e-12, format!("100 grammars, {states} states, max |column sum| {worst:.1e} (<= 1e-12)"))
}

fn erlang_cdf(n: u32, lambda: f64, t: f64) -> f64 {
    let x = lambda * t;
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 0..n {
        if k > 0 {
            term *= x / k as f64;
        }
        sum += term;
    }
    1.0 - (-x).exp() * sum
}

fn first_event_times(src: &str, t_max: f64, seed: u64) -> Vec<f64> {
    let m = model(src);
    simulate_ensemble(&m, &init("A", 1), &SimOptions::new(t_max, seed), REPLICAS)
        .into_iter()
        .map(|r| r.unwrap().events.first().and_then(|e| e.t).unwrap_or(f64::INFINITY))
        .collect()
}

fn delay_equivalence() -> Check {
    let base = corpus_source("erlang-delay");
    let mut parts = Vec::new();
    let mut ok = true;
    for (n, lambda) in [(2u32, 1.0f64), (3, 2.0)] {
        let src = base
            .replace("const n = 2;", &format!("const n = {n};"))
            .replace("const lambda = 1.0;", &format!("const lambda = {lambda:?};"));
        let d = ks(first_event_times(&src, 1e3, 40 + n as u64), |t| erlang_cdf(n, lambda, t));
        ok &= d <= 0.02;
        parts.push(format!("KS(n={n}, λ={lambda}) {d:.4}"));
    }
    let src = base.replace("const n = 2;", "const n = 1;");
    let times = first_event_times(&src, 1e3, 41);
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let band = 3.0 / (REPLICAS as f64).sqrt();
    ok &= (mean - 1.0).abs() <= band;
    parts.push(format!("n=1 mean {mean:.4} (1 ± {band:.3})"));
    ensure(ok, parts.join(", "))
}

fn hybrid_correctness() -> Check {
    let m = corpus_model("growth-division");
    let times: Vec<f64> = simulate_ensemble(&m, &corpus_init("growth-division"), &SimOptions::new(3.0, 55), REPLICAS)
        .into_iter()
        .map(|r| r.unwrap().events.first().and_then(|e| e.t).unwrap_or(f64::INFINITY))
        .collect();
    let d = ks(times, |t| 1.0 - (-(t + t * t / 2.0)).exp());
    ensure(d <= 0.02, format!("sup distance {d:.4} (<= 0.02)"))
}

fn discrete_continuous_bridge() -> Check {
    let m = corpus_model("birth-death");
    let horizon = 2.0;
    let ct: Vec<usize> = simulate_ensemble(&m, &[], &SimOptions::new(horizon, 61), BRIDGE_REPLICAS)
        .into_iter()
        .map(|r| r.unwrap().events_until(horizon))
        .collect();
    let mut short = 0;
    let restored: Vec<usize> = (0..BRIDGE_REPLICAS)
        .map(|r| {
            let mut steps = 40;
            loop {
                let dt = simulate_dt(initial_store(&m, &[]).unwrap(), steps, 62, r).unwrap();
                let ct = restore_times(&m, &dt, 63).unwrap();
                if ct.footer.t_end.unwrap() > horizon {
                    break ct.events_until(horizon);
                }
                short += 1;
                steps *= 2;
            }
        })
        .collect();
    let d = tv(&histogram(&ct), &histogram(&restored));
    ensure(d <= 0.02, format!("tv {d:.4} (<= 0.02) on event counts at t = {horizon}, {short} reruns with more steps"))
}

fn path_density() -> Check {
    let run = |grammar: &str, traj: &str| -> f64 {
        let o = cli(&["loglik", "--grammar", &corpus_path(grammar), "--trajectory", &corpus_path(traj)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8_lossy(&o.stdout).trim().parse().unwrap()
    };
    let one = run("loglik/one-shot.dg", "loglik/one-event.jsonl");
    let zero = run("loglik/one-shot.dg", "loglik/zero-events.jsonl");
    let flow = run("growth-division.dg", "loglik/growth-zero-events.jsonl");
    let target = 0.5f64.ln() - 1.0;
    ensure(
        (one - target).abs() <= 1e-6 && (zero + 1.5).abs() <= 1e-9 && (flow + 0.625).abs() <= 1e-6,
        format!("one event {one:.7} (-1.693147), no events {zero} (-aT = -1.5), no events with flow {flow:.7} (-0.625)"),
    )
}

fn matching_oracle() -> Check {
    let mut violations = 0;
    let mut compared = 0usize;
    for g_seed in 0..100u64 {
        let g = parse_grammar(&random_grammar(9000 + g_seed, "G")).unwrap();
        let model = Arc::new(Model::compile(&g).unwrap());
        let mut store = TermStore::new(model.clone());
        let mut rng = RandomStream::new(g_seed);
        for step in 0..500 {
            store.set_time(step as f64);
            let live: Vec<TermId> = store.dump().iter().map(|r| TermId(r.id)).collect();
            match rng.random_range(0..10) {
                0..=3 if live.len() < 12 => {
                    let (sp, params) = random_term(&mut rng);
                    store.insert(&sp, params).unwrap();
                }
                0..=5 if !live.is_empty() => {
                    store.remove(live[rng.random_range(0..live.len())]).unwrap();
                }
                _ => {
                    let enabled: Vec<usize> = (0..model.rules.len()).filter(|r| store.match_count(*r) > 0).collect();
                    if !enabled.is_empty() {
                        let r = enabled[rng.random_range(0..enabled.len())];
                        let ms = store.matches(r);
                        let ids = ms[rng.random_range(0..ms.len())].ids.clone();
                        let RuleKind::Jump { fresh, .. } = &model.rules[r].kind else { unreachable!() };
                        let mut env = store.match_env(r, &ids).unwrap();
                        let mut draws = Vec::new();
                        for f in fresh {
                            let v = f.dist.resolve(&env).unwrap().sample(&mut rng);
                            env.bind(f.name.clone(), v.clone());
                            draws.push((f.name.clone(), v));
                        }
                        let _ = store.apply_rewrite(r, &ids, &draws);
                        let over: Vec<TermId> = store.dump().iter().skip(16).map(|r| TermId(r.id)).collect();
                        for id in over {
                            store.remove(id).unwrap();
                        }
                    }
                }
            }
            let expect = brute_force_matches(&g, &store.dump());
            for (r, set) in expect.iter().enumerate() {
                let have: std::collections::BTreeSet<Vec<u64>> =
                    store.iter_matches(r).map(|(ids, _)| ids.iter().map(|i| i.0).collect()).collect();
                compared += set.len();
                if *set != have {
                    violations += 1;
                }
            }
        }
    }
    ensure(violations == 0, format!("100 grammars x 500 steps, {compared} matches compared, {violations} violations"))
}

fn robustness() -> Check {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut round_trips = 0;
    for entry in std::fs::read_dir(corpus_dir()).unwrap().chain(std::fs::read_dir(corpus_dir().join("loglik")).unwrap()) {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "dg") {
            let g = parse_grammar(&std::fs::read_to_string(&path).unwrap()).unwrap();
            ok &= parse_grammar(&pretty_print(&g)).unwrap() == g;
            round_trips += 1;
        }
    }
    notes.push(format!("{round_trips} corpus files round-trip"));
    let niche = validate(&parse_grammar(&corpus_source("epithelium")).unwrap()).is_empty();
    ok &= niche;
    notes.push(format!("niche model validates: {niche}"));

    let zeno = corpus_model("zeno");
    let start = Instant::now();
    let res = simulate_ct(initial_store(&zeno, &corpus_init("zeno")).unwrap(), &SimOptions::new(10.0, 3), 0);
    let took = start.elapsed();
    let capped = matches!(res, Err(EngineError::EventCapExceeded { .. }));
    ok &= capped && took < Duration::from_secs(10);
    notes.push(format!("zeno stops with event cap: {capped} in {:.2} s", took.as_secs_f64()));

    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        for (model, tmax) in [("birth-death", "5"), ("epithelium", "5")] {
            let out = d.path().join(model);
            let o = cli(&[
                "simulate",
                "--grammar",
                &corpus_path(&format!("{model}.dg")),
                "--init",
                &corpus_path(&format!("{model}.init.json")),
                "--tmax",
                tmax,
                "--seed",
                "42",
                "--replicas",
                "3",
                "--snapshot-dt",
                "0.5",
                "--out",
                out.to_str().unwrap(),
            ]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
    }
    let mut identical = true;
    let mut files = 0;
    for model in ["birth-death", "epithelium"] {
        for entry in std::fs::read_dir(dirs[0].path().join(model)).unwrap() {
            let p = entry.unwrap().path();
            let q = dirs[1].path().join(model).join(p.file_name().unwrap());
            identical &= std::fs::read(&p).unwrap() == std::fs::read(&q).unwrap();
            files += 1;
        }
    }
    ok &= identical && files == 8;
    notes.push(format!("{files} output files byte-identical across runs: {identical}"));
    ensure(ok, notes.join(", "))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("master-equation agreement", master_equation_agreement),
        ("compositionality", compositionality),
        ("conservation", conservation),
        ("delay equivalence", delay_equivalence),
        ("hybrid correctness", hybrid_correctness),
        ("discrete/continuous bridge", discrete_continuous_bridge),
        ("path density", path_density),
        ("matching oracle", matching_oracle),
        ("robustness", robustness),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {} {name}: PASS [{secs:.1} s] {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL [{secs:.1} s] {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
