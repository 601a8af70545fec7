use std::collections::HashMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};

use dyngram::engine::read_jsonl;
use dyngram::operator::{count_state_of, solve_within, Caps, CountState, ExactDistribution, OperatorError};

use crate::{load_init, load_model, read_text, CompareArgs, ExactArgs, Failure, Outcome};

/// Boundary mass above which `exact` warns that the caps are too tight.
const BOUNDARY_WARNING: f64 = 1e-4;

pub fn parse_caps(text: &str) -> Result<Caps, Failure> {
    let bad = || Failure::usage(format!("--caps {text}: expected `N`, `A=N,B=M` or a mix"));
    let mut caps = Caps::default();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('=') {
            Some((s, n)) => {
                caps.per_species.insert(s.trim().to_string(), n.trim().parse().map_err(|_| bad())?);
            }
            None => caps.default = Some(part.parse().map_err(|_| bad())?),
        }
    }
    if caps.default.is_none() && caps.per_species.is_empty() {
        return Err(bad());
    }
    Ok(caps)
}

fn operator_failure(e: OperatorError) -> Failure {
    match e {
        OperatorError::Propensity { .. } => Failure::runtime(e.to_string()),
        OperatorError::MissingCap(_) => Failure::usage(e.to_string()),
        _ => Failure::semantic(e.to_string()),
    }
}

pub fn run_exact(a: &ExactArgs) -> Outcome {
    let model = load_model(&a.grammar)?;
    let init = load_init(a.init.as_deref())?;
    let caps = parse_caps(&a.caps)?;
    if !(a.tmax >= 0.0 && a.tmax.is_finite()) || !(a.tol > 0.0) {
        return Err(Failure::usage("--tmax must be finite and nonnegative, --tol positive"));
    }
    let (dist, w, space) = solve_within(&model, &init, &caps, a.tmax, a.tol, a.max_states).map_err(operator_failure)?;
    if dist.boundary_mass > BOUNDARY_WARNING {
        eprintln!(
            "warning: boundary probability {:.3e} sits on states whose transitions leave the caps; raise --caps",
            dist.boundary_mass
        );
    }
    let io = |e: std::io::Error| Failure::runtime(e.to_string());
    if let Some(prefix) = &a.matrix {
        let base = prefix.to_string_lossy();
        w.write_triplets(BufWriter::new(fs::File::create(format!("{base}.triplets")).map_err(io)?)).map_err(io)?;
        let legend = BufWriter::new(fs::File::create(format!("{base}.legend.json")).map_err(io)?);
        space.write_legend(legend).map_err(|e| Failure::runtime(e.to_string()))?;
    }
    let json = serde_json::to_string(&dist).expect("serializable");
    match &a.out {
        Some(path) => fs::write(path, json + "\n").map_err(io)?,
        None => println!("{json}"),
    }
    eprintln!("{} states, boundary mass {:.3e}", dist.states.len(), dist.boundary_mass);
    Ok(())
}

fn read_distribution(path: &str) -> Result<ExactDistribution, Failure> {
    serde_json::from_str(&read_text(path.as_ref())?).map_err(|e| Failure::usage(format!("{path}: {e}")))
}

/// Expands glob patterns; plain paths pass through.
fn expand(inputs: &[String]) -> Result<Vec<String>, Failure> {
    let mut out = Vec::new();
    for i in inputs {
        if i.contains(['*', '?', '[']) {
            let paths = glob::glob(i).map_err(|e| Failure::usage(format!("{i}: {e}")))?;
            let before = out.len();
            for p in paths {
                out.push(p.map_err(|e| Failure::usage(e.to_string()))?.to_string_lossy().into_owned());
            }
            if out.len() == before {
                return Err(Failure::usage(format!("{i}: no files match")));
            }
        } else {
            out.push(i.clone());
        }
    }
    out.sort();
    Ok(out)
}

/// Projects a distribution over count states onto species totals.
fn marginals(dist: &ExactDistribution, weights: &HashMap<Option<CountState>, f64>) -> Vec<HashMap<Option<u32>, f64>> {
    let species: Vec<&str> = {
        let mut s: Vec<&str> = dist.classes.iter().map(|c| c.species.as_str()).collect();
        s.dedup();
        s
    };
    species
        .iter()
        .map(|sp| {
            let mut m: HashMap<Option<u32>, f64> = HashMap::new();
            for (state, p) in weights {
                let total = state.as_ref().map(|s| {
                    s.iter().zip(&dist.classes).filter(|(_, c)| c.species == *sp).map(|(n, _)| n).sum::<u32>()
                });
                *m.entry(total).or_default() += p;
            }
            m
        })
        .collect()
}

/// TV distance between two finite measures keyed alike; a `None` key stands
/// for mass outside the truncated space and never matches anything.
fn tv<K: std::hash::Hash + Eq>(p: &HashMap<Option<K>, f64>, q: &HashMap<Option<K>, f64>) -> f64 {
    let mut d = 0.0;
    for (k, x) in p {
        d += match k {
            Some(_) => (x - q.get(k).copied().unwrap_or(0.0)).abs(),
            None => *x,
        };
    }
    for (k, y) in q {
        d += match k {
            Some(_) if !p.contains_key(k) => *y,
            Some(_) => 0.0,
            None => *y,
        };
    }
    d / 2.0
}

pub fn run_compare(a: &CompareArgs) -> Outcome {
    let dist = read_distribution(&a.exact.to_string_lossy())?;
    let exact: HashMap<Option<CountState>, f64> =
        dist.states.iter().cloned().map(Some).zip(dist.p.iter().copied()).collect();
    let inputs = expand(&a.inputs)?;
    if let [single] = inputs.as_slice() {
        if let Ok(d) = serde_json::from_str::<ExactDistribution>(&read_text(single.as_ref())?) {
            if d.grammar_hash != dist.grammar_hash || d.classes != dist.classes {
                return Err(Failure::semantic(format!("{single}: distribution is for a different grammar")));
            }
            let other = d.states.into_iter().map(Some).zip(d.p).collect();
            return report(a, &dist, &exact, &other, None);
        }
    }
    let mut counts: HashMap<Option<CountState>, f64> = HashMap::new();
    for path in &inputs {
        let file = fs::File::open(path).map_err(|e| Failure::usage(format!("{path}: {e}")))?;
        let traj = read_jsonl(BufReader::new(file)).map_err(|e| Failure::usage(format!("{path}: {e}")))?;
        if traj.header.grammar_hash != dist.grammar_hash {
            return Err(Failure::semantic(format!("{path}: trajectory was produced by a different grammar")));
        }
        match traj.footer.t_end {
            Some(t) if t >= dist.t => {}
            _ => return Err(Failure::semantic(format!("{path}: trajectory ends before t = {}", dist.t))),
        }
        let state = traj.state_after(traj.events_until(dist.t));
        *counts.entry(count_state_of(&dist.classes, &state)).or_default() += 1.0;
    }
    let n = inputs.len() as f64;
    let other = counts.into_iter().map(|(k, v)| (k, v / n)).collect();
    report(a, &dist, &exact, &other, Some(inputs.len()))
}

fn report(
    a: &CompareArgs,
    dist: &ExactDistribution,
    exact: &HashMap<Option<CountState>, f64>,
    other: &HashMap<Option<CountState>, f64>,
    samples: Option<usize>,
) -> Outcome {
    let d = if a.marginal {
        marginals(dist, exact).iter().zip(&marginals(dist, other)).map(|(p, q)| tv(p, q)).fold(0.0, f64::max)
    } else {
        tv(exact, other)
    };
    let mut out = std::io::stdout().lock();
    let _ = match samples {
        Some(n) => writeln!(out, "tv {d:.6} over {n} trajectories at t = {}", dist.t),
        None => writeln!(out, "tv {d:.6}"),
    };
    if d <= a.tol {
        Ok(())
    } else {
        Err(Failure::semantic(format!("distance {d:.6} exceeds --tol {}", a.tol)))
    }
}
