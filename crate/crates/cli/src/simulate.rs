use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use dyngram::engine::{
    initial_store, simulate_dt, simulate_ensemble, write_jsonl, EngineError, SimOptions, Trajectory,
};
use dyngram::store::TermRecord;
use dyngram::{Model, Value};

use crate::{engine_failure, load_init, load_model, Failure, Mode, Outcome, SimulateArgs};

/// A CSV column summing one scalar slot over all terms of a species.
struct Aggregate {
    label: String,
    species: String,
    slot: usize,
}

fn parse_aggregate(model: &Model, spec: &str) -> Result<Aggregate, Failure> {
    let bad = |m: String| Failure::usage(format!("--aggregate {spec}: {m}"));
    let (species, slot) = spec.split_once('.').ok_or_else(|| bad("expected `species.slot`".into()))?;
    let s = model.species_id(species).ok_or_else(|| bad(format!("unknown species `{species}`")))?;
    let decl = &model.grammar.species[s];
    let slot = slot
        .parse::<usize>()
        .ok()
        .or_else(|| decl.slots.iter().position(|d| d.name.as_deref() == Some(slot)))
        .filter(|k| *k < decl.slots.len())
        .ok_or_else(|| bad(format!("`{species}` has no slot `{slot}`")))?;
    if decl.slots[slot].sort == dyngram::grammar::Sort::Vector {
        return Err(bad("vector slots cannot be summed".into()));
    }
    Ok(Aggregate { label: format!("sum({spec})"), species: species.to_string(), slot })
}

fn csv_row(model: &Model, aggs: &[Aggregate], replica: u64, t: f64, state: &[TermRecord]) -> String {
    let mut row = format!("{replica},{t}");
    for s in &model.species {
        row.push_str(&format!(",{}", state.iter().filter(|r| r.species == s.name).count()));
    }
    for a in aggs {
        let sum: f64 = state
            .iter()
            .filter(|r| r.species == a.species)
            .filter_map(|r| r.params.get(a.slot).and_then(Value::as_f64))
            .sum();
        row.push_str(&format!(",{sum}"));
    }
    row
}

fn write_trajectory(path: &Path, traj: &Trajectory) -> Outcome {
    let write = || -> std::io::Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        write_jsonl(traj, &mut out)?;
        out.flush()
    };
    write().map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

pub fn run(a: &SimulateArgs) -> Outcome {
    let model = load_model(&a.grammar)?;
    let init = load_init(a.init.as_deref())?;
    if a.replicas < 1 {
        return Err(Failure::usage("--replicas must be at least 1"));
    }
    let aggs = a.aggregates.iter().map(|s| parse_aggregate(&model, s)).collect::<Result<Vec<_>, _>>()?;
    let results: Vec<Result<Trajectory, EngineError>> = match a.mode {
        Mode::Ct => {
            let tmax = a.tmax.ok_or_else(|| Failure::usage("--tmax is required in ct mode"))?;
            if a.steps.is_some() {
                return Err(Failure::usage("--steps applies to dt mode only"));
            }
            let mut opts = SimOptions::new(tmax, a.seed);
            opts.snapshot_dt = a.snapshot_dt;
            if let Some(m) = a.max_events {
                opts.max_events = m;
            }
            opts.check().map_err(|e| engine_failure(&e))?;
            simulate_ensemble(&model, &init, &opts, a.replicas)
        }
        Mode::Dt => {
            if a.snapshot_dt.is_some() || a.tmax.is_some() {
                return Err(Failure::usage("dt mode takes --steps, not --tmax or --snapshot-dt"));
            }
            let steps = a.steps.ok_or_else(|| Failure::usage("--steps is required in dt mode"))?;
            (0..a.replicas)
                .map(|r| {
                    let store = initial_store(&model, &init)?;
                    simulate_dt(store, steps, a.seed, r)
                })
                .collect()
        }
    };
    if let Some(Err(e @ (EngineError::NotAnSpg(_) | EngineError::InitialState(_)))) = results.first() {
        return Err(engine_failure(e));
    }

    fs::create_dir_all(&a.out).map_err(|e| Failure::runtime(format!("{}: {e}", a.out.display())))?;
    let mut csv = Vec::new();
    if a.snapshot_dt.is_some() {
        let mut header = "replica,t".to_string();
        for s in &model.species {
            header.push_str(&format!(",{}", s.name));
        }
        for g in &aggs {
            header.push_str(&format!(",{}", g.label));
        }
        csv.push(header);
    }
    let mut first_error = None;
    for (r, res) in results.iter().enumerate() {
        let traj = match res {
            Ok(t) => t,
            Err(e) => {
                if results.len() > 1 {
                    eprintln!("replica {r}: {e}");
                }
                first_error.get_or_insert(e);
                match e.partial() {
                    Some(p) => p,
                    None => continue,
                }
            }
        };
        write_trajectory(&a.out.join(format!("replica-{r:05}.jsonl")), traj)?;
        for s in &traj.snapshots {
            csv.push(csv_row(&model, &aggs, r as u64, s.t, &s.state));
        }
    }
    if !csv.is_empty() {
        let path = a.out.join("snapshots.csv");
        fs::write(&path, csv.join("\n") + "\n").map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
    }
    match first_error {
        Some(e) => Err(engine_failure(e)),
        None => Ok(()),
    }
}
