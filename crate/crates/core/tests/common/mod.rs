#![allow(dead_code)]

pub mod random;

use std::path::PathBuf;
use std::sync::Arc;

use dyngram::engine::InitialTerm;
use dyngram::{parse_grammar, Model};

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn corpus_source(name: &str) -> String {
    std::fs::read_to_string(corpus_dir().join(format!("{name}.dg"))).unwrap()
}

pub fn corpus_model(name: &str) -> Arc<Model> {
    model(&corpus_source(name))
}

pub fn corpus_init(name: &str) -> Vec<InitialTerm> {
    let text = std::fs::read_to_string(corpus_dir().join(format!("{name}.init.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn model(src: &str) -> Arc<Model> {
    Arc::new(Model::compile(&parse_grammar(src).unwrap()).unwrap())
}

pub fn init(species: &str, count: u64) -> Vec<InitialTerm> {
    vec![InitialTerm { species: species.into(), params: vec![], count }]
}

/// Total variation distance between two distributions on the same index set.
pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    0.5 * (0..n).map(|i| (at(p, i) - at(q, i)).abs()).sum::<f64>()
}

/// Empirical distribution of nonnegative integer samples.
pub fn histogram(xs: &[usize]) -> Vec<f64> {
    let n = xs.iter().max().map_or(0, |m| m + 1);
    let mut h = vec![0.0; n];
    for x in xs {
        h[*x] += 1.0;
    }
    let total = xs.len() as f64;
    h.iter_mut().for_each(|v| *v /= total);
    h
}

/// Kolmogorov-Smirnov statistic of a sample against a continuous CDF.
pub fn ks(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
