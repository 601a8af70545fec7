//! Corpus loading shared by the benchmarks.

use std::path::PathBuf;
use std::sync::Arc;

use dyngram::engine::InitialTerm;
use dyngram::{parse_grammar, Model};

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn corpus_model(name: &str) -> Arc<Model> {
    let src = std::fs::read_to_string(corpus_dir().join(format!("{name}.dg"))).unwrap();
    Arc::new(Model::compile(&parse_grammar(&src).unwrap()).unwrap())
}

/// Initial terms for `name`, or none if the corpus has no init file for it.
pub fn corpus_init(name: &str) -> Vec<InitialTerm> {
    match std::fs::read_to_string(corpus_dir().join(format!("{name}.init.json"))) {
        Ok(text) => serde_json::from_str(&text).unwrap(),
        Err(_) => Vec::new(),
    }
}
