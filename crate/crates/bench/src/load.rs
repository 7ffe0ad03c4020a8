//! Edge-list ingestion.
//!
//! Input is text, one edge per line: `src dst [weight]`, whitespace
//! separated; blank lines and lines starting with `#` are skipped. Vertex
//! tokens are arbitrary strings. Missing weights are drawn uniformly from
//! `[1, 100]`.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::{Duration, Instant};

use cbgraph::{CbListConfig, Graph, GraphError, PropertyMode, VertexId};
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::BenchError;

pub const MIN_WEIGHT: u32 = 1;
pub const MAX_WEIGHT: u32 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Shuffle the edge order before insertion.
    pub shuffle_seed: Option<u64>,
    /// Seed for synthesized weights, drawn in file order.
    pub weight_seed: u64,
    pub property_mode: PropertyMode,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            shuffle_seed: None,
            weight_seed: 1,
            property_mode: PropertyMode::Aoe,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadStats {
    /// Edge lines read.
    pub lines: usize,
    pub vertices: usize,
    /// Distinct edges after duplicates collapsed.
    pub edges: usize,
    pub synthesized_weights: usize,
    pub elapsed: Duration,
}

struct RawEdge {
    src: String,
    dst: String,
    weight: i64,
}

fn parse(reader: impl BufRead, weight_seed: u64) -> Result<(Vec<RawEdge>, usize), BenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(weight_seed);
    let mut out = Vec::new();
    let mut synthesized = 0;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| BenchError::Parse { line: line_no, msg: e.to_string() })?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = text.split_whitespace().collect();
        let weight = match toks.len() {
            2 => {
                synthesized += 1;
                i64::from(rng.random_range(MIN_WEIGHT..=MAX_WEIGHT))
            }
            3 => {
                let w: i64 = toks[2].parse().map_err(|_| BenchError::Parse {
                    line: line_no,
                    msg: format!("weight `{}` is not an integer", toks[2]),
                })?;
                if w > i64::from(u32::MAX) {
                    return Err(BenchError::Parse {
                        line: line_no,
                        msg: format!("weight {w} out of range"),
                    });
                }
                w
            }
            n => {
                return Err(BenchError::Parse {
                    line: line_no,
                    msg: format!("expected `src dst [weight]`, found {n} fields"),
                })
            }
        };
        out.push(RawEdge {
            src: toks[0].to_owned(),
            dst: toks[1].to_owned(),
            weight,
        });
    }
    Ok((out, synthesized))
}

fn vertex(g: &mut Graph, ext: &str) -> Result<VertexId, GraphError> {
    match g.id_of(ext) {
        Some(v) => Ok(v),
        None => g.insert_vertex(ext, None),
    }
}

/// Loads an edge list from any reader. Logical ids follow first appearance
/// in insertion order, so shuffling also permutes ids.
pub fn load_graph_from_reader(reader: impl BufRead, opts: &LoadOptions) -> Result<(Graph, LoadStats), BenchError> {
    let start = Instant::now();
    let (mut edges, synthesized) = parse(reader, opts.weight_seed)?;
    let lines = edges.len();
    if let Some(seed) = opts.shuffle_seed {
        edges.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let mut g = Graph::new(CbListConfig::default().with_property_mode(opts.property_mode))?;
    for e in &edges {
        let s = vertex(&mut g, &e.src)?;
        let d = vertex(&mut g, &e.dst)?;
        if e.weight < 0 {
            return Err(GraphError::NegativeWeight { src: s, dst: d }.into());
        }
        g.insert_edge(s, d, e.weight as u32)?;
    }
    let stats = LoadStats {
        lines,
        vertices: g.vertex_count(),
        edges: g.edge_count(),
        synthesized_weights: synthesized,
        elapsed: start.elapsed(),
    };
    Ok((g, stats))
}

pub fn load_graph(path: &Path, opts: &LoadOptions) -> Result<(Graph, LoadStats), BenchError> {
    let f = File::open(path).map_err(|e| BenchError::io(path, e))?;
    load_graph_from_reader(BufReader::new(f), opts)
}

/// Uniform random digraph with `vertices` vertices named `0..vertices` and
/// `edges` edge draws (duplicates collapse), weights in `[1, 100]`.
pub fn synthetic_graph(vertices: u32, edges: usize, seed: u64, cfg: CbListConfig) -> Result<Graph, BenchError> {
    let mut g = Graph::new(cfg)?;
    for i in 0..vertices {
        g.insert_vertex(&i.to_string(), None)?;
    }
    if vertices == 0 {
        return Ok(g);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..edges {
        let s = rng.random_range(0..vertices);
        let d = rng.random_range(0..vertices);
        g.insert_edge(VertexId(s), VertexId(d), rng.random_range(MIN_WEIGHT..=MAX_WEIGHT))?;
    }
    Ok(g)
}
