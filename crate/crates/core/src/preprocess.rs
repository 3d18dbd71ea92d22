//! Preprocessing of graphs into model inputs and the sidecar file that stores
//! the results.
//!
//! The sidecar is JSON lines. The first line is a header
//! `{"magic": "DGSSM-PREPROCESS", "version": 1, "hop_bound": ..., "bidirectional": ...}`;
//! every following line holds one graph's artifacts keyed by its id:
//! `{"id": "...", "forward": {...}, "reverse": {...} | null}`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::algos::{HopBound, PageRankConfig, PreprocessArtifacts};
use crate::error::{Error, Result};
use crate::graph::{batch_graphs, reverse_graph, DiGraph, GraphBatch};

pub const SIDECAR_MAGIC: &str = "DGSSM-PREPROCESS";
pub const SIDECAR_VERSION: u32 = 1;

/// A graph with the artifacts of itself and, optionally, of its reverse.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedGraph {
    pub graph: DiGraph,
    pub forward: PreprocessArtifacts,
    pub reverse: Option<PreprocessArtifacts>,
}

impl PreparedGraph {
    pub fn new(graph: DiGraph, k: HopBound, bidirectional: bool, pr: &PageRankConfig) -> Result<Self> {
        let forward = PreprocessArtifacts::compute(&graph, k, pr)?;
        let reverse = if bidirectional {
            Some(PreprocessArtifacts::compute(&reverse_graph(&graph), k, pr)?)
        } else {
            None
        };
        Ok(Self {
            graph,
            forward,
            reverse,
        })
    }
}

pub fn prepare_all(
    graphs: &[DiGraph],
    k: HopBound,
    bidirectional: bool,
    pr: &PageRankConfig,
) -> Result<Vec<PreparedGraph>> {
    graphs
        .iter()
        .map(|g| PreparedGraph::new(g.clone(), k, bidirectional, pr))
        .collect()
}

/// Batched graphs with concatenated artifacts.
#[derive(Clone, Debug)]
pub struct PreparedBatch {
    pub batch: GraphBatch,
    pub forward: PreprocessArtifacts,
    pub reverse: Option<PreprocessArtifacts>,
}

impl PreparedBatch {
    pub fn new(items: &[&PreparedGraph]) -> Result<Self> {
        let graphs: Vec<DiGraph> = items.iter().map(|p| p.graph.clone()).collect();
        let batch = batch_graphs(&graphs)?;
        let fwd: Vec<&PreprocessArtifacts> = items.iter().map(|p| &p.forward).collect();
        let forward = PreprocessArtifacts::concat(&fwd)?;
        let reverse = match items.iter().map(|p| p.reverse.as_ref()).collect::<Option<Vec<_>>>() {
            Some(rev) => Some(PreprocessArtifacts::concat(&rev)?),
            None if items.iter().any(|p| p.reverse.is_some()) => {
                return Err(Error::InvalidGraph(
                    "either all or none of the batched graphs carry reverse artifacts".into(),
                ))
            }
            None => None,
        };
        Ok(Self {
            batch,
            forward,
            reverse,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct SidecarHeader {
    magic: String,
    version: u32,
    hop_bound: HopBound,
    bidirectional: bool,
}

#[derive(Serialize, Deserialize)]
struct SidecarRecord {
    id: String,
    forward: PreprocessArtifacts,
    reverse: Option<PreprocessArtifacts>,
}

/// Contents of a sidecar file.
#[derive(Clone, Debug, PartialEq)]
pub struct Sidecar {
    pub hop_bound: HopBound,
    pub bidirectional: bool,
    pub entries: HashMap<String, (PreprocessArtifacts, Option<PreprocessArtifacts>)>,
}

pub fn write_sidecar<W: Write>(mut w: W, items: &[PreparedGraph], k: HopBound, bidirectional: bool) -> Result<()> {
    let header = SidecarHeader {
        magic: SIDECAR_MAGIC.into(),
        version: SIDECAR_VERSION,
        hop_bound: k,
        bidirectional,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for p in items {
        let rec = SidecarRecord {
            id: p.graph.id().to_string(),
            forward: p.forward.clone(),
            reverse: p.reverse.clone(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_sidecar(path: impl AsRef<Path>, items: &[PreparedGraph], k: HopBound, bidirectional: bool) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_sidecar(&mut w, items, k, bidirectional)?;
    w.flush()?;
    Ok(())
}

pub fn load_sidecar(path: impl AsRef<Path>) -> Result<Sidecar> {
    let path = path.as_ref();
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Format("empty preprocess sidecar".into()))??;
    let header: SidecarHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::Format(format!("bad sidecar header: {e}")))?;
    if header.magic != SIDECAR_MAGIC {
        return Err(Error::Format(format!("bad sidecar magic `{}`", header.magic)));
    }
    if header.version != SIDECAR_VERSION {
        return Err(Error::Format(format!("unsupported sidecar version {}", header.version)));
    }
    let mut entries = HashMap::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SidecarRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: e.to_string(),
        })?;
        entries.insert(rec.id, (rec.forward, rec.reverse));
    }
    Ok(Sidecar {
        hop_bound: header.hop_bound,
        bidirectional: header.bidirectional,
        entries,
    })
}

impl Sidecar {
    /// Pairs loaded artifacts with their graphs by id.
    pub fn attach(&self, graphs: &[DiGraph]) -> Result<Vec<PreparedGraph>> {
        graphs
            .iter()
            .map(|g| {
                let (forward, reverse) = self
                    .entries
                    .get(g.id())
                    .ok_or_else(|| Error::Format(format!("no artifacts for graph `{}`", g.id())))?;
                if forward.num_nodes() != g.num_nodes() {
                    return Err(Error::Format(format!(
                        "artifacts for `{}` cover {} nodes, graph has {}",
                        g.id(),
                        forward.num_nodes(),
                        g.num_nodes()
                    )));
                }
                Ok(PreparedGraph {
                    graph: g.clone(),
                    forward: forward.clone(),
                    reverse: reverse.clone(),
                })
            })
            .collect()
    }
}
