//! The layer stack: input encoding, per-layer scan + fusion attention (one
//! scan per direction when bidirectional), residual/norm/feed-forward blocks
//! and the task head.

mod config;
pub mod encode;
pub mod fusion;
pub mod params;
pub mod reference;
pub mod scan;

use std::path::Path;

pub use config::{FusionMode, ModelConfig, Task};
pub use encode::{depth_positional_encoding, dir_gated_gcn, encode_inputs, EdgeIndex};
pub use fusion::{fusion_attention, GraphIndex};
pub use params::init_params;
pub use scan::{digraph_ssm_scan, ssm_table, PairIndex, ScanOutput};

use crate::algos::{HopBound, PreprocessArtifacts};
use crate::error::{Error, Result};
use crate::graph::{GraphBatch, Label};
use crate::nn::checkpoint::{load_checkpoint, save_checkpoint};
use crate::nn::{AdamW, ParameterSet, Real, RngStream, Tape, Tensor, Var};
use crate::preprocess::PreparedBatch;

/// Index structures and constants for one forward pass over a batch.
#[derive(Clone, Debug)]
pub struct ForwardInputs {
    pub features: Tensor,
    pub depth: Vec<usize>,
    pub edges: EdgeIndex,
    pub graphs: GraphIndex,
    pub forward: PairIndex,
    pub forward_pagerank: Tensor,
    pub reverse: Option<(PairIndex, Tensor)>,
    /// Number of kernel matrices needed, `max spd + 1` or `K + 1`.
    pub table_len: usize,
}

fn pagerank_column(a: &PreprocessArtifacts) -> Tensor {
    Tensor::from_f64([a.pagerank.len(), 1], &a.pagerank).expect("n x 1")
}

impl ForwardInputs {
    pub fn new(batch: &PreparedBatch, cfg: &ModelConfig) -> Result<Self> {
        let b = &batch.batch;
        let n = b.num_nodes();
        if b.feature_dim() != cfg.in_features {
            return Err(Error::Config(format!(
                "graphs carry {} features, model expects {}",
                b.feature_dim(),
                cfg.in_features
            )));
        }
        if batch.forward.hop_bound != cfg.hop_bound {
            return Err(Error::Config(format!(
                "artifacts were computed with K = {}, model uses K = {}",
                batch.forward.hop_bound, cfg.hop_bound
            )));
        }
        let reverse = match (&batch.reverse, cfg.bidirectional) {
            (Some(r), true) => Some((PairIndex::new(n, &r.pairs), pagerank_column(r))),
            (None, true) => return Err(Error::Config("bidirectional model needs reverse-graph artifacts".into())),
            (_, false) => None,
        };
        let forward = PairIndex::new(n, &batch.forward.pairs);
        let table_len = match cfg.hop_bound {
            HopBound::Finite(k) => k + 1,
            HopBound::Unbounded => {
                let rev = reverse.as_ref().map_or(0, |(p, _)| p.max_spd);
                forward.max_spd.max(rev) + 1
            }
        };
        let features = Tensor::from_f64([n, b.feature_dim()], b.features())?;
        Ok(Self {
            features,
            depth: batch.forward.depth.clone(),
            edges: EdgeIndex::new(n, b.edges()),
            graphs: GraphIndex {
                num_graphs: b.num_graphs(),
                batch_index: b.batch_index().into(),
            },
            forward_pagerank: pagerank_column(&batch.forward),
            forward,
            reverse,
            table_len,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.dim(0)
    }
}

pub struct DirectionTrace<'t> {
    pub scan: ScanOutput<'t>,
    /// `[n, d]` after fusion attention and `W_O`.
    pub output: Var<'t>,
}

pub struct LayerTrace<'t> {
    pub input: Var<'t>,
    pub forward: DirectionTrace<'t>,
    pub reverse: Option<DirectionTrace<'t>>,
    pub output: Var<'t>,
}

pub struct Trace<'t> {
    pub encoded: Var<'t>,
    pub layers: Vec<LayerTrace<'t>>,
}

fn maybe_dropout<'t>(x: Var<'t>, p: f64, rng: &mut Option<&mut RngStream>) -> Result<Var<'t>> {
    match rng.as_deref_mut() {
        Some(r) => x.dropout(p as Real, r),
        None => Ok(x),
    }
}

fn layer_norm<'t>(tape: &'t Tape, params: &ParameterSet, prefix: &str, x: Var<'t>, eps: f64) -> Result<Var<'t>> {
    x.layer_norm(
        tape.param(params, &format!("{prefix}.gamma"))?,
        tape.param(params, &format!("{prefix}.beta"))?,
        eps as Real,
    )
}

#[allow(clippy::too_many_arguments)]
fn direction<'t>(
    tape: &'t Tape,
    params: &ParameterSet,
    cfg: &ModelConfig,
    prefix: &str,
    fx: Var<'t>,
    pairs: &PairIndex,
    pagerank: &Tensor,
    inputs: &ForwardInputs,
) -> Result<DirectionTrace<'t>> {
    let n = inputs.num_nodes();
    let (d, h, dh) = (cfg.hidden, cfg.heads, cfg.head_dim());
    let table = ssm_table(tape, params, prefix, inputs.table_len)?;
    let scan = digraph_ssm_scan(tape, params, prefix, fx, pairs, table, h)?;
    let stacked = scan.heads.permute(&[0, 2, 1])?;
    let fused = fusion_attention(tape, params, prefix, stacked, pagerank, Some(&inputs.graphs), cfg.fusion)?;
    debug_assert_eq!(fused.shape(), vec![n, dh, h]);
    let flat = fused.permute(&[0, 2, 1])?.reshape([n, d])?;
    let output = flat.matmul(tape.param(params, &format!("{prefix}.wo"))?)?;
    Ok(DirectionTrace { scan, output })
}

/// Full forward pass with intermediate values. `rng` enables dropout when
/// the tape is in training mode.
pub fn model_forward_traced<'t>(
    tape: &'t Tape,
    params: &ParameterSet,
    cfg: &ModelConfig,
    inputs: &ForwardInputs,
    mut rng: Option<&mut RngStream>,
) -> Result<(Var<'t>, Trace<'t>)> {
    let eps = cfg.layer_norm_eps;
    let depth = cfg.use_depth_pe.then_some(inputs.depth.as_slice());
    let encoded = encode_inputs(tape, params, &inputs.features, depth, &inputs.edges, cfg.se_layers, eps as Real)?;
    let mut h = encoded;
    let mut layers = Vec::with_capacity(cfg.num_layers);
    for l in 0..cfg.num_layers {
        let fwd = direction(
            tape,
            params,
            cfg,
            &format!("l{l}.fwd"),
            h,
            &inputs.forward,
            &inputs.forward_pagerank,
            inputs,
        )?;
        let (mixed, rev) = match (&inputs.reverse, cfg.bidirectional) {
            (Some((pairs, pr)), true) => {
                let rev = direction(tape, params, cfg, &format!("l{l}.rev"), h, pairs, pr, inputs)?;
                let both = Var::concat(&[fwd.output, rev.output], 1)?;
                let merged = both
                    .matmul(tape.param(params, &format!("l{l}.merge.w"))?)?
                    .add(tape.param(params, &format!("l{l}.merge.b"))?)?;
                (merged, Some(rev))
            }
            (None, true) => return Err(Error::Config("bidirectional model needs reverse-graph artifacts".into())),
            (_, false) => (fwd.output, None),
        };
        let mixed = maybe_dropout(mixed, cfg.dropout, &mut rng)?;
        let h1 = layer_norm(tape, params, &format!("l{l}.ln1"), h.add(mixed)?, eps)?;
        let w = |name: &str| tape.param(params, &format!("l{l}.ffn.{name}"));
        let ff = h1
            .matmul(w("w1")?)?
            .add(w("b1")?)?
            .relu()
            .matmul(w("w2")?)?
            .add(w("b2")?)?;
        let ff = maybe_dropout(ff, cfg.dropout, &mut rng)?;
        let out = layer_norm(tape, params, &format!("l{l}.ln2"), h1.add(ff)?, eps)?;
        layers.push(LayerTrace {
            input: h,
            forward: fwd,
            reverse: rev,
            output: out,
        });
        h = out;
    }
    let p = |name: &str| tape.param(params, name);
    let out = if cfg.task.is_node_level() {
        h.matmul(p("head.w")?)?.add(p("head.b")?)?
    } else {
        h.segment_mean(inputs.graphs.batch_index.clone(), inputs.graphs.num_graphs)?
            .matmul(p("head.w1")?)?
            .add(p("head.b1")?)?
            .relu()
            .matmul(p("head.w2")?)?
            .add(p("head.b2")?)?
    };
    Ok((out, Trace { encoded, layers }))
}

pub fn model_forward<'t>(
    tape: &'t Tape,
    params: &ParameterSet,
    cfg: &ModelConfig,
    inputs: &ForwardInputs,
    rng: Option<&mut RngStream>,
) -> Result<Var<'t>> {
    model_forward_traced(tape, params, cfg, inputs, rng).map(|(out, _)| out)
}

/// Supervision for a batch in the form the task's loss consumes.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_values(&self) -> Vec<f64> {
        match self {
            Targets::Classes(c) => c.iter().map(|&x| x as f64).collect(),
            Targets::Values(v) => v.clone(),
        }
    }
}

fn class_index(c: i64, num_classes: usize) -> Result<usize> {
    usize::try_from(c)
        .ok()
        .filter(|&c| c < num_classes)
        .ok_or_else(|| Error::Config(format!("class label {c} outside 0..{num_classes}")))
}

/// Collects the labels of a batch for `task`; a label of the wrong kind is a
/// configuration error.
pub fn targets(cfg: &ModelConfig, batch: &GraphBatch) -> Result<Targets> {
    let mismatch = |i: usize, found: Option<&Label>| {
        Error::Config(format!(
            "task {:?} cannot use label {:?} of graph `{}`",
            cfg.task,
            found,
            batch.ids()[i]
        ))
    };
    let mut classes = Vec::new();
    let mut values = Vec::new();
    for (i, label) in batch.labels().iter().enumerate() {
        let nodes = batch.graph_nodes(i).len();
        match (cfg.task, label) {
            (Task::NodeClassify, Some(Label::NodeClasses(c))) if c.len() == nodes => {
                for &x in c {
                    classes.push(class_index(x, cfg.num_classes)?);
                }
            }
            (Task::NodeRegress, Some(l @ (Label::NodeClasses(_) | Label::NodeValues(_)))) => {
                let v = l.node_values().expect("node label");
                if v.len() != nodes {
                    return Err(mismatch(i, Some(l)));
                }
                values.extend(v);
            }
            (Task::GraphClassify, Some(Label::GraphClass(c))) => classes.push(class_index(*c, cfg.num_classes)?),
            (Task::GraphRegress, Some(l @ (Label::GraphClass(_) | Label::GraphValue(_)))) => {
                values.push(l.graph_value().expect("graph label"))
            }
            (_, other) => return Err(mismatch(i, other.as_ref())),
        }
    }
    Ok(if cfg.task.is_classification() {
        Targets::Classes(classes)
    } else {
        Targets::Values(values)
    })
}

/// Cross-entropy for classification, mean squared error for regression.
pub fn task_loss<'t>(out: Var<'t>, targets: &Targets) -> Result<Var<'t>> {
    match targets {
        Targets::Classes(c) => out.cross_entropy(c),
        Targets::Values(v) => out.mse_loss(&Tensor::from_f64([v.len(), 1], v)?),
    }
}

/// A configuration with its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParameterSet,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn inputs(&self, batch: &PreparedBatch) -> Result<ForwardInputs> {
        ForwardInputs::new(batch, &self.config)
    }

    pub fn forward<'t>(&self, tape: &'t Tape, inputs: &ForwardInputs, rng: Option<&mut RngStream>) -> Result<Var<'t>> {
        model_forward(tape, &self.params, &self.config, inputs, rng)
    }

    /// Evaluation-mode predictions.
    pub fn predict(&self, batch: &PreparedBatch) -> Result<Tensor> {
        let inputs = self.inputs(batch)?;
        let tape = Tape::new(false);
        Ok(self.forward(&tape, &inputs, None)?.value())
    }

    pub fn save(&self, path: impl AsRef<Path>, optimizer: Option<&AdamW>) -> Result<()> {
        let meta = serde_json::to_string(&self.config)?;
        save_checkpoint(path, &meta, &self.params, optimizer)
    }

    /// Loads a checkpoint and checks its parameters against the layout the
    /// embedded configuration implies.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Option<AdamW>)> {
        let ck = load_checkpoint(path)?;
        let config: ModelConfig =
            serde_json::from_str(&ck.meta).map_err(|e| Error::Format(format!("bad model config in checkpoint: {e}")))?;
        let layout = init_params(&config, 0)?;
        let same = layout.len() == ck.params.len()
            && layout
                .iter()
                .zip(ck.params.iter())
                .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape());
        if !same {
            return Err(Error::Format("checkpoint parameters do not match its model config".into()));
        }
        Ok((
            Self {
                config,
                params: ck.params,
            },
            ck.optimizer,
        ))
    }
}
