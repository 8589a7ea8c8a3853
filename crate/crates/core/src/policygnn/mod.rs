//! Whole-graph policy network.
//!
//! Node states start as an RBF embedding of the historical cost joined with
//! either a projected fingerprint (molecules) or an RBF embedding of the
//! reaction cost (reactions). Every search-graph edge is used in both
//! directions with a learned embedding per direction. Each meta layer then
//! updates edges, nodes and the global state in turn, and a linear head maps
//! final node states to one logit per node.

mod train;

use std::rc::Rc;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Piece, 
    bce_with_logits, init_affine, margin_rank, read_weights, seeded_rng, sigmoid, write_weights, Matrix,
    MlpBlock, ParamSet, RbfConfig, Tape, Var,
};
use crate::searchgraph::{GraphSnapshot, Label, NodeTag};

pub use train::{train, EpochLog, Example, TrainConfig, TrainOutcome};

pub const DEFAULT_MARGIN: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    /// Width of every node, edge and global state. Must be `2 * rbf.size`.
    pub hidden: usize,
    pub layers: usize,
    pub rbf: RbfConfig,
    pub feature_bits: usize,
    pub dropout: f64,
}

impl Default for GnnConfig {
    fn default() -> Self {
        GnnConfig {
            hidden: 128,
            layers: 3,
            rbf: RbfConfig::default(),
            feature_bits: crate::molspace::DEFAULT_FEATURE_BITS,
            dropout: 0.1,
        }
    }
}

impl GnnConfig {
    /// A configuration with `hidden = 2 * rbf_size` on the default grid.
    pub fn with_widths(rbf_size: usize, feature_bits: usize) -> Self {
        let d = GnnConfig::default();
        GnnConfig {
            hidden: 2 * rbf_size,
            rbf: RbfConfig::with_grid(d.rbf.low, d.rbf.high, rbf_size),
            feature_bits,
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rbf.validate()?;
        if self.hidden != 2 * self.rbf.size {
            return Err(Error::Config(format!(
                "hidden width {} must be twice the RBF size {}",
                self.hidden, self.rbf.size
            )));
        }
        if self.layers == 0 || self.feature_bits < 8 || !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("invalid GNN settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct MetaLayer {
    edge: MlpBlock,
    message: MlpBlock,
    node: MlpBlock,
    global: MlpBlock,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    edge_embed: usize,
    fp_w: usize,
    fp_b: usize,
    layers: Vec<MetaLayer>,
    head_w: usize,
    head_b: usize,
}

/// Weights of the policy network.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnParameters {
    pub config: GnnConfig,
    pub params: ParamSet,
    layout: Layout,
}

impl GnnParameters {
    pub fn init(config: GnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let mut rng = seeded_rng(seed);
        let mut ps = ParamSet::new();
        let (embed, _) = init_affine(&mut rng, 2, h);
        let edge_embed = ps.push("edge_embed", embed);
        let (w, b) = init_affine(&mut rng, config.feature_bits, h - config.rbf.size);
        let fp_w = ps.push("fp.w", w);
        let fp_b = ps.push("fp.b", b);
        let mut layers = Vec::with_capacity(config.layers);
        for i in 0..config.layers {
            layers.push(MetaLayer {
                edge: MlpBlock::init(&mut ps, &format!("layer{i}.edge"), 4 * h, h, &mut rng),
                message: MlpBlock::init(&mut ps, &format!("layer{i}.message"), 2 * h, h, &mut rng),
                node: MlpBlock::init(&mut ps, &format!("layer{i}.node"), 3 * h, h, &mut rng),
                global: MlpBlock::init(&mut ps, &format!("layer{i}.global"), 2 * h, h, &mut rng),
            });
        }
        let (w, b) = init_affine(&mut rng, h, 1);
        let head_w = ps.push("head.w", w);
        let head_b = ps.push("head.b", b);
        Ok(GnnParameters {
            config,
            params: ps,
            layout: Layout {
                edge_embed,
                fp_w,
                fp_b,
                layers,
                head_w,
                head_b,
            },
        })
    }

    /// Replaces the weights, keeping the layout. Shapes must match.
    pub fn with_params(&self, params: ParamSet) -> Result<Self> {
        if params.shapes() != self.params.shapes() {
            return Err(Error::Shape("parameter set does not match the GNN layout".to_string()));
        }
        Ok(GnnParameters {
            config: self.config,
            params,
            layout: self.layout.clone(),
        })
    }

    pub fn head_indices(&self) -> (usize, usize) {
        (self.layout.head_w, self.layout.head_b)
    }

    pub fn save(&self, w: &mut impl std::io::Write) -> Result<()> {
        write_weights(w, "gnn", serde_json::to_value(self.config)?, &self.params)
    }

    pub fn load(r: &mut impl std::io::Read) -> Result<Self> {
        let (header, params) = read_weights(r)?;
        if header.kind != "gnn" {
            return Err(Error::WeightFormat(format!("expected a gnn checkpoint, found {}", header.kind)));
        }
        let config: GnnConfig = serde_json::from_value(header.hyper)?;
        GnnParameters::init(config, 0)?.with_params(params)
    }
}

/// A snapshot prepared for the network: embeddings of scalar inputs,
/// fingerprint indices and the bidirectional edge list.
#[derive(Debug, Clone)]
pub struct GnnInput {
    nodes: usize,
    hist_rbf: Matrix,
    fingerprints: Rc<Vec<Vec<u32>>>,
    reaction_rbf: Matrix,
    /// Node `i`'s row in the stacked `[molecule parts; reaction parts]`.
    part_row: Rc<Vec<usize>>,
    src: Rc<Vec<usize>>,
    dst: Rc<Vec<usize>>,
    direction: Rc<Vec<usize>>,
    open: Vec<usize>,
}

impl GnnInput {
    pub fn encode(snapshot: &GraphSnapshot, config: &GnnConfig) -> Result<Self> {
        let n = snapshot.nodes.len();
        let rbf = &config.rbf;
        let mut hist_rbf = Array2::zeros((n, rbf.size));
        let mut molecules = Vec::new();
        let mut fingerprints = Vec::new();
        let mut reactions = Vec::new();
        let mut reaction_rows = Vec::new();
        for (i, node) in snapshot.nodes.iter().enumerate() {
            hist_rbf.row_mut(i).assign(&ndarray::Array1::from(rbf.embed(node.hist_cost)?));
            match node.kind {
                NodeTag::Molecule => {
                    let fp = node
                        .features
                        .as_ref()
                        .ok_or_else(|| Error::Contract(format!("molecule node {i} has no feature vector")))?;
                    if snapshot.feature_bits != config.feature_bits {
                        return Err(Error::Shape(format!(
                            "snapshot fingerprints have {} bits, network expects {}",
                            snapshot.feature_bits, config.feature_bits
                        )));
                    }
                    molecules.push(i);
                    fingerprints.push(fp.clone());
                }
                NodeTag::Reaction => {
                    let c = node
                        .reaction_cost
                        .ok_or_else(|| Error::Contract(format!("reaction node {i} has no cost")))?;
                    reactions.push(i);
                    reaction_rows.push(rbf.embed(c)?);
                }
            }
        }
        let mut part_row = vec![0; n];
        for (row, &i) in molecules.iter().chain(&reactions).enumerate() {
            part_row[i] = row;
        }
        let reaction_rbf = Array2::from_shape_vec(
            (reactions.len(), rbf.size),
            reaction_rows.into_iter().flatten().collect(),
        )
        .expect("rbf rows have equal width");
        let mut src = Vec::with_capacity(2 * snapshot.edges.len());
        let mut dst = Vec::with_capacity(2 * snapshot.edges.len());
        let mut direction = Vec::with_capacity(2 * snapshot.edges.len());
        for &[s, d] in &snapshot.edges {
            if s >= n || d >= n {
                return Err(Error::Contract(format!("edge {s} -> {d} out of range")));
            }
            src.extend([s, d]);
            dst.extend([d, s]);
            direction.extend([0, 1]);
        }
        Ok(GnnInput {
            nodes: n,
            hist_rbf,
            fingerprints: Rc::new(fingerprints),
            reaction_rbf,
            part_row: Rc::new(part_row),
            src: Rc::new(src),
            dst: Rc::new(dst),
            direction: Rc::new(direction),
            open: snapshot.open_nodes(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn open(&self) -> &[usize] {
        &self.open
    }
}

/// States produced by a forward pass.
pub struct Encoding {
    pub nodes: Var,
    pub edges: Var,
    pub global: Var,
}

/// Initial node, edge and global states.
pub fn init_encoding(tape: &mut Tape, input: &GnnInput, p: &GnnParameters) -> Encoding {
    let l = &p.layout;
    let ps = &p.params;
    let hist = tape.input(input.hist_rbf.clone());
    let fp_w = tape.param(ps, l.fp_w);
    let fp_b = tape.param(ps, l.fp_b);
    let projected = tape.sparse_rows(input.fingerprints.clone(), fp_w);
    let projected = tape.add_row(projected, fp_b);
    let reaction_part = tape.input(input.reaction_rbf.clone());
    let parts = tape.stack(&[projected, reaction_part]);
    let second = tape.gather(parts, input.part_row.clone());
    let nodes = tape.concat(&[hist, second]);
    let embed = tape.param(ps, l.edge_embed);
    let edges = tape.gather(embed, input.direction.clone());
    let global = tape.input(Array2::zeros((1, p.config.hidden)));
    Encoding { nodes, edges, global }
}

/// One meta layer: edge update, per-edge messages averaged at their
/// destination, node update, global update.
pub fn meta_layer(
    tape: &mut Tape,
    input: &GnnInput,
    enc: &Encoding,
    layer: usize,
    p: &GnnParameters,
    mut dropout: Option<&mut ChaCha8Rng>,
) -> Result<Encoding> {
    let ml = p
        .layout
        .layers
        .get(layer)
        .ok_or_else(|| Error::Contract(format!("layer {layer} out of range")))?;
    let rate = p.config.dropout;
    let ps = &p.params;
    let edge_count = input.src.len();
    let edges = ml.edge.forward_pieces(
        tape,
        ps,
        &[
            Piece::Rows(enc.edges),
            Piece::Gathered(enc.nodes, input.src.clone()),
            Piece::Gathered(enc.nodes, input.dst.clone()),
            Piece::Broadcast(enc.global),
        ],
        edge_count,
        dropout.as_deref_mut().map(|r| (r, rate)),
    )?;

    let messages = ml.message.forward_pieces(
        tape,
        ps,
        &[Piece::Gathered(enc.nodes, input.src.clone()), Piece::Rows(edges)],
        edge_count,
        dropout.as_deref_mut().map(|r| (r, rate)),
    )?;
    let msg = tape.segment_mean(messages, input.dst.clone(), input.nodes);

    let nodes = ml.node.forward_pieces(
        tape,
        ps,
        &[Piece::Rows(enc.nodes), Piece::Rows(msg), Piece::Broadcast(enc.global)],
        input.nodes,
        dropout.as_deref_mut().map(|r| (r, rate)),
    )?;

    let pooled = tape.mean_rows(nodes);
    let global = ml.global.forward_pieces(
        tape,
        ps,
        &[Piece::Rows(enc.global), Piece::Rows(pooled)],
        1,
        dropout.as_deref_mut().map(|r| (r, rate)),
    )?;
    Ok(Encoding { nodes, edges, global })
}

/// Full forward pass; returns the `n x 1` logit column.
pub fn forward(tape: &mut Tape, input: &GnnInput, p: &GnnParameters, mut dropout: Option<&mut ChaCha8Rng>) -> Result<Var> {
    let mut enc = init_encoding(tape, input, p);
    for layer in 0..p.config.layers {
        enc = meta_layer(tape, input, &enc, layer, p, dropout.as_deref_mut())?;
    }
    let w = tape.param(&p.params, p.layout.head_w);
    let b = tape.param(&p.params, p.layout.head_b);
    let z = tape.matmul(enc.nodes, w);
    let logits = tape.add_row(z, b);
    tape.check()?;
    Ok(logits)
}

/// Per-open-node outputs of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenScores {
    /// Snapshot indices of the open nodes, ascending.
    pub nodes: Vec<usize>,
    pub logits: Vec<f64>,
    /// `sigmoid(logit)`, used by the classification loss.
    pub probabilities: Vec<f64>,
    /// Softmax of the logits over the open nodes.
    pub normalized: Vec<f64>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn score_input(input: &GnnInput, p: &GnnParameters) -> Result<OpenScores> {
    if input.open.is_empty() {
        return Err(Error::Contract("no open nodes to score".to_string()));
    }
    let mut tape = Tape::new();
    let logits = forward(&mut tape, input, p, None)?;
    let z = tape.value(logits);
    let open_logits: Vec<f64> = input.open.iter().map(|&i| z[[i, 0]]).collect();
    Ok(OpenScores {
        nodes: input.open.clone(),
        probabilities: open_logits.iter().map(|&x| sigmoid(x)).collect(),
        normalized: softmax(&open_logits),
        logits: open_logits,
    })
}

/// Scores every open node of `snapshot` in evaluation mode.
pub fn score(snapshot: &GraphSnapshot, p: &GnnParameters) -> Result<OpenScores> {
    score_input(&GnnInput::encode(snapshot, &p.config)?, p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub bce: f64,
    pub rank: f64,
    pub total: f64,
}

/// Classification plus margin-ranking loss over open-node logits.
pub fn loss(logits: &[f64], labels: &[Label], margin: f64) -> Result<LossParts> {
    if logits.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} logits but {} labels",
            logits.len(),
            labels.len()
        )));
    }
    let y: Vec<f64> = labels.iter().map(|l| if *l == Label::Positive { 1.0 } else { 0.0 }).collect();
    let bce = bce_with_logits(logits, &y);
    let pick = |want: Label| -> Vec<f64> {
        logits.iter().zip(labels).filter(|(_, l)| **l == want).map(|(z, _)| *z).collect()
    };
    let rank = margin_rank(&pick(Label::Positive), &pick(Label::Negative), margin);
    Ok(LossParts {
        bce,
        rank,
        total: bce + rank,
    })
}

/// Labels of a snapshot's open nodes, in ascending node order. Every open
/// node must be labeled and only open nodes may be.
pub fn open_labels(snapshot: &GraphSnapshot) -> Result<Vec<Label>> {
    let mut out = Vec::new();
    for (i, n) in snapshot.nodes.iter().enumerate() {
        match (n.open, n.label) {
            (true, Some(l)) => out.push(l),
            (true, None) => return Err(Error::Contract(format!("open node {i} has no label"))),
            (false, Some(_)) => return Err(Error::Contract(format!("closed node {i} is labeled"))),
            (false, None) => {}
        }
    }
    Ok(out)
}

/// Records the training loss of one labeled graph on `tape`.
pub fn loss_on_tape(
    tape: &mut Tape,
    input: &GnnInput,
    labels: &[Label],
    p: &GnnParameters,
    margin: f64,
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<(Var, Var, Var)> {
    if labels.len() != input.open.len() {
        return Err(Error::Contract(format!(
            "{} labels for {} open nodes",
            labels.len(),
            input.open.len()
        )));
    }
    let logits = forward(tape, input, p, dropout)?;
    let y: Vec<f64> = labels.iter().map(|l| if *l == Label::Positive { 1.0 } else { 0.0 }).collect();
    let bce = tape.bce(logits, Rc::new(input.open.clone()), Rc::new(y));
    let split = |want: Label| -> Vec<usize> {
        input.open.iter().zip(labels).filter(|(_, l)| **l == want).map(|(i, _)| *i).collect()
    };
    let rank = tape.rank(logits, Rc::new(split(Label::Positive)), Rc::new(split(Label::Negative)), margin);
    let total = tape.add(bce, rank);
    Ok((bce, rank, total))
}
