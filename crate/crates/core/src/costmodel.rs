//! Total-cost strategies over open molecule nodes: historical cost plus an
//! optional estimate of the remaining cost.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::molspace::{ExpansionOracle, FeatureVector, MoleculeId};
use crate::numerics::{init_affine, read_weights, seeded_rng, write_weights, Adam, AdamConfig, ParamSet, Tape};
use crate::policygnn::{score, GnnParameters};
use crate::searchgraph::{GraphSnapshot, NodeId, SearchGraph};

pub const DEFAULT_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueNetConfig {
    pub feature_bits: usize,
    pub hidden: usize,
}

impl Default for ValueNetConfig {
    fn default() -> Self {
        ValueNetConfig {
            feature_bits: crate::molspace::DEFAULT_FEATURE_BITS,
            hidden: 128,
        }
    }
}

/// Two-layer regressor from a molecule fingerprint to its estimated
/// remaining route cost: `relu(x W1 + b1) W2 + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    pub config: ValueNetConfig,
    pub params: ParamSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for ValueTrainConfig {
    fn default() -> Self {
        ValueTrainConfig {
            epochs: 200,
            batch_size: 32,
            adam: AdamConfig {
                lr: 1e-3,
                ..AdamConfig::default()
            },
            seed: 0,
        }
    }
}

impl ValueNet {
    pub fn init(config: ValueNetConfig, seed: u64) -> Result<Self> {
        if config.feature_bits < 8 || config.hidden == 0 {
            return Err(Error::Config(format!("invalid value-net settings {config:?}")));
        }
        let mut rng = seeded_rng(seed);
        let mut params = ParamSet::new();
        let (w, b) = init_affine(&mut rng, config.feature_bits, config.hidden);
        params.push("l1.w", w);
        params.push("l1.b", b);
        let (w, b) = init_affine(&mut rng, config.hidden, 1);
        params.push("l2.w", w);
        params.push("l2.b", b);
        Ok(ValueNet { config, params })
    }

    fn record(&self, tape: &mut Tape, rows: Rc<Vec<Vec<u32>>>) -> crate::numerics::Var {
        let w1 = tape.param(&self.params, 0);
        let b1 = tape.param(&self.params, 1);
        let w2 = tape.param(&self.params, 2);
        let b2 = tape.param(&self.params, 3);
        let h = tape.sparse_rows(rows, w1);
        let h = tape.add_row(h, b1);
        let h = tape.relu(h);
        let y = tape.matmul(h, w2);
        tape.add_row(y, b2)
    }

    fn check_bits(&self, fv: &FeatureVector) -> Result<()> {
        if fv.len() != self.config.feature_bits {
            return Err(Error::Shape(format!(
                "value net expects {} feature bits, got {}",
                self.config.feature_bits,
                fv.len()
            )));
        }
        Ok(())
    }

    pub fn predict_many(&self, features: &[FeatureVector]) -> Result<Vec<f64>> {
        for f in features {
            self.check_bits(f)?;
        }
        let mut tape = Tape::new();
        let y = self.record(&mut tape, Rc::new(features.iter().map(|f| f.indices()).collect()));
        tape.check()?;
        Ok(tape.value(y).column(0).to_vec())
    }

    pub fn predict(&self, features: &FeatureVector) -> Result<f64> {
        Ok(self.predict_many(std::slice::from_ref(features))?[0])
    }

    /// Minibatch Adam on mean squared error. Returns the mean training loss
    /// of every epoch.
    pub fn fit(&mut self, samples: &[(FeatureVector, f64)], config: &ValueTrainConfig) -> Result<Vec<f64>> {
        use rand::seq::SliceRandom;
        if samples.is_empty() {
            return Err(Error::Config("value-net training set is empty".to_string()));
        }
        if config.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".to_string()));
        }
        for (f, y) in samples {
            self.check_bits(f)?;
            if !y.is_finite() {
                return Err(Error::NonFinite("value-net target".to_string()));
            }
        }
        let mut rng = seeded_rng(config.seed);
        let mut adam = Adam::new(config.adam, &self.params);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut history = Vec::with_capacity(config.epochs);
        for epoch in 0..config.epochs {
            order.shuffle(&mut rng);
            let mut sum = 0.0;
            for batch in order.chunks(config.batch_size) {
                let rows = Rc::new(batch.iter().map(|&i| samples[i].0.indices()).collect());
                let target = Rc::new(batch.iter().map(|&i| samples[i].1).collect());
                let mut tape = Tape::new();
                let y = self.record(&mut tape, rows);
                let loss = tape.mse(y, target);
                let grads = tape.backward(loss, &self.params).map_err(|e| Error::Diverged {
                    epoch,
                    detail: e.to_string(),
                })?;
                sum += tape.scalar(loss) * batch.len() as f64;
                adam.step(&mut self.params, &grads)?;
            }
            history.push(sum / samples.len() as f64);
        }
        Ok(history)
    }

    pub fn save(&self, w: &mut impl Write) -> Result<()> {
        write_weights(w, "value_net", serde_json::to_value(self.config)?, &self.params)
    }
}

/// GNN guidance: `h(v) = -lambda * ln(score(v))` where `score` is the
/// softmax of the network's logits over the open nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnGuide {
    pub params: GnnParameters,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostModel {
    Zero,
    Value(ValueNet),
    Gnn(GnnGuide),
}

impl CostModel {
    pub fn name(&self) -> &'static str {
        match self {
            CostModel::Zero => "zero",
            CostModel::Value(_) => "value",
            CostModel::Gnn(_) => "gnn",
        }
    }

    pub fn gnn(params: GnnParameters) -> Self {
        CostModel::Gnn(GnnGuide {
            params,
            lambda: DEFAULT_LAMBDA,
        })
    }

    /// Reads a checkpoint written by [`GnnParameters::save`] or
    /// [`ValueNet::save`].
    pub fn load(r: &mut impl Read) -> Result<Self> {
        let (header, params) = read_weights(r)?;
        match header.kind.as_str() {
            "gnn" => {
                let config = serde_json::from_value(header.hyper)?;
                Ok(CostModel::gnn(GnnParameters::init(config, 0)?.with_params(params)?))
            }
            "value_net" => {
                let config: ValueNetConfig = serde_json::from_value(header.hyper)?;
                let shell = ValueNet::init(config, 0)?;
                if shell.params.shapes() != params.shapes() {
                    return Err(Error::WeightFormat("value-net tensors do not match its header".to_string()));
                }
                Ok(CostModel::Value(ValueNet { config, params }))
            }
            other => Err(Error::WeightFormat(format!("unknown model kind {other:?}"))),
        }
    }

    pub fn save(&self, w: &mut impl Write) -> Result<()> {
        match self {
            CostModel::Zero => Err(Error::Config("the zero cost model has no weights".to_string())),
            CostModel::Value(v) => v.save(w),
            CostModel::Gnn(g) => g.params.save(w),
        }
    }

    /// Softmax scores of the open nodes under the GNN.
    pub fn score_open_nodes(&self, g: &SearchGraph, oracle: &dyn ExpansionOracle) -> Result<BTreeMap<NodeId, f64>> {
        let CostModel::Gnn(guide) = self else {
            return Err(Error::Config(format!("the {} cost model produces no scores", self.name())));
        };
        let bits = guide.params.config.feature_bits;
        let feat = |m: &MoleculeId| oracle.features(m, bits);
        let snap = GraphSnapshot::capture(g, Some((bits, &feat)));
        let s = score(&snap, &guide.params)?;
        Ok(s.nodes.iter().map(|&i| NodeId(i)).zip(s.normalized).collect())
    }

    /// Heuristic terms of all open nodes, computed together.
    pub fn heuristics(&self, g: &SearchGraph, oracle: &dyn ExpansionOracle) -> Result<BTreeMap<NodeId, f64>> {
        match self {
            CostModel::Zero => Ok(g.open_nodes().iter().map(|&v| (v, 0.0)).collect()),
            CostModel::Value(net) => {
                let ids: Vec<NodeId> = g.open_nodes().iter().copied().collect();
                let feats: Vec<FeatureVector> = ids
                    .iter()
                    .map(|&v| oracle.features(g.molecule(v).expect("open nodes are molecules"), net.config.feature_bits))
                    .collect();
                let h = if ids.is_empty() { Vec::new() } else { net.predict_many(&feats)? };
                Ok(ids.into_iter().zip(h).collect())
            }
            CostModel::Gnn(guide) => {
                if g.open_nodes().is_empty() {
                    return Ok(BTreeMap::new());
                }
                let scores = self.score_open_nodes(g, oracle)?;
                Ok(scores.into_iter().map(|(v, s)| (v, -guide.lambda * s.ln())).collect())
            }
        }
    }

    /// `hist_cost + h` for every open node.
    pub fn open_costs(&self, g: &SearchGraph, oracle: &dyn ExpansionOracle) -> Result<BTreeMap<NodeId, f64>> {
        let mut h = self.heuristics(g, oracle)?;
        for (v, c) in h.iter_mut() {
            *c += g.hist_cost(*v);
            if !c.is_finite() {
                return Err(Error::NonFinite(format!("{} cost of node {}", self.name(), v.0)));
            }
        }
        Ok(h)
    }

    /// Total cost of one open node.
    pub fn total_cost(&self, g: &SearchGraph, v: NodeId, oracle: &dyn ExpansionOracle) -> Result<f64> {
        self.open_costs(g, oracle)?
            .get(&v)
            .copied()
            .ok_or_else(|| Error::Contract(format!("node {} is not open", v.0)))
    }
}

/// Weights of every parameter tensor set to zero.
pub fn zeroed_value_net(config: ValueNetConfig) -> Result<ValueNet> {
    let net = ValueNet::init(config, 0)?;
    Ok(ValueNet {
        config,
        params: net.params.zeroed(),
    })
}

