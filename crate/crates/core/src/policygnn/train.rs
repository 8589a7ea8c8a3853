use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{loss_on_tape, GnnInput, GnnParameters, DEFAULT_MARGIN};
use crate::error::{Error, Result};
use crate::numerics::{seeded_rng, Adam, AdamConfig, Matrix, Tape};
use crate::searchgraph::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub margin: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            adam: AdamConfig::default(),
            margin: DEFAULT_MARGIN,
            seed: 0,
        }
    }
}

/// Mean losses of one epoch. Training losses are measured with dropout
/// active, validation losses without.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub bce: f64,
    pub rank: f64,
    pub total: f64,
    pub val_bce: Option<f64>,
    pub val_rank: Option<f64>,
    pub val_total: Option<f64>,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,bce,rank,total,val_bce,val_rank,val_total";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch,
            self.bce,
            self.rank,
            self.total,
            opt(self.val_bce),
            opt(self.val_rank),
            opt(self.val_total)
        )
    }
}

pub struct TrainOutcome {
    /// Weights of the epoch with the lowest validation ranking loss (lowest
    /// training loss when there is no validation set).
    pub best: GnnParameters,
    pub best_epoch: usize,
    pub last: GnnParameters,
    pub log: Vec<EpochLog>,
}

/// A labeled graph ready for training.
pub type Example = (GnnInput, Vec<Label>);

fn evaluate(p: &GnnParameters, data: &[Example], margin: f64) -> Result<(f64, f64, f64)> {
    let mut sums = (0.0, 0.0, 0.0);
    for (input, labels) in data {
        let mut tape = Tape::new();
        let (b, r, t) = loss_on_tape(&mut tape, input, labels, p, margin, None)?;
        sums.0 += tape.scalar(b);
        sums.1 += tape.scalar(r);
        sums.2 += tape.scalar(t);
    }
    let n = data.len() as f64;
    Ok((sums.0 / n, sums.1 / n, sums.2 / n))
}

/// Minibatch Adam on the summed classification and ranking loss. Batch
/// gradients are averages of per-graph gradients.
pub fn train(
    init: GnnParameters,
    train_set: &[Example],
    val_set: &[Example],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".to_string()));
    }
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::Config("epochs and batch size must be positive".to_string()));
    }
    let mut rng = seeded_rng(config.seed);
    let mut params = init;
    let mut adam = Adam::new(config.adam, &params.params);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, GnnParameters)> = None;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sums = (0.0, 0.0, 0.0);
        for batch in order.chunks(config.batch_size) {
            let mut acc: Option<Vec<Matrix>> = None;
            for &i in batch {
                let (input, labels) = &train_set[i];
                let mut tape = Tape::new();
                let (b, r, t) = loss_on_tape(&mut tape, input, labels, &params, config.margin, Some(&mut rng))?;
                let total = tape.scalar(t);
                if !total.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        detail: format!("loss {total} on example {i}"),
                    });
                }
                sums.0 += tape.scalar(b);
                sums.1 += tape.scalar(r);
                sums.2 += total;
                let g = tape.backward(t, &params.params).map_err(|e| Error::Diverged {
                    epoch,
                    detail: e.to_string(),
                })?;
                match acc.as_mut() {
                    None => acc = Some(g),
                    Some(a) => a.iter_mut().zip(g).for_each(|(a, g)| *a += &g),
                }
            }
            let mut grads = acc.expect("batches are non-empty");
            let scale = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut params.params, &grads)?;
        }
        let n = train_set.len() as f64;
        let mut entry = EpochLog {
            epoch,
            bce: sums.0 / n,
            rank: sums.1 / n,
            total: sums.2 / n,
            val_bce: None,
            val_rank: None,
            val_total: None,
        };
        let criterion = if val_set.is_empty() {
            entry.total
        } else {
            let (b, r, t) = evaluate(&params, val_set, config.margin)?;
            entry.val_bce = Some(b);
            entry.val_rank = Some(r);
            entry.val_total = Some(t);
            r
        };
        log::info!(
            "epoch {epoch}: loss {:.5} (bce {:.5}, rank {:.5}) val_rank {:?}",
            entry.total,
            entry.bce,
            entry.rank,
            entry.val_rank
        );
        log.push(entry);
        if best.as_ref().map_or(true, |(c, _, _)| criterion < *c) {
            best = Some((criterion, epoch, params.clone()));
        }
    }
    let (_, best_epoch, best) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best,
        best_epoch,
        last: params,
        log,
    })
}
