//! Evaluation summaries: success-rate curves, redundancy regression and
//! intermediate reuse across routes.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::molspace::MoleculeId;
use crate::planner::{IterationRecord, PlanResult, RouteTree};

/// Per-iteration records of one planning run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
}

impl RunTrace {
    pub fn from_result(r: &PlanResult) -> Self {
        RunTrace {
            records: r.trace.clone(),
        }
    }

    /// Iterations count up from 1 and node counts never decrease.
    pub fn validate(&self) -> Result<()> {
        for (i, w) in self.records.iter().enumerate() {
            if w.iteration != i + 1 {
                return Err(Error::Contract(format!("trace record {i} has iteration {}", w.iteration)));
            }
        }
        for w in self.records.windows(2) {
            if w[1].molecule_nodes < w[0].molecule_nodes || w[1].reaction_nodes < w[0].reaction_nodes {
                return Err(Error::Contract(format!("node counts decrease at iteration {}", w[1].iteration)));
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let targets = self.records.first().map_or(0, |r| r.successes.len());
        let mut header = vec![
            "iteration".to_string(),
            "expanded".to_string(),
            "reactions_added".to_string(),
            "molecule_nodes".to_string(),
            "reaction_nodes".to_string(),
        ];
        header.extend((0..targets).map(|i| format!("success_{i}")));
        out.write_record(&header).map_err(csv_err)?;
        for r in &self.records {
            let mut row = vec![
                r.iteration.to_string(),
                r.expanded.to_string(),
                r.reactions_added.to_string(),
                r.molecule_nodes.to_string(),
                r.reaction_nodes.to_string(),
            ];
            row.extend(r.successes.iter().map(|s| u8::from(*s).to_string()));
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Contract(format!("csv: {other:?}")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub limit: usize,
    pub successes: usize,
    pub targets: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub rows: Vec<CurveRow>,
    /// Mean first-success iteration with failed targets counted at the
    /// run's budget.
    pub mean_iterations_capped: f64,
    /// Mean first-success iteration over successful targets only.
    pub mean_iterations_successful: Option<f64>,
    /// Means over runs of the final graph sizes.
    pub mean_molecule_nodes: f64,
    pub mean_reaction_nodes: f64,
}

impl CurveSummary {
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Fraction of targets whose first success came within each limit.
pub fn success_curve(results: &[PlanResult], limits: &[usize]) -> Result<CurveSummary> {
    if limits.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Contract("limits must be strictly ascending".to_string()));
    }
    let firsts: Vec<(Option<usize>, usize)> = results
        .iter()
        .flat_map(|r| r.targets.iter().map(move |t| (t.first_success_iteration, r.budget)))
        .collect();
    let n = firsts.len();
    let rate = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let rows = limits
        .iter()
        .map(|&limit| {
            let successes = firsts.iter().filter(|(f, _)| f.is_some_and(|i| i <= limit)).count();
            CurveRow {
                limit,
                successes,
                targets: n,
                rate: rate(successes),
            }
        })
        .collect();
    let mean = |xs: &[f64]| if xs.is_empty() { None } else { Some(xs.iter().sum::<f64>() / xs.len() as f64) };
    let capped: Vec<f64> = firsts.iter().map(|&(f, b)| f.unwrap_or(b) as f64).collect();
    let succeeded: Vec<f64> = firsts.iter().filter_map(|&(f, _)| f.map(|i| i as f64)).collect();
    let mols: Vec<f64> = results.iter().map(|r| r.molecule_node_count as f64).collect();
    let rxns: Vec<f64> = results.iter().map(|r| r.reaction_node_count as f64).collect();
    Ok(CurveSummary {
        rows,
        mean_iterations_capped: mean(&capped).unwrap_or(0.0),
        mean_iterations_successful: mean(&succeeded),
        mean_molecule_nodes: mean(&mols).unwrap_or(0.0),
        mean_reaction_nodes: mean(&rxns).unwrap_or(0.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = slope * x + intercept`. `r_squared` is 1
/// when `y` is constant and fitted exactly.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<LinearFit> {
    if points.len() < 2 {
        return Err(Error::Contract(format!("a line needs at least 2 points, got {}", points.len())));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Contract("all x values are equal; slope is undefined".to_string()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyPoint {
    pub target: MoleculeId,
    pub expanded: usize,
    pub unique: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyReport {
    pub points: Vec<RedundancyPoint>,
    pub expanded_total: usize,
    pub unique_total: usize,
    pub fit: LinearFit,
}

impl RedundancyReport {
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for p in &self.points {
            out.serialize(p).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Expanded versus distinct expanded molecules, one point per
/// single-target run, with a least-squares line through the points.
pub fn redundancy_study(runs: &[PlanResult]) -> Result<RedundancyReport> {
    let mut points = Vec::with_capacity(runs.len());
    for r in runs {
        let [t] = r.targets.as_slice() else {
            return Err(Error::Contract("redundancy points need single-target runs".to_string()));
        };
        points.push(RedundancyPoint {
            target: t.molecule.clone(),
            expanded: r.iterations,
            unique: r.unique_expanded(),
        });
    }
    redundancy_from_points(points)
}

pub fn redundancy_from_points(points: Vec<RedundancyPoint>) -> Result<RedundancyReport> {
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.expanded as f64, p.unique as f64)).collect();
    let fit = linear_fit(&xy)?;
    Ok(RedundancyReport {
        expanded_total: points.iter().map(|p| p.expanded).sum(),
        unique_total: points.iter().map(|p| p.unique).sum(),
        points,
        fit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReuseHistogram {
    /// Number of routes containing each intermediate.
    pub counts: BTreeMap<MoleculeId, usize>,
    /// Mean of `counts`; 0 without intermediates.
    pub mean: f64,
}

impl ReuseHistogram {
    /// The `k` most frequent intermediates, ties by key.
    pub fn top(&self, k: usize) -> Vec<(MoleculeId, usize)> {
        let mut v: Vec<(MoleculeId, usize)> = self.counts.iter().map(|(m, &c)| (m.clone(), c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v.truncate(k);
        v
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["molecule", "routes"]).map_err(csv_err)?;
        for (m, c) in self.top(self.counts.len()) {
            out.write_record([m.as_str(), &c.to_string()]).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Counts, for every intermediate (internal, non-root molecule), how many
/// routes contain it.
pub fn reuse_histogram(routes: &[RouteTree]) -> ReuseHistogram {
    let mut counts: BTreeMap<MoleculeId, usize> = BTreeMap::new();
    for r in routes {
        for m in r.intermediates() {
            *counts.entry(m).or_default() += 1;
        }
    }
    let mean = if counts.is_empty() {
        0.0
    } else {
        counts.values().sum::<usize>() as f64 / counts.len() as f64
    };
    ReuseHistogram { counts, mean }
}

/// Machine-readable evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub curve: CurveSummary,
    pub mean_route_length: Option<f64>,
    pub mean_route_cost: Option<f64>,
    pub reuse_mean: f64,
    pub top_intermediates: Vec<(MoleculeId, usize)>,
}

pub fn evaluate(results: &[PlanResult], limits: &[usize], top_k: usize) -> Result<EvalSummary> {
    let curve = success_curve(results, limits)?;
    let targets: Vec<_> = results.iter().flat_map(|r| &r.targets).collect();
    let lengths: Vec<f64> = targets.iter().filter_map(|t| t.route_length.map(|l| l as f64)).collect();
    let costs: Vec<f64> = targets.iter().filter_map(|t| t.route_cost).collect();
    let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let routes: Vec<RouteTree> = targets.iter().filter_map(|t| t.route.clone()).collect();
    let reuse = reuse_histogram(&routes);
    Ok(EvalSummary {
        curve,
        mean_route_length: mean(&lengths),
        mean_route_cost: mean(&costs),
        reuse_mean: reuse.mean,
        top_intermediates: reuse.top(top_k),
    })
}
