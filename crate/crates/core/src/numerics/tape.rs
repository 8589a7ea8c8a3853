//! Reverse-mode differentiation over dense row-major matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters enter
//! through [`Tape::param`]; [`Tape::backward`] returns one gradient per
//! parameter of the [`ParamSet`] the forward pass read from.

use std::rc::Rc;

use ndarray::{s, Array2, Axis};

use super::{Matrix, ParamSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Input,
    Param(usize),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Relu(Var),
    Mask(Var, Rc<Matrix>),
    Scale(Var, f64),
    Concat(Vec<Var>),
    Stack(Vec<Var>),
    RowSlice(Var, usize),
    Gather(Var, Rc<Vec<usize>>),
    SegmentMean {
        x: Var,
        segment: Rc<Vec<usize>>,
        counts: Rc<Vec<usize>>,
    },
    MeanRows(Var),
    SparseRows(Rc<Vec<Vec<u32>>>, Var),
    Bce {
        logits: Var,
        rows: Rc<Vec<usize>>,
        labels: Rc<Vec<f64>>,
    },
    Rank {
        logits: Var,
        pos: Rc<Vec<usize>>,
        neg: Rc<Vec<usize>>,
        margin: f64,
    },
    Mse {
        pred: Var,
        target: Rc<Vec<f64>>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::AddRow(..) => "add_row",
            Op::Add(..) => "add",
            Op::Relu(_) => "relu",
            Op::Mask(..) => "dropout",
            Op::Scale(..) => "scale",
            Op::Concat(_) => "concat",
            Op::Stack(_) => "stack",
            Op::RowSlice(..) => "row_slice",
            Op::Gather(..) => "gather",
            Op::SegmentMean { .. } => "segment_mean",
            Op::MeanRows(_) => "mean_rows",
            Op::SparseRows(..) => "sparse_rows",
            Op::Bce { .. } => "bce",
            Op::Rank { .. } => "rank",
            Op::Mse { .. } => "mse",
        }
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy of `sigmoid(z)` against `y`, computed from
/// logits for stability.
pub fn bce_with_logits(logits: &[f64], labels: &[f64]) -> f64 {
    assert_eq!(logits.len(), labels.len());
    if logits.is_empty() {
        return 0.0;
    }
    let s: f64 = logits.iter().zip(labels).map(|(&z, &y)| softplus(z) - y * z).sum();
    s / logits.len() as f64
}

/// `-(1/|P||N|) * sum min(0, z_p - z_n - margin)`; zero without pairs.
pub fn margin_rank(pos: &[f64], neg: &[f64], margin: f64) -> f64 {
    if pos.is_empty() || neg.is_empty() {
        return 0.0;
    }
    let mut s = 0.0;
    for &p in pos {
        for &n in neg {
            s -= (p - n - margin).min(0.0);
        }
    }
    s / (pos.len() * neg.len()) as f64
}

#[derive(Default)]
pub struct Tape {
    values: Vec<Matrix>,
    ops: Vec<Op>,
    nonfinite: Option<&'static str>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        if self.nonfinite.is_none() && !value.iter().all(|x| x.is_finite()) {
            self.nonfinite = Some(op.name());
        }
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.values[v.0]
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.values[v.0][[0, 0]]
    }

    /// Fails if any recorded value was NaN or infinite.
    pub fn check(&self) -> Result<()> {
        match self.nonfinite {
            Some(op) => Err(Error::NonFinite(op.to_string())),
            None => Ok(()),
        }
    }

    pub fn input(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Input)
    }

    pub fn param(&mut self, params: &ParamSet, index: usize) -> Var {
        self.push(params.get(index).clone(), Op::Param(index))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a.0].dot(&self.values[b.0]);
        self.push(v, Op::MatMul(a, b))
    }

    /// `x + b` with the single row `b` broadcast over every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let v = &self.values[x.0] + &self.values[b.0];
        self.push(v, Op::AddRow(x, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = &self.values[a.0] + &self.values[b.0];
        self.push(v, Op::Add(a, b))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.values[x.0].mapv(|z| z.max(0.0));
        self.push(v, Op::Relu(x))
    }

    /// Elementwise product with a fixed mask (dropout).
    pub fn mask(&mut self, x: Var, mask: Matrix) -> Var {
        let v = &self.values[x.0] * &mask;
        self.push(v, Op::Mask(x, Rc::new(mask)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v = &self.values[x.0] * c;
        self.push(v, Op::Scale(x, c))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.values[p.0].view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("concat needs equal row counts");
        self.push(v, Op::Concat(parts.to_vec()))
    }

    /// Stacks matrices of equal width on top of each other.
    pub fn stack(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.values[p.0].view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("stack needs equal widths");
        self.push(v, Op::Stack(parts.to_vec()))
    }

    /// Rows `start..start + len` of `x`.
    pub fn row_slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let v = self.values[x.0].slice(s![start..start + len, ..]).to_owned();
        self.push(v, Op::RowSlice(x, start))
    }

    pub fn gather(&mut self, x: Var, rows: Rc<Vec<usize>>) -> Var {
        let v = self.values[x.0].select(Axis(0), &rows);
        self.push(v, Op::Gather(x, rows))
    }

    /// Row `s` of the result is the mean of the rows of `x` whose segment is
    /// `s`; segments without rows give zero rows.
    pub fn segment_mean(&mut self, x: Var, segment: Rc<Vec<usize>>, segments: usize) -> Var {
        let xv = &self.values[x.0];
        assert_eq!(xv.nrows(), segment.len());
        let mut out = Array2::zeros((segments, xv.ncols()));
        let mut counts = vec![0usize; segments];
        for (i, &s) in segment.iter().enumerate() {
            counts[s] += 1;
            let mut row = out.row_mut(s);
            row += &xv.row(i);
        }
        for (s, &c) in counts.iter().enumerate() {
            if c > 0 {
                let mut row = out.row_mut(s);
                row /= c as f64;
            }
        }
        self.push(
            out,
            Op::SegmentMean {
                x,
                segment,
                counts: Rc::new(counts),
            },
        )
    }

    pub fn mean_rows(&mut self, x: Var) -> Var {
        let xv = &self.values[x.0];
        let v = if xv.nrows() == 0 {
            Array2::zeros((1, xv.ncols()))
        } else {
            xv.mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0))
        };
        self.push(v, Op::MeanRows(x))
    }

    /// Row `i` is the sum of the rows of `w` listed in `rows[i]`: a product
    /// of a sparse 0/1 matrix with `w`.
    pub fn sparse_rows(&mut self, rows: Rc<Vec<Vec<u32>>>, w: Var) -> Var {
        let wv = &self.values[w.0];
        let mut out = Array2::zeros((rows.len(), wv.ncols()));
        for (i, ix) in rows.iter().enumerate() {
            let mut row = out.row_mut(i);
            for &j in ix {
                row += &wv.row(j as usize);
            }
        }
        self.push(out, Op::SparseRows(rows, w))
    }

    /// Mean BCE over the selected rows of a one-column logit matrix.
    pub fn bce(&mut self, logits: Var, rows: Rc<Vec<usize>>, labels: Rc<Vec<f64>>) -> Var {
        let z: Vec<f64> = rows.iter().map(|&r| self.values[logits.0][[r, 0]]).collect();
        let v = bce_with_logits(&z, &labels);
        self.push(Array2::from_elem((1, 1), v), Op::Bce { logits, rows, labels })
    }

    /// Pairwise hinge: positives should beat negatives by `margin`.
    pub fn rank(&mut self, logits: Var, pos: Rc<Vec<usize>>, neg: Rc<Vec<usize>>, margin: f64) -> Var {
        let col = |ix: &[usize]| -> Vec<f64> { ix.iter().map(|&r| self.values[logits.0][[r, 0]]).collect() };
        let v = margin_rank(&col(&pos), &col(&neg), margin);
        self.push(
            Array2::from_elem((1, 1), v),
            Op::Rank {
                logits,
                pos,
                neg,
                margin,
            },
        )
    }

    pub fn mse(&mut self, pred: Var, target: Rc<Vec<f64>>) -> Var {
        let p = &self.values[pred.0];
        assert_eq!(p.nrows(), target.len());
        let n = target.len().max(1) as f64;
        let v: f64 = target.iter().enumerate().map(|(i, t)| (p[[i, 0]] - t).powi(2)).sum::<f64>() / n;
        self.push(Array2::from_elem((1, 1), v), Op::Mse { pred, target })
    }

    /// Gradients of the scalar `loss` with respect to every entry of
    /// `params`; parameters the pass never read get zeros.
    pub fn backward(&self, loss: Var, params: &ParamSet) -> Result<Vec<Matrix>> {
        self.check()?;
        let mut grads: Vec<Option<Matrix>> = (0..self.values.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::ones(self.values[loss.0].raw_dim()));
        let mut out: Vec<Matrix> = params.iter().map(|(_, m)| Array2::zeros(m.raw_dim())).collect();

        fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(x) => *x += &g,
                slot => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.ops[i] {
                Op::Input => {}
                Op::Param(p) => out[*p] += &g,
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.values[b.0].t());
                    let gb = self.values[a.0].t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddRow(x, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *x, g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Relu(x) => {
                    let mut gx = g;
                    gx.zip_mut_with(&self.values[x.0], |d, &z| {
                        if z <= 0.0 {
                            *d = 0.0
                        }
                    });
                    acc(&mut grads, *x, gx);
                }
                Op::Mask(x, m) => acc(&mut grads, *x, g * &**m),
                Op::Scale(x, c) => acc(&mut grads, *x, g * *c),
                Op::Concat(parts) => {
                    let mut col = 0;
                    for p in parts {
                        let w = self.values[p.0].ncols();
                        acc(&mut grads, *p, g.slice(s![.., col..col + w]).to_owned());
                        col += w;
                    }
                }
                Op::Stack(parts) => {
                    let mut row = 0;
                    for p in parts {
                        let h = self.values[p.0].nrows();
                        acc(&mut grads, *p, g.slice(s![row..row + h, ..]).to_owned());
                        row += h;
                    }
                }
                Op::RowSlice(x, start) => {
                    let mut gx = Array2::zeros(self.values[x.0].raw_dim());
                    gx.slice_mut(s![*start..*start + g.nrows(), ..]).assign(&g);
                    acc(&mut grads, *x, gx);
                }
                Op::Gather(x, rows) => {
                    let mut gx = Array2::zeros(self.values[x.0].raw_dim());
                    for (i, &r) in rows.iter().enumerate() {
                        let mut row = gx.row_mut(r);
                        row += &g.row(i);
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::SegmentMean { x, segment, counts } => {
                    let mut gx = Array2::zeros(self.values[x.0].raw_dim());
                    for (i, &s) in segment.iter().enumerate() {
                        let mut row = gx.row_mut(i);
                        row.scaled_add(1.0 / counts[s] as f64, &g.row(s));
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::MeanRows(x) => {
                    let n = self.values[x.0].nrows();
                    let mut gx = Array2::zeros(self.values[x.0].raw_dim());
                    if n > 0 {
                        let row = g.row(0).mapv(|d| d / n as f64);
                        for mut r in gx.rows_mut() {
                            r.assign(&row);
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::SparseRows(rows, w) => {
                    let mut gw = Array2::zeros(self.values[w.0].raw_dim());
                    for (i, ix) in rows.iter().enumerate() {
                        for &j in ix {
                            let mut row = gw.row_mut(j as usize);
                            row += &g.row(i);
                        }
                    }
                    acc(&mut grads, *w, gw);
                }
                Op::Bce { logits, rows, labels } => {
                    let up = g[[0, 0]];
                    let mut gz = Array2::zeros(self.values[logits.0].raw_dim());
                    let m = rows.len() as f64;
                    for (&r, &y) in rows.iter().zip(labels.iter()) {
                        gz[[r, 0]] += up * (sigmoid(self.values[logits.0][[r, 0]]) - y) / m;
                    }
                    acc(&mut grads, *logits, gz);
                }
                Op::Rank {
                    logits,
                    pos,
                    neg,
                    margin,
                } => {
                    let up = g[[0, 0]];
                    let z = &self.values[logits.0];
                    let mut gz = Array2::zeros(z.raw_dim());
                    if !pos.is_empty() && !neg.is_empty() {
                        let w = up / (pos.len() * neg.len()) as f64;
                        for &p in pos.iter() {
                            for &n in neg.iter() {
                                if z[[p, 0]] - z[[n, 0]] - margin < 0.0 {
                                    gz[[p, 0]] -= w;
                                    gz[[n, 0]] += w;
                                }
                            }
                        }
                    }
                    acc(&mut grads, *logits, gz);
                }
                Op::Mse { pred, target } => {
                    let up = g[[0, 0]];
                    let p = &self.values[pred.0];
                    let n = target.len().max(1) as f64;
                    let mut gp = Array2::zeros(p.raw_dim());
                    for (i, t) in target.iter().enumerate() {
                        gp[[i, 0]] = up * 2.0 * (p[[i, 0]] - t) / n;
                    }
                    acc(&mut grads, *pred, gp);
                }
            }
        }
        if out.iter().any(|g| !g.iter().all(|x| x.is_finite())) {
            return Err(Error::NonFinite("gradient".to_string()));
        }
        Ok(out)
    }
}
