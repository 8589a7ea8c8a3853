use std::rc::Rc;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{init_affine, Matrix, ParamSet, Tape, Var};
use crate::error::{Error, Result};

/// One column block of a block input, given without materializing the
/// concatenation.
#[derive(Debug, Clone)]
pub enum Piece {
    /// Already one row per output row.
    Rows(Var),
    /// Row `i` of the input is row `index[i]` of the variable.
    Gathered(Var, Rc<Vec<usize>>),
    /// A single row repeated for every output row.
    Broadcast(Var),
}

/// Three affine layers with ReLU, dropout after each ReLU and a residual
/// connection:
///
/// ```text
/// h1 = x W1 + b1
/// y  = skip + (D(R(D(R(h1)) W2 + b2))) W3 + b3
/// ```
///
/// `skip` is `x` when input and output widths agree, otherwise the
/// projection `h1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpBlock {
    pub input: usize,
    pub width: usize,
    layers: [(usize, usize); 3],
}

impl MlpBlock {
    pub fn init(params: &mut ParamSet, name: &str, input: usize, width: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut layers = [(0, 0); 3];
        for (i, slot) in layers.iter_mut().enumerate() {
            let fan_in = if i == 0 { input } else { width };
            let (w, b) = init_affine(rng, fan_in, width);
            *slot = (
                params.push(format!("{name}.l{}.w", i + 1), w),
                params.push(format!("{name}.l{}.b", i + 1), b),
            );
        }
        MlpBlock { input, width, layers }
    }

    /// Rebuilds the block layout from parameters pushed by [`MlpBlock::init`]
    /// starting at `first`.
    pub fn from_layout(input: usize, width: usize, first: usize) -> Self {
        let mut layers = [(0, 0); 3];
        for (i, slot) in layers.iter_mut().enumerate() {
            *slot = (first + 2 * i, first + 2 * i + 1);
        }
        MlpBlock { input, width, layers }
    }

    pub fn param_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }

    fn affine(&self, tape: &mut Tape, params: &ParamSet, x: Var, layer: usize) -> Var {
        let (w, b) = self.layers[layer];
        let wv = tape.param(params, w);
        let bv = tape.param(params, b);
        let h = tape.matmul(x, wv);
        tape.add_row(h, bv)
    }

    fn activate(tape: &mut Tape, x: Var, dropout: &mut Option<(&mut ChaCha8Rng, f64)>) -> Var {
        let a = tape.relu(x);
        match dropout {
            Some((rng, p)) if *p > 0.0 => {
                let keep = 1.0 - *p;
                let shape = tape.value(a).raw_dim();
                let mask = Array2::from_shape_simple_fn(shape, || {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                tape.mask(a, mask)
            }
            _ => a,
        }
    }

    /// Records the block on `tape`. Pass `dropout` only in training mode.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        x: Var,
        mut dropout: Option<(&mut ChaCha8Rng, f64)>,
    ) -> Result<Var> {
        let cols = tape.value(x).ncols();
        if cols != self.input {
            return Err(Error::Shape(format!("MLP expects width {}, got {cols}", self.input)));
        }
        let h1 = self.affine(tape, params, x, 0);
        let a1 = Self::activate(tape, h1, &mut dropout);
        let h2 = self.affine(tape, params, a1, 1);
        let a2 = Self::activate(tape, h2, &mut dropout);
        let h3 = self.affine(tape, params, a2, 2);
        let skip = if self.input == self.width { x } else { h1 };
        Ok(tape.add(skip, h3))
    }

    /// Same as [`MlpBlock::forward`] on the column concatenation of `pieces`,
    /// with `rows` output rows. Each piece is multiplied by its slice of the
    /// first weight matrix before any gathering, so the first layer costs
    /// one product per distinct source row. Requires `input != width`.
    pub fn forward_pieces(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        pieces: &[Piece],
        rows: usize,
        mut dropout: Option<(&mut ChaCha8Rng, f64)>,
    ) -> Result<Var> {
        if self.input == self.width {
            return Err(Error::Contract("piecewise input needs a projection block".to_string()));
        }
        let (w, b) = self.layers[0];
        let wv = tape.param(params, w);
        let mut start = 0;
        let mut h1: Option<Var> = None;
        for piece in pieces {
            let (x, index) = match piece {
                Piece::Rows(x) => (*x, None),
                Piece::Gathered(x, index) => (*x, Some(index.clone())),
                Piece::Broadcast(x) => (*x, Some(Rc::new(vec![0; rows]))),
            };
            let cols = tape.value(x).ncols();
            let slice = tape.row_slice(wv, start, cols);
            start += cols;
            let mut part = tape.matmul(x, slice);
            if let Some(index) = index {
                part = tape.gather(part, index);
            }
            if tape.value(part).nrows() != rows {
                return Err(Error::Shape(format!("piece has {} rows, expected {rows}", tape.value(part).nrows())));
            }
            h1 = Some(match h1 {
                Some(acc) => tape.add(acc, part),
                None => part,
            });
        }
        if start != self.input {
            return Err(Error::Shape(format!("MLP expects width {}, got {start}", self.input)));
        }
        let h1 = h1.ok_or_else(|| Error::Shape("no input pieces".to_string()))?;
        let bv = tape.param(params, b);
        let h1 = tape.add_row(h1, bv);
        let a1 = Self::activate(tape, h1, &mut dropout);
        let h2 = self.affine(tape, params, a1, 1);
        let a2 = Self::activate(tape, h2, &mut dropout);
        let h3 = self.affine(tape, params, a2, 2);
        Ok(tape.add(h1, h3))
    }

    /// Convenience forward pass outside a larger graph.
    pub fn apply(
        &self,
        params: &ParamSet,
        x: &Matrix,
        dropout: Option<(&mut ChaCha8Rng, f64)>,
    ) -> Result<Matrix> {
        let mut tape = Tape::new();
        let xv = tape.input(x.clone());
        let y = self.forward(&mut tape, params, xv, dropout)?;
        tape.check()?;
        Ok(tape.value(y).clone())
    }
}
