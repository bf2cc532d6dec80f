//! Single LSTM cell over the tape.
//!
//! Convention: all step values are 1 x k row vectors and the gate weights
//! multiply the concatenated `[x_t, h_{t-1}]` row, so each weight matrix is
//! (input_dim + hidden) x hidden and each bias is 1 x hidden.

use rand::Rng;

use crate::tape::{Tape, Var};
use crate::tensor::{Tensor, TensorError};

/// Weight matrices and bias vectors for the forget/input/output/candidate
/// gates of one LSTM layer.
#[derive(Debug, Clone)]
pub struct LstmParams {
    pub w_f: Tensor,
    pub w_i: Tensor,
    pub w_o: Tensor,
    pub w_c: Tensor,
    pub b_f: Tensor,
    pub b_i: Tensor,
    pub b_o: Tensor,
    pub b_c: Tensor,
    input_dim: usize,
    hidden: usize,
}

impl LstmParams {
    pub fn init<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let scale = 1.0 / ((input_dim + hidden) as f64).sqrt();
        let w = |rng: &mut R| Tensor::uniform(&[input_dim + hidden, hidden], scale, rng).with_grad();
        let b = |rng: &mut R| Tensor::uniform(&[1, hidden], scale, rng).with_grad();
        LstmParams {
            w_f: w(rng),
            w_i: w(rng),
            w_o: w(rng),
            w_c: w(rng),
            b_f: b(rng),
            b_i: b(rng),
            b_o: b(rng),
            b_c: b(rng),
            input_dim,
            hidden,
        }
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        let w = || Tensor::zeros(&[input_dim + hidden, hidden]).with_grad();
        let b = || Tensor::zeros(&[1, hidden]).with_grad();
        LstmParams {
            w_f: w(),
            w_i: w(),
            w_o: w(),
            w_c: w(),
            b_f: b(),
            b_i: b(),
            b_o: b(),
            b_c: b(),
            input_dim,
            hidden,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Gate tensors in the canonical order used everywhere (checkpoints,
    /// optimizer slots, gradient checks).
    pub fn tensors(&self) -> [&Tensor; 8] {
        [&self.w_f, &self.w_i, &self.w_o, &self.w_c, &self.b_f, &self.b_i, &self.b_o, &self.b_c]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.w_f,
            &mut self.w_i,
            &mut self.w_o,
            &mut self.w_c,
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_o,
            &mut self.b_c,
        ]
    }

    pub const TENSOR_NAMES: [&'static str; 8] =
        ["w_f", "w_i", "w_o", "w_c", "b_f", "b_i", "b_o", "b_c"];

    pub fn register(&self, tape: &mut Tape) -> LstmVars {
        LstmVars {
            w_f: tape.leaf(&self.w_f),
            w_i: tape.leaf(&self.w_i),
            w_o: tape.leaf(&self.w_o),
            w_c: tape.leaf(&self.w_c),
            b_f: tape.leaf(&self.b_f),
            b_i: tape.leaf(&self.b_i),
            b_o: tape.leaf(&self.b_o),
            b_c: tape.leaf(&self.b_c),
        }
    }
}

/// Tape handles for one layer's parameters.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w_f: Var,
    pub w_i: Var,
    pub w_o: Var,
    pub w_c: Var,
    pub b_f: Var,
    pub b_i: Var,
    pub b_o: Var,
    pub b_c: Var,
}

impl LstmVars {
    pub fn from_ordered(vars: &[Var]) -> Self {
        LstmVars {
            w_f: vars[0],
            w_i: vars[1],
            w_o: vars[2],
            w_c: vars[3],
            b_f: vars[4],
            b_i: vars[5],
            b_o: vars[6],
            b_c: vars[7],
        }
    }
}

/// Hidden state and cell memory, both 1 x hidden.
#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

pub fn zero_state(tape: &mut Tape, hidden: usize) -> LstmState {
    let h = tape
        .constant(&[1, hidden], vec![0.0; hidden])
        .expect("zero state is well formed");
    let c = tape
        .constant(&[1, hidden], vec![0.0; hidden])
        .expect("zero state is well formed");
    LstmState { h, c }
}

/// Gate activations of one step, exposed for range checks.
#[derive(Debug, Clone, Copy)]
pub struct LstmGates {
    pub forget: Var,
    pub input: Var,
    pub output: Var,
    pub candidate: Var,
}

/// One LSTM step:
///   f = sigmoid(W_f [x, h_prev] + b_f)      i, o likewise
///   c_cand = tanh(W_c [x, h_prev] + b_c)
///   c = f * c_prev + i * c_cand
///   h = o * tanh(c)
pub fn lstm_cell_with_gates(
    tape: &mut Tape,
    params: &LstmVars,
    x: Var,
    prev: &LstmState,
) -> Result<(LstmState, LstmGates), TensorError> {
    let z = tape.concat(x, prev.h, 1)?;
    let gate = |tape: &mut Tape, w: Var, b: Var| -> Result<Var, TensorError> {
        let lin = tape.matmul(z, w)?;
        tape.add(lin, b)
    };
    let f_lin = gate(tape, params.w_f, params.b_f)?;
    let i_lin = gate(tape, params.w_i, params.b_i)?;
    let o_lin = gate(tape, params.w_o, params.b_o)?;
    let c_lin = gate(tape, params.w_c, params.b_c)?;
    let forget = tape.sigmoid(f_lin);
    let input = tape.sigmoid(i_lin);
    let output = tape.sigmoid(o_lin);
    let candidate = tape.tanh(c_lin);
    let keep = tape.mul(forget, prev.c)?;
    let write = tape.mul(input, candidate)?;
    let c = tape.add(keep, write)?;
    let c_act = tape.tanh(c);
    let h = tape.mul(output, c_act)?;
    Ok((LstmState { h, c }, LstmGates { forget, input, output, candidate }))
}

pub fn lstm_cell(
    tape: &mut Tape,
    params: &LstmVars,
    x: Var,
    prev: &LstmState,
) -> Result<LstmState, TensorError> {
    lstm_cell_with_gates(tape, params, x, prev).map(|(state, _)| state)
}
