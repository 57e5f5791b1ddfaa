//! Single-layer LSTM with an explicit backward pass.
//!
//! Gate layout follows the common `[i, f, g, o]` stacking: each weight matrix
//! has `4·hidden` rows and biases have `4·hidden` entries.

/// Borrowed view of the four LSTM tensors, row-major.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights<'a> {
    pub w_ih: &'a [f64],
    pub w_hh: &'a [f64],
    pub b_ih: &'a [f64],
    pub b_hh: &'a [f64],
    pub input: usize,
    pub hidden: usize,
}

/// Mutable gradient buffers matching [`LstmWeights`].
pub struct LstmGrads<'a> {
    pub w_ih: &'a mut [f64],
    pub w_hh: &'a mut [f64],
    pub b_ih: &'a mut [f64],
    pub b_hh: &'a mut [f64],
}

/// Activations saved by the forward pass.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    /// `h_0 ..= h_T`
    pub hidden: Vec<Vec<f64>>,
    /// `c_0 ..= c_T`
    pub cell: Vec<Vec<f64>>,
    /// Post-activation gates per step, `[i, f, g, o]` concatenated.
    pub gates: Vec<Vec<f64>>,
}

impl LstmTrace {
    pub fn output(&self) -> &[f64] {
        self.hidden.last().expect("trace holds h_0")
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn affine(out: &mut [f64], w: &[f64], x: &[f64]) {
    let cols = x.len();
    for (row, o) in out.iter_mut().enumerate() {
        let w_row = &w[row * cols..(row + 1) * cols];
        *o += w_row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Runs the cell over `inputs` from a zero initial state.
pub fn forward(weights: &LstmWeights<'_>, inputs: &[&[f64]]) -> LstmTrace {
    let n = weights.hidden;
    let mut trace = LstmTrace {
        hidden: vec![vec![0.0; n]],
        cell: vec![vec![0.0; n]],
        gates: Vec::with_capacity(inputs.len()),
    };
    for x in inputs {
        debug_assert_eq!(x.len(), weights.input);
        let mut a: Vec<f64> = weights.b_ih.iter().zip(weights.b_hh).map(|(a, b)| a + b).collect();
        affine(&mut a, weights.w_ih, x);
        affine(&mut a, weights.w_hh, trace.hidden.last().unwrap());
        for k in 0..n {
            a[k] = sigmoid(a[k]);
            a[n + k] = sigmoid(a[n + k]);
            a[2 * n + k] = a[2 * n + k].tanh();
            a[3 * n + k] = sigmoid(a[3 * n + k]);
        }
        let c_prev = trace.cell.last().unwrap();
        let c: Vec<f64> = (0..n).map(|k| a[n + k] * c_prev[k] + a[k] * a[2 * n + k]).collect();
        let h: Vec<f64> = (0..n).map(|k| a[3 * n + k] * c[k].tanh()).collect();
        trace.gates.push(a);
        trace.cell.push(c);
        trace.hidden.push(h);
    }
    trace
}

/// Backpropagates `d_output` (gradient w.r.t. the final hidden state)
/// through time. Weight gradients are accumulated into `grads`; the returned
/// vectors are the gradients w.r.t. each input.
pub fn backward(
    weights: &LstmWeights<'_>,
    inputs: &[&[f64]],
    trace: &LstmTrace,
    d_output: &[f64],
    grads: &mut LstmGrads<'_>,
) -> Vec<Vec<f64>> {
    let n = weights.hidden;
    let m = weights.input;
    let mut d_inputs = vec![vec![0.0; m]; inputs.len()];
    let mut dh = d_output.to_vec();
    let mut dc = vec![0.0; n];
    let mut da = vec![0.0; 4 * n];

    for step in (0..inputs.len()).rev() {
        let gates = &trace.gates[step];
        let c = &trace.cell[step + 1];
        let c_prev = &trace.cell[step];
        let h_prev = &trace.hidden[step];
        for k in 0..n {
            let (i, f, g, o) = (gates[k], gates[n + k], gates[2 * n + k], gates[3 * n + k]);
            let tc = c[k].tanh();
            dc[k] += dh[k] * o * (1.0 - tc * tc);
            let d_o = dh[k] * tc;
            let d_i = dc[k] * g;
            let d_g = dc[k] * i;
            let d_f = dc[k] * c_prev[k];
            da[k] = d_i * i * (1.0 - i);
            da[n + k] = d_f * f * (1.0 - f);
            da[2 * n + k] = d_g * (1.0 - g * g);
            da[3 * n + k] = d_o * o * (1.0 - o);
            dc[k] *= f;
        }
        let x = inputs[step];
        for (row, &g) in da.iter().enumerate() {
            grads.b_ih[row] += g;
            grads.b_hh[row] += g;
            let w_ih_row = &mut grads.w_ih[row * m..(row + 1) * m];
            for (w, xv) in w_ih_row.iter_mut().zip(x) {
                *w += g * xv;
            }
            let w_hh_row = &mut grads.w_hh[row * n..(row + 1) * n];
            for (w, hv) in w_hh_row.iter_mut().zip(h_prev) {
                *w += g * hv;
            }
        }
        let dx = &mut d_inputs[step];
        dh.iter_mut().for_each(|v| *v = 0.0);
        for (row, &g) in da.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (d, w) in dx.iter_mut().zip(&weights.w_ih[row * m..(row + 1) * m]) {
                *d += g * w;
            }
            for (d, w) in dh.iter_mut().zip(&weights.w_hh[row * n..(row + 1) * n]) {
                *d += g * w;
            }
        }
    }
    d_inputs
}
