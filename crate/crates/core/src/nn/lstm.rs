//! LSTM cell with gate order i, f, g, o and a recorded tape for BPTT.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Weights are stored row-major as `[4H][D + H]`, acting on the stacked `[x; h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input: usize,
    pub hidden: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LSTMState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl LSTMState {
    pub fn zeros(hidden: usize) -> Self {
        Self { hidden: vec![0.0; hidden], cell: vec![0.0; hidden] }
    }

    pub fn is_finite(&self) -> bool {
        self.hidden.iter().chain(&self.cell).all(|v| v.is_finite())
    }
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            weights: vec![0.0; 4 * hidden * (input + hidden)],
            bias: vec![0.0; 4 * hidden],
        }
    }

    /// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, forget-gate bias 1.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input, hidden);
        let a = 1.0 / (hidden as f64).sqrt();
        for w in p.weights.iter_mut() {
            *w = rng.random_range(-a..a);
        }
        for b in &mut p.bias[hidden..2 * hidden] {
            *b = 1.0;
        }
        p
    }

    pub fn width(&self) -> usize {
        self.input + self.hidden
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// Eight independent partial sums so the adds pipeline and vectorize.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for j in 0..8 {
            acc[j] += x[j] * y[j];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Writes the activated gates for the stacked input `xh` into `gates`.
fn gates_into(params: &LstmParams, xh: &[f64], gates: &mut [f64]) {
    let h = params.hidden;
    let w = params.width();
    for (r, g) in gates.iter_mut().enumerate() {
        let z = dot(&params.weights[r * w..(r + 1) * w], xh) + params.bias[r];
        *g = if (2 * h..3 * h).contains(&r) { z.tanh() } else { sigmoid(z) };
    }
}

pub fn lstm_cell_forward(x: &[f64], state: &LSTMState, params: &LstmParams) -> LSTMState {
    let h = params.hidden;
    let mut xh = Vec::with_capacity(params.width());
    xh.extend_from_slice(x);
    xh.extend_from_slice(&state.hidden);
    let mut g = vec![0.0; 4 * h];
    gates_into(params, &xh, &mut g);
    let mut next = LSTMState::zeros(h);
    for j in 0..h {
        let c = g[h + j] * state.cell[j] + g[j] * g[2 * h + j];
        next.cell[j] = c;
        next.hidden[j] = g[3 * h + j] * c.tanh();
    }
    next
}

/// Everything the backward pass needs from one unrolled run.
#[derive(Debug, Clone)]
pub(crate) struct Tape {
    pub steps: usize,
    width: usize,
    hidden: usize,
    xh: Vec<f64>,
    gates: Vec<f64>,
    /// `(steps + 1) x H`, row 0 is the initial cell state.
    cells: Vec<f64>,
    tanh_c: Vec<f64>,
    /// `(steps + 1) x H`, row 0 is the initial hidden state.
    hiddens: Vec<f64>,
}

impl Tape {
    pub fn hidden(&self, step: usize) -> &[f64] {
        &self.hiddens[(step + 1) * self.hidden..(step + 2) * self.hidden]
    }

    pub fn final_hidden(&self) -> &[f64] {
        &self.hiddens[self.steps * self.hidden..]
    }

    pub fn final_cell(&self) -> &[f64] {
        &self.cells[self.steps * self.hidden..]
    }
}

/// Runs the cell over `inputs` (each of length D) from the given state.
pub(crate) fn run<'a, I>(params: &LstmParams, inputs: I, h0: &[f64], c0: &[f64]) -> Tape
where
    I: ExactSizeIterator<Item = &'a [f64]>,
{
    let (d, h) = (params.input, params.hidden);
    let w = d + h;
    let steps = inputs.len();
    let mut tape = Tape {
        steps,
        width: w,
        hidden: h,
        xh: vec![0.0; steps * w],
        gates: vec![0.0; steps * 4 * h],
        cells: vec![0.0; (steps + 1) * h],
        tanh_c: vec![0.0; steps * h],
        hiddens: vec![0.0; (steps + 1) * h],
    };
    tape.cells[..h].copy_from_slice(c0);
    tape.hiddens[..h].copy_from_slice(h0);
    for (s, x) in inputs.enumerate() {
        let xh = &mut tape.xh[s * w..(s + 1) * w];
        xh[..d].copy_from_slice(x);
        xh[d..].copy_from_slice(&tape.hiddens[s * h..(s + 1) * h]);
        let g = &mut tape.gates[s * 4 * h..(s + 1) * 4 * h];
        gates_into(params, &tape.xh[s * w..(s + 1) * w], g);
        let g = &tape.gates[s * 4 * h..(s + 1) * 4 * h];
        for j in 0..h {
            let c = g[h + j] * tape.cells[s * h + j] + g[j] * g[2 * h + j];
            let tc = c.tanh();
            tape.cells[(s + 1) * h + j] = c;
            tape.tanh_c[s * h + j] = tc;
            tape.hiddens[(s + 1) * h + j] = g[3 * h + j] * tc;
        }
    }
    tape
}

/// BPTT through a recorded run. `dh_steps`, when given, holds an extra hidden
/// gradient per step (`steps x H`). Input gradients are summed over steps into
/// `dx_sum` when given. Returns the gradients with respect to (h0, c0).
pub(crate) fn backprop(
    params: &LstmParams,
    tape: &Tape,
    grads: &mut LstmParams,
    dh_steps: Option<&[f64]>,
    dh_final: &[f64],
    dc_final: &[f64],
    mut dx_sum: Option<&mut [f64]>,
) -> (Vec<f64>, Vec<f64>) {
    let (d, h, w) = (params.input, params.hidden, tape.width);
    let mut dh = dh_final.to_vec();
    let mut dc = dc_final.to_vec();
    let mut dz = vec![0.0; 4 * h];
    let mut dxh = vec![0.0; w];
    let first_col = if dx_sum.is_some() { 0 } else { d };
    for s in (0..tape.steps).rev() {
        if let Some(extra) = dh_steps {
            axpy(1.0, &extra[s * h..(s + 1) * h], &mut dh);
        }
        let g = &tape.gates[s * 4 * h..(s + 1) * 4 * h];
        let c_prev = &tape.cells[s * h..(s + 1) * h];
        let tc = &tape.tanh_c[s * h..(s + 1) * h];
        for j in 0..h {
            let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let dcj = dc[j] + dh[j] * o * (1.0 - tc[j] * tc[j]);
            dz[j] = dcj * gg * i * (1.0 - i);
            dz[h + j] = dcj * c_prev[j] * f * (1.0 - f);
            dz[2 * h + j] = dcj * i * (1.0 - gg * gg);
            dz[3 * h + j] = dh[j] * tc[j] * o * (1.0 - o);
            dc[j] = dcj * f;
        }
        let xh = &tape.xh[s * w..(s + 1) * w];
        dxh[first_col..].iter_mut().for_each(|v| *v = 0.0);
        for (r, &dzr) in dz.iter().enumerate() {
            if dzr == 0.0 {
                continue;
            }
            axpy(dzr, xh, &mut grads.weights[r * w..(r + 1) * w]);
            grads.bias[r] += dzr;
            axpy(dzr, &params.weights[r * w + first_col..(r + 1) * w], &mut dxh[first_col..]);
        }
        dh.copy_from_slice(&dxh[d..]);
        if let Some(sum) = dx_sum.as_deref_mut() {
            axpy(1.0, &dxh[..d], sum);
        }
    }
    (dh, dc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_cell_is_inert() {
        let p = LstmParams::zeros(2, 3);
        let out = lstm_cell_forward(&[0.3, -0.2], &LSTMState::zeros(3), &p);
        assert_eq!(out, LSTMState::zeros(3));
    }

    #[test]
    fn forget_gate_halves_cell() {
        let p = LstmParams::zeros(1, 1);
        let prior = LSTMState { hidden: vec![0.0], cell: vec![1.0] };
        let out = lstm_cell_forward(&[0.0], &prior, &p);
        assert_eq!(out.cell[0], 0.5);
        assert!((out.hidden[0] - 0.5 * 0.5f64.tanh()).abs() < 1e-15);
        assert!((out.hidden[0] - 0.23106).abs() < 1e-5);
    }

    fn scalar_oracle(x: &[f64], st: &LSTMState, p: &LstmParams) -> LSTMState {
        let (d, h) = (p.input, p.hidden);
        let mut pre = [vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]];
        for (gate, out) in pre.iter_mut().enumerate() {
            for j in 0..h {
                let row = gate * h + j;
                let mut z = p.bias[row];
                for k in 0..d {
                    z += p.weights[row * (d + h) + k] * x[k];
                }
                for k in 0..h {
                    z += p.weights[row * (d + h) + d + k] * st.hidden[k];
                }
                out[j] = z;
            }
        }
        let mut next = LSTMState::zeros(h);
        for j in 0..h {
            let i = 1.0 / (1.0 + (-pre[0][j]).exp());
            let f = 1.0 / (1.0 + (-pre[1][j]).exp());
            let g = pre[2][j].tanh();
            let o = 1.0 / (1.0 + (-pre[3][j]).exp());
            next.cell[j] = f * st.cell[j] + i * g;
            next.hidden[j] = o * next.cell[j].tanh();
        }
        next
    }

    #[test]
    fn matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let p = LstmParams::init(3, 5, &mut rng);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let st = LSTMState {
                hidden: (0..5).map(|_| rng.random_range(-1.0..1.0)).collect(),
                cell: (0..5).map(|_| rng.random_range(-2.0..2.0)).collect(),
            };
            let a = lstm_cell_forward(&x, &st, &p);
            let b = scalar_oracle(&x, &st, &p);
            for (u, v) in a.hidden.iter().chain(&a.cell).zip(b.hidden.iter().chain(&b.cell)) {
                assert!((u - v).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn tape_matches_repeated_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = LstmParams::init(2, 4, &mut rng);
        let xs: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.random(), rng.random()]).collect();
        let tape = run(&p, xs.iter().map(|v| v.as_slice()), &[0.0; 4], &[0.0; 4]);
        let mut st = LSTMState::zeros(4);
        for (s, x) in xs.iter().enumerate() {
            st = lstm_cell_forward(x, &st, &p);
            assert_eq!(tape.hidden(s), st.hidden.as_slice());
        }
        assert_eq!(tape.final_cell(), st.cell.as_slice());
    }
}
