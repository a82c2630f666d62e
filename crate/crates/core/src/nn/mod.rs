//! Network building blocks: dense layers, a vanilla RNN cell, a GRU cell and
//! the Q-policy (GRU + MLP head). Forward passes are pure; training goes
//! through [`tape::Tape`].

pub mod adam;
pub mod batch;
pub mod tape;

use crate::error::{Error, Result};
use crate::tensor::{add, hadamard, Matrix};
use rand::Rng;

use tape::{Tape, Var};

/// Elementwise activation functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply_scalar(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    pub fn apply(self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.apply_scalar(x)).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Checkpoint(format!("unknown activation {other:?}"))),
        }
    }
}

/// Numerically stable logistic sigmoid.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimMismatch {
            context,
            expected,
            actual,
        })
    }
}

// ---------------------------------------------------------------------------
// Vanilla RNN cell
// ---------------------------------------------------------------------------

/// h' = act(W_x x + W_h h + b_h).
#[derive(Debug, Clone, PartialEq)]
pub struct VanillaRnnCell {
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub b_h: Vec<f64>,
    pub activation: Activation,
}

impl VanillaRnnCell {
    pub fn new(input_dim: usize, hidden_dim: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        VanillaRnnCell {
            w_x: Matrix::uniform_fan_in(hidden_dim, input_dim, rng),
            w_h: Matrix::uniform_fan_in(hidden_dim, hidden_dim, rng),
            b_h: vec![0.0; hidden_dim],
            activation,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_h.rows
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.cols
    }

    pub fn step(&self, h_prev: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        check_dim("rnn_step hidden", self.w_h.cols, h_prev.len())?;
        check_dim("rnn_step input", self.w_x.cols, x.len())?;
        let pre = add(&add(&self.w_x.matvec(x)?, &self.w_h.matvec(h_prev)?), &self.b_h);
        Ok(self.activation.apply(&pre))
    }
}

// ---------------------------------------------------------------------------
// GRU cell
// ---------------------------------------------------------------------------

/// One gate's parameters: input weights, recurrent weights, bias.
#[derive(Debug, Clone, PartialEq)]
pub struct GateBlock {
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub b: Vec<f64>,
}

impl GateBlock {
    fn new(input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Self {
        GateBlock {
            w_x: Matrix::uniform_fan_in(hidden_dim, input_dim, rng),
            w_h: Matrix::uniform_fan_in(hidden_dim, hidden_dim, rng),
            b: vec![0.0; hidden_dim],
        }
    }

    /// W_x x + W_h h + b
    fn pre(&self, h: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        Ok(add(&add(&self.w_x.matvec(x)?, &self.w_h.matvec(h)?), &self.b))
    }
}

/// Gated recurrent unit:
///   z  = sigmoid(update.pre)
///   r  = sigmoid(reset.pre)
///   hc = tanh(W_c x + U_c (r .* h) + b_c)
///   h' = (1 - z) .* h + z .* hc
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub update: GateBlock,
    pub reset: GateBlock,
    pub candidate: GateBlock,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GruCell {
    pub fn new(input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Self {
        GruCell {
            update: GateBlock::new(input_dim, hidden_dim, rng),
            reset: GateBlock::new(input_dim, hidden_dim, rng),
            candidate: GateBlock::new(input_dim, hidden_dim, rng),
            input_dim,
            hidden_dim,
        }
    }

    pub fn step(&self, h_prev: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        check_dim("gru_step hidden", self.hidden_dim, h_prev.len())?;
        check_dim("gru_step input", self.input_dim, x.len())?;
        let z = Activation::Sigmoid.apply(&self.update.pre(h_prev, x)?);
        let r = Activation::Sigmoid.apply(&self.reset.pre(h_prev, x)?);
        let gated = hadamard(&r, h_prev);
        let hc = Activation::Tanh.apply(&self.candidate.pre(&gated, x)?);
        let mut h = vec![0.0; self.hidden_dim];
        for i in 0..self.hidden_dim {
            h[i] = (1.0 - z[i]) * h_prev[i] + z[i] * hc[i];
        }
        Ok(h)
    }

    pub fn zero_hidden(&self) -> Vec<f64> {
        vec![0.0; self.hidden_dim]
    }
}

// ---------------------------------------------------------------------------
// MLP
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub activation: Activation,
}

/// Fully connected stack; the last layer's activation is whatever the caller
/// asked for (identity for Q-heads, sigmoid for the feasibility classifier).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    pub fn new(
        dims: &[usize],
        hidden_activation: Activation,
        final_activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(dims.len() >= 2, "mlp needs at least input and output dims");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for i in 0..dims.len() - 1 {
            let act = if i + 2 == dims.len() {
                final_activation
            } else {
                hidden_activation
            };
            layers.push(Layer {
                w: Matrix::uniform_fan_in(dims[i + 1], dims[i], rng),
                b: vec![0.0; dims[i + 1]],
                activation: act,
            });
        }
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.rows
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("mlp input", self.input_dim(), x.len())?;
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let pre = add(&layer.w.matvec(&cur)?, &layer.b);
            cur = layer.activation.apply(&pre);
        }
        Ok(cur)
    }
}

// ---------------------------------------------------------------------------
// Policy = GRU + Q-head
// ---------------------------------------------------------------------------

/// Recurrent Q-policy: the GRU digests one observation, the head maps the new
/// hidden state to one Q-value per action.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub gru: GruCell,
    pub head: Mlp,
}

impl Policy {
    /// Fresh policy: obs -> GRU(hidden) -> [hidden -> 32 -> 32 -> n_actions].
    pub fn new(
        obs_dim: usize,
        hidden_dim: usize,
        mlp_hidden: &[usize],
        n_actions: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut dims = vec![hidden_dim];
        dims.extend_from_slice(mlp_hidden);
        dims.push(n_actions);
        Policy {
            gru: GruCell::new(obs_dim, hidden_dim, rng),
            head: Mlp::new(&dims, Activation::Relu, Activation::Identity, rng),
        }
    }

    /// One decision: feed the current observation, return (q_values, h_next).
    pub fn forward(&self, h_prev: &[f64], obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let h_next = self.gru.step(h_prev, obs)?;
        let q = self.head.forward(&h_next)?;
        Ok((q, h_next))
    }

    pub fn hidden_dim(&self) -> usize {
        self.gru.hidden_dim
    }

    pub fn n_actions(&self) -> usize {
        self.head.output_dim()
    }

    /// Hidden states seen *before* each decision when driving the GRU over an
    /// observation sequence: h_pre[0] = 0, h_pre[t+1] = gru(h_pre[t], obs[t]).
    pub fn prefix_hiddens(&self, observations: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let mut h = self.gru.zero_hidden();
        let mut out = Vec::with_capacity(observations.len() + 1);
        out.push(h.clone());
        for obs in observations {
            h = self.gru.step(&h, obs)?;
            out.push(h.clone());
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Parameter traversal (stable order: gru update/reset/candidate x (w_x, w_h, b),
// then head layers in order x (w, b))
// ---------------------------------------------------------------------------

macro_rules! gate_slices {
    ($g:expr) => {
        [&$g.w_x.data[..], &$g.w_h.data[..], &$g.b[..]]
    };
}

impl GruCell {
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::with_capacity(9);
        v.extend(gate_slices!(self.update));
        v.extend(gate_slices!(self.reset));
        v.extend(gate_slices!(self.candidate));
        v
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let GruCell {
            update,
            reset,
            candidate,
            ..
        } = self;
        let mut v: Vec<&mut [f64]> = Vec::with_capacity(9);
        for g in [update, reset, candidate] {
            v.push(&mut g.w_x.data);
            v.push(&mut g.w_h.data);
            v.push(&mut g.b);
        }
        v
    }
}

impl Mlp {
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::with_capacity(self.layers.len() * 2);
        for layer in &self.layers {
            v.push(&layer.w.data);
            v.push(&layer.b);
        }
        v
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::with_capacity(self.layers.len() * 2);
        for layer in &mut self.layers {
            v.push(&mut layer.w.data);
            v.push(&mut layer.b);
        }
        v
    }
}

impl Policy {
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = self.gru.param_slices();
        v.extend(self.head.param_slices());
        v
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let Policy { gru, head } = self;
        let mut v = gru.param_slices_mut();
        v.extend(head.param_slices_mut());
        v
    }
}

// ---------------------------------------------------------------------------
// Traced forward passes (build tape nodes; values identical to the pure path)
// ---------------------------------------------------------------------------

/// Tape variables for one gate's parameters.
pub struct GateVars {
    pub w_x: Var,
    pub w_h: Var,
    pub b: Var,
}

pub struct GruVars {
    pub update: GateVars,
    pub reset: GateVars,
    pub candidate: GateVars,
}

pub struct MlpVars {
    pub layers: Vec<(Var, Var)>,
}

pub struct PolicyVars {
    pub gru: GruVars,
    pub head: MlpVars,
}

impl GruCell {
    /// Register this cell's parameters on the tape. `base` is the first
    /// parameter id; the cell occupies ids `base..base + 9` in traversal order.
    pub fn bind(&self, tape: &mut Tape, base: usize) -> GruVars {
        let mut next = base;
        let mut bind_gate = |g: &GateBlock, tape: &mut Tape| {
            let vars = GateVars {
                w_x: tape.param(next, &g.w_x.data),
                w_h: tape.param(next + 1, &g.w_h.data),
                b: tape.param(next + 2, &g.b),
            };
            next += 3;
            vars
        };
        GruVars {
            update: bind_gate(&self.update, tape),
            reset: bind_gate(&self.reset, tape),
            candidate: bind_gate(&self.candidate, tape),
        }
    }

    fn gate_pre_traced(
        &self,
        tape: &mut Tape,
        vars: &GateVars,
        g: &GateBlock,
        h: Var,
        x: Var,
    ) -> Var {
        let wx = tape.matvec(vars.w_x, g.w_x.rows, g.w_x.cols, x);
        let wh = tape.matvec(vars.w_h, g.w_h.rows, g.w_h.cols, h);
        let s = tape.add(wx, wh);
        tape.add(s, vars.b)
    }

    pub fn step_traced(&self, tape: &mut Tape, vars: &GruVars, h: Var, x: Var) -> Var {
        let zp = self.gate_pre_traced(tape, &vars.update, &self.update, h, x);
        let z = tape.activation(zp, Activation::Sigmoid);
        let rp = self.gate_pre_traced(tape, &vars.reset, &self.reset, h, x);
        let r = tape.activation(rp, Activation::Sigmoid);
        let gated = tape.hadamard(r, h);
        let cp = self.gate_pre_traced(tape, &vars.candidate, &self.candidate, gated, x);
        let hc = tape.activation(cp, Activation::Tanh);
        let keep = tape.one_minus(z);
        let kept = tape.hadamard(keep, h);
        let new = tape.hadamard(z, hc);
        tape.add(kept, new)
    }
}

impl Mlp {
    /// Ids `base..base + 2 * layers`.
    pub fn bind(&self, tape: &mut Tape, base: usize) -> MlpVars {
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, layer)| {
                (
                    tape.param(base + 2 * i, &layer.w.data),
                    tape.param(base + 2 * i + 1, &layer.b),
                )
            })
            .collect();
        MlpVars { layers }
    }

    pub fn forward_traced(&self, tape: &mut Tape, vars: &MlpVars, x: Var) -> Var {
        let mut cur = x;
        for (layer, (w, b)) in self.layers.iter().zip(&vars.layers) {
            let lin = tape.matvec(*w, layer.w.rows, layer.w.cols, cur);
            let pre = tape.add(lin, *b);
            cur = tape.activation(pre, layer.activation);
        }
        cur
    }
}

impl Policy {
    pub fn param_count(&self) -> usize {
        9 + 2 * self.head.layers.len()
    }

    pub fn bind(&self, tape: &mut Tape) -> PolicyVars {
        PolicyVars {
            gru: self.gru.bind(tape, 0),
            head: self.head.bind(tape, 9),
        }
    }

    /// Traced analogue of [`Policy::forward`]; returns (q_values, h_next).
    pub fn forward_traced(
        &self,
        tape: &mut Tape,
        vars: &PolicyVars,
        h: Var,
        obs: Var,
    ) -> (Var, Var) {
        let h_next = self.gru.step_traced(tape, &vars.gru, h, obs);
        let q = self.head.forward_traced(tape, &vars.head, h_next);
        (q, h_next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_cell(w: f64, activation: Activation) -> VanillaRnnCell {
        VanillaRnnCell {
            w_x: Matrix::from_rows(vec![vec![w]]),
            w_h: Matrix::from_rows(vec![vec![w]]),
            b_h: vec![0.0],
            activation,
        }
    }

    #[test]
    fn rnn_step_scalar_identity_weights() {
        // unit weights, zero bias, relu: h = relu(0 + 1) = 1
        let cell = scalar_cell(1.0, Activation::Relu);
        assert_eq!(cell.step(&[0.0], &[1.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn rnn_step_zero_cell_maps_everything_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut cell = VanillaRnnCell::new(3, 4, Activation::Relu, &mut rng);
        cell.w_x = Matrix::zeros(4, 3);
        cell.w_h = Matrix::zeros(4, 4);
        cell.b_h = vec![0.0; 4];
        let h = cell.step(&[0.3, -0.9, 0.5, 0.1], &[2.0, -1.0, 0.25]).unwrap();
        assert_eq!(h, vec![0.0; 4]);
    }

    #[test]
    fn rnn_step_matches_straight_line_formula() {
        // independent straight-line evaluation of act(Wx x + Wh h + b)
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let cell = VanillaRnnCell::new(3, 4, Activation::Tanh, &mut rng);
        let h_prev = [0.1, -0.2, 0.3, -0.4];
        let x = [0.5, 0.6, -0.7];
        let got = cell.step(&h_prev, &x).unwrap();
        for i in 0..4 {
            let mut pre = cell.b_h[i];
            for j in 0..3 {
                pre += cell.w_x.get(i, j) * x[j];
            }
            for j in 0..4 {
                pre += cell.w_h.get(i, j) * h_prev[j];
            }
            let expect = pre.tanh();
            assert!((got[i] - expect).abs() < 1e-12, "component {i}");
        }
    }

    #[test]
    fn rnn_step_rejects_dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cell = VanillaRnnCell::new(3, 4, Activation::Relu, &mut rng);
        assert!(cell.step(&[0.0; 4], &[0.0; 2]).is_err());
        assert!(cell.step(&[0.0; 3], &[0.0; 3]).is_err());
    }

    fn zero_gru(input_dim: usize, hidden_dim: usize) -> GruCell {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut cell = GruCell::new(input_dim, hidden_dim, &mut rng);
        for s in cell.param_slices_mut() {
            s.fill(0.0);
        }
        cell
    }

    #[test]
    fn gru_step_zero_cell_fixes_origin() {
        // z = 0.5, candidate = 0 => h' = 0.5 * 0 + 0.5 * 0 = 0
        let cell = zero_gru(2, 3);
        let h = cell.step(&[0.0; 3], &[0.4, -0.4]).unwrap();
        assert_eq!(h, vec![0.0; 3]);
    }

    #[test]
    fn gru_step_saturated_update_bias_closes_gate() {
        let mut cell = zero_gru(2, 3);
        cell.update.b.fill(-50.0);
        let h_prev = [0.0; 3];
        let h = cell.step(&h_prev, &[1.0, -2.0]).unwrap();
        for (a, b) in h.iter().zip(h_prev.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gru_step_matches_straight_line_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let cell = GruCell::new(2, 4, &mut rng);
        let h_prev = [0.3, -0.5, 0.9, -0.1];
        let x = [1.5, -0.25];
        let got = cell.step(&h_prev, &x).unwrap();

        // independent evaluation, no shared helpers
        let gate = |g: &GateBlock, hin: &[f64]| -> Vec<f64> {
            (0..4)
                .map(|i| {
                    let mut v = g.b[i];
                    for j in 0..2 {
                        v += g.w_x.get(i, j) * x[j];
                    }
                    for j in 0..4 {
                        v += g.w_h.get(i, j) * hin[j];
                    }
                    v
                })
                .collect()
        };
        let z: Vec<f64> = gate(&cell.update, &h_prev)
            .iter()
            .map(|&v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        let r: Vec<f64> = gate(&cell.reset, &h_prev)
            .iter()
            .map(|&v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        let rh: Vec<f64> = (0..4).map(|i| r[i] * h_prev[i]).collect();
        let hc: Vec<f64> = gate(&cell.candidate, &rh).iter().map(|v| v.tanh()).collect();
        for i in 0..4 {
            let expect = (1.0 - z[i]) * h_prev[i] + z[i] * hc[i];
            assert!((got[i] - expect).abs() < 1e-12, "component {i}");
        }
    }

    #[test]
    fn gru_output_stays_in_unit_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..10_000 {
            let cell = if trial % 100 == 0 {
                GruCell::new(2, 3, &mut rng)
            } else {
                // reuse dims, fresh params every 100 trials would be slow; vary inputs
                GruCell::new(2, 3, &mut rng)
            };
            let h_prev: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-10.0..=10.0)).collect();
            let h = cell.step(&h_prev, &x).unwrap();
            for v in h {
                assert!((-1.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn forward_policy_zero_weights_yields_final_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut policy = Policy::new(4, 3, &[8], 2, &mut rng);
        for s in policy.param_slices_mut() {
            s.fill(0.0);
        }
        let n = policy.head.layers.len();
        policy.head.layers[n - 1].b = vec![0.7, -0.3];
        let (q, h) = policy.forward(&[0.0; 3], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(h, vec![0.0; 3]);
        assert_eq!(q, vec![0.7, -0.3]);
    }

    #[test]
    fn forward_policy_is_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let policy = Policy::new(4, 3, &[8, 8], 4, &mut rng);
        let h = [0.2, -0.6, 0.9];
        let obs = [0.0, 1.0, 0.0, -1.0];
        let a = policy.forward(&h, &obs).unwrap();
        let b = policy.forward(&h, &obs).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn head_is_affine_in_hidden_when_linear() {
        // pure-linear head: f(a h1 + (1-a) h2) = a f(h1) + (1-a) f(h2)
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let head = Mlp::new(&[3, 2], Activation::Identity, Activation::Identity, &mut rng);
        let h1 = [0.3, -0.7, 0.2];
        let h2 = [-0.5, 0.1, 0.8];
        for &alpha in &[0.0, 0.25, 0.5, 0.9, 1.0] {
            let mix: Vec<f64> = h1
                .iter()
                .zip(&h2)
                .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
                .collect();
            let fm = head.forward(&mix).unwrap();
            let f1 = head.forward(&h1).unwrap();
            let f2 = head.forward(&h2).unwrap();
            for i in 0..2 {
                let expect = alpha * f1[i] + (1.0 - alpha) * f2[i];
                assert!((fm[i] - expect).abs() < 1e-12);
            }
        }
    }
}
