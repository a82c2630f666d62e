//! Reverse-mode differentiation over a recorded forward pass.
//!
//! The tape stores one node per primitive with its cached value. A training
//! step builds a fresh tape, runs the traced forward pass to a scalar loss,
//! then calls [`Tape::backward`] once to get gradients for every bound
//! parameter. Values computed on the tape are bit-identical to the pure
//! forward path because both use the same primitive order.

use crate::error::{Error, Result};
use crate::nn::{sigmoid, Activation};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param,
    MatVec { w: usize, x: usize, rows: usize, cols: usize },
    Add { a: usize, b: usize },
    Hadamard { a: usize, b: usize },
    OneMinus { x: usize },
    Act { x: usize, kind: Activation },
    Select { x: usize, index: usize },
    Scale { x: usize, c: f64 },
    SquaredError { x: usize, target: f64 },
    BceWithLogit { x: usize, target: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Vec<f64>,
}

/// Gradients accumulated per parameter id. Parameters the loss never touched
/// keep their zero-filled entries.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    /// Assemble from per-parameter arrays already in traversal order.
    pub fn from_parts(grads: Vec<Vec<f64>>) -> Self {
        Gradients { grads }
    }

    pub fn get(&self, param_id: usize) -> &[f64] {
        &self.grads[param_id]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Elementwise sum with another gradient set of identical layout.
    pub fn accumulate(&mut self, other: &Gradients) {
        assert_eq!(self.grads.len(), other.grads.len());
        for (mine, theirs) in self.grads.iter_mut().zip(&other.grads) {
            for (m, t) in mine.iter_mut().zip(theirs) {
                *m += t;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for g in &mut self.grads {
            for v in g.iter_mut() {
                *v *= c;
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.grads.iter().map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    /// (param id, node index, length) for every bound parameter.
    params: Vec<(usize, usize, usize)>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].value.len(), 1);
        self.nodes[v.0].value[0]
    }

    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.push(Op::Constant, value)
    }

    /// Bind a parameter array under a caller-chosen id. Bind each id at most
    /// once per tape and reference the returned `Var` everywhere the
    /// parameter is used, so BPTT accumulates across time steps.
    pub fn param(&mut self, id: usize, values: &[f64]) -> Var {
        let var = self.push(Op::Param, values.to_vec());
        self.params.push((id, var.0, values.len()));
        var
    }

    /// y = W x where `w` holds an r x c matrix flattened row-major.
    pub fn matvec(&mut self, w: Var, rows: usize, cols: usize, x: Var) -> Var {
        debug_assert_eq!(self.nodes[w.0].value.len(), rows * cols);
        debug_assert_eq!(self.nodes[x.0].value.len(), cols);
        let mut y = vec![0.0; rows];
        {
            let wd = &self.nodes[w.0].value;
            let xd = &self.nodes[x.0].value;
            for (r, out) in y.iter_mut().enumerate() {
                let row = &wd[r * cols..(r + 1) * cols];
                let mut acc = 0.0;
                for (wv, xv) in row.iter().zip(xd) {
                    acc += wv * xv;
                }
                *out = acc;
            }
        }
        self.push(
            Op::MatVec {
                w: w.0,
                x: x.0,
                rows,
                cols,
            },
            y,
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x + y)
            .collect();
        self.push(Op::Add { a: a.0, b: b.0 }, v)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Var {
        let v: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x * y)
            .collect();
        self.push(Op::Hadamard { a: a.0, b: b.0 }, v)
    }

    pub fn one_minus(&mut self, x: Var) -> Var {
        let v: Vec<f64> = self.nodes[x.0].value.iter().map(|a| 1.0 - a).collect();
        self.push(Op::OneMinus { x: x.0 }, v)
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let v = kind.apply(&self.nodes[x.0].value);
        self.push(Op::Act { x: x.0, kind }, v)
    }

    pub fn select(&mut self, x: Var, index: usize) -> Var {
        let v = vec![self.nodes[x.0].value[index]];
        self.push(Op::Select { x: x.0, index }, v)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v: Vec<f64> = self.nodes[x.0].value.iter().map(|a| a * c).collect();
        self.push(Op::Scale { x: x.0, c }, v)
    }

    /// Scalar (x - target)^2.
    pub fn squared_error(&mut self, x: Var, target: f64) -> Var {
        debug_assert_eq!(self.nodes[x.0].value.len(), 1);
        let d = self.nodes[x.0].value[0] - target;
        self.push(Op::SquaredError { x: x.0, target }, vec![d * d])
    }

    /// Binary cross-entropy taking the *logit* (pre-sigmoid) scalar, computed
    /// in the standard overflow-safe form.
    pub fn bce_with_logit(&mut self, x: Var, target: f64) -> Var {
        debug_assert_eq!(self.nodes[x.0].value.len(), 1);
        let z = self.nodes[x.0].value[0];
        let loss = z.max(0.0) - z * target + (-z.abs()).exp().ln_1p();
        self.push(Op::BceWithLogit { x: x.0, target }, vec![loss])
    }

    /// Reverse sweep from the scalar `root`, seeded with `loss_seed`.
    /// `n_params` fixes the gradient layout; ids the tape never saw come back
    /// as empty slices intentionally sized from the bound set, so callers
    /// should bind every trainable parameter before the forward pass.
    pub fn backward(&mut self, root: Var, loss_seed: f64, n_params: usize) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        self.consumed = true;
        debug_assert_eq!(
            self.nodes[root.0].value.len(),
            1,
            "backward root must be scalar"
        );

        let mut adjoints: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        adjoints[root.0][0] = loss_seed;

        for i in (0..=root.0).rev() {
            let adj = std::mem::take(&mut adjoints[i]);
            if adj.iter().all(|&a| a == 0.0) {
                adjoints[i] = adj;
                continue;
            }
            match self.nodes[i].op {
                Op::Constant | Op::Param => {}
                Op::MatVec { w, x, rows, cols } => {
                    // dL/dx = W^T adj ; dL/dW = adj (outer) x
                    for r in 0..rows {
                        let a = adj[r];
                        if a == 0.0 {
                            continue;
                        }
                        for c in 0..cols {
                            let wv = self.nodes[w].value[r * cols + c];
                            let xv = self.nodes[x].value[c];
                            adjoints[x][c] += wv * a;
                            adjoints[w][r * cols + c] += xv * a;
                        }
                    }
                }
                Op::Add { a, b } => {
                    for (k, v) in adj.iter().enumerate() {
                        adjoints[a][k] += v;
                        adjoints[b][k] += v;
                    }
                }
                Op::Hadamard { a, b } => {
                    for (k, v) in adj.iter().enumerate() {
                        adjoints[a][k] += v * self.nodes[b].value[k];
                        adjoints[b][k] += v * self.nodes[a].value[k];
                    }
                }
                Op::OneMinus { x } => {
                    for (k, v) in adj.iter().enumerate() {
                        adjoints[x][k] -= v;
                    }
                }
                Op::Act { x, kind } => {
                    for (k, v) in adj.iter().enumerate() {
                        let d = match kind {
                            Activation::Relu => {
                                if self.nodes[x].value[k] > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            Activation::Tanh => {
                                let y = self.nodes[i].value[k];
                                1.0 - y * y
                            }
                            Activation::Sigmoid => {
                                let y = self.nodes[i].value[k];
                                y * (1.0 - y)
                            }
                            Activation::Identity => 1.0,
                        };
                        adjoints[x][k] += v * d;
                    }
                }
                Op::Select { x, index } => {
                    adjoints[x][index] += adj[0];
                }
                Op::Scale { x, c } => {
                    for (k, v) in adj.iter().enumerate() {
                        adjoints[x][k] += v * c;
                    }
                }
                Op::SquaredError { x, target } => {
                    adjoints[x][0] += adj[0] * 2.0 * (self.nodes[x].value[0] - target);
                }
                Op::BceWithLogit { x, target } => {
                    adjoints[x][0] += adj[0] * (sigmoid(self.nodes[x].value[0]) - target);
                }
            }
            adjoints[i] = adj;
        }

        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); n_params];
        for &(id, node, len) in &self.params {
            if grads[id].is_empty() {
                grads[id] = vec![0.0; len];
            }
            for (g, a) in grads[id].iter_mut().zip(&adjoints[node]) {
                *g += a;
            }
        }
        // ids never bound on this tape still deserve a well-typed zero entry
        for g in grads.iter_mut() {
            if g.is_empty() {
                g.push(0.0);
            }
        }
        Ok(Gradients { grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{GruCell, Mlp, Policy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_gradient() {
        // loss = w . x with x = 2 => dloss/dw = 2
        let mut tape = Tape::new();
        let w = tape.param(0, &[3.0]);
        let x = tape.constant(vec![2.0]);
        let y = tape.hadamard(w, x);
        let grads = tape.backward(y, 1.0, 1).unwrap();
        assert_eq!(grads.get(0), &[2.0]);
    }

    #[test]
    fn tape_reuse_is_rejected_and_replay_is_deterministic() {
        let mut tape = Tape::new();
        let w = tape.param(0, &[1.5]);
        let x = tape.constant(vec![-0.5]);
        let y = tape.hadamard(w, x);
        let loss = tape.squared_error(y, 0.25);

        let mut replay = tape.clone();
        let g1 = tape.backward(loss, 1.0, 1).unwrap();
        let g2 = replay.backward(loss, 1.0, 1).unwrap();
        assert_eq!(g1.get(0), g2.get(0));

        assert!(matches!(
            tape.backward(loss, 1.0, 1),
            Err(Error::TapeConsumed)
        ));
    }

    #[test]
    fn untouched_parameters_get_zero_gradient() {
        let mut tape = Tape::new();
        let w = tape.param(0, &[2.0]);
        let _unused = tape.param(1, &[5.0, 6.0]);
        let x = tape.constant(vec![1.0]);
        let y = tape.hadamard(w, x);
        let grads = tape.backward(y, 1.0, 2).unwrap();
        assert_eq!(grads.get(0), &[1.0]);
        assert!(grads.get(1).iter().all(|&g| g == 0.0));
    }

    /// Central finite differences on a scalar loss as a function of one
    /// parameter coordinate; everything else held fixed.
    fn finite_difference(mut eval: impl FnMut(f64) -> f64, at: f64, step: f64) -> f64 {
        (eval(at + step) - eval(at - step)) / (2.0 * step)
    }

    fn policy_loss(policy: &Policy, h: &[f64], obs: &[f64], action: usize, target: f64) -> f64 {
        let (q, _) = policy.forward(h, obs).unwrap();
        let d = q[action] - target;
        d * d
    }

    #[test]
    fn gru_plus_head_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let policy = Policy::new(3, 4, &[6], 2, &mut rng);
        let h0 = [0.1, -0.3, 0.2, 0.5];
        let obs = [0.7, -0.2, 0.4];
        let action = 1;
        let target = 0.35;

        let mut tape = Tape::new();
        let vars = policy.bind(&mut tape);
        let hv = tape.constant(h0.to_vec());
        let ov = tape.constant(obs.to_vec());
        let (q, _) = policy.forward_traced(&mut tape, &vars, hv, ov);
        let qa = tape.select(q, action);
        let loss = tape.squared_error(qa, target);
        let grads = tape.backward(loss, 1.0, policy.param_count()).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut checked = 0;
        while checked < 100 {
            let pid = rng.random_range(0..policy.param_count());
            let slices = policy.param_slices();
            let len = slices[pid].len();
            let idx = rng.random_range(0..len);
            let base = slices[pid][idx];
            drop(slices);

            let numeric = finite_difference(
                |v| {
                    let mut p = policy.clone();
                    p.param_slices_mut()[pid][idx] = v;
                    policy_loss(&p, &h0, &obs, action, target)
                },
                base,
                1e-5,
            );
            let analytic = grads.get(pid)[idx];
            let denom = numeric.abs().max(analytic.abs()).max(1e-6);
            assert!(
                (numeric - analytic).abs() / denom < 1e-4,
                "param {pid}[{idx}]: fd {numeric} vs tape {analytic}"
            );
            checked += 1;
        }
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mlp = Mlp::new(
            &[3, 5, 1],
            crate::nn::Activation::Relu,
            crate::nn::Activation::Identity,
            &mut rng,
        );
        let x = [0.25, -0.5, 0.75];
        let target = 1.0;

        let loss_of = |m: &Mlp| {
            let z = m.forward(&x).unwrap()[0];
            z.max(0.0) - z * target + (-z.abs()).exp().ln_1p()
        };

        let mut tape = Tape::new();
        let vars = mlp.bind(&mut tape, 0);
        let xv = tape.constant(x.to_vec());
        let z = mlp.forward_traced(&mut tape, &vars, xv);
        let z0 = tape.select(z, 0);
        let loss = tape.bce_with_logit(z0, target);
        let grads = tape.backward(loss, 1.0, 4).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..40 {
            let pid = rng.random_range(0..4usize);
            let len = mlp.param_slices()[pid].len();
            let idx = rng.random_range(0..len);
            let base = mlp.param_slices()[pid][idx];
            let numeric = finite_difference(
                |v| {
                    let mut m = mlp.clone();
                    m.param_slices_mut()[pid][idx] = v;
                    loss_of(&m)
                },
                base,
                1e-5,
            );
            let analytic = grads.get(pid)[idx];
            let denom = numeric.abs().max(analytic.abs()).max(1e-6);
            assert!((numeric - analytic).abs() / denom < 1e-4);
        }
    }

    #[test]
    fn gradients_accumulate_across_bptt_steps() {
        // two GRU steps sharing parameters: gradient must include both uses
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cell = GruCell::new(2, 3, &mut rng);
        let obs = [[0.4, -0.1], [-0.3, 0.8]];

        let loss_of = |c: &GruCell| {
            let h1 = c.step(&[0.0; 3], &obs[0]).unwrap();
            let h2 = c.step(&h1, &obs[1]).unwrap();
            h2.iter().map(|v| v * v).sum::<f64>()
        };

        let mut tape = Tape::new();
        let vars = cell.bind(&mut tape, 0);
        let h0 = tape.constant(vec![0.0; 3]);
        let o0 = tape.constant(obs[0].to_vec());
        let o1 = tape.constant(obs[1].to_vec());
        let h1 = cell.step_traced(&mut tape, &vars, h0, o0);
        let h2 = cell.step_traced(&mut tape, &vars, h1, o1);
        let sq = tape.hadamard(h2, h2);
        let s0 = tape.select(sq, 0);
        let s1 = tape.select(sq, 1);
        let s2 = tape.select(sq, 2);
        let s01 = tape.add(s0, s1);
        let total = tape.add(s01, s2);
        let grads = tape.backward(total, 1.0, 9).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..30 {
            let pid = rng.random_range(0..9usize);
            let len = cell.param_slices()[pid].len();
            let idx = rng.random_range(0..len);
            let base = cell.param_slices()[pid][idx];
            let numeric = finite_difference(
                |v| {
                    let mut c = cell.clone();
                    c.param_slices_mut()[pid][idx] = v;
                    loss_of(&c)
                },
                base,
                1e-5,
            );
            let analytic = grads.get(pid)[idx];
            let denom = numeric.abs().max(analytic.abs()).max(1e-6);
            assert!(
                (numeric - analytic).abs() / denom < 1e-4,
                "param {pid}[{idx}]"
            );
        }
    }
}
