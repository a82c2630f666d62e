//! Batched MLP forward/backward for classifier training. Same math as the
//! tape path (the tests pin them against each other), laid out over
//! contiguous row-major batches so the inner loops vectorize.

use rayon::prelude::*;

use crate::nn::tape::Gradients;
use crate::nn::{sigmoid, Activation, Mlp};

/// Per-layer gradient accumulator matching `Mlp::param_slices` order.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub per_param: Vec<Vec<f64>>,
}

impl MlpGrads {
    fn zeros(net: &Mlp) -> Self {
        MlpGrads {
            per_param: net.param_slices().iter().map(|s| vec![0.0; s.len()]).collect(),
        }
    }

    fn add(&mut self, other: &MlpGrads) {
        for (a, b) in self.per_param.iter_mut().zip(&other.per_param) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, c: f64) {
        for a in &mut self.per_param {
            for x in a.iter_mut() {
                *x *= c;
            }
        }
    }

    /// Convert into the tape's gradient layout for the optimizer.
    pub fn into_gradients(self) -> Gradients {
        Gradients::from_parts(self.per_param)
    }
}

fn forward_batch(net: &Mlp, inputs: &[f64], rows: usize) -> Vec<Vec<f64>> {
    // returns per-layer post-activation matrices, rows x dim, plus the input
    let mut activations: Vec<Vec<f64>> = Vec::with_capacity(net.layers.len() + 1);
    activations.push(inputs.to_vec());
    let mut in_dim = net.input_dim();
    for layer in &net.layers {
        let out_dim = layer.w.rows;
        let prev = activations.last().unwrap();
        let mut out = vec![0.0; rows * out_dim];
        for r in 0..rows {
            let a = &prev[r * in_dim..(r + 1) * in_dim];
            let o = &mut out[r * out_dim..(r + 1) * out_dim];
            for j in 0..out_dim {
                let w = &layer.w.data[j * in_dim..(j + 1) * in_dim];
                let mut acc = layer.b[j];
                for (wv, av) in w.iter().zip(a) {
                    acc += wv * av;
                }
                o[j] = acc;
            }
            match layer.activation {
                Activation::Relu => {
                    for v in o.iter_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                }
                Activation::Identity => {}
                Activation::Tanh => {
                    for v in o.iter_mut() {
                        *v = v.tanh();
                    }
                }
                Activation::Sigmoid => {
                    for v in o.iter_mut() {
                        *v = sigmoid(*v);
                    }
                }
            }
        }
        activations.push(out);
        in_dim = out_dim;
    }
    activations
}

/// Logits for a batch of rows (the final layer must be identity-activated,
/// one output).
pub fn batch_logits(net: &Mlp, inputs: &[f64], rows: usize) -> Vec<f64> {
    let acts = forward_batch(net, inputs, rows);
    acts.last().unwrap().clone()
}

fn bce_backward_chunk(
    net: &Mlp,
    inputs: &[f64],
    targets: &[f64],
    weights: Option<&[f64]>,
) -> (f64, MlpGrads) {
    let rows = targets.len();
    let acts = forward_batch(net, inputs, rows);
    let mut grads = MlpGrads::zeros(net);

    // dL/dz for the scalar logit head, overflow-safe BCE
    let logits = acts.last().unwrap();
    let mut loss = 0.0;
    let mut delta: Vec<f64> = Vec::with_capacity(rows);
    for r in 0..rows {
        let z = logits[r];
        let t = targets[r];
        let w = weights.map_or(1.0, |ws| ws[r]);
        loss += w * (z.max(0.0) - z * t + (-z.abs()).exp().ln_1p());
        delta.push(w * (sigmoid(z) - t));
    }

    // walk the layers backwards; delta holds dL/d(pre-activation) of layer l
    for l in (0..net.layers.len()).rev() {
        let layer = &net.layers[l];
        let in_dim = layer.w.cols;
        let out_dim = layer.w.rows;
        let prev = &acts[l];
        let (head, tail) = grads.per_param.split_at_mut(2 * l + 1);
        let dw = head.last_mut().unwrap();
        let db = tail.first_mut().unwrap();
        for r in 0..rows {
            let d = &delta[r * out_dim..(r + 1) * out_dim];
            let a = &prev[r * in_dim..(r + 1) * in_dim];
            for j in 0..out_dim {
                let dj = d[j];
                if dj == 0.0 {
                    continue;
                }
                db[j] += dj;
                let wrow = &mut dw[j * in_dim..(j + 1) * in_dim];
                for (wv, av) in wrow.iter_mut().zip(a) {
                    *wv += dj * av;
                }
            }
        }
        if l == 0 {
            break;
        }
        // dL/d(activation of layer l-1), then through that layer's activation
        let mut next_delta = vec![0.0; rows * in_dim];
        for r in 0..rows {
            let d = &delta[r * out_dim..(r + 1) * out_dim];
            let nd = &mut next_delta[r * in_dim..(r + 1) * in_dim];
            for j in 0..out_dim {
                let dj = d[j];
                if dj == 0.0 {
                    continue;
                }
                let wrow = &layer.w.data[j * in_dim..(j + 1) * in_dim];
                for (nv, wv) in nd.iter_mut().zip(wrow) {
                    *nv += dj * wv;
                }
            }
        }
        let prev_layer = &net.layers[l - 1];
        let prev_post = &acts[l];
        match prev_layer.activation {
            Activation::Relu => {
                for (nv, pv) in next_delta.iter_mut().zip(prev_post) {
                    if *pv <= 0.0 {
                        *nv = 0.0;
                    }
                }
            }
            Activation::Identity => {}
            Activation::Tanh => {
                for (nv, pv) in next_delta.iter_mut().zip(prev_post) {
                    *nv *= 1.0 - pv * pv;
                }
            }
            Activation::Sigmoid => {
                for (nv, pv) in next_delta.iter_mut().zip(prev_post) {
                    *nv *= pv * (1.0 - pv);
                }
            }
        }
        delta = next_delta;
    }
    (loss, grads)
}

/// Mean binary cross-entropy gradient over a batch. Work is split across a
/// fixed number of chunks and merged in chunk order, so the result does not
/// depend on the worker count. Optional per-row weights rescale each row's
/// loss contribution.
pub fn batch_bce_gradients(
    net: &Mlp,
    inputs: &[f64],
    targets: &[f64],
    weights: Option<&[f64]>,
) -> (f64, Gradients) {
    let rows = targets.len();
    let in_dim = net.input_dim();
    debug_assert_eq!(inputs.len(), rows * in_dim);
    const CHUNKS: usize = 8;
    let chunk_rows = rows.div_ceil(CHUNKS);
    let parts: Vec<(f64, MlpGrads)> = (0..rows.div_ceil(chunk_rows))
        .into_par_iter()
        .map(|c| {
            let lo = c * chunk_rows;
            let hi = (lo + chunk_rows).min(rows);
            bce_backward_chunk(
                net,
                &inputs[lo * in_dim..hi * in_dim],
                &targets[lo..hi],
                weights.map(|w| &w[lo..hi]),
            )
        })
        .collect();
    let mut loss = 0.0;
    let mut total = MlpGrads::zeros(net);
    for (l, g) in &parts {
        loss += l;
        total.add(g);
    }
    total.scale(1.0 / rows as f64);
    (loss / rows as f64, total.into_gradients())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tape::Tape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn batched_gradients_match_the_tape_exactly_per_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[5, 7, 1], Activation::Relu, Activation::Identity, &mut rng);
        for trial in 0..50 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t = f64::from(trial % 2);

            let (_, batched) = batch_bce_gradients(&net, &x, &[t], None);

            let mut tape = Tape::new();
            let vars = net.bind(&mut tape, 0);
            let xv = tape.constant(x.clone());
            let z = net.forward_traced(&mut tape, &vars, xv);
            let z0 = tape.select(z, 0);
            let loss = tape.bce_with_logit(z0, t);
            let reference = tape.backward(loss, 1.0, 4).unwrap();

            for pid in 0..4 {
                for (a, b) in batched.get(pid).iter().zip(reference.get(pid)) {
                    assert!((a - b).abs() <= 1e-14, "pid {pid}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn batch_mean_equals_mean_of_per_row_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::new(&[3, 6, 1], Activation::Relu, Activation::Identity, &mut rng);
        let rows = 37;
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for r in 0..rows {
            inputs.extend((0..3).map(|_| rng.random_range(-1.0..1.0)));
            targets.push(f64::from(r % 2 == 0));
        }
        let (_, batched) = batch_bce_gradients(&net, &inputs, &targets, None);

        let mut summed: Option<Gradients> = None;
        for r in 0..rows {
            let (_, g) = batch_bce_gradients(&net, &inputs[r * 3..(r + 1) * 3], &targets[r..=r], None);
            match &mut summed {
                None => summed = Some(g),
                Some(s) => s.accumulate(&g),
            }
        }
        let mut summed = summed.unwrap();
        summed.scale(1.0 / rows as f64);
        for pid in 0..4 {
            for (a, b) in batched.get(pid).iter().zip(summed.get(pid)) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn logits_match_the_plain_forward_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = Mlp::new(&[4, 8, 1], Activation::Relu, Activation::Identity, &mut rng);
        let rows = 11;
        let mut inputs = Vec::new();
        for _ in 0..rows {
            inputs.extend((0..4).map(|_| rng.random_range(-1.0..1.0)));
        }
        let logits = batch_logits(&net, &inputs, rows);
        for r in 0..rows {
            let one = net.forward(&inputs[r * 4..(r + 1) * 4]).unwrap()[0];
            assert_eq!(one, logits[r]);
        }
    }
}
