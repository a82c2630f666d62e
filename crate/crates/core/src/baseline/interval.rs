//! Interval bound propagation through the network primitives: sound
//! axis-aligned enclosures of everything a concrete forward pass could
//! produce over boxed inputs.

use crate::env::MarginInputs;
use crate::error::{Error, Result};
use crate::nn::{Activation, GateBlock, GruCell, Mlp, VanillaRnnCell};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalVector {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl IntervalVector {
    pub fn point(v: &[f64]) -> Self {
        IntervalVector {
            lo: v.to_vec(),
            hi: v.to_vec(),
        }
    }

    pub fn from_bounds(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimMismatch {
                context: "interval bounds",
                expected: lo.len(),
                actual: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(Error::OutOfRange("interval with lo > hi".into()));
        }
        Ok(IntervalVector { lo, hi })
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.len()
            && v.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (l, h))| *l <= *x && *x <= *h)
    }

    /// Componentwise set inclusion: every slice of `self` inside `other`.
    pub fn subset_of(&self, other: &IntervalVector) -> bool {
        self.len() == other.len()
            && self
                .lo
                .iter()
                .zip(&self.hi)
                .zip(other.lo.iter().zip(&other.hi))
                .all(|((l, h), (ol, oh))| ol <= l && h <= oh)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }

    pub fn clamp_to_unit_box(&mut self) {
        for v in &mut self.lo {
            *v = v.clamp(-1.0, 1.0);
        }
        for v in &mut self.hi {
            *v = v.clamp(-1.0, 1.0);
        }
    }
}

/// y = M x over an interval x, splitting each weight by sign.
pub fn interval_matvec(m: &Matrix, x: &IntervalVector) -> IntervalVector {
    debug_assert_eq!(m.cols, x.len());
    let mut lo = vec![0.0; m.rows];
    let mut hi = vec![0.0; m.rows];
    for r in 0..m.rows {
        let row = &m.data[r * m.cols..(r + 1) * m.cols];
        let mut l = 0.0;
        let mut h = 0.0;
        for (c, w) in row.iter().enumerate() {
            if *w >= 0.0 {
                l += w * x.lo[c];
                h += w * x.hi[c];
            } else {
                l += w * x.hi[c];
                h += w * x.lo[c];
            }
        }
        lo[r] = l;
        hi[r] = h;
    }
    IntervalVector { lo, hi }
}

pub fn interval_add(a: &IntervalVector, b: &IntervalVector) -> IntervalVector {
    IntervalVector {
        lo: a.lo.iter().zip(&b.lo).map(|(x, y)| x + y).collect(),
        hi: a.hi.iter().zip(&b.hi).map(|(x, y)| x + y).collect(),
    }
}

pub fn interval_add_vec(a: &IntervalVector, b: &[f64]) -> IntervalVector {
    IntervalVector {
        lo: a.lo.iter().zip(b).map(|(x, y)| x + y).collect(),
        hi: a.hi.iter().zip(b).map(|(x, y)| x + y).collect(),
    }
}

/// Componentwise product: min/max over the four endpoint products.
pub fn interval_hadamard(a: &IntervalVector, b: &IntervalVector) -> IntervalVector {
    let mut lo = vec![0.0; a.len()];
    let mut hi = vec![0.0; a.len()];
    for i in 0..a.len() {
        let products = [
            a.lo[i] * b.lo[i],
            a.lo[i] * b.hi[i],
            a.hi[i] * b.lo[i],
            a.hi[i] * b.hi[i],
        ];
        lo[i] = products.iter().copied().fold(f64::INFINITY, f64::min);
        hi[i] = products.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    IntervalVector { lo, hi }
}

pub fn interval_one_minus(a: &IntervalVector) -> IntervalVector {
    IntervalVector {
        lo: a.hi.iter().map(|v| 1.0 - v).collect(),
        hi: a.lo.iter().map(|v| 1.0 - v).collect(),
    }
}

/// Monotone elementwise activations evaluated at the endpoints.
pub fn interval_activation(a: &IntervalVector, kind: Activation) -> IntervalVector {
    IntervalVector {
        lo: a.lo.iter().map(|v| kind.apply_scalar(*v)).collect(),
        hi: a.hi.iter().map(|v| kind.apply_scalar(*v)).collect(),
    }
}

/// act(W_x x + W_h h + b) over intervals.
pub fn interval_rnn_step(
    cell: &VanillaRnnCell,
    h: &IntervalVector,
    x: &IntervalVector,
) -> IntervalVector {
    let pre = interval_add_vec(
        &interval_add(
            &interval_matvec(&cell.w_x, x),
            &interval_matvec(&cell.w_h, h),
        ),
        &cell.b_h,
    );
    interval_activation(&pre, cell.activation)
}

fn interval_gate_pre(g: &GateBlock, h: &IntervalVector, x: &IntervalVector) -> IntervalVector {
    interval_add_vec(
        &interval_add(&interval_matvec(&g.w_x, x), &interval_matvec(&g.w_h, h)),
        &g.b,
    )
}

/// Sound enclosure of one GRU step over boxed hidden/input sets, clipped to
/// the reachable [-1,1] range.
pub fn interval_gru_step(
    cell: &GruCell,
    h: &IntervalVector,
    x: &IntervalVector,
) -> IntervalVector {
    let z = interval_activation(&interval_gate_pre(&cell.update, h, x), Activation::Sigmoid);
    let r = interval_activation(&interval_gate_pre(&cell.reset, h, x), Activation::Sigmoid);
    let gated = interval_hadamard(&r, h);
    let hc = interval_activation(
        &interval_gate_pre(&cell.candidate, &gated, x),
        Activation::Tanh,
    );
    let keep = interval_hadamard(&interval_one_minus(&z), h);
    let new = interval_hadamard(&z, &hc);
    let mut out = interval_add(&keep, &new);
    out.clamp_to_unit_box();
    out
}

pub fn interval_mlp(mlp: &Mlp, x: &IntervalVector) -> IntervalVector {
    let mut cur = x.clone();
    for layer in &mlp.layers {
        let pre = interval_add_vec(&interval_matvec(&layer.w, &cur), &layer.b);
        cur = interval_activation(&pre, layer.activation);
    }
    cur
}

/// Interval bounds on the greedy margin given bounds on the q-values.
pub fn interval_margin(q: &IntervalVector, inputs: &MarginInputs) -> Result<(f64, f64)> {
    let max_lo = |pred: &dyn Fn(usize) -> bool| {
        q.lo.iter()
            .enumerate()
            .filter(|(i, _)| pred(*i))
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let max_hi = |pred: &dyn Fn(usize) -> bool| {
        q.hi.iter()
            .enumerate()
            .filter(|(i, _)| pred(*i))
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    match inputs {
        MarginInputs::UnsafeSet(set) => {
            if set.is_empty() || set.len() >= q.len() {
                return Err(Error::MarginUndefined(
                    "margin bounds need a nonempty, non-vacuous unsafe set".into(),
                ));
            }
            let lo = max_lo(&|i| !set.contains(&i)) - max_hi(&|i| set.contains(&i));
            let hi = max_hi(&|i| !set.contains(&i)) - max_lo(&|i| set.contains(&i));
            Ok((lo, hi))
        }
        MarginInputs::Required(req) => {
            if *req >= q.len() {
                return Err(Error::InvalidAction(*req));
            }
            let lo = q.lo[*req] - max_hi(&|i| i != *req);
            let hi = q.hi[*req] - max_lo(&|i| i != *req);
            Ok((lo, hi))
        }
    }
}

// ---------------------------------------------------------------------------
// Robustness unrolling over a fixed input-interval sequence
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum RnnCellKind {
    Vanilla(VanillaRnnCell),
    Gru(GruCell),
}

/// Verify that a scalar readout of the final hidden state stays positive for
/// every input sequence inside the given boxes.
#[derive(Debug, Clone)]
pub struct RobustnessTask {
    pub cell: RnnCellKind,
    pub h0: Vec<f64>,
    pub inputs: Vec<IntervalVector>,
    /// Final readout y = c . h_T + b_y.
    pub c: Vec<f64>,
    pub b_y: f64,
}

#[derive(Debug, Clone)]
pub struct UnrollResult {
    pub hidden_intervals: Vec<IntervalVector>,
    pub output: (f64, f64),
    pub robust: bool,
}

pub fn interval_rnn_unroll(task: &RobustnessTask) -> Result<UnrollResult> {
    if task.inputs.is_empty() {
        return Err(Error::OutOfRange(
            "robustness task needs at least one input step".into(),
        ));
    }
    let mut h = IntervalVector::point(&task.h0);
    let mut hidden_intervals = Vec::with_capacity(task.inputs.len());
    for x in &task.inputs {
        h = match &task.cell {
            RnnCellKind::Vanilla(cell) => interval_rnn_step(cell, &h, x),
            RnnCellKind::Gru(cell) => interval_gru_step(cell, &h, x),
        };
        hidden_intervals.push(h.clone());
    }
    if task.c.len() != h.len() {
        return Err(Error::DimMismatch {
            context: "readout vector",
            expected: h.len(),
            actual: task.c.len(),
        });
    }
    let mut lo = task.b_y;
    let mut hi = task.b_y;
    for (i, w) in task.c.iter().enumerate() {
        if *w >= 0.0 {
            lo += w * h.lo[i];
            hi += w * h.hi[i];
        } else {
            lo += w * h.hi[i];
            hi += w * h.lo[i];
        }
    }
    Ok(UnrollResult {
        hidden_intervals,
        output: (lo, hi),
        robust: lo > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Scalar ReLU cell with unit weights, readout c = 1: the golden
    /// two-step instance. All arithmetic is exact in binary.
    #[test]
    fn scalar_two_step_unroll_is_bit_exact() {
        let cell = VanillaRnnCell {
            w_x: Matrix::from_rows(vec![vec![1.0]]),
            w_h: Matrix::from_rows(vec![vec![1.0]]),
            b_h: vec![0.0],
            activation: Activation::Relu,
        };
        let task = RobustnessTask {
            cell: RnnCellKind::Vanilla(cell),
            h0: vec![0.0],
            inputs: vec![
                IntervalVector::from_bounds(vec![0.0], vec![2.0]).unwrap(),
                IntervalVector::from_bounds(vec![1.0], vec![3.0]).unwrap(),
            ],
            c: vec![1.0],
            b_y: 0.0,
        };
        let result = interval_rnn_unroll(&task).unwrap();
        assert_eq!(result.hidden_intervals[0].lo, vec![0.0]);
        assert_eq!(result.hidden_intervals[0].hi, vec![2.0]);
        assert_eq!(result.hidden_intervals[1].lo, vec![1.0]);
        assert_eq!(result.hidden_intervals[1].hi, vec![5.0]);
        assert_eq!(result.output, (1.0, 5.0));
        assert!(result.robust);
    }

    #[test]
    fn zero_width_inputs_reproduce_the_concrete_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cell = VanillaRnnCell::new(3, 4, Activation::Tanh, &mut rng);
        let xs: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut h = vec![0.0; 4];
        for x in &xs {
            h = cell.step(&h, x).unwrap();
        }
        let task = RobustnessTask {
            cell: RnnCellKind::Vanilla(cell),
            h0: vec![0.0; 4],
            inputs: xs.iter().map(|x| IntervalVector::point(x)).collect(),
            c: vec![1.0, -0.5, 0.25, 2.0],
            b_y: 0.125,
        };
        let result = interval_rnn_unroll(&task).unwrap();
        let last = result.hidden_intervals.last().unwrap();
        assert_eq!(last.lo, h);
        assert_eq!(last.hi, h);
        assert_eq!(result.output.0, result.output.1);
    }

    #[test]
    fn sampled_concrete_trajectories_stay_inside_enclosures() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let cell = VanillaRnnCell::new(2, 3, Activation::Relu, &mut rng);
        let inputs: Vec<IntervalVector> = (0..4)
            .map(|_| {
                let lo: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..0.0)).collect();
                let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.0..1.5)).collect();
                IntervalVector::from_bounds(lo, hi).unwrap()
            })
            .collect();
        let task = RobustnessTask {
            cell: RnnCellKind::Vanilla(cell.clone()),
            h0: vec![0.0; 3],
            inputs: inputs.clone(),
            c: vec![0.3, -1.0, 0.7],
            b_y: 0.0,
        };
        let result = interval_rnn_unroll(&task).unwrap();
        for _ in 0..1000 {
            let mut h = vec![0.0; 3];
            for (t, x_iv) in inputs.iter().enumerate() {
                let x: Vec<f64> = x_iv
                    .lo
                    .iter()
                    .zip(&x_iv.hi)
                    .map(|(l, u)| rng.random_range(*l..=*u))
                    .collect();
                h = cell.step(&h, &x).unwrap();
                assert!(
                    result.hidden_intervals[t].contains(&h),
                    "step {t} escaped the enclosure"
                );
            }
        }
    }

    #[test]
    fn gru_point_intervals_equal_the_concrete_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let cell = GruCell::new(3, 4, &mut rng);
        let h: Vec<f64> = (0..4).map(|_| rng.random_range(-0.9..0.9)).collect();
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let concrete = cell.step(&h, &x).unwrap();
        let iv = interval_gru_step(&cell, &IntervalVector::point(&h), &IntervalVector::point(&x));
        assert_eq!(iv.lo, concrete);
        assert_eq!(iv.hi, concrete);
    }

    #[test]
    fn widening_inputs_never_shrinks_gru_enclosures() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let cell = GruCell::new(2, 3, &mut rng);
        for _ in 0..100 {
            let h_lo: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..0.5)).collect();
            let h_hi: Vec<f64> = h_lo
                .iter()
                .map(|l| (l + rng.random_range(0.0..0.5)).min(1.0))
                .collect();
            let h = IntervalVector::from_bounds(h_lo, h_hi).unwrap();
            let x_lo: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..0.5)).collect();
            let narrow_hi: Vec<f64> = x_lo.iter().map(|l| l + 0.1).collect();
            let wide_hi: Vec<f64> = x_lo.iter().map(|l| l + 0.6).collect();
            let narrow = IntervalVector::from_bounds(x_lo.clone(), narrow_hi).unwrap();
            let wide = IntervalVector::from_bounds(x_lo, wide_hi).unwrap();
            let out_narrow = interval_gru_step(&cell, &h, &narrow);
            let out_wide = interval_gru_step(&cell, &h, &wide);
            assert!(
                out_narrow.subset_of(&out_wide),
                "wider inputs produced a smaller enclosure"
            );
        }
    }

    #[test]
    fn gru_enclosures_contain_ten_thousand_sampled_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let cell = GruCell::new(2, 4, &mut rng);
        let h_lo: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..0.0)).collect();
        let h_hi: Vec<f64> = h_lo
            .iter()
            .map(|l| (l + rng.random_range(0.2..1.0)).min(1.0))
            .collect();
        let x_lo: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..0.0)).collect();
        let x_hi: Vec<f64> = x_lo.iter().map(|l| l + rng.random_range(0.5..2.0)).collect();
        let h_box = IntervalVector::from_bounds(h_lo, h_hi).unwrap();
        let x_box = IntervalVector::from_bounds(x_lo, x_hi).unwrap();
        let enclosure = interval_gru_step(&cell, &h_box, &x_box);
        for _ in 0..10_000 {
            let h: Vec<f64> = h_box
                .lo
                .iter()
                .zip(&h_box.hi)
                .map(|(l, u)| rng.random_range(*l..=*u))
                .collect();
            let x: Vec<f64> = x_box
                .lo
                .iter()
                .zip(&x_box.hi)
                .map(|(l, u)| rng.random_range(*l..=*u))
                .collect();
            let out = cell.step(&h, &x).unwrap();
            assert!(enclosure.contains(&out), "gru output escaped");
        }
    }
}
