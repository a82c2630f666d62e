//! The feasibility classifier C(s, h) -> {0, 1}: a small MLP over the
//! concatenated state encoding and hidden state, trained with binary
//! cross-entropy, plus the Hoeffding-backed validation report.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasibility::FeasibilityDataset;
use crate::nn::adam::Adam;
use crate::nn::{sigmoid, Activation, Mlp};
use crate::rngstream::seeded_rng;
use crate::verifier::oracle::FeasibilityOracle;
use crate::verifier::required_samples;

#[derive(Debug, Clone)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub val_frac: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden: vec![64, 64],
            lr: 3e-5,
            epochs: 1000,
            batch: 256,
            val_frac: 0.2,
            seed: 0,
        }
    }
}

/// The learned oracle. The net outputs a logit; `accepts` thresholds the
/// sigmoid probability (default threshold 0.5).
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityClassifier {
    pub net: Mlp,
    pub threshold: f64,
    pub state_dim: usize,
    pub hidden_dim: usize,
}

impl FeasibilityClassifier {
    pub fn logit(&self, state_enc: &[f64], hidden: &[f64]) -> f64 {
        let mut input = Vec::with_capacity(state_enc.len() + hidden.len());
        input.extend_from_slice(state_enc);
        input.extend_from_slice(hidden);
        self.net.forward(&input).expect("dims fixed at training")[0]
    }

    pub fn probability(&self, state_enc: &[f64], hidden: &[f64]) -> f64 {
        sigmoid(self.logit(state_enc, hidden))
    }
}

impl FeasibilityOracle for FeasibilityClassifier {
    fn accepts(&self, state_enc: &[f64], hidden: &[f64]) -> bool {
        self.probability(state_enc, hidden) >= self.threshold
    }

    fn accepts_block(&self, state_enc: &[f64], hiddens: &[f64], count: usize) -> Vec<bool> {
        let dim = if count == 0 { 0 } else { hiddens.len() / count };
        let row = state_enc.len() + dim;
        const CHUNK: usize = 1024;
        (0..count.div_ceil(CHUNK))
            .into_par_iter()
            .flat_map_iter(|c| {
                let lo = c * CHUNK;
                let hi = (lo + CHUNK).min(count);
                let mut inputs = Vec::with_capacity((hi - lo) * row);
                for i in lo..hi {
                    inputs.extend_from_slice(state_enc);
                    inputs.extend_from_slice(&hiddens[i * dim..(i + 1) * dim]);
                }
                crate::nn::batch::batch_logits(&self.net, &inputs, hi - lo)
                    .into_iter()
                    .map(|z| sigmoid(z) >= self.threshold)
                    .collect::<Vec<bool>>()
            })
            .collect()
    }

    fn describe(&self) -> String {
        format!(
            "classifier({}+{} -> {:?}, threshold {})",
            self.state_dim,
            self.hidden_dim,
            self.net.layers.iter().map(|l| l.w.rows).collect::<Vec<_>>(),
            self.threshold
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub best_epoch: usize,
    pub best_val_error: f64,
    pub epochs_run: usize,
    pub train_rows: usize,
    pub val_rows: usize,
    /// Row indices of the held-out partition in the input dataset.
    pub val_indices: Vec<usize>,
}

fn row_input(dataset: &FeasibilityDataset, i: usize, out: &mut Vec<f64>) {
    let p = &dataset.pairs[i];
    out.extend_from_slice(&p.state_enc);
    out.extend_from_slice(&p.hidden);
}

fn misclassification(
    net: &Mlp,
    dataset: &FeasibilityDataset,
    indices: &[usize],
    threshold: f64,
) -> f64 {
    if indices.is_empty() {
        return 0.0;
    }
    let dim = dataset.state_dim + dataset.hidden_dim;
    let wrong: usize = indices
        .par_chunks(2048)
        .map(|chunk| {
            let mut inputs = Vec::with_capacity(chunk.len() * dim);
            for &i in chunk {
                row_input(dataset, i, &mut inputs);
            }
            let logits = crate::nn::batch::batch_logits(net, &inputs, chunk.len());
            chunk
                .iter()
                .zip(&logits)
                .filter(|(&i, &z)| {
                    let predicted = u8::from(sigmoid(z) >= threshold);
                    predicted != dataset.pairs[i].label
                })
                .count()
        })
        .sum();
    wrong as f64 / indices.len() as f64
}

/// Train on an 80/20 split (configurable), minibatch Adam on binary
/// cross-entropy, keeping the epoch checkpoint with the lowest validation
/// error. Deterministic given (dataset, config.seed).
pub fn train_classifier(
    dataset: &FeasibilityDataset,
    config: &ClassifierConfig,
) -> Result<(FeasibilityClassifier, TrainSummary)> {
    let n = dataset.pairs.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut split_rng = seeded_rng(config.seed, "clf-split", 0);
    indices.shuffle(&mut split_rng);
    let n_val = ((config.val_frac * n as f64).round() as usize).clamp(1, n.saturating_sub(1));
    let val_idx: Vec<usize> = indices[..n_val].to_vec();
    let train_idx: Vec<usize> = indices[n_val..].to_vec();
    train_classifier_on(dataset, &train_idx, &val_idx, config)
}

/// Same training loop over caller-provided disjoint partitions.
pub fn train_classifier_on(
    dataset: &FeasibilityDataset,
    train_indices: &[usize],
    val_indices: &[usize],
    config: &ClassifierConfig,
) -> Result<(FeasibilityClassifier, TrainSummary)> {
    let n = dataset.pairs.len();
    if n < 10 {
        return Err(Error::Dataset(format!("dataset too small: {n} rows")));
    }
    let n_pos = dataset.positives();
    if n_pos == 0 || n_pos == n {
        return Err(Error::Dataset(
            "classifier training needs both labels present".into(),
        ));
    }
    if train_indices.is_empty() || val_indices.is_empty() {
        return Err(Error::Dataset("both partitions must be nonempty".into()));
    }
    let val_idx: Vec<usize> = val_indices.to_vec();
    let mut train_idx: Vec<usize> = train_indices.to_vec();

    let input_dim = dataset.state_dim + dataset.hidden_dim;
    let mut dims = vec![input_dim];
    dims.extend_from_slice(&config.hidden);
    dims.push(1);
    let mut init_rng = seeded_rng(config.seed, "clf-init", 0);
    let mut net = Mlp::new(&dims, Activation::Relu, Activation::Identity, &mut init_rng);
    let shapes: Vec<usize> = net.param_slices().iter().map(|s| s.len()).collect();
    let mut adam = Adam::new(config.lr, &shapes);

    let mut best = (0usize, f64::INFINITY, net.clone());
    for epoch in 0..config.epochs {
        let mut epoch_rng = seeded_rng(config.seed, "clf-epoch", epoch as u64);
        train_idx.shuffle(&mut epoch_rng);
        for batch in train_idx.chunks(config.batch) {
            let mut inputs = Vec::with_capacity(batch.len() * input_dim);
            let mut targets = Vec::with_capacity(batch.len());
            for &i in batch {
                row_input(dataset, i, &mut inputs);
                targets.push(dataset.pairs[i].label as f64);
            }
            let (loss, grads) =
                crate::nn::batch::batch_bce_gradients(&net, &inputs, &targets, None);
            if !loss.is_finite() {
                return Err(Error::Training(format!("non-finite classifier loss {loss}")));
            }
            adam.apply(&mut net.param_slices_mut(), &grads)?;
        }
        let val_err = misclassification(&net, dataset, &val_idx, 0.5);
        if val_err < best.1 {
            best = (epoch, val_err, net.clone());
        }
    }

    let classifier = FeasibilityClassifier {
        net: best.2,
        threshold: 0.5,
        state_dim: dataset.state_dim,
        hidden_dim: dataset.hidden_dim,
    };
    let summary = TrainSummary {
        best_epoch: best.0,
        best_val_error: best.1,
        epochs_run: config.epochs,
        train_rows: train_idx.len(),
        val_rows: val_idx.len(),
        val_indices: val_idx,
    };
    Ok((classifier, summary))
}

/// Held-out evaluation with the Hoeffding size requirement baked in: the
/// report is only issued when the set is big enough to back the
/// (eps_clf, delta_clf) claim.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub e_hat: f64,
    pub validation_size: u64,
    pub required_size: u64,
    pub eps_clf: f64,
    pub delta_clf: f64,
    pub accuracy: f64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub positive_rows: u64,
    pub negative_rows: u64,
}

impl ClassifierReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn validate_classifier(
    classifier: &FeasibilityClassifier,
    held_out: &FeasibilityDataset,
    held_out_rows: &[usize],
    eps_clf: f64,
    delta_clf: f64,
) -> Result<ClassifierReport> {
    let required = required_samples(eps_clf, delta_clf)?;
    let m = held_out_rows.len() as u64;
    if m < required {
        return Err(Error::ValidationTooSmall {
            got: m as usize,
            required: required as usize,
            eps: eps_clf,
            delta: delta_clf,
        });
    }
    let mut false_pos = 0u64;
    let mut false_neg = 0u64;
    let mut positives = 0u64;
    for &i in held_out_rows {
        let p = &held_out.pairs[i];
        let accepted = classifier.accepts(&p.state_enc, &p.hidden);
        if p.label == 1 {
            positives += 1;
            if !accepted {
                false_neg += 1;
            }
        } else if accepted {
            false_pos += 1;
        }
    }
    let e_hat = (false_pos + false_neg) as f64 / m as f64;
    Ok(ClassifierReport {
        e_hat,
        validation_size: m,
        required_size: required,
        eps_clf,
        delta_clf,
        accuracy: 1.0 - e_hat,
        false_positives: false_pos,
        false_negatives: false_neg,
        positive_rows: positives,
        negative_rows: m - positives,
    })
}
