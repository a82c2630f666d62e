//! Monte Carlo volume estimation over the hidden domain H = [-1,1]^n.
//!
//! Samples are addressed by a counter-based stream, so estimates are
//! reproducible, refinable (a longer run shares its prefix with a shorter
//! one) and independent of the worker count.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rngstream::SampleStreams;
use crate::verifier::certificate::{
    Certificate, ClassifierRef, GuaranteeKind, GuaranteeReport, SampleCounts, TaskDescriptor,
    Timing, VolumeEstimate, Witness,
};
use crate::verifier::oracle::{FeasibilityOracle, PassAll};
use crate::verifier::{
    margin_is_trivial, required_samples, supported_eps, validate_certificate, ErrorBudget,
    VerificationTask,
};
use crate::TOOLKIT_VERSION;

/// Anything the estimator can sample: a hidden-box margin function.
pub trait VolumeTask: Sync {
    fn hidden_dim(&self) -> usize;
    fn margin(&self, h: &[f64]) -> f64;
    fn state_enc(&self) -> &[f64];
    fn descriptor(&self) -> TaskDescriptor;
}

impl VolumeTask for VerificationTask {
    fn hidden_dim(&self) -> usize {
        VerificationTask::hidden_dim(self)
    }

    fn margin(&self, h: &[f64]) -> f64 {
        self.margin_at(h)
    }

    fn state_enc(&self) -> &[f64] {
        &self.state_enc
    }

    fn descriptor(&self) -> TaskDescriptor {
        TaskDescriptor {
            label: self.label.clone(),
            hidden_dim: self.hidden_dim(),
            margin: format!("{:?}", self.margin),
            state_enc: self.state_enc.clone(),
            obs: self.obs.clone(),
        }
    }
}

/// Synthetic task over H = [-1,1]^dims with a closed-form margin; the
/// statistical coverage tests drive the estimator through this.
pub struct HiddenBoxTask<F: Fn(&[f64]) -> f64 + Sync> {
    pub dims: usize,
    pub label: String,
    pub margin_fn: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> VolumeTask for HiddenBoxTask<F> {
    fn hidden_dim(&self) -> usize {
        self.dims
    }

    fn margin(&self, h: &[f64]) -> f64 {
        (self.margin_fn)(h)
    }

    fn state_enc(&self) -> &[f64] {
        &[]
    }

    fn descriptor(&self) -> TaskDescriptor {
        TaskDescriptor {
            label: self.label.clone(),
            hidden_dim: self.dims,
            margin: "synthetic".into(),
            state_enc: Vec::new(),
            obs: Vec::new(),
        }
    }
}

/// How long to keep drawing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawLimit {
    /// Draw until `required_samples(eps_ver, delta_ver)` accepted samples,
    /// capped at `cap_multiple` times that count.
    TargetWithCap { cap_multiple: u64 },
    /// Evaluate exactly this many draws and report the eps_ver the accepted
    /// count supports.
    FixedDraws(u64),
}

#[derive(Debug, Clone, Copy)]
pub struct EstimatorConfig {
    pub seed: u64,
    pub limit: DrawLimit,
    /// Below this acceptance rate the sampler gives up (after a grace
    /// volume of draws) and emits a no-guarantee certificate.
    pub acceptance_floor: f64,
    pub floor_check_after: u64,
}

impl EstimatorConfig {
    pub fn target(seed: u64) -> Self {
        EstimatorConfig {
            seed,
            limit: DrawLimit::TargetWithCap { cap_multiple: 100 },
            acceptance_floor: 1e-4,
            floor_check_after: 100_000,
        }
    }

    pub fn fixed_draws(seed: u64, draws: u64) -> Self {
        EstimatorConfig {
            seed,
            limit: DrawLimit::FixedDraws(draws),
            acceptance_floor: 0.0,
            floor_check_after: u64::MAX,
        }
    }
}

const BLOCK: u64 = 8192;

struct SampleOutcome {
    accepted: bool,
    violating: bool,
    margin: f64,
}

/// One block of counter-addressed samples: generate, filter, score. Every
/// step is a pure function of the sample index, so block and chunk sizes
/// never change outcomes.
fn evaluate_block(
    task: &dyn VolumeTask,
    oracle: &dyn FeasibilityOracle,
    streams: &SampleStreams,
    start: u64,
    end: u64,
) -> Vec<SampleOutcome> {
    let dim = task.hidden_dim();
    let count = (end - start) as usize;
    let points: Vec<f64> = (0..count)
        .into_par_iter()
        .flat_map_iter(|k| streams.unit_box_point(start + k as u64, dim))
        .collect();
    let mask = oracle.accepts_block(task.state_enc(), &points, count);
    mask.into_par_iter()
        .enumerate()
        .map(|(k, accepted)| {
            if !accepted {
                return SampleOutcome {
                    accepted: false,
                    violating: false,
                    margin: f64::NAN,
                };
            }
            let margin = task.margin(&points[k * dim..(k + 1) * dim]);
            SampleOutcome {
                accepted: true,
                violating: margin <= 0.0,
                margin,
            }
        })
        .collect()
}

/// Classifier-filtered Monte Carlo estimate of the violating volume.
pub fn estimate_violation(
    task: &VerificationTask,
    oracle: &dyn FeasibilityOracle,
    budget: &ErrorBudget,
    cfg: &EstimatorConfig,
    classifier_ref: Option<ClassifierRef>,
) -> Result<Certificate> {
    budget.check()?;
    if let Some(clf) = &classifier_ref {
        // the validation must back the budget's classifier slice: a report at
        // tighter (eps_clf, delta_clf) covers any looser allocation
        if clf.eps_clf > budget.eps_clf || clf.delta_clf > budget.delta_clf {
            return Err(Error::OutOfRange(format!(
                "classifier was validated at (eps {}, delta {}), too weak for the budget's (eps {}, delta {})",
                clf.eps_clf, clf.delta_clf, budget.eps_clf, budget.delta_clf
            )));
        }
        if clf.e_hat != budget.e_hat {
            return Err(Error::OutOfRange(format!(
                "budget assumes classifier error {} but the report says {}",
                budget.e_hat, clf.e_hat
            )));
        }
    }
    let mut cert = estimate_task(
        task,
        oracle,
        *budget,
        cfg,
        "filtered-monte-carlo",
        classifier_ref.is_some(),
    )?;
    cert.classifier = classifier_ref;
    validate_certificate(&cert)?;
    Ok(cert)
}

/// The unfiltered estimator: every draw counts as feasible. The resulting
/// certificate explicitly carries no feasibility semantics.
pub fn naive_monte_carlo(
    task: &VerificationTask,
    draws: u64,
    delta: f64,
    seed: u64,
) -> Result<Certificate> {
    let budget = ErrorBudget {
        eps: f64::NAN, // filled from the achieved eps_ver below
        delta,
        e_hat: 0.0,
        eps_clf: 0.0,
        eps_ver: f64::NAN,
        delta_clf: 0.0,
        delta_ver: delta,
    };
    let cfg = EstimatorConfig::fixed_draws(seed, draws);
    let cert = estimate_task(task, &PassAll, budget, &cfg, "naive-monte-carlo", false)?;
    validate_certificate(&cert)?;
    Ok(cert)
}

/// Shared estimator body; generic over the task and oracle.
pub fn estimate_task(
    task: &dyn VolumeTask,
    oracle: &dyn FeasibilityOracle,
    mut budget: ErrorBudget,
    cfg: &EstimatorConfig,
    method: &str,
    feasibility_semantics: bool,
) -> Result<Certificate> {
    let start = Instant::now();
    let streams = SampleStreams::new(cfg.seed);
    let vol_h = (2.0f64).powi(task.hidden_dim() as i32);

    let (target_n, draw_cap) = match cfg.limit {
        DrawLimit::TargetWithCap { cap_multiple } => {
            let n = required_samples(budget.eps_ver, budget.delta_ver)?;
            (n, n.saturating_mul(cap_multiple))
        }
        DrawLimit::FixedDraws(k) => (u64::MAX, k),
    };

    let mut drawn: u64 = 0;
    let mut accepted_outcomes: Vec<(u64, bool, f64)> = Vec::new(); // (index, violating, margin)
    let mut gave_up_low_acceptance = false;

    while drawn < draw_cap {
        let block_end = (drawn + BLOCK).min(draw_cap);
        let block = evaluate_block(task, oracle, &streams, drawn, block_end);
        for (offset, o) in block.iter().enumerate() {
            if o.accepted {
                accepted_outcomes.push((drawn + offset as u64, o.violating, o.margin));
            }
        }
        drawn = block_end;

        if matches!(cfg.limit, DrawLimit::TargetWithCap { .. })
            && accepted_outcomes.len() as u64 >= target_n
        {
            break;
        }
        if drawn >= cfg.floor_check_after
            && (accepted_outcomes.len() as f64) < cfg.acceptance_floor * drawn as f64
        {
            gave_up_low_acceptance = true;
            break;
        }
    }

    // in target mode only the first `target_n` accepted samples count,
    // and the draw count is trimmed to the draw that produced the last one
    let evaluated: Vec<(u64, bool, f64)> = match cfg.limit {
        DrawLimit::TargetWithCap { .. } if accepted_outcomes.len() as u64 >= target_n => {
            let kept = &accepted_outcomes[..target_n as usize];
            drawn = kept.last().map(|(i, _, _)| i + 1).unwrap_or(drawn);
            kept.to_vec()
        }
        _ => accepted_outcomes.clone(),
    };
    let accepted_total = match cfg.limit {
        DrawLimit::TargetWithCap { .. } => evaluated.len() as u64,
        DrawLimit::FixedDraws(_) => accepted_outcomes.len() as u64,
    };

    let n = evaluated.len() as u64;
    let violating = evaluated.iter().filter(|(_, v, _)| *v).count() as u64;
    let p_hat = if n == 0 { 0.0 } else { violating as f64 / n as f64 };

    let guarantee = match cfg.limit {
        DrawLimit::TargetWithCap { .. } => {
            if n >= target_n && !gave_up_low_acceptance {
                GuaranteeReport {
                    kind: GuaranteeKind::Hoeffding,
                    required_n: target_n,
                    achieved_n: n,
                    supported_eps_ver: None,
                }
            } else {
                GuaranteeReport {
                    kind: GuaranteeKind::NoGuarantee,
                    required_n: target_n,
                    achieved_n: n,
                    supported_eps_ver: supported_eps(n, budget.delta_ver),
                }
            }
        }
        DrawLimit::FixedDraws(_) => {
            // report the eps_ver the accepted count supports
            match supported_eps(n, budget.delta_ver) {
                Some(eps_ver) => {
                    budget.eps_ver = eps_ver;
                    budget.eps = budget.e_hat + budget.eps_clf + budget.eps_ver;
                    GuaranteeReport {
                        kind: GuaranteeKind::Hoeffding,
                        required_n: required_samples(eps_ver, budget.delta_ver)?,
                        achieved_n: n,
                        supported_eps_ver: None,
                    }
                }
                None => GuaranteeReport {
                    kind: GuaranteeKind::NoGuarantee,
                    required_n: u64::MAX,
                    achieved_n: n,
                    supported_eps_ver: None,
                },
            }
        }
    };

    let witness = evaluated
        .iter()
        .find(|(_, v, _)| *v)
        .map(|(index, _, margin)| Witness {
            sample_index: *index,
            hidden: streams.unit_box_point(*index, task.hidden_dim()),
            margin: *margin,
        });

    let cert = Certificate {
        toolkit_version: TOOLKIT_VERSION.into(),
        method: method.into(),
        task: task.descriptor(),
        sampler_seed: cfg.seed,
        workers: rayon::current_num_threads().to_string(),
        budget,
        samples: SampleCounts {
            drawn,
            accepted: accepted_total,
            evaluated: n,
            acceptance_rate: if drawn == 0 {
                0.0
            } else {
                accepted_total as f64 / drawn as f64
            },
        },
        estimate: VolumeEstimate {
            p_hat,
            vol_h,
            v_tilde: vol_h * p_hat,
            h_normalized_fraction: if drawn == 0 {
                0.0
            } else {
                p_hat * (accepted_total as f64 / drawn as f64)
            },
        },
        guarantee,
        feasibility_semantics,
        witness,
        classifier: None,
        checkpoint_digests: Vec::new(),
        config_digest: String::new(),
        sub_certificates: Vec::new(),
        timing: Timing {
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    };
    Ok(cert)
}

/// Exactly-safe certificate for states whose unsafe-action set is empty:
/// no hidden state can select a violating action, so the violating volume
/// is zero with certainty.
pub fn trivially_safe_certificate(
    task: &VerificationTask,
    budget: &ErrorBudget,
    seed: u64,
) -> Result<Certificate> {
    if !margin_is_trivial(&task.margin) {
        return Err(Error::MarginUndefined(
            "task has a nonempty margin descriptor; run the estimator instead".into(),
        ));
    }
    let vol_h = (2.0f64).powi(task.hidden_dim() as i32);
    let cert = Certificate {
        toolkit_version: TOOLKIT_VERSION.into(),
        method: "trivially-safe".into(),
        task: VolumeTask::descriptor(task),
        sampler_seed: seed,
        workers: rayon::current_num_threads().to_string(),
        budget: *budget,
        samples: SampleCounts {
            drawn: 0,
            accepted: 0,
            evaluated: 0,
            acceptance_rate: 0.0,
        },
        estimate: VolumeEstimate {
            p_hat: 0.0,
            vol_h,
            v_tilde: 0.0,
            h_normalized_fraction: 0.0,
        },
        guarantee: GuaranteeReport {
            kind: GuaranteeKind::Exact,
            required_n: 0,
            achieved_n: 0,
            supported_eps_ver: None,
        },
        feasibility_semantics: true,
        witness: None,
        classifier: None,
        checkpoint_digests: Vec::new(),
        config_digest: String::new(),
        sub_certificates: Vec::new(),
        timing: Timing { wall_seconds: 0.0 },
    };
    validate_certificate(&cert)?;
    Ok(cert)
}

/// Max-aggregation over independent per-agent verification tasks: the joint
/// certificate is determined by the worst agent. Total confidence spends the
/// union bound over agents (delta_top = sum of per-agent deltas).
pub fn verify_marl(
    tasks: &[VerificationTask],
    oracles: &[&dyn FeasibilityOracle],
    budgets: &[ErrorBudget],
    cfg: &EstimatorConfig,
    classifier_refs: &[Option<ClassifierRef>],
) -> Result<Certificate> {
    if tasks.is_empty()
        || tasks.len() != oracles.len()
        || tasks.len() != classifier_refs.len()
        || tasks.len() != budgets.len()
    {
        return Err(Error::OutOfRange(
            "verify_marl needs one task, oracle, budget and classifier reference per agent".into(),
        ));
    }
    let start = Instant::now();
    let mut subs = Vec::with_capacity(tasks.len());
    for ((agent, task), (oracle, clf)) in tasks
        .iter()
        .enumerate()
        .zip(oracles.iter().zip(classifier_refs))
    {
        // derive a distinct per-agent stream so agents never share draws
        let sub_cfg = EstimatorConfig {
            seed: crate::rngstream::derive_seed(cfg.seed, "marl-agent", agent as u64),
            ..*cfg
        };
        let cert = estimate_violation(task, *oracle, &budgets[agent], &sub_cfg, clf.clone())
            .map_err(|e| Error::Training(format!("agent {agent}: {e}")))?;
        subs.push(cert);
    }

    let worst = subs
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| {
            a.estimate
                .v_tilde
                .partial_cmp(&b.estimate.v_tilde)
                .unwrap()
        })
        .map(|(i, _)| i)
        .unwrap();

    let any_no_guarantee = subs
        .iter()
        .any(|c| c.guarantee.kind == GuaranteeKind::NoGuarantee);
    let mut top_budget = subs[worst].budget;
    let eps_max = subs
        .iter()
        .map(|c| c.budget.eps)
        .fold(f64::NEG_INFINITY, f64::max);
    // union bound across agents; identities rebuilt from parts so the
    // budget checks stay bitwise
    top_budget.delta_clf = subs.iter().map(|c| c.budget.delta_clf).sum();
    top_budget.delta_ver = subs.iter().map(|c| c.budget.delta_ver).sum();
    top_budget.delta = top_budget.delta_clf + top_budget.delta_ver;
    top_budget.eps_ver = eps_max - top_budget.e_hat - top_budget.eps_clf;
    top_budget.eps = top_budget.e_hat + top_budget.eps_clf + top_budget.eps_ver;

    let worst_cert = &subs[worst];
    let mut cert = Certificate {
        toolkit_version: TOOLKIT_VERSION.into(),
        method: "marl-max".into(),
        task: TaskDescriptor {
            label: format!("max over {} agents: {}", subs.len(), worst_cert.task.label),
            hidden_dim: worst_cert.task.hidden_dim,
            margin: worst_cert.task.margin.clone(),
            state_enc: worst_cert.task.state_enc.clone(),
            obs: worst_cert.task.obs.clone(),
        },
        sampler_seed: cfg.seed,
        workers: rayon::current_num_threads().to_string(),
        budget: top_budget,
        samples: worst_cert.samples.clone(),
        estimate: worst_cert.estimate.clone(),
        guarantee: GuaranteeReport {
            kind: if any_no_guarantee {
                GuaranteeKind::NoGuarantee
            } else {
                worst_cert.guarantee.kind
            },
            required_n: worst_cert.guarantee.required_n,
            achieved_n: worst_cert.guarantee.achieved_n,
            supported_eps_ver: worst_cert.guarantee.supported_eps_ver,
        },
        feasibility_semantics: subs.iter().all(|c| c.feasibility_semantics),
        witness: worst_cert.witness.clone(),
        classifier: worst_cert.classifier.clone(),
        checkpoint_digests: Vec::new(),
        config_digest: String::new(),
        sub_certificates: subs,
        timing: Timing {
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    };
    // aggregate estimate is exactly the max over the embedded certificates
    cert.estimate.v_tilde = cert
        .sub_certificates
        .iter()
        .map(|c| c.estimate.v_tilde)
        .fold(f64::NEG_INFINITY, f64::max);
    cert.estimate.p_hat = cert.estimate.v_tilde / cert.estimate.vol_h;
    validate_certificate(&cert)?;
    Ok(cert)
}

/// The existential answer: a violation is reported iff at least one accepted
/// sample had margin <= 0. Absence of a witness is *not* a proof of safety;
/// the certificate stays sampling-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Violation { witness: Witness },
    NoViolationFound,
}

pub fn decide_existential(cert: &Certificate) -> Decision {
    match &cert.witness {
        Some(w) if w.margin <= 0.0 => Decision::Violation {
            witness: w.clone(),
        },
        _ => Decision::NoViolationFound,
    }
}
