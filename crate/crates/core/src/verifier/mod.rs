//! Probabilistic verification of recurrent policies: error-budget
//! allocation, Hoeffding sample sizes, the margin encoding that turns
//! "greedy action violates the behavior" into a sign check, and the
//! classifier-filtered Monte Carlo volume estimator.

pub mod certificate;
pub mod estimate;
pub mod heatmap;
pub mod oracle;

use crate::env::MarginInputs;
use crate::error::{Error, Result};
use crate::nn::Policy;
use crate::tensor::argmax;

pub use certificate::{validate_certificate, Certificate, GuaranteeKind};
pub use estimate::{
    decide_existential, estimate_violation, naive_monte_carlo, verify_marl, Decision, DrawLimit,
    EstimatorConfig, HiddenBoxTask,
};
pub use oracle::{FeasibilityOracle, PassAll};

/// Samples needed so an empirical mean of [0,1] variables sits within
/// `eps` of its expectation with probability at least `1 - delta`:
/// ceil(ln(2/delta) / (2 eps^2)).
pub fn required_samples(eps: f64, delta: f64) -> Result<u64> {
    if !(0.0..1.0).contains(&eps) || eps == 0.0 {
        return Err(Error::OutOfRange(format!(
            "eps component must lie in (0,1), got {eps}"
        )));
    }
    if !(0.0..1.0).contains(&delta) || delta == 0.0 {
        return Err(Error::OutOfRange(format!(
            "delta component must lie in (0,1), got {delta}"
        )));
    }
    Ok(((2.0 / delta).ln() / (2.0 * eps * eps)).ceil() as u64)
}

/// The smallest eps component that `n` samples support at confidence
/// `1 - delta`, nudged so `required_samples(eps, delta) <= n` holds.
pub fn supported_eps(n: u64, delta: f64) -> Option<f64> {
    if n == 0 {
        return None;
    }
    let mut eps = ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt();
    while required_samples(eps, delta).ok()? > n {
        eps = eps.next_up();
    }
    if eps < 1.0 {
        Some(eps)
    } else {
        None
    }
}

/// Split of the total (eps, delta) into classifier-side and verifier-side
/// components around the measured classifier error.
///
/// Identities `eps = e_hat + eps_clf + eps_ver` and
/// `delta = delta_clf + delta_ver` hold bitwise: `eps` is stored as the
/// re-assembled sum.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ErrorBudget {
    pub eps: f64,
    pub delta: f64,
    pub e_hat: f64,
    pub eps_clf: f64,
    pub eps_ver: f64,
    pub delta_clf: f64,
    pub delta_ver: f64,
}

impl ErrorBudget {
    pub fn check(&self) -> Result<()> {
        let ok = self.eps == self.e_hat + self.eps_clf + self.eps_ver
            && self.delta == self.delta_clf + self.delta_ver
            && self.eps_ver > 0.0
            && self.eps_ver < 1.0
            && self.delta_ver > 0.0
            && self.delta_ver < 1.0
            && self.eps < 1.0
            && self.delta < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::OutOfRange(format!("malformed error budget {self:?}")))
        }
    }
}

/// Even split of the remaining budget:
/// eps_clf = eps_ver = (eps - e_hat) / 2, delta_clf = delta_ver = delta / 2.
pub fn allocate_budget(eps: f64, delta: f64, e_hat: f64) -> Result<ErrorBudget> {
    if !(0.0..1.0).contains(&eps) || eps == 0.0 {
        return Err(Error::OutOfRange(format!(
            "total eps must lie in (0,1), got {eps}"
        )));
    }
    if !(0.0..1.0).contains(&delta) || delta == 0.0 {
        return Err(Error::OutOfRange(format!(
            "total delta must lie in (0,1), got {delta}"
        )));
    }
    if !(0.0..1.0).contains(&e_hat) {
        return Err(Error::OutOfRange(format!(
            "classifier error must lie in [0,1), got {e_hat}"
        )));
    }
    if eps <= e_hat {
        return Err(Error::InfeasibleBudget {
            eps,
            e_hat,
            min_eps: e_hat,
        });
    }
    let half = (eps - e_hat) / 2.0;
    let budget = ErrorBudget {
        eps: e_hat + half + half,
        delta: delta / 2.0 + delta / 2.0,
        e_hat,
        eps_clf: half,
        eps_ver: half,
        delta_clf: delta / 2.0,
        delta_ver: delta / 2.0,
    };
    budget.check()?;
    Ok(budget)
}

/// Margin of the greedy action against the behavioral constraint.
///
/// * unsafe-set form: `max_{a not in U} q[a] - max_{a in U} q[a]`
/// * required-action form: `q[req] - max_{a != req} q[a]`
///
/// Greedy selection breaks ties toward the lowest action index; an exact
/// zero margin is nudged so that `margin > 0` holds iff the greedy action
/// satisfies the behavior.
pub fn encode_margin(q: &[f64], inputs: &MarginInputs) -> Result<f64> {
    match inputs {
        MarginInputs::UnsafeSet(unsafe_set) => {
            if unsafe_set.is_empty() {
                return Err(Error::MarginUndefined(
                    "empty unsafe set: the behavior is trivially satisfied".into(),
                ));
            }
            if unsafe_set.len() >= q.len() {
                return Err(Error::MarginUndefined(
                    "every action is unsafe: the task is vacuous".into(),
                ));
            }
            if let Some(&bad) = unsafe_set.iter().find(|&&a| a >= q.len()) {
                return Err(Error::InvalidAction(bad));
            }
            let max_over = |pred: &dyn Fn(usize) -> bool| {
                q.iter()
                    .enumerate()
                    .filter(|(i, _)| pred(*i))
                    .map(|(_, v)| *v)
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            let safe = max_over(&|i| !unsafe_set.contains(&i));
            let unsafe_max = max_over(&|i| unsafe_set.contains(&i));
            let raw = safe - unsafe_max;
            if raw == 0.0 {
                // exact tie across the boundary: defer to the greedy tie-break
                if unsafe_set.contains(&argmax(q)) {
                    Ok(0.0)
                } else {
                    Ok(f64::MIN_POSITIVE)
                }
            } else {
                Ok(raw)
            }
        }
        MarginInputs::Required(req) => {
            if *req >= q.len() {
                return Err(Error::InvalidAction(*req));
            }
            if q.len() < 2 {
                return Err(Error::MarginUndefined(
                    "required-action margin needs at least two actions".into(),
                ));
            }
            let others = q
                .iter()
                .enumerate()
                .filter(|(i, _)| i != req)
                .map(|(_, v)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            let raw = q[*req] - others;
            if raw == 0.0 {
                if argmax(q) == *req {
                    Ok(f64::MIN_POSITIVE)
                } else {
                    Ok(0.0)
                }
            } else {
                Ok(raw)
            }
        }
    }
}

/// Whether the margin descriptor makes every hidden state trivially safe
/// (nothing to violate at this state).
pub fn margin_is_trivial(inputs: &MarginInputs) -> bool {
    matches!(inputs, MarginInputs::UnsafeSet(s) if s.is_empty())
}

/// A verification query: one policy, one observation (with its state
/// encoding for the feasibility oracle) and the margin descriptor.
#[derive(Debug, Clone)]
pub struct VerificationTask {
    pub policy: Policy,
    pub obs: Vec<f64>,
    pub state_enc: Vec<f64>,
    pub margin: MarginInputs,
    /// Human-readable task label embedded in certificates.
    pub label: String,
}

impl VerificationTask {
    pub fn new(
        policy: Policy,
        obs: Vec<f64>,
        state_enc: Vec<f64>,
        margin: MarginInputs,
        label: impl Into<String>,
    ) -> Result<Self> {
        if obs.len() != policy.gru.input_dim {
            return Err(Error::DimMismatch {
                context: "task observation",
                expected: policy.gru.input_dim,
                actual: obs.len(),
            });
        }
        match &margin {
            MarginInputs::UnsafeSet(set) => {
                if set.len() >= policy.n_actions() && !set.is_empty() {
                    return Err(Error::MarginUndefined(
                        "every action is unsafe: the task is vacuous".into(),
                    ));
                }
            }
            MarginInputs::Required(a) => {
                if *a >= policy.n_actions() {
                    return Err(Error::InvalidAction(*a));
                }
            }
        }
        Ok(VerificationTask {
            policy,
            obs,
            state_enc,
            margin,
            label: label.into(),
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.policy.hidden_dim()
    }

    /// Margin of the policy's decision given candidate prior hidden `h`.
    pub fn margin_at(&self, h: &[f64]) -> f64 {
        let (q, _) = self
            .policy
            .forward(h, &self.obs)
            .expect("dims checked at construction");
        encode_margin(&q, &self.margin).expect("descriptor checked at construction")
    }
}

/// Margin sign agreement oracle used across tests: simulate the greedy
/// action directly and compare with the margin sign.
pub fn greedy_violates(q: &[f64], inputs: &MarginInputs) -> bool {
    let a = argmax(q);
    match inputs {
        MarginInputs::UnsafeSet(set) => set.contains(&a),
        MarginInputs::Required(req) => a != *req,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn sample_size_matches_hand_arithmetic() {
        // ceil(ln(4000)/0.0008) = 10368
        assert_eq!(required_samples(0.02, 5e-4).unwrap(), 10368);
        // ceil(ln 4 / 0.5) = 3
        assert_eq!(required_samples(0.5, 0.5).unwrap(), 3);
    }

    #[test]
    fn halving_eps_quadruples_the_bound() {
        for (eps, delta) in [(0.1, 0.01), (0.04, 0.001), (0.2, 0.3)] {
            let n = required_samples(eps, delta).unwrap();
            let n4 = required_samples(eps / 2.0, delta).unwrap();
            // equality up to the two ceilings
            assert!(n4 >= 4 * (n - 1) && n4 <= 4 * n, "{n} vs {n4}");
        }
    }

    #[test]
    fn out_of_range_inputs_are_rejected() {
        assert!(required_samples(0.0, 0.5).is_err());
        assert!(required_samples(1.0, 0.5).is_err());
        assert!(required_samples(0.5, 0.0).is_err());
        assert!(required_samples(0.5, 1.0).is_err());
    }

    #[test]
    fn supported_eps_is_consistent_with_required_samples() {
        for &(n, delta) in &[(100u64, 0.01), (10368, 5e-4), (7, 0.5)] {
            let eps = supported_eps(n, delta).unwrap();
            assert!(required_samples(eps, delta).unwrap() <= n);
            // slightly smaller eps must demand more samples
            assert!(required_samples(eps * 0.999, delta).unwrap() > n);
        }
    }

    #[test]
    fn worked_budget_split() {
        let b = allocate_budget(0.05, 0.001, 0.01).unwrap();
        assert!((b.eps_clf - 0.02).abs() < 1e-15);
        assert!((b.eps_ver - 0.02).abs() < 1e-15);
        assert!((b.delta_clf - 5e-4).abs() < 1e-19);
        assert!((b.delta_ver - 5e-4).abs() < 1e-19);
        b.check().unwrap();
    }

    #[test]
    fn zero_classifier_error_splits_eps_in_half() {
        let b = allocate_budget(0.1, 0.01, 0.0).unwrap();
        assert_eq!(b.eps_clf, 0.05);
        assert_eq!(b.eps_ver, 0.05);
    }

    #[test]
    fn budget_smaller_than_classifier_error_is_infeasible() {
        let err = allocate_budget(0.01, 0.01, 0.02).unwrap_err();
        match err {
            Error::InfeasibleBudget { min_eps, .. } => assert_eq!(min_eps, 0.02),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn margin_basic_cases() {
        let unsafe1 = MarginInputs::UnsafeSet(BTreeSet::from([1]));
        assert_eq!(encode_margin(&[1.0, 0.0], &unsafe1).unwrap(), 1.0);
        assert_eq!(encode_margin(&[0.2, 0.9], &unsafe1).unwrap(), -0.7);
    }

    #[test]
    fn margin_rejects_vacuous_and_empty_sets() {
        let all = MarginInputs::UnsafeSet(BTreeSet::from([0, 1]));
        assert!(encode_margin(&[0.1, 0.2], &all).is_err());
        let none = MarginInputs::UnsafeSet(BTreeSet::new());
        assert!(encode_margin(&[0.1, 0.2], &none).is_err());
    }

    #[test]
    fn margin_sign_agrees_with_greedy_simulation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1234);
        for trial in 0..10_000 {
            let n = rng.random_range(2..6);
            let mut q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            // inject exact ties in some trials
            if trial % 5 == 0 && n >= 3 {
                q[1] = q[0];
            }
            let inputs = if trial % 2 == 0 {
                let k = rng.random_range(1..n);
                let mut set = BTreeSet::new();
                while set.len() < k {
                    set.insert(rng.random_range(0..n));
                }
                if set.len() >= n {
                    continue;
                }
                MarginInputs::UnsafeSet(set)
            } else {
                MarginInputs::Required(rng.random_range(0..n))
            };
            let Ok(margin) = encode_margin(&q, &inputs) else {
                continue;
            };
            assert_eq!(
                margin <= 0.0,
                greedy_violates(&q, &inputs),
                "q={q:?} inputs={inputs:?} margin={margin}"
            );
        }
    }
}
