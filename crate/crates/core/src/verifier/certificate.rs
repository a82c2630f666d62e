//! Verification certificates: everything needed to re-check the claim.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::verifier::{required_samples, ErrorBudget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuaranteeKind {
    /// (eps, delta) claim backed by the Hoeffding sample-size inequality.
    Hoeffding,
    /// The answer is exact by construction (e.g. no hidden state can violate).
    Exact,
    /// Deterministic over-approximation (grid baseline): no statistical
    /// claim attaches to the number.
    Deterministic,
    /// The sampler could not reach the required count; the certificate
    /// carries the weaker eps_ver its achieved count supports.
    NoGuarantee,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskDescriptor {
    pub label: String,
    pub hidden_dim: usize,
    pub margin: String,
    pub state_enc: Vec<f64>,
    pub obs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleCounts {
    pub drawn: u64,
    pub accepted: u64,
    /// Accepted samples actually scored against the margin (the first N in
    /// index order).
    pub evaluated: u64,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolumeEstimate {
    /// Violating fraction over evaluated feasible samples.
    pub p_hat: f64,
    /// Vol(H) = 2^n for H = [-1,1]^n.
    pub vol_h: f64,
    /// v_tilde = vol_h * p_hat.
    pub v_tilde: f64,
    /// p_hat * acceptance_rate: the violating fraction normalized by the
    /// whole hidden domain rather than the accepted set.
    pub h_normalized_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GuaranteeReport {
    pub kind: GuaranteeKind,
    pub required_n: u64,
    pub achieved_n: u64,
    /// For `NoGuarantee`: the eps_ver the achieved count does support.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub supported_eps_ver: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub sample_index: u64,
    pub hidden: Vec<f64>,
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierRef {
    pub e_hat: f64,
    pub validation_size: u64,
    pub eps_clf: f64,
    pub delta_clf: f64,
}

/// Wall-clock timing; explicitly excluded from the bitwise determinism
/// contract over artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub toolkit_version: String,
    pub method: String,
    pub task: TaskDescriptor,
    pub sampler_seed: u64,
    pub workers: String,
    pub budget: ErrorBudget,
    pub samples: SampleCounts,
    pub estimate: VolumeEstimate,
    pub guarantee: GuaranteeReport,
    /// True only for the filtered estimator backed by a validated classifier.
    pub feasibility_semantics: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classifier: Option<ClassifierRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checkpoint_digests: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub config_digest: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sub_certificates: Vec<Certificate>,
    pub timing: Timing,
}

impl Certificate {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Independent re-check of everything a certificate claims about itself:
/// budget identities, estimator ranges, and the sample-size inequality
/// behind any claimed guarantee.
pub fn validate_certificate(cert: &Certificate) -> Result<()> {
    let fail = |msg: String| Err(Error::OutOfRange(format!("certificate invalid: {msg}")));

    // statistical claims need a well-formed budget; exact and deterministic
    // answers carry none
    if matches!(
        cert.guarantee.kind,
        GuaranteeKind::Hoeffding | GuaranteeKind::NoGuarantee
    ) {
        if cert.feasibility_semantics {
            cert.budget.check()?;
        } else if cert.budget.delta_ver <= 0.0 || cert.budget.delta_ver >= 1.0 {
            // unfiltered estimators carry no classifier components
            return fail(format!("delta_ver {}", cert.budget.delta_ver));
        }
    }

    let est = &cert.estimate;
    if !(0.0..=1.0).contains(&est.p_hat) {
        return fail(format!("p_hat {}", est.p_hat));
    }
    if est.v_tilde < 0.0 || est.v_tilde > est.vol_h {
        return fail(format!("v_tilde {} outside [0, {}]", est.v_tilde, est.vol_h));
    }
    if est.v_tilde != est.vol_h * est.p_hat {
        return fail("v_tilde != vol_h * p_hat".into());
    }
    if cert.samples.accepted > cert.samples.drawn {
        return fail("accepted > drawn".into());
    }
    if cert.samples.evaluated > cert.samples.accepted {
        return fail("evaluated > accepted".into());
    }

    match cert.guarantee.kind {
        GuaranteeKind::Hoeffding => {
            let required = required_samples(cert.budget.eps_ver, cert.budget.delta_ver)?;
            if cert.guarantee.achieved_n < required {
                return fail(format!(
                    "claimed Hoeffding guarantee with N = {} < required {}",
                    cert.guarantee.achieved_n, required
                ));
            }
            if cert.samples.evaluated != cert.guarantee.achieved_n {
                return fail("achieved_n != evaluated".into());
            }
        }
        GuaranteeKind::Exact => {
            if est.p_hat != 0.0 && cert.samples.evaluated == 0 {
                return fail("exact certificate with unevaluated nonzero estimate".into());
            }
        }
        GuaranteeKind::Deterministic => {}
        GuaranteeKind::NoGuarantee => {
            if cert.guarantee.supported_eps_ver.is_none() && cert.samples.evaluated > 0 {
                return fail("no-guarantee certificate missing supported_eps_ver".into());
            }
            if let Some(eps) = cert.guarantee.supported_eps_ver {
                let required = required_samples(eps, cert.budget.delta_ver)?;
                if cert.samples.evaluated < required {
                    return fail(format!(
                        "supported_eps_ver {eps} not actually supported by N = {}",
                        cert.samples.evaluated
                    ));
                }
            }
        }
    }

    for sub in &cert.sub_certificates {
        validate_certificate(sub)?;
    }
    if !cert.sub_certificates.is_empty() {
        let max_sub = cert
            .sub_certificates
            .iter()
            .map(|c| c.estimate.v_tilde)
            .fold(f64::NEG_INFINITY, f64::max);
        if cert.estimate.v_tilde != max_sub {
            return fail("aggregate v_tilde is not the max of its sub-certificates".into());
        }
    }
    Ok(())
}
