//! Discretized volume baseline: partition the hidden domain into axis-aligned
//! cells, keep the cells whose centers the feasibility oracle accepts, and
//! decide each kept cell's violation status by interval propagation
//! (subdividing indeterminate cells once, then falling back to the center).

use std::time::Instant;

use crate::error::{Error, Result};
use crate::verifier::oracle::FeasibilityOracle;
use crate::verifier::{margin_is_trivial, VerificationTask};

use super::interval::{interval_gru_step, interval_margin, interval_mlp, IntervalVector};

#[derive(Debug, Clone)]
pub struct VolumeConfig {
    /// Cells per axis; 0 picks the default for the hidden dimension
    /// (16 up to 4 dims, 6 up to 8, then declared infeasible by the cap).
    pub resolution: u32,
    pub cell_cap: u64,
}

impl Default for VolumeConfig {
    fn default() -> Self {
        VolumeConfig {
            resolution: 0,
            cell_cap: 10_000_000,
        }
    }
}

pub fn default_resolution(hidden_dim: usize) -> u32 {
    if hidden_dim <= 4 {
        16
    } else {
        6
    }
}

#[derive(Debug, Clone)]
pub struct VolumeOutcome {
    /// Violating fraction among feasible cells.
    pub violation_fraction: f64,
    pub feasible_weight: f64,
    pub violating_weight: f64,
    pub cells_total: u64,
    pub cells_feasible: u64,
    pub cells_indeterminate: u64,
    /// Subcells whose status came from a center evaluation rather than a
    /// sound bound.
    pub center_resolved: u64,
    pub approximate: bool,
    pub resolution: u32,
    pub wall_seconds: f64,
}

struct CellGrid {
    resolution: u32,
    dims: usize,
    index: Vec<u32>,
    done: bool,
}

impl CellGrid {
    fn new(resolution: u32, dims: usize) -> Self {
        CellGrid {
            resolution,
            dims,
            index: vec![0; dims],
            done: false,
        }
    }
}

impl Iterator for CellGrid {
    type Item = IntervalVector;

    fn next(&mut self) -> Option<IntervalVector> {
        if self.done {
            return None;
        }
        let width = 2.0 / self.resolution as f64;
        let lo: Vec<f64> = self.index.iter().map(|&i| -1.0 + i as f64 * width).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + width).collect();
        // odometer increment
        let mut d = 0;
        loop {
            if d == self.dims {
                self.done = true;
                break;
            }
            self.index[d] += 1;
            if self.index[d] < self.resolution {
                break;
            }
            self.index[d] = 0;
            d += 1;
        }
        Some(IntervalVector { lo, hi })
    }
}

fn split_box(cell: &IntervalVector) -> Vec<IntervalVector> {
    let dims = cell.len();
    let mids: Vec<f64> = cell.center();
    let mut out = Vec::with_capacity(1 << dims);
    for mask in 0u32..(1 << dims) {
        let mut lo = Vec::with_capacity(dims);
        let mut hi = Vec::with_capacity(dims);
        for d in 0..dims {
            if mask & (1 << d) == 0 {
                lo.push(cell.lo[d]);
                hi.push(mids[d]);
            } else {
                lo.push(mids[d]);
                hi.push(cell.hi[d]);
            }
        }
        out.push(IntervalVector { lo, hi });
    }
    out
}

enum CellStatus {
    Safe,
    Violating,
    Indeterminate,
}

fn interval_status(task: &VerificationTask, cell: &IntervalVector) -> Result<CellStatus> {
    let obs = IntervalVector::point(&task.obs);
    let h_next = interval_gru_step(&task.policy.gru, cell, &obs);
    let q = interval_mlp(&task.policy.head, &h_next);
    let (lo, hi) = interval_margin(&q, &task.margin)?;
    Ok(if lo > 0.0 {
        CellStatus::Safe
    } else if hi <= 0.0 {
        CellStatus::Violating
    } else {
        CellStatus::Indeterminate
    })
}

/// Exact-enumeration style volume estimate over the discretized hidden
/// domain. Sequential by design; every cell evaluation is pure.
pub fn baseline_volume(
    task: &VerificationTask,
    oracle: &dyn FeasibilityOracle,
    cfg: &VolumeConfig,
) -> Result<VolumeOutcome> {
    let start = Instant::now();
    let dims = task.hidden_dim();
    let resolution = if cfg.resolution == 0 {
        default_resolution(dims)
    } else {
        cfg.resolution
    };
    let cells: u128 = (resolution as u128)
        .checked_pow(dims as u32)
        .ok_or(Error::CellCap {
            resolution,
            dims,
            cells: u128::MAX,
            cap: cfg.cell_cap,
        })?;
    if cells > cfg.cell_cap as u128 {
        return Err(Error::CellCap {
            resolution,
            dims,
            cells,
            cap: cfg.cell_cap,
        });
    }

    if margin_is_trivial(&task.margin) {
        return Ok(VolumeOutcome {
            violation_fraction: 0.0,
            feasible_weight: 0.0,
            violating_weight: 0.0,
            cells_total: cells as u64,
            cells_feasible: 0,
            cells_indeterminate: 0,
            center_resolved: 0,
            approximate: false,
            resolution,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }

    let mut feasible_weight = 0.0f64;
    let mut violating_weight = 0.0f64;
    let mut cells_feasible = 0u64;
    let mut cells_indeterminate = 0u64;
    let mut center_resolved = 0u64;

    let sub_weight = 1.0 / (1u64 << dims) as f64;
    for cell in CellGrid::new(resolution, dims) {
        if !oracle.accepts(&task.state_enc, &cell.center()) {
            continue;
        }
        cells_feasible += 1;
        match interval_status(task, &cell)? {
            CellStatus::Safe => feasible_weight += 1.0,
            CellStatus::Violating => {
                feasible_weight += 1.0;
                violating_weight += 1.0;
            }
            CellStatus::Indeterminate => {
                cells_indeterminate += 1;
                // one round of subdivision; each subcell re-queries the
                // oracle at its own center and unresolved subcells fall back
                // to a concrete evaluation there
                for sub in split_box(&cell) {
                    if !oracle.accepts(&task.state_enc, &sub.center()) {
                        continue;
                    }
                    feasible_weight += sub_weight;
                    match interval_status(task, &sub)? {
                        CellStatus::Safe => {}
                        CellStatus::Violating => violating_weight += sub_weight,
                        CellStatus::Indeterminate => {
                            center_resolved += 1;
                            if task.margin_at(&sub.center()) <= 0.0 {
                                violating_weight += sub_weight;
                            }
                        }
                    }
                }
            }
        }
    }

    Ok(VolumeOutcome {
        violation_fraction: if feasible_weight == 0.0 {
            0.0
        } else {
            violating_weight / feasible_weight
        },
        feasible_weight,
        violating_weight,
        cells_total: cells as u64,
        cells_feasible,
        cells_indeterminate,
        center_resolved,
        approximate: center_resolved > 0,
        resolution,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Wrap a baseline outcome in the common certificate JSON. The baseline is a
/// deterministic over-approximation; the budget carries no statistical claim.
pub fn volume_certificate(
    task: &VerificationTask,
    outcome: &VolumeOutcome,
    oracle_name: &str,
) -> Result<crate::verifier::Certificate> {
    use crate::verifier::certificate::*;
    use crate::verifier::estimate::VolumeTask;
    use crate::verifier::ErrorBudget;

    let vol_h = (2.0f64).powi(task.hidden_dim() as i32);
    let cert = Certificate {
        toolkit_version: crate::TOOLKIT_VERSION.into(),
        method: format!("baseline-enumeration({oracle_name}, r={})", outcome.resolution),
        task: VolumeTask::descriptor(task),
        sampler_seed: 0,
        workers: "1".into(),
        budget: ErrorBudget {
            eps: 0.0,
            delta: 0.0,
            e_hat: 0.0,
            eps_clf: 0.0,
            eps_ver: 0.0,
            delta_clf: 0.0,
            delta_ver: 0.0,
        },
        samples: SampleCounts {
            drawn: outcome.cells_total,
            accepted: outcome.cells_feasible,
            evaluated: outcome.cells_feasible,
            acceptance_rate: if outcome.cells_total == 0 {
                0.0
            } else {
                outcome.cells_feasible as f64 / outcome.cells_total as f64
            },
        },
        estimate: VolumeEstimate {
            p_hat: outcome.violation_fraction,
            vol_h,
            v_tilde: vol_h * outcome.violation_fraction,
            h_normalized_fraction: if outcome.cells_total == 0 {
                0.0
            } else {
                outcome.violation_fraction * outcome.cells_feasible as f64
                    / outcome.cells_total as f64
            },
        },
        guarantee: GuaranteeReport {
            kind: GuaranteeKind::Deterministic,
            required_n: 0,
            achieved_n: outcome.cells_feasible,
            supported_eps_ver: None,
        },
        feasibility_semantics: false,
        witness: None,
        classifier: None,
        checkpoint_digests: Vec::new(),
        config_digest: String::new(),
        sub_certificates: Vec::new(),
        timing: Timing {
            wall_seconds: outcome.wall_seconds,
        },
    };
    crate::verifier::validate_certificate(&cert)?;
    Ok(cert)
}
