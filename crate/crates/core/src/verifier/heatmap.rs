//! Per-state violation sweep over a navigation layout, exported as CSV and a
//! portable graymap image.

use crate::env::nav::{observe, state_encoding, NavEnv, NavState};
use crate::env::{desired_margin_inputs_nav, Cell};
use crate::error::Result;
use crate::nn::Policy;
use crate::rngstream::derive_seed;
use crate::verifier::certificate::{Certificate, ClassifierRef};
use crate::verifier::estimate::{
    estimate_violation, trivially_safe_certificate, EstimatorConfig,
};
use crate::verifier::oracle::FeasibilityOracle;
use crate::verifier::{margin_is_trivial, ErrorBudget, VerificationTask};

#[derive(Debug, Clone)]
pub struct HeatmapCell {
    pub cell: Cell,
    pub p_hat: f64,
    pub certificate: Certificate,
}

/// Violation fraction for every free, non-goal cell of the layout. Each cell
/// gets its own derived sample stream.
pub fn sweep_nav_states(
    env: &NavEnv,
    policy: &Policy,
    oracle: &dyn FeasibilityOracle,
    budget: &ErrorBudget,
    cfg: &EstimatorConfig,
    classifier_ref: Option<ClassifierRef>,
) -> Result<Vec<HeatmapCell>> {
    let mut out = Vec::new();
    for cell in env.spec.free_cells() {
        if cell == env.spec.goal {
            continue;
        }
        let state = NavState {
            cell,
            steps: 0,
            terminal: None,
        };
        let margin = desired_margin_inputs_nav(&env.spec, &state)?;
        let task = VerificationTask::new(
            policy.clone(),
            observe(&env.spec, cell),
            state_encoding(&env.spec, cell),
            margin.clone(),
            format!("nav {}x{} cell ({},{})", env.spec.width, env.spec.height, cell.x, cell.y),
        )?;
        let cell_cfg = EstimatorConfig {
            seed: derive_seed(cfg.seed, "heatmap-cell", (cell.y as u64) << 32 | cell.x as u64),
            ..*cfg
        };
        let certificate = if margin_is_trivial(&margin) {
            trivially_safe_certificate(&task, budget, cell_cfg.seed)?
        } else {
            estimate_violation(&task, oracle, budget, &cell_cfg, classifier_ref.clone())?
        };
        out.push(HeatmapCell {
            cell,
            p_hat: certificate.estimate.p_hat,
            certificate,
        });
    }
    Ok(out)
}

/// `x,y,p_hat` rows in row-major cell order.
pub fn heatmap_csv(cells: &[HeatmapCell]) -> String {
    let mut out = String::from("x,y,p_hat\n");
    for c in cells {
        out.push_str(&format!("{},{},{}\n", c.cell.x, c.cell.y, c.p_hat));
    }
    out
}

/// ASCII portable graymap (P2). Free cells scale the violation fraction onto
/// 0..=254 (brighter = more violations); obstacles render as 255; the goal
/// renders as 0.
pub fn heatmap_pgm(env: &NavEnv, cells: &[HeatmapCell]) -> String {
    let mut values = vec![vec![255u8; env.spec.width]; env.spec.height];
    for y in 0..env.spec.height as i32 {
        for x in 0..env.spec.width as i32 {
            if env.spec.is_free(Cell::new(x, y)) {
                values[y as usize][x as usize] = 0;
            }
        }
    }
    for c in cells {
        values[c.cell.y as usize][c.cell.x as usize] = (c.p_hat * 254.0).round() as u8;
    }
    let mut out = format!("P2\n{} {}\n255\n", env.spec.width, env.spec.height);
    for row in values {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::GridSpec;
    use crate::verifier::allocate_budget;
    use crate::verifier::oracle::PassAll;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sweep_covers_every_free_non_goal_cell() {
        let env = NavEnv::new(GridSpec::generate(4, 4, 3).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let policy = Policy::new(env.obs_dim(), 3, &[8], env.n_actions(), &mut rng);
        let budget = allocate_budget(0.3, 0.1, 0.0).unwrap();
        let cfg = EstimatorConfig::target(5);
        let cells =
            sweep_nav_states(&env, &policy, &PassAll, &budget, &cfg, None).unwrap();
        assert_eq!(cells.len(), env.spec.free_cells().len() - 1);

        let csv = heatmap_csv(&cells);
        assert_eq!(csv.lines().count(), cells.len() + 1);
        assert!(csv.starts_with("x,y,p_hat\n"));

        let pgm = heatmap_pgm(&env, &cells);
        let mut lines = pgm.lines();
        assert_eq!(lines.next(), Some("P2"));
        assert_eq!(lines.next(), Some("4 4"));
        assert_eq!(lines.next(), Some("255"));
        assert_eq!(lines.count(), 4);
    }
}
