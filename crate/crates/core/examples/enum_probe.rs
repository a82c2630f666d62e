use rnncert::baseline::{baseline_volume, exact_history_enumeration, EnumerationConfig, ExactSetOracle, VolumeConfig};
use rnncert::checkpoint::{load_mlp, load_policy};
use rnncert::env::nav::{observe, state_encoding, NavState};
use rnncert::env::{desired_margin_inputs_nav, Cell, GridSpec, NavEnv};
use rnncert::feasibility::FeasibilityClassifier;
use rnncert::rl::state_key_of;
use rnncert::verifier::estimate::estimate_task;
use rnncert::verifier::{allocate_budget, EstimatorConfig, VerificationTask};
use std::path::Path;
use std::time::Instant;

fn main() {
    let env = NavEnv::new(GridSpec::generate(4, 4, 0).unwrap());
    let policy = load_policy(Path::new("/tmp/smoke/policy.ckpt")).unwrap();
    let net = load_mlp(Path::new("/tmp/smoke4/classifier.ckpt"), "classifier").unwrap();
    let clf = FeasibilityClassifier { net, threshold: 0.5, state_dim: 2, hidden_dim: 4 };

    let t0 = Instant::now();
    let set = exact_history_enumeration(&env, &policy,
        &EnumerationConfig { cap: 10_000_000, quantum: 1e-6, horizon: None }).unwrap();
    println!("enumeration: {:.2}s, {} pairs", t0.elapsed().as_secs_f64(), set.total_pairs);

    let cell = Cell::new(1, 1);
    let state = NavState { cell, steps: 0, terminal: None };
    let margin = desired_margin_inputs_nav(&env.spec, &state).unwrap();
    let task = VerificationTask::new(policy.clone(), observe(&env.spec, cell),
        state_encoding(&env.spec, cell), margin, "probe").unwrap();
    let key = state_key_of(&task.state_enc);

    // baseline with the exact-set oracle at default r=16
    let oracle = ExactSetOracle::for_state(&set, key, 0.05).unwrap();
    let t1 = Instant::now();
    let out = baseline_volume(&task, &oracle, &VolumeConfig::default()).unwrap();
    let t_baseline = t1.elapsed().as_secs_f64();
    println!("baseline-exact r=16: {:.3}s, fraction {:.4}, feasible cells {}, indeterminate {}",
        t_baseline, out.violation_fraction, out.cells_feasible, out.cells_indeterminate);

    // classifier-filtered MC at 100k draws
    let budget = allocate_budget(0.05, 0.01, 0.0015).unwrap();
    let cfg_mc = EstimatorConfig::fixed_draws(7, 100_000);
    let t2 = Instant::now();
    let c = estimate_task(&task, &clf, budget, &cfg_mc, "x", false).unwrap();
    let t_mc = t2.elapsed().as_secs_f64();
    println!("mc-classifier 100k: {:.4}s, p_hat {:.4}, accepted {}", t_mc, c.estimate.p_hat, c.samples.accepted);
    println!("ratio: {:.1}x", t_baseline / t_mc);

    // GRU-12 scale check: estimator completes, baseline declares infeasible
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
    let env16 = NavEnv::new(GridSpec::generate(16, 16, 0).unwrap());
    let p16 = rnncert::nn::Policy::new(env16.obs_dim(), 12, &[32, 32], 4, &mut rng);
    let cell16 = Cell::new(5, 5);
    let st16 = NavState { cell: cell16, steps: 0, terminal: None };
    let m16 = desired_margin_inputs_nav(&env16.spec, &st16).unwrap();
    println!("16x16 margin at (5,5): {:?}", m16);
}
