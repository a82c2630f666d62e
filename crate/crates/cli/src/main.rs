//! Operator surface: train policies, collect feasibility data, train and
//! validate the classifier, verify states, run the baseline, and size
//! sample budgets.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rnncert::baseline::{
    baseline_volume, exact_history_enumeration, EnumerationConfig, ExactSetOracle, VolumeConfig,
};
use rnncert::checkpoint::{self, file_digest};
use rnncert::env::nav::{observe, state_encoding, NavState};
use rnncert::env::{desired_margin_inputs_bp, desired_margin_inputs_nav, Cell, MarginInputs};
use rnncert::error::Error;
use rnncert::feasibility::{
    collect_pairs_bp, collect_pairs_nav, make_negatives, train_classifier, validate_classifier,
    ClassifierReport, CollectConfig, FeasibilityClassifier, FeasibilityDataset,
};
use rnncert::rl::ctde::train_ctde_bp;
use rnncert::rl::drqn::{evaluate_success, train_drqn};
use rnncert::rl::log_to_csv;
use rnncert::rngstream::derive_seed;
use rnncert::verifier::certificate::ClassifierRef;
use rnncert::verifier::estimate::trivially_safe_certificate;
use rnncert::verifier::heatmap::{heatmap_csv, heatmap_pgm, sweep_nav_states};
use rnncert::verifier::{
    allocate_budget, estimate_violation, margin_is_trivial, naive_monte_carlo, required_samples,
    validate_certificate, verify_marl, Certificate, EstimatorConfig, FeasibilityOracle,
    VerificationTask,
};

use config::{RunConfig, Task};

#[derive(Parser)]
#[command(
    name = "rnncert",
    about = "Train recurrent gridworld policies and certify their behavioral violations",
    version
)]
struct Cli {
    /// Worker threads for sampling and cell evaluation (results are
    /// independent of this).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonRun {
    /// Task preset: nav4 | nav8 | nav16 | bp10 | bp20.
    #[arg(long)]
    task: String,

    /// Run seed (training, collection, classifier).
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Layout seed (obstacle placement). Fixed per run and recorded in
    /// artifacts.
    #[arg(long, default_value_t = 0)]
    grid_seed: u64,

    /// Optional config file (same text format as checkpoints); flags
    /// override file values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Print the fully-resolved config and exit.
    #[arg(long, default_value_t = false)]
    print_config: bool,
}

impl CommonRun {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut rc = RunConfig::for_task(Task::parse(&self.task)?, self.seed);
        if let Some(path) = &self.config {
            let doc = rnncert::textdoc::TextDoc::read_from(path)?;
            rc.apply_doc(&doc)?;
        }
        // explicit flags win over the file
        rc.seed = self.seed;
        rc.grid_seed = self.grid_seed;
        rc.train.seed = self.seed;
        rc.classifier.seed = self.seed;
        Ok(rc)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a recurrent Q-policy (DRQN for nav, CTDE pair for bp).
    Train {
        #[command(flatten)]
        common: CommonRun,
        /// Episode budget override.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Roll the trained policy with exploration and record
    /// (state, hidden-state) pairs; synthesizes label-0 rows.
    Collect {
        #[command(flatten)]
        common: CommonRun,
        /// Policy checkpoint (nav) or agent-0 checkpoint (bp).
        #[arg(long)]
        checkpoint: PathBuf,
        /// Agent-1 checkpoint (bp only).
        #[arg(long)]
        checkpoint2: Option<PathBuf>,
        /// Stop once this many recorded pairs exist.
        #[arg(long)]
        min_pairs: Option<usize>,
        /// Label-0 rows per label-1 row.
        #[arg(long)]
        negatives_ratio: Option<f64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Train the feasibility classifier on a dataset and write its
    /// validation report.
    TrainClassifier {
        #[command(flatten)]
        common: CommonRun,
        #[arg(long)]
        dataset: PathBuf,
        /// Classifier-side error slice the report must back.
        #[arg(long, default_value_t = 0.02)]
        eps_clf: f64,
        #[arg(long, default_value_t = 5e-4)]
        delta_clf: f64,
        /// Epoch override.
        #[arg(long)]
        epochs: Option<usize>,
        /// Output suffix for bp agent datasets (writes classifier<suffix>.*).
        #[arg(long, default_value = "")]
        suffix: String,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Estimate the violating hidden-state volume at a query state.
    Verify {
        #[command(flatten)]
        common: CommonRun,
        #[arg(long)]
        policy: PathBuf,
        /// Second agent's policy (bp --marl).
        #[arg(long)]
        policy2: Option<PathBuf>,
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(long)]
        classifier2: Option<PathBuf>,
        /// Classifier validation report (required with --classifier).
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        report2: Option<PathBuf>,
        /// Nav query cell "x,y".
        #[arg(long)]
        state: Option<String>,
        /// Verify every free cell and emit heatmap files.
        #[arg(long, default_value_t = false)]
        all_states: bool,
        #[arg(long, default_value_t = false)]
        heatmap: bool,
        /// Max-aggregated two-agent verification (bp tasks).
        #[arg(long, default_value_t = false)]
        marl: bool,
        /// Skip the feasibility filter (unfiltered estimator).
        #[arg(long, default_value_t = false)]
        naive: bool,
        /// Total error tolerance.
        #[arg(long)]
        eps: Option<f64>,
        /// Total confidence parameter.
        #[arg(long)]
        delta: Option<f64>,
        /// Fixed draw budget instead of the (eps, delta) target.
        #[arg(long)]
        samples: Option<u64>,
        /// Sampler seed (defaults to the run seed).
        #[arg(long)]
        sampler_seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Discretized volume baseline at a query state.
    Baseline {
        #[command(flatten)]
        common: CommonRun,
        #[arg(long)]
        policy: PathBuf,
        /// Nav query cell "x,y".
        #[arg(long)]
        state: Option<String>,
        /// Feasibility oracle: exact | classifier.
        #[arg(long, default_value = "exact")]
        oracle: String,
        #[arg(long)]
        classifier: Option<PathBuf>,
        /// Cells per axis (0 = default for the hidden size).
        #[arg(long, default_value_t = 0)]
        resolution: u32,
        /// Enumeration configuration-count cap.
        #[arg(long, default_value_t = 10_000_000)]
        enum_cap: usize,
        /// Ball radius for exact-set membership.
        #[arg(long, default_value_t = 0.05)]
        radius: f64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Print the error-budget split and the Hoeffding sample sizes.
    SampleSize {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        /// Measured classifier error to subtract from the budget.
        #[arg(long, default_value_t = 0.0)]
        e_hat: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::OutOfRange(_) | Error::InvalidAction(_) => 2,
                Error::InfeasibleBudget { .. } | Error::ValidationTooSmall { .. } => 3,
                Error::EnumerationCap { .. } | Error::CellCap { .. } => 4,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn write_config(out_dir: &Path, name: &str, rc: &RunConfig) -> Result<String, Error> {
    std::fs::create_dir_all(out_dir)?;
    let doc = rc.to_doc();
    let text = doc.render();
    std::fs::write(out_dir.join(name), &text)?;
    Ok(checkpoint::text_digest(&text))
}

fn parse_cell(spec: &str) -> Result<Cell, Error> {
    let (x, y) = spec
        .split_once(',')
        .ok_or_else(|| Error::OutOfRange(format!("state must be \"x,y\", got {spec:?}")))?;
    Ok(Cell::new(
        x.trim()
            .parse()
            .map_err(|e| Error::OutOfRange(format!("bad state x: {e}")))?,
        y.trim()
            .parse()
            .map_err(|e| Error::OutOfRange(format!("bad state y: {e}")))?,
    ))
}

fn load_classifier(path: &Path) -> Result<FeasibilityClassifier, Error> {
    let net = checkpoint::load_mlp(path, "classifier")?;
    let input = net.input_dim();
    Ok(FeasibilityClassifier {
        net,
        threshold: 0.5,
        state_dim: 0, // informational only; set by callers that know it
        hidden_dim: input,
    })
}

fn classifier_ref_from_report(report: &ClassifierReport) -> ClassifierRef {
    ClassifierRef {
        e_hat: report.e_hat,
        validation_size: report.validation_size,
        eps_clf: report.eps_clf,
        delta_clf: report.delta_clf,
    }
}

fn nav_task(
    env: &rnncert::env::nav::NavEnv,
    policy: &rnncert::nn::Policy,
    cell: Cell,
    label: &str,
) -> Result<(VerificationTask, MarginInputs), Error> {
    if !env.spec.is_free(cell) {
        return Err(Error::OutOfRange(format!(
            "cell ({},{}) is not a free cell of the layout",
            cell.x, cell.y
        )));
    }
    if cell == env.spec.goal {
        return Err(Error::OutOfRange(
            "the goal cell admits no further decisions".into(),
        ));
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
        label.to_string(),
    )?;
    Ok((task, margin))
}

fn write_certificate(path: &Path, cert: &Certificate) -> Result<(), Error> {
    validate_certificate(cert)?;
    std::fs::write(path, cert.to_json()?)?;
    println!(
        "{}: p_hat {:.6} (v_tilde {:.6} of {}), eps {:.4}, delta {:.6}, {} evaluated / {} drawn -> {}",
        cert.method,
        cert.estimate.p_hat,
        cert.estimate.v_tilde,
        cert.estimate.vol_h,
        cert.budget.eps,
        cert.budget.delta,
        cert.samples.evaluated,
        cert.samples.drawn,
        path.display()
    );
    Ok(())
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Train {
            common,
            episodes,
            out_dir,
        } => {
            let mut rc = common.resolve()?;
            if let Some(e) = episodes {
                rc.train.episodes = e;
            }
            if common.print_config {
                print!("{}", rc.to_doc().render());
                return Ok(());
            }
            let digest = write_config(&out_dir, "config-train.txt", &rc)?;
            let stamp = |doc: &mut rnncert::textdoc::TextDoc| {
                doc.section("meta")
                    .set("config_digest", digest.clone())
                    .set_u64("seed", rc.seed)
                    .set_u64("grid_seed", rc.grid_seed);
            };
            if rc.task.is_nav() {
                let env = rc.task.nav_env(rc.grid_seed)?;
                std::fs::write(out_dir.join("grid.map"), env.spec.to_map_string())?;
                let (bundle, _, log) = train_drqn(&env, &rc.train)?;
                let mut doc = checkpoint::policy_to_doc(&bundle.online);
                stamp(&mut doc);
                doc.write_to(&out_dir.join("policy.ckpt"))?;
                let csv = format!(
                    "# config_digest {digest}\n# seed {}\n{}",
                    rc.seed,
                    log_to_csv(&log)
                );
                std::fs::write(out_dir.join("training_log.csv"), csv)?;
                let success = evaluate_success(&env, &bundle.online, 100)?;
                println!(
                    "trained {} for {} episodes; greedy goal rate {:.0}% -> {}",
                    rc.task.name(),
                    rc.train.episodes,
                    success * 100.0,
                    out_dir.join("policy.ckpt").display()
                );
            } else {
                let env = rc.task.bp_env(rc.grid_seed)?;
                let (bundles, _, log) = train_ctde_bp(&env, &rc.train)?;
                for (i, bundle) in bundles.iter().enumerate() {
                    let mut doc = checkpoint::policy_to_doc(&bundle.online);
                    stamp(&mut doc);
                    doc.write_to(&out_dir.join(format!("policy_agent{i}.ckpt")))?;
                }
                let csv = format!(
                    "# config_digest {digest}\n# seed {}\n{}",
                    rc.seed,
                    log_to_csv(&log)
                );
                std::fs::write(out_dir.join("training_log.csv"), csv)?;
                let success = rnncert::rl::ctde::evaluate_bp_success(
                    &env,
                    [&bundles[0].online, &bundles[1].online],
                    100,
                )?;
                println!(
                    "trained {} for {} episodes; greedy delivery rate {:.0}% -> {}",
                    rc.task.name(),
                    rc.train.episodes,
                    success * 100.0,
                    out_dir.display()
                );
            }
            Ok(())
        }

        Command::Collect {
            common,
            checkpoint: ckpt_path,
            checkpoint2,
            min_pairs,
            negatives_ratio,
            out_dir,
        } => {
            let mut rc = common.resolve()?;
            if let Some(m) = min_pairs {
                rc.min_pairs = m;
            }
            if let Some(r) = negatives_ratio {
                rc.negatives_ratio = r;
            }
            if common.print_config {
                print!("{}", rc.to_doc().render());
                return Ok(());
            }
            let digest = write_config(&out_dir, "config-collect.txt", &rc)?;
            let collect_cfg = CollectConfig {
                min_pairs: rc.min_pairs,
                max_episodes: rc.min_pairs.max(1000) * 4,
                seed: derive_seed(rc.seed, "cli-collect", 0),
                ..CollectConfig::default()
            };
            let write_ds = |ds: &FeasibilityDataset, name: &str| -> Result<(), Error> {
                let csv = format!("# config_digest {digest}\n# seed {}\n{}", rc.seed, ds.to_csv());
                std::fs::write(out_dir.join(name), csv)?;
                println!(
                    "{name}: {} rows ({} recorded, {} synthesized)",
                    ds.pairs.len(),
                    ds.positives(),
                    ds.negatives()
                );
                Ok(())
            };
            if rc.task.is_nav() {
                let env = rc.task.nav_env(rc.grid_seed)?;
                let policy = checkpoint::load_policy(&ckpt_path)?;
                let mut ds = collect_pairs_nav(&env, &policy, &[], &collect_cfg)?;
                if ds.positives() == 0 {
                    return Err(Error::Dataset("no pairs recorded".into()));
                }
                if rc.negatives_ratio > 0.0 {
                    make_negatives(
                        &mut ds,
                        rc.negatives_ratio,
                        rc.tau,
                        derive_seed(rc.seed, "cli-negatives", 0),
                    )?;
                }
                write_ds(&ds, "dataset.csv")?;
            } else {
                let env = rc.task.bp_env(rc.grid_seed)?;
                let p0 = checkpoint::load_policy(&ckpt_path)?;
                let p1 = checkpoint::load_policy(checkpoint2.as_deref().ok_or_else(|| {
                    Error::OutOfRange("bp collection needs --checkpoint2".into())
                })?)?;
                let [mut d0, mut d1] = collect_pairs_bp(&env, [&p0, &p1], &collect_cfg)?;
                if rc.negatives_ratio > 0.0 {
                    make_negatives(
                        &mut d0,
                        rc.negatives_ratio,
                        rc.tau,
                        derive_seed(rc.seed, "cli-negatives", 0),
                    )?;
                    make_negatives(
                        &mut d1,
                        rc.negatives_ratio,
                        rc.tau,
                        derive_seed(rc.seed, "cli-negatives", 1),
                    )?;
                }
                write_ds(&d0, "dataset_agent0.csv")?;
                write_ds(&d1, "dataset_agent1.csv")?;
            }
            Ok(())
        }

        Command::TrainClassifier {
            common,
            dataset,
            eps_clf,
            delta_clf,
            epochs,
            suffix,
            out_dir,
        } => {
            let mut rc = common.resolve()?;
            if let Some(e) = epochs {
                rc.classifier.epochs = e;
            }
            if common.print_config {
                print!("{}", rc.to_doc().render());
                return Ok(());
            }
            let digest = write_config(
                &out_dir,
                &format!("config-train-classifier{suffix}.txt"),
                &rc,
            )?;
            let text = std::fs::read_to_string(&dataset)?;
            let recorded = FeasibilityDataset::from_csv(&text)?;
            let (ds, clf, summary) = if recorded.negatives() == 0 {
                // recorded-only input: balanced training side, validation side
                // padded until it backs the (eps_clf, delta_clf) claim
                let min_val = required_samples(eps_clf, delta_clf)? as usize;
                let (ds, train_idx, val_idx) = rnncert::feasibility::compose_split(
                    &recorded,
                    rc.negatives_ratio.max(1.0),
                    rc.tau,
                    rc.classifier.val_frac,
                    min_val,
                    derive_seed(rc.seed, "cli-compose", 0),
                )?;
                let (clf, summary) =
                    rnncert::feasibility::classifier::train_classifier_on(
                        &ds,
                        &train_idx,
                        &val_idx,
                        &rc.classifier,
                    )?;
                (ds, clf, summary)
            } else {
                let (clf, summary) = train_classifier(&recorded, &rc.classifier)?;
                (recorded, clf, summary)
            };
            let report = validate_classifier(&clf, &ds, &summary.val_indices, eps_clf, delta_clf)?;

            let mut doc = rnncert::textdoc::TextDoc::new();
            doc.section("meta")
                .set("format", "checkpoint")
                .set("kind", "classifier")
                .set("toolkit_version", rnncert::TOOLKIT_VERSION)
                .set("config_digest", digest)
                .set_u64("seed", rc.seed)
                .set_usize("state_dim", ds.state_dim)
                .set_usize("hidden_dim", ds.hidden_dim);
            checkpoint::mlp_to_doc(&mut doc, "net", &clf.net);
            doc.write_to(&out_dir.join(format!("classifier{suffix}.ckpt")))?;
            std::fs::write(
                out_dir.join(format!("classifier_report{suffix}.json")),
                report.to_json()?,
            )?;
            println!(
                "classifier{suffix}: accuracy {:.4} (e_hat {:.4}) on {} held-out rows (best epoch {} of {})",
                report.accuracy, report.e_hat, report.validation_size, summary.best_epoch, summary.epochs_run
            );
            Ok(())
        }

        Command::Verify {
            common,
            policy,
            policy2,
            classifier,
            classifier2,
            report,
            report2,
            state,
            all_states,
            heatmap,
            marl,
            naive,
            eps,
            delta,
            samples,
            sampler_seed,
            out_dir,
        } => {
            let mut rc = common.resolve()?;
            if let Some(e) = eps {
                rc.eps = e;
            }
            if let Some(d) = delta {
                rc.delta = d;
            }
            if common.print_config {
                print!("{}", rc.to_doc().render());
                return Ok(());
            }
            let digest = write_config(&out_dir, "config-verify.txt", &rc)?;
            let seed = sampler_seed.unwrap_or(derive_seed(rc.seed, "cli-verify", 0));
            let est_cfg = match samples {
                Some(k) => EstimatorConfig::fixed_draws(seed, k),
                None => EstimatorConfig::target(seed),
            };

            let load_clf_parts = |clf_path: &Option<PathBuf>,
                                  report_path: &Option<PathBuf>|
             -> Result<(FeasibilityClassifier, ClassifierReport), Error> {
                let clf_path = clf_path
                    .as_ref()
                    .ok_or_else(|| Error::OutOfRange("--classifier is required".into()))?;
                let report_path = report_path.as_ref().ok_or_else(|| {
                    Error::OutOfRange("--report (classifier validation) is required".into())
                })?;
                let clf = load_classifier(clf_path)?;
                let report = ClassifierReport::from_json(&std::fs::read_to_string(report_path)?)?;
                Ok((clf, report))
            };

            let stamp = |mut cert: Certificate, files: &[&Path]| -> Result<Certificate, Error> {
                cert.config_digest = digest.clone();
                for f in files {
                    cert.checkpoint_digests
                        .push((f.display().to_string(), file_digest(f)?));
                }
                Ok(cert)
            };

            if marl {
                let env = rc.task.bp_env(rc.grid_seed)?;
                let p0 = checkpoint::load_policy(&policy)?;
                let p1 = checkpoint::load_policy(policy2.as_deref().ok_or_else(|| {
                    Error::OutOfRange("marl verification needs --policy2".into())
                })?)?;
                let (clf0, rep0) = load_clf_parts(&classifier, &report)?;
                let (clf1, rep1) = load_clf_parts(&classifier2, &report2)?;
                let staged = env.state_at_push_positions();
                let enc = env.state_encoding(&staged);
                let mut tasks = Vec::new();
                for (agent, p) in [&p0, &p1].into_iter().enumerate() {
                    let margin = desired_margin_inputs_bp(&staged, agent)?;
                    tasks.push(VerificationTask::new(
                        p.clone(),
                        env.observe(&staged, agent),
                        enc.clone(),
                        margin,
                        format!("{} agent {agent} at push position", rc.task.name()),
                    )?);
                }
                let budgets = [
                    allocate_budget(rc.eps, rc.delta, rep0.e_hat)?,
                    allocate_budget(rc.eps, rc.delta, rep1.e_hat)?,
                ];
                let oracles: [&dyn FeasibilityOracle; 2] = [&clf0, &clf1];
                let refs = [
                    Some(classifier_ref_from_report(&rep0)),
                    Some(classifier_ref_from_report(&rep1)),
                ];
                let cert = verify_marl(&tasks, &oracles, &budgets, &est_cfg, &refs)?;
                let cert = stamp(cert, &[&policy, policy2.as_ref().unwrap()])?;
                write_certificate(&out_dir.join("certificate.json"), &cert)?;
                return Ok(());
            }

            let env = rc.task.nav_env(rc.grid_seed)?;
            let pol = checkpoint::load_policy(&policy)?;

            if naive {
                let cell = parse_cell(state.as_deref().ok_or_else(|| {
                    Error::OutOfRange("--state x,y is required without --all-states".into())
                })?)?;
                let (task, margin) =
                    nav_task(&env, &pol, cell, &format!("{} cell naive", rc.task.name()))?;
                let cert = if margin_is_trivial(&margin) {
                    let budget = allocate_budget(rc.eps, rc.delta, 0.0)?;
                    trivially_safe_certificate(&task, &budget, seed)?
                } else {
                    naive_monte_carlo(&task, samples.unwrap_or(1_000_000), rc.delta, seed)?
                };
                let cert = stamp(cert, &[&policy])?;
                write_certificate(&out_dir.join("certificate.json"), &cert)?;
                return Ok(());
            }

            let (clf, rep) = load_clf_parts(&classifier, &report)?;
            // target mode allocates the requested budget up front; fixed-draw
            // mode claims the report-backed eps_clf plus whatever eps_ver the
            // accepted count turns out to support
            let budget = match samples {
                None => allocate_budget(rc.eps, rc.delta, rep.e_hat)?,
                Some(_) => {
                    let mut b = allocate_budget(
                        (rep.e_hat + rep.eps_clf + 0.5).min(0.9),
                        rc.delta,
                        rep.e_hat,
                    )?;
                    b.eps_clf = rep.eps_clf;
                    b.eps_ver = 0.5;
                    b.eps = b.e_hat + b.eps_clf + b.eps_ver;
                    b
                }
            };
            let clf_ref = Some(classifier_ref_from_report(&rep));

            if all_states {
                let cells = sweep_nav_states(&env, &pol, &clf, &budget, &est_cfg, clf_ref)?;
                let csv = format!("# config_digest {digest}\n{}", heatmap_csv(&cells));
                std::fs::write(out_dir.join("heatmap.csv"), csv)?;
                if heatmap {
                    let pgm = heatmap_pgm(&env, &cells);
                    let pgm = pgm.replacen("P2\n", &format!("P2\n# config_digest {digest}\n"), 1);
                    std::fs::write(out_dir.join("heatmap.pgm"), pgm)?;
                }
                let mean: f64 =
                    cells.iter().map(|c| c.p_hat).sum::<f64>() / cells.len().max(1) as f64;
                println!(
                    "verified {} states; mean violation fraction {:.4} -> {}",
                    cells.len(),
                    mean,
                    out_dir.join("heatmap.csv").display()
                );
                return Ok(());
            }

            let cell = parse_cell(state.as_deref().ok_or_else(|| {
                Error::OutOfRange("--state x,y is required without --all-states".into())
            })?)?;
            let (task, margin) = nav_task(
                &env,
                &pol,
                cell,
                &format!("{} cell ({},{})", rc.task.name(), cell.x, cell.y),
            )?;
            let cert = if margin_is_trivial(&margin) {
                trivially_safe_certificate(&task, &budget, seed)?
            } else {
                estimate_violation(&task, &clf, &budget, &est_cfg, clf_ref)?
            };
            let cert = stamp(cert, &[&policy])?;
            write_certificate(&out_dir.join("certificate.json"), &cert)?;
            Ok(())
        }

        Command::Baseline {
            common,
            policy,
            state,
            oracle,
            classifier,
            resolution,
            enum_cap,
            radius,
            out_dir,
        } => {
            let rc = common.resolve()?;
            if common.print_config {
                print!("{}", rc.to_doc().render());
                return Ok(());
            }
            let digest = write_config(&out_dir, "config-baseline.txt", &rc)?;
            let env = rc.task.nav_env(rc.grid_seed)?;
            let pol = checkpoint::load_policy(&policy)?;
            let cell = parse_cell(state.as_deref().ok_or_else(|| {
                Error::OutOfRange("--state x,y is required for the baseline".into())
            })?)?;
            let (task, _) = nav_task(
                &env,
                &pol,
                cell,
                &format!("{} baseline cell ({},{})", rc.task.name(), cell.x, cell.y),
            )?;
            let vol_cfg = VolumeConfig {
                resolution,
                ..VolumeConfig::default()
            };
            let outcome = match oracle.as_str() {
                "exact" => {
                    let set = exact_history_enumeration(
                        &env,
                        &pol,
                        &EnumerationConfig {
                            cap: enum_cap,
                            ..EnumerationConfig::default()
                        },
                    )?;
                    let key = rnncert::rl::state_key_of(&task.state_enc);
                    let oracle = ExactSetOracle::for_state(&set, key, radius)?;
                    baseline_volume(&task, &oracle, &vol_cfg)?
                }
                "classifier" => {
                    let clf_path = classifier.as_ref().ok_or_else(|| {
                        Error::OutOfRange("--oracle classifier needs --classifier".into())
                    })?;
                    let clf = load_classifier(clf_path)?;
                    baseline_volume(&task, &clf, &vol_cfg)?
                }
                other => {
                    return Err(Error::OutOfRange(format!(
                        "unknown oracle {other:?}; expected exact|classifier"
                    )))
                }
            };
            let cert = rnncert::baseline::volume_certificate(&task, &outcome, &oracle)?;
            let mut cert = cert;
            cert.config_digest = digest;
            cert.checkpoint_digests
                .push((policy.display().to_string(), file_digest(&policy)?));
            write_certificate(&out_dir.join("certificate.json"), &cert)?;
            Ok(())
        }

        Command::SampleSize { eps, delta, e_hat } => {
            let budget = allocate_budget(eps, delta, e_hat)?;
            let n = required_samples(budget.eps_ver, budget.delta_ver)?;
            let m = required_samples(budget.eps_clf, budget.delta_clf)?;
            println!("error budget:");
            println!("  eps        {}", budget.eps);
            println!("  e_hat      {}", budget.e_hat);
            println!("  eps_clf    {}", budget.eps_clf);
            println!("  eps_ver    {}", budget.eps_ver);
            println!("  delta      {}", budget.delta);
            println!("  delta_clf  {}", budget.delta_clf);
            println!("  delta_ver  {}", budget.delta_ver);
            println!("sample sizes:");
            println!("  N (verification draws to accept) {n}");
            println!("  M (classifier validation rows)   {m}");
            Ok(())
        }
    }
}
