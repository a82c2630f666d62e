//! Task presets, the resolved-config document, and file/flag override
//! plumbing. Every command writes its fully-resolved configuration next to
//! its outputs and stamps artifacts with the config digest.

use rnncert::env::boxpush::BpEnv;
use rnncert::env::nav::NavEnv;
use rnncert::env::GridSpec;
use rnncert::error::{Error, Result};
use rnncert::feasibility::ClassifierConfig;
use rnncert::rl::TrainConfig;
use rnncert::textdoc::TextDoc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Nav4,
    Nav8,
    Nav16,
    Bp10,
    Bp20,
}

impl Task {
    pub fn parse(name: &str) -> Result<Task> {
        match name {
            "nav4" => Ok(Task::Nav4),
            "nav8" => Ok(Task::Nav8),
            "nav16" => Ok(Task::Nav16),
            "bp10" => Ok(Task::Bp10),
            "bp20" => Ok(Task::Bp20),
            other => Err(Error::OutOfRange(format!(
                "unknown task {other:?}; expected nav4|nav8|nav16|bp10|bp20"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Nav4 => "nav4",
            Task::Nav8 => "nav8",
            Task::Nav16 => "nav16",
            Task::Bp10 => "bp10",
            Task::Bp20 => "bp20",
        }
    }

    pub fn is_nav(self) -> bool {
        matches!(self, Task::Nav4 | Task::Nav8 | Task::Nav16)
    }

    pub fn size(self) -> usize {
        match self {
            Task::Nav4 => 4,
            Task::Nav8 => 8,
            Task::Nav16 => 16,
            Task::Bp10 => 10,
            Task::Bp20 => 20,
        }
    }

    pub fn gru_hidden(self) -> usize {
        match self {
            Task::Nav4 => 4,
            Task::Nav8 => 8,
            Task::Nav16 => 12,
            Task::Bp10 => 16,
            Task::Bp20 => 32,
        }
    }

    pub fn default_episodes(self) -> usize {
        match self {
            Task::Nav4 => 3000,
            Task::Nav8 => 6000,
            Task::Nav16 => 8000,
            Task::Bp10 => 2000,
            Task::Bp20 => 3000,
        }
    }

    pub fn nav_env(self, grid_seed: u64) -> Result<NavEnv> {
        if !self.is_nav() {
            return Err(Error::OutOfRange(format!(
                "task {} is not a navigation task",
                self.name()
            )));
        }
        Ok(NavEnv::new(GridSpec::generate(
            self.size(),
            self.size(),
            grid_seed,
        )?))
    }

    pub fn bp_env(self, grid_seed: u64) -> Result<BpEnv> {
        if self.is_nav() {
            return Err(Error::OutOfRange(format!(
                "task {} is not a box-pushing task",
                self.name()
            )));
        }
        Ok(BpEnv::new(self.size(), self.size(), grid_seed))
    }
}

/// Everything a run resolves to, before flags are applied on top of an
/// optional config file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    pub grid_seed: u64,
    pub train: TrainConfig,
    pub classifier: ClassifierConfig,
    pub eps: f64,
    pub delta: f64,
    pub negatives_ratio: f64,
    pub tau: f64,
    pub min_pairs: usize,
}

impl RunConfig {
    pub fn for_task(task: Task, seed: u64) -> Self {
        RunConfig {
            task,
            seed,
            grid_seed: 0,
            train: TrainConfig::defaults(task.gru_hidden(), task.default_episodes(), seed),
            classifier: ClassifierConfig {
                seed,
                ..ClassifierConfig::default()
            },
            eps: 0.05,
            delta: 0.001,
            negatives_ratio: 1.0,
            tau: rnncert::feasibility::DEFAULT_TAU,
            min_pairs: 60_000,
        }
    }

    pub fn to_doc(&self) -> TextDoc {
        let mut doc = TextDoc::new();
        doc.section("run")
            .set("task", self.task.name())
            .set_u64("seed", self.seed)
            .set_u64("grid_seed", self.grid_seed);
        doc.section("train")
            .set_f64("gamma", self.train.gamma)
            .set_f64("lr", self.train.lr)
            .set_usize("batch_episodes", self.train.batch_episodes)
            .set_f64("polyak_omega", self.train.polyak_omega)
            .set_usize("gru_hidden", self.train.gru_hidden)
            .set(
                "mlp_hidden",
                self.train
                    .mlp_hidden
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(" "),
            )
            .set_usize("episodes", self.train.episodes)
            .set_usize("buffer_capacity", self.train.buffer_capacity)
            .set_f64("eps_start", self.train.eps_start)
            .set_f64("eps_end", self.train.eps_end)
            .set_f64("eps_anneal_frac", self.train.eps_anneal_frac);
        doc.section("classifier")
            .set(
                "hidden",
                self.classifier
                    .hidden
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(" "),
            )
            .set_f64("lr", self.classifier.lr)
            .set_usize("epochs", self.classifier.epochs)
            .set_usize("batch", self.classifier.batch)
            .set_f64("val_frac", self.classifier.val_frac);
        doc.section("collect")
            .set_usize("min_pairs", self.min_pairs)
            .set_f64("negatives_ratio", self.negatives_ratio)
            .set_f64("tau", self.tau);
        doc.section("budget")
            .set_f64("eps", self.eps)
            .set_f64("delta", self.delta);
        doc
    }

    /// Layer a config file's values over the defaults. Unknown keys are
    /// rejected so typos do not silently vanish.
    pub fn apply_doc(&mut self, doc: &TextDoc) -> Result<()> {
        for name in doc.section_names() {
            if !["run", "train", "classifier", "collect", "budget"].contains(&name) {
                return Err(Error::Checkpoint(format!("unknown config section [{name}]")));
            }
        }
        if doc.has("run") {
            let sec = doc.get("run")?;
            for key in sec.keys() {
                match key {
                    "task" => self.task = Task::parse(sec.str("task")?)?,
                    "seed" => self.seed = sec.u64_("seed")?,
                    "grid_seed" => self.grid_seed = sec.u64_("grid_seed")?,
                    other => {
                        return Err(Error::Checkpoint(format!("unknown run key {other:?}")))
                    }
                }
            }
        }
        if doc.has("train") {
            let sec = doc.get("train")?;
            for key in sec.keys() {
                match key {
                    "gamma" => self.train.gamma = sec.f64_("gamma")?,
                    "lr" => self.train.lr = sec.f64_("lr")?,
                    "batch_episodes" => self.train.batch_episodes = sec.usize_("batch_episodes")?,
                    "polyak_omega" => self.train.polyak_omega = sec.f64_("polyak_omega")?,
                    "gru_hidden" => self.train.gru_hidden = sec.usize_("gru_hidden")?,
                    "mlp_hidden" => {
                        self.train.mlp_hidden = sec
                            .str("mlp_hidden")?
                            .split_whitespace()
                            .map(|t| t.parse().map_err(|e| Error::Checkpoint(format!("{e}"))))
                            .collect::<Result<_>>()?
                    }
                    "episodes" => self.train.episodes = sec.usize_("episodes")?,
                    "buffer_capacity" => {
                        self.train.buffer_capacity = sec.usize_("buffer_capacity")?
                    }
                    "eps_start" => self.train.eps_start = sec.f64_("eps_start")?,
                    "eps_end" => self.train.eps_end = sec.f64_("eps_end")?,
                    "eps_anneal_frac" => {
                        self.train.eps_anneal_frac = sec.f64_("eps_anneal_frac")?
                    }
                    other => {
                        return Err(Error::Checkpoint(format!("unknown train key {other:?}")))
                    }
                }
            }
        }
        if doc.has("classifier") {
            let sec = doc.get("classifier")?;
            for key in sec.keys() {
                match key {
                    "hidden" => {
                        self.classifier.hidden = sec
                            .str("hidden")?
                            .split_whitespace()
                            .map(|t| t.parse().map_err(|e| Error::Checkpoint(format!("{e}"))))
                            .collect::<Result<_>>()?
                    }
                    "lr" => self.classifier.lr = sec.f64_("lr")?,
                    "epochs" => self.classifier.epochs = sec.usize_("epochs")?,
                    "batch" => self.classifier.batch = sec.usize_("batch")?,
                    "val_frac" => self.classifier.val_frac = sec.f64_("val_frac")?,
                    other => {
                        return Err(Error::Checkpoint(format!(
                            "unknown classifier key {other:?}"
                        )))
                    }
                }
            }
        }
        if doc.has("collect") {
            let sec = doc.get("collect")?;
            for key in sec.keys() {
                match key {
                    "min_pairs" => self.min_pairs = sec.usize_("min_pairs")?,
                    "negatives_ratio" => self.negatives_ratio = sec.f64_("negatives_ratio")?,
                    "tau" => self.tau = sec.f64_("tau")?,
                    other => {
                        return Err(Error::Checkpoint(format!("unknown collect key {other:?}")))
                    }
                }
            }
        }
        if doc.has("budget") {
            let sec = doc.get("budget")?;
            for key in sec.keys() {
                match key {
                    "eps" => self.eps = sec.f64_("eps")?,
                    "delta" => self.delta = sec.f64_("delta")?,
                    other => {
                        return Err(Error::Checkpoint(format!("unknown budget key {other:?}")))
                    }
                }
            }
        }
        // training seeds follow the run seed
        self.train.seed = self.seed;
        self.classifier.seed = self.seed;
        Ok(())
    }
}
