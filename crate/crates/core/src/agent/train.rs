use std::io;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{penalty_update, q_update, select_action, AgentError, AgentResult, Discretizer, QTable};
use crate::config::Config;
use crate::envs::{Environment, Observer};
use crate::exec::State;
use crate::shield::{shield_action, GuardTable};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Learning rate in `(0, 1]`.
    pub alpha: f64,
    /// Discount in `[0, 1]`.
    pub gamma: f64,
    /// Exploration rate decays linearly from `eps_start` to `eps_end` over
    /// the first `eps_decay` episodes.
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay: usize,
    /// Target for rejected proposals; 0 disables the extra update.
    pub penalty: f64,
    pub seed: u64,
    pub shield: bool,
    pub margin: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 5000,
            alpha: 0.2,
            gamma: 0.99,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay: 4000,
            penalty: 0.0,
            seed: 0,
            shield: true,
            margin: 0.0,
        }
    }
}

fn parse_switch(key: &str, v: &str) -> AgentResult<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(AgentError::Config(format!("`{key}`: expected on/off, got `{v}`"))),
    }
}

impl TrainConfig {
    /// Keys under `section`: `episodes`, `alpha`, `gamma`, `eps_start`,
    /// `eps_end`, `eps_decay`, `penalty`, `seed`, `shield` (on/off) and
    /// `margin`.
    pub fn from_config(cfg: &Config, section: &str) -> AgentResult<Self> {
        let d = TrainConfig::default();
        let key = |k: &str| format!("{section}.{k}");
        let shield = match cfg.raw(&key("shield")) {
            Some(v) => parse_switch(&key("shield"), v)?,
            None => d.shield,
        };
        let out = TrainConfig {
            episodes: cfg.get_or(&key("episodes"), d.episodes)?,
            alpha: cfg.get_or(&key("alpha"), d.alpha)?,
            gamma: cfg.get_or(&key("gamma"), d.gamma)?,
            eps_start: cfg.get_or(&key("eps_start"), d.eps_start)?,
            eps_end: cfg.get_or(&key("eps_end"), d.eps_end)?,
            eps_decay: cfg.get_or(&key("eps_decay"), d.eps_decay)?,
            penalty: cfg.get_or(&key("penalty"), d.penalty)?,
            seed: cfg.get_or(&key("seed"), d.seed)?,
            shield,
            margin: cfg.get_or(&key("margin"), d.margin)?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> AgentResult<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.alpha > 0.0 && self.alpha <= 1.0) || !unit(self.gamma) {
            return Err(AgentError::Config("need alpha in (0, 1] and gamma in [0, 1]".into()));
        }
        if !unit(self.eps_start) || !unit(self.eps_end) {
            return Err(AgentError::Config("exploration rates must lie in [0, 1]".into()));
        }
        if !(self.penalty <= 0.0) || !self.margin.is_finite() {
            return Err(AgentError::Config("need penalty <= 0 and a finite margin".into()));
        }
        Ok(())
    }

    pub fn exploration(&self, episode: usize) -> f64 {
        if self.eps_decay == 0 || episode >= self.eps_decay {
            return self.eps_end;
        }
        let frac = episode as f64 / self.eps_decay as f64;
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }

    /// Reset seed of episode `episode`; shared by every run with the same
    /// `seed`, whatever the other settings.
    pub fn episode_seed(&self, episode: usize) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(episode as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub reward: f64,
    pub violations: usize,
    pub interventions: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeLog>,
}

impl TrainingLog {
    pub const HEADER: [&'static str; 5] = ["episode", "reward", "violations", "interventions", "steps"];

    pub fn total_violations(&self) -> usize {
        self.episodes.iter().map(|e| e.violations).sum()
    }

    pub fn total_interventions(&self) -> usize {
        self.episodes.iter().map(|e| e.interventions).sum()
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> AgentResult<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::HEADER)?;
        for e in &self.episodes {
            w.write_record([
                e.episode.to_string(),
                e.reward.to_string(),
                e.violations.to_string(),
                e.interventions.to_string(),
                e.steps.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Choice {
    proposed: String,
    action: String,
    intervened: bool,
}

/// Shields `proposed` in `s`; without an observed state the fallback (or
/// the first action when unshielded) is executed.
fn choose(
    shield: Option<&GuardTable>,
    actions: &[String],
    s: Option<&State>,
    proposed: Option<String>,
    margin: f64,
) -> AgentResult<Choice> {
    let default = || shield.map_or_else(|| actions[0].clone(), |g| g.fallback().to_string());
    let (Some(s), Some(proposed)) = (s, proposed) else {
        let a = default();
        return Ok(Choice { proposed: a.clone(), action: a, intervened: false });
    };
    match shield {
        Some(g) => {
            let d = shield_action(g, s, &proposed, margin)?;
            Ok(Choice { action: d.action.to_string(), intervened: d.intervened, proposed })
        }
        None => Ok(Choice { action: proposed.clone(), intervened: false, proposed }),
    }
}

/// Runs `cfg.episodes` episodes of epsilon-greedy Q-learning on the
/// executed action. With `cfg.shield` and a table, proposals are filtered
/// by [`shield_action`]; a nonzero `cfg.penalty` additionally pulls the
/// value of every rejected proposal toward the penalty.
pub fn train(
    env: &mut dyn Environment,
    observer: &mut dyn Observer,
    disc: &Discretizer,
    shield: Option<&GuardTable>,
    cfg: &TrainConfig,
) -> AgentResult<(QTable, TrainingLog)> {
    cfg.validate()?;
    let shield = shield.filter(|_| cfg.shield);
    let mut q = QTable::new(env.actions().iter().cloned())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = TrainingLog::default();
    for ep in 0..cfg.episodes {
        let eps = cfg.exploration(ep);
        observer.reset();
        let obs = env.reset(cfg.episode_seed(ep))?;
        let mut s = observer.observe(&obs)?;
        let mut entry = EpisodeLog { episode: ep, reward: 0.0, violations: 0, interventions: 0, steps: 0 };
        loop {
            let ds = s.as_ref().map(|s| disc.index(s)).transpose()?;
            let proposal = ds.as_ref().map(|d| select_action(&q, d, eps, &mut rng).to_string());
            let c = choose(shield, q.actions(), s.as_ref(), proposal, cfg.margin)?;
            let out = env.step(&c.action)?;
            let next = observer.observe(&out.observation)?;
            if let Some(ds) = &ds {
                let next_ds = next.as_ref().map(|n| disc.index(n)).transpose()?;
                if out.done || next_ds.is_some() {
                    let boot = if out.done { None } else { next_ds.as_ref() };
                    q_update(&mut q, ds, &c.action, out.reward, boot, cfg.alpha, cfg.gamma)?;
                }
                if c.intervened && cfg.penalty != 0.0 {
                    penalty_update(&mut q, ds, &c.proposed, cfg.penalty, cfg.alpha)?;
                }
            }
            entry.reward += out.reward;
            entry.violations += usize::from(out.violation);
            entry.interventions += usize::from(c.intervened);
            entry.steps += 1;
            s = next;
            if out.done {
                break;
            }
        }
        log.episodes.push(entry);
    }
    Ok((q, log))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Ground truth before the step.
    pub state: State,
    pub action: String,
    pub proposed: String,
    pub intervened: bool,
    pub reward: f64,
    pub done: bool,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    /// Ground truth after the last step.
    pub final_state: State,
}

impl EpisodeTrace {
    pub fn reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn violations(&self) -> usize {
        self.steps.iter().filter(|s| s.violation).count()
    }

    pub fn interventions(&self) -> usize {
        self.steps.iter().filter(|s| s.intervened).count()
    }

    /// Columns `step`, the ground-truth variables in name order, `action`,
    /// `proposed`, `intervened`, `reward`, `done`, `violation`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> AgentResult<()> {
        let mut w = csv::Writer::from_writer(out);
        let vars: Vec<&str> = self.final_state.vars().collect();
        let mut header = vec!["step"];
        header.extend(&vars);
        header.extend(["action", "proposed", "intervened", "reward", "done", "violation"]);
        w.write_record(&header)?;
        for r in &self.steps {
            let mut row = vec![r.step.to_string()];
            row.extend(vars.iter().map(|v| r.state.get(v).map_or_else(String::new, |x| x.to_string())));
            row.extend([
                r.action.clone(),
                r.proposed.clone(),
                r.intervened.to_string(),
                r.reward.to_string(),
                r.done.to_string(),
                r.violation.to_string(),
            ]);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One episode driven by `propose`, which sees the observed state (`None`
/// when the observer could not produce one) and returns an action id.
pub fn run_episode(
    env: &mut dyn Environment,
    observer: &mut dyn Observer,
    shield: Option<&GuardTable>,
    margin: f64,
    seed: u64,
    propose: &mut dyn FnMut(&State) -> AgentResult<String>,
) -> AgentResult<EpisodeTrace> {
    observer.reset();
    let obs = env.reset(seed)?;
    let mut s = observer.observe(&obs)?;
    let mut steps = Vec::new();
    let actions = env.actions().to_vec();
    loop {
        let proposal = s.as_ref().map(|s| propose(s)).transpose()?;
        let c = choose(shield, &actions, s.as_ref(), proposal, margin)?;
        let before = env.ground_truth();
        let out = env.step(&c.action)?;
        steps.push(StepRecord {
            step: steps.len(),
            state: before,
            action: c.action,
            proposed: c.proposed,
            intervened: c.intervened,
            reward: out.reward,
            done: out.done,
            violation: out.violation,
        });
        s = observer.observe(&out.observation)?;
        if out.done {
            break;
        }
    }
    Ok(EpisodeTrace { seed, steps, final_state: env.ground_truth() })
}

/// Total reward of the greedy policy of `q` from each reset seed.
pub fn evaluate_greedy(
    env: &mut dyn Environment,
    observer: &mut dyn Observer,
    disc: &Discretizer,
    q: &QTable,
    shield: Option<&GuardTable>,
    margin: f64,
    seeds: &[u64],
) -> AgentResult<Vec<f64>> {
    seeds
        .iter()
        .map(|&seed| {
            let mut greedy = |s: &State| Ok(q.best_action(&disc.index(s)?).to_string());
            Ok(run_episode(env, observer, shield, margin, seed, &mut greedy)?.reward())
        })
        .collect()
}
