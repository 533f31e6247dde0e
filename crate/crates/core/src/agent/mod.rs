//! Tabular Q-learning over discretized symbolic states, with optional
//! shielding of proposals and a penalty for rejected ones.

mod discretize;
mod train;

use std::collections::HashMap;

use rand::Rng;
use thiserror::Error;

use crate::config::ConfigError;
use crate::envs::EnvError;
use crate::exec::ExecError;
use crate::shield::ShieldError;

pub use discretize::{Bins, Discretizer};
pub use train::{
    evaluate_greedy, run_episode, train, EpisodeLog, EpisodeTrace, StepRecord, TrainConfig, TrainingLog,
};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("state is missing variable `{0}`")]
    MissingVar(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Shield(#[from] ShieldError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    ConfigFile(#[from] ConfigError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type AgentResult<T> = Result<T, AgentError>;

/// Bin index per discretized variable.
pub type DiscreteState = Vec<usize>;

/// Action values per discrete state. Actions are kept sorted so the first
/// maximal entry is the lexicographically smallest action id.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    actions: Vec<String>,
    values: HashMap<DiscreteState, Vec<f64>>,
}

impl QTable {
    pub fn new<I, A>(actions: I) -> AgentResult<Self>
    where
        I: IntoIterator<Item = A>,
        A: Into<String>,
    {
        let mut actions: Vec<String> = actions.into_iter().map(Into::into).collect();
        actions.sort();
        actions.dedup();
        if actions.is_empty() {
            return Err(AgentError::Config("no actions".into()));
        }
        Ok(QTable { actions, values: HashMap::new() })
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    fn index(&self, action: &str) -> AgentResult<usize> {
        self.actions.binary_search_by(|a| a.as_str().cmp(action)).map_err(|_| AgentError::UnknownAction(action.into()))
    }

    /// Missing entries read as 0.
    pub fn get(&self, s: &DiscreteState, action: &str) -> AgentResult<f64> {
        let i = self.index(action)?;
        Ok(self.values.get(s).map_or(0.0, |row| row[i]))
    }

    pub fn set(&mut self, s: &DiscreteState, action: &str, v: f64) -> AgentResult<()> {
        let i = self.index(action)?;
        let n = self.actions.len();
        self.values.entry(s.clone()).or_insert_with(|| vec![0.0; n])[i] = v;
        Ok(())
    }

    /// Values of every action in sorted action order.
    pub fn row(&self, s: &DiscreteState) -> Vec<f64> {
        self.values.get(s).cloned().unwrap_or_else(|| vec![0.0; self.actions.len()])
    }

    pub fn max_value(&self, s: &DiscreteState) -> f64 {
        self.row(s).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Argmax with ties going to the lexicographically first action.
    pub fn best_action(&self, s: &DiscreteState) -> &str {
        let row = self.row(s);
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        &self.actions[best]
    }

    /// Number of states with at least one stored entry.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Epsilon-greedy proposal: uniform over actions with probability `eps`,
/// otherwise [`QTable::best_action`].
pub fn select_action<'q, R: Rng>(q: &'q QTable, s: &DiscreteState, eps: f64, rng: &mut R) -> &'q str {
    if eps > 0.0 && rng.random::<f64>() < eps {
        &q.actions[rng.random_range(0..q.actions.len())]
    } else {
        q.best_action(s)
    }
}

/// One-step Q-learning: `Q(s,a) <- (1-alpha) Q(s,a) + alpha (r + gamma max Q(s',.))`.
/// A terminal step (`next = None`) bootstraps from 0.
pub fn q_update(
    q: &mut QTable,
    s: &DiscreteState,
    action: &str,
    reward: f64,
    next: Option<&DiscreteState>,
    alpha: f64,
    gamma: f64,
) -> AgentResult<()> {
    let future = next.map_or(0.0, |n| q.max_value(n));
    let old = q.get(s, action)?;
    q.set(s, action, (1.0 - alpha) * old + alpha * (reward + gamma * future))
}

/// Moves `Q(s, proposed)` toward the fixed target `penalty`.
pub fn penalty_update(q: &mut QTable, s: &DiscreteState, proposed: &str, penalty: f64, alpha: f64) -> AgentResult<()> {
    let old = q.get(s, proposed)?;
    q.set(s, proposed, (1.0 - alpha) * old + alpha * penalty)
}

/// Greedy policy over every discrete state: one column per variable with
/// its bin index, one with the bin centre, then `action` and a `q_<id>`
/// column per action.
pub fn write_policy<W: std::io::Write>(q: &QTable, disc: &Discretizer, out: W) -> AgentResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = Vec::new();
    for b in disc.bins() {
        header.push(format!("{}_bin", b.var));
        header.push(format!("{}_center", b.var));
    }
    header.push("action".into());
    header.extend(q.actions().iter().map(|a| format!("q_{a}")));
    w.write_record(&header)?;
    for s in disc.all() {
        let mut row = Vec::with_capacity(header.len());
        for (b, &k) in disc.bins().iter().zip(&s) {
            row.push(k.to_string());
            row.push(b.center(k).to_string());
        }
        row.push(q.best_action(&s).to_string());
        row.extend(q.row(&s).iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table() -> QTable {
        QTable::new(["brake", "accel"]).unwrap()
    }

    #[test]
    fn greedy_choice_and_tie_break() {
        let mut q = table();
        let s = vec![0, 0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action(&q, &s, 0.0, &mut rng), "accel");
        q.set(&s, "brake", 1.0).unwrap();
        assert_eq!(select_action(&q, &s, 0.0, &mut rng), "brake");
    }

    #[test]
    fn exploration_is_seeded_and_covers_actions() {
        let q = table();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| select_action(&q, &vec![0], 1.0, &mut rng).to_string()).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        let d = draw(3);
        assert!(d.iter().any(|a| a == "accel") && d.iter().any(|a| a == "brake"));
    }

    #[test]
    fn update_arithmetic() {
        let (s, n) = (vec![0], vec![1]);
        let mut q = table();
        q_update(&mut q, &s, "accel", 5.0, Some(&n), 1.0, 0.0).unwrap();
        assert_eq!(q.get(&s, "accel").unwrap(), 5.0);

        let before = q.clone();
        q_update(&mut q, &s, "accel", 7.0, Some(&n), 0.0, 0.9).unwrap();
        assert_eq!(q, before);

        let mut q = table();
        q.set(&n, "brake", 10.0).unwrap();
        q_update(&mut q, &s, "accel", 1.0, Some(&n), 0.5, 0.9).unwrap();
        assert!((q.get(&s, "accel").unwrap() - 5.0).abs() < 1e-12);

        q_update(&mut q, &n, "brake", 1.0, None, 1.0, 0.9).unwrap();
        assert_eq!(q.get(&n, "brake").unwrap(), 1.0);
    }

    #[test]
    fn policy_dump_has_a_row_per_cell() {
        let disc = Discretizer::new(vec![Bins::new("v", 0.0, 2.0, 2).unwrap()]).unwrap();
        let mut q = table();
        q.set(&vec![1], "brake", 2.0).unwrap();
        let mut buf = Vec::new();
        write_policy(&q, &disc, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "v_bin,v_center,action,q_accel,q_brake\n0,0.5,accel,0,0\n1,1.5,brake,0,2\n");
    }

    #[test]
    fn penalty_targets_the_proposal() {
        let mut q = table();
        penalty_update(&mut q, &vec![2], "accel", -10.0, 0.5).unwrap();
        assert_eq!(q.get(&vec![2], "accel").unwrap(), -5.0);
        assert_eq!(q.get(&vec![2], "brake").unwrap(), 0.0);
        assert!(matches!(q.get(&vec![2], "coast"), Err(AgentError::UnknownAction(_))));
    }
}
