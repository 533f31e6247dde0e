use super::{AgentError, AgentResult, DiscreteState};
use crate::config::Config;
use crate::exec::State;

/// Uniform bins over `[lower, upper]` for one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Bins {
    pub var: String,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

impl Bins {
    pub fn new(var: impl Into<String>, lower: f64, upper: f64, count: usize) -> AgentResult<Self> {
        let var = var.into();
        if count == 0 || !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(AgentError::Config(format!("bins for `{var}` need lower < upper and count >= 1")));
        }
        Ok(Bins { var, lower, upper, count })
    }

    /// Values outside the range fall into the boundary bins.
    pub fn index(&self, v: f64) -> usize {
        let k = ((v - self.lower) / (self.upper - self.lower) * self.count as f64).floor();
        if k.is_nan() || k < 0.0 {
            0
        } else {
            (k as usize).min(self.count - 1)
        }
    }

    pub fn center(&self, k: usize) -> f64 {
        self.lower + (k as f64 + 0.5) * (self.upper - self.lower) / self.count as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discretizer {
    bins: Vec<Bins>,
}

impl Discretizer {
    pub fn new(bins: Vec<Bins>) -> AgentResult<Self> {
        if bins.is_empty() {
            return Err(AgentError::Config("discretizer needs at least one variable".into()));
        }
        Ok(Discretizer { bins })
    }

    /// Stop-sign default: `x` in `[0, m]` with 50 bins, `v` in `[0, 12]`
    /// with 25 bins.
    pub fn car_default(m: f64) -> AgentResult<Self> {
        Discretizer::new(vec![Bins::new("x", 0.0, m, 50)?, Bins::new("v", 0.0, 12.0, 25)?])
    }

    /// One bin per cell of agent row, car column and car speed.
    pub fn crossing_default(width: usize, height: usize, max_speed: usize) -> AgentResult<Self> {
        let cells = |var: &str, n: usize| Bins::new(var, -0.5, n as f64 - 0.5, n);
        Discretizer::new(vec![cells("agent_row", height)?, cells("car_col", width)?, cells("car_speed", max_speed + 1)?])
    }

    /// Reads `section.<var> = lower, upper, count` entries; returns `None`
    /// when the section has none. Variables are ordered by name.
    pub fn from_config(cfg: &Config, section: &str) -> AgentResult<Option<Self>> {
        let mut bins = Vec::new();
        for (var, raw) in cfg.with_prefix(section) {
            let key = format!("{section}.{var}");
            let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
            let bad = || AgentError::Config(format!("`{key} = {raw}`: expected `lower, upper, count`"));
            let [lo, hi, n] = parts.as_slice() else { return Err(bad()) };
            let lo: f64 = lo.parse().map_err(|_| bad())?;
            let hi: f64 = hi.parse().map_err(|_| bad())?;
            let n: usize = n.parse().map_err(|_| bad())?;
            bins.push(Bins::new(var, lo, hi, n)?);
        }
        if bins.is_empty() {
            return Ok(None);
        }
        bins.sort_by(|a, b| a.var.cmp(&b.var));
        Discretizer::new(bins).map(Some)
    }

    pub fn bins(&self) -> &[Bins] {
        &self.bins
    }

    pub fn index(&self, s: &State) -> AgentResult<DiscreteState> {
        self.bins
            .iter()
            .map(|b| s.get(&b.var).map(|v| b.index(v)).ok_or_else(|| AgentError::MissingVar(b.var.clone())))
            .collect()
    }

    pub fn cells(&self) -> usize {
        self.bins.iter().map(|b| b.count).product()
    }

    /// Every discrete state, last variable fastest.
    pub fn all(&self) -> impl Iterator<Item = DiscreteState> + '_ {
        let total = self.cells();
        (0..total).map(move |mut k| {
            let mut out = vec![0; self.bins.len()];
            for (i, b) in self.bins.iter().enumerate().rev() {
                out[i] = k % b.count;
                k /= b.count;
            }
            out
        })
    }
}
