use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvError, EnvResult, Environment, Observation, StepOutcome};
use crate::config::Config;
use crate::exec::{CompiledFlow, FlowOptions, Layout, State};
use crate::lang::{parse_program, Program};
use crate::shield::ModelParams;

pub const CAR_ACTIONS: [&str; 2] = ["accel", "brake"];

const PLANT: &str = "{x' = v, v' = a, t' = 1 & v >= 0}";
const STATE_VARS: [&str; 8] = ["A", "a", "b", "eps", "m", "t", "v", "x"];
/// Speeds below this count as standing still.
const STOPPED: f64 = 1e-6;

/// Stop-sign car. `params` are the modelled constants exposed to the
/// shield; `brake_actual` and `accel_actual` are what the car really does.
#[derive(Debug, Clone, PartialEq)]
pub struct CarEnvConfig {
    pub params: ModelParams,
    /// Stop-sign position `m`.
    pub stop: f64,
    pub brake_actual: f64,
    pub accel_actual: f64,
    pub x_range: (f64, f64),
    pub v_range: (f64, f64),
    pub progress_weight: f64,
    pub violation_penalty: f64,
    pub stop_bonus: f64,
    /// The bonus is paid when the car stands still within this distance
    /// before `m`.
    pub stop_tolerance: f64,
    pub max_steps: usize,
    /// Integration step. RK4 is exact for piecewise-constant acceleration,
    /// so a coarse dyadic step loses nothing.
    pub step: f64,
}

impl Default for CarEnvConfig {
    fn default() -> Self {
        CarEnvConfig {
            params: ModelParams::new(1.0, 1.0, 1.0),
            stop: 100.0,
            brake_actual: 1.0,
            accel_actual: 1.0,
            x_range: (0.0, 50.0),
            v_range: (0.0, 5.0),
            progress_weight: 1.0,
            violation_penalty: 100.0,
            stop_bonus: 20.0,
            stop_tolerance: 1.0,
            max_steps: 200,
            step: 1.0 / 64.0,
        }
    }
}

impl CarEnvConfig {
    /// Reads `section.A`, `section.b`, `section.eps`, `section.m`,
    /// `section.b_actual` (defaults to `b`), `section.A_actual` (defaults to
    /// `A`), `section.x_min`/`x_max`/`v_min`/`v_max`, reward weights
    /// `progress`, `penalty`, `bonus`, `stop_tolerance`, `max_steps` and
    /// `step`.
    pub fn from_config(cfg: &Config, section: &str) -> EnvResult<Self> {
        let d = CarEnvConfig::default();
        let key = |k: &str| format!("{section}.{k}");
        let f = |k: &str, def: f64| cfg.get_or(&key(k), def);
        let accel = f("A", d.params.accel)?;
        let brake = f("b", d.params.brake)?;
        let out = CarEnvConfig {
            params: ModelParams::new(accel, brake, f("eps", d.params.eps)?),
            stop: f("m", d.stop)?,
            brake_actual: f("b_actual", brake)?,
            accel_actual: f("A_actual", accel)?,
            x_range: (f("x_min", d.x_range.0)?, f("x_max", d.x_range.1)?),
            v_range: (f("v_min", d.v_range.0)?, f("v_max", d.v_range.1)?),
            progress_weight: f("progress", d.progress_weight)?,
            violation_penalty: f("penalty", d.violation_penalty)?,
            stop_bonus: f("bonus", d.stop_bonus)?,
            stop_tolerance: f("stop_tolerance", d.stop_tolerance)?,
            max_steps: cfg.get_or(&key("max_steps"), d.max_steps)?,
            step: f("step", d.step)?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> EnvResult<()> {
        self.params.validate()?;
        let bad = |m: &str| Err(EnvError::Config(m.to_string()));
        if !(self.brake_actual > 0.0) || !(self.accel_actual >= 0.0) {
            return bad("need b_actual > 0 and A_actual >= 0");
        }
        if !(self.x_range.0 <= self.x_range.1) || !(self.v_range.0 <= self.v_range.1) || self.v_range.0 < 0.0 {
            return bad("initial ranges must be ordered with v >= 0");
        }
        // the slowest car at the smallest x must satisfy the precondition
        if self.v_range.0 * self.v_range.0 > 2.0 * self.params.brake * (self.stop - self.x_range.0) {
            return bad("no initial state satisfies v^2 <= 2*b*(m-x)");
        }
        if !(self.step > 0.0) || self.max_steps == 0 {
            return bad("step must be positive and max_steps at least 1");
        }
        Ok(())
    }

    fn admissible(&self, x: f64, v: f64) -> bool {
        v >= 0.0 && v * v <= 2.0 * self.params.brake * (self.stop - x)
    }

    fn state(&self, x: f64, v: f64) -> State {
        let p = self.params;
        State::from_pairs([
            ("A", p.accel),
            ("a", 0.0),
            ("b", p.brake),
            ("eps", p.eps),
            ("m", self.stop),
            ("t", 0.0),
            ("v", v),
            ("x", x),
        ])
    }
}

/// Uniform initial state within the configured ranges, redrawn until it
/// satisfies `v^2 <= 2*b*(m-x) & v >= 0`.
pub fn car_reset(cfg: &CarEnvConfig, seed: u64) -> EnvResult<State> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if lo < hi { rng.random_range(lo..=hi) } else { lo };
    for _ in 0..100_000 {
        let x = draw(&mut rng, cfg.x_range);
        let v = draw(&mut rng, cfg.v_range);
        if cfg.admissible(x, v) {
            return Ok(cfg.state(x, v));
        }
    }
    Err(EnvError::Config("initial ranges almost never satisfy the precondition".into()))
}

/// Result of one control period.
#[derive(Debug, Clone, PartialEq)]
pub struct CarStep {
    pub state: State,
    pub reward: f64,
    pub done: bool,
    pub violation: bool,
    /// Time spent moving; less than `eps` when the car came to rest.
    pub elapsed: f64,
}

struct Plant {
    layout: Layout,
    flow: CompiledFlow<f64>,
    opts: FlowOptions<f64>,
}

impl Plant {
    fn new(cfg: &CarEnvConfig) -> EnvResult<Plant> {
        let Program::Ode(ode) = parse_program(PLANT).expect("plant ODE parses") else {
            unreachable!("plant is an ODE")
        };
        let layout = Layout::new(STATE_VARS);
        let flow = CompiledFlow::new(&ode, &layout)?;
        Ok(Plant { layout, flow, opts: FlowOptions::with_step(cfg.step) })
    }

    fn step(&self, cfg: &CarEnvConfig, s: &State, action: &str, steps_taken: usize) -> EnvResult<CarStep> {
        let accel = match action {
            "brake" => -cfg.brake_actual,
            "accel" => cfg.accel_actual,
            other => return Err(EnvError::InvalidAction(other.to_string())),
        };
        let mut vals = self.layout.pack(s);
        let slot = |v: &str| self.layout.slot(v).expect("car layout");
        let (sx, sv, sa, st) = (slot("x"), slot("v"), slot("a"), slot("t"));
        let x0 = vals[sx];
        vals[sa] = accel;
        vals[st] = 0.0;
        let (elapsed, _) = self.flow.advance(&mut vals, cfg.params.eps, &self.opts, None)?;
        let state = self.layout.unpack(&vals)?;
        let (x, v) = (vals[sx], vals[sv]);
        let mut reward = cfg.progress_weight * (x - x0);
        let violation = x > cfg.stop;
        let parked = !violation && v < STOPPED && cfg.stop - x <= cfg.stop_tolerance;
        if violation {
            reward -= cfg.violation_penalty;
        } else if parked {
            reward += cfg.stop_bonus;
        }
        let done = violation || parked || steps_taken + 1 >= cfg.max_steps;
        Ok(CarStep { state, reward, done, violation, elapsed })
    }
}

/// One control period from `s`: set `a` to the real effect of `action`,
/// reset the clock and flow for `eps` (stopping early if the car comes to
/// rest). `steps_taken` counts earlier periods of the episode.
pub fn car_step(cfg: &CarEnvConfig, s: &State, action: &str, steps_taken: usize) -> EnvResult<CarStep> {
    Plant::new(cfg)?.step(cfg, s, action, steps_taken)
}

/// Stateful wrapper implementing [`Environment`].
pub struct CarEnv {
    cfg: CarEnvConfig,
    plant: Plant,
    actions: Vec<String>,
    state: State,
    steps: usize,
    done: bool,
    last_elapsed: f64,
}

impl CarEnv {
    pub fn new(cfg: CarEnvConfig) -> EnvResult<Self> {
        cfg.validate()?;
        let plant = Plant::new(&cfg)?;
        let state = cfg.state(cfg.x_range.0, cfg.v_range.0);
        Ok(CarEnv {
            cfg,
            plant,
            actions: CAR_ACTIONS.iter().map(|a| a.to_string()).collect(),
            state,
            steps: 0,
            done: true,
            last_elapsed: 0.0,
        })
    }

    pub fn config(&self) -> &CarEnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    /// Starts an episode from a chosen state (model constants are taken
    /// from the config).
    pub fn reset_to(&mut self, x: f64, v: f64) -> Observation {
        self.state = self.cfg.state(x, v);
        self.steps = 0;
        self.done = false;
        Observation::Symbolic(self.state.clone())
    }

    /// Time the last step spent moving.
    pub fn last_elapsed(&self) -> f64 {
        self.last_elapsed
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

impl Environment for CarEnv {
    fn actions(&self) -> &[String] {
        &self.actions
    }

    fn reset(&mut self, seed: u64) -> EnvResult<Observation> {
        self.state = car_reset(&self.cfg, seed)?;
        self.steps = 0;
        self.done = false;
        Ok(Observation::Symbolic(self.state.clone()))
    }

    fn step(&mut self, action: &str) -> EnvResult<StepOutcome> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let out = self.plant.step(&self.cfg, &self.state, action, self.steps)?;
        self.steps += 1;
        self.done = out.done;
        self.state = out.state;
        self.last_elapsed = out.elapsed;
        Ok(StepOutcome {
            observation: Observation::Symbolic(self.state.clone()),
            reward: out.reward,
            done: out.done,
            violation: out.violation,
        })
    }

    fn ground_truth(&self) -> State {
        self.state.clone()
    }
}
