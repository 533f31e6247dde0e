use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{EnvError, EnvResult, Environment, Observation, Observer, StepOutcome};
use crate::config::Config;
use crate::exec::State;
use crate::lang::{parse_formula, Formula};
use crate::perception::{extract_symbols, Axis, Frame, PerceptionError, SymbolMap, Template};
use crate::shield::{GuardEntry, GuardTable};

pub const CROSSING_ACTIONS: [&str; 3] = ["down", "stay", "up"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectClass {
    Agent,
    Car,
    Seed,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 3] = [ObjectClass::Agent, ObjectClass::Car, ObjectClass::Seed];

    pub fn label(self) -> &'static str {
        match self {
            ObjectClass::Agent => "agent",
            ObjectClass::Car => "car",
            ObjectClass::Seed => "seed",
        }
    }

    fn pattern(self) -> [[f64; 4]; 4] {
        match self {
            ObjectClass::Agent => [
                [1.0, 0.3, 0.8, 0.1],
                [0.2, 0.9, 0.4, 1.0],
                [0.7, 0.1, 1.0, 0.5],
                [0.4, 0.8, 0.2, 0.9],
            ],
            ObjectClass::Car => [
                [0.9, 0.9, 0.2, 0.6],
                [0.3, 1.0, 0.7, 0.1],
                [1.0, 0.2, 0.5, 0.8],
                [0.5, 0.6, 0.1, 1.0],
            ],
            ObjectClass::Seed => [
                [0.1, 0.6, 0.9, 0.3],
                [0.8, 0.2, 0.3, 0.9],
                [0.4, 1.0, 0.6, 0.1],
                [0.9, 0.3, 0.7, 0.5],
            ],
        }
    }
}

/// Sprite of `class` at `size` pixels per cell, scaled from a fixed 4x4
/// intensity pattern by nearest neighbour.
pub fn sprite(class: ObjectClass, size: usize) -> Frame {
    let p = class.pattern();
    let data = (0..size * size).map(|i| p[(i / size) * 4 / size][(i % size) * 4 / size]).collect();
    Frame::from_vec(size, size, data).expect("sprite size is validated")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossingEnvConfig {
    pub width: usize,
    pub height: usize,
    pub road: usize,
    /// Inclusive range of car speeds in cells per step.
    pub speed_range: (usize, usize),
    pub seeds: usize,
    /// Pixels per cell.
    pub sprite_size: usize,
    pub max_steps: usize,
    pub collision_radius: usize,
    pub seed_reward: f64,
    pub goal_reward: f64,
    pub collision_penalty: f64,
    /// Standard deviation of additive pixel noise; 0 renders exactly.
    pub noise: f64,
    /// ZNCC acceptance threshold of every template.
    pub quality: f64,
    /// Contrast floor of every template, as a fraction of the sprite's RMS
    /// deviation.
    pub min_contrast: f64,
}

impl Default for CrossingEnvConfig {
    fn default() -> Self {
        CrossingEnvConfig {
            width: 16,
            height: 8,
            road: 3,
            speed_range: (1, 3),
            seeds: 2,
            sprite_size: 4,
            max_steps: 60,
            collision_radius: 1,
            seed_reward: 1.0,
            goal_reward: 10.0,
            collision_penalty: 10.0,
            noise: 0.0,
            quality: 0.75,
            min_contrast: 0.25,
        }
    }
}

impl CrossingEnvConfig {
    /// Keys under `section`: `width`, `height`, `road`, `speed_min`,
    /// `speed_max`, `seeds`, `sprite_size`, `max_steps`, `collision_radius`,
    /// `seed_reward`, `goal_reward`, `collision_penalty`, `noise`, `quality`, `min_contrast`.
    pub fn from_config(cfg: &Config, section: &str) -> EnvResult<Self> {
        let d = CrossingEnvConfig::default();
        let key = |k: &str| format!("{section}.{k}");
        let out = CrossingEnvConfig {
            width: cfg.get_or(&key("width"), d.width)?,
            height: cfg.get_or(&key("height"), d.height)?,
            road: cfg.get_or(&key("road"), d.road)?,
            speed_range: (cfg.get_or(&key("speed_min"), d.speed_range.0)?, cfg.get_or(&key("speed_max"), d.speed_range.1)?),
            seeds: cfg.get_or(&key("seeds"), d.seeds)?,
            sprite_size: cfg.get_or(&key("sprite_size"), d.sprite_size)?,
            max_steps: cfg.get_or(&key("max_steps"), d.max_steps)?,
            collision_radius: cfg.get_or(&key("collision_radius"), d.collision_radius)?,
            seed_reward: cfg.get_or(&key("seed_reward"), d.seed_reward)?,
            goal_reward: cfg.get_or(&key("goal_reward"), d.goal_reward)?,
            collision_penalty: cfg.get_or(&key("collision_penalty"), d.collision_penalty)?,
            noise: cfg.get_or(&key("noise"), d.noise)?,
            quality: cfg.get_or(&key("quality"), d.quality)?,
            min_contrast: cfg.get_or(&key("min_contrast"), d.min_contrast)?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> EnvResult<()> {
        let bad = |m: String| Err(EnvError::Config(m));
        if self.width < 2 || self.height < 3 {
            return bad(format!("grid {}x{} too small", self.width, self.height));
        }
        if self.road == 0 || self.road + 1 >= self.height {
            return bad(format!("road row {} must be interior", self.road));
        }
        let (lo, hi) = self.speed_range;
        if lo == 0 || lo > hi || hi >= self.width {
            return bad(format!("speed range {lo}..={hi} must lie in 1..width"));
        }
        if self.seeds > self.seed_rows().len() {
            return bad(format!("{} seeds but only {} free rows", self.seeds, self.seed_rows().len()));
        }
        if self.sprite_size < 2 {
            return bad("sprite size must be at least 2".into());
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1".into());
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() || !(self.quality > 0.0 && self.quality <= 1.0) {
            return bad("noise must be >= 0 and quality in (0, 1]".into());
        }
        if !(self.min_contrast >= 0.0 && self.min_contrast < 1.0) {
            return bad("min_contrast must be in [0, 1)".into());
        }
        Ok(())
    }

    pub fn agent_col(&self) -> usize {
        self.width / 2
    }

    /// Rows between the road and the start row, where seeds are placed.
    fn seed_rows(&self) -> Vec<usize> {
        (self.road + 1..self.height - 1).collect()
    }

    fn car_after(&self, car_col: usize, speed: usize) -> usize {
        (car_col + self.width - speed % self.width) % self.width
    }
}

/// Hidden ground truth of the crossing world.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossingWorld {
    pub agent_row: usize,
    pub agent_col: usize,
    pub car_col: usize,
    pub car_speed: usize,
    /// Uncollected seeds as (row, col) cells.
    pub seeds: Vec<(usize, usize)>,
    pub steps: usize,
    /// Seeds the per-frame noise.
    pub noise_seed: u64,
}

impl CrossingWorld {
    pub fn state(&self) -> State {
        State::from_pairs([
            ("agent_col", self.agent_col as f64),
            ("agent_row", self.agent_row as f64),
            ("car_col", self.car_col as f64),
            ("car_speed", self.car_speed as f64),
            ("seeds_left", self.seeds.len() as f64),
        ])
    }
}

/// Draws seeds first, then the car, then the agent on a zero background.
/// With `cfg.noise > 0` adds Gaussian noise seeded by the world's noise seed
/// and step count, then clips to `[0, 1]`.
pub fn render(world: &CrossingWorld, cfg: &CrossingEnvConfig) -> EnvResult<Frame> {
    let sz = cfg.sprite_size;
    let mut f = Frame::zeros(cfg.height * sz, cfg.width * sz)?;
    for &(r, c) in &world.seeds {
        f.blit(&sprite(ObjectClass::Seed, sz), r * sz, c * sz);
    }
    f.blit(&sprite(ObjectClass::Car, sz), cfg.road * sz, world.car_col * sz);
    f.blit(&sprite(ObjectClass::Agent, sz), world.agent_row * sz, world.agent_col * sz);
    if cfg.noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(world.noise_seed ^ (world.steps as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let normal = Normal::new(0.0, cfg.noise).map_err(|e| EnvError::Config(e.to_string()))?;
        let data = f.data().iter().map(|v| v + normal.sample(&mut rng)).collect();
        f = Frame::from_vec(f.height(), f.width(), data)?;
    }
    Ok(f)
}

/// Car column uniform over the road, speed uniform over the range, seeds on
/// distinct rows between the road and the start in the agent's column.
pub fn crossing_reset(cfg: &CrossingEnvConfig, seed: u64) -> EnvResult<(CrossingWorld, Frame)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let car_col = rng.random_range(0..cfg.width);
    let car_speed = rng.random_range(cfg.speed_range.0..=cfg.speed_range.1);
    let rows = cfg.seed_rows();
    let mut seeds: Vec<(usize, usize)> =
        sample(&mut rng, rows.len(), cfg.seeds).into_iter().map(|i| (rows[i], cfg.agent_col())).collect();
    seeds.sort_unstable();
    let world = CrossingWorld {
        agent_row: cfg.height - 1,
        agent_col: cfg.agent_col(),
        car_col,
        car_speed,
        seeds,
        steps: 0,
        noise_seed: rng.random(),
    };
    let frame = render(&world, cfg)?;
    Ok((world, frame))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossingStep {
    pub world: CrossingWorld,
    pub frame: Frame,
    pub reward: f64,
    pub done: bool,
    pub violation: bool,
}

/// Moves the agent one cell (clamped to the grid). Reaching a row above the
/// road ends the episode with the goal reward before the car moves. The car
/// then moves left by its speed with wraparound; the agent collides when it
/// is on the road within the collision radius of the car. Seeds are
/// collected by entering their cell.
pub fn crossing_step(cfg: &CrossingEnvConfig, world: &CrossingWorld, action: &str) -> EnvResult<CrossingStep> {
    let mut w = world.clone();
    match action {
        "up" => w.agent_row = w.agent_row.saturating_sub(1),
        "down" => w.agent_row = (w.agent_row + 1).min(cfg.height - 1),
        "stay" => {}
        other => return Err(EnvError::InvalidAction(other.to_string())),
    }
    w.steps += 1;
    let mut reward = 0.0;
    let mut violation = false;
    let mut done = false;
    if w.agent_row < cfg.road {
        reward += cfg.goal_reward;
        done = true;
    } else {
        w.car_col = cfg.car_after(w.car_col, w.car_speed);
        if w.agent_row == cfg.road && w.agent_col.abs_diff(w.car_col) <= cfg.collision_radius {
            reward -= cfg.collision_penalty;
            violation = true;
            done = true;
        }
    }
    let before = w.seeds.len();
    w.seeds.retain(|&cell| cell != (w.agent_row, w.agent_col));
    reward += cfg.seed_reward * (before - w.seeds.len()) as f64;
    done |= w.steps >= cfg.max_steps;
    let frame = render(&w, cfg)?;
    Ok(CrossingStep { world: w, frame, reward, done, violation })
}

/// Guard table over `agent_row`, `agent_col`, `car_col` and `car_speed`.
/// `up` from the row below the road and `stay` on the road require the car's
/// next column to be clear of the agent; `down` is the unguarded fallback.
pub fn crossing_guard_table(cfg: &CrossingEnvConfig) -> EnvResult<GuardTable> {
    let (w, r, road) = (cfg.width, cfg.collision_radius, cfg.road);
    let next = "(car_col - car_speed)";
    let clear = |n: &str| format!("(agent_col - {n} > {r} | {n} - agent_col > {r})");
    let wrapped = format!("({next} + {w})");
    let clear = format!("(({next} >= 0 & {}) | ({next} < 0 & {}))", clear(next), clear(&wrapped));
    let guard = |row: usize| -> EnvResult<Formula> {
        parse_formula(&format!("!(agent_row = {row}) | {clear}"))
            .map_err(|e| EnvError::Config(format!("crossing guard: {e}")))
    };
    let entry = |a: &str, g: Formula| GuardEntry::new(a, Vec::new(), g);
    Ok(GuardTable::new(
        vec![entry("down", Formula::True), entry("stay", guard(road)?), entry("up", guard(road + 1)?)],
        "down",
    )?)
}

/// One template per object class at the configured quality; only the car is
/// required.
pub fn crossing_templates(cfg: &CrossingEnvConfig) -> EnvResult<Vec<Template>> {
    ObjectClass::ALL
        .iter()
        .map(|&c| {
            let t = Template::new(c.label(), sprite(c, cfg.sprite_size), cfg.quality, c == ObjectClass::Car)?;
            Ok(t.with_min_contrast(cfg.min_contrast)?)
        })
        .collect()
}

/// Pixel-to-cell map: `agent_row`, `agent_col` and `car_col` are the match
/// coordinates divided by the sprite size.
pub fn crossing_symbol_map(cfg: &CrossingEnvConfig) -> EnvResult<SymbolMap> {
    let k = 1.0 / cfg.sprite_size as f64;
    Ok(SymbolMap::new()
        .with("agent", "agent_row", Axis::Row, k, 0.0)?
        .with("agent", "agent_col", Axis::Col, k, 0.0)?
        .with("car", "car_col", Axis::Col, k, 0.0)?)
}

/// Reads agent and car cells from frames and infers the car speed from
/// consecutive frames. Returns `None` on the first frame of an episode, when
/// the speed is still unknown, and when a required object is not found.
#[derive(Debug, Clone)]
pub struct CrossingObserver {
    cfg: CrossingEnvConfig,
    templates: Vec<Template>,
    map: SymbolMap,
    last_car: Option<usize>,
}

impl CrossingObserver {
    pub fn new(cfg: &CrossingEnvConfig) -> EnvResult<Self> {
        Ok(CrossingObserver {
            cfg: cfg.clone(),
            templates: crossing_templates(cfg)?,
            map: crossing_symbol_map(cfg)?,
            last_car: None,
        })
    }

    /// Rounded cells of the frame's objects: `agent_row`, `agent_col`,
    /// `car_col` (when found) and `seeds_left`.
    pub fn cells(&self, f: &Frame) -> EnvResult<Option<State>> {
        let sym = match extract_symbols(f, &self.templates, &self.map) {
            Ok(s) => s,
            Err(PerceptionError::Failure(_)) => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let mut s = State::new();
        for (k, v) in sym.state.iter() {
            s.set(k, v.round())?;
        }
        let seeds = sym.matches.get("seed").map_or(0, Vec::len);
        s.set("seeds_left", seeds as f64)?;
        Ok(Some(s))
    }
}

impl Observer for CrossingObserver {
    fn reset(&mut self) {
        self.last_car = None;
    }

    fn observe(&mut self, obs: &Observation) -> EnvResult<Option<State>> {
        let Observation::Visual(f) = obs else {
            return Err(EnvError::Config("crossing observer given a symbolic state".into()));
        };
        let Some(mut s) = self.cells(f)? else {
            self.last_car = None;
            return Ok(None);
        };
        let (Some(car), Some(_)) = (s.get("car_col"), s.get("agent_row")) else {
            self.last_car = None;
            return Ok(None);
        };
        let car = car as usize % self.cfg.width;
        let prev = self.last_car.replace(car);
        match prev {
            Some(p) => {
                let speed = (p + self.cfg.width - car) % self.cfg.width;
                s.set("car_speed", speed as f64)?;
                Ok(Some(s))
            }
            None => Ok(None),
        }
    }
}

/// Stateful crossing world emitting rendered frames.
pub struct CrossingEnv {
    cfg: CrossingEnvConfig,
    actions: Vec<String>,
    world: CrossingWorld,
    done: bool,
}

impl CrossingEnv {
    pub fn new(cfg: CrossingEnvConfig) -> EnvResult<Self> {
        let (world, _) = crossing_reset(&cfg, 0)?;
        Ok(CrossingEnv { cfg, actions: CROSSING_ACTIONS.iter().map(|a| a.to_string()).collect(), world, done: true })
    }

    pub fn config(&self) -> &CrossingEnvConfig {
        &self.cfg
    }

    pub fn world(&self) -> &CrossingWorld {
        &self.world
    }
}

impl Environment for CrossingEnv {
    fn actions(&self) -> &[String] {
        &self.actions
    }

    fn reset(&mut self, seed: u64) -> EnvResult<Observation> {
        let (world, frame) = crossing_reset(&self.cfg, seed)?;
        self.world = world;
        self.done = false;
        Ok(Observation::Visual(frame))
    }

    fn step(&mut self, action: &str) -> EnvResult<StepOutcome> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let out = crossing_step(&self.cfg, &self.world, action)?;
        self.world = out.world;
        self.done = out.done;
        Ok(StepOutcome {
            observation: Observation::Visual(out.frame),
            reward: out.reward,
            done: out.done,
            violation: out.violation,
        })
    }

    fn ground_truth(&self) -> State {
        self.world.state()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::eval_formula;
    use crate::shield::shield_action;

    fn world(agent_row: usize, car_col: usize, car_speed: usize) -> CrossingWorld {
        CrossingWorld { agent_row, agent_col: 8, car_col, car_speed, seeds: Vec::new(), steps: 0, noise_seed: 0 }
    }

    #[test]
    fn car_moves_left_with_wrap() {
        let cfg = CrossingEnvConfig::default();
        let out = crossing_step(&cfg, &world(7, 10, 2), "stay").unwrap();
        assert_eq!(out.world.car_col, 8);
        let out = crossing_step(&cfg, &world(7, 1, 3), "stay").unwrap();
        assert_eq!(out.world.car_col, 14);
    }

    #[test]
    fn entering_the_road_into_the_car_collides() {
        let cfg = CrossingEnvConfig::default();
        let out = crossing_step(&cfg, &world(4, 10, 2), "up").unwrap();
        assert!(out.violation && out.done);
        assert_eq!(out.reward, -10.0);
        for car in 0..16 {
            assert!(!crossing_step(&cfg, &world(6, car, 1), "up").unwrap().violation);
        }
    }

    #[test]
    fn goal_and_seeds() {
        let cfg = CrossingEnvConfig::default();
        let out = crossing_step(&cfg, &world(3, 8, 1), "up").unwrap();
        assert!(out.done && !out.violation && out.reward == 10.0);
        let mut w = world(6, 0, 1);
        w.seeds = vec![(5, 8), (4, 8)];
        let out = crossing_step(&cfg, &w, "up").unwrap();
        assert_eq!((out.reward, out.world.seeds.clone()), (1.0, vec![(4, 8)]));
    }

    #[test]
    fn reset_is_seeded() {
        let cfg = CrossingEnvConfig::default();
        assert_eq!(crossing_reset(&cfg, 0).unwrap(), crossing_reset(&cfg, 0).unwrap());
        let (w, _) = crossing_reset(&cfg, 5).unwrap();
        assert_eq!(w.seeds.len(), 2);
        assert!(w.seeds.iter().all(|&(r, c)| r > cfg.road && r < cfg.height - 1 && c == 8));
    }

    #[test]
    fn render_blits_sprites_on_black() {
        let cfg = CrossingEnvConfig { seeds: 0, ..CrossingEnvConfig::default() };
        let w = world(6, 2, 1);
        let f = render(&w, &cfg).unwrap();
        let agent = sprite(ObjectClass::Agent, 4);
        let car = sprite(ObjectClass::Car, 4);
        let mut expected = Frame::zeros(32, 64).unwrap();
        expected.blit(&car, 12, 8);
        expected.blit(&agent, 24, 32);
        assert_eq!(f, expected);
        assert_eq!(f.get(25, 33), agent.get(1, 1));
    }

    #[test]
    fn sprites_are_distinct_and_uncorrelated() {
        for a in ObjectClass::ALL {
            let ta = Template::new(a.label(), sprite(a, 4), 0.9, false).unwrap();
            for b in ObjectClass::ALL {
                if a != b {
                    let z = ta.zncc(&sprite(b, 4), 0, 0).unwrap();
                    assert!(z < 0.9, "{} vs {}: {z}", a.label(), b.label());
                }
            }
        }
        assert_eq!(sprite(ObjectClass::Car, 8).get(7, 7), sprite(ObjectClass::Car, 4).get(3, 3));
    }

    /// The guard must admit an action exactly when stepping does not
    /// collide; the simulator is the oracle.
    #[test]
    fn guard_matches_simulated_collisions() {
        let cfg = CrossingEnvConfig::default();
        let gt = crossing_guard_table(&cfg).unwrap();
        // rows above the road end the episode, so only these are reachable
        for row in cfg.road..cfg.height {
            for car in 0..cfg.width {
                for speed in 1..=3 {
                    let w = world(row, car, speed);
                    for a in CROSSING_ACTIONS {
                        let admitted = eval_formula(gt.guard(a).unwrap(), &w.state()).unwrap();
                        let collides = crossing_step(&cfg, &w, a).unwrap().violation;
                        assert_eq!(admitted, !collides, "row {row} car {car} speed {speed} {a}");
                        let d = shield_action(&gt, &w.state(), a, 0.0).unwrap();
                        assert!(!crossing_step(&cfg, &w, d.action).unwrap().violation);
                    }
                }
            }
        }
        assert_eq!(gt.fallback(), "down");
    }

    #[test]
    fn observer_reads_cells_and_speed() {
        let cfg = CrossingEnvConfig::default();
        let mut obs = CrossingObserver::new(&cfg).unwrap();
        let (w, f) = crossing_reset(&cfg, 3).unwrap();
        assert_eq!(obs.observe(&Observation::Visual(f)).unwrap(), None);
        let out = crossing_step(&cfg, &w, "up").unwrap();
        let s = obs.observe(&Observation::Visual(out.frame)).unwrap().unwrap();
        let truth = out.world.state();
        for v in ["agent_row", "agent_col", "car_col", "car_speed", "seeds_left"] {
            assert_eq!(s.get(v), truth.get(v), "{v}");
        }
    }

    #[test]
    fn missing_car_is_a_perception_failure() {
        let cfg = CrossingEnvConfig::default();
        let obs = CrossingObserver::new(&cfg).unwrap();
        let mut f = Frame::zeros(32, 64).unwrap();
        f.blit(&sprite(ObjectClass::Agent, 4), 24, 32);
        assert_eq!(obs.cells(&f).unwrap(), None);
        let err = extract_symbols(&f, &crossing_templates(&cfg).unwrap(), &crossing_symbol_map(&cfg).unwrap());
        assert!(matches!(err, Err(PerceptionError::Failure(c)) if c == "car"));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for cfg in [
            CrossingEnvConfig { road: 0, ..Default::default() },
            CrossingEnvConfig { road: 7, ..Default::default() },
            CrossingEnvConfig { speed_range: (0, 2), ..Default::default() },
            CrossingEnvConfig { seeds: 5, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
