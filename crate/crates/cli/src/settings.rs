use std::path::{Path, PathBuf};

use hybrid_shield::agent::{Discretizer, TrainConfig};
use hybrid_shield::config::Config;
use hybrid_shield::envs::{crossing_guard_table, CarEnvConfig, CrossingEnvConfig};
use hybrid_shield::lang::Model;
use hybrid_shield::shield::{extract_guards, split_control_loop, ControlLoop, GuardTable};

use crate::CliError;

pub const DEFAULTS: &str = include_str!("../../../models/defaults.cfg");
pub const STOPSIGN_MODEL: &str = include_str!("../../../models/stopsign.hp");

/// Built-in defaults, then the config file, then `HPSHIELD_*` environment
/// variables, then command-line overrides.
pub fn layered_config(
    file: Option<&Path>,
    overrides: &[(String, String)],
    env: impl Fn(&str) -> Option<String>,
) -> Result<Config, CliError> {
    let mut cfg = Config::parse(DEFAULTS).expect("built-in defaults parse");
    if let Some(path) = file {
        let user = Config::load(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        cfg.merge(&user);
    }
    let extra = ["car.b_actual", "car.A_actual"];
    cfg.apply_env_with(&extra, env);
    for (k, v) in overrides {
        cfg.set(k.clone(), v.clone());
    }
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Car,
    Crossing,
}

/// Everything a command needs, resolved from the layered config.
#[derive(Debug, Clone)]
pub struct Settings {
    pub config: Config,
    pub out: PathBuf,
    pub seeds: Vec<u64>,
}

impl Settings {
    pub fn new(config: Config, out: PathBuf, seeds: Option<Vec<u64>>) -> Result<Self, CliError> {
        let seeds = match seeds {
            Some(s) => s,
            None => config.list("run.seeds")?.unwrap_or_else(|| vec![0]),
        };
        if seeds.is_empty() {
            return Err(CliError::Usage("empty seed list".into()));
        }
        Ok(Settings { config, out, seeds })
    }

    pub fn env_kind(&self) -> Result<EnvKind, CliError> {
        match self.config.raw("env.kind").unwrap_or("car") {
            "car" => Ok(EnvKind::Car),
            "crossing" => Ok(EnvKind::Crossing),
            other => Err(CliError::Input(format!("env.kind: unknown environment `{other}`"))),
        }
    }

    pub fn car(&self) -> Result<CarEnvConfig, CliError> {
        Ok(CarEnvConfig::from_config(&self.config, "car")?)
    }

    pub fn crossing(&self) -> Result<CrossingEnvConfig, CliError> {
        Ok(CrossingEnvConfig::from_config(&self.config, "crossing")?)
    }

    pub fn train(&self) -> Result<TrainConfig, CliError> {
        Ok(TrainConfig::from_config(&self.config, "train")?)
    }

    /// `[bins]` entries if present, else the environment's default.
    pub fn discretizer(&self) -> Result<Discretizer, CliError> {
        if let Some(d) = Discretizer::from_config(&self.config, "bins")? {
            return Ok(d);
        }
        Ok(match self.env_kind()? {
            EnvKind::Car => Discretizer::car_default(self.car()?.stop)?,
            EnvKind::Crossing => {
                let c = self.crossing()?;
                Discretizer::crossing_default(c.width, c.height, c.speed_range.1)?
            }
        })
    }

    /// The model named by `shield.model`, or the built-in stop-sign model.
    pub fn shield_model(&self) -> Result<(String, Model), CliError> {
        let (name, text) = match self.config.raw("shield.model").filter(|p| !p.is_empty()) {
            Some(p) => (p.to_string(), read_text(Path::new(p))?),
            None => ("<built-in stop-sign model>".to_string(), STOPSIGN_MODEL.to_string()),
        };
        let model = Model::parse(&text).map_err(|e| CliError::Input(format!("{name}: {}", e.render(&text))))?;
        Ok((name, model))
    }

    /// Guard table and plant of the car shield model.
    pub fn car_shield(&self) -> Result<(GuardTable, ControlLoop), CliError> {
        let (_, model) = self.shield_model()?;
        let plant = split_control_loop(&model.program)?;
        let labels: Vec<String> = self.config.list("shield.labels")?.unwrap_or_default();
        let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
        let fallback = self.config.raw("shield.fallback").unwrap_or("brake");
        let table = extract_guards(&plant.ctrl, (!labels.is_empty()).then_some(labels.as_slice()), fallback)?;
        Ok((table, plant))
    }

    pub fn shield_table(&self) -> Result<GuardTable, CliError> {
        match self.env_kind()? {
            EnvKind::Car => Ok(self.car_shield()?.0),
            EnvKind::Crossing => Ok(crossing_guard_table(&self.crossing()?)?),
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_flag_over_env_over_file_over_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        std::fs::write(&path, "[train]\nepisodes = 10\nalpha = 0.5\ngamma = 0.5\n").unwrap();
        let env = |name: &str| match name {
            "HPSHIELD_TRAIN_ALPHA" | "HPSHIELD_TRAIN_GAMMA" => Some("0.25".to_string()),
            "HPSHIELD_CAR_B_ACTUAL" => Some("0.5".to_string()),
            _ => None,
        };
        let cfg = layered_config(Some(&path), &[("train.gamma".into(), "0.75".into())], env).unwrap();
        assert_eq!(cfg.raw("train.episodes"), Some("10"));
        assert_eq!(cfg.raw("train.alpha"), Some("0.25"));
        assert_eq!(cfg.raw("train.gamma"), Some("0.75"));
        assert_eq!(cfg.raw("train.eps_decay"), Some("4000"));
        assert_eq!(cfg.raw("car.b_actual"), Some("0.5"));
    }

    #[test]
    fn default_settings_resolve() {
        let cfg = layered_config(None, &[], |_| None).unwrap();
        let s = Settings::new(cfg, PathBuf::from("out"), None).unwrap();
        assert_eq!(s.seeds, vec![0]);
        assert_eq!(s.env_kind().unwrap(), EnvKind::Car);
        assert_eq!(s.car().unwrap(), CarEnvConfig::default());
        assert_eq!(s.crossing().unwrap(), CrossingEnvConfig::default());
        assert_eq!(s.train().unwrap(), TrainConfig::default());
        let t = s.shield_table().unwrap();
        assert_eq!(t.fallback(), "brake");
        assert_eq!(t.actions().collect::<Vec<_>>(), vec!["brake", "accel"]);
        assert_eq!(s.discretizer().unwrap().cells(), 1250);
    }
}
