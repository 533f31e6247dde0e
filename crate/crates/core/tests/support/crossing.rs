//! Render/extract round trips of the crossing world.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hybrid_shield::envs::{crossing_symbol_map, crossing_templates, render, CrossingEnvConfig, CrossingWorld};
use hybrid_shield::perception::{extract_symbols, Match};

pub fn square_grid() -> CrossingEnvConfig {
    CrossingEnvConfig { width: 16, height: 16, road: 7, ..CrossingEnvConfig::default() }
}

/// Top-left pixels of the objects that should be visible in `w`, per label.
pub fn truth(cfg: &CrossingEnvConfig, w: &CrossingWorld) -> Vec<(&'static str, usize, usize)> {
    let k = cfg.sprite_size;
    let mut out = vec![("agent", w.agent_row * k, w.agent_col * k)];
    if (w.agent_row, w.agent_col) != (cfg.road, w.car_col) {
        out.push(("car", cfg.road * k, w.car_col * k));
    }
    for &(r, c) in &w.seeds {
        if (r, c) != (w.agent_row, w.agent_col) && (r, c) != (cfg.road, w.car_col) {
            out.push(("seed", r * k, c * k));
        }
    }
    out.sort();
    out
}

fn found(ms: &std::collections::BTreeMap<String, Vec<Match>>) -> Vec<(&'static str, usize, usize)> {
    let mut out = Vec::new();
    for (label, list) in ms {
        let label = match label.as_str() {
            "agent" => "agent",
            "car" => "car",
            _ => "seed",
        };
        out.extend(list.iter().map(|m| (label, m.row, m.col)));
    }
    out.sort();
    out
}

/// Largest pixel error between the extracted and true objects, or `None`
/// when the two sets differ in size or labels, or a required object is
/// missing.
pub fn pixel_error(cfg: &CrossingEnvConfig, w: &CrossingWorld) -> Option<usize> {
    let frame = render(w, cfg).unwrap();
    let templates = crossing_templates(cfg).unwrap();
    let map = crossing_symbol_map(cfg).unwrap();
    let sym = extract_symbols(&frame, &templates, &map).ok()?;
    let (want, got) = (truth(cfg, w), found(&sym.matches));
    if want.len() != got.len() {
        return None;
    }
    want.iter().zip(&got).try_fold(0, |acc, (a, b)| {
        (a.0 == b.0).then(|| acc.max(a.1.abs_diff(b.1)).max(a.2.abs_diff(b.2)))
    })
}

/// Every agent cell against every car column, with a seed two rows above
/// the bottom. Returns (frames checked, frames not recovered exactly,
/// occluded-car frames that did not report a failure).
pub fn exhaustive(cfg: &CrossingEnvConfig) -> (usize, usize, usize) {
    let templates = crossing_templates(cfg).unwrap();
    let map = crossing_symbol_map(cfg).unwrap();
    let (mut checked, mut wrong, mut occlusion_misses) = (0, 0, 0);
    for agent_row in 0..cfg.height {
        for agent_col in 0..cfg.width {
            for car_col in 0..cfg.width {
                let w = CrossingWorld {
                    agent_row,
                    agent_col,
                    car_col,
                    car_speed: 1,
                    seeds: vec![(cfg.height - 2, (agent_col + cfg.width / 2) % cfg.width)],
                    steps: 0,
                    noise_seed: 0,
                };
                checked += 1;
                if (agent_row, agent_col) == (cfg.road, car_col) {
                    let frame = render(&w, cfg).unwrap();
                    if extract_symbols(&frame, &templates, &map).is_ok() {
                        occlusion_misses += 1;
                    }
                    continue;
                }
                if pixel_error(cfg, &w) != Some(0) {
                    wrong += 1;
                }
            }
        }
    }
    (checked, wrong, occlusion_misses)
}

/// Random worlds rendered with noise; returns how many were read back with
/// every object within one pixel.
pub fn noisy_trials(cfg: &CrossingEnvConfig, trials: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .filter(|_| {
            let agent_row = rng.random_range(0..cfg.height);
            let agent_col = rng.random_range(0..cfg.width);
            let car_col = loop {
                let c = rng.random_range(0..cfg.width);
                if (agent_row, agent_col) != (cfg.road, c) {
                    break c;
                }
            };
            let seed_cell = (rng.random_range(cfg.road + 1..cfg.height), rng.random_range(0..cfg.width));
            let w = CrossingWorld {
                agent_row,
                agent_col,
                car_col,
                car_speed: 1,
                seeds: if seed_cell == (agent_row, agent_col) { vec![] } else { vec![seed_cell] },
                steps: 0,
                noise_seed: rng.random(),
            };
            pixel_error(cfg, &w).is_some_and(|e| e <= 1)
        })
        .count()
}
