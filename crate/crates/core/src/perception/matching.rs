use std::collections::BTreeMap;

use super::error::{PerceptionError, PerceptionResult};
use super::frame::Frame;
use crate::exec::State;
use crate::scalar::Scalar;

/// Reference patch for one object class.
#[derive(Debug, Clone, PartialEq)]
pub struct Template<S = f64> {
    pub label: String,
    patch: Frame<S>,
    /// Minimum score for a match to count.
    pub quality: S,
    /// Safety-relevant classes must be found in every frame.
    pub required: bool,
    /// Windows whose RMS deviation is below this fraction of the patch's
    /// count as featureless and get no score.
    pub min_contrast: S,
    // centred patch values and their norm
    centred: Vec<S>,
    norm: S,
}

impl<S: Scalar> Template<S> {
    pub fn new(label: impl Into<String>, patch: Frame<S>, quality: S, required: bool) -> PerceptionResult<Self> {
        let label = label.into();
        let n = S::lit(patch.data().len() as f64);
        let mean = patch.data().iter().copied().sum::<S>() / n;
        let centred: Vec<S> = patch.data().iter().map(|&v| v - mean).collect();
        let norm = centred.iter().map(|&d| d * d).sum::<S>().sqrt();
        if !(norm > S::epsilon()) {
            return Err(PerceptionError::ConstantTemplate(label));
        }
        if !(quality > S::zero() && quality <= S::one()) {
            return Err(PerceptionError::SymbolMap(format!("quality {quality} of `{label}` not in (0, 1]")));
        }
        Ok(Template { label, patch, quality, required, min_contrast: S::zero(), centred, norm })
    }

    pub fn with_min_contrast(mut self, fraction: S) -> PerceptionResult<Self> {
        if !(fraction >= S::zero() && fraction < S::one()) {
            return Err(PerceptionError::SymbolMap(format!("min contrast {fraction} of `{}` not in [0, 1)", self.label)));
        }
        self.min_contrast = fraction;
        Ok(self)
    }

    pub fn patch(&self) -> &Frame<S> {
        &self.patch
    }

    fn fits(&self, f: &Frame<S>) -> PerceptionResult<()> {
        let (th, tw) = (self.patch.height(), self.patch.width());
        if th > f.height() || tw > f.width() {
            return Err(PerceptionError::TemplateTooLarge {
                label: self.label.clone(),
                th,
                tw,
                fh: f.height(),
                fw: f.width(),
            });
        }
        Ok(())
    }

    /// Zero-normalized cross-correlation with the window at `(row, col)`;
    /// `None` when the window is constant or below the contrast floor.
    pub fn zncc(&self, f: &Frame<S>, row: usize, col: usize) -> Option<S> {
        let (th, tw) = (self.patch.height(), self.patch.width());
        let n = S::lit((th * tw) as f64);
        let mut sum = S::zero();
        for r in 0..th {
            for c in 0..tw {
                sum = sum + f.get(row + r, col + c);
            }
        }
        let mean = sum / n;
        let (mut cross, mut var) = (S::zero(), S::zero());
        for r in 0..th {
            for c in 0..tw {
                let d = f.get(row + r, col + c) - mean;
                cross = cross + d * self.centred[r * tw + c];
                var = var + d * d;
            }
        }
        let floor = self.min_contrast.max(S::epsilon().sqrt());
        if !(var.sqrt() > floor * self.norm) {
            return None;
        }
        Some((cross / (var.sqrt() * self.norm)).max(-S::one()).min(S::one()))
    }

    fn score_map(&self, f: &Frame<S>) -> PerceptionResult<ScoreMap<S>> {
        self.fits(f)?;
        let rows = f.height() - self.patch.height() + 1;
        let cols = f.width() - self.patch.width() + 1;
        let mut scores = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                scores.push(self.zncc(f, r, c));
            }
        }
        if scores.iter().all(Option::is_none) {
            return Err(PerceptionError::DegenerateWindow(self.label.clone()));
        }
        Ok(ScoreMap { rows, cols, scores })
    }
}

struct ScoreMap<S> {
    rows: usize,
    cols: usize,
    scores: Vec<Option<S>>,
}

impl<S: Scalar> ScoreMap<S> {
    fn at(&self, r: usize, c: usize) -> Option<S> {
        self.scores[r * self.cols + c]
    }

    fn is_local_max(&self, r: usize, c: usize, s: S) -> bool {
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if (dr, dc) == (0, 0) || nr < 0 || nc < 0 || nr as usize >= self.rows || nc as usize >= self.cols {
                    continue;
                }
                if let Some(o) = self.at(nr as usize, nc as usize) {
                    if o > s {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// A located object: top-left pixel of the patch and its ZNCC score.
#[derive(Debug, Clone, PartialEq)]
pub struct Match<S = f64> {
    pub label: String,
    pub row: usize,
    pub col: usize,
    pub score: S,
}

/// Best-scoring position; ties go to the smallest `(row, col)`.
pub fn match_template<S: Scalar>(f: &Frame<S>, t: &Template<S>) -> PerceptionResult<Match<S>> {
    let map = t.score_map(f)?;
    let mut best: Option<(usize, usize, S)> = None;
    for r in 0..map.rows {
        for c in 0..map.cols {
            if let Some(s) = map.at(r, c) {
                if best.is_none_or(|(_, _, b)| s > b) {
                    best = Some((r, c, s));
                }
            }
        }
    }
    let (row, col, score) = best.expect("score map has a defined entry");
    Ok(Match { label: t.label.clone(), row, col, score })
}

/// Every local maximum scoring at least `quality`, greedily suppressed so
/// that no two kept matches overlap (their offsets are less than the patch
/// size in both axes). Sorted by descending score, then `(row, col)`.
pub fn match_all<S: Scalar>(f: &Frame<S>, t: &Template<S>, quality: S) -> PerceptionResult<Vec<Match<S>>> {
    let map = t.score_map(f)?;
    let mut cands = Vec::new();
    for r in 0..map.rows {
        for c in 0..map.cols {
            if let Some(s) = map.at(r, c) {
                if s >= quality && map.is_local_max(r, c, s) {
                    cands.push((r, c, s));
                }
            }
        }
    }
    cands.sort_by(|a, b| b.2.partial_cmp(&a.2).expect("scores are finite").then((a.0, a.1).cmp(&(b.0, b.1))));
    let (th, tw) = (t.patch.height(), t.patch.width());
    let mut kept: Vec<Match<S>> = Vec::new();
    for (r, c, s) in cands {
        if kept.iter().all(|m| m.row.abs_diff(r) >= th || m.col.abs_diff(c) >= tw) {
            kept.push(Match { label: t.label.clone(), row: r, col: c, score: s });
        }
    }
    Ok(kept)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Row,
    Col,
}

/// `var = scale * coordinate + offset` for one pixel axis of a match.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineBinding {
    pub var: String,
    pub axis: Axis,
    pub scale: f64,
    pub offset: f64,
}

/// Per-class affine maps from pixel positions to state variables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SymbolMap {
    bindings: BTreeMap<String, Vec<AffineBinding>>,
}

impl SymbolMap {
    pub fn new() -> Self {
        SymbolMap::default()
    }

    pub fn bind(&mut self, class: &str, var: &str, axis: Axis, scale: f64, offset: f64) -> PerceptionResult<()> {
        if scale == 0.0 || !scale.is_finite() || !offset.is_finite() {
            return Err(PerceptionError::SymbolMap(format!("`{var}`: scale must be finite and nonzero")));
        }
        self.bindings.entry(class.to_string()).or_default().push(AffineBinding {
            var: var.to_string(),
            axis,
            scale,
            offset,
        });
        Ok(())
    }

    pub fn with(mut self, class: &str, var: &str, axis: Axis, scale: f64, offset: f64) -> PerceptionResult<Self> {
        self.bind(class, var, axis, scale, offset)?;
        Ok(self)
    }

    pub fn bindings(&self, class: &str) -> &[AffineBinding] {
        self.bindings.get(class).map_or(&[], Vec::as_slice)
    }
}

/// Symbolic reading of a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Symbols<S = f64> {
    /// Mapped variables of the best match of each found class.
    pub state: State<S>,
    /// All accepted matches per class.
    pub matches: BTreeMap<String, Vec<Match<S>>>,
}

/// Locates every template and maps the best match of each class through
/// `map`. A required class with no acceptable match yields
/// [`PerceptionError::Failure`]; a uniform frame counts as no match.
pub fn extract_symbols<S: Scalar>(
    f: &Frame<S>,
    templates: &[Template<S>],
    map: &SymbolMap,
) -> PerceptionResult<Symbols<S>> {
    let mut state = State::new();
    let mut matches = BTreeMap::new();
    for t in templates {
        let found = match match_all(f, t, t.quality) {
            Ok(m) => m,
            Err(PerceptionError::DegenerateWindow(_)) => Vec::new(),
            Err(e) => return Err(e),
        };
        match found.first() {
            Some(best) => {
                for b in map.bindings(&t.label) {
                    let coord = match b.axis {
                        Axis::Row => best.row,
                        Axis::Col => best.col,
                    };
                    let v = S::lit(b.scale * coord as f64 + b.offset);
                    state.set(b.var.clone(), v).map_err(|e| PerceptionError::SymbolMap(e.to_string()))?;
                }
            }
            None if t.required => return Err(PerceptionError::Failure(t.label.clone())),
            None => {}
        }
        matches.insert(t.label.clone(), found);
    }
    Ok(Symbols { state, matches })
}
