//! Procedural level generation: wave-function collapse over a binary tile
//! alphabet, component pruning, start/goal placement, and distance-weighted
//! moss/lava sampling.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grid::{solvable, DistanceField, GridError, LevelParams, RawGrid, TileType};
use crate::rng;

#[derive(Debug, Error)]
pub enum WfcError {
    #[error("wave collapse hit contradictions on all {attempts} attempts")]
    ContradictionExhausted { attempts: u32 },
    #[error("layout has {navigable} navigable cells, need at least 2")]
    DegenerateLayout { navigable: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("unknown base pattern `{0}`")]
    UnknownPattern(String),
}

/// Small exemplar grid over {Empty, Wall} whose orthogonal adjacencies
/// define what the collapse may place next to what.
#[derive(Clone, Debug)]
pub struct BasePattern {
    pub id: String,
    pub grid: RawGrid,
}

impl BasePattern {
    pub fn new(id: impl Into<String>, grid: RawGrid) -> BasePattern {
        assert!(
            grid.width >= 2 && grid.height >= 2,
            "pattern needs both adjacency directions"
        );
        assert!(
            grid.tiles.contains(&TileType::Empty),
            "pattern needs a navigable cell"
        );
        BasePattern { id: id.into(), grid }
    }

    pub fn from_digit_rows(id: &str, rows: &[&str]) -> BasePattern {
        let level = LevelParams::from_digit_rows(id, rows);
        BasePattern::new(
            id,
            RawGrid { width: level.width, height: level.height, tiles: level.grid },
        )
    }

    /// `allowed.0[a][b]`: b may sit right of a; `allowed.1[a][b]`: b may sit
    /// below a. Indices are tile codes (0 Empty, 1 Wall).
    fn adjacency(&self) -> ([[bool; 2]; 2], [[bool; 2]; 2]) {
        let g = &self.grid;
        let code = |r: usize, c: usize| g.tiles[r * g.width + c].code() as usize;
        let mut horiz = [[false; 2]; 2];
        let mut vert = [[false; 2]; 2];
        for r in 0..g.height {
            for c in 0..g.width {
                if c + 1 < g.width {
                    horiz[code(r, c)][code(r, c + 1)] = true;
                }
                if r + 1 < g.height {
                    vert[code(r, c)][code(r + 1, c)] = true;
                }
            }
        }
        (horiz, vert)
    }
}

/// The four built-in exemplars used to assemble training sets. Each allows
/// wall-wall contact in both directions, so walling off pruned pockets never
/// produces an adjacency the pattern forbids:
/// `open` collapses to empty rooms, `bands`/`pillars` to full-width stripes
/// (horizontal rows or vertical columns), `caves` to unconstrained noise that
/// pruning carves into organic caverns.
pub fn builtin_patterns() -> Vec<BasePattern> {
    vec![
        BasePattern::from_digit_rows("open", &["00", "00"]),
        BasePattern::from_digit_rows("bands", &["0000", "0000", "1111", "1111", "0000"]),
        BasePattern::from_digit_rows("pillars", &["00110", "00110", "00110"]),
        BasePattern::from_digit_rows("caves", &["0011", "0011", "1100", "1100"]),
    ]
}

pub fn builtin_pattern(id: &str) -> Result<BasePattern, WfcError> {
    builtin_patterns()
        .into_iter()
        .find(|p| p.id == id)
        .ok_or_else(|| WfcError::UnknownPattern(id.into()))
}

/// Generation knobs for one level family.
#[derive(Clone, Debug)]
pub struct GenConfig {
    pub width: usize,
    pub height: usize,
    /// Probability scale for turning a navigable cell into Moss.
    pub moss_fraction: f64,
    /// Probability scale for turning a Wall cell into Lava.
    pub lava_fraction: f64,
    pub max_restarts: u32,
    pub pattern: String,
    pub seed: u64,
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), WfcError> {
        let ok = (0.0..=1.0).contains(&self.moss_fraction)
            && (0.0..=1.0).contains(&self.lava_fraction)
            && self.max_restarts >= 1
            && self.width >= 2
            && self.height >= 2;
        if ok {
            Ok(())
        } else {
            Err(WfcError::Grid(GridError::InvalidLevel {
                id: format!("gen:{}", self.pattern),
                reason: "fractions must lie in [0,1], max_restarts ≥ 1, size ≥ 2×2".into(),
            }))
        }
    }
}

impl Default for GenConfig {
    fn default() -> GenConfig {
        GenConfig {
            width: 13,
            height: 13,
            moss_fraction: 0.3,
            lava_fraction: 0.3,
            max_restarts: 64,
            pattern: "caves".into(),
            seed: 0,
        }
    }
}

fn collapse_once(
    horiz: &[[bool; 2]; 2],
    vert: &[[bool; 2]; 2],
    width: usize,
    height: usize,
    rng: &mut ChaCha8Rng,
) -> Option<RawGrid> {
    let n = width * height;
    // domain[i] = [empty allowed, wall allowed]
    let mut domain = vec![[true, true]; n];

    let support = |dom: [bool; 2], table: &[[bool; 2]; 2], forward: bool, t: usize| -> bool {
        (0..2).any(|s| dom[s] && if forward { table[s][t] } else { table[t][s] })
    };

    let mut queue: Vec<usize> = Vec::new();
    let propagate = |domain: &mut Vec<[bool; 2]>, start: usize, queue: &mut Vec<usize>| -> bool {
        queue.clear();
        queue.push(start);
        while let Some(i) = queue.pop() {
            let (r, c) = (i / width, i % width);
            let neighbours = [
                (c + 1 < width).then(|| (i + 1, &*horiz, true)),
                (c > 0).then(|| (i - 1, &*horiz, false)),
                (r + 1 < height).then(|| (i + width, &*vert, true)),
                (r > 0).then(|| (i - width, &*vert, false)),
            ];
            for (j, table, forward) in neighbours.into_iter().flatten() {
                let mut changed = false;
                for t in 0..2 {
                    if domain[j][t] && !support(domain[i], table, forward, t) {
                        domain[j][t] = false;
                        changed = true;
                    }
                }
                if !domain[j][0] && !domain[j][1] {
                    return false;
                }
                if changed {
                    queue.push(j);
                }
            }
        }
        true
    };

    let mut undecided: Vec<usize> = (0..n).collect();
    while !undecided.is_empty() {
        // Uniform weights: every undecided cell has the same entropy, so
        // minimum-entropy selection is a uniform choice among them.
        let pick = rng.gen_range(0..undecided.len());
        let cell = undecided[pick];
        let dom = domain[cell];
        let options: Vec<usize> = (0..2).filter(|&t| dom[t]).collect();
        let tile = *options.choose(rng).expect("nonempty domain");
        domain[cell] = [tile == 0, tile == 1];
        if !propagate(&mut domain, cell, &mut queue) {
            return None;
        }
        undecided.retain(|&i| domain[i][0] && domain[i][1]);
    }

    let tiles = domain
        .iter()
        .map(|d| if d[0] { TileType::Empty } else { TileType::Wall })
        .collect();
    Some(RawGrid { width, height, tiles })
}

/// Collapses a `width`×`height` layout whose every orthogonal adjacency
/// occurs in `pattern`. Contradictions trigger restarts on fresh streams.
pub fn wfc_collapse(
    pattern: &BasePattern,
    width: usize,
    height: usize,
    max_restarts: u32,
    seed: u64,
) -> Result<RawGrid, WfcError> {
    let (horiz, vert) = pattern.adjacency();
    for attempt in 0..max_restarts {
        let mut rng = rng::substream(seed, "wfc-attempt", attempt as u64);
        if let Some(grid) = collapse_once(&horiz, &vert, width, height, &mut rng) {
            return Ok(grid);
        }
    }
    Err(WfcError::ContradictionExhausted { attempts: max_restarts })
}

/// True iff every orthogonal pair in the level's navigability projection
/// (navigable → Empty, blocked → Wall) occurs in the pattern.
pub fn adjacency_sound(pattern: &BasePattern, level: &LevelParams) -> bool {
    let (horiz, vert) = pattern.adjacency();
    let code = |r: usize, c: usize| !level.grid[r * level.width + c].navigable() as usize;
    for r in 0..level.height {
        for c in 0..level.width {
            if c + 1 < level.width && !horiz[code(r, c)][code(r, c + 1)] {
                return false;
            }
            if r + 1 < level.height && !vert[code(r, c)][code(r + 1, c)] {
                return false;
            }
        }
    }
    true
}

/// Keeps the largest 4-connected Empty component and walls the rest. Equal
/// sizes break toward the component containing the smallest (row,col) cell.
pub fn prune_to_component(layout: &RawGrid) -> RawGrid {
    let n = layout.width * layout.height;
    let mut comp = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    for i in 0..n {
        if layout.tiles[i] != TileType::Empty || comp[i] != usize::MAX {
            continue;
        }
        let label = sizes.len();
        let mut stack = vec![i];
        let mut size = 0usize;
        comp[i] = label;
        while let Some(j) = stack.pop() {
            size += 1;
            let (r, c) = (j / layout.width, j % layout.width);
            for (dr, dc) in [(-1i64, 0i64), (0, 1), (1, 0), (0, -1)] {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if nr < 0 || nc < 0 || nr >= layout.height as i64 || nc >= layout.width as i64 {
                    continue;
                }
                let k = nr as usize * layout.width + nc as usize;
                if layout.tiles[k] == TileType::Empty && comp[k] == usize::MAX {
                    comp[k] = label;
                    stack.push(k);
                }
            }
        }
        sizes.push(size);
    }
    // Row-major discovery order: the first component of maximal size already
    // contains the smallest (row,col) seed.
    let Some(keep) = (0..sizes.len()).max_by_key(|&l| (sizes[l], std::cmp::Reverse(l))) else {
        return layout.clone();
    };
    let tiles = (0..n)
        .map(|i| {
            if layout.tiles[i] == TileType::Empty && comp[i] == keep {
                TileType::Empty
            } else {
                TileType::Wall
            }
        })
        .collect();
    RawGrid { width: layout.width, height: layout.height, tiles }
}

/// Lower median of sorted distances, excluding the goal from candidacy; if
/// nothing but the goal sits at that distance, steps up to the next one.
fn start_candidates(dist: &[u32]) -> (u32, Vec<usize>) {
    let mut sorted: Vec<u32> = dist.to_vec();
    sorted.sort_unstable();
    let mut median = sorted[(sorted.len() - 1) / 2];
    loop {
        let at: Vec<usize> = dist
            .iter()
            .enumerate()
            .filter(|&(_, &d)| d == median)
            .filter(|&(_, &d)| d > 0)
            .map(|(i, _)| i)
            .collect();
        if !at.is_empty() {
            return (median, at);
        }
        median = *sorted
            .iter()
            .find(|&&d| d > median)
            .expect("layout has a non-goal navigable cell");
    }
}

pub(crate) fn place_goal_start_with_rng(
    layout: &RawGrid,
    id: &str,
    rng: &mut ChaCha8Rng,
) -> Result<LevelParams, WfcError> {
    let navigable: Vec<usize> = (0..layout.tiles.len())
        .filter(|&i| layout.tiles[i] == TileType::Empty)
        .collect();
    if navigable.len() < 2 {
        return Err(WfcError::DegenerateLayout { navigable: navigable.len() });
    }
    let mut level = LevelParams::new(id, layout.width, layout.height, layout.tiles.clone());
    let goal = *navigable.choose(rng).expect("nonempty");
    level.grid[goal] = TileType::Goal;
    place_start_with_rng(&mut level, rng)?;
    Ok(level)
}

/// Adds a Start at the lower-median geodesic distance from the level's Goal
/// (candidate ties broken uniformly). The level must hold a Goal and no Start.
pub(crate) fn place_start_with_rng(
    level: &mut LevelParams,
    rng: &mut ChaCha8Rng,
) -> Result<(), WfcError> {
    let field = DistanceField::from_goal(level);
    let mut cells = Vec::new();
    let mut dist = Vec::new();
    for ((r, c), t) in level.cells() {
        if t.navigable() {
            if let Some(d) = field.at(r, c) {
                cells.push(r * level.width + c);
                dist.push(d);
            }
        }
    }
    if dist.len() < 2 {
        return Err(WfcError::DegenerateLayout { navigable: dist.len() });
    }
    let (_, candidates) = start_candidates(&dist);
    let pick = cells[*candidates.choose(rng).expect("nonempty candidates")];
    level.grid[pick] = TileType::Start;
    Ok(())
}

/// Places Goal uniformly over navigable cells, then Start at the lower-median
/// geodesic distance from it.
pub fn place_goal_start(layout: &RawGrid, id: &str, seed: u64) -> Result<LevelParams, WfcError> {
    let mut rng = rng::substream(seed, "place", 0);
    place_goal_start_with_rng(layout, id, &mut rng)
}

/// Distance closeness weight: 1 at the goal falling to 0 at the farthest
/// navigable cell, clamped for blocked cells whose offset exceeds d_max.
fn closeness(d: u32, d_max: u32) -> f64 {
    (1.0 - d as f64 / d_max.max(1) as f64).clamp(0.0, 1.0)
}

pub(crate) fn sample_semantics_with_rng(
    level: &LevelParams,
    cfg: &GenConfig,
    rng: &mut ChaCha8Rng,
) -> LevelParams {
    let field = DistanceField::from_goal(level);
    let d_max = field.max_navigable(level);
    let mut out = level.clone();
    for ((r, c), tile) in level.cells() {
        let Some(d) = field.at(r, c) else { continue };
        let w = closeness(d, d_max);
        match tile {
            TileType::Empty | TileType::Moss => {
                if rng.gen::<f64>() < cfg.moss_fraction * w {
                    out.set_tile(r, c, TileType::Moss);
                } else {
                    out.set_tile(r, c, TileType::Empty);
                }
            }
            TileType::Wall | TileType::Lava => {
                if rng.gen::<f64>() < cfg.lava_fraction * (1.0 - w) {
                    out.set_tile(r, c, TileType::Lava);
                } else {
                    out.set_tile(r, c, TileType::Wall);
                }
            }
            _ => {}
        }
    }
    out
}

/// Bernoulli moss/lava placement weighted by closeness to the goal: moss
/// thickens near it, lava thickens far from it.
pub fn sample_semantics(level: &LevelParams, cfg: &GenConfig, seed: u64) -> LevelParams {
    let mut rng = rng::substream(seed, "semantics", 0);
    sample_semantics_with_rng(level, cfg, &mut rng)
}

/// Full pipeline for one level; rejected draws (unsolvable or adjacency-broken
/// after pruning) retry on fresh streams.
pub fn gen_level(cfg: &GenConfig, id: &str, seed: u64) -> Result<LevelParams, WfcError> {
    cfg.validate()?;
    let pattern = builtin_pattern(&cfg.pattern)?;
    for attempt in 0..cfg.max_restarts {
        let mut rng = rng::substream(seed, "level-attempt", attempt as u64);
        let draw: u64 = rng.gen();
        let layout = wfc_collapse(&pattern, cfg.width, cfg.height, cfg.max_restarts, draw)?;
        let pruned = prune_to_component(&layout);
        let placed = match place_goal_start_with_rng(&pruned, id, &mut rng) {
            Ok(level) => level,
            Err(WfcError::DegenerateLayout { .. }) => continue,
            Err(e) => return Err(e),
        };
        let level = sample_semantics_with_rng(&placed, cfg, &mut rng);
        if solvable(&level) && adjacency_sound(&pattern, &level) {
            return Ok(level);
        }
    }
    Err(WfcError::ContradictionExhausted { attempts: cfg.max_restarts })
}

/// Generates `count` solvable levels, cycling through `cfgs` so each family
/// contributes evenly. Deterministic in `seed`.
pub fn generate_set(
    cfgs: &[GenConfig],
    count: usize,
    seed: u64,
    id_prefix: &str,
) -> Result<Vec<LevelParams>, WfcError> {
    assert!(!cfgs.is_empty() && count >= 1);
    (0..count)
        .map(|i| {
            let cfg = &cfgs[i % cfgs.len()];
            let level_seed = rng::substream(seed, "set-level", i as u64).gen();
            gen_level(cfg, &format!("{id_prefix}-{i:04}"), level_seed)
        })
        .collect()
}

/// Pooled per-cell Pearson correlations of (moss indicator, distance) and
/// (lava indicator, distance) across levels.
pub fn moss_lava_distance_correlation(levels: &[LevelParams]) -> (f64, f64) {
    let mut moss = Vec::new();
    let mut lava = Vec::new();
    let mut dist = Vec::new();
    for level in levels {
        let field = DistanceField::from_goal(level);
        for ((r, c), tile) in level.cells() {
            let Some(d) = field.at(r, c) else { continue };
            moss.push((tile == TileType::Moss) as u8 as f64);
            lava.push((tile == TileType::Lava) as u8 as f64);
            dist.push(d as f64);
        }
    }
    (pearson(&moss, &dist), pearson(&lava, &dist))
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    cov / (vx.sqrt() * vy.sqrt()).max(f64::MIN_POSITIVE)
}
