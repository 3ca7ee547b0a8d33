//! Level serialization: a plain text format for grids and a JSON-lines
//! container carrying ids and provenance. Both round-trip bit-exactly.

use serde::{Deserialize, Serialize};

use super::{GridError, LevelParams, TileType};

/// A parsed grid block before level validation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawGrid {
    pub width: usize,
    pub height: usize,
    pub tiles: Vec<TileType>,
}

fn render_grid(width: usize, height: usize, tiles: &[TileType], out: &mut String) {
    out.push_str(&format!("{width} {height}\n"));
    for row in 0..height {
        for col in 0..width {
            out.push((b'0' + tiles[row * width + col].code()) as char);
        }
        out.push('\n');
    }
}

/// Renders levels as blank-line-separated blocks of `width height` + digit
/// rows. Ids are not part of the text format.
pub fn render_level_set(levels: &[LevelParams]) -> String {
    let mut out = String::new();
    for (i, level) in levels.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        render_grid(level.width, level.height, &level.grid, &mut out);
    }
    out
}

pub(crate) fn parse_blocks(text: &str) -> Result<Vec<RawGrid>, GridError> {
    let mut blocks = Vec::new();
    let mut lines = text.lines().enumerate().peekable();
    while let Some(&(lineno, line)) = lines.peek() {
        if line.trim().is_empty() {
            lines.next();
            continue;
        }
        let mut parts = line.split_whitespace();
        let parse_dim = |s: Option<&str>| {
            s.and_then(|v| v.parse::<usize>().ok()).ok_or_else(|| {
                GridError::MalformedText {
                    line: lineno + 1,
                    reason: format!("expected `width height` header, got `{line}`"),
                }
            })
        };
        let width = parse_dim(parts.next())?;
        let height = parse_dim(parts.next())?;
        if parts.next().is_some() || width == 0 || height == 0 {
            return Err(GridError::MalformedText {
                line: lineno + 1,
                reason: format!("bad header `{line}`"),
            });
        }
        lines.next();
        let mut tiles = Vec::with_capacity(width * height);
        for _ in 0..height {
            let (lineno, row) = lines.next().ok_or(GridError::MalformedText {
                line: lineno + 1,
                reason: "grid truncated".into(),
            })?;
            if row.len() != width {
                return Err(GridError::MalformedText {
                    line: lineno + 1,
                    reason: format!("row has {} cells, expected {width}", row.len()),
                });
            }
            for b in row.bytes() {
                let tile = b
                    .checked_sub(b'0')
                    .and_then(TileType::from_code)
                    .filter(|&t| t != TileType::OutOfBounds)
                    .ok_or(GridError::MalformedText {
                        line: lineno + 1,
                        reason: format!("invalid tile digit `{}`", b as char),
                    })?;
                tiles.push(tile);
            }
        }
        blocks.push(RawGrid { width, height, tiles });
    }
    Ok(blocks)
}

/// Parses a level set; levels are named `{prefix}-{index}` and validated.
pub fn parse_level_set(text: &str, id_prefix: &str) -> Result<Vec<LevelParams>, GridError> {
    let mut levels = Vec::new();
    for (i, raw) in parse_blocks(text)?.into_iter().enumerate() {
        let level = LevelParams::new(format!("{id_prefix}-{i:04}"), raw.width, raw.height, raw.tiles);
        level.validate()?;
        levels.push(level);
    }
    Ok(levels)
}

/// Parses a single binary exemplar grid over {Empty, Wall}.
pub fn parse_pattern(text: &str) -> Result<RawGrid, GridError> {
    let blocks = parse_blocks(text)?;
    let raw = blocks.into_iter().next().ok_or(GridError::MalformedText {
        line: 1,
        reason: "empty pattern document".into(),
    })?;
    if let Some(bad) = raw
        .tiles
        .iter()
        .find(|t| !matches!(t, TileType::Empty | TileType::Wall))
    {
        return Err(GridError::MalformedText {
            line: 1,
            reason: format!("pattern holds non-binary tile {bad:?}"),
        });
    }
    Ok(raw)
}

/// One level as a structured record: id, digit rows, provenance tags.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub rows: Vec<String>,
    pub provenance: Vec<String>,
}

impl LevelRecord {
    pub fn from_level(level: &LevelParams, provenance: Vec<String>) -> LevelRecord {
        let rows = (0..level.height)
            .map(|r| {
                (0..level.width)
                    .map(|c| (b'0' + level.grid[r * level.width + c].code()) as char)
                    .collect()
            })
            .collect();
        LevelRecord {
            id: level.id.clone(),
            width: level.width,
            height: level.height,
            rows,
            provenance,
        }
    }

    pub fn to_level(&self) -> Result<LevelParams, GridError> {
        let malformed = |reason: String| GridError::MalformedText { line: 0, reason };
        if self.rows.len() != self.height {
            return Err(malformed(format!(
                "record `{}` has {} rows, expected {}",
                self.id,
                self.rows.len(),
                self.height
            )));
        }
        let mut grid = Vec::with_capacity(self.width * self.height);
        for row in &self.rows {
            if row.len() != self.width {
                return Err(malformed(format!("record `{}` row width mismatch", self.id)));
            }
            for b in row.bytes() {
                grid.push(
                    b.checked_sub(b'0')
                        .and_then(TileType::from_code)
                        .ok_or_else(|| malformed(format!("record `{}` bad digit", self.id)))?,
                );
            }
        }
        let level = LevelParams::new(self.id.clone(), self.width, self.height, grid);
        level.validate()?;
        Ok(level)
    }
}

/// Serializes records as JSON lines in input order.
pub fn write_records(records: &[LevelRecord]) -> String {
    let mut out = String::new();
    for rec in records {
        out.push_str(&serde_json::to_string(rec).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn read_records(text: &str) -> Result<Vec<LevelRecord>, GridError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| GridError::MalformedText {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}
