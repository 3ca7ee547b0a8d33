//! Geodesic distance-to-goal fields over levels.

use std::collections::VecDeque;

use super::{LevelParams, TileType};

pub(crate) const NEIGHBOURS: [(i64, i64); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

/// BFS distances from `src` over navigable cells, 4-connectivity.
/// `None` marks non-navigable or unreachable cells.
pub(crate) fn bfs_navigable(level: &LevelParams, src: (usize, usize)) -> Vec<Option<u32>> {
    let mut dist = vec![None; level.width * level.height];
    if !level.tile(src.0 as i64, src.1 as i64).navigable() {
        return dist;
    }
    dist[src.0 * level.width + src.1] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some((r, c)) = queue.pop_front() {
        let d = dist[r * level.width + c].unwrap();
        for (dr, dc) in NEIGHBOURS {
            let (nr, nc) = (r as i64 + dr, c as i64 + dc);
            if !level.tile(nr, nc).navigable() {
                continue;
            }
            let idx = nr as usize * level.width + nc as usize;
            if dist[idx].is_none() {
                dist[idx] = Some(d + 1);
                queue.push_back((nr as usize, nc as usize));
            }
        }
    }
    dist
}

/// Per-cell distance to the Goal.
///
/// Navigable cells carry their geodesic BFS distance. A non-navigable cell
/// carries the distance of its nearest navigable cell (fewest hops through
/// any cells; ties broken toward the smaller geodesic distance) plus that hop
/// count. Navigable cells the goal cannot reach stay `None`.
#[derive(Clone, Debug)]
pub struct DistanceField {
    pub width: usize,
    pub height: usize,
    pub dist: Vec<Option<u32>>,
}

impl DistanceField {
    pub fn from_goal(level: &LevelParams) -> DistanceField {
        let goal = level
            .find_unique(TileType::Goal)
            .expect("level carries exactly one Goal");
        let geo = bfs_navigable(level, goal);
        let n = level.width * level.height;

        // Multi-source BFS outward from reachable navigable cells. Each front
        // cell stores the smallest geodesic distance among nearest sources;
        // taking the min over predecessors preserves that through each ring.
        let mut best_geo = vec![None; n];
        let mut hops = vec![0u32; n];
        let mut queue = VecDeque::new();
        for i in 0..n {
            if let Some(g) = geo[i] {
                best_geo[i] = Some(g);
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / level.width, i % level.width);
            for (dr, dc) in NEIGHBOURS {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if nr < 0 || nc < 0 || nr >= level.height as i64 || nc >= level.width as i64 {
                    continue;
                }
                let j = nr as usize * level.width + nc as usize;
                match best_geo[j] {
                    None => {
                        best_geo[j] = best_geo[i];
                        hops[j] = hops[i] + 1;
                        queue.push_back(j);
                    }
                    Some(g) if hops[j] == hops[i] + 1 => {
                        // Same ring, reached from another predecessor.
                        if best_geo[i].unwrap() < g {
                            best_geo[j] = best_geo[i];
                        }
                    }
                    _ => {}
                }
            }
        }

        let dist = (0..n)
            .map(|i| {
                if level.grid[i].navigable() {
                    geo[i]
                } else {
                    best_geo[i].map(|g| g + hops[i])
                }
            })
            .collect();
        DistanceField { width: level.width, height: level.height, dist }
    }

    pub fn at(&self, row: usize, col: usize) -> Option<u32> {
        self.dist[row * self.width + col]
    }

    /// Largest distance over navigable-reachable cells.
    pub fn max_navigable(&self, level: &LevelParams) -> u32 {
        level
            .cells()
            .filter(|&(_, t)| t.navigable())
            .filter_map(|((r, c), _)| self.at(r, c))
            .max()
            .unwrap_or(0)
    }
}
