use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::Scene;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("map is empty")]
    Empty,
    #[error("row {0} has a different width")]
    Ragged(usize),
    #[error("unexpected character {0:?} in map")]
    BadChar(char),
}

/// Occupancy grid with the obstacles grown by a disc of the robot radius.
///
/// Cell `(i, j)` covers `[origin + i·res, origin + (i+1)·res)` in `x` and the
/// same in `y`. Everything outside the grid counts as an obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    pub resolution: f64,
    pub origin: [f64; 2],
    pub width: usize,
    pub height: usize,
    /// Raw obstacle cells, row-major from the bottom row.
    pub occupied: Vec<bool>,
    /// Obstacle cells after inflation.
    pub inflated: Vec<bool>,
    pub inflation: f64,
}

impl GridMap {
    /// Builds the map from a raw occupancy bitmap and inflates it.
    pub fn new(resolution: f64, origin: [f64; 2], width: usize, height: usize, occupied: Vec<bool>, inflation: f64) -> Self {
        let mut map = Self { resolution, origin, width, height, occupied, inflated: Vec::new(), inflation };
        map.inflate();
        map
    }

    /// Rasterises the furniture of a scene; the room walls are the map border.
    pub fn from_scene(scene: &Scene, resolution: f64, inflation: f64) -> Self {
        let size = 2.0 * scene.half_size;
        let n = (size / resolution).round() as usize;
        let origin = [-scene.half_size, -scene.half_size];
        let mut occupied = vec![false; n * n];
        for j in 0..n {
            for i in 0..n {
                let c = nalgebra::Vector2::new(origin[0] + (i as f64 + 0.5) * resolution, origin[1] + (j as f64 + 0.5) * resolution);
                occupied[j * n + i] = scene.furniture.iter().any(|f| f.contains(&c));
            }
        }
        Self::new(resolution, origin, n, n, occupied, inflation)
    }

    /// Parses an ASCII grid: `#` is an obstacle, `.` free. The first line is the
    /// top row; the bottom-left corner sits at the origin.
    pub fn from_ascii(text: &str, resolution: f64, inflation: f64) -> Result<Self, MapError> {
        let rows: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let width = rows.first().ok_or(MapError::Empty)?.chars().count();
        let height = rows.len();
        let mut occupied = vec![false; width * height];
        for (r, line) in rows.iter().enumerate() {
            if line.chars().count() != width {
                return Err(MapError::Ragged(r));
            }
            let j = height - 1 - r;
            for (i, ch) in line.chars().enumerate() {
                occupied[j * width + i] = match ch {
                    '#' => true,
                    '.' => false,
                    other => return Err(MapError::BadChar(other)),
                };
            }
        }
        Ok(Self::new(resolution, [0.0, 0.0], width, height, occupied, inflation))
    }

    fn inflate(&mut self) {
        let r = self.inflation;
        let res = self.resolution;
        let reach = (r / res + 1e-9).floor() as isize;
        let mut disc = Vec::new();
        for dj in -reach..=reach {
            for di in -reach..=reach {
                if ((di * di + dj * dj) as f64).sqrt() * res <= r + 1e-9 {
                    disc.push((di, dj));
                }
            }
        }
        let (w, h) = (self.width as isize, self.height as isize);
        let mut out = self.occupied.clone();
        for j in 0..h {
            for i in 0..w {
                if !self.occupied[(j * w + i) as usize] {
                    continue;
                }
                for (di, dj) in &disc {
                    let (x, y) = (i + di, j + dj);
                    if x >= 0 && y >= 0 && x < w && y < h {
                        out[(y * w + x) as usize] = true;
                    }
                }
            }
        }
        // the virtual obstacle cells just outside the border
        for j in 0..h {
            for i in 0..w {
                let border = (i + 1).min(w - i).min(j + 1).min(h - j);
                if border as f64 * res <= r + 1e-9 {
                    out[(j * w + i) as usize] = true;
                }
            }
        }
        self.inflated = out;
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let i = ((x - self.origin[0]) / self.resolution).floor();
        let j = ((y - self.origin[1]) / self.resolution).floor();
        (i >= 0.0 && j >= 0.0 && (i as usize) < self.width && (j as usize) < self.height).then(|| (i as usize, j as usize))
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin[0] + (i as f64 + 0.5) * self.resolution,
            self.origin[1] + (j as f64 + 0.5) * self.resolution,
        )
    }

    pub fn cell_free(&self, i: usize, j: usize) -> bool {
        !self.inflated[j * self.width + i]
    }

    /// Whether the robot centre may stand at `(x, y)`.
    pub fn is_free(&self, x: f64, y: f64) -> bool {
        self.cell_of(x, y).is_some_and(|(i, j)| self.cell_free(i, j))
    }

    /// Whether every cell meeting the box spanned by two nearby points (grown by
    /// 0.1 mm) is free. Used on consecutive collision samples, so the motion
    /// between them is covered as well as the samples themselves.
    pub fn span_free(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        let pad = 1e-4;
        let (Some(lo), Some(hi)) = (
            self.cell_of(a.0.min(b.0) - pad, a.1.min(b.1) - pad),
            self.cell_of(a.0.max(b.0) + pad, a.1.max(b.1) + pad),
        ) else {
            return false;
        };
        (lo.1..=hi.1).all(|j| (lo.0..=hi.0).all(|i| self.cell_free(i, j)))
    }

    pub fn remove_obstacle(&mut self, i: usize, j: usize) {
        self.occupied[j * self.width + i] = false;
        self.inflate();
    }

    /// 4-connected breadth-first search over free inflated cells. Returns the
    /// cell sequence from `from` to `to`, both inclusive.
    pub fn bfs(&self, from: (usize, usize), to: (usize, usize)) -> Option<Vec<(usize, usize)>> {
        if !self.cell_free(from.0, from.1) || !self.cell_free(to.0, to.1) {
            return None;
        }
        let w = self.width;
        let mut parent = vec![usize::MAX; w * self.height];
        let start = from.1 * w + from.0;
        parent[start] = start;
        let mut queue = VecDeque::from([from]);
        while let Some((i, j)) = queue.pop_front() {
            if (i, j) == to {
                let mut out = vec![to];
                let mut k = j * w + i;
                while k != start {
                    k = parent[k];
                    out.push((k % w, k / w));
                }
                out.reverse();
                return Some(out);
            }
            let neighbours = [
                (i.wrapping_add(1), j),
                (i.wrapping_sub(1), j),
                (i, j.wrapping_add(1)),
                (i, j.wrapping_sub(1)),
            ];
            for (a, b) in neighbours {
                if a < w && b < self.height && self.cell_free(a, b) && parent[b * w + a] == usize::MAX {
                    parent[b * w + a] = j * w + i;
                    queue.push_back((a, b));
                }
            }
        }
        None
    }

    /// Renders the inflated map as ASCII, `#` for blocked cells.
    pub fn to_ascii(&self) -> String {
        let mut s = String::new();
        for j in (0..self.height).rev() {
            for i in 0..self.width {
                s.push(if self.cell_free(i, j) { '.' } else { '#' });
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inflation_is_a_disc() {
        let n = 41;
        let mut occ = vec![false; n * n];
        occ[20 * n + 20] = true;
        let map = GridMap::new(0.05, [0.0, 0.0], n, n, occ, 0.35);
        for j in 0..n {
            for i in 0..n {
                let d = (((i as f64 - 20.0).powi(2) + (j as f64 - 20.0).powi(2)).sqrt()) * 0.05;
                let border = (i + 1).min(n - i).min(j + 1).min(n - j) as f64 * 0.05;
                let expect = d <= 0.35 + 1e-9 || border <= 0.35 + 1e-9;
                assert_eq!(!map.cell_free(i, j), expect, "{i} {j}");
            }
        }
    }

    #[test]
    fn ascii_round_trip() {
        let text = "....\n.#..\n....\n";
        let map = GridMap::from_ascii(text, 1.0, 0.0).unwrap();
        assert!(!map.is_free(1.5, 1.5));
        assert!(map.is_free(0.5, 0.5));
        assert!(!map.is_free(-0.5, 0.5));
        assert_eq!(map.to_ascii(), text);
        assert_eq!(GridMap::from_ascii("..\n.", 1.0, 0.0), Err(MapError::Ragged(1)));
    }

    #[test]
    fn bfs_path_is_connected() {
        let text = "......\n.####.\n......\n";
        let map = GridMap::from_ascii(text, 1.0, 0.0).unwrap();
        let path = map.bfs((0, 1), (5, 1)).unwrap();
        assert_eq!(path.len(), 8);
        for w in path.windows(2) {
            let d = (w[0].0 as i64 - w[1].0 as i64).abs() + (w[0].1 as i64 - w[1].1 as i64).abs();
            assert_eq!(d, 1);
        }
        assert!(map.bfs((0, 1), (2, 1)).is_none());
    }
}
