//! Grid layouts: seeded obstacle placement with a guaranteed start-to-goal
//! path, and the plain-text map format.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    pub fn step(self, dir: Direction) -> Cell {
        let (dx, dy) = dir.delta();
        Cell {
            x: self.x + dx,
            y: self.y + dy,
        }
    }
}

/// A navigation layout. Obstacles cover ~20% of the cells and never sit on
/// the start or goal; construction resamples until a path exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub obstacles: BTreeSet<Cell>,
    pub start: Cell,
    pub goal: Cell,
    pub seed: u64,
}

impl GridSpec {
    /// Seeded layout: start top-left, goal bottom-right,
    /// round(0.2 * cells) obstacles, solvable by construction.
    pub fn generate(width: usize, height: usize, seed: u64) -> Result<Self> {
        if width < 3 || height < 3 {
            return Err(Error::GridConstruction(format!(
                "grid must be at least 3x3, got {width}x{height}"
            )));
        }
        let start = Cell::new(0, 0);
        let goal = Cell::new(width as i32 - 1, height as i32 - 1);
        let n_obstacles = (0.20 * (width * height) as f64).round() as usize;

        let mut candidates: Vec<Cell> = (0..height as i32)
            .flat_map(|y| (0..width as i32).map(move |x| Cell::new(x, y)))
            .filter(|c| *c != start && *c != goal)
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for attempt in 0..10_000 {
            candidates.shuffle(&mut rng);
            let obstacles: BTreeSet<Cell> = candidates.iter().take(n_obstacles).copied().collect();
            let spec = GridSpec {
                width,
                height,
                obstacles,
                start,
                goal,
                seed,
            };
            if spec.path_exists(start, goal) {
                return Ok(spec);
            }
            let _ = attempt;
        }
        Err(Error::GridConstruction(format!(
            "no solvable {width}x{height} layout after 10000 resamples (seed {seed})"
        )))
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    pub fn is_obstacle(&self, c: Cell) -> bool {
        self.obstacles.contains(&c)
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.is_obstacle(c)
    }

    /// Breadth-first search over free cells.
    pub fn path_exists(&self, from: Cell, to: Cell) -> bool {
        self.bfs_distances(from).contains(&to)
    }

    /// All free cells reachable from `from`, including itself.
    pub fn bfs_distances(&self, from: Cell) -> BTreeSet<Cell> {
        let mut seen = BTreeSet::new();
        if !self.is_free(from) {
            return seen;
        }
        let mut queue = VecDeque::from([from]);
        seen.insert(from);
        while let Some(c) = queue.pop_front() {
            for dir in Direction::ALL {
                let n = c.step(dir);
                if self.is_free(n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    /// Free cells (no obstacle), in row-major order.
    pub fn free_cells(&self) -> Vec<Cell> {
        (0..self.height as i32)
            .flat_map(|y| (0..self.width as i32).map(move |x| Cell::new(x, y)))
            .filter(|c| self.is_free(*c))
            .collect()
    }

    /// Plain-text map: header lines, then one row per line.
    /// `.` free, `#` obstacle, `S` start, `G` goal.
    pub fn to_map_string(&self) -> String {
        let mut out = format!(
            "gridmap v1\nseed {}\nwidth {}\nheight {}\n",
            self.seed, self.width, self.height
        );
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                let c = Cell::new(x, y);
                out.push(if c == self.start {
                    'S'
                } else if c == self.goal {
                    'G'
                } else if self.is_obstacle(c) {
                    '#'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }

    pub fn from_map_string(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let bad = |msg: &str| Error::GridConstruction(format!("map parse: {msg}"));
        if lines.next() != Some("gridmap v1") {
            return Err(bad("missing 'gridmap v1' header"));
        }
        let mut header = |name: &str| -> Result<u64> {
            let line = lines.next().ok_or_else(|| bad("truncated header"))?;
            let value = line
                .strip_prefix(name)
                .and_then(|r| r.strip_prefix(' '))
                .ok_or_else(|| bad(&format!("expected '{name} <value>'")))?;
            value
                .parse()
                .map_err(|_| bad(&format!("bad value for {name}")))
        };
        let seed = header("seed")?;
        let width = header("width")? as usize;
        let height = header("height")? as usize;

        let mut obstacles = BTreeSet::new();
        let mut start = None;
        let mut goal = None;
        for y in 0..height as i32 {
            let row = lines.next().ok_or_else(|| bad("missing map row"))?;
            if row.chars().count() != width {
                return Err(bad(&format!("row {y} has wrong width")));
            }
            for (x, ch) in row.chars().enumerate() {
                let cell = Cell::new(x as i32, y);
                match ch {
                    '.' => {}
                    '#' => {
                        obstacles.insert(cell);
                    }
                    'S' => start = Some(cell),
                    'G' => goal = Some(cell),
                    other => return Err(bad(&format!("unknown map character {other:?}"))),
                }
            }
        }
        Ok(GridSpec {
            width,
            height,
            obstacles,
            start: start.ok_or_else(|| bad("no start cell"))?,
            goal: goal.ok_or_else(|| bad("no goal cell"))?,
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_by_four_has_three_obstacles() {
        // round(0.2 * 16) = 3
        let spec = GridSpec::generate(4, 4, 11).unwrap();
        assert_eq!(spec.obstacles.len(), 3);
        assert!(!spec.obstacles.contains(&spec.start));
        assert!(!spec.obstacles.contains(&spec.goal));
    }

    #[test]
    fn eight_by_eight_has_thirteen_obstacles_and_a_path() {
        let spec = GridSpec::generate(8, 8, 5).unwrap();
        assert_eq!(spec.obstacles.len(), 13);
        assert!(spec.path_exists(spec.start, spec.goal));
    }

    #[test]
    fn generation_is_deterministic() {
        for seed in 0..20 {
            let a = GridSpec::generate(8, 8, seed).unwrap();
            let b = GridSpec::generate(8, 8, seed).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn map_format_round_trips_exactly() {
        for seed in [0, 3, 17, 123456789] {
            let spec = GridSpec::generate(6, 5, seed).unwrap();
            let text = spec.to_map_string();
            let back = GridSpec::from_map_string(&text).unwrap();
            assert_eq!(spec, back);
            assert_eq!(text, back.to_map_string());
        }
    }

    #[test]
    fn malformed_maps_are_rejected() {
        assert!(GridSpec::from_map_string("nope").is_err());
        let spec = GridSpec::generate(4, 4, 2).unwrap();
        let text = spec.to_map_string().replace('S', "?");
        assert!(GridSpec::from_map_string(&text).is_err());
    }
}
