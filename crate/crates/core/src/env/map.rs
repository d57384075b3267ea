use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Canonical 16×16 layout with four interior obstacle clusters.
pub const WOLFPACK16: &str = include_str!("../../maps/wolfpack16.map");

/// Small 8×8 layout used for desk-scale training runs.
pub const DESK8: &str = include_str!("../../maps/desk8.map");

/// Grid cell coordinate: `x` is the column (left to right), `y` the row (top to bottom).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub const fn new(x: i32, y: i32) -> Self {
        Pos { x, y }
    }

    pub fn manhattan(self, other: Pos) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Static obstacle layout of the gridworld.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: usize,
    height: usize,
    obstacles: Vec<bool>,
}

impl GridMap {
    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::with_obstacles(width, height, std::iter::empty())
    }

    pub fn with_obstacles(
        width: usize,
        height: usize,
        obstacles: impl IntoIterator<Item = Pos>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::config("map must have at least one row and column"));
        }
        let mut map = GridMap {
            width,
            height,
            obstacles: vec![false; width * height],
        };
        for p in obstacles {
            if !map.in_bounds(p) {
                return Err(Error::config(format!("obstacle {p} outside {width}x{height} map")));
            }
            let i = map.index(p);
            map.obstacles[i] = true;
        }
        Ok(map)
    }

    pub fn canonical() -> Self {
        WOLFPACK16.parse().expect("bundled wolfpack16.map is valid")
    }

    pub fn desk() -> Self {
        DESK8.parse().expect("bundled desk8.map is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
            .map_err(|e: Error| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn in_bounds(&self, p: Pos) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as usize) < self.width && (p.y as usize) < self.height
    }

    /// Row-major cell index; `p` must be in bounds.
    pub fn index(&self, p: Pos) -> usize {
        p.y as usize * self.width + p.x as usize
    }

    pub fn is_obstacle(&self, p: Pos) -> bool {
        self.obstacles[self.index(p)]
    }

    /// In bounds and not an obstacle.
    pub fn is_free(&self, p: Pos) -> bool {
        self.in_bounds(p) && !self.is_obstacle(p)
    }

    pub fn obstacles(&self) -> impl Iterator<Item = Pos> + '_ {
        self.cells().filter(|&p| self.is_obstacle(p))
    }

    /// Free cells in row-major order.
    pub fn free_cells(&self) -> Vec<Pos> {
        self.cells().filter(|&p| !self.is_obstacle(p)).collect()
    }

    fn cells(&self) -> impl Iterator<Item = Pos> + '_ {
        (0..self.height as i32).flat_map(move |y| (0..self.width as i32).map(move |x| Pos::new(x, y)))
    }

    /// ASCII rows, '#' for obstacles and '.' for free cells.
    pub fn to_rows(&self) -> Vec<String> {
        (0..self.height as i32)
            .map(|y| {
                (0..self.width as i32)
                    .map(|x| if self.is_obstacle(Pos::new(x, y)) { '#' } else { '.' })
                    .collect()
            })
            .collect()
    }

    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self> {
        let height = rows.len();
        if height == 0 {
            return Err(Error::config("map has no rows"));
        }
        let width = rows[0].as_ref().chars().count();
        let mut obstacles = Vec::new();
        for (y, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.chars().count() != width {
                return Err(Error::config(format!(
                    "map row {y} has length {} but row 0 has length {width}",
                    row.chars().count()
                )));
            }
            for (x, c) in row.chars().enumerate() {
                match c {
                    '.' => {}
                    '#' => obstacles.push(Pos::new(x as i32, y as i32)),
                    other => {
                        return Err(Error::config(format!(
                            "unexpected character {other:?} at row {y}, column {x}"
                        )))
                    }
                }
            }
        }
        Self::with_obstacles(width, height, obstacles)
    }
}

impl FromStr for GridMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let rows: Vec<&str> = s
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .collect();
        Self::from_rows(&rows)
    }
}

impl fmt::Display for GridMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.to_rows() {
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_maps_parse() {
        let m = GridMap::canonical();
        assert_eq!((m.width(), m.height()), (16, 16));
        assert!(m.obstacles().count() > 0);
        let d = GridMap::desk();
        assert_eq!((d.width(), d.height()), (8, 8));
    }

    #[test]
    fn display_round_trips() {
        let m = GridMap::canonical();
        let again: GridMap = m.to_string().parse().unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let err = "...\n..\n".parse::<GridMap>().unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn unknown_characters_are_rejected() {
        assert!("..x\n...\n".parse::<GridMap>().is_err());
    }
}
