use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Grid coordinate `(x, y)`; `y` grows downward.
pub type Cell = (usize, usize);

/// Declarative key-door maze.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MazeLayout {
    pub width: usize,
    pub height: usize,
    walls: Vec<bool>,
    pub start: Cell,
    pub key: Cell,
    pub door: Cell,
    pub goal: Cell,
}

impl MazeLayout {
    /// Builds and validates a layout from wall cells and the four markers.
    pub fn new(
        width: usize,
        height: usize,
        wall_cells: impl IntoIterator<Item = Cell>,
        start: Cell,
        key: Cell,
        door: Cell,
        goal: Cell,
    ) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::Config(format!("maze must be at least 2x2, got {width}x{height}")));
        }
        let mut walls = vec![false; width * height];
        for (x, y) in wall_cells {
            if x >= width || y >= height {
                return Err(Error::Config(format!("wall ({x}, {y}) outside {width}x{height} grid")));
            }
            walls[y * width + x] = true;
        }
        let layout = MazeLayout { width, height, walls, start, key, door, goal };
        layout.validate()?;
        Ok(layout)
    }

    fn validate(&self) -> Result<()> {
        let marks = [("start", self.start), ("key", self.key), ("door", self.door), ("goal", self.goal)];
        for (name, c) in marks {
            if !self.in_bounds(c) {
                return Err(Error::Config(format!("{name} {c:?} outside the grid")));
            }
            if self.is_wall(c) {
                return Err(Error::Config(format!("{name} {c:?} is on a wall")));
            }
        }
        for i in 0..marks.len() {
            for j in i + 1..marks.len() {
                if marks[i].1 == marks[j].1 {
                    return Err(Error::Config(format!("{} and {} share cell {:?}", marks[i].0, marks[j].0, marks[i].1)));
                }
            }
        }
        if self.distances_from(self.start, false)[self.index(self.key)].is_none() {
            return Err(Error::Config("key unreachable from start".into()));
        }
        if self.distances_from(self.key, true)[self.index(self.door)].is_none() {
            return Err(Error::Config("door unreachable from key".into()));
        }
        if self.distances_from(self.door, true)[self.index(self.goal)].is_none() {
            return Err(Error::Config("goal unreachable from door".into()));
        }
        Ok(())
    }

    pub fn in_bounds(&self, (x, y): Cell) -> bool {
        x < self.width && y < self.height
    }

    pub fn index(&self, (x, y): Cell) -> usize {
        y * self.width + x
    }

    pub fn is_wall(&self, c: Cell) -> bool {
        self.walls[self.index(c)]
    }

    pub fn walls(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells().filter(|&c| self.is_wall(c))
    }

    /// All cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| (x, y)))
    }

    pub fn open_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells().filter(|&c| !self.is_wall(c))
    }

    /// Whether the agent may occupy `c`; the door only opens with the key.
    pub fn passable(&self, c: Cell, has_key: bool) -> bool {
        self.in_bounds(c) && !self.is_wall(c) && (has_key || c != self.door)
    }

    /// Cell reached by moving one step in direction `(dx, dy)`, if in bounds.
    pub fn neighbor(&self, (x, y): Cell, (dx, dy): (isize, isize)) -> Option<Cell> {
        let nx = x.checked_add_signed(dx)?;
        let ny = y.checked_add_signed(dy)?;
        self.in_bounds((nx, ny)).then_some((nx, ny))
    }

    /// Breadth-first step counts from `from`; the door is traversable iff
    /// `door_open`, except that it may always be the final cell reached.
    pub fn distances_from(&self, from: Cell, door_open: bool) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.width * self.height];
        dist[self.index(from)] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(c) = queue.pop_front() {
            if c == self.door && !door_open && c != from {
                continue;
            }
            let d = dist[self.index(c)].unwrap();
            for dir in super::DIRECTIONS {
                if let Some(n) = self.neighbor(c, dir) {
                    if !self.is_wall(n) && dist[self.index(n)].is_none() {
                        dist[self.index(n)] = Some(d + 1);
                        queue.push_back(n);
                    }
                }
            }
        }
        dist
    }

    /// Parses the `maze v1 <width> <height>` text grid.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Config("empty maze file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "maze" || fields[1] != "v1" {
            return Err(Error::Config(format!("bad maze header {header:?}")));
        }
        let dim = |s: &str| s.parse::<usize>().map_err(|_| Error::Config(format!("bad maze dimension {s:?}")));
        let (width, height) = (dim(fields[2])?, dim(fields[3])?);
        let rows: Vec<&str> = lines.map(|l| l.trim_end()).collect();
        if rows.len() != height {
            return Err(Error::Config(format!("maze declares {height} rows, found {}", rows.len())));
        }
        let mut walls = Vec::new();
        let (mut start, mut key, mut door, mut goal) = (None, None, None, None);
        for (y, row) in rows.iter().enumerate() {
            let chars: Vec<char> = row.chars().collect();
            if chars.len() != width {
                return Err(Error::Config(format!("row {y} has {} cells, expected {width}", chars.len())));
            }
            for (x, ch) in chars.into_iter().enumerate() {
                let slot = match ch {
                    '#' => {
                        walls.push((x, y));
                        continue;
                    }
                    '.' => continue,
                    'S' => &mut start,
                    'K' => &mut key,
                    'D' => &mut door,
                    'G' => &mut goal,
                    other => return Err(Error::Config(format!("unknown maze character {other:?} at ({x}, {y})"))),
                };
                if slot.replace((x, y)).is_some() {
                    return Err(Error::Config(format!("duplicate marker {ch:?} in maze")));
                }
            }
        }
        let need = |c: Option<Cell>, name: &str| c.ok_or_else(|| Error::Config(format!("maze has no {name}")));
        MazeLayout::new(width, height, walls, need(start, "start")?, need(key, "key")?, need(door, "door")?, need(goal, "goal")?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }
}

impl fmt::Display for MazeLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "maze v1 {} {}", self.width, self.height)?;
        for y in 0..self.height {
            for x in 0..self.width {
                let c = (x, y);
                let ch = if self.is_wall(c) {
                    '#'
                } else if c == self.start {
                    'S'
                } else if c == self.key {
                    'K'
                } else if c == self.door {
                    'D'
                } else if c == self.goal {
                    'G'
                } else {
                    '.'
                };
                write!(f, "{ch}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
