//! 5×5 quadrant building blocks and the plain-text layout file format.
//!
//! A layout file holds one block per quadrant. Each block is five rows of
//! five cell markers (`.` open, `R` reward cell) followed by any number of
//! `WALL r1 c1 r2 c2` lines, one per blocked edge. Blank lines and lines
//! starting with `#` are ignored.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const QUADRANT_SIZE: usize = 5;

/// A cell inside a single quadrant, `(row, col)` with row 0 at the top.
pub type LocalCell = (usize, usize);

/// An unordered pair of orthogonally adjacent cells, stored with the smaller
/// cell first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge(LocalCell, LocalCell);

impl Edge {
    pub fn new(a: LocalCell, b: LocalCell) -> Result<Self> {
        let dr = a.0.abs_diff(b.0);
        let dc = a.1.abs_diff(b.1);
        if dr + dc != 1 {
            return Err(Error::InvalidLayout(format!(
                "cells {a:?} and {b:?} are not orthogonally adjacent"
            )));
        }
        if [a, b].iter().any(|c| !in_quadrant(*c)) {
            return Err(Error::InvalidLayout(format!(
                "edge {a:?}-{b:?} leaves the {QUADRANT_SIZE}x{QUADRANT_SIZE} quadrant"
            )));
        }
        Ok(if a <= b { Edge(a, b) } else { Edge(b, a) })
    }

    pub fn cells(&self) -> (LocalCell, LocalCell) {
        (self.0, self.1)
    }
}

fn in_quadrant(c: LocalCell) -> bool {
    c.0 < QUADRANT_SIZE && c.1 < QUADRANT_SIZE
}

/// Clockwise quarter turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Rotation {
    #[default]
    R0,
    R90,
    R180,
    R270,
}

impl Rotation {
    pub const ALL: [Rotation; 4] = [Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270];

    pub fn quarter_turns(self) -> usize {
        self as usize
    }

    pub fn from_quarter_turns(n: usize) -> Self {
        Self::ALL[n % 4]
    }

    pub fn degrees(self) -> u32 {
        90 * self as u32
    }

    pub fn from_degrees(deg: u32) -> Option<Self> {
        (deg % 90 == 0 && deg < 360).then(|| Self::from_quarter_turns((deg / 90) as usize))
    }

    /// Composition: rotating by `self` then by `other`.
    pub fn then(self, other: Rotation) -> Rotation {
        Self::from_quarter_turns(self.quarter_turns() + other.quarter_turns())
    }

    /// Image of a local cell under this rotation.
    pub fn apply(self, cell: LocalCell) -> LocalCell {
        let n = QUADRANT_SIZE - 1;
        (0..self.quarter_turns()).fold(cell, |(r, c), _| (c, n - r))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuadrantLayout {
    walls: BTreeSet<Edge>,
    reward_cell: LocalCell,
}

impl QuadrantLayout {
    /// Builds a layout and checks its invariants: the reward cell is in
    /// bounds and has an open edge, and every cell that is not fully walled
    /// in can reach it.
    pub fn new(walls: impl IntoIterator<Item = Edge>, reward_cell: LocalCell) -> Result<Self> {
        let layout = QuadrantLayout {
            walls: walls.into_iter().collect(),
            reward_cell,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn walls(&self) -> &BTreeSet<Edge> {
        &self.walls
    }

    pub fn reward_cell(&self) -> LocalCell {
        self.reward_cell
    }

    pub fn is_blocked(&self, a: LocalCell, b: LocalCell) -> bool {
        Edge::new(a, b).is_ok_and(|e| self.walls.contains(&e))
    }

    fn open_neighbors(&self, c: LocalCell) -> impl Iterator<Item = LocalCell> + '_ {
        let (r, col) = (c.0 as isize, c.1 as isize);
        [(r - 1, col), (r + 1, col), (r, col - 1), (r, col + 1)]
            .into_iter()
            .filter(|&(nr, nc)| {
                nr >= 0 && nc >= 0 && (nr as usize) < QUADRANT_SIZE && (nc as usize) < QUADRANT_SIZE
            })
            .map(|(nr, nc)| (nr as usize, nc as usize))
            .filter(move |&n| !self.is_blocked(c, n))
    }

    fn validate(&self) -> Result<()> {
        if !in_quadrant(self.reward_cell) {
            return Err(Error::InvalidLayout(format!(
                "reward cell {:?} is out of bounds",
                self.reward_cell
            )));
        }
        if self.open_neighbors(self.reward_cell).next().is_none() {
            return Err(Error::InvalidLayout(format!(
                "reward cell {:?} is fully enclosed",
                self.reward_cell
            )));
        }
        let mut seen = [[false; QUADRANT_SIZE]; QUADRANT_SIZE];
        let mut queue = VecDeque::from([self.reward_cell]);
        seen[self.reward_cell.0][self.reward_cell.1] = true;
        while let Some(c) = queue.pop_front() {
            for n in self.open_neighbors(c) {
                if !seen[n.0][n.1] {
                    seen[n.0][n.1] = true;
                    queue.push_back(n);
                }
            }
        }
        for r in 0..QUADRANT_SIZE {
            for c in 0..QUADRANT_SIZE {
                let enclosed = self.open_neighbors((r, c)).next().is_none();
                if !seen[r][c] && !enclosed {
                    return Err(Error::InvalidLayout(format!(
                        "cell ({r},{c}) cannot reach the reward cell"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Rigid clockwise rotation of walls and reward cell.
    pub fn rotate(&self, rotation: Rotation) -> QuadrantLayout {
        let walls = self
            .walls
            .iter()
            .map(|e| {
                let (a, b) = e.cells();
                Edge::new(rotation.apply(a), rotation.apply(b))
                    .expect("rotation maps adjacent in-bounds cells to adjacent in-bounds cells")
            })
            .collect();
        QuadrantLayout {
            walls,
            reward_cell: rotation.apply(self.reward_cell),
        }
    }

    /// Renders the block in layout-file syntax.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in 0..QUADRANT_SIZE {
            for c in 0..QUADRANT_SIZE {
                out.push(if (r, c) == self.reward_cell { 'R' } else { '.' });
            }
            out.push('\n');
        }
        for e in &self.walls {
            let ((r1, c1), (r2, c2)) = e.cells();
            let _ = writeln!(out, "WALL {r1} {c1} {r2} {c2}");
        }
        out
    }
}

/// Free-function form of [`QuadrantLayout::rotate`].
pub fn rotate_quadrant(layout: &QuadrantLayout, rotation: Rotation) -> QuadrantLayout {
    layout.rotate(rotation)
}

/// The four shipped quadrants.
pub const DEFAULT_LAYOUTS: &str = include_str!("../../data/default_layouts.txt");

pub fn default_layouts() -> [QuadrantLayout; 4] {
    parse_layouts(DEFAULT_LAYOUTS, "<default layouts>").expect("shipped layouts are valid")
}

pub fn load_layouts(path: &Path) -> Result<[QuadrantLayout; 4]> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::input(path, format!("cannot read layout file: {e}")))?;
    parse_layouts(&text, &path.display().to_string())
}

struct Block {
    first_line: usize,
    rows: Vec<(usize, String)>,
    walls: Vec<(usize, [usize; 4])>,
}

/// Parses exactly four quadrant blocks.
pub fn parse_layouts(text: &str, origin: &str) -> Result<[QuadrantLayout; 4]> {
    let err = |line: usize, message: String| Error::LayoutSyntax {
        path: origin.to_string(),
        line,
        message,
    };

    let mut blocks: Vec<Block> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("WALL") {
            let block = blocks
                .last_mut()
                .filter(|b| b.rows.len() == QUADRANT_SIZE)
                .ok_or_else(|| err(line_no, "WALL line before a complete 5-row grid".into()))?;
            let nums: Vec<usize> = rest
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(line_no, format!("bad WALL coordinate: {e}")))?;
            let coords: [usize; 4] = nums.try_into().map_err(|v: Vec<usize>| {
                err(line_no, format!("WALL needs 4 coordinates, got {}", v.len()))
            })?;
            block.walls.push((line_no, coords));
            continue;
        }
        if line.len() != QUADRANT_SIZE || !line.chars().all(|ch| ch == '.' || ch == 'R') {
            return Err(err(
                line_no,
                format!("expected a row of {QUADRANT_SIZE} markers from '.'/'R' or a WALL line, got `{line}`"),
            ));
        }
        let start_new = blocks
            .last()
            .is_none_or(|b| b.rows.len() == QUADRANT_SIZE);
        if start_new {
            blocks.push(Block {
                first_line: line_no,
                rows: Vec::new(),
                walls: Vec::new(),
            });
        }
        blocks
            .last_mut()
            .expect("block pushed above")
            .rows
            .push((line_no, line.to_string()));
    }

    if blocks.len() != 4 {
        let line = text.lines().count().max(1);
        return Err(err(line, format!("expected 4 quadrant blocks, found {}", blocks.len())));
    }

    let mut layouts = Vec::with_capacity(4);
    for block in blocks {
        if block.rows.len() != QUADRANT_SIZE {
            return Err(err(
                block.rows.last().map_or(block.first_line, |r| r.0),
                format!("quadrant has {} rows, expected {QUADRANT_SIZE}", block.rows.len()),
            ));
        }
        let rewards: Vec<(usize, LocalCell)> = block
            .rows
            .iter()
            .enumerate()
            .flat_map(|(r, (ln, row))| {
                row.chars()
                    .enumerate()
                    .filter(|(_, ch)| *ch == 'R')
                    .map(move |(c, _)| (*ln, (r, c)))
            })
            .collect();
        let reward_cell = match rewards.as_slice() {
            [(_, cell)] => *cell,
            _ => {
                return Err(err(
                    block.first_line,
                    format!("quadrant must mark exactly one reward cell, found {}", rewards.len()),
                ))
            }
        };
        let mut walls = Vec::with_capacity(block.walls.len());
        for (ln, [r1, c1, r2, c2]) in &block.walls {
            let edge = Edge::new((*r1, *c1), (*r2, *c2)).map_err(|e| err(*ln, e.to_string()))?;
            walls.push(edge);
        }
        let layout =
            QuadrantLayout::new(walls, reward_cell).map_err(|e| err(block.first_line, e.to_string()))?;
        layouts.push(layout);
    }
    Ok(layouts.try_into().expect("exactly four layouts"))
}
