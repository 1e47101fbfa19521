//! The reconfigurable 10×10 foraging board.
//!
//! Four 5×5 quadrants are rotated and arranged into a board whose boundary
//! is implicitly walled. Walls are blocked edges between neighbouring cells,
//! so all 100 cells stay reachable. Each quadrant contributes one designated
//! reward cell; the four cells receive the values 0, 25, 50 and 75 in some
//! order.

mod layout;

use std::collections::VecDeque;
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

pub use layout::{
    default_layouts, load_layouts, parse_layouts, rotate_quadrant, Edge, LocalCell,
    QuadrantLayout, Rotation, DEFAULT_LAYOUTS, QUADRANT_SIZE,
};

use crate::error::{Error, Result};

pub const BOARD_SIZE: usize = 2 * QUADRANT_SIZE;
pub const N_STATES: usize = BOARD_SIZE * BOARD_SIZE;
pub const N_ACTIONS: usize = 4;

/// Base reward values handed out to the four designated cells.
pub const REWARD_VALUES: [i32; 4] = [0, 25, 50, 75];
/// Cost of every action that does not collect a positive reward.
pub const STEP_COST: i32 = -1;

/// The four central cells.
pub const CENTRAL_STARTS: [Cell; 4] = [
    Cell::new(4, 4),
    Cell::new(4, 5),
    Cell::new(5, 4),
    Cell::new(5, 5),
];

/// Top-left corner of each board position: 0 top-left, 1 top-right,
/// 2 bottom-left, 3 bottom-right.
const POSITION_OFFSETS: [(usize, usize); 4] = [(0, 0), (0, 5), (5, 0), (5, 5)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }

    pub fn index(self) -> usize {
        self.row * BOARD_SIZE + self.col
    }

    pub fn from_index(idx: usize) -> Self {
        Cell::new(idx / BOARD_SIZE, idx % BOARD_SIZE)
    }

    pub fn in_bounds(self) -> bool {
        self.row < BOARD_SIZE && self.col < BOARD_SIZE
    }

    /// The cell one step in `action`'s direction, or `None` off the board.
    pub fn offset(self, action: Action) -> Option<Cell> {
        let (dr, dc) = action.delta();
        let row = self.row.checked_add_signed(dr)?;
        let col = self.col.checked_add_signed(dc)?;
        let c = Cell::new(row, col);
        c.in_bounds().then_some(c)
    }

    /// Like [`Cell::offset`] but stays put at the board edge.
    pub fn clipped(self, action: Action) -> Cell {
        self.offset(action).unwrap_or(self)
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

pub fn manhattan_distance(a: Cell, b: Cell) -> usize {
    a.manhattan(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }
}

/// Result of observing the cell an action led to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub next_state: usize,
    pub reward: i32,
    pub terminal: bool,
}

/// Everything needed to rebuild a world from the layouts.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WorldDescriptor {
    /// Quadrant id (index into the layout list) placed at each board position.
    pub permutation: [usize; 4],
    /// Rotation of the quadrant at each board position.
    pub rotations: [Rotation; 4],
    /// Base value of the reward cell at each board position.
    pub reward_values: [i32; 4],
    pub start_states: [Cell; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    descriptor: WorldDescriptor,
    reward_cells: [Cell; 4],
    /// `open[s][a]`: the move `a` from `s` is neither off-board nor walled.
    open: Vec<[bool; N_ACTIONS]>,
}

fn check_reward_values(values: &[i32; 4]) -> Result<()> {
    let mut sorted = *values;
    sorted.sort_unstable();
    if sorted != REWARD_VALUES {
        return Err(Error::InvalidWorld(format!(
            "reward values {values:?} are not a permutation of {REWARD_VALUES:?}"
        )));
    }
    Ok(())
}

/// Assembles the board from four layouts.
pub fn assemble_world(
    layouts: &[QuadrantLayout; 4],
    permutation: [usize; 4],
    rotations: [Rotation; 4],
    reward_values: [i32; 4],
    start_states: [Cell; 4],
) -> Result<WorldConfig> {
    let mut seen = [false; 4];
    for &q in &permutation {
        if q >= 4 || std::mem::replace(&mut seen[q], true) {
            return Err(Error::InvalidWorld(format!(
                "permutation {permutation:?} is not a bijection on 0..4"
            )));
        }
    }
    check_reward_values(&reward_values)?;

    let placed: Vec<QuadrantLayout> = (0..4)
        .map(|p| layouts[permutation[p]].rotate(rotations[p]))
        .collect();
    let reward_cells: [Cell; 4] = std::array::from_fn(|p| {
        let (r, c) = placed[p].reward_cell();
        let (or, oc) = POSITION_OFFSETS[p];
        Cell::new(or + r, oc + c)
    });

    let mut open = vec![[false; N_ACTIONS]; N_STATES];
    for (s, moves) in open.iter_mut().enumerate() {
        let cell = Cell::from_index(s);
        for a in Action::ALL {
            let Some(next) = cell.offset(a) else { continue };
            let (pa, la) = locate(cell);
            let (pb, lb) = locate(next);
            moves[a.index()] = pa != pb || !placed[pa].is_blocked(la, lb);
        }
    }

    let world = WorldConfig {
        descriptor: WorldDescriptor {
            permutation,
            rotations,
            reward_values,
            start_states,
        },
        reward_cells,
        open,
    };
    world.check_starts()?;
    Ok(world)
}

/// Board position and local coordinate of a cell.
fn locate(cell: Cell) -> (usize, LocalCell) {
    let pr = cell.row / QUADRANT_SIZE;
    let pc = cell.col / QUADRANT_SIZE;
    (
        pr * 2 + pc,
        (cell.row % QUADRANT_SIZE, cell.col % QUADRANT_SIZE),
    )
}

/// Uniform draw of arrangement, rotations and reward assignment with the
/// baseline central start states.
pub fn sample_world<R: Rng + ?Sized>(layouts: &[QuadrantLayout; 4], rng: &mut R) -> WorldConfig {
    let mut permutation = [0, 1, 2, 3];
    permutation.shuffle(rng);
    let rotations: [Rotation; 4] =
        std::array::from_fn(|_| Rotation::from_quarter_turns(rng.random_range(0..4)));
    let mut reward_values = REWARD_VALUES;
    reward_values.shuffle(rng);
    assemble_world(layouts, permutation, rotations, reward_values, CENTRAL_STARTS)
        .expect("sampled arrangement of valid layouts is valid")
}

static NOISE: LazyLock<Binomial> =
    LazyLock::new(|| Binomial::new(400, 0.5).expect("valid binomial parameters"));

/// Reward noise: Binomial(400, 1/2) shifted to zero mean (variance 100).
pub fn sample_noise<R: Rng + ?Sized>(rng: &mut R) -> i32 {
    NOISE.sample(rng) as i32 - 200
}

impl WorldConfig {
    pub fn from_descriptor(layouts: &[QuadrantLayout; 4], d: &WorldDescriptor) -> Result<Self> {
        assemble_world(
            layouts,
            d.permutation,
            d.rotations,
            d.reward_values,
            d.start_states,
        )
    }

    fn check_starts(&self) -> Result<()> {
        for s in self.descriptor.start_states {
            if !s.in_bounds() {
                return Err(Error::InvalidWorld(format!("start state {s:?} out of bounds")));
            }
            if self.reward_cells.contains(&s) {
                return Err(Error::InvalidWorld(format!(
                    "start state {s:?} coincides with a reward cell"
                )));
            }
        }
        Ok(())
    }

    pub fn descriptor(&self) -> &WorldDescriptor {
        &self.descriptor
    }

    pub fn start_states(&self) -> [Cell; 4] {
        self.descriptor.start_states
    }

    pub fn reward_cells(&self) -> [Cell; 4] {
        self.reward_cells
    }

    pub fn reward_values(&self) -> [i32; 4] {
        self.descriptor.reward_values
    }

    /// Base value if `state` is a designated reward cell.
    pub fn reward_value_at(&self, state: usize) -> Option<i32> {
        self.reward_cells
            .iter()
            .position(|c| c.index() == state)
            .map(|p| self.descriptor.reward_values[p])
    }

    /// Reward cells with a positive base value end an episode.
    pub fn is_terminal(&self, state: usize) -> bool {
        self.reward_value_at(state).is_some_and(|v| v > 0)
    }

    pub fn is_open(&self, state: usize, action: Action) -> bool {
        self.open[state][action.index()]
    }

    pub fn adjacency(&self) -> &[[bool; N_ACTIONS]] {
        &self.open
    }

    /// Deterministic movement: blocked or off-board moves leave the agent in place.
    pub fn step_dynamics(&self, state: usize, action: Action) -> usize {
        if self.is_open(state, action) {
            Cell::from_index(state)
                .offset(action)
                .expect("open moves stay on the board")
                .index()
        } else {
            state
        }
    }

    /// Observes the cell an action led to. Only positive reward cells pay
    /// out (with noise) and terminate; everything else costs one point.
    pub fn observe_reward<R: Rng + ?Sized>(&self, next_state: usize, rng: &mut R) -> StepOutcome {
        match self.reward_value_at(next_state) {
            Some(v) if v > 0 => StepOutcome {
                next_state,
                reward: v + sample_noise(rng),
                terminal: true,
            },
            _ => StepOutcome {
                next_state,
                reward: STEP_COST,
                terminal: false,
            },
        }
    }

    /// Shortest wall-respecting path length from every cell to the nearest
    /// target; `None` for unreachable cells.
    pub fn bfs_distance(&self, targets: &[usize]) -> Result<Vec<Option<u32>>> {
        if targets.is_empty() {
            return Err(Error::EmptyTargets);
        }
        let mut dist = vec![None; N_STATES];
        let mut queue = VecDeque::new();
        for &t in targets {
            if dist[t].is_none() {
                dist[t] = Some(0);
                queue.push_back(t);
            }
        }
        while let Some(s) = queue.pop_front() {
            let d = dist[s].expect("queued cells have a distance");
            for a in Action::ALL {
                let n = self.step_dynamics(s, a);
                if dist[n].is_none() {
                    dist[n] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        Ok(dist)
    }

    /// Distance of every cell to the nearest designated reward cell.
    pub fn reward_distances(&self) -> Vec<Option<u32>> {
        let targets: Vec<usize> = self.reward_cells.iter().map(|c| c.index()).collect();
        self.bfs_distance(&targets).expect("four reward cells")
    }

    /// Same layout, values of the reward cells at board positions `a` and
    /// `b` exchanged.
    pub fn with_swapped_rewards(&self, a: usize, b: usize) -> WorldConfig {
        let mut w = self.clone();
        w.descriptor.reward_values.swap(a, b);
        w
    }

    /// Moves each start state one diagonal step toward its nearest board
    /// corner. If that lands on a reward cell the move is made along the row
    /// axis only, and failing that along the column axis only.
    pub fn shift_start_states(&self) -> WorldConfig {
        let toward = |x: usize| -> isize {
            if x < BOARD_SIZE / 2 {
                -1
            } else {
                1
            }
        };
        let shifted = self.descriptor.start_states.map(|s| {
            let dr = toward(s.row);
            let dc = toward(s.col);
            let row = s.row.checked_add_signed(dr).filter(|r| *r < BOARD_SIZE);
            let col = s.col.checked_add_signed(dc).filter(|c| *c < BOARD_SIZE);
            let candidates = [
                row.zip(col).map(|(r, c)| Cell::new(r, c)),
                row.map(|r| Cell::new(r, s.col)),
                col.map(|c| Cell::new(s.row, c)),
            ];
            candidates
                .into_iter()
                .flatten()
                .find(|c| !self.reward_cells.contains(c))
                .unwrap_or(s)
        });
        let mut w = self.clone();
        w.descriptor.start_states = shifted;
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use std::collections::HashSet;

    fn canonical() -> WorldConfig {
        assemble_world(
            &default_layouts(),
            [0, 1, 2, 3],
            [Rotation::R0; 4],
            [0, 25, 50, 75],
            CENTRAL_STARTS,
        )
        .unwrap()
    }

    #[test]
    fn canonical_placement() {
        let w = canonical();
        let layouts = default_layouts();
        for p in 0..4 {
            let (r, c) = layouts[p].reward_cell();
            let (or, oc) = POSITION_OFFSETS[p];
            assert_eq!(w.reward_cells()[p], Cell::new(or + r, oc + c));
        }
        // Wall (0,1)|(1,1) of quadrant 1 sits at the same coordinates.
        assert_eq!(w.step_dynamics(Cell::new(1, 1).index(), Action::Up), Cell::new(1, 1).index());
        // Same wall in quadrant at position 3 is offset by (5,5).
        let q4_cell = Cell::new(5 + 1, 5 + 3).index();
        assert_eq!(w.step_dynamics(q4_cell, Action::Up), q4_cell);
    }

    #[test]
    fn moves() {
        let w = canonical();
        let s = Cell::new(0, 0).index();
        assert_eq!(w.step_dynamics(s, Action::Up), s);
        assert_eq!(w.step_dynamics(s, Action::Left), s);
        assert_eq!(w.step_dynamics(s, Action::Right), Cell::new(0, 1).index());
        // Crossing the open border between quadrants.
        let b = Cell::new(2, 4).index();
        assert_eq!(w.step_dynamics(b, Action::Right), Cell::new(2, 5).index());
    }

    #[test]
    fn adjacency_is_symmetric_and_moves_are_local() {
        let w = canonical();
        for s in 0..N_STATES {
            for a in Action::ALL {
                let n = w.step_dynamics(s, a);
                assert!(Cell::from_index(s).manhattan(Cell::from_index(n)) <= 1);
                if n != s {
                    let back = Action::ALL
                        .into_iter()
                        .find(|b| Cell::from_index(n).offset(*b) == Some(Cell::from_index(s)))
                        .unwrap();
                    assert_eq!(w.step_dynamics(n, back), s);
                }
            }
        }
    }

    #[test]
    fn invalid_assemblies_rejected() {
        let l = default_layouts();
        assert!(assemble_world(&l, [0, 0, 2, 3], [Rotation::R0; 4], REWARD_VALUES, CENTRAL_STARTS).is_err());
        assert!(assemble_world(&l, [0, 1, 2, 3], [Rotation::R0; 4], [0, 25, 25, 75], CENTRAL_STARTS).is_err());
        let bad_start = [Cell::new(1, 1), CENTRAL_STARTS[1], CENTRAL_STARTS[2], CENTRAL_STARTS[3]];
        assert!(assemble_world(&l, [0, 1, 2, 3], [Rotation::R0; 4], REWARD_VALUES, bad_start).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let l = default_layouts();
        let a = sample_world(&l, &mut stream(5, Purpose::World));
        let b = sample_world(&l, &mut stream(5, Purpose::World));
        assert_eq!(a, b);
    }

    #[test]
    fn reward_observation() {
        let w = canonical();
        let mut rng = stream(1, Purpose::LearnerNoise);
        let plain = Cell::new(2, 2).index();
        assert_eq!(
            w.observe_reward(plain, &mut rng),
            StepOutcome { next_state: plain, reward: -1, terminal: false }
        );
        let zero = w.reward_cells()[0].index();
        let out = w.observe_reward(zero, &mut rng);
        assert_eq!((out.reward, out.terminal), (-1, false));
        let fifty = w.reward_cells()[2].index();
        let out = w.observe_reward(fifty, &mut rng);
        assert!(out.terminal);
        assert!((50 - 200..=50 + 200).contains(&out.reward));
    }

    #[test]
    fn bfs_basics() {
        let w = canonical();
        assert!(matches!(w.bfs_distance(&[]), Err(Error::EmptyTargets)));
        let t = Cell::new(7, 7).index();
        let d = w.bfs_distance(&[t]).unwrap();
        assert_eq!(d[t], Some(0));
        assert!(d.iter().all(|x| x.is_some()));
        let rd = w.reward_distances();
        for c in w.reward_cells() {
            assert_eq!(rd[c.index()], Some(0));
        }
        assert_eq!(rd.iter().filter(|x| **x == Some(0)).count(), 4);
    }

    #[test]
    fn two_routes_into_first_quadrant_reward() {
        // In the canonical placement (2,2) reaches the reward at (1,1) in two
        // steps via either (1,2) or (2,1).
        let w = canonical();
        let r = w.reward_cells()[0].index();
        let d = w.bfs_distance(&[r]).unwrap();
        assert_eq!(d[Cell::new(2, 2).index()], Some(2));
        assert_eq!(d[Cell::new(1, 2).index()], Some(1));
        assert_eq!(d[Cell::new(2, 1).index()], Some(1));
    }

    #[test]
    fn shift_moves_diagonally_and_keeps_layout() {
        let w = canonical();
        let s = w.shift_start_states();
        assert_eq!(s.start_states()[0], Cell::new(3, 3));
        assert_eq!(s.start_states()[3], Cell::new(6, 6));
        assert_eq!(s.adjacency(), w.adjacency());
        assert_eq!(s.reward_cells(), w.reward_cells());
    }

    #[test]
    fn shift_falls_back_to_row_axis() {
        // Quadrant 4's reward cell (1,3) rotated by 180° sits at local (3,1);
        // at board position 1 (top right) that is (3,6), the diagonal target
        // of start (4,5).
        let l = default_layouts();
        let w = assemble_world(
            &l,
            [0, 3, 2, 1],
            [Rotation::R0, Rotation::R180, Rotation::R0, Rotation::R0],
            REWARD_VALUES,
            CENTRAL_STARTS,
        )
        .unwrap();
        assert_eq!(w.reward_cells()[1], Cell::new(3, 6));
        let s = w.shift_start_states();
        assert_eq!(s.start_states()[1], Cell::new(3, 5));
        for c in s.start_states() {
            assert!(!s.reward_cells().contains(&c));
        }
    }

    #[test]
    fn swap_changes_two_values() {
        let w = canonical();
        let s = w.with_swapped_rewards(1, 3);
        assert_eq!(s.reward_values(), [0, 75, 50, 25]);
        assert_eq!(s.adjacency(), w.adjacency());
    }

    #[test]
    fn noise_support_and_determinism() {
        let mut a = stream(9, Purpose::LearnerNoise);
        let mut b = stream(9, Purpose::LearnerNoise);
        for _ in 0..10_000 {
            let x = sample_noise(&mut a);
            assert!((-200..=200).contains(&x));
            assert_eq!(x, sample_noise(&mut b));
        }
    }

    #[test]
    fn distinct_sampled_worlds_are_common() {
        let l = default_layouts();
        let mut rng = stream(3, Purpose::World);
        let distinct: HashSet<_> = (0..200)
            .map(|_| sample_world(&l, &mut rng).descriptor().clone())
            .collect();
        assert!(distinct.len() > 150);
    }
}
