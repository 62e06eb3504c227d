//! Grid maze with four moves. Fully observable: every observation states the agent and goal
//! coordinates. `x` grows to the right, `y` grows downwards.

use std::collections::VecDeque;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{compose_observation, validate_budget, Clock, StepOutcome, RESET_RETRY_CAP, STEP_REWARD};
use crate::error::{Error, Result};

/// Moves in tie-break order.
pub const MOVES: [&str; 4] = ["move up", "move down", "move left", "move right"];

#[derive(Debug, Clone, PartialEq)]
pub struct MazeConfig {
    pub width: usize,
    pub height: usize,
    /// Probability that a non-start, non-goal cell is a wall.
    pub wall_density: f64,
    pub budget: usize,
    /// Fixed layout rows using `S` start, `G` goal, `#` wall, `.` open. Overrides generation.
    pub layout: Option<Vec<String>>,
}

impl Default for MazeConfig {
    fn default() -> Self {
        MazeConfig {
            width: 5,
            height: 5,
            wall_density: 0.2,
            budget: 15,
            layout: None,
        }
    }
}

impl MazeConfig {
    pub fn open(width: usize, height: usize) -> Self {
        MazeConfig {
            width,
            height,
            wall_density: 0.0,
            ..MazeConfig::default()
        }
    }

    pub fn with_layout(rows: &[&str], budget: usize) -> Self {
        MazeConfig {
            width: rows.first().map_or(0, |r| r.len()),
            height: rows.len(),
            wall_density: 0.0,
            budget,
            layout: Some(rows.iter().map(|r| r.to_string()).collect()),
        }
    }

    pub(crate) fn describe(&self) -> String {
        let layout = self
            .layout
            .as_ref()
            .map(|rows| rows.join("/"))
            .unwrap_or_default();
        format!(
            "maze:w={}:h={}:walls={:.4}:budget={}:layout={}",
            self.width, self.height, self.wall_density, self.budget, layout
        )
    }

    fn validate(&self) -> Result<()> {
        validate_budget(self.budget)?;
        if self.width * self.height < 2 {
            return Err(Error::invalid("maze needs at least two cells"));
        }
        if !(0.0..1.0).contains(&self.wall_density) {
            return Err(Error::invalid("wall density must be in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pos {
    pub x: usize,
    pub y: usize,
}

impl Pos {
    pub fn new(x: usize, y: usize) -> Self {
        Pos { x, y }
    }

    pub fn manhattan(self, other: Pos) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

fn parse_pos(s: &str) -> Option<Pos> {
    let inner = s.trim().strip_prefix('(')?.strip_suffix(')')?;
    let (x, y) = inner.split_once(',')?;
    Some(Pos::new(x.trim().parse().ok()?, y.trim().parse().ok()?))
}

/// Reads `(agent, goal)` from a maze observation's status line.
pub fn parse_status(observation: &str) -> Option<(Pos, Pos)> {
    let status = super::status_line(observation)?;
    let rest = status.strip_prefix("at ")?;
    let (agent, goal) = rest.split_once(", goal ")?;
    Some((parse_pos(agent)?, parse_pos(goal)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MazeState {
    width: usize,
    height: usize,
    walls: Vec<bool>,
    agent: Pos,
    goal: Pos,
    pub(crate) clock: Clock,
}

impl MazeState {
    pub fn agent(&self) -> Pos {
        self.agent
    }

    pub fn goal(&self) -> Pos {
        self.goal
    }

    pub fn is_wall(&self, p: Pos) -> bool {
        self.walls[p.y * self.width + p.x]
    }

    fn neighbour(&self, p: Pos, mv: &str) -> Option<Pos> {
        let (x, y) = (p.x as i64, p.y as i64);
        let (nx, ny) = match mv {
            "move up" => (x, y - 1),
            "move down" => (x, y + 1),
            "move left" => (x - 1, y),
            "move right" => (x + 1, y),
            _ => return None,
        };
        if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
            return None;
        }
        let n = Pos::new(nx as usize, ny as usize);
        (!self.is_wall(n)).then_some(n)
    }

    /// Shortest-path distances to the goal, `None` for walls and unreachable cells.
    pub fn distances_to_goal(&self) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.width * self.height];
        let mut queue = VecDeque::new();
        dist[self.goal.y * self.width + self.goal.x] = Some(0);
        queue.push_back(self.goal);
        while let Some(p) = queue.pop_front() {
            let d = dist[p.y * self.width + p.x].unwrap_or(0);
            for mv in MOVES {
                if let Some(n) = self.neighbour(p, mv) {
                    let slot = &mut dist[n.y * self.width + n.x];
                    if slot.is_none() {
                        *slot = Some(d + 1);
                        queue.push_back(n);
                    }
                }
            }
        }
        dist
    }

    pub fn bfs_distance(&self) -> Option<usize> {
        self.distances_to_goal()[self.agent.y * self.width + self.agent.x]
    }

    /// First move in tie-break order that shortens the true path to the goal.
    pub fn shortest_path_move(&self) -> Option<&'static str> {
        let dist = self.distances_to_goal();
        let here = dist[self.agent.y * self.width + self.agent.x]?;
        MOVES.into_iter().find(|mv| {
            self.neighbour(self.agent, mv)
                .and_then(|n| dist[n.y * self.width + n.x])
                .is_some_and(|d| d + 1 == here)
        })
    }

    fn status(&self) -> String {
        format!("at {}, goal {}", self.agent, self.goal)
    }

    fn available() -> Vec<String> {
        MOVES.iter().map(|m| m.to_string()).collect()
    }

    pub fn query(&self) -> String {
        format!("Navigate the maze to reach the goal at {}.", self.goal)
    }

    pub fn step(&mut self, action: &str) -> Result<StepOutcome> {
        self.clock.check_running()?;
        let action = action.trim();
        let narrative = if MOVES.contains(&action) {
            let dir = &action["move ".len()..];
            match self.neighbour(self.agent, action) {
                Some(n) => {
                    self.agent = n;
                    if n == self.goal {
                        format!("You moved {dir} and reached the goal.")
                    } else {
                        format!("You moved {dir}.")
                    }
                }
                None => format!("The way {dir} is blocked."),
            }
        } else {
            format!("invalid action {action:?}.")
        };
        let success = self.agent == self.goal;
        let exhausted = self.clock.tick(success);
        Ok(StepOutcome {
            observation: compose_observation(&[narrative], &self.status(), exhausted, &Self::available()),
            reward: STEP_REWARD,
            done: self.clock.done,
            success,
        })
    }

    fn initial_observation(&self) -> String {
        compose_observation(
            &["You are in a maze.".to_string()],
            &self.status(),
            false,
            &Self::available(),
        )
    }

    fn from_layout(rows: &[String], budget: usize) -> Result<MazeState> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut walls = Vec::with_capacity(width * height);
        let (mut start, mut goal) = (None, None);
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::invalid("maze layout rows differ in length"));
            }
            for (x, c) in row.chars().enumerate() {
                match c {
                    '#' => walls.push(true),
                    '.' => walls.push(false),
                    'S' => {
                        start = Some(Pos::new(x, y));
                        walls.push(false);
                    }
                    'G' => {
                        goal = Some(Pos::new(x, y));
                        walls.push(false);
                    }
                    other => return Err(Error::invalid(format!("bad maze layout cell {other:?}"))),
                }
            }
        }
        let (agent, goal) = match (start, goal) {
            (Some(s), Some(g)) => (s, g),
            _ => return Err(Error::invalid("maze layout needs S and G")),
        };
        Ok(MazeState {
            width,
            height,
            walls,
            agent,
            goal,
            clock: Clock::new(budget),
        })
    }
}

pub(crate) fn reset(config: &MazeConfig, seed: u64) -> Result<(MazeState, String, String)> {
    config.validate()?;
    let state = match &config.layout {
        Some(rows) => {
            let s = MazeState::from_layout(rows, config.budget)?;
            if s.agent == s.goal || s.bfs_distance().is_none() {
                return Err(Error::invalid("maze layout is not solvable"));
            }
            s
        }
        None => generate(config, seed)?,
    };
    let query = state.query();
    let obs = state.initial_observation();
    Ok((state, query, obs))
}

fn generate(config: &MazeConfig, seed: u64) -> Result<MazeState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = config.width * config.height;
    for _ in 0..RESET_RETRY_CAP {
        let start = rng.random_range(0..cells);
        let mut goal = rng.random_range(0..cells - 1);
        if goal >= start {
            goal += 1;
        }
        let walls: Vec<bool> = (0..cells)
            .map(|i| i != start && i != goal && rng.random_bool(config.wall_density))
            .collect();
        let state = MazeState {
            width: config.width,
            height: config.height,
            walls,
            agent: Pos::new(start % config.width, start / config.width),
            goal: Pos::new(goal % config.width, goal / config.width),
            clock: Clock::new(config.budget),
        };
        if state.bfs_distance().is_some() {
            return Ok(state);
        }
    }
    Err(Error::Data(format!(
        "no solvable maze after {RESET_RETRY_CAP} attempts (seed {seed})"
    )))
}
