use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_action, Action, Environment, Observation, SituationId, StepOutcome};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Position {
    pub x: usize,
    pub y: usize,
}

impl Position {
    pub fn new(x: usize, y: usize) -> Self {
        Position { x, y }
    }
}

impl std::fmt::Display for Position {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.x, self.y)
    }
}

/// Grid map given as rows of characters: `#` wall, `0`-`3` room cells,
/// `H` hallway cells. Rooms are connected in a ring 0-1-2-3-0; from room
/// `r` the left-handed hallway leads to `r-1` and the right-handed one to
/// `r+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FourRoomLayout {
    pub rows: Vec<String>,
}

impl Default for FourRoomLayout {
    fn default() -> Self {
        FourRoomLayout {
            rows: [
                "3333#0000",
                "3333#0000",
                "3333H0000",
                "3333#0000",
                "##H###H##",
                "2222#1111",
                "2222H1111",
                "2222#1111",
                "2222#1111",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Wall,
    Room(usize),
    Hallway,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FourRoomConfig {
    pub layout: FourRoomLayout,
    pub goal_reward: f64,
    pub step_reward: f64,
    pub invalid_penalty: f64,
    pub step_cap: usize,
}

impl Default for FourRoomConfig {
    fn default() -> Self {
        FourRoomConfig {
            layout: FourRoomLayout::default(),
            goal_reward: 50.0,
            step_reward: -0.4,
            invalid_penalty: -2.0,
            step_cap: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FourRoomState {
    pub agent: Position,
    pub goal: Position,
    pub steps: usize,
    pub done: bool,
}

#[derive(Debug, Clone)]
struct Grid {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    /// hallway between room r and room (r+1) % 4, indexed by r
    ring_hallways: [Position; 4],
    room_cells: Vec<Position>,
}

impl Grid {
    fn parse(layout: &FourRoomLayout) -> Result<Grid> {
        let height = layout.rows.len();
        let width = layout.rows.first().map(|r| r.chars().count()).unwrap_or(0);
        if height == 0 || width == 0 {
            return Err(Error::Config("four-room layout is empty".into()));
        }
        let mut cells = Vec::with_capacity(width * height);
        for row in &layout.rows {
            if row.chars().count() != width {
                return Err(Error::Config(
                    "four-room layout rows differ in width".into(),
                ));
            }
            for ch in row.chars() {
                cells.push(match ch {
                    '#' => Cell::Wall,
                    '0'..='3' => Cell::Room(ch as usize - '0' as usize),
                    'H' => Cell::Hallway,
                    other => {
                        return Err(Error::Config(format!(
                            "unexpected character {other:?} in four-room layout"
                        )))
                    }
                });
            }
        }
        let mut grid = Grid {
            width,
            height,
            cells,
            ring_hallways: [Position::new(0, 0); 4],
            room_cells: Vec::new(),
        };
        let mut found = [false; 4];
        for y in 0..height {
            for x in 0..width {
                let p = Position::new(x, y);
                match grid.cell(p) {
                    Cell::Room(_) => grid.room_cells.push(p),
                    Cell::Hallway => {
                        let mut rooms: Vec<usize> = grid
                            .neighbours(p)
                            .into_iter()
                            .filter_map(|n| match grid.cell(n) {
                                Cell::Room(r) => Some(r),
                                _ => None,
                            })
                            .collect();
                        rooms.sort_unstable();
                        rooms.dedup();
                        let idx = match rooms.as_slice() {
                            [a, b] if (a + 1) % 4 == *b => *a,
                            [a, b] if (b + 1) % 4 == *a => *b,
                            _ => return Err(Error::Config(format!(
                                "hallway at {p} must join two ring-adjacent rooms, joins {rooms:?}"
                            ))),
                        };
                        if found[idx] {
                            return Err(Error::Config(format!(
                                "more than one hallway between rooms {idx} and {}",
                                (idx + 1) % 4
                            )));
                        }
                        found[idx] = true;
                        grid.ring_hallways[idx] = p;
                    }
                    Cell::Wall => {}
                }
            }
        }
        if found.iter().any(|f| !f) {
            return Err(Error::Config(
                "four-room layout needs one hallway between each ring-adjacent room pair".into(),
            ));
        }
        for r in 0..4 {
            if !grid
                .room_cells
                .iter()
                .any(|&p| grid.cell(p) == Cell::Room(r))
            {
                return Err(Error::Config(format!("room {r} has no cells")));
            }
        }
        Ok(grid)
    }

    fn cell(&self, p: Position) -> Cell {
        self.cells[p.y * self.width + p.x]
    }

    fn neighbours(&self, p: Position) -> Vec<Position> {
        let mut out = Vec::with_capacity(4);
        if p.y > 0 {
            out.push(Position::new(p.x, p.y - 1));
        }
        if p.x + 1 < self.width {
            out.push(Position::new(p.x + 1, p.y));
        }
        if p.y + 1 < self.height {
            out.push(Position::new(p.x, p.y + 1));
        }
        if p.x > 0 {
            out.push(Position::new(p.x - 1, p.y));
        }
        out
    }

    fn hallway_rooms(&self, p: Position) -> Option<(usize, usize)> {
        self.ring_hallways
            .iter()
            .position(|&h| h == p)
            .map(|r| (r, (r + 1) % 4))
    }
}

/// Four rooms joined in a ring by single-cell hallways. The agent and goal
/// start in random room cells.
pub struct FourRoom {
    config: FourRoomConfig,
    grid: Grid,
    state: FourRoomState,
}

const ACTIONS: &[&str] = &["north", "east", "south", "west"];

impl FourRoom {
    pub fn new(config: FourRoomConfig) -> Result<Self> {
        if config.step_cap == 0 {
            return Err(Error::Config("step_cap must be positive".into()));
        }
        let grid = Grid::parse(&config.layout)?;
        let state = FourRoomState {
            agent: grid.room_cells[0],
            goal: grid.room_cells[grid.room_cells.len() - 1],
            steps: 0,
            done: false,
        };
        Ok(FourRoom {
            config,
            grid,
            state,
        })
    }

    pub fn state(&self) -> &FourRoomState {
        &self.state
    }

    pub fn set_state(&mut self, state: FourRoomState) -> Result<()> {
        for p in [state.agent, state.goal] {
            if p.x >= self.grid.width || p.y >= self.grid.height || self.grid.cell(p) == Cell::Wall
            {
                return Err(Error::InvalidArgument(format!("{p} is not a free cell")));
            }
        }
        self.state = state;
        Ok(())
    }

    /// Room index of a cell, `None` for hallways and walls.
    pub fn room_of(&self, p: Position) -> Option<usize> {
        match self.grid.cell(p) {
            Cell::Room(r) => Some(r),
            _ => None,
        }
    }

    pub fn is_wall(&self, p: Position) -> bool {
        self.grid.cell(p) == Cell::Wall
    }

    pub fn is_hallway(&self, p: Position) -> bool {
        self.grid.cell(p) == Cell::Hallway
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    /// (left-handed, right-handed) hallway positions for a room.
    pub fn hallways_of(&self, room: usize) -> (Position, Position) {
        (
            self.grid.ring_hallways[(room + 3) % 4],
            self.grid.ring_hallways[room],
        )
    }

    fn situation_of(&self, state: &FourRoomState) -> SituationId {
        let goal_room = self.room_of(state.goal);
        let key = match (self.room_of(state.agent), goal_room) {
            (None, _) => "in-hallway",
            (Some(a), Some(g)) if a == g => "same-room",
            (Some(a), Some(g)) if g == (a + 1) % 4 => "goal-right-handed",
            // the opposite room is reached equally fast either way; prefer left
            (Some(_), _) => "goal-left-handed",
        };
        SituationId::new(key)
    }

    fn text_for(&self, state: &FourRoomState) -> String {
        let goal_room = match self.room_of(state.goal) {
            Some(r) => format!("Room{r}"),
            None => "a hallway".into(),
        };
        let mut text = match self.room_of(state.agent) {
            Some(r) => {
                let (left, right) = self.hallways_of(r);
                format!(
                    "You are in Room{r}, goal is in {goal_room}. The left-handed hallway's position is {left}. The right-handed hallway's position is {right}."
                )
            }
            None => {
                let (a, b) = self.grid.hallway_rooms(state.agent).unwrap_or((0, 1));
                format!(
                    "You are in the hallway between Room{a} and Room{b}, goal is in {goal_room}."
                )
            }
        };
        text.push_str(&format!(
            " Your position is {}. The goal's position is {}.",
            state.agent, state.goal
        ));
        text
    }

    fn symbolic_for(&self, state: &FourRoomState) -> Vec<f64> {
        let w = (self.grid.width - 1).max(1) as f64;
        let h = (self.grid.height - 1).max(1) as f64;
        let mut v = vec![
            state.agent.x as f64 / w,
            state.agent.y as f64 / h,
            state.goal.x as f64 / w,
            state.goal.y as f64 / h,
        ];
        let mut agent_room = [0.0; 5];
        match self.room_of(state.agent) {
            Some(r) => agent_room[r] = 1.0,
            None => agent_room[4] = 1.0,
        }
        let mut goal_room = [0.0; 4];
        if let Some(r) = self.room_of(state.goal) {
            goal_room[r] = 1.0;
        }
        v.extend_from_slice(&agent_room);
        v.extend_from_slice(&goal_room);
        v
    }

    fn observe(&self, state: &FourRoomState) -> Observation {
        Observation {
            text: self.text_for(state),
            symbolic: self.symbolic_for(state),
            situation: self.situation_of(state),
        }
    }
}

impl Environment for FourRoom {
    fn name(&self) -> &'static str {
        "fourroom"
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let goal = *self
            .grid
            .room_cells
            .choose(&mut rng)
            .expect("rooms are non-empty");
        let agent = loop {
            let p = *self
                .grid
                .room_cells
                .choose(&mut rng)
                .expect("rooms are non-empty");
            if p != goal {
                break p;
            }
        };
        self.state = FourRoomState {
            agent,
            goal,
            steps: 0,
            done: false,
        };
        self.observation()
    }

    fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.state.done {
            return Err(Error::EpisodeDone);
        }
        let a = check_action(action, ACTIONS.len())?;
        let Position { x, y } = self.state.agent;
        let target = match a {
            0 if y > 0 => Some(Position::new(x, y - 1)),
            1 if x + 1 < self.grid.width => Some(Position::new(x + 1, y)),
            2 if y + 1 < self.grid.height => Some(Position::new(x, y + 1)),
            3 if x > 0 => Some(Position::new(x - 1, y)),
            _ => None,
        }
        .filter(|&p| self.grid.cell(p) != Cell::Wall);

        self.state.steps += 1;
        let mut reached = false;
        let reward = match target {
            None => self.config.invalid_penalty,
            Some(p) => {
                self.state.agent = p;
                if p == self.state.goal {
                    reached = true;
                    self.config.goal_reward
                } else {
                    self.config.step_reward
                }
            }
        };
        let truncated = !reached && self.state.steps >= self.config.step_cap;
        self.state.done = reached || truncated;
        Ok(StepOutcome {
            observation: self.observation(),
            reward,
            done: self.state.done,
            truncated,
        })
    }

    fn observation(&self) -> Observation {
        self.observe(&self.state)
    }

    fn situation(&self) -> SituationId {
        self.situation_of(&self.state)
    }

    fn render_text(&self) -> String {
        self.text_for(&self.state)
    }

    fn action_tokens(&self) -> &'static [&'static str] {
        ACTIONS
    }

    fn action_phrases(&self) -> Vec<String> {
        ACTIONS.iter().map(|t| format!("move {t}")).collect()
    }

    fn symbolic_len(&self) -> usize {
        13
    }

    fn situation_examples(&self) -> Vec<Observation> {
        let room_cell = |r: usize| {
            *self
                .grid
                .room_cells
                .iter()
                .find(|&&p| self.grid.cell(p) == Cell::Room(r))
                .expect("validated layout")
        };
        let goal = room_cell(2);
        [
            room_cell(2),
            room_cell(1),
            room_cell(3),
            self.grid.ring_hallways[0],
        ]
        .into_iter()
        .map(|agent| {
            let agent = if agent == goal {
                // same room: pick a different cell in room 2
                *self
                    .grid
                    .room_cells
                    .iter()
                    .rev()
                    .find(|&&p| self.grid.cell(p) == Cell::Room(2))
                    .expect("validated layout")
            } else {
                agent
            };
            self.observe(&FourRoomState {
                agent,
                goal,
                steps: 0,
                done: false,
            })
        })
        .collect()
    }

    fn return_bounds(&self) -> (f64, f64) {
        let worst =
            self.config.step_cap as f64 * self.config.invalid_penalty.min(self.config.step_reward);
        (worst, self.config.goal_reward)
    }

    fn is_done(&self) -> bool {
        self.state.done
    }

    fn steps_taken(&self) -> usize {
        self.state.steps
    }

    fn state_repr(&self) -> String {
        format!(
            "fourroom:agent={};goal={};steps={};done={}",
            self.state.agent, self.state.goal, self.state.steps, self.state.done
        )
    }
}
