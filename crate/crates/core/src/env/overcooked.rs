use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_action, Action, Environment, Observation, SituationId, StepOutcome};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FoodKind {
    Tomato,
    Lettuce,
}

impl FoodKind {
    pub fn name(self) -> &'static str {
        match self {
            FoodKind::Tomato => "tomato",
            FoodKind::Lettuce => "lettuce",
        }
    }
}

/// Progress of one food item; only ever moves forward within an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FoodStage {
    Raw,
    Chopped,
    Plated,
    Delivered,
}

impl FoodStage {
    fn label(self) -> &'static str {
        match self {
            FoodStage::Raw => "raw",
            FoodStage::Chopped => "chopped",
            FoodStage::Plated => "plated",
            FoodStage::Delivered => "delivered",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recipe {
    /// chopped tomato on a plate
    ChoppedTomato,
    /// chopped lettuce and chopped tomato on one plate
    Salad,
}

impl Recipe {
    pub fn label(self) -> &'static str {
        match self {
            Recipe::ChoppedTomato => "tomato",
            Recipe::Salad => "salad",
        }
    }

    fn needs(self, food: FoodKind) -> bool {
        match self {
            Recipe::ChoppedTomato => food == FoodKind::Tomato,
            Recipe::Salad => true,
        }
    }

    fn ingredient_count(self) -> usize {
        match self {
            Recipe::ChoppedTomato => 1,
            Recipe::Salad => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Shaping {
    pub fetch: f64,
    pub chop: f64,
    pub plate: f64,
    pub deliver: f64,
    pub step: f64,
}

impl Default for Shaping {
    fn default() -> Self {
        Shaping {
            fetch: 10.0,
            chop: 30.0,
            plate: 50.0,
            deliver: 100.0,
            step: -0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OvercookedConfig {
    pub recipe: Recipe,
    pub shaping: Shaping,
    pub step_cap: usize,
    /// Kitchen map: `.` floor, `#` counter, `C` cutboard, `*` delivery,
    /// `T` tomato, `L` lettuce, `P` plate (each on a counter).
    pub layout: Vec<String>,
}

impl Default for OvercookedConfig {
    fn default() -> Self {
        OvercookedConfig {
            recipe: Recipe::Salad,
            shaping: Shaping::default(),
            step_cap: 100,
            layout: [
                "##C#C##", "#.....#", "T.....P", "#.....#", "L.....P", "###*###",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }
}

type Cell = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Place {
    Counter { x: usize, y: usize },
    Held,
    OnPlate { plate: usize },
    Gone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Held {
    Nothing,
    Food(FoodKind),
    Plate(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoodItem {
    pub kind: FoodKind,
    pub stage: FoodStage,
    pub place: Place,
    pub fetched: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlateItem {
    pub place: Place,
    pub contents: Vec<FoodKind>,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OvercookedState {
    pub agent: (usize, usize),
    pub held: Held,
    /// indexed by [tomato, lettuce]
    pub foods: [FoodItem; 2],
    pub plates: Vec<PlateItem>,
    pub steps: usize,
    pub done: bool,
}

impl OvercookedState {
    pub fn food(&self, kind: FoodKind) -> &FoodItem {
        &self.foods[food_index(kind)]
    }
}

fn food_index(kind: FoodKind) -> usize {
    match kind {
        FoodKind::Tomato => 0,
        FoodKind::Lettuce => 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tile {
    Floor,
    Counter,
    Cutboard(usize),
    Delivery,
}

/// Single-agent text kitchen. The agent interacts with an item by moving
/// into the counter cell that holds it; what happens depends on the held
/// item and the target.
pub struct Overcooked {
    config: OvercookedConfig,
    width: usize,
    height: usize,
    tiles: Vec<Tile>,
    floor: Vec<Cell>,
    initial: OvercookedState,
    state: OvercookedState,
}

const ACTIONS: &[&str] = &["north", "east", "south", "west"];
const AGENT: &str = "agent1";

impl Overcooked {
    pub fn new(config: OvercookedConfig) -> Result<Self> {
        if config.step_cap == 0 {
            return Err(Error::Config("step_cap must be positive".into()));
        }
        let height = config.layout.len();
        let width = config
            .layout
            .first()
            .map(|r| r.chars().count())
            .unwrap_or(0);
        if width == 0 {
            return Err(Error::Config("kitchen layout is empty".into()));
        }
        let mut tiles = Vec::with_capacity(width * height);
        let mut floor = Vec::new();
        let mut tomato = None;
        let mut lettuce = None;
        let mut plates = Vec::new();
        let mut cutboards = 0;
        let mut deliveries = 0;
        for (y, row) in config.layout.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::Config("kitchen layout rows differ in width".into()));
            }
            for (x, ch) in row.chars().enumerate() {
                let tile = match ch {
                    '.' => {
                        floor.push((x, y));
                        Tile::Floor
                    }
                    '#' => Tile::Counter,
                    'C' => {
                        cutboards += 1;
                        Tile::Cutboard(cutboards - 1)
                    }
                    '*' => {
                        deliveries += 1;
                        Tile::Delivery
                    }
                    'T' => {
                        tomato = Some((x, y));
                        Tile::Counter
                    }
                    'L' => {
                        lettuce = Some((x, y));
                        Tile::Counter
                    }
                    'P' => {
                        plates.push((x, y));
                        Tile::Counter
                    }
                    other => {
                        return Err(Error::Config(format!(
                            "unexpected character {other:?} in kitchen layout"
                        )))
                    }
                };
                tiles.push(tile);
            }
        }
        let (Some(tomato), Some(lettuce)) = (tomato, lettuce) else {
            return Err(Error::Config(
                "kitchen needs one tomato and one lettuce".into(),
            ));
        };
        if plates.is_empty() || cutboards == 0 || deliveries == 0 || floor.is_empty() {
            return Err(Error::Config(
                "kitchen needs a plate, a cutboard, a delivery cell and floor".into(),
            ));
        }
        let food = |kind, (x, y): Cell| FoodItem {
            kind,
            stage: FoodStage::Raw,
            place: Place::Counter { x, y },
            fetched: false,
        };
        let initial = OvercookedState {
            agent: floor[0],
            held: Held::Nothing,
            foods: [
                food(FoodKind::Tomato, tomato),
                food(FoodKind::Lettuce, lettuce),
            ],
            plates: plates
                .iter()
                .map(|&(x, y)| PlateItem {
                    place: Place::Counter { x, y },
                    contents: Vec::new(),
                    completed: false,
                })
                .collect(),
            steps: 0,
            done: false,
        };
        Ok(Overcooked {
            config,
            width,
            height,
            tiles,
            floor,
            state: initial.clone(),
            initial,
        })
    }

    pub fn state(&self) -> &OvercookedState {
        &self.state
    }

    pub fn set_state(&mut self, state: OvercookedState) -> Result<()> {
        if self.tile(state.agent) != Some(Tile::Floor) {
            return Err(Error::InvalidArgument(format!(
                "agent position {:?} is not floor",
                state.agent
            )));
        }
        self.state = state;
        Ok(())
    }

    fn tile(&self, (x, y): Cell) -> Option<Tile> {
        (x < self.width && y < self.height).then(|| self.tiles[y * self.width + x])
    }

    fn cutboard_cells(&self) -> Vec<Cell> {
        let mut cells: Vec<(usize, Cell)> = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if let Some(Tile::Cutboard(i)) = self.tile((x, y)) {
                    cells.push((i, (x, y)));
                }
            }
        }
        cells.sort_unstable();
        cells.into_iter().map(|(_, c)| c).collect()
    }

    fn delivery_cell(&self) -> Cell {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .find(|&c| self.tile(c) == Some(Tile::Delivery))
            .expect("validated layout")
    }

    fn food_at(&self, (x, y): Cell) -> Option<usize> {
        self.state
            .foods
            .iter()
            .position(|f| f.place == Place::Counter { x, y })
    }

    fn plate_at(&self, (x, y): Cell) -> Option<usize> {
        self.state
            .plates
            .iter()
            .position(|p| p.place == Place::Counter { x, y })
    }

    fn occupied(&self, cell: Cell) -> bool {
        self.food_at(cell).is_some() || self.plate_at(cell).is_some()
    }

    /// Applies the interaction implied by moving into `target`; returns the
    /// shaping reward and whether the meal was delivered.
    fn interact(&mut self, target: Cell, tile: Tile) -> (f64, bool) {
        let shaping = self.config.shaping.clone();
        let recipe = self.config.recipe;
        let (x, y) = target;
        match self.state.held {
            Held::Nothing => {
                if let Some(fi) = self.food_at(target) {
                    let on_board = matches!(tile, Tile::Cutboard(_));
                    let food = &mut self.state.foods[fi];
                    if on_board && food.stage == FoodStage::Raw {
                        food.stage = FoodStage::Chopped;
                        return (
                            if recipe.needs(food.kind) {
                                shaping.chop
                            } else {
                                0.0
                            },
                            false,
                        );
                    }
                    food.place = Place::Held;
                    self.state.held = Held::Food(food.kind);
                    let mut r = 0.0;
                    if food.stage == FoodStage::Raw && !food.fetched && recipe.needs(food.kind) {
                        r = shaping.fetch;
                    }
                    food.fetched = true;
                    return (r, false);
                }
                if let Some(pi) = self.plate_at(target) {
                    self.state.plates[pi].place = Place::Held;
                    self.state.held = Held::Plate(pi);
                }
                (0.0, false)
            }
            Held::Food(kind) => {
                let fi = food_index(kind);
                let stage = self.state.foods[fi].stage;
                if let Some(pi) = self.plate_at(target) {
                    if stage == FoodStage::Chopped {
                        self.state.foods[fi].stage = FoodStage::Plated;
                        self.state.foods[fi].place = Place::OnPlate { plate: pi };
                        self.state.held = Held::Nothing;
                        let plate = &mut self.state.plates[pi];
                        plate.contents.push(kind);
                        if !plate.completed && plate_matches(&plate.contents, recipe) {
                            plate.completed = true;
                            return (shaping.plate, false);
                        }
                    }
                    return (0.0, false);
                }
                let free = !self.occupied(target);
                let placeable = match tile {
                    Tile::Counter => true,
                    Tile::Cutboard(_) => stage == FoodStage::Raw,
                    Tile::Delivery | Tile::Floor => false,
                };
                if free && placeable {
                    self.state.foods[fi].place = Place::Counter { x, y };
                    self.state.held = Held::Nothing;
                }
                (0.0, false)
            }
            Held::Plate(pi) => {
                if tile == Tile::Delivery {
                    if plate_matches(&self.state.plates[pi].contents, recipe) {
                        self.state.plates[pi].place = Place::Gone;
                        for food in self.state.foods.iter_mut() {
                            if food.place == (Place::OnPlate { plate: pi }) {
                                food.stage = FoodStage::Delivered;
                                food.place = Place::Gone;
                            }
                        }
                        self.state.held = Held::Nothing;
                        return (shaping.deliver, true);
                    }
                    return (0.0, false);
                }
                if tile == Tile::Counter && !self.occupied(target) {
                    self.state.plates[pi].place = Place::Counter { x, y };
                    self.state.held = Held::Nothing;
                }
                (0.0, false)
            }
        }
    }

    fn place_text(&self, place: Place, state: &OvercookedState) -> String {
        match place {
            Place::Counter { x, y } => format!("[{x}, {y}]"),
            Place::Held => format!("held by {AGENT} at [{}, {}]", state.agent.0, state.agent.1),
            Place::OnPlate { plate } => {
                let inner = self.place_text(state.plates[plate].place, state);
                format!("on plate{plate} at {inner}")
            }
            Place::Gone => "delivered".into(),
        }
    }

    fn food_label(food: &FoodItem) -> String {
        match food.stage {
            FoodStage::Raw => food.kind.name().to_string(),
            _ => format!("chopped {}", food.kind.name()),
        }
    }

    fn held_label(state: &OvercookedState) -> String {
        match state.held {
            Held::Nothing => "nothing".into(),
            Held::Food(kind) => Self::food_label(state.food(kind)),
            Held::Plate(pi) => plate_label(pi, &state.plates[pi]),
        }
    }

    fn text_for(&self, state: &OvercookedState) -> String {
        let mut lines = vec![
            "Currently in the kitchen there are the following items and their location:"
                .to_string(),
        ];
        for food in &state.foods {
            lines.push(format!(
                "Name: {}, Location: {};",
                Self::food_label(food),
                self.place_text(food.place, state)
            ));
        }
        for (i, plate) in state.plates.iter().enumerate() {
            lines.push(format!(
                "Name: {}, Location: {};",
                plate_label(i, plate),
                self.place_text(plate.place, state)
            ));
        }
        for (i, (x, y)) in self.cutboard_cells().into_iter().enumerate() {
            lines.push(format!("Name: cutboard{i}, Location: [{x}, {y}];"));
        }
        let (dx, dy) = self.delivery_cell();
        lines.push(format!("Name: star, Location: [{dx}, {dy}];"));
        lines.push(format!(
            "{AGENT} is at location [{}, {}] and currently holds {}",
            state.agent.0,
            state.agent.1,
            Self::held_label(state)
        ));
        lines.join("\n")
    }

    fn situation_of(state: &OvercookedState) -> SituationId {
        let stage = |kind: FoodKind| match state.food(kind).stage {
            FoodStage::Delivered => FoodStage::Plated.label(),
            s => s.label(),
        };
        let held = match state.held {
            Held::Nothing => "nothing",
            Held::Food(FoodKind::Lettuce) => "lettuce",
            Held::Food(FoodKind::Tomato) => "tomato",
            Held::Plate(_) => "plate",
        };
        SituationId::new(format!(
            "lettuce-{}|tomato-{}|hold-{}",
            stage(FoodKind::Lettuce),
            stage(FoodKind::Tomato),
            held
        ))
    }

    fn symbolic_for(&self, state: &OvercookedState) -> Vec<f64> {
        let w = (self.width - 1).max(1) as f64;
        let h = (self.height - 1).max(1) as f64;
        let locate = |place: Place| -> (usize, usize) {
            match place {
                Place::Counter { x, y } => (x, y),
                Place::Held | Place::Gone => state.agent,
                Place::OnPlate { plate } => match state.plates[plate].place {
                    Place::Counter { x, y } => (x, y),
                    _ => state.agent,
                },
            }
        };
        let mut v = vec![state.agent.0 as f64 / w, state.agent.1 as f64 / h];
        for food in &state.foods {
            let (x, y) = locate(food.place);
            v.push(x as f64 / w);
            v.push(y as f64 / h);
        }
        for plate in state.plates.iter().take(2) {
            let (x, y) = locate(plate.place);
            v.push(x as f64 / w);
            v.push(y as f64 / h);
        }
        for _ in state.plates.len()..2 {
            v.extend_from_slice(&[0.0, 0.0]);
        }
        for food in &state.foods {
            let mut one_hot = [0.0; 4];
            one_hot[food.stage as usize] = 1.0;
            v.extend_from_slice(&one_hot);
        }
        let mut held = [0.0; 4];
        held[match state.held {
            Held::Nothing => 0,
            Held::Food(FoodKind::Tomato) => 1,
            Held::Food(FoodKind::Lettuce) => 2,
            Held::Plate(_) => 3,
        }] = 1.0;
        v.extend_from_slice(&held);
        for i in 0..2 {
            v.push(
                state
                    .plates
                    .get(i)
                    .map_or(0.0, |p| p.contents.len() as f64 / 2.0),
            );
        }
        v
    }

    fn observe(&self, state: &OvercookedState) -> Observation {
        Observation {
            text: self.text_for(state),
            symbolic: self.symbolic_for(state),
            situation: Self::situation_of(state),
        }
    }

    /// Builds a state that realizes a (lettuce stage, tomato stage, held)
    /// signature, used to enumerate situations.
    fn state_with(&self, lettuce: FoodStage, tomato: FoodStage, held: &str) -> OvercookedState {
        let mut s = self.initial.clone();
        let board = self.cutboard_cells();
        for (kind, stage) in [(FoodKind::Lettuce, lettuce), (FoodKind::Tomato, tomato)] {
            let fi = food_index(kind);
            s.foods[fi].stage = stage;
            s.foods[fi].fetched = stage != FoodStage::Raw;
            if stage == FoodStage::Chopped {
                let (x, y) = board[fi % board.len()];
                s.foods[fi].place = Place::Counter { x, y };
            }
            if stage == FoodStage::Plated {
                s.foods[fi].place = Place::OnPlate { plate: 0 };
                s.plates[0].contents.push(kind);
            }
        }
        s.plates[0].completed = plate_matches(&s.plates[0].contents, self.config.recipe);
        match held {
            "lettuce" | "tomato" => {
                let kind = if held == "lettuce" {
                    FoodKind::Lettuce
                } else {
                    FoodKind::Tomato
                };
                s.foods[food_index(kind)].place = Place::Held;
                s.foods[food_index(kind)].fetched = true;
                s.held = Held::Food(kind);
            }
            "plate" => {
                s.plates[0].place = Place::Held;
                s.held = Held::Plate(0);
            }
            _ => {}
        }
        s
    }
}

fn plate_label(i: usize, plate: &PlateItem) -> String {
    if plate.contents.is_empty() {
        format!("plate{i}")
    } else {
        let items: Vec<String> = plate
            .contents
            .iter()
            .map(|k| format!("chopped {}", k.name()))
            .collect();
        format!("plate{i} with {}", items.join(" and "))
    }
}

fn plate_matches(contents: &[FoodKind], recipe: Recipe) -> bool {
    contents.len() == recipe.ingredient_count() && contents.iter().all(|&k| recipe.needs(k))
}

impl Environment for Overcooked {
    fn name(&self) -> &'static str {
        "overcooked"
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = self.initial.clone();
        self.state.agent = *self.floor.choose(&mut rng).expect("floor is non-empty");
        self.observation()
    }

    fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.state.done {
            return Err(Error::EpisodeDone);
        }
        let a = check_action(action, ACTIONS.len())?;
        let (x, y) = self.state.agent;
        let target = match a {
            0 if y > 0 => Some((x, y - 1)),
            1 => Some((x + 1, y)),
            2 => Some((x, y + 1)),
            3 if x > 0 => Some((x - 1, y)),
            _ => None,
        };
        self.state.steps += 1;
        let mut reward = self.config.shaping.step;
        let mut delivered = false;
        if let Some(target) = target {
            match self.tile(target) {
                Some(Tile::Floor) => self.state.agent = target,
                Some(tile) => {
                    let (r, d) = self.interact(target, tile);
                    reward += r;
                    delivered = d;
                }
                None => {}
            }
        }
        let truncated = !delivered && self.state.steps >= self.config.step_cap;
        self.state.done = delivered || truncated;
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
        Self::situation_of(&self.state)
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
        24
    }

    fn situation_examples(&self) -> Vec<Observation> {
        let stages = [FoodStage::Raw, FoodStage::Chopped, FoodStage::Plated];
        let mut out = Vec::new();
        for &lettuce in &stages {
            for &tomato in &stages {
                for held in ["nothing", "lettuce", "tomato", "plate"] {
                    let feasible = match held {
                        "lettuce" => lettuce != FoodStage::Plated,
                        "tomato" => tomato != FoodStage::Plated,
                        _ => true,
                    };
                    if feasible {
                        out.push(self.observe(&self.state_with(lettuce, tomato, held)));
                    }
                }
            }
        }
        out
    }

    fn return_bounds(&self) -> (f64, f64) {
        let s = &self.config.shaping;
        let n = self.config.recipe.ingredient_count() as f64;
        let worst = self.config.step_cap as f64 * s.step.min(0.0);
        let best = n * (s.fetch + s.chop) + s.plate + s.deliver;
        (worst, best)
    }

    fn is_done(&self) -> bool {
        self.state.done
    }

    fn steps_taken(&self) -> usize {
        self.state.steps
    }

    fn state_repr(&self) -> String {
        format!(
            "overcooked:{}",
            serde_json::to_string(&self.state).expect("state serializes")
        )
    }
}
