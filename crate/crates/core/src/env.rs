//! GridQuest: a deterministic, seedable multi-room grid environment with a
//! 12-milestone dependency chain, region-wise visual shift, and a modal
//! battle sub-interface gating the second milestone.
//!
//! The world is a strip of `num_regions` rooms separated by walls with one
//! door each. Milestones are cells that fire in chain order when stepped on;
//! the battle milestone instead opens a battle interface that is won only by
//! entering the correct seeded input sequence. Every milestone is followed by
//! a short "fanfare" freeze during which the observation carries a milestone
//! banner, so each milestone produces a burst of identical, recognizable
//! frames in any playthrough.

use crate::error::{AshError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Side length of the square window the agent sees around itself.
pub const VIEW_K: usize = 5;
/// Distinct cell renderings in the view window.
pub const CELL_TYPES: usize = 4;
/// Env steps the post-milestone fanfare banner stays up.
pub const FANFARE_STEPS: u32 = 8;
/// Env steps of the battle intro during which inputs are ignored.
pub const BATTLE_INTRO_STEPS: u32 = 8;
/// Env steps between recorded observations (act twice per observation).
pub const OBS_STRIDE: usize = 2;
/// Weight of the region palette block in the feature vector; large enough
/// that regions separate cleanly from in-room detail.
pub const PALETTE_SCALE: f32 = 4.0;
/// Obstacles in region 0 are drawn from this fixed stream so that the home
/// region is identical across world seeds.
const REGION0_LAYOUT_SEED: u64 = 0x4153_4800;
/// Upper bound on env steps for a noise-free expert playthrough.
pub const EXPERT_STEP_BOUND: usize = 600;

pub type MilestoneId = usize;

/// The eight inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
    Interact = 4,
    Confirm = 5,
    Cancel = 6,
    /// No input this step.
    Noop = 7,
}

pub const NUM_ACTIONS: usize = 8;

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Interact,
        Action::Confirm,
        Action::Cancel,
        Action::Noop,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i % NUM_ACTIONS]
    }

    pub fn is_movement(self) -> bool {
        matches!(
            self,
            Action::Up | Action::Down | Action::Left | Action::Right
        )
    }

    fn delta(self) -> Option<(i32, i32)> {
        match self {
            Action::Up => Some((0, -1)),
            Action::Down => Some((0, 1)),
            Action::Left => Some((-1, 0)),
            Action::Right => Some((1, 0)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MilestoneKind {
    /// Fires when the agent steps on the milestone cell.
    Reach,
    /// Stepping on the cell opens the battle interface; fires on a win.
    Battle,
}

/// One link of the milestone chain: a cell given by region and an offset
/// inside that region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MilestoneSpec {
    pub region: usize,
    pub rel_x: usize,
    pub rel_y: usize,
    pub kind: MilestoneKind,
}

/// Environment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub seed: u64,
    pub grid_width: usize,
    pub grid_height: usize,
    pub num_regions: usize,
    pub milestones: Vec<MilestoneSpec>,
    pub battle_sequence_length: usize,
    /// Decoy worlds render every region with a shifted palette and are used
    /// to generate irrelevant corpus videos.
    pub decoy_flag: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            seed: 11,
            grid_width: 48,
            grid_height: 9,
            num_regions: 6,
            milestones: default_milestones(),
            battle_sequence_length: 3,
            decoy_flag: false,
        }
    }
}

/// The default 12-milestone chain. The second milestone is the battle gate,
/// and several later links backtrack into earlier regions so that the
/// correct corridor direction depends on progress that is no longer visible
/// in a short observation window.
pub fn default_milestones() -> Vec<MilestoneSpec> {
    use MilestoneKind::*;
    let m = |region, rel_x, rel_y, kind| MilestoneSpec {
        region,
        rel_x,
        rel_y,
        kind,
    };
    vec![
        m(0, 1, 1, Reach),
        m(0, 6, 4, Battle),
        m(1, 5, 2, Reach),
        m(0, 4, 7, Reach), // backtrack
        m(1, 4, 7, Reach),
        m(2, 4, 4, Reach),
        m(2, 6, 7, Reach),
        m(1, 2, 1, Reach), // backtrack
        m(3, 4, 2, Reach),
        m(4, 4, 4, Reach),
        m(3, 2, 6, Reach), // backtrack
        m(5, 6, 4, Reach),
    ]
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_regions == 0 {
            return Err(AshError::config("env.num_regions must be > 0"));
        }
        if self.grid_width % self.num_regions != 0 {
            return Err(AshError::config(
                "env.grid_width must be divisible by env.num_regions",
            ));
        }
        let region_w = self.grid_width / self.num_regions;
        if region_w < 4 || self.grid_height < 5 {
            return Err(AshError::config("env grid too small for room layout"));
        }
        if self.milestones.len() != 12 {
            return Err(AshError::config("env.milestones must list exactly 12 entries"));
        }
        let battles: Vec<usize> = self
            .milestones
            .iter()
            .enumerate()
            .filter(|(_, m)| m.kind == MilestoneKind::Battle)
            .map(|(i, _)| i)
            .collect();
        if battles != vec![1] {
            return Err(AshError::config(
                "env.milestones must contain exactly one battle milestone, at index 1",
            ));
        }
        for (i, m) in self.milestones.iter().enumerate() {
            if m.region >= self.num_regions
                || m.rel_x >= region_w
                || m.rel_y >= self.grid_height
            {
                return Err(AshError::config(format!(
                    "env.milestones[{i}] lies outside the grid"
                )));
            }
        }
        if self.battle_sequence_length == 0 || self.battle_sequence_length > 8 {
            return Err(AshError::config(
                "env.battle_sequence_length must be in 1..=8",
            ));
        }
        Ok(())
    }

    /// Feature dimensionality implied by this configuration.
    pub fn obs_dim(&self) -> usize {
        VIEW_K * VIEW_K * CELL_TYPES            // view window
            + 2 * self.num_regions              // palette block
            + 2                                 // mode flags
            + self.battle_sequence_length + 1   // battle progress
            + 1 + self.milestones.len()         // fanfare flag + banner
            + self.milestones.len()             // inventory bitmask
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CellKind {
    Floor = 0,
    Wall = 1,
    Door = 2,
    Milestone = 3,
}

#[derive(Debug, Clone)]
struct Door {
    x: i32,
    y: i32,
    /// Door is impassable until this milestone has fired.
    locked_until: Option<MilestoneId>,
}

/// Immutable world data derived from an [`EnvConfig`].
#[derive(Debug, Clone)]
struct Layout {
    width: i32,
    height: i32,
    region_w: i32,
    cells: Vec<CellKind>,
    milestone_cells: Vec<(i32, i32)>,
    doors: Vec<Door>,
    start: (i32, i32),
    battle_sequence: Vec<Action>,
    /// Palette id per region.
    palette: Vec<usize>,
}

/// Mode of the agent: the open world or the modal battle interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Overworld,
    Battle {
        intro_remaining: u32,
        progress: u32,
        cooldown: bool,
    },
}

/// Full environment state for one agent. Cheap to clone; stepping never
/// shares data between agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub pos: (i32, i32),
    pub region: usize,
    pub inventory: Vec<MilestoneId>,
    pub milestones_reached: Vec<MilestoneId>,
    pub mode: Mode,
    pub step_count: u64,
    pub fanfare_remaining: u32,
    pub fanfare_milestone: MilestoneId,
}

impl EnvState {
    /// Index of the next milestone in the chain, if any.
    pub fn next_milestone(&self) -> Option<MilestoneId> {
        let n = self.milestones_reached.len();
        (n < 12).then_some(n)
    }

    pub fn last_milestone(&self) -> Option<MilestoneId> {
        self.milestones_reached.last().copied()
    }
}

/// A single observation: a fixed-dimension feature vector that is a pure
/// function of [`EnvState`] minus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub features: Vec<f32>,
}

/// Time-ordered observation-action pairs from one agent, recorded at the
/// observation cadence ([`OBS_STRIDE`] env steps per pair).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub pairs: Vec<(Observation, Action)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn observations(&self) -> impl Iterator<Item = &Observation> {
        self.pairs.iter().map(|(o, _)| o)
    }
}

/// The environment: an immutable layout plus pure transition functions.
#[derive(Debug, Clone)]
pub struct GridQuest {
    config: EnvConfig,
    layout: Layout,
}

impl GridQuest {
    /// Build the world for a configuration. Fails on a malformed milestone
    /// chain or impossible grid.
    pub fn new(config: EnvConfig) -> Result<GridQuest> {
        config.validate()?;
        let layout = build_layout(&config);
        Ok(GridQuest { config, layout })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn obs_dim(&self) -> usize {
        self.config.obs_dim()
    }

    pub fn battle_sequence(&self) -> &[Action] {
        &self.layout.battle_sequence
    }

    pub fn milestone_cell(&self, m: MilestoneId) -> (i32, i32) {
        self.layout.milestone_cells[m]
    }

    /// The unique initial state for this configuration.
    pub fn initial_state(&self) -> EnvState {
        EnvState {
            pos: self.layout.start,
            region: self.region_of(self.layout.start),
            inventory: Vec::new(),
            milestones_reached: Vec::new(),
            mode: Mode::Overworld,
            step_count: 0,
            fanfare_remaining: 0,
            fanfare_milestone: 0,
        }
    }

    pub fn region_of(&self, pos: (i32, i32)) -> usize {
        (pos.0 / self.layout.region_w) as usize
    }

    fn cell(&self, x: i32, y: i32) -> CellKind {
        if x < 0 || y < 0 || x >= self.layout.width || y >= self.layout.height {
            return CellKind::Wall;
        }
        self.layout.cells[(y * self.layout.width + x) as usize]
    }

    fn passable(&self, x: i32, y: i32, reached: &[MilestoneId]) -> bool {
        match self.cell(x, y) {
            CellKind::Wall => false,
            CellKind::Door => {
                let door = self
                    .layout
                    .doors
                    .iter()
                    .find(|d| d.x == x && d.y == y)
                    .expect("door cell has a door record");
                match door.locked_until {
                    Some(m) => reached.contains(&m),
                    None => true,
                }
            }
            _ => true,
        }
    }

    /// Deterministic transition. Illegal moves are no-ops; milestone events
    /// are emitted at most once each.
    pub fn step(
        &self,
        state: &EnvState,
        action: Action,
    ) -> (EnvState, Observation, Vec<MilestoneId>) {
        let mut next = state.clone();
        let mut events = Vec::new();
        next.step_count = state.step_count + 1;

        if next.fanfare_remaining > 0 {
            next.fanfare_remaining -= 1;
            let obs = self.observe(&next);
            return (next, obs, events);
        }

        match next.mode {
            Mode::Battle {
                intro_remaining,
                progress,
                cooldown,
            } => {
                if intro_remaining > 0 {
                    next.mode = Mode::Battle {
                        intro_remaining: intro_remaining - 1,
                        progress,
                        cooldown,
                    };
                } else if cooldown {
                    next.mode = Mode::Battle {
                        intro_remaining: 0,
                        progress,
                        cooldown: false,
                    };
                } else if action != Action::Noop {
                    let expected = self.layout.battle_sequence[progress as usize];
                    if action == expected {
                        let progress = progress + 1;
                        if progress as usize == self.layout.battle_sequence.len() {
                            next.mode = Mode::Overworld;
                            self.fire_milestone(&mut next, &mut events);
                        } else {
                            next.mode = Mode::Battle {
                                intro_remaining: 0,
                                progress,
                                cooldown: true,
                            };
                        }
                    } else {
                        next.mode = Mode::Battle {
                            intro_remaining: 0,
                            progress: 0,
                            cooldown: true,
                        };
                    }
                }
            }
            Mode::Overworld => {
                if let Some((dx, dy)) = action.delta() {
                    let (nx, ny) = (state.pos.0 + dx, state.pos.1 + dy);
                    if self.passable(nx, ny, &state.milestones_reached) {
                        next.pos = (nx, ny);
                        next.region = self.region_of(next.pos);
                    }
                }
                if let Some(m) = next.next_milestone() {
                    if next.pos == self.layout.milestone_cells[m] {
                        match self.config.milestones[m].kind {
                            MilestoneKind::Battle => {
                                next.mode = Mode::Battle {
                                    intro_remaining: BATTLE_INTRO_STEPS,
                                    progress: 0,
                                    cooldown: false,
                                };
                            }
                            MilestoneKind::Reach => {
                                self.fire_milestone(&mut next, &mut events);
                            }
                        }
                    }
                }
            }
        }

        let obs = self.observe(&next);
        (next, obs, events)
    }

    fn fire_milestone(&self, state: &mut EnvState, events: &mut Vec<MilestoneId>) {
        let m = state.milestones_reached.len();
        state.milestones_reached.push(m);
        state.fanfare_remaining = FANFARE_STEPS;
        state.fanfare_milestone = m;
        if ITEM_MILESTONES.contains(&m) {
            state.inventory.push(m);
        }
        events.push(m);
    }

    /// Render a state to its feature vector. Pure; ignores `step_count`.
    pub fn observe(&self, state: &EnvState) -> Observation {
        let mut f = vec![0.0f32; self.obs_dim()];
        let mut at = 0;

        // View window, one-hot per cell; zeroed while the battle interface
        // covers the screen.
        let in_battle = matches!(state.mode, Mode::Battle { .. });
        let half = (VIEW_K / 2) as i32;
        for dy in -half..=half {
            for dx in -half..=half {
                if !in_battle {
                    let kind = self.cell(state.pos.0 + dx, state.pos.1 + dy);
                    f[at + kind as usize] = 1.0;
                }
                at += CELL_TYPES;
            }
        }

        // Region palette.
        let palette_id = self.layout.palette[state.region];
        f[at + palette_id] = PALETTE_SCALE;
        at += 2 * self.config.num_regions;

        // Mode flags.
        if in_battle {
            f[at + 1] = 1.0;
        } else {
            f[at] = 1.0;
        }
        at += 2;

        // Battle progress.
        if let Mode::Battle { progress, .. } = state.mode {
            f[at + progress as usize] = 1.0;
        }
        at += self.config.battle_sequence_length + 1;

        // Fanfare banner.
        if state.fanfare_remaining > 0 {
            f[at] = 1.0;
            f[at + 1 + state.fanfare_milestone] = 1.0;
        }
        at += 1 + self.config.milestones.len();

        // Inventory bitmask.
        for &item in &state.inventory {
            f[at + item] = 1.0;
        }

        Observation { features: f }
    }

    /// Scripted action toward the next milestone: breadth-first shortest path
    /// in the overworld, the correct input in battle, patience elsewhere.
    pub fn scripted_action(&self, state: &EnvState) -> Action {
        if state.fanfare_remaining > 0 {
            return Action::Noop;
        }
        match state.mode {
            Mode::Battle { progress, .. } => {
                self.layout.battle_sequence[progress as usize]
            }
            Mode::Overworld => {
                let Some(m) = state.next_milestone() else {
                    return Action::Noop;
                };
                let target = self.layout.milestone_cells[m];
                match self.bfs_step(state.pos, target, &state.milestones_reached) {
                    Some(a) => a,
                    None => Action::Noop,
                }
            }
        }
    }

    /// Expert policy: the scripted action with probability `1 - noise`, a
    /// uniform random action otherwise.
    pub fn expert_policy<R: Rng>(&self, state: &EnvState, noise: f64, rng: &mut R) -> Action {
        if noise > 0.0 && rng.gen::<f64>() < noise {
            Action::from_index(rng.gen_range(0..NUM_ACTIONS))
        } else {
            self.scripted_action(state)
        }
    }

    fn bfs_step(
        &self,
        from: (i32, i32),
        to: (i32, i32),
        reached: &[MilestoneId],
    ) -> Option<Action> {
        if from == to {
            return None;
        }
        let w = self.layout.width;
        let h = self.layout.height;
        let idx = |x: i32, y: i32| (y * w + x) as usize;
        let mut dist = vec![u32::MAX; (w * h) as usize];
        let mut queue = VecDeque::new();
        dist[idx(to.0, to.1)] = 0;
        queue.push_back(to);
        while let Some((x, y)) = queue.pop_front() {
            let d = dist[idx(x, y)];
            for (dx, dy) in [(0, -1), (0, 1), (-1, 0), (1, 0)] {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                if !self.passable(nx, ny, reached) {
                    continue;
                }
                if dist[idx(nx, ny)] == u32::MAX {
                    dist[idx(nx, ny)] = d + 1;
                    queue.push_back((nx, ny));
                }
            }
        }
        let mut best: Option<(u32, Action)> = None;
        for a in [Action::Up, Action::Down, Action::Left, Action::Right] {
            let (dx, dy) = a.delta().unwrap();
            let (nx, ny) = (from.0 + dx, from.1 + dy);
            if nx < 0 || ny < 0 || nx >= w || ny >= h {
                continue;
            }
            if !self.passable(nx, ny, reached) {
                continue;
            }
            let d = dist[idx(nx, ny)];
            if d == u32::MAX {
                continue;
            }
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, a));
            }
        }
        best.map(|(_, a)| a)
    }

    /// Obstacle cells outside region 0, used to compare layouts across seeds.
    pub fn layout_fingerprint(&self) -> Vec<(i32, i32)> {
        let mut out = Vec::new();
        for y in 0..self.layout.height {
            for x in self.layout.region_w..self.layout.width {
                if self.layout.cells[(y * self.layout.width + x) as usize] == CellKind::Wall
                    && x % self.layout.region_w != 0
                {
                    out.push((x, y));
                }
            }
        }
        out
    }

    /// Palette id rendered for a region in this world.
    pub fn palette_id(&self, region: usize) -> usize {
        self.layout.palette[region]
    }
}

/// Milestones that add an item to the inventory when they fire.
const ITEM_MILESTONES: [MilestoneId; 2] = [1, 6];

fn build_layout(config: &EnvConfig) -> Layout {
    let width = config.grid_width as i32;
    let height = config.grid_height as i32;
    let region_w = (config.grid_width / config.num_regions) as i32;
    let door_y = height / 2;
    let mut cells = vec![CellKind::Floor; (width * height) as usize];
    let idx = |x: i32, y: i32| (y * width + x) as usize;

    // Region walls with one door each. The door between the home region and
    // its neighbor stays locked until the battle milestone fires.
    let mut doors = Vec::new();
    for r in 1..config.num_regions as i32 {
        let x = r * region_w;
        for y in 0..height {
            cells[idx(x, y)] = CellKind::Wall;
        }
        cells[idx(x, door_y)] = CellKind::Door;
        doors.push(Door {
            x,
            y: door_y,
            locked_until: if r == 1 { Some(1) } else { None },
        });
    }

    let start = (2, door_y);
    let milestone_cells: Vec<(i32, i32)> = config
        .milestones
        .iter()
        .map(|m| {
            (
                m.region as i32 * region_w + m.rel_x as i32,
                m.rel_y as i32,
            )
        })
        .collect();
    for &(x, y) in &milestone_cells {
        cells[idx(x, y)] = CellKind::Milestone;
    }

    // Cells that must stay floor: start, milestones, doors and their
    // east/west approaches.
    let mut protected: Vec<(i32, i32)> = vec![start];
    protected.extend(milestone_cells.iter().copied());
    for d in &doors {
        protected.push((d.x, d.y));
        protected.push((d.x - 1, d.y));
        protected.push((d.x + 1, d.y));
    }

    // Scatter obstacles per region, keeping all protected cells mutually
    // connected. Region 0 draws from a fixed stream so the home region is
    // identical across world seeds.
    for r in 0..config.num_regions {
        let seed = if r == 0 {
            REGION0_LAYOUT_SEED
        } else {
            config.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (r as u64)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = r as i32 * region_w;
        let room_cells = (region_w - 1) * height;
        let target = (room_cells as f64 * 0.08) as usize;
        let mut placed = 0;
        let mut attempts = 0;
        while placed < target && attempts < target * 20 {
            attempts += 1;
            let x = x0 + rng.gen_range(1..region_w);
            let y = rng.gen_range(0..height);
            if x >= width || cells[idx(x, y)] != CellKind::Floor {
                continue;
            }
            if protected.contains(&(x, y)) {
                continue;
            }
            cells[idx(x, y)] = CellKind::Wall;
            if connected(&cells, width, height, &protected) {
                placed += 1;
            } else {
                cells[idx(x, y)] = CellKind::Floor;
            }
        }
    }

    // Battle input sequence, drawn without the no-op and cancel inputs.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xba77_1e5e);
    let options = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Interact,
        Action::Confirm,
    ];
    let battle_sequence = (0..config.battle_sequence_length)
        .map(|_| options[rng.gen_range(0..options.len())])
        .collect();

    let palette = (0..config.num_regions)
        .map(|r| if config.decoy_flag { config.num_regions + r } else { r })
        .collect();

    Layout {
        width,
        height,
        region_w,
        cells,
        milestone_cells,
        doors,
        start,
        battle_sequence,
        palette,
    }
}

/// True when every protected cell is reachable from the first, treating
/// doors as open.
fn connected(cells: &[CellKind], width: i32, height: i32, protected: &[(i32, i32)]) -> bool {
    let idx = |x: i32, y: i32| (y * width + x) as usize;
    let start = protected[0];
    let mut seen = vec![false; cells.len()];
    let mut queue = VecDeque::new();
    seen[idx(start.0, start.1)] = true;
    queue.push_back(start);
    while let Some((x, y)) = queue.pop_front() {
        for (dx, dy) in [(0, -1), (0, 1), (-1, 0), (1, 0)] {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= width || ny >= height {
                continue;
            }
            if seen[idx(nx, ny)] || cells[idx(nx, ny)] == CellKind::Wall {
                continue;
            }
            seen[idx(nx, ny)] = true;
            queue.push_back((nx, ny));
        }
    }
    protected.iter().all(|&(x, y)| seen[idx(x, y)])
}

/// Run the scripted expert from reset, returning the trajectory at the
/// observation cadence and the step at which each milestone fired.
pub fn run_expert<R: Rng>(
    env: &GridQuest,
    noise: f64,
    max_steps: usize,
    rng: &mut R,
) -> (Trajectory, Vec<(MilestoneId, usize)>, EnvState) {
    let mut state = env.initial_state();
    let mut traj = Trajectory::default();
    let mut milestones = Vec::new();
    for step in 0..max_steps {
        let action = env.expert_policy(&state, noise, rng);
        if step % OBS_STRIDE == 0 {
            traj.pairs.push((env.observe(&state), action));
        }
        let (next, _obs, events) = env.step(&state, action);
        for m in events {
            milestones.push((m, step));
        }
        state = next;
        if state.milestones_reached.len() == 12 && state.fanfare_remaining == 0 {
            break;
        }
    }
    (traj, milestones, state)
}
