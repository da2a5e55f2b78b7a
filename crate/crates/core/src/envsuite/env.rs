use crate::envsuite::layout::{Cell, MazeLayout};
use crate::envsuite::DIRECTIONS;
use crate::error::{Error, Result};
use crate::float::Float;

/// Number of movement actions shared by every task.
pub const ACTION_COUNT: usize = 4;
/// Length of the observation vector shared by every task.
pub const OBS_DIM: usize = 9;
pub const DEFAULT_MAX_STEPS: usize = 200;

/// Movement action: 0 up, 1 right, 2 down, 3 left.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(pub usize);

impl ActionId {
    pub const UP: ActionId = ActionId(0);
    pub const RIGHT: ActionId = ActionId(1);
    pub const DOWN: ActionId = ActionId(2);
    pub const LEFT: ActionId = ActionId(3);

    pub fn all() -> impl Iterator<Item = ActionId> {
        (0..ACTION_COUNT).map(ActionId)
    }

    pub fn delta(self) -> (isize, isize) {
        DIRECTIONS[self.0]
    }

    pub fn name(self) -> &'static str {
        ["up", "right", "down", "left"][self.0]
    }

    /// One-hot encoding of length [`ACTION_COUNT`].
    pub fn one_hot<T: Float>(self) -> [T; ACTION_COUNT] {
        let mut v = [T::zero(); ACTION_COUNT];
        v[self.0] = T::one();
        v
    }
}

/// Feature vector `[agent_x, agent_y, has_key, key_x, key_y, door_x, door_y, goal_x, goal_y]`
/// with coordinates scaled into `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation<T>(pub Vec<T>);

impl<T: Float> Observation<T> {
    pub fn encode(layout: &MazeLayout, agent: Cell, has_key: bool) -> Self {
        let sx = T::of((layout.width - 1) as f64);
        let sy = T::of((layout.height - 1) as f64);
        let xy = |(x, y): Cell| [T::of(x as f64) / sx, T::of(y as f64) / sy];
        let mut f = Vec::with_capacity(OBS_DIM);
        f.extend(xy(agent));
        f.push(if has_key { T::one() } else { T::zero() });
        f.extend(xy(layout.key));
        f.extend(xy(layout.door));
        f.extend(xy(layout.goal));
        Observation(f)
    }

    pub fn features(&self) -> &[T] {
        &self.0
    }

    pub fn has_key(&self) -> bool {
        self.0[2] > T::of(0.5)
    }
}

/// A maze together with its episode horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub name: String,
    pub layout: MazeLayout,
    pub max_steps: usize,
}

impl TaskSpec {
    pub fn new(name: impl Into<String>, layout: MazeLayout) -> Self {
        TaskSpec { name: name.into(), layout, max_steps: DEFAULT_MAX_STEPS }
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult<T> {
    pub next_obs: Observation<T>,
    pub reward: T,
    pub done: bool,
    pub truncated: bool,
}

/// One episode-running instance of a task. Movement is deterministic.
#[derive(Clone, Debug)]
pub struct MazeEnv {
    task: TaskSpec,
    agent: Cell,
    has_key: bool,
    steps: usize,
    finished: bool,
}

impl MazeEnv {
    pub fn new(task: TaskSpec) -> Result<Self> {
        if task.max_steps == 0 {
            return Err(Error::Config("episode step limit must be >= 1".into()));
        }
        let agent = task.layout.start;
        Ok(MazeEnv { task, agent, has_key: false, steps: 0, finished: true })
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn agent(&self) -> Cell {
        self.agent
    }

    pub fn has_key(&self) -> bool {
        self.has_key
    }

    /// Starts a new episode. Dynamics carry no randomness, so `seed` only
    /// exists to keep the episode interface uniform.
    pub fn reset<T: Float>(&mut self, _seed: u64) -> Observation<T> {
        self.agent = self.task.layout.start;
        self.has_key = false;
        self.steps = 0;
        self.finished = false;
        self.observe()
    }

    pub fn observe<T: Float>(&self) -> Observation<T> {
        Observation::encode(&self.task.layout, self.agent, self.has_key)
    }

    pub fn step<T: Float>(&mut self, action: ActionId) -> Result<StepResult<T>> {
        if self.finished {
            return Err(Error::Usage("step called on a finished episode; reset first".into()));
        }
        if action.0 >= ACTION_COUNT {
            return Err(Error::Usage(format!("action {} outside 0..{ACTION_COUNT}", action.0)));
        }
        let layout = &self.task.layout;
        if let Some(next) = layout.neighbor(self.agent, action.delta()) {
            if layout.passable(next, self.has_key) {
                self.agent = next;
            }
        }
        if self.agent == layout.key {
            self.has_key = true;
        }
        self.steps += 1;
        let done = self.has_key && self.agent == layout.goal;
        let truncated = !done && self.steps >= self.task.max_steps;
        self.finished = done || truncated;
        Ok(StepResult {
            next_obs: self.observe(),
            reward: if done { T::one() } else { T::zero() },
            done,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corridor() -> TaskSpec {
        // S . K . D . G
        let layout = MazeLayout::parse("maze v1 7 3\n#######\nS.K.D.G\n#######\n").unwrap();
        TaskSpec::new("corridor", layout)
    }

    #[test]
    fn reset_places_agent_at_start() {
        let mut env = MazeEnv::new(corridor()).unwrap();
        let o: Observation<f64> = env.reset(0);
        assert_eq!(o.0[0], 0.0);
        assert_eq!(o.0[1], 0.5);
        assert_eq!(o.0[2], 0.0);
        assert_eq!(o.0.len(), OBS_DIM);
        let again: Observation<f64> = env.reset(0);
        assert_eq!(o, again);
    }

    #[test]
    fn picking_up_key_gives_no_reward() {
        let mut env = MazeEnv::new(corridor()).unwrap();
        env.reset::<f64>(0);
        env.step::<f64>(ActionId::RIGHT).unwrap();
        let r = env.step::<f64>(ActionId::RIGHT).unwrap();
        assert!(r.next_obs.has_key());
        assert_eq!(r.reward, 0.0);
        assert!(!r.done);
    }

    #[test]
    fn locked_door_blocks_and_walls_block() {
        let layout = MazeLayout::parse("maze v1 5 4\n#####\n#K..#\n#SDG#\n#####\n").unwrap();
        let mut env = MazeEnv::new(TaskSpec::new("t", layout)).unwrap();
        env.reset::<f64>(0);
        let r = env.step::<f64>(ActionId::RIGHT).unwrap();
        assert_eq!(env.agent(), (1, 2));
        assert_eq!(r.reward, 0.0);
        env.step::<f64>(ActionId::LEFT).unwrap();
        assert_eq!(env.agent(), (1, 2));
    }

    #[test]
    fn reaching_goal_with_key_terminates() {
        let mut env = MazeEnv::new(corridor()).unwrap();
        env.reset::<f64>(0);
        let mut last = None;
        for _ in 0..6 {
            last = Some(env.step::<f64>(ActionId::RIGHT).unwrap());
        }
        let r = last.unwrap();
        assert_eq!(r.reward, 1.0);
        assert!(r.done && !r.truncated);
        assert!(matches!(env.step::<f64>(ActionId::LEFT), Err(Error::Usage(_))));
    }

    #[test]
    fn truncation_after_step_limit() {
        let mut env = MazeEnv::new(corridor().with_max_steps(3)).unwrap();
        env.reset::<f64>(0);
        for i in 0..3 {
            let r = env.step::<f64>(ActionId::LEFT).unwrap();
            assert_eq!(r.truncated, i == 2);
            assert_eq!(r.reward, 0.0);
            assert!(!r.done);
        }
        assert!(env.step::<f64>(ActionId::LEFT).is_err());
    }

    #[test]
    fn step_before_reset_is_usage_error() {
        let mut env = MazeEnv::new(corridor()).unwrap();
        assert!(matches!(env.step::<f32>(ActionId::UP), Err(Error::Usage(_))));
    }
}
