//! Key-door gridworld mazes sharing one observation and action shape.
//!
//! The agent must step onto the key, pass the door (impassable without the
//! key) and reach the goal; only that final event pays reward 1.

pub mod env;
pub mod layout;
pub mod oracle;

use std::path::Path;

pub use env::{ActionId, MazeEnv, Observation, StepResult, TaskSpec, ACTION_COUNT, DEFAULT_MAX_STEPS, OBS_DIM};
pub use layout::{Cell, MazeLayout};
pub use oracle::{reachable_states, shortest_path_action};

use crate::error::{Error, Result};

/// Unit moves indexed by action: up, right, down, left.
pub const DIRECTIONS: [(isize, isize); ACTION_COUNT] = [(0, -1), (1, 0), (0, 1), (-1, 0)];

/// Tasks with uniform grid dimensions, hence uniform observation shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Suite {
    tasks: Vec<TaskSpec>,
}

impl Suite {
    pub fn new(tasks: Vec<TaskSpec>) -> Result<Self> {
        let first = tasks.first().ok_or_else(|| Error::Config("suite needs at least one task".into()))?;
        let (w, h) = (first.layout.width, first.layout.height);
        if let Some(t) = tasks.iter().find(|t| (t.layout.width, t.layout.height) != (w, h)) {
            return Err(Error::Config(format!(
                "task {:?} is {}x{}, suite shape is {w}x{h}",
                t.name, t.layout.width, t.layout.height
            )));
        }
        Ok(Suite { tasks })
    }

    /// Loads layout files, naming each task after its file stem.
    pub fn load<P: AsRef<Path>>(paths: &[P], max_steps: usize) -> Result<Self> {
        let tasks = paths
            .iter()
            .map(|p| load_task(p.as_ref(), max_steps))
            .collect::<Result<Vec<_>>>()?;
        Suite::new(tasks)
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    pub fn action_count(&self) -> usize {
        ACTION_COUNT
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        (self.tasks[0].layout.width, self.tasks[0].layout.height)
    }
}

pub fn load_task(path: &Path, max_steps: usize) -> Result<TaskSpec> {
    let layout = MazeLayout::load(path)?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "task".into());
    Ok(TaskSpec { name, layout, max_steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mismatched_grid_sizes_rejected() {
        let a = MazeLayout::parse("maze v1 5 3\n#####\n#SKDG\n#####\n").unwrap();
        let b = MazeLayout::parse("maze v1 6 3\n######\n#.SKDG\n######\n").unwrap();
        assert!(Suite::new(vec![TaskSpec::new("a", a.clone()), TaskSpec::new("a2", a.clone())]).is_ok());
        assert!(Suite::new(vec![TaskSpec::new("a", a), TaskSpec::new("b", b)]).is_err());
        assert!(Suite::new(vec![]).is_err());
    }
}
