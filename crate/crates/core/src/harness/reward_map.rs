//! Per-cell knowledge rewards and their agreement with shortest paths.

use serde::Serialize;

use crate::envsuite::{reachable_states, shortest_path_action, ActionId, TaskSpec, ACTION_COUNT};
use crate::error::Result;
use crate::{Cra, Observation};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellRewards {
    pub x: usize,
    pub y: usize,
    pub rewards: [f64; ACTION_COUNT],
    /// Lowest index among the maximal rewards.
    pub argmax: usize,
    pub argmax_name: &'static str,
    /// Shortest-path first moves; empty when the cell is unreachable with
    /// this key flag.
    pub oracle: Vec<usize>,
    pub agrees: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Agreement {
    pub agree: usize,
    pub total: usize,
    pub rate: f64,
}

impl Agreement {
    fn new(agree: usize, total: usize) -> Self {
        let rate = if total == 0 { 0.0 } else { agree as f64 / total as f64 };
        Agreement { agree, total, rate }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RewardMap {
    pub task: String,
    pub width: usize,
    pub height: usize,
    pub has_key: bool,
    pub layout: Vec<String>,
    pub cells: Vec<CellRewards>,
    pub agreement: Agreement,
}

impl RewardMap {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reward map serializes")
    }
}

/// Mean-mode knowledge rewards for every open cell under `has_key`, scored
/// against the shortest-path oracle on the states an agent can occupy.
pub fn reward_map(cra: &Cra, task: &TaskSpec, has_key: bool) -> Result<RewardMap> {
    let layout = &task.layout;
    let reachable: Vec<_> =
        reachable_states(layout).into_iter().filter(|&(_, k)| k == has_key).map(|(c, _)| c).collect();
    let mut cells = Vec::new();
    let (mut agree, mut total) = (0, 0);
    for cell in layout.open_cells() {
        let obs: Observation = Observation::encode(layout, cell, has_key);
        let mut rewards = [0.0; ACTION_COUNT];
        for a in ActionId::all() {
            rewards[a.0] = cra.mean_reward(&obs, a)? as f64;
        }
        let argmax = (1..ACTION_COUNT).fold(0, |b, i| if rewards[i] > rewards[b] { i } else { b });
        let (oracle, agrees) = if reachable.contains(&cell) {
            let best: Vec<usize> = shortest_path_action(task, cell, has_key)?.iter().map(|a| a.0).collect();
            let ok = best.contains(&argmax);
            total += 1;
            agree += ok as usize;
            (best, Some(ok))
        } else {
            (Vec::new(), None)
        };
        cells.push(CellRewards {
            x: cell.0,
            y: cell.1,
            rewards,
            argmax,
            argmax_name: ActionId(argmax).name(),
            oracle,
            agrees,
        });
    }
    Ok(RewardMap {
        task: task.name.clone(),
        width: layout.width,
        height: layout.height,
        has_key,
        layout: layout.to_string().lines().map(str::to_string).collect(),
        cells,
        agreement: Agreement::new(agree, total),
    })
}

/// Agreement rate over both key flags of each task, averaged over tasks.
pub fn fidelity(cra: &Cra, tasks: &[TaskSpec]) -> Result<f64> {
    let mut sum = 0.0;
    for t in tasks {
        let a = reward_map(cra, t, false)?.agreement;
        let b = reward_map(cra, t, true)?.agreement;
        sum += Agreement::new(a.agree + b.agree, a.total + b.total).rate;
    }
    Ok(sum / tasks.len().max(1) as f64)
}
