use crate::envsuite::env::{ActionId, TaskSpec};
use crate::envsuite::layout::{Cell, MazeLayout};
use crate::error::{Error, Result};

/// Step distances to the current subgoal (the key without it, the goal
/// with it), honoring the door lock.
pub fn subgoal_distances(layout: &MazeLayout, has_key: bool) -> Vec<Option<usize>> {
    let target = if has_key { layout.goal } else { layout.key };
    // moves are reversible, so distances to the target equal distances from it
    let mut dist = vec![None; layout.width * layout.height];
    dist[layout.index(target)] = Some(0);
    let mut queue = std::collections::VecDeque::from([target]);
    while let Some(c) = queue.pop_front() {
        let d = dist[layout.index(c)].unwrap();
        for a in ActionId::all() {
            if let Some(n) = layout.neighbor(c, a.delta()) {
                if layout.passable(n, has_key) && dist[layout.index(n)].is_none() {
                    dist[layout.index(n)] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
    }
    dist
}

/// First moves of every shortest path from `cell` to the current subgoal,
/// in action-index order. Empty when `cell` already is the subgoal.
pub fn shortest_path_action(task: &TaskSpec, cell: Cell, has_key: bool) -> Result<Vec<ActionId>> {
    let layout = &task.layout;
    if !layout.in_bounds(cell) || layout.is_wall(cell) {
        return Err(Error::Oracle(format!("{cell:?} is not an open cell")));
    }
    let dist = subgoal_distances(layout, has_key);
    let here = dist[layout.index(cell)]
        .ok_or_else(|| Error::Oracle(format!("no path to the subgoal from {cell:?} (has_key = {has_key})")))?;
    Ok(ActionId::all()
        .filter(|a| {
            layout
                .neighbor(cell, a.delta())
                .filter(|&n| layout.passable(n, has_key))
                .and_then(|n| dist[layout.index(n)])
                .is_some_and(|d| d + 1 == here)
        })
        .collect())
}

/// States an agent can actually occupy mid-episode, excluding the terminal
/// goal state: `(cell, has_key)` pairs in row-major order, keyless first.
pub fn reachable_states(layout: &MazeLayout) -> Vec<(Cell, bool)> {
    let before = layout.distances_from(layout.start, false);
    let after = layout.distances_from(layout.key, true);
    let mut out = Vec::new();
    for c in layout.open_cells() {
        let i = layout.index(c);
        if before[i].is_some() && c != layout.key && c != layout.door {
            out.push((c, false));
        }
    }
    for c in layout.open_cells() {
        if after[layout.index(c)].is_some() && c != layout.goal {
            out.push((c, true));
        }
    }
    out
}
