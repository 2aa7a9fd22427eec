//! Task suites: hard long-path cases, stratified random tasks and coin
//! detour tasks.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::maze::{CellIdx, MazeSpec, TaskSpec};
use crate::rng;

/// Every ordered pair of distinct open cells with its BFS length, sorted by
/// length (descending) and then by the cells.
pub fn ranked_pairs(maze: &MazeSpec) -> Vec<(CellIdx, CellIdx, usize)> {
    let open = maze.open_cells();
    let mut pairs = Vec::new();
    for &a in &open {
        let d = maze.bfs_distances(a);
        for &b in &open {
            let l = d[b.0 * maze.cols() + b.1];
            if a != b && l != usize::MAX {
                pairs.push((a, b, l));
            }
        }
    }
    pairs.sort_by(|x, y| y.2.cmp(&x.2).then((x.0, x.1).cmp(&(y.0, y.1))));
    pairs
}

/// BFS length at the 90th percentile over ordered free-cell pairs.
pub fn top_decile_threshold(maze: &MazeSpec) -> usize {
    let mut lens: Vec<usize> = ranked_pairs(maze).iter().map(|p| p.2).collect();
    lens.sort_unstable();
    lens[((lens.len() - 1) as f64 * 0.9).floor() as usize]
}

/// The showcase long-path task of a bundled maze, as `(start, goal)` cells.
/// Coordinates in the usual figures are `(x, y)` = `(column, row)`.
pub fn named_hard_pair(maze_name: &str) -> Option<(CellIdx, CellIdx)> {
    match maze_name {
        "medium" => Some(((1, 1), (6, 6))),
        "large" => Some(((7, 1), (7, 9))),
        _ => None,
    }
}

/// The named long-path task (if the maze has one) followed by every pair
/// whose BFS length reaches the 90th percentile, hardest first.
pub fn hard_case_suite(maze: &MazeSpec) -> Result<Vec<TaskSpec>> {
    if !matches!(maze.name.as_str(), "umaze" | "medium" | "large") {
        return Err(Error::InvalidLayout(format!(
            "no hard-case suite for non-bundled maze `{}`",
            maze.name
        )));
    }
    let threshold = top_decile_threshold(maze);
    let named = named_hard_pair(&maze.name);
    let mut out: Vec<TaskSpec> = named.iter().map(|&(a, b)| TaskSpec::between_cells(a, b)).collect();
    out.extend(
        ranked_pairs(maze)
            .into_iter()
            .filter(|&(a, b, l)| l >= threshold && Some((a, b)) != named)
            .map(|(a, b, _)| TaskSpec::between_cells(a, b)),
    );
    Ok(out)
}

/// `n` items spread evenly over `items`, always including the first.
pub fn spread<T: Clone>(items: &[T], n: usize) -> Vec<T> {
    if n >= items.len() {
        return items.to_vec();
    }
    (0..n).map(|k| items[k * items.len() / n].clone()).collect()
}

/// A point in `cell`, jittered by at most `jitter` from its center.
fn jittered(cell: CellIdx, jitter: f64, r: &mut rng::Rng) -> [f64; 2] {
    let c = MazeSpec::cell_center(cell);
    if jitter == 0.0 {
        return c;
    }
    [c[0] + r.random_range(-jitter..jitter), c[1] + r.random_range(-jitter..jitter)]
}

/// `n` random tasks stratified by BFS length: the ordered cell pairs are cut
/// into short, medium and long terciles and the tasks cycle through them.
pub fn stratified_tasks(maze: &MazeSpec, n: usize, seed: u64) -> Vec<TaskSpec> {
    let mut pairs = ranked_pairs(maze);
    pairs.reverse();
    let third = pairs.len().div_ceil(3);
    let strata: Vec<&[(CellIdx, CellIdx, usize)]> = pairs.chunks(third).collect();
    let mut r = rng::stream(seed, "tasks", 0);
    (0..n)
        .map(|k| {
            let s = strata[k % strata.len()];
            let (a, b, _) = s[r.random_range(0..s.len())];
            TaskSpec::new(jittered(a, 0.2, &mut r), jittered(b, 0.2, &mut r))
        })
        .collect()
}

/// Center of the cell at figure coordinates `(x, y)`, i.e. column `x` and
/// row `y`.
pub fn figure_point(x: usize, y: usize) -> [f64; 2] {
    MazeSpec::cell_center((y, x))
}

/// Tasks whose shortest cell path avoids `coin_cell` but for which a detour
/// through it costs between 1 and `max_extra` additional moves. Start and
/// goal cells are sampled from the qualifying pairs and jittered within
/// their cells.
pub fn coin_detour_tasks(
    maze: &MazeSpec,
    coin_cell: CellIdx,
    max_extra: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<TaskSpec>> {
    if !maze.is_open(coin_cell.0, coin_cell.1) {
        return Err(Error::InvalidTask(format!("coin cell {coin_cell:?} is a wall")));
    }
    let from_coin = maze.bfs_distances(coin_cell);
    let at = |d: &[usize], c: CellIdx| d[c.0 * maze.cols() + c.1];
    let mut pairs = Vec::new();
    for (a, b, l) in ranked_pairs(maze) {
        if a == coin_cell || b == coin_cell {
            continue;
        }
        let path = maze.shortest_path(a, b)?;
        if path.contains(&coin_cell) {
            continue;
        }
        let detour = at(&from_coin, a) + at(&from_coin, b);
        if detour > l && detour - l <= max_extra {
            pairs.push((a, b));
        }
    }
    if pairs.is_empty() {
        return Err(Error::InvalidTask(format!(
            "no task detours through {coin_cell:?} within {max_extra} extra moves"
        )));
    }
    pairs.sort();
    let coin = MazeSpec::cell_center(coin_cell);
    let mut r = rng::stream(seed, "coin_tasks", 0);
    Ok((0..n)
        .map(|k| {
            let (a, b) = pairs[k % pairs.len()];
            let jitter = if k < pairs.len() { 0.0 } else { 0.2 };
            TaskSpec::new(jittered(a, jitter, &mut r), jittered(b, jitter, &mut r)).with_coin(coin)
        })
        .collect())
}
