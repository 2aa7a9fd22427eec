//! Wall/open grids parsed from `#`/`O` strings.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Five-by-five U-shaped corridor.
pub const UMAZE: &str = "#####\n#OOO#\n###O#\n#OOO#\n#####";

/// Eight-by-eight medium maze.
pub const MEDIUM_MAZE: &str = "########\n\
#OO##OO#\n\
#OO#OOO#\n\
##OOO###\n\
#OO#OOO#\n\
#O#OO#O#\n\
#OOO#OO#\n\
########";

/// Nine-by-twelve large maze, written in the inline `\\`-separated form.
pub const LARGE_MAZE: &str = "############\\\\#OOOO#OOOOO#\\\\#O##O#O#O#O#\\\\#OOOOOO#OOO#\\\\\
#O####O###O#\\\\#OO#O#OOOOO#\\\\##O#O#O#O###\\\\#OO#OOO#OOO#\\\\############";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cell {
    Wall,
    Open,
}

/// Grid cell index as `(row, col)`.
pub type CellIdx = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MazeSpec {
    pub name: String,
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
}

impl MazeSpec {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.cols + col]
    }

    pub fn is_open(&self, row: usize, col: usize) -> bool {
        row < self.rows && col < self.cols && self.cell(row, col) == Cell::Open
    }

    /// Signed lookup; anything outside the grid counts as wall.
    pub fn is_wall_at(&self, row: i64, col: i64) -> bool {
        if row < 0 || col < 0 {
            return true;
        }
        !self.is_open(row as usize, col as usize)
    }

    pub fn open_cells(&self) -> Vec<CellIdx> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .filter(|&(r, c)| self.is_open(r, c))
            .collect()
    }

    /// Continuous coordinates of a cell center: x grows with the column,
    /// y with the row.
    pub fn cell_center((row, col): CellIdx) -> [f64; 2] {
        [col as f64 + 0.5, row as f64 + 0.5]
    }

    /// Cell containing a continuous point.
    pub fn cell_of(&self, p: [f64; 2]) -> Option<CellIdx> {
        if p[0] < 0.0 || p[1] < 0.0 {
            return None;
        }
        let (row, col) = (p[1].floor() as usize, p[0].floor() as usize);
        (row < self.rows && col < self.cols).then_some((row, col))
    }

    fn neighbors(&self, (r, c): CellIdx) -> impl Iterator<Item = CellIdx> + '_ {
        // N, E, S, W
        const DIRS: [(i64, i64); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];
        DIRS.iter().filter_map(move |&(dr, dc)| {
            let (nr, nc) = (r as i64 + dr, c as i64 + dc);
            (!self.is_wall_at(nr, nc)).then_some((nr as usize, nc as usize))
        })
    }

    /// Breadth-first distances (in cell moves) from `from` to every cell;
    /// `usize::MAX` marks unreachable cells.
    pub fn bfs_distances(&self, from: CellIdx) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.rows * self.cols];
        if !self.is_open(from.0, from.1) {
            return dist;
        }
        dist[from.0 * self.cols + from.1] = 0;
        let mut queue = VecDeque::from([from]);
        while let Some(cur) = queue.pop_front() {
            let d = dist[cur.0 * self.cols + cur.1];
            for nb in self.neighbors(cur) {
                let slot = &mut dist[nb.0 * self.cols + nb.1];
                if *slot == usize::MAX {
                    *slot = d + 1;
                    queue.push_back(nb);
                }
            }
        }
        dist
    }

    pub fn bfs_length(&self, from: CellIdx, to: CellIdx) -> Option<usize> {
        let d = self.bfs_distances(from)[to.0 * self.cols + to.1];
        (d != usize::MAX).then_some(d)
    }

    /// Shortest 4-connected cell path including both endpoints. Ties are
    /// broken by the fixed N, E, S, W expansion order.
    pub fn shortest_path(&self, from: CellIdx, to: CellIdx) -> Result<Vec<CellIdx>> {
        if !self.is_open(from.0, from.1) || !self.is_open(to.0, to.1) {
            return Err(Error::InfeasibleTask { from, to });
        }
        let mut parent: Vec<Option<CellIdx>> = vec![None; self.rows * self.cols];
        let mut seen = vec![false; self.rows * self.cols];
        seen[from.0 * self.cols + from.1] = true;
        let mut queue = VecDeque::from([from]);
        while let Some(cur) = queue.pop_front() {
            if cur == to {
                break;
            }
            for nb in self.neighbors(cur) {
                let k = nb.0 * self.cols + nb.1;
                if !seen[k] {
                    seen[k] = true;
                    parent[k] = Some(cur);
                    queue.push_back(nb);
                }
            }
        }
        if !seen[to.0 * self.cols + to.1] {
            return Err(Error::InfeasibleTask { from, to });
        }
        let mut path = vec![to];
        let mut cur = to;
        while cur != from {
            cur = parent[cur.0 * self.cols + cur.1].expect("visited cell has a parent");
            path.push(cur);
        }
        path.reverse();
        Ok(path)
    }

    fn validate(&self) -> Result<()> {
        if self.rows < 3 || self.cols < 3 {
            return Err(Error::InvalidLayout(format!(
                "maze must be at least 3x3, got {}x{}",
                self.rows, self.cols
            )));
        }
        for r in 0..self.rows {
            for c in 0..self.cols {
                let border = r == 0 || c == 0 || r + 1 == self.rows || c + 1 == self.cols;
                if border && self.is_open(r, c) {
                    return Err(Error::InvalidLayout(format!(
                        "border cell ({r}, {c}) is open"
                    )));
                }
            }
        }
        let open = self.open_cells();
        if open.len() < 2 {
            return Err(Error::InvalidLayout(format!(
                "need at least 2 open cells, found {}",
                open.len()
            )));
        }
        let dist = self.bfs_distances(open[0]);
        if let Some(&(r, c)) = open
            .iter()
            .find(|&&(r, c)| dist[r * self.cols + c] == usize::MAX)
        {
            return Err(Error::InvalidLayout(format!(
                "open cell ({r}, {c}) is not 4-connected to ({}, {})",
                open[0].0, open[0].1
            )));
        }
        Ok(())
    }
}

impl fmt::Display for MazeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            if r > 0 {
                writeln!(f)?;
            }
            for c in 0..self.cols {
                f.write_str(if self.is_open(r, c) { "O" } else { "#" })?;
            }
        }
        Ok(())
    }
}

/// Parses a maze from newline-separated rows or the inline form where rows
/// are joined by a doubled backslash. Surrounding quotes, `+` concatenation
/// and whitespace are ignored.
pub fn parse_maze(text: &str) -> Result<MazeSpec> {
    parse_named(text, "custom")
}

pub fn parse_named(text: &str, name: &str) -> Result<MazeSpec> {
    let normalized = text.replace("\\\\", "\n").replace('\\', "\n");
    let rows: Vec<Vec<Cell>> = normalized
        .lines()
        .map(|line| line.trim().trim_matches(|c| c == '"' || c == '+').trim())
        .filter(|line| !line.is_empty())
        .map(|line| {
            line.chars()
                .map(|ch| match ch {
                    '#' => Ok(Cell::Wall),
                    'O' => Ok(Cell::Open),
                    other => Err(Error::MalformedMaze(format!("illegal character {other:?}"))),
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(Error::MalformedMaze("no rows".into()));
    }
    let cols = rows[0].len();
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(Error::MalformedMaze(format!(
            "ragged rows: row {i} has {} columns, expected {cols}",
            row.len()
        )));
    }
    let maze = MazeSpec {
        name: name.to_string(),
        rows: rows.len(),
        cols,
        cells: rows.into_iter().flatten().collect(),
    };
    maze.validate()?;
    Ok(maze)
}

/// Bundled layouts by name: `umaze`, `medium`, `large`.
pub fn bundled(name: &str) -> Result<MazeSpec> {
    let text = match name {
        "umaze" => UMAZE,
        "medium" => MEDIUM_MAZE,
        "large" => LARGE_MAZE,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown bundled maze {other:?} (expected umaze, medium or large)"
            )))
        }
    };
    parse_named(text, name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_maze_parses_from_inline_form() {
        let maze = bundled("large").unwrap();
        assert_eq!((maze.rows(), maze.cols()), (9, 12));
        for c in 0..12 {
            assert_eq!(maze.cell(0, c), Cell::Wall);
            assert_eq!(maze.cell(8, c), Cell::Wall);
        }
        for r in 0..9 {
            assert_eq!(maze.cell(r, 0), Cell::Wall);
            assert_eq!(maze.cell(r, 11), Cell::Wall);
        }
    }

    #[test]
    fn bundled_sizes() {
        let u = bundled("umaze").unwrap();
        assert_eq!((u.rows(), u.cols()), (5, 5));
        let m = bundled("medium").unwrap();
        assert_eq!((m.rows(), m.cols()), (8, 8));
    }

    #[test]
    fn minimal_maze() {
        let maze = parse_maze("####\n#OO#\n####").unwrap();
        assert_eq!((maze.rows(), maze.cols()), (3, 4));
        assert_eq!(maze.open_cells().len(), 2);
    }

    #[test]
    fn rejects_illegal_character() {
        assert!(matches!(
            parse_maze("####\n#OX#\n####"),
            Err(Error::MalformedMaze(_))
        ));
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(matches!(
            parse_maze("####\n#OO##\n####"),
            Err(Error::MalformedMaze(_))
        ));
    }

    #[test]
    fn rejects_open_border_and_disconnected_regions() {
        assert!(matches!(
            parse_maze("#O##\n#OO#\n####"),
            Err(Error::InvalidLayout(_))
        ));
        assert!(matches!(
            parse_maze("#####\n#O#O#\n#####"),
            Err(Error::InvalidLayout(_))
        ));
        assert!(matches!(
            parse_maze("####\n#O##\n####"),
            Err(Error::InvalidLayout(_))
        ));
    }

    #[test]
    fn display_round_trips() {
        let maze = bundled("medium").unwrap();
        assert_eq!(parse_maze(&maze.to_string()).unwrap().to_string(), maze.to_string());
    }

    #[test]
    fn shortest_path_follows_the_u() {
        let maze = bundled("umaze").unwrap();
        let path = maze.shortest_path((1, 1), (3, 1)).unwrap();
        assert_eq!(
            path,
            vec![(1, 1), (1, 2), (1, 3), (2, 3), (3, 3), (3, 2), (3, 1)]
        );
        assert_eq!(maze.bfs_length((1, 1), (3, 1)), Some(6));
    }
}
