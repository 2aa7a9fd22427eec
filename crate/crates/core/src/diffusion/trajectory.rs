//! Trajectory grids and the per-column affine normalizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STATE_DIM: usize = 4;
pub const ACTION_DIM: usize = 2;
pub const TRANSITION_DIM: usize = STATE_DIM + ACTION_DIM;

/// Dense row-major `rows x cols` grid of reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!("{rows}x{cols}"), format!("{} values", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_same_shape(&self, other: &Grid) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self * a + other * b`, elementwise.
    pub fn lin_comb(&self, a: f64, other: &Grid, b: f64) -> Result<Grid> {
        self.check_same_shape(other)?;
        Ok(Grid {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }
}

/// A `(horizon) x (state_dim + action_dim)` grid; row `t` is `[s_t | a_t]`
/// with `s_t = [x, y, vx, vy]` and `a_t = [ax, ay]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory(Grid);

impl Trajectory {
    pub fn new(grid: Grid) -> Result<Self> {
        if grid.cols() != TRANSITION_DIM {
            return Err(Error::shape(
                format!("{TRANSITION_DIM} columns"),
                format!("{} columns", grid.cols()),
            ));
        }
        if grid.rows() == 0 {
            return Err(Error::shape("at least one row", "0 rows"));
        }
        Ok(Self(grid))
    }

    pub fn zeros(horizon: usize) -> Self {
        Self(Grid::zeros(horizon, TRANSITION_DIM))
    }

    pub fn from_rows(rows: &[[f64; TRANSITION_DIM]]) -> Result<Self> {
        Self::new(Grid::from_vec(
            rows.len(),
            TRANSITION_DIM,
            rows.iter().flatten().copied().collect(),
        )?)
    }

    pub fn horizon(&self) -> usize {
        self.0.rows()
    }

    pub fn grid(&self) -> &Grid {
        &self.0
    }

    pub fn grid_mut(&mut self) -> &mut Grid {
        &mut self.0
    }

    pub fn into_grid(self) -> Grid {
        self.0
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.0.row(t)[..STATE_DIM]
    }

    pub fn action(&self, t: usize) -> &[f64] {
        &self.0.row(t)[STATE_DIM..]
    }

    pub fn position(&self, t: usize) -> [f64; 2] {
        let r = self.0.row(t);
        [r[0], r[1]]
    }

    pub fn positions(&self) -> Vec<[f64; 2]> {
        (0..self.horizon()).map(|t| self.position(t)).collect()
    }
}

/// Per-column min/max affine map onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mins: [f64; TRANSITION_DIM],
    pub maxs: [f64; TRANSITION_DIM],
}

impl Normalizer {
    pub fn new(mins: [f64; TRANSITION_DIM], maxs: [f64; TRANSITION_DIM]) -> Result<Self> {
        for c in 0..TRANSITION_DIM {
            if !(maxs[c] > mins[c]) || !mins[c].is_finite() || !maxs[c].is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "normalizer column {c}: max {} must exceed min {}",
                    maxs[c], mins[c]
                )));
            }
        }
        Ok(Self { mins, maxs })
    }

    /// Fits column ranges over every row of every trajectory. Degenerate
    /// columns are widened by one unit on each side.
    pub fn fit<'a>(trajs: impl IntoIterator<Item = &'a Trajectory>) -> Result<Self> {
        let mut mins = [f64::INFINITY; TRANSITION_DIM];
        let mut maxs = [f64::NEG_INFINITY; TRANSITION_DIM];
        for tau in trajs {
            for t in 0..tau.horizon() {
                for (c, &v) in tau.grid().row(t).iter().enumerate() {
                    mins[c] = mins[c].min(v);
                    maxs[c] = maxs[c].max(v);
                }
            }
        }
        if mins[0] == f64::INFINITY {
            return Err(Error::EmptyPool);
        }
        for c in 0..TRANSITION_DIM {
            if maxs[c] <= mins[c] {
                mins[c] -= 1.0;
                maxs[c] += 1.0;
            }
        }
        Self::new(mins, maxs)
    }

    /// Derivative of the raw coordinate with respect to the normalized one.
    pub fn half_range(&self, c: usize) -> f64 {
        0.5 * (self.maxs[c] - self.mins[c])
    }

    pub fn normalize_value(&self, c: usize, v: f64) -> f64 {
        2.0 * (v - self.mins[c]) / (self.maxs[c] - self.mins[c]) - 1.0
    }

    pub fn denormalize_value(&self, c: usize, v: f64) -> f64 {
        self.mins[c] + (v + 1.0) * self.half_range(c)
    }

    pub fn normalize(&self, tau: &Trajectory) -> Trajectory {
        let g = tau.grid();
        Trajectory(Grid::from_fn(g.rows(), g.cols(), |r, c| {
            self.normalize_value(c, g.get(r, c))
        }))
    }

    pub fn denormalize(&self, tau: &Trajectory) -> Trajectory {
        let g = tau.grid();
        Trajectory(Grid::from_fn(g.rows(), g.cols(), |r, c| {
            self.denormalize_value(c, g.get(r, c))
        }))
    }

    /// Maps a raw-coordinate gradient to normalized coordinates (chain rule
    /// through the affine map).
    pub fn gradient_to_normalized(&self, g: &Grid) -> Grid {
        Grid::from_fn(g.rows(), g.cols(), |r, c| g.get(r, c) * self.half_range(c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trajectory_shape_is_enforced() {
        assert!(Trajectory::new(Grid::zeros(3, 5)).is_err());
        assert!(Trajectory::new(Grid::zeros(0, 6)).is_err());
        assert_eq!(Trajectory::zeros(4).horizon(), 4);
    }

    #[test]
    fn fit_maps_extremes_to_unit_box() {
        let a = Trajectory::from_rows(&[[1.0, 2.0, -0.5, 0.0, 1.0, -1.0]]).unwrap();
        let b = Trajectory::from_rows(&[[3.0, 5.0, 0.5, 0.0, -1.0, 1.0]]).unwrap();
        let norm = Normalizer::fit([&a, &b]).unwrap();
        let na = norm.normalize(&a);
        assert_eq!(na.grid().row(0)[0], -1.0);
        assert_eq!(norm.normalize(&b).grid().row(0)[1], 1.0);
        // The constant column is widened rather than rejected.
        assert_eq!(na.grid().row(0)[3], 0.0);
        assert!(Normalizer::new([0.0; 6], [0.0; 6]).is_err());
    }

    proptest! {
        #[test]
        fn normalizer_round_trip(vals in proptest::collection::vec(-20.0f64..20.0, 6),
                                 lo in -5.0f64..0.0, span in 0.5f64..10.0) {
            let norm = Normalizer::new([lo; 6], [lo + span; 6]).unwrap();
            let row: [f64; 6] = vals.clone().try_into().unwrap();
            let tau = Trajectory::from_rows(&[row]).unwrap();
            let back = norm.denormalize(&norm.normalize(&tau));
            for c in 0..6 {
                prop_assert!((back.grid().get(0, c) - vals[c]).abs() <= 1e-12);
            }
        }
    }
}
