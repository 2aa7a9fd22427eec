//! Point-mass maze world: layouts, dynamics and the expert data source.

pub mod dynamics;
pub mod expert;
pub mod layout;

pub use dynamics::{
    dist, inverse_dynamics, pd_controller, step, step_with_contact, EnvConfig, EnvState,
    StepOutcome, Vec2,
};
pub use expert::{generate_expert, pad_to_horizon, random_free_point, run_expert, Episode, TaskSpec};
pub use layout::{bundled, parse_maze, parse_named, Cell, CellIdx, MazeSpec};
