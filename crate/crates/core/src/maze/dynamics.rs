//! Double-integrator point mass with per-axis wall stops.

use serde::{Deserialize, Serialize};

use super::layout::MazeSpec;
use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub dt: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub agent_radius: f64,
    pub max_episode_steps: usize,
    pub goal_radius: f64,
    /// Distance at which the expert advances to its next waypoint.
    pub switch_radius: f64,
    pub kp: f64,
    pub kd: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            v_max: 1.0,
            a_max: 1.0,
            agent_radius: 0.1,
            max_episode_steps: 300,
            goal_radius: 0.25,
            switch_radius: 0.3,
            kp: 10.0,
            kd: 3.0,
        }
    }
}

impl EnvConfig {
    /// Defaults with the episode cap used for each bundled maze.
    pub fn for_maze(name: &str) -> Self {
        let max_episode_steps = match name {
            "medium" => 600,
            "large" => 800,
            _ => 300,
        };
        Self {
            max_episode_steps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("v_max", self.v_max),
            ("a_max", self.a_max),
            ("goal_radius", self.goal_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..0.5).contains(&self.agent_radius) {
            return Err(Error::InvalidConfig(format!(
                "agent_radius must lie in [0, 0.5), got {}",
                self.agent_radius
            )));
        }
        if self.a_max * self.dt > self.v_max {
            return Err(Error::InvalidConfig(
                "a_max * dt must not exceed v_max".into(),
            ));
        }
        if self.max_episode_steps == 0 {
            return Err(Error::InvalidConfig("max_episode_steps must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvState {
    pub pos: Vec2,
    pub vel: Vec2,
}

impl EnvState {
    pub fn at_rest(pos: Vec2) -> Self {
        Self { pos, vel: [0.0; 2] }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            pos: [s[0], s[1]],
            vel: [s[2], s[3]],
        }
    }
}

/// Outcome of one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    /// The unresolved motion would have entered an inflated wall.
    pub collided: bool,
}

fn clamp_sym(v: f64, bound: f64) -> f64 {
    v.clamp(-bound, bound)
}

pub fn dist(a: Vec2, b: Vec2) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl MazeSpec {
    /// Wall cells (as `[x0, y0, x1, y1]` boxes inflated by `margin`) that
    /// strictly contain `p`.
    fn blocking_box(&self, p: Vec2, margin: f64) -> Option<[f64; 4]> {
        let (cx, cy) = (p[0].floor() as i64, p[1].floor() as i64);
        for row in cy - 1..=cy + 1 {
            for col in cx - 1..=cx + 1 {
                if !self.is_wall_at(row, col) {
                    continue;
                }
                let b = [
                    col as f64 - margin,
                    row as f64 - margin,
                    col as f64 + 1.0 + margin,
                    row as f64 + 1.0 + margin,
                ];
                if p[0] > b[0] && p[0] < b[2] && p[1] > b[1] && p[1] < b[3] {
                    return Some(b);
                }
            }
        }
        None
    }

    /// True when a disc of `radius` centered at `p` touches no wall interior.
    pub fn is_free(&self, p: Vec2, radius: f64) -> bool {
        p.iter().all(|v| v.is_finite()) && self.blocking_box(p, radius).is_none()
    }

    /// Euclidean distance from `p` to the nearest wall cell.
    pub fn wall_clearance(&self, p: Vec2) -> f64 {
        let (cx, cy) = (p[0].floor() as i64, p[1].floor() as i64);
        let mut best = f64::INFINITY;
        for row in cy - 2..=cy + 2 {
            for col in cx - 2..=cx + 2 {
                if !self.is_wall_at(row, col) {
                    continue;
                }
                let dx = (col as f64 - p[0]).max(p[0] - (col as f64 + 1.0)).max(0.0);
                let dy = (row as f64 - p[1]).max(p[1] - (row as f64 + 1.0)).max(0.0);
                best = best.min((dx * dx + dy * dy).sqrt());
            }
        }
        best
    }
}

/// Semi-implicit Euler step. The action is clamped to `±a_max`, the new
/// velocity to `±v_max`; a wall hit stops the blocked axis at the inflated
/// wall surface and zeroes that velocity component.
pub fn step_with_contact(maze: &MazeSpec, cfg: &EnvConfig, s: &EnvState, a: Vec2) -> StepOutcome {
    let a = [clamp_sym(a[0], cfg.a_max), clamp_sym(a[1], cfg.a_max)];
    let mut vel = [
        clamp_sym(s.vel[0] + a[0] * cfg.dt, cfg.v_max),
        clamp_sym(s.vel[1] + a[1] * cfg.dt, cfg.v_max),
    ];
    let mut pos = s.pos;
    let mut collided = false;
    for axis in 0..2 {
        let mut candidate = pos;
        candidate[axis] += vel[axis] * cfg.dt;
        match maze.blocking_box(candidate, cfg.agent_radius) {
            None => pos = candidate,
            Some(b) => {
                collided = true;
                if vel[axis] > 0.0 {
                    pos[axis] = b[axis];
                } else if vel[axis] < 0.0 {
                    pos[axis] = b[axis + 2];
                }
                vel[axis] = 0.0;
            }
        }
    }
    StepOutcome {
        state: EnvState { pos, vel },
        collided,
    }
}

pub fn step(maze: &MazeSpec, cfg: &EnvConfig, s: &EnvState, a: Vec2) -> EnvState {
    step_with_contact(maze, cfg, s, a).state
}

/// Action that turns `s_t`'s velocity into `s_next`'s, clamped to `±a_max`.
pub fn inverse_dynamics(cfg: &EnvConfig, s_t: &EnvState, s_next: &EnvState) -> Vec2 {
    [
        clamp_sym((s_next.vel[0] - s_t.vel[0]) / cfg.dt, cfg.a_max),
        clamp_sym((s_next.vel[1] - s_t.vel[1]) / cfg.dt, cfg.a_max),
    ]
}

pub fn pd_controller(cfg: &EnvConfig, s: &EnvState, waypoint: Vec2, kp: f64, kd: f64) -> Vec2 {
    [
        clamp_sym(kp * (waypoint[0] - s.pos[0]) - kd * s.vel[0], cfg.a_max),
        clamp_sym(kp * (waypoint[1] - s.pos[1]) - kd * s.vel[1], cfg.a_max),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maze::layout::{bundled, parse_maze};
    use proptest::prelude::*;

    fn open_box() -> MazeSpec {
        parse_maze("#####\n#OOO#\n#OOO#\n#OOO#\n#####").unwrap()
    }

    #[test]
    fn rest_stays_at_rest() {
        let maze = open_box();
        let cfg = EnvConfig::default();
        let s = EnvState::at_rest([2.5, 2.5]);
        assert_eq!(step(&maze, &cfg, &s, [0.0, 0.0]), s);
    }

    #[test]
    fn hand_integrated_step() {
        let maze = open_box();
        let cfg = EnvConfig::default();
        // Unit coordinates shifted by one cell so the point is in open space.
        let s = EnvState::at_rest([2.0, 2.0]);
        // dt = 0.1: v' = 0 + 1 * 0.1, p' = 2.0 + 0.1 * 0.1
        let out = step(&maze, &cfg, &s, [1.0, 0.0]);
        assert!((out.vel[0] - 0.1).abs() < 1e-15);
        assert!((out.pos[0] - 2.01).abs() < 1e-15);
        assert_eq!(out.pos[1], 2.0);
        assert_eq!(out.vel[1], 0.0);
    }

    #[test]
    fn wall_stop_is_per_axis() {
        let maze = open_box();
        let cfg = EnvConfig::default();
        // The east wall starts at x = 4; its inflated surface is 3.9.
        let surface = 4.0 - cfg.agent_radius;
        let s = EnvState {
            pos: [surface - 0.005, 2.5],
            vel: [0.1, 0.05],
        };
        let out = step_with_contact(&maze, &cfg, &s, [0.0, 0.0]);
        assert!(out.collided);
        assert_eq!(out.state.pos[0], surface);
        assert_eq!(out.state.vel[0], 0.0);
        assert_eq!(out.state.vel[1], 0.05);
        assert!((out.state.pos[1] - (2.5 + 0.05 * cfg.dt)).abs() < 1e-15);
    }

    #[test]
    fn inverse_dynamics_examples() {
        let cfg = EnvConfig {
            a_max: 5.0,
            v_max: 5.0,
            ..EnvConfig::default()
        };
        let s = EnvState::at_rest([1.5, 1.5]);
        assert_eq!(inverse_dynamics(&cfg, &s, &s), [0.0, 0.0]);
        let next = EnvState {
            pos: [1.52, 1.5],
            vel: [0.2, 0.0],
        };
        let a = inverse_dynamics(&cfg, &s, &next);
        assert!((a[0] - 2.0).abs() < 1e-12 && a[1] == 0.0);
        let tight = EnvConfig::default();
        assert_eq!(inverse_dynamics(&tight, &s, &next), [1.0, 0.0]);
    }

    #[test]
    fn pd_examples() {
        let cfg = EnvConfig {
            a_max: 10.0,
            ..EnvConfig::default()
        };
        let s = EnvState::at_rest([1.0, 1.0]);
        assert_eq!(pd_controller(&cfg, &s, [1.0, 1.0], 10.0, 3.0), [0.0, 0.0]);
        let s0 = EnvState::at_rest([0.0, 0.0]);
        assert_eq!(pd_controller(&cfg, &s0, [1.0, 0.0], 1.0, 0.0), [1.0, 0.0]);
        let small = EnvConfig {
            a_max: 0.3,
            ..EnvConfig::default()
        };
        assert_eq!(
            pd_controller(&small, &s0, [-50.0, 80.0], 10.0, 3.0),
            [-0.3, 0.3]
        );
    }

    #[test]
    fn config_validation() {
        assert!(EnvConfig::default().validate().is_ok());
        let bad = EnvConfig {
            dt: 0.0,
            ..EnvConfig::default()
        };
        assert!(bad.validate().is_err());
        let overshoot = EnvConfig {
            a_max: 20.0,
            ..EnvConfig::default()
        };
        assert!(overshoot.validate().is_err());
    }

    proptest! {
        #[test]
        fn inverse_recovers_collision_free_actions(
            x in 1.2f64..3.8, y in 1.2f64..3.8,
            vx in -0.5f64..0.5, vy in -0.5f64..0.5,
            ax in -1.0f64..1.0, ay in -1.0f64..1.0,
        ) {
            let maze = open_box();
            let cfg = EnvConfig::default();
            let s = EnvState { pos: [x, y], vel: [vx, vy] };
            let out = step_with_contact(&maze, &cfg, &s, [ax, ay]);
            prop_assume!(!out.collided);
            let a = inverse_dynamics(&cfg, &s, &out.state);
            prop_assert!((a[0] - ax).abs() <= 1e-12);
            prop_assert!((a[1] - ay).abs() <= 1e-12);
        }

        #[test]
        fn random_walks_never_enter_walls(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let maze = bundled("large").unwrap();
            let cfg = EnvConfig::default();
            let mut rng = crate::rng::Rng::seed_from_u64(seed);
            let mut s = EnvState::at_rest([1.5, 1.5]);
            for _ in 0..400 {
                let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let next = step(&maze, &cfg, &s, a);
                prop_assert_eq!(next, step(&maze, &cfg, &s, a));
                prop_assert!(maze.wall_clearance(next.pos) >= cfg.agent_radius - 1e-12);
                prop_assert!(next.vel.iter().all(|v| v.abs() <= cfg.v_max));
                s = next;
            }
        }
    }
}
