//! Self-evolution: sample synthetic trajectories with the current planner,
//! keep the dynamically consistent and rewarding ones, append them to the
//! pool and fine-tune.

pub mod discriminator;
pub mod phase;
pub mod pool;

pub use discriminator::{discriminate, DiscriminatorRule, RejectReason};
pub use phase::{
    evolve, generate_synthetic, run_phase, EvolveOutput, GenerationReport, PhaseConfig, PhaseEval,
    PhaseOutput, PhaseReport,
};
pub use pool::{executed_stats, rollout_executable, DataPool, PoolEntry, Provenance, Rollout, TrajectoryStats};
