//! Model checkpoints and pool files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::container::{decode, encode, read_file, split_payload, write_file};
use crate::denoiser::{Architecture, DenoiserParams, TrainConfig};
use crate::diffusion::{NoiseSchedule, Normalizer, ScheduleKind, Trajectory, TRANSITION_DIM};
use crate::error::{Error, Result};
use crate::evolve::{DataPool, PoolEntry, Provenance, TrajectoryStats};
use crate::maze::TaskSpec;
use crate::planner::Planner;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ADPLCKPT";
pub const POOL_MAGIC: &[u8; 8] = b"ADPLPOOL";
pub const FORMAT_VERSION: u32 = 1;

/// A trained planner plus the provenance needed to continue from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub planner: Planner,
    pub maze: String,
    pub train: TrainConfig,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    maze: String,
    arch: Architecture,
    phase_tag: u32,
    horizon: usize,
    schedule_kind: ScheduleKind,
    n_steps: usize,
    train: TrainConfig,
    /// Payload section lengths: params, betas, normalizer mins, maxs.
    sections: [usize; 4],
}

pub fn checkpoint_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let p = &ckpt.planner;
    let header = CheckpointHeader {
        maze: ckpt.maze.clone(),
        arch: p.params.arch,
        phase_tag: p.params.phase_tag,
        horizon: p.horizon,
        schedule_kind: p.schedule.kind,
        n_steps: p.schedule.n_steps,
        train: ckpt.train.clone(),
        sections: [p.params.len(), p.schedule.betas.len(), TRANSITION_DIM, TRANSITION_DIM],
    };
    let mut payload = p.params.data.clone();
    payload.extend_from_slice(&p.schedule.betas);
    payload.extend_from_slice(&p.normalizer.mins);
    payload.extend_from_slice(&p.normalizer.maxs);
    encode(CHECKPOINT_MAGIC, FORMAT_VERSION, &header, &payload)
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let (h, payload): (CheckpointHeader, _) = decode(bytes, CHECKPOINT_MAGIC, FORMAT_VERSION)?;
    let parts = split_payload(&payload, &h.sections)?;
    let schema = |e: Error| Error::SchemaMismatch(e.to_string());
    let params = DenoiserParams::from_parts(h.arch, h.phase_tag, parts[0].to_vec()).map_err(schema)?;
    let schedule = NoiseSchedule::from_betas(h.schedule_kind, parts[1].to_vec()).map_err(schema)?;
    if schedule.n_steps != h.n_steps {
        return Err(Error::SchemaMismatch("beta table length disagrees with n_steps".into()));
    }
    let arr = |s: &[f64]| -> [f64; TRANSITION_DIM] { s.try_into().expect("section length checked") };
    let normalizer = Normalizer::new(arr(parts[2]), arr(parts[3])).map_err(schema)?;
    Ok(Checkpoint {
        planner: Planner {
            schedule,
            normalizer,
            params,
            horizon: h.horizon,
        },
        maze: h.maze,
        train: h.train,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_file(path, &checkpoint_bytes(ckpt)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    checkpoint_from_bytes(&read_file(path)?)
}

#[derive(Serialize, Deserialize)]
struct PoolEntryMeta {
    task: TaskSpec,
    provenance: Provenance,
    stats: TrajectoryStats,
}

#[derive(Serialize, Deserialize)]
struct PoolHeader {
    horizon: usize,
    transition_dim: usize,
    entries: Vec<PoolEntryMeta>,
}

pub fn pool_bytes(pool: &DataPool) -> Result<Vec<u8>> {
    let header = PoolHeader {
        horizon: pool.horizon(),
        transition_dim: TRANSITION_DIM,
        entries: pool
            .entries()
            .iter()
            .map(|e| PoolEntryMeta {
                task: e.task.clone(),
                provenance: e.provenance,
                stats: e.stats,
            })
            .collect(),
    };
    let mut payload = Vec::with_capacity(12 + pool.len() * pool.horizon() * TRANSITION_DIM);
    payload.extend_from_slice(&pool.normalizer().mins);
    payload.extend_from_slice(&pool.normalizer().maxs);
    for e in pool.entries() {
        payload.extend_from_slice(e.trajectory.grid().as_slice());
    }
    encode(POOL_MAGIC, FORMAT_VERSION, &header, &payload)
}

/// Parses a pool; with `expected_horizon`, a pool of another shape is a
/// [`Error::SchemaMismatch`].
pub fn pool_from_bytes(bytes: &[u8], expected_horizon: Option<usize>) -> Result<DataPool> {
    let (h, payload): (PoolHeader, _) = decode(bytes, POOL_MAGIC, FORMAT_VERSION)?;
    if h.transition_dim != TRANSITION_DIM {
        return Err(Error::SchemaMismatch(format!(
            "pool rows have {} columns, expected {TRANSITION_DIM}",
            h.transition_dim
        )));
    }
    if let Some(want) = expected_horizon.filter(|&w| w != h.horizon) {
        return Err(Error::SchemaMismatch(format!(
            "pool horizon {} does not match the configured horizon {want}",
            h.horizon
        )));
    }
    let cell = h.horizon * TRANSITION_DIM;
    let mut lens = vec![TRANSITION_DIM, TRANSITION_DIM];
    lens.extend(std::iter::repeat_n(cell, h.entries.len()));
    let parts = split_payload(&payload, &lens)?;
    let schema = |e: Error| Error::SchemaMismatch(e.to_string());
    let arr = |s: &[f64]| -> [f64; TRANSITION_DIM] { s.try_into().expect("section length checked") };
    let normalizer = Normalizer::new(arr(parts[0]), arr(parts[1])).map_err(schema)?;
    let mut pool = DataPool::new(h.horizon, normalizer);
    for (meta, data) in h.entries.into_iter().zip(&parts[2..]) {
        let grid = crate::diffusion::Grid::from_vec(h.horizon, TRANSITION_DIM, data.to_vec()).map_err(schema)?;
        pool.push(PoolEntry {
            trajectory: Trajectory::new(grid).map_err(schema)?,
            task: meta.task,
            provenance: meta.provenance,
            stats: meta.stats,
        })?;
    }
    Ok(pool)
}

pub fn save_pool(path: &Path, pool: &DataPool) -> Result<()> {
    write_file(path, &pool_bytes(pool)?)
}

pub fn load_pool(path: &Path, expected_horizon: Option<usize>) -> Result<DataPool> {
    pool_from_bytes(&read_file(path)?, expected_horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::ScheduleKind;
    use crate::maze::{bundled, generate_expert, EnvConfig};
    use crate::planner::maze_normalizer;

    fn small_checkpoint() -> Checkpoint {
        let arch = Architecture {
            width: 8,
            blocks: 1,
            groups: 2,
            embed_dim: 8,
            ..Architecture::default()
        };
        let mut params = DenoiserParams::init(arch, 3).unwrap();
        params.phase_tag = 2;
        params.data[0] = 0.1 + 0.2;
        Checkpoint {
            planner: Planner {
                schedule: NoiseSchedule::build(16, ScheduleKind::Cosine).unwrap(),
                normalizer: Normalizer::new([0.0; 6], [1.0, 2.0, 3.0, 4.0, 5.0, 1.0 / 3.0]).unwrap(),
                params,
                horizon: 32,
            },
            maze: "umaze".into(),
            train: TrainConfig::default(),
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let ck = small_checkpoint();
        let back = checkpoint_from_bytes(&checkpoint_bytes(&ck).unwrap()).unwrap();
        assert_eq!(back, ck);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.planner.params.data), bits(&ck.planner.params.data));
        assert_eq!(bits(&back.planner.schedule.alpha_bars), bits(&ck.planner.schedule.alpha_bars));
        assert_eq!(checkpoint_bytes(&back).unwrap(), checkpoint_bytes(&ck).unwrap());
    }

    #[test]
    fn flipped_byte_is_a_digest_mismatch() {
        let mut bytes = checkpoint_bytes(&small_checkpoint()).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(matches!(checkpoint_from_bytes(&bytes), Err(Error::DigestMismatch)));
    }

    #[test]
    fn pool_round_trip_and_horizon_check() {
        let maze = bundled("umaze").unwrap();
        let cfg = EnvConfig::for_maze("umaze");
        let eps = generate_expert(&maze, &cfg, 6, 2).unwrap();
        let pool = DataPool::from_expert(&maze, &cfg, &eps, 128, maze_normalizer(&maze, &cfg).unwrap()).unwrap();
        let bytes = pool_bytes(&pool).unwrap();
        assert_eq!(pool_from_bytes(&bytes, Some(128)).unwrap(), pool);
        assert!(matches!(pool_from_bytes(&bytes, Some(64)), Err(Error::SchemaMismatch(_))));
    }
}
