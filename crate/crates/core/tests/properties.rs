//! Property tests over the public API: persistence, normalization, the
//! discriminator and executable rollouts.

use adaptplanner::diffusion::{Grid, Normalizer, Trajectory, TRANSITION_DIM};
use adaptplanner::evolve::{discriminate, rollout_executable, DataPool, DiscriminatorRule, PoolEntry, Provenance, TrajectoryStats};
use adaptplanner::maze::{bundled, pad_to_horizon, run_expert, EnvConfig, MazeSpec, TaskSpec};
use adaptplanner::persist::container::{decode, encode};
use adaptplanner::persist::{pool_bytes, pool_from_bytes};
use adaptplanner::planner::maze_normalizer;
use adaptplanner::Error;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, Just(0.0), Just(-0.0), Just(f64::MIN_POSITIVE), Just(1e300)]
}

fn open_point(maze: &MazeSpec) -> impl Strategy<Value = [f64; 2]> {
    let cells = maze.open_cells();
    (0..cells.len(), -0.3..0.3f64, -0.3..0.3f64).prop_map(move |(k, dx, dy)| {
        let c = MazeSpec::cell_center(cells[k]);
        [c[0] + dx, c[1] + dy]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn container_round_trips_bit_exactly(
        header in "[a-z]{0,12}",
        payload in prop::collection::vec(finite(), 0..40),
    ) {
        let bytes = encode(b"PROPTEST", 1, &header, &payload).unwrap();
        let (h, p): (String, Vec<f64>) = decode(&bytes, b"PROPTEST", 1).unwrap();
        prop_assert_eq!(h, header);
        prop_assert_eq!(
            p.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            payload.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn any_flipped_bit_is_a_digest_mismatch(
        payload in prop::collection::vec(finite(), 1..10),
        pos in any::<prop::sample::Index>(),
        bit in 0..8u8,
    ) {
        let mut bytes = encode(b"PROPTEST", 1, &"h", &payload).unwrap();
        let i = pos.index(bytes.len());
        bytes[i] ^= 1 << bit;
        let r = decode::<String>(&bytes, b"PROPTEST", 1);
        prop_assert!(matches!(r, Err(Error::DigestMismatch)));
    }

    #[test]
    fn normalizer_round_trip(
        lo in prop::array::uniform6(-10.0..0.0f64),
        span in prop::array::uniform6(0.1..10.0f64),
        vals in prop::collection::vec(-20.0..20.0f64, TRANSITION_DIM * 4),
    ) {
        let hi: [f64; 6] = std::array::from_fn(|c| lo[c] + span[c]);
        let n = Normalizer::new(lo, hi).unwrap();
        let tau = Trajectory::new(Grid::from_vec(4, TRANSITION_DIM, vals.clone()).unwrap()).unwrap();
        let back = n.denormalize(&n.normalize(&tau));
        for (a, b) in back.grid().as_slice().iter().zip(&vals) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        for c in 0..TRANSITION_DIM {
            prop_assert!((n.normalize_value(c, lo[c]) + 1.0).abs() < 1e-12);
            prop_assert!((n.normalize_value(c, hi[c]) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn discriminator_is_monotone(
        length in 0..900usize,
        raw in 0.0..900.0f64,
        dev in 0.0..1.0f64,
        better_dev in 0.0..1.0f64,
        more_raw in 0.0..100.0f64,
    ) {
        let rule = DiscriminatorRule::large_maze_reference();
        let s = TrajectoryStats { length, raw_return: raw, deviation: dev, success: raw > 0.0 };
        if discriminate(&s, &rule).is_ok() {
            let lower_dev = TrajectoryStats { deviation: dev.min(better_dev), ..s };
            prop_assert!(discriminate(&lower_dev, &rule).is_ok());
            let richer = TrajectoryStats { raw_return: raw + more_raw, ..s };
            prop_assert!(discriminate(&richer, &rule).is_ok());
        }
    }

    #[test]
    fn pool_round_trip_preserves_entries(
        stats in prop::collection::vec((0..300usize, 0.0..300.0f64, 0.0..2.0f64, any::<bool>(), 0..5u32), 1..6),
        seed in any::<u64>(),
    ) {
        let maze = bundled("umaze").unwrap();
        let cfg = EnvConfig::for_maze("umaze");
        let mut pool = DataPool::new(16, maze_normalizer(&maze, &cfg).unwrap());
        for (k, (length, raw_return, deviation, success, phase)) in stats.into_iter().enumerate() {
            let grid = Grid::from_fn(16, TRANSITION_DIM, |r, c| {
                ((seed ^ (k * 97 + r * 7 + c) as u64) % 1000) as f64 / 997.0
            });
            pool.push(PoolEntry {
                trajectory: Trajectory::new(grid).unwrap(),
                task: TaskSpec::new([1.5, 1.5], [3.5, 3.5]),
                provenance: if phase == 0 { Provenance::Expert } else { Provenance::Synthetic { phase, task: k as u32 } },
                stats: TrajectoryStats { length, raw_return, deviation, success },
            }).unwrap();
        }
        let bytes = pool_bytes(&pool).unwrap();
        let back = pool_from_bytes(&bytes, Some(16)).unwrap();
        prop_assert_eq!(&back, &pool);
        prop_assert_eq!(pool_bytes(&back).unwrap(), bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn expert_plans_execute_without_deviation(
        start in open_point(&bundled("medium").unwrap()),
        goal in open_point(&bundled("medium").unwrap()),
    ) {
        let maze = bundled("medium").unwrap();
        let cfg = EnvConfig::for_maze("medium");
        let task = TaskSpec::new(start, goal);
        let ep = run_expert(&maze, &cfg, &task).unwrap();
        let tau = pad_to_horizon(&maze, &cfg, &ep, 192);
        prop_assume!(tau.is_some());
        let roll = rollout_executable(&maze, &cfg, &task, &tau.unwrap());
        prop_assert!(roll.stats.deviation <= 1e-9, "d = {}", roll.stats.deviation);
        prop_assert_eq!(roll.stats.length, 191);
        prop_assert!(roll.stats.success);
    }
}
