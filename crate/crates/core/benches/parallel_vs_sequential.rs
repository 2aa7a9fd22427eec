//! Batch gradient and closed-loop evaluation on a single-thread rayon pool
//! (the sequential baseline) versus the default pool. Building with
//! `--no-default-features` removes rayon entirely; both configurations give
//! bit-identical results.

use adaptplanner::denoiser::{Architecture, DenoiserParams};
use adaptplanner::diffusion::{draw_training_noise, loss_and_grad, LossMask, NoiseSchedule, ScheduleKind};
use adaptplanner::eval::{benchmark, ScoreRefs};
use adaptplanner::maze::{bundled, generate_expert, EnvConfig, TaskSpec};
use adaptplanner::planner::{maze_normalizer, training_grids, PlanOptions, Planner};
use adaptplanner::rng;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let all = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut out = vec![(
        "sequential",
        rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap(),
    )];
    if adaptplanner::par::is_parallel() {
        out.push(("parallel", rayon::ThreadPoolBuilder::new().num_threads(all).build().unwrap()));
    }
    out
}

fn fixture() -> (adaptplanner::maze::MazeSpec, EnvConfig, Planner, Vec<adaptplanner::diffusion::Grid>) {
    let maze = bundled("umaze").unwrap();
    let cfg = EnvConfig::for_maze("umaze");
    let norm = maze_normalizer(&maze, &cfg).unwrap();
    let episodes = generate_expert(&maze, &cfg, 32, 1).unwrap();
    let grids = training_grids(&maze, &cfg, &episodes, 128, &norm);
    let planner = Planner {
        schedule: NoiseSchedule::build(16, ScheduleKind::Cosine).unwrap(),
        normalizer: norm,
        params: DenoiserParams::init(Architecture::default(), 7).unwrap(),
        horizon: 128,
    };
    (maze, cfg, planner, grids)
}

fn batch_gradient(c: &mut Criterion) {
    let (_, _, planner, grids) = fixture();
    let batch: Vec<_> = grids.iter().collect();
    let draws = draw_training_noise(&planner.schedule, &batch, &mut rng::stream(3, "bench", 0));
    let mask = LossMask::default();
    let mut group = c.benchmark_group("loss_and_grad_batch32");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            pool.install(|| b.iter(|| loss_and_grad(&planner.schedule, &planner.params, &batch, &draws, &mask).unwrap()))
        });
    }
    group.finish();
}

fn closed_loop_eval(c: &mut Criterion) {
    let (maze, cfg, planner, _) = fixture();
    let tasks = vec![
        TaskSpec::new([1.5, 1.5], [3.5, 3.5]),
        TaskSpec::new([3.5, 1.5], [1.5, 3.5]),
    ];
    let refs = ScoreRefs {
        expert: 200.0,
        random: 0.0,
    };
    let mut group = c.benchmark_group("benchmark_2tasks_3seeds");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            pool.install(|| {
                b.iter(|| benchmark(&planner, &maze, &cfg, &tasks, &[0, 1, 2], &PlanOptions::default(), &refs).unwrap())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, batch_gradient, closed_loop_eval);
criterion_main!(benches);
