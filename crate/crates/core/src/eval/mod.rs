//! Closed-loop evaluation: plan, track, score, aggregate and report.

pub mod coin;
pub mod episode;
pub mod render;
pub mod suite;
pub mod tasks;

pub use coin::{coin_adaptation_eval, CoinReport, CoinRow};
pub use episode::{execute_plan, expert_return, normalized_score, run_episode, Episode, ScoreRefs};
pub use render::render_svg;
pub use suite::{
    benchmark, benchmark_episodes, episode_seed, paired_comparison, EpisodeRecord, PairedComparison,
    SuiteResult, SuiteSummary,
};
pub use tasks::{
    coin_detour_tasks, figure_point, hard_case_suite, named_hard_pair, ranked_pairs, spread,
    stratified_tasks, top_decile_threshold,
};
