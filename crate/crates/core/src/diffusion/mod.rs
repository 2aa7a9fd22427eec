//! DDPM mathematics over trajectory grids: schedule, forward corruption,
//! guided reverse sampling with inpainting, and the noise-prediction loss.

pub mod loss;
pub mod sampler;
pub mod schedule;
pub mod trajectory;

pub use loss::{
    corrupt, denoise_loss, draw_training_noise, loss_and_grad, loss_with_draws, LossMask, NoiseDraw, TrainableModel,
};
pub use sampler::{
    eps_from_x0, p_sample_step, posterior_mean_from_eps, predict_eps, predict_x0, q_sample, sample_normalized, sample_trajectory,
    NoiseModel, Prediction, ZeroModel, CLIP_BOUND,
};
pub use schedule::{NoiseSchedule, ScheduleKind};
pub use trajectory::{Grid, Normalizer, Trajectory, ACTION_DIM, STATE_DIM, TRANSITION_DIM};
