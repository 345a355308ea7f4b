//! Differentiable volume rendering of gray edge images, the training losses
//! and the optimization loop.

mod adam;
mod composite;
mod losses;
mod train;
mod view;

pub use adam::{load_optimizer, save_optimizer, Adam, OPTIMIZER_MAGIC};
pub use composite::Composite;
pub use losses::{
    cauchy, consistency_loss, is_edge, sparsity_loss, total_loss, wmse_loss, wmse_weights,
    ColorWeighting, LossParts, LossWeights, Reduction,
};
pub use train::{
    batch_activation_pattern, batch_loss_and_grad, format_history_row, iteration_rng, read_history, sample_batch, train,
    write_history, LossRecord, Objective, RayBatch, TrainConfig, Trainer, HISTORY_HEADER,
};
pub use view::{
    render_debug_view, render_pixels, render_ray, render_rays, sample_deltas, write_pfm, DebugView,
    RayRender, SampleRecord,
};
