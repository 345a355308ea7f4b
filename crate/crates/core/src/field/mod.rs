//! The neural edge field: a positional-encoded MLP mapping a point and view
//! direction to an edge density `E` and gray value `c`, plus the logistic
//! mapping from `E` to volume density. Gradients are derived by hand for
//! the dense layers and checked against finite differences.

mod checkpoint;
mod config;
mod network;
mod params;

pub(crate) use checkpoint::{Reader, Writer};
pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::FieldConfig;
pub use network::{
    backward_batch, edge_density_batch, density_map, density_map_grad, encode_batch, field_eval,
    field_eval_batch_with_grad, forward_batch, logistic, FieldForward, FieldOutput, Upstream,
};
pub use params::{init_params, EdgeFieldParams, Linear, Real};

#[cfg(test)]
mod tests;
