use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture and density-mapping hyperparameters of the edge field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub backbone_depth: usize,
    pub backbone_width: usize,
    /// Backbone layer whose input is concatenated with the encoded position.
    /// Only effective when `0 < skip_layer < backbone_depth`.
    pub skip_layer: usize,
    pub gray_head_depth: usize,
    pub gray_head_width: usize,
    pub pe_position_l: usize,
    pub pe_direction_l: usize,
    pub beta: f64,
    pub g: f64,
    pub alpha_init: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            backbone_depth: 8,
            backbone_width: 256,
            skip_layer: 4,
            gray_head_depth: 4,
            gray_head_width: 256,
            pe_position_l: 10,
            pe_direction_l: 4,
            beta: 0.8,
            g: 10.0,
            alpha_init: 30.0,
        }
    }
}

impl FieldConfig {
    /// Small CPU preset: width-64, depth-4 backbone and a width-64 gray head.
    pub fn desk() -> Self {
        Self {
            backbone_depth: 4,
            backbone_width: 64,
            gray_head_width: 64,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.backbone_depth < 1 || self.gray_head_depth < 1 {
            return Err(Error::invalid("network depths must be at least 1"));
        }
        if self.backbone_width < 8 || self.gray_head_width < 8 {
            return Err(Error::invalid("network widths must be at least 8"));
        }
        if self.pe_position_l < 1 || self.pe_direction_l < 1 {
            return Err(Error::invalid("encoding frequency counts must be at least 1"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid(format!("beta must be in (0, 1), got {}", self.beta)));
        }
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(Error::invalid(format!("g must be positive, got {}", self.g)));
        }
        if !(self.alpha_init > 0.0 && self.alpha_init.is_finite()) {
            return Err(Error::invalid("alpha_init must be positive"));
        }
        Ok(())
    }

    pub fn has_skip(&self) -> bool {
        self.skip_layer > 0 && self.skip_layer < self.backbone_depth
    }

    pub fn position_dim(&self) -> usize {
        crate::geom::encoded_len(3, self.pe_position_l, true)
    }

    pub fn direction_dim(&self) -> usize {
        crate::geom::encoded_len(3, self.pe_direction_l, true)
    }
}
