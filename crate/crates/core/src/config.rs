//! Flat `key = value` pipeline configuration with dotted namespaces.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::curvefit::FitConfig;
use crate::error::{Error, Result};
use crate::evalmetrics::DEFAULT_MATCH_RADIUS;
use crate::extract::{Bounds, DEFAULT_EVAL_VOXEL, DEFAULT_GRID_RESOLUTION, DEFAULT_THRESHOLD};
use crate::field::FieldConfig;
use crate::render::{LossWeights, TrainConfig};
use crate::synth::{PrimitiveScene, ViewSetup};

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    /// cube, wedge, l_bracket, cylinder or plate_over_box.
    pub kind: String,
    pub side: f64,
    pub height: f64,
    pub thickness: f64,
    pub radius: f64,
    pub box_side: f64,
    pub box_height: f64,
    pub plate_side: f64,
    pub gap: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            kind: "cube".into(),
            side: 0.8,
            height: 0.6,
            thickness: 0.3,
            radius: 0.3,
            box_side: 0.5,
            box_height: 0.4,
            plate_side: 0.9,
            gap: 0.2,
        }
    }
}

impl SceneConfig {
    pub fn primitive(&self) -> Result<PrimitiveScene> {
        Ok(match self.kind.as_str() {
            "cube" => PrimitiveScene::Cube { side: self.side },
            "wedge" => PrimitiveScene::Wedge {
                side: self.side,
                height: self.height,
            },
            "l_bracket" => PrimitiveScene::LBracket {
                side: self.side,
                thickness: self.thickness,
            },
            "cylinder" => PrimitiveScene::Cylinder {
                radius: self.radius,
                height: self.height,
            },
            "plate_over_box" => PrimitiveScene::PlateOverBox {
                box_side: self.box_side,
                box_height: self.box_height,
                plate_side: self.plate_side,
                gap: self.gap,
            },
            other => {
                return Err(Error::invalid(format!(
                    "unknown scene kind '{other}' (expected cube, wedge, l_bracket, cylinder, plate_over_box)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractConfig {
    pub resolution: usize,
    pub threshold: f64,
    /// Grid bounds are `[-half_extent, half_extent]³`.
    pub half_extent: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            resolution: DEFAULT_GRID_RESOLUTION,
            threshold: DEFAULT_THRESHOLD,
            half_extent: 0.5,
        }
    }
}

impl ExtractConfig {
    pub fn bounds(&self) -> Result<Bounds> {
        Bounds::centered_cube(self.half_extent)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub tau: f64,
    pub voxel: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            tau: DEFAULT_MATCH_RADIUS,
            voxel: DEFAULT_EVAL_VOXEL,
        }
    }
}

/// Everything a pipeline run depends on. `seed` drives training and fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub scene: SceneConfig,
    pub views: ViewSetup,
    pub field: FieldConfig,
    pub train: TrainConfig,
    /// Iterations between checkpoints written during training.
    pub checkpoint_every: usize,
    pub loss: LossWeights,
    pub extract: ExtractConfig,
    pub fit: FitConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            scene: SceneConfig::default(),
            views: ViewSetup::default(),
            field: FieldConfig::default(),
            train: TrainConfig::default(),
            checkpoint_every: 500,
            loss: LossWeights::default(),
            extract: ExtractConfig::default(),
            fit: FitConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

type Setter = fn(&mut PipelineConfig, &str) -> std::result::Result<(), String>;

pub struct ConfigKey {
    pub name: &'static str,
    pub help: &'static str,
    get: fn(&PipelineConfig) -> String,
    set: Setter,
}

macro_rules! key {
    ($name:literal, $help:literal, $($field:ident).+) => {
        ConfigKey {
            name: $name,
            help: $help,
            get: |c| c.$($field).+.to_string(),
            set: |c, v| {
                c.$($field).+ = v.parse().map_err(|e| format!("{e}"))?;
                Ok(())
            },
        }
    };
}

/// Every accepted key, in file order.
pub static KEYS: &[ConfigKey] = &[
    key!("seed", "seed for training batches, initialization and fitting", seed),
    key!("scene.kind", "cube | wedge | l_bracket | cylinder | plate_over_box", scene.kind),
    key!("scene.side", "cube/wedge/l_bracket side length", scene.side),
    key!("scene.height", "wedge/cylinder height", scene.height),
    key!("scene.thickness", "l_bracket arm thickness", scene.thickness),
    key!("scene.radius", "cylinder radius", scene.radius),
    key!("scene.box_side", "plate_over_box box side", scene.box_side),
    key!("scene.box_height", "plate_over_box box height", scene.box_height),
    key!("scene.plate_side", "plate_over_box plate side", scene.plate_side),
    key!("scene.gap", "plate_over_box gap between box and plate", scene.gap),
    key!("views.count", "number of views", views.n_views),
    key!("views.width", "image width in pixels", views.width),
    key!("views.height", "image height in pixels", views.height),
    key!("views.focal_scale", "focal length as a multiple of image width", views.focal_scale),
    key!("views.radius", "camera distance from the origin", views.radius),
    key!("views.stroke_px", "edge stroke radius in pixels", views.stroke_px),
    key!("field.backbone_depth", "backbone layers", field.backbone_depth),
    key!("field.backbone_width", "backbone width", field.backbone_width),
    key!("field.skip_layer", "backbone layer re-fed with the encoded input", field.skip_layer),
    key!("field.gray_head_depth", "gray head hidden layers", field.gray_head_depth),
    key!("field.gray_head_width", "gray head width", field.gray_head_width),
    key!("field.pe_position_l", "position encoding octaves", field.pe_position_l),
    key!("field.pe_direction_l", "direction encoding octaves", field.pe_direction_l),
    key!("field.beta", "density mapping shift", field.beta),
    key!("field.g", "density mapping gain", field.g),
    key!("field.alpha_init", "initial density scale", field.alpha_init),
    key!("train.samples_per_ray", "stratified samples per ray", train.samples_per_ray),
    key!("train.batch_size", "rays per batch", train.batch_size),
    key!("train.learning_rate", "Adam learning rate", train.learning_rate),
    key!("train.iterations", "iteration count (0: derive from epochs)", train.iterations),
    key!("train.epochs", "epochs over all pixels when iterations = 0", train.epochs),
    key!("train.adam_beta1", "Adam beta1", train.adam_beta1),
    key!("train.adam_beta2", "Adam beta2", train.adam_beta2),
    key!("train.adam_eps", "Adam epsilon", train.adam_eps),
    key!("train.color_weighting", "adaptive | uniform rendering-loss weights", train.color_weighting),
    key!("train.wmse_reduction", "mean | sum over rays", train.wmse_reduction),
    key!("train.chunk_rays", "rays per parallel work unit", train.chunk_rays),
    key!("train.checkpoint_every", "iterations between checkpoints", checkpoint_every),
    key!("loss.lambda1", "weighted rendering loss weight", loss.lambda1),
    key!("loss.lambda2", "consistency loss weight", loss.lambda2),
    key!("loss.lambda3", "sparsity loss weight", loss.lambda3),
    key!("loss.eta", "edge-pixel threshold on ground-truth intensity", loss.eta),
    key!("loss.s", "Cauchy loss scale", loss.s),
    key!("extract.resolution", "grid cells per axis", extract.resolution),
    key!("extract.threshold", "edge density threshold", extract.threshold),
    key!("extract.half_extent", "grid spans [-h, h] on each axis", extract.half_extent),
    key!("fit.gamma_coarse", "Chamfer weight of the curve-to-points term, coarse stage", fit.gamma_coarse),
    key!("fit.gamma_fine", "Chamfer weight of the curve-to-points term, fine stage", fit.gamma_fine),
    key!("fit.samples_per_curve", "samples per curve", fit.samples_per_curve),
    key!("fit.dilated_samples", "samples per curve after dilation", fit.dilated_samples),
    key!("fit.dilation_sigma", "dilation noise std (normalized units)", fit.dilation_sigma),
    key!("fit.stop_remaining", "stop fitting lines below this many points", fit.stop_remaining),
    key!("fit.delete_radius", "inlier radius (normalized units)", fit.delete_radius),
    key!("fit.endpoint_d_voxels", "endpoint attraction radius in extraction voxels", fit.endpoint_d_voxels),
    key!("fit.lambda_ep", "endpoint loss weight", fit.lambda_ep),
    key!("fit.learning_rate", "fine-stage learning rate", fit.learning_rate),
    key!("fit.coarse_learning_rate", "line refinement learning rate", fit.coarse_learning_rate),
    key!("fit.lr_unit", "normalized length of one learning-rate unit", fit.lr_unit),
    key!("fit.ransac_trials", "random point pairs per line", fit.ransac_trials),
    key!("fit.coarse_steps", "refinement steps per line", fit.coarse_steps),
    key!("fit.fine_steps", "fine-stage steps", fit.fine_steps),
    key!("fit.mask_refresh", "steps between neighbour/endpoint mask refreshes", fit.mask_refresh),
    key!("fit.grow_gap", "largest gap bridged when growing a line", fit.grow_gap),
    key!("fit.refine_on_full_cloud", "refine lines against all remaining points", fit.refine_on_full_cloud),
    key!("eval.tau", "match radius (normalized units)", eval.tau),
    key!("eval.voxel", "downsampling voxel (normalized units)", eval.voxel),
];

fn find_key(name: &str) -> Result<&'static ConfigKey> {
    KEYS.iter()
        .find(|k| k.name == name)
        .ok_or_else(|| Error::invalid(format!("unknown config key '{name}'")))
}

impl PipelineConfig {
    /// The in-repo desk preset (`configs/desk_cube.conf`).
    pub fn desk() -> Self {
        let mut c = PipelineConfig::default();
        c.views.n_views = 16;
        c.views.width = 64;
        c.views.height = 64;
        c.views.stroke_px = 0.5;
        c.field = FieldConfig::desk();
        c.train.samples_per_ray = 32;
        c.train.iterations = 5000;
        c.extract.resolution = 64;
        c
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = find_key(key.trim())?;
        (k.set)(self, value.trim()).map_err(|e| Error::invalid(format!("{}: {e}", k.name)))
    }

    pub fn get(&self, key: &str) -> Result<String> {
        Ok((find_key(key)?.get)(self))
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment;
    /// repeated keys are rejected.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        let mut seen = HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, format!("line {}: expected key = value", n + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(Error::parse(origin, format!("line {}: duplicate key '{k}'", n + 1)));
            }
            self.set(k, v)
                .map_err(|e| Error::parse(origin, format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = PipelineConfig::default();
        c.apply_text(&text, path)?;
        Ok(c)
    }

    /// Every key as `key = value`, loadable by [`PipelineConfig::from_file`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            let _ = writeln!(s, "{} = {}", k.name, (k.get)(self));
        }
        s
    }

    /// Training settings with the pipeline seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train
        }
    }

    /// Fitting settings with the pipeline seed and grid resolution applied.
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            seed: self.seed,
            grid_resolution: self.extract.resolution,
            ..self.fit.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::synth::make_primitive_scene(&self.scene.primitive()?)?;
        self.views.validate()?;
        self.field.validate()?;
        self.train_config().validate()?;
        self.loss.validate()?;
        self.fit_config().validate()?;
        if self.extract.resolution < 2 {
            return Err(Error::invalid("extract.resolution must be >= 2"));
        }
        if !(self.extract.threshold > 0.0 && self.extract.threshold < 1.0) {
            return Err(Error::invalid("extract.threshold must be in (0, 1)"));
        }
        self.extract.bounds()?;
        if !(self.eval.tau > 0.0 && self.eval.voxel > 0.0) {
            return Err(Error::invalid("eval.tau and eval.voxel must be positive"));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::invalid("train.checkpoint_every must be positive"));
        }
        Ok(())
    }
}

/// Key table for `--help`: name, default value and description.
pub fn keys_help() -> String {
    let defaults = PipelineConfig::default();
    let width = KEYS.iter().map(|k| k.name.len()).max().unwrap_or(0);
    let mut s = String::from("Config keys (default in brackets):\n");
    for k in KEYS {
        let _ = writeln!(s, "  {:width$}  [{}]  {}", k.name, (k.get)(&defaults), k.help);
    }
    s
}
