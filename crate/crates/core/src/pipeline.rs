//! Stage commands (synth, train, extract, fit, eval, debug-render) and the
//! end-to-end pipeline with stage skipping.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::PipelineConfig;
use crate::curvefit::{fit_pipeline, parse_curves, sample_curves, write_curve_samples, write_curves};
use crate::error::{Error, Result};
use crate::evalmetrics::{evaluate, write_metrics, Metrics};
use crate::extract::{parse_ply, sample_grid, threshold_points, write_ply, Normalization, PointCloud};
use crate::field::{load_checkpoint, save_checkpoint, EdgeFieldParams};
use crate::geom::{CubicBezier, Vec3};
use crate::render::{
    load_optimizer, read_history, render_debug_view, save_optimizer, write_history, write_pfm, LossRecord, Trainer,
};
use crate::synth::{
    generate_dataset, make_primitive_scene, read_dataset, read_manifest_curves, write_dataset, write_pgm,
    MANIFEST_FILE,
};

pub const CHECKPOINT_FILE: &str = "field.ckpt";
pub const OPTIMIZER_FILE: &str = "optimizer.bin";
pub const HISTORY_FILE: &str = "loss.csv";
pub const POINTS_FILE: &str = "points.ply";
pub const CURVES_FILE: &str = "curves.txt";
pub const CURVE_SAMPLES_FILE: &str = "curves.ply";
pub const CONFIG_FILE: &str = "config.conf";

/// Curves are sampled at this fraction of the reference extent before
/// evaluation.
const EVAL_SAMPLES_PER_EXTENT: f64 = 512.0;

/// Output locations of a pipeline run under one root directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }
    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset")
    }
    pub fn train(&self) -> PathBuf {
        self.root.join("train")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.train().join(CHECKPOINT_FILE)
    }
    pub fn points(&self) -> PathBuf {
        self.root.join("extract").join(POINTS_FILE)
    }
    pub fn fit(&self) -> PathBuf {
        self.root.join("fit")
    }
    pub fn curves(&self) -> PathBuf {
        self.fit().join(CURVES_FILE)
    }
    pub fn eval(&self) -> PathBuf {
        self.root.join("eval")
    }
    pub fn config(&self) -> PathBuf {
        self.root.join(CONFIG_FILE)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn parent_dir(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn refuse_overwrite(paths: &[&Path], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    match paths.iter().find(|p| p.exists()) {
        Some(p) => Err(Error::invalid(format!(
            "{} already exists; pass --force to overwrite",
            p.display()
        ))),
        None => Ok(()),
    }
}

/// Renders the configured scene into `dir`.
pub fn cmd_synth(config: &PipelineConfig, dir: &Path, force: bool) -> Result<()> {
    config.validate()?;
    refuse_overwrite(&[&dir.join(MANIFEST_FILE)], force)?;
    let scene = make_primitive_scene(&config.scene.primitive()?)?;
    let ds = generate_dataset(&scene, &config.views)?;
    create_dir(dir)?;
    write_dataset(&ds, dir)?;
    log::info!("wrote {} views of '{}' to {}", ds.views.len(), ds.scene_name, dir.display());
    Ok(())
}

/// Trains a field on the dataset in `dataset_dir`, writing checkpoint,
/// optimizer state and loss history into `out_dir` every
/// `checkpoint_every` iterations and at the end. With `resume`, an
/// existing checkpoint is continued instead of replaced.
pub fn cmd_train(
    dataset_dir: &Path,
    config: &PipelineConfig,
    out_dir: &Path,
    resume: bool,
    force: bool,
    mut progress: impl FnMut(&LossRecord),
) -> Result<()> {
    config.validate()?;
    let ds = read_dataset(dataset_dir)?;
    let ckpt = out_dir.join(CHECKPOINT_FILE);
    let opt = out_dir.join(OPTIMIZER_FILE);
    let hist = out_dir.join(HISTORY_FILE);
    let tcfg = config.train_config();
    let mut trainer = if resume && ckpt.exists() {
        let params = load_checkpoint(&ckpt)?;
        if params.config != config.field {
            return Err(Error::invalid(format!(
                "{} was trained with a different field configuration",
                ckpt.display()
            )));
        }
        let adam = if opt.exists() { Some(load_optimizer(&params, &opt)?) } else { None };
        let mut t = Trainer::resume(&ds, params, adam, tcfg, config.loss)?;
        if hist.exists() {
            let done = t.iteration();
            t.history = read_history(&hist)?;
            t.history.retain(|r| r.iteration < done);
        }
        if t.iteration() >= t.total_iterations() {
            log::info!("train: {} already complete, skipping", ckpt.display());
            return Ok(());
        }
        log::info!("resuming from iteration {}", t.iteration());
        t
    } else {
        refuse_overwrite(&[&ckpt, &opt, &hist], force)?;
        Trainer::new(&ds, &config.field, tcfg, config.loss)?
    };
    create_dir(out_dir)?;
    let save = |t: &Trainer| -> Result<()> {
        save_checkpoint(&t.params, &ckpt)?;
        save_optimizer(&t.adam, &opt)?;
        write_history(&t.history, &hist)
    };
    let every = config.checkpoint_every;
    trainer.run(|t| {
        if let Some(r) = t.history.last() {
            progress(r);
        }
        if t.iteration() % every == 0 && t.iteration() < t.total_iterations() {
            save(t)?;
        }
        Ok(())
    })?;
    save(&trainer)
}

/// Thresholded grid samples of a trained field, in scene coordinates.
pub fn extract_cloud(params: &EdgeFieldParams<f32>, config: &PipelineConfig) -> Result<PointCloud> {
    let vol = sample_grid(params, config.extract.resolution, config.extract.bounds()?)?;
    threshold_points(&vol, config.extract.threshold)
}

pub fn cmd_extract(checkpoint: &Path, config: &PipelineConfig, out: &Path, force: bool) -> Result<PointCloud> {
    config.validate()?;
    refuse_overwrite(&[out], force)?;
    let params = load_checkpoint(checkpoint)?;
    let cloud = extract_cloud(&params, config)?;
    parent_dir(out)?;
    write_ply(out, &cloud)?;
    log::info!("extracted {} edge points to {}", cloud.len(), out.display());
    Ok(cloud)
}

/// Fits curves to a PLY cloud; writes the curve file and, next to it, a
/// PLY of dense curve samples.
pub fn cmd_fit(points: &Path, config: &PipelineConfig, out: &Path, force: bool) -> Result<Vec<CubicBezier>> {
    config.validate()?;
    let samples_out = out.with_extension("ply");
    refuse_overwrite(&[out, &samples_out], force)?;
    let cloud = crate::extract::read_ply(points)?;
    let result = fit_pipeline(&cloud.denormalized(), &config.fit_config())?;
    if result.leftover > 0 {
        log::info!("{} points left unexplained by the coarse stage", result.leftover);
    }
    parent_dir(out)?;
    write_curves(out, &result.curves)?;
    let extent = Normalization::fit(&cloud.denormalized())?.scale.recip();
    write_curve_samples(&samples_out, &result.curves, extent / EVAL_SAMPLES_PER_EXTENT)?;
    log::info!("fitted {} curves, written to {}", result.curves.len(), out.display());
    Ok(result.curves)
}

/// What an evaluation input file holds.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Cloud(Vec<Vec3>),
    Curves(Vec<CubicBezier>),
}

/// Loads a PLY cloud, a curve file, or a dataset manifest (its ground-truth
/// curves), detected from the content. A dataset directory means its
/// manifest.
pub fn load_geometry(path: &Path) -> Result<Geometry> {
    let path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let head = text.trim_start();
    if head.starts_with("ply") {
        let cloud = parse_ply(&text).map_err(|m| Error::parse(&path, m))?;
        Ok(Geometry::Cloud(cloud.denormalized()))
    } else if head.starts_with('{') {
        Ok(Geometry::Curves(read_manifest_curves(&path)?))
    } else if head.starts_with("curves") || head.starts_with('#') {
        Ok(Geometry::Curves(parse_curves(&text).map_err(|m| Error::parse(&path, m))?))
    } else {
        Err(Error::parse(&path, "unrecognized format (expected PLY, curve file or scene.json)"))
    }
}

fn geometry_points(g: &Geometry, spacing: f64) -> Result<Vec<Vec3>> {
    match g {
        Geometry::Cloud(p) => Ok(p.clone()),
        Geometry::Curves(c) => sample_curves(c, spacing),
    }
}

/// Metrics of `pred` against `gt`. Curves are sampled densely at a spacing
/// tied to the ground truth's extent; both sides are then normalized with
/// the ground truth's transform and voxel-downsampled.
pub fn eval_geometry(pred: &Geometry, gt: &Geometry, tau: f64, voxel: f64) -> Result<Metrics> {
    let gt_extent = match gt {
        Geometry::Cloud(p) => Normalization::fit(p)?.scale.recip(),
        Geometry::Curves(c) => {
            let coarse = sample_curves(c, 1e-2 * control_extent(c)?)?;
            Normalization::fit(&coarse)?.scale.recip()
        }
    };
    let spacing = gt_extent / EVAL_SAMPLES_PER_EXTENT;
    let g = geometry_points(gt, spacing)?;
    let p = geometry_points(pred, spacing)?;
    evaluate(&p, &g, tau, voxel)
}

fn control_extent(curves: &[CubicBezier]) -> Result<f64> {
    let pts: Vec<Vec3> = curves.iter().flat_map(|c| c.control_points()).collect();
    Ok(Normalization::fit(&pts)?.scale.recip())
}

pub fn cmd_eval(pred: &Path, gt: &Path, config: &PipelineConfig) -> Result<Metrics> {
    let p = load_geometry(pred)?;
    let g = load_geometry(gt)?;
    eval_geometry(&p, &g, config.eval.tau, config.eval.voxel)
}

/// Renders view `index` of the dataset through the field; writes
/// `view_<i>_edge.pgm`, `view_<i>_depth.pgm` and raw `view_<i>_depth.pfm`.
pub fn cmd_debug_render(
    checkpoint: &Path,
    dataset_dir: &Path,
    index: usize,
    config: &PipelineConfig,
    out_dir: &Path,
    force: bool,
) -> Result<Vec<PathBuf>> {
    let ds = read_dataset(dataset_dir)?;
    let view = ds.views.get(index).ok_or_else(|| {
        Error::invalid(format!("view index {index} out of range (dataset has {} views)", ds.views.len()))
    })?;
    let stem = crate::synth::view_stem(index);
    let files = vec![
        out_dir.join(format!("{stem}_edge.pgm")),
        out_dir.join(format!("{stem}_depth.pgm")),
        out_dir.join(format!("{stem}_depth.pfm")),
    ];
    refuse_overwrite(&files.iter().map(PathBuf::as_path).collect::<Vec<_>>(), force)?;
    let params = load_checkpoint(checkpoint)?;
    let dv = render_debug_view(&params, &view.camera, config.train.samples_per_ray)?;
    create_dir(out_dir)?;
    write_pgm(&files[0], &dv.edge)?;
    write_pgm(&files[1], &dv.depth_display)?;
    write_pfm(&files[2], dv.edge.width, dv.edge.height, &dv.depth_raw)?;
    Ok(files)
}

/// Final numbers of a pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub cloud: Metrics,
    pub curves: Option<Metrics>,
}

/// synth → train → extract → fit → eval under `layout`. A stage whose
/// outputs already exist is skipped unless `force`; an interrupted
/// training stage resumes from its last checkpoint.
pub fn cmd_pipeline(
    config: &PipelineConfig,
    layout: &Layout,
    force: bool,
    progress: impl FnMut(&LossRecord),
) -> Result<PipelineReport> {
    config.validate()?;
    create_dir(&layout.root)?;
    let cfg_text = config.to_text();
    if layout.config().exists() && !force {
        let old = fs::read_to_string(layout.config()).map_err(|e| Error::io(layout.config(), e))?;
        if old != cfg_text {
            return Err(Error::invalid(format!(
                "{} holds a different configuration; pass --force to start over",
                layout.config().display()
            )));
        }
    }
    crate::synth::write_file(&layout.config(), cfg_text.as_bytes())?;

    let ds_dir = layout.dataset();
    if force || !ds_dir.join(MANIFEST_FILE).exists() {
        cmd_synth(config, &ds_dir, true)?;
    } else {
        log::info!("synth: {} exists, skipping", ds_dir.display());
    }

    let ckpt = layout.checkpoint();
    cmd_train(&ds_dir, config, &layout.train(), !force, force, progress)?;

    let points = layout.points();
    let cloud = if force || !points.exists() {
        cmd_extract(&ckpt, config, &points, true)?
    } else {
        log::info!("extract: {} exists, skipping", points.display());
        crate::extract::read_ply(&points)?
    };

    let gt = Geometry::Curves(read_manifest_curves(&ds_dir.join(MANIFEST_FILE))?);
    let (tau, voxel) = (config.eval.tau, config.eval.voxel);
    let cloud_metrics = eval_geometry(&Geometry::Cloud(cloud.denormalized()), &gt, tau, voxel)?;
    create_dir(&layout.eval())?;
    write_metrics(&layout.eval(), "cloud_metrics", &cloud_metrics)?;

    let curves_path = layout.curves();
    let curve_metrics = if cloud.len() < config.fit.stop_remaining {
        log::warn!("only {} extracted points; skipping curve fitting", cloud.len());
        None
    } else {
        let curves = if force || !curves_path.exists() {
            cmd_fit(&points, config, &curves_path, true)?
        } else {
            log::info!("fit: {} exists, skipping", curves_path.display());
            crate::curvefit::read_curves(&curves_path)?
        };
        let m = eval_geometry(&Geometry::Curves(curves), &gt, tau, voxel)?;
        write_metrics(&layout.eval(), "curve_metrics", &m)?;
        Some(m)
    };
    Ok(PipelineReport {
        cloud: cloud_metrics,
        curves: curve_metrics,
    })
}
