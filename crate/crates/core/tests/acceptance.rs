//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `NEF_ACCEPT=1,4,8` runs a subset. Criteria 5 to 7 train desk-scale fields
//! and take most of the runtime.

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nef_core::config::PipelineConfig;
use nef_core::curvefit::{fit_pipeline, sample_curves_total, FitConfig};
use nef_core::extract::read_ply;
use nef_core::evalmetrics::{chamfer_eval, evaluate_default, prf_iou, Metrics};
use nef_core::field::{density_map, init_params, load_checkpoint, EdgeFieldParams, FieldConfig};
use nef_core::geom::{CubicBezier, Ray, Vec3};
use nef_core::pipeline::{self, eval_geometry, Geometry, Layout};
use nef_core::render::{
    batch_activation_pattern, batch_loss_and_grad, iteration_rng, render_pixels, render_ray, sample_batch, Composite,
    LossWeights, Objective, TrainConfig,
};
use nef_core::spatial::{brute_force_nearest, KdTree};
use nef_core::synth::{
    generate_dataset, is_visible, make_primitive_scene, read_dataset, read_manifest_curves, MANIFEST_FILE, PrimitiveScene, ViewDataset, ViewSetup,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = std::result::Result<String, String>;

/// View index, hidden pixels and which top edge they belong to.
type HiddenEdge = (usize, Vec<(u32, u32)>, usize);

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn desk_config() -> PipelineConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk_cube.conf");
    PipelineConfig::from_file(&path).expect("desk config")
}

/// Worker count for the desk runs: 4, or fewer on smaller machines, where
/// extra threads only contend for the same cores.
fn desk_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).min(4)
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

// ---------------------------------------------------------------- 1

fn gradient_correctness() -> Check {
    let start = Instant::now();
    let scene = make_primitive_scene(&PrimitiveScene::default_cube()).unwrap();
    let setup = ViewSetup {
        n_views: 2,
        width: 8,
        height: 8,
        ..ViewSetup::default()
    };
    let ds = generate_dataset(&scene, &setup).unwrap();
    let field = FieldConfig {
        backbone_depth: 2,
        backbone_width: 8,
        skip_layer: 1,
        gray_head_depth: 2,
        gray_head_width: 8,
        ..FieldConfig::default()
    };
    let cfg = TrainConfig {
        samples_per_ray: 8,
        batch_size: 128,
        seed: 5,
        ..TrainConfig::default()
    };
    let weights = LossWeights {
        lambda1: 1.0,
        lambda2: 1.0,
        lambda3: 0.01,
        ..LossWeights::default()
    };
    let obj = Objective::from_config(weights, &cfg);
    let mut params: EdgeFieldParams<f64> = init_params(&field, &mut ChaCha8Rng::seed_from_u64(21)).unwrap();
    let batch = sample_batch(&ds, &cfg, &mut iteration_rng(cfg.seed, 0)).unwrap();
    let total = |p: &EdgeFieldParams<f64>| batch_loss_and_grad(p, &batch, &obj, 16).unwrap().0.total(&obj.weights);
    let (_, grads) = batch_loss_and_grad(&params, &batch, &obj, 16).unwrap();
    let base = batch_activation_pattern(&params, &batch);

    let n = params.network_len() + 1;
    let log_alpha = n - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut coords = vec![log_alpha];
    let (mut checked, mut excluded, mut worst, mut worst_abs) = (0, 0, 0.0f64, 0.0f64);
    let h = 1e-4;
    while checked < 200 {
        let i = coords.pop().unwrap_or_else(|| rng.gen_range(0..n));
        let v = params.get_flat(i);
        params.set_flat(i, v + h);
        let plus = total(&params);
        let smooth = batch_activation_pattern(&params, &batch) == base;
        params.set_flat(i, v - h);
        let minus = total(&params);
        let smooth = smooth && batch_activation_pattern(&params, &batch) == base;
        params.set_flat(i, v);
        if !smooth {
            // A ReLU flips inside the stencil: the difference straddles a kink.
            ensure(i != log_alpha, "log_alpha stencil changed activations")?;
            excluded += 1;
            ensure(excluded < 200, "too many coordinates straddle ReLU kinks")?;
            continue;
        }
        let fd = (plus - minus) / (2.0 * h);
        let an = grads.get_flat(i);
        let abs = (fd - an).abs();
        let scale = fd.abs().max(an.abs());
        ensure(abs <= 1e-6 || abs / scale < 1e-3, format!("coordinate {i}: analytic {an:e} vs difference {fd:e}"))?;
        worst_abs = worst_abs.max(abs);
        if scale > 1e-6 {
            worst = worst.max(abs / scale);
        }
        checked += 1;
    }
    ensure(start.elapsed() < Duration::from_secs(30), "slower than 30 s")?;
    Ok(format!(
        "{checked} coordinates incl. log_alpha, max abs err {worst_abs:.1e}, max rel err {worst:.1e} \
         where |grad| > 1e-6, {excluded} excluded at ReLU kinks"
    ))
}

// ---------------------------------------------------------------- 2

fn compositing_invariants() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let tiny = FieldConfig {
        backbone_depth: 2,
        backbone_width: 16,
        skip_layer: 1,
        gray_head_depth: 1,
        gray_head_width: 8,
        pe_position_l: 4,
        pe_direction_l: 2,
        ..FieldConfig::default()
    };
    let mut rays = 0;
    for _ in 0..100 {
        let mut params: EdgeFieldParams<f64> = init_params(&tiny, &mut rng).unwrap();
        params.log_alpha = rng.gen_range(-2.0..8.0);
        for _ in 0..100 {
            let origin = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let target = Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
            let dir = (target - origin).normalize();
            let ray = Ray {
                origin,
                direction: dir,
                t_near: rng.gen_range(0.0..0.5),
                t_far: rng.gen_range(2.5..4.0),
            };
            let n = rng.gen_range(1..48);
            let r = render_ray(&params, &ray, n, &mut rng).unwrap();
            let sum: f64 = r.samples.iter().map(|s| s.weight).sum();
            let clear: f64 = r.samples.iter().map(|s| (-s.sigma * s.delta).exp()).product();
            ensure(r.samples.iter().all(|s| s.weight >= 0.0), "negative weight")?;
            ensure((sum - (1.0 - clear)).abs() <= 1e-6, format!("weights sum {sum} vs {}", 1.0 - clear))?;
            ensure((0.0..=1.0 + 1e-6).contains(&r.gray), format!("composite {}", r.gray))?;
            rays += 1;
        }
    }
    let ln2 = std::f64::consts::LN_2;
    let c = Composite::compute(&[1.0, 2.0], 3.0, &[ln2, ln2], &[1.0, 0.0]);
    ensure((c.weights[0] - 0.5).abs() < 1e-12, format!("w1 {}", c.weights[0]))?;
    ensure((c.weights[1] - 0.25).abs() < 1e-12, format!("w2 {}", c.weights[1]))?;
    ensure(start.elapsed() < Duration::from_secs(10), "slower than 10 s")?;
    Ok(format!("{rays} rays over 100 random fields; two-sample oracle exact"))
}

// ---------------------------------------------------------------- 3

fn density_mapping() -> Check {
    let cfg = FieldConfig::default();
    let (beta, g) = (cfg.beta, cfg.g);
    let scalar = |e: f64, alpha: f64| alpha / (1.0 + (-g * (e - beta)).exp());
    let mut worst = 0.0f64;
    for alpha in [1e-3, 0.5, 1.0, 30.0, 1234.5] {
        ensure(density_map(beta, alpha, beta, g) == alpha / 2.0, format!("sigma(beta) != alpha/2 at alpha {alpha}"))?;
        let one = density_map(1.0, alpha, beta, g) / alpha;
        let zero = density_map(0.0, alpha, beta, g) / alpha;
        let l2 = 1.0 / (1.0 + (-2.0f64).exp());
        let lm8 = 1.0 / (1.0 + 8.0f64.exp());
        ensure((one - l2).abs() < 1e-12, format!("sigma(1)/alpha = {one}"))?;
        ensure((zero - lm8).abs() < 1e-12, format!("sigma(0)/alpha = {zero}"))?;
        for i in 0..=100 {
            let e = i as f64 / 100.0;
            let d = (density_map(e, alpha, beta, g) - scalar(e, alpha)).abs() / alpha;
            worst = worst.max(d);
        }
    }
    ensure(worst < 1e-12, format!("grid deviation {worst:e}"))?;

    // Densities seen by the renderer follow the same map.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params: EdgeFieldParams<f64> = init_params(&FieldConfig::desk(), &mut rng).unwrap();
    let ray = Ray {
        origin: Vec3::new(0.0, 0.0, 2.0),
        direction: Vec3::new(0.0, 0.0, -1.0),
        t_near: 1.0,
        t_far: 3.0,
    };
    let r = render_ray(&params, &ray, 32, &mut rng).unwrap();
    for s in &r.samples {
        let want = scalar(s.edge, params.alpha());
        ensure((s.sigma - want).abs() <= 1e-12 * want.max(1.0), "renderer density differs from scalar map")?;
    }
    Ok(format!("beta={beta} g={g}; max deviation {worst:.1e}"))
}

// ---------------------------------------------------------------- 4

fn rounded_profile() -> Vec<CubicBezier> {
    let mut curves = make_primitive_scene(&PrimitiveScene::Cylinder { radius: 0.3, height: 0.6 })
        .unwrap()
        .curves;
    // Four straight seams join the rims into a closed rounded profile.
    for k in 0..4 {
        let (a, b) = (curves[k].p1, curves[4 + k].p1);
        curves.push(CubicBezier::line(a, b));
    }
    curves
}

fn curve_fitting_oracle() -> Check {
    let scenes = [
        ("cube", make_primitive_scene(&PrimitiveScene::default_cube()).unwrap().curves),
        ("rounded", rounded_profile()),
    ];
    let mut notes = Vec::new();
    for (name, curves) in scenes {
        let start = Instant::now();
        let pts = sample_curves_total(&curves, 5000).unwrap();
        let fit = fit_pipeline(&pts, &FitConfig::desk()).map_err(|e| format!("{name}: {e}"))?;
        let m = eval_geometry(&Geometry::Curves(fit.curves.clone()), &Geometry::Curves(curves), 0.02, 1.0 / 128.0)
            .unwrap();
        let secs = start.elapsed().as_secs_f64();
        notes.push(format!(
            "{name}: {} curves CD {:.4} F {:.4} IoU {:.4} {secs:.1}s",
            fit.curves.len(),
            m.cd,
            m.f_score,
            m.iou
        ));
        ensure(m.cd <= 0.03, format!("{name} CD {}", m.cd))?;
        ensure(m.f_score >= 0.95, format!("{name} F {}", m.f_score))?;
        ensure(m.iou >= 0.90, format!("{name} IoU {}", m.iou))?;
        ensure(secs <= 120.0, format!("{name} took {secs:.0}s"))?;
    }
    Ok(notes.join("; "))
}

// ---------------------------------------------------------------- 5 and 6

/// Mean rendered intensity over pixels whose input edge value is at least 0.5.
fn edge_pixel_intensity(params: &EdgeFieldParams<f32>, ds: &ViewDataset, spr: usize) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in &ds.views {
        let m = &v.edge_map;
        let px: Vec<(u32, u32)> = (0..m.height)
            .flat_map(|y| (0..m.width).map(move |x| (x, y)))
            .filter(|&(x, y)| m.get(x, y) >= 0.5)
            .collect();
        sum += render_pixels(params, &v.camera, &px, spr).iter().map(|r| r.gray).sum::<f64>();
        n += px.len();
    }
    sum / n as f64
}

struct DeskRun {
    layout: Layout,
    config: PipelineConfig,
    wmse_2000: PathBuf,
    report: Check,
}

fn end_to_end(root: &Path) -> DeskRun {
    let config = desk_config();
    let layout = Layout::new(root.join("desk"));
    let wmse_2000 = root.join("wmse_2000.ckpt");
    let start = Instant::now();
    let report = pool(desk_workers()).install(|| -> Check {
        // Train the first 2000 iterations on their own so criterion 6 can
        // reuse that state; the pipeline then resumes to the full count.
        let mut early = config.clone();
        early.train.iterations = 2000;
        pipeline::cmd_synth(&config, &layout.dataset(), false).map_err(|e| e.to_string())?;
        pipeline::cmd_train(&layout.dataset(), &early, &layout.train(), false, false, |_| {})
            .map_err(|e| e.to_string())?;
        fs::copy(layout.checkpoint(), &wmse_2000).map_err(|e| e.to_string())?;
        let r = pipeline::cmd_pipeline(&config, &layout, false, |_| {}).map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        let cloud = &r.cloud;
        let curves = r.curves.ok_or("too few extracted points to fit curves")?;
        let note = format!(
            "cloud F {:.3} CD {:.4} (P {:.3} R {:.3}); curves F {:.3} CD {:.4}; {:.0}s, workers {}",
            cloud.f_score,
            cloud.cd,
            cloud.precision,
            cloud.recall,
            curves.f_score,
            curves.cd,
            secs,
            desk_workers()
        );
        ensure(cloud.f_score >= 0.75, format!("cloud F-score below 0.75: {note}"))?;
        ensure(cloud.cd <= 0.06, format!("cloud CD above 0.06: {note}"))?;
        ensure(curves.f_score >= 0.70, format!("curve F-score below 0.70: {note}"))?;
        ensure(secs <= 1800.0, format!("over 30 min: {note}"))?;

        // Every extracted point lies near some ground-truth curve.
        let gt = read_manifest_curves(&layout.dataset().join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
        let cloud = read_ply(&layout.points()).map_err(|e| e.to_string())?.denormalized();
        let diag = config.extract.bounds().map_err(|e| e.to_string())?.extent().x / config.extract.resolution as f64 * 3f64.sqrt();
        let far = cloud
            .iter()
            .map(|&p| gt.iter().map(|c| c.distance_to(p)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        ensure(far <= 3.0 * diag, format!("extracted point {far:.4} from the curves: {note}"))?;
        Ok(format!("{note}; farthest point {:.2} voxel diagonals", far / diag))
    });
    DeskRun {
        layout,
        config,
        wmse_2000,
        report,
    }
}

fn wmse_vs_uniform(root: &Path, desk: &DeskRun) -> Check {
    ensure(desk.wmse_2000.exists(), "weighted run did not reach 2000 iterations")?;
    let mut cfg = desk.config.clone();
    cfg.train.iterations = 2000;
    cfg.set("train.color_weighting", "uniform").unwrap();
    let out = root.join("uniform");
    pool(desk_workers()).install(|| pipeline::cmd_train(&desk.layout.dataset(), &cfg, &out, false, false, |_| {}))
        .map_err(|e| e.to_string())?;
    let ds = read_dataset(&desk.layout.dataset()).map_err(|e| e.to_string())?;
    let spr = cfg.train.samples_per_ray;
    let w = edge_pixel_intensity(&load_checkpoint(&desk.wmse_2000).unwrap(), &ds, spr);
    let u = edge_pixel_intensity(&load_checkpoint(&out.join(pipeline::CHECKPOINT_FILE)).unwrap(), &ds, spr);
    let note = format!("edge-pixel intensity weighted {w:.4} vs uniform {u:.4} (ratio {:.2})", w / u);
    ensure(w >= 2.0 * u, note.clone())?;
    Ok(note)
}

// ---------------------------------------------------------------- 7

/// Pixels of the box's top edges that are hidden in some view: returns the
/// view index and the pixels with zero input intensity along the edge.
fn occluded_edge(cfg: &PipelineConfig, ds: &ViewDataset) -> Option<HiddenEdge> {
    let scene = make_primitive_scene(&cfg.scene.primitive().unwrap()).unwrap();
    let box_curves = &scene.curves[..12];
    let top = box_curves.iter().map(|c| c.p1.y.max(c.p4.y)).fold(f64::MIN, f64::max);
    let top_edges: Vec<&CubicBezier> = box_curves.iter().filter(|c| c.p1.y == top && c.p4.y == top).collect();
    let mut best: Option<HiddenEdge> = None;
    for (vi, view) in ds.views.iter().enumerate() {
        let cam = &view.camera;
        for (ei, edge) in top_edges.iter().enumerate() {
            let samples: Vec<Vec3> = (0..=64).map(|k| edge.eval(k as f64 / 64.0)).collect();
            if samples.iter().any(|&p| is_visible(&scene, cam, p)) {
                continue;
            }
            let mut px = BTreeSet::new();
            for &p in &samples {
                let Some((u, v)) = cam.project(p) else { continue };
                if u >= 0.0 && v >= 0.0 && u < cam.width() as f64 && v < cam.height() as f64 {
                    let (x, y) = (u as u32, v as u32);
                    if view.edge_map.get(x, y) == 0.0 {
                        px.insert((x, y));
                    }
                }
            }
            if best.as_ref().is_none_or(|b| px.len() > b.1.len()) {
                best = Some((vi, px.into_iter().collect(), ei));
            }
        }
    }
    best
}

fn occlusion_recovery(root: &Path) -> Check {
    let mut cfg = desk_config();
    cfg.set("scene.kind", "plate_over_box").unwrap();
    cfg.train.iterations = 1500;
    let ds_dir = root.join("plate");
    let (on, off) = pool(desk_workers()).install(|| -> std::result::Result<_, String> {
        pipeline::cmd_synth(&cfg, &ds_dir, false).map_err(|e| e.to_string())?;
        let run = |lambda2: f64, name: &str| -> std::result::Result<EdgeFieldParams<f32>, String> {
            let mut c = cfg.clone();
            c.set("loss.lambda2", &lambda2.to_string()).unwrap();
            let out = root.join(name);
            pipeline::cmd_train(&ds_dir, &c, &out, false, false, |_| {}).map_err(|e| e.to_string())?;
            load_checkpoint(&out.join(pipeline::CHECKPOINT_FILE)).map_err(|e| e.to_string())
        };
        Ok((run(1.0, "lambda2_on")?, run(0.0, "lambda2_off")?))
    })?;
    let ds = read_dataset(&ds_dir).map_err(|e| e.to_string())?;
    let (view, pixels, edge) = occluded_edge(&cfg, &ds).ok_or("no view hides a box top edge")?;
    ensure(pixels.len() >= 4, format!("only {} hidden edge pixels", pixels.len()))?;
    let cam = &ds.views[view].camera;
    let spr = cfg.train.samples_per_ray;
    let mean = |p: &EdgeFieldParams<f32>| {
        render_pixels(p, cam, &pixels, spr).iter().map(|r| r.gray).sum::<f64>() / pixels.len() as f64
    };
    let (a, b) = (mean(&on), mean(&off));
    let note = format!(
        "view {view}, top edge {edge}, {} hidden pixels: lambda2=1 {a:.4} vs lambda2=0 {b:.4} (ratio {:.2})",
        pixels.len(),
        a / b
    );
    ensure(a >= 1.5 * b, note.clone())?;
    Ok(note)
}

// ---------------------------------------------------------------- 8

fn metric_identities() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cloud = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Vec3> {
        (0..n).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect()
    };

    let a = cloud(&mut rng, 500);
    let m = evaluate_default(&a, &a).unwrap();
    ensure(m.cd == 0.0, format!("identical CD {}", m.cd))?;
    ensure([m.precision, m.recall, m.f_score, m.iou] == [1.0; 4], "identical scores not 1")?;

    let mut queries = 0;
    for n in [1, 2, 3, 10, 100, 250, 500] {
        let pts = cloud(&mut rng, n);
        let tree = KdTree::build(&pts);
        for _ in 0..500 {
            let q = Vec3::new(rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5));
            ensure(tree.nearest(q) == brute_force_nearest(&pts, q), format!("nearest differs, n={n}"))?;
            queries += 1;
        }
        // Exact duplicates and tied distances.
        for &p in pts.iter().take(20) {
            ensure(tree.nearest(p) == brute_force_nearest(&pts, p), "nearest differs on a member")?;
        }
    }

    for case in 0..1000 {
        let (na, nb) = (rng.gen_range(1..60), rng.gen_range(1..60));
        let a = cloud(&mut rng, na);
        let b = cloud(&mut rng, nb);
        let tau = rng.gen_range(0.01..0.4);
        let ctx = |what: &str| format!("case {case}: {what}");
        ensure(chamfer_eval(&a, &b).unwrap() == chamfer_eval(&b, &a).unwrap(), ctx("asymmetric CD"))?;
        let m = prf_iou(&a, &b, tau).unwrap();
        for v in [m.precision, m.recall, m.f_score, m.iou] {
            ensure((0.0..=1.0).contains(&v), ctx("score out of range"))?;
        }
        let f = if m.precision + m.recall > 0.0 {
            2.0 * m.precision * m.recall / (m.precision + m.recall)
        } else {
            0.0
        };
        ensure(m.f_score == f, ctx("F is not the harmonic mean"))?;

        let mut grown = a.clone();
        grown.push(b[rng.gen_range(0..b.len())]);
        let g = prf_iou(&grown, &b, tau).unwrap();
        let matched = |m: &Metrics, n: usize| (m.precision * n as f64).round();
        ensure(g.recall >= m.recall, ctx("recall decreased"))?;
        ensure(matched(&g, grown.len()) >= matched(&m, a.len()), ctx("matched count decreased"))?;

        let s = 2f64.powi(rng.gen_range(-3..4));
        let sa: Vec<Vec3> = a.iter().map(|p| *p * s).collect();
        let sb: Vec<Vec3> = b.iter().map(|p| *p * s).collect();
        let ms = prf_iou(&sa, &sb, tau * s).unwrap();
        ensure((m.precision, m.recall, m.iou) == (ms.precision, ms.recall, ms.iou), ctx("scale changed scores"))?;
        let (c, cs) = (chamfer_eval(&a, &b).unwrap(), chamfer_eval(&sa, &sb).unwrap());
        ensure((cs - c * s).abs() <= 1e-12 * s, ctx("CD does not scale"))?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 30.0, format!("took {secs:.1}s"))?;
    Ok(format!("{queries} nearest queries match brute force; 1000 randomized cases hold; {secs:.1}s"))
}

// ---------------------------------------------------------------- 9

fn determinism(root: &Path) -> Check {
    let mut cfg = desk_config();
    for (k, v) in [
        ("views.count", "8"),
        ("views.width", "32"),
        ("views.height", "32"),
        ("train.batch_size", "256"),
        ("train.samples_per_ray", "16"),
        ("train.iterations", "300"),
        ("train.checkpoint_every", "100"),
        ("extract.resolution", "32"),
        ("extract.threshold", "0.5"),
    ] {
        cfg.set(k, v).unwrap();
    }
    let run = |name: &str| {
        let layout = Layout::new(root.join(name));
        pool(1)
            .install(|| pipeline::cmd_pipeline(&cfg, &layout, false, |_| {}))
            .map(|r| (layout, r))
            .map_err(|e| e.to_string())
    };
    let (a, ra) = run("det_a")?;
    let (b, rb) = run("det_b")?;
    ensure(ra.curves.is_some(), "no curves were fitted")?;
    let files = [
        a.checkpoint().strip_prefix(&a.root).unwrap().to_path_buf(),
        a.points().strip_prefix(&a.root).unwrap().to_path_buf(),
        a.curves().strip_prefix(&a.root).unwrap().to_path_buf(),
        PathBuf::from("eval/cloud_metrics.txt"),
        PathBuf::from("eval/cloud_metrics.csv"),
        PathBuf::from("eval/curve_metrics.txt"),
        PathBuf::from("eval/curve_metrics.csv"),
    ];
    for rel in &files {
        let x = fs::read(a.root.join(rel)).map_err(|e| format!("{}: {e}", rel.display()))?;
        let y = fs::read(b.root.join(rel)).map_err(|e| format!("{}: {e}", rel.display()))?;
        ensure(x == y, format!("{} differs between runs", rel.display()))?;
    }
    ensure(ra == rb, "reports differ")?;
    Ok(format!("{} artifacts byte-identical across two single-worker runs", files.len()))
}

// ----------------------------------------------------------------

fn run(n: usize, name: &str, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    match &outcome {
        Ok(note) => println!("PASS criterion {n} {name}: {note} [{secs:.1}s]"),
        Err(why) => println!("FAIL criterion {n} {name}: {why} [{secs:.1}s]"),
    }
    outcome.is_ok()
}

fn main() {
    let selected: Option<BTreeSet<usize>> = std::env::var("NEF_ACCEPT")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let want = |n: usize| selected.as_ref().is_none_or(|s| s.contains(&n));
    let tmp = tempfile::tempdir().expect("temp dir");
    let root = tmp.path();
    let mut ok = true;

    if want(1) {
        ok &= run(1, "gradient correctness", gradient_correctness);
    }
    if want(2) {
        ok &= run(2, "compositing invariants", compositing_invariants);
    }
    if want(3) {
        ok &= run(3, "density mapping", density_mapping);
    }
    if want(4) {
        ok &= run(4, "curve-fitting oracle", curve_fitting_oracle);
    }
    if want(8) {
        ok &= run(8, "metric identities", metric_identities);
    }
    if want(9) {
        ok &= run(9, "determinism", || determinism(root));
    }
    if want(5) || want(6) {
        let mut desk = None;
        let report = run(5, "end-to-end desk pipeline", || {
            let d = end_to_end(root);
            let report = d.report.clone();
            desk = Some(d);
            report
        });
        if want(5) {
            ok &= report;
        }
        if want(6) {
            ok &= run(6, "W-MSE anti-degeneration", || match &desk {
                Some(d) => wmse_vs_uniform(root, d),
                None => Err("desk run did not complete".into()),
            });
        }
    }
    if want(7) {
        ok &= run(7, "occlusion recovery", || occlusion_recovery(root));
    }
    if !ok {
        std::process::exit(1);
    }
}
