use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::extract::normalize_unit;
use crate::synth::{make_primitive_scene, PrimitiveScene};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn v(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

fn on_segment(a: Vec3, b: Vec3, n: usize) -> Vec<Vec3> {
    (0..n).map(|i| a.lerp(b, i as f64 / (n - 1) as f64)).collect()
}

/// Cylinder rims plus the four seam lines joining the arc endpoints.
fn rounded_profile() -> Vec<CubicBezier> {
    let mut c = make_primitive_scene(&PrimitiveScene::Cylinder {
        radius: 0.3,
        height: 0.6,
    })
    .unwrap()
    .curves;
    for k in 0..4 {
        let (a, b) = (c[k].p1, c[4 + k].p1);
        c.push(CubicBezier::line(a, b));
    }
    c
}

#[test]
fn chamfer_examples() {
    let p = [v(0.0, 0.0, 0.0), v(0.5, 0.1, 0.0)];
    assert_eq!(chamfer_loss(&p, &p, 5.0).unwrap().0, 0.0);
    let (a, b) = ([v(0.0, 0.0, 0.0)], [v(1.0, 0.0, 0.0)]);
    assert_eq!(chamfer_loss(&a, &b, 1.0).unwrap().0, 2.0);
    assert_eq!(chamfer_loss(&a, &b, 5.0).unwrap().0, 6.0);
    assert!(chamfer_loss(&[], &b, 1.0).is_err());
    assert!(chamfer_loss(&a, &[], 1.0).is_err());
}

#[test]
fn chamfer_gradient_matches_finite_differences_on_control_points() {
    let mut r = rng(7);
    let curve = CubicBezier::new(v(0.1, 0.2, 0.3), v(0.4, 0.8, 0.2), v(0.7, 0.1, 0.5), v(0.9, 0.6, 0.4));
    let targets: Vec<Vec3> = (0..150)
        .map(|_| curve.eval(r.gen()) + v(r.gen_range(-0.05..0.05), r.gen_range(-0.05..0.05), r.gen_range(-0.05..0.05)))
        .collect();
    let template = sample_and_dilate(&curve, 20, 60, 0.01, &mut r).unwrap();
    let positions = |c: &CubicBezier| template.iter().map(|s| s.position(c)).collect::<Vec<_>>();
    let tree = crate::spatial::KdTree::build(&targets);
    let pos = positions(&curve);
    let assign = Assignment::compute(&pos, &tree).unwrap();
    let (_, g) = chamfer_loss(&pos, &targets, 5.0).unwrap();
    let analytic = chamfer::control_point_grad(&template, &g);
    let h = 1e-7;
    let mut checked = 0;
    for k in 0..4 {
        for axis in 0..3 {
            let shifted = |s: f64| {
                let mut arr = curve.to_array();
                arr[3 * k + axis] += s;
                CubicBezier::from_array(arr)
            };
            let (cp, cm) = (shifted(h), shifted(-h));
            // skip coordinates whose stencil changes a nearest-neighbour assignment
            if Assignment::compute(&positions(&cp), &tree).unwrap() != assign
                || Assignment::compute(&positions(&cm), &tree).unwrap() != assign
            {
                continue;
            }
            let f = |c: &CubicBezier| chamfer_loss(&positions(c), &targets, 5.0).unwrap().0;
            let fd = (f(&cp) - f(&cm)) / (2.0 * h);
            let an = analytic[k][axis];
            assert!((fd - an).abs() <= 1e-3 * an.abs().max(1e-6), "cp {k} axis {axis}: {fd} vs {an}");
            checked += 1;
        }
    }
    assert!(checked >= 8, "only {checked} smooth coordinates");
}

#[test]
fn dilation_examples() {
    let c = CubicBezier::new(v(0.0, 0.0, 0.0), v(1.0, 1.0, 0.0), v(2.0, -1.0, 0.0), v(3.0, 0.0, 1.0));
    let s = sample_and_dilate(&c, 2, 2, 0.01, &mut rng(0)).unwrap();
    assert_eq!(s.iter().map(|s| s.point).collect::<Vec<_>>(), vec![c.p1, c.p4]);

    let s = sample_and_dilate(&c, 10, 50, 0.0, &mut rng(0)).unwrap();
    for (k, x) in s.iter().enumerate() {
        assert_eq!(x.point, s[k % 10].point);
        assert_eq!(x.basis_weights, s[k % 10].basis_weights);
    }
    assert!(sample_and_dilate(&c, 1, 5, 0.01, &mut rng(0)).is_err());
    assert!(sample_and_dilate(&c, 5, 4, 0.01, &mut rng(0)).is_err());
    assert!(sample_and_dilate(&c, 5, 9, -1.0, &mut rng(0)).is_err());
}

#[test]
fn dilation_offsets_follow_the_3d_normal_norm() {
    // E|N(0, σ²I₃)| = σ·√(8/π)
    let sigma = 0.01;
    let c = CubicBezier::line(v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0));
    let s = sample_and_dilate(&c, 100, 600, sigma, &mut rng(3)).unwrap();
    let offsets: Vec<f64> = s[100..].iter().map(|x| x.noise_offset.norm()).collect();
    assert_eq!(offsets.len(), 500);
    let mean = offsets.iter().sum::<f64>() / offsets.len() as f64;
    let expected = sigma * (8.0 / std::f64::consts::PI).sqrt();
    assert!((mean / expected - 1.0).abs() < 0.2, "{mean} vs {expected}");
    for x in &s[100..] {
        assert!((x.position(&c) - x.point).norm() < 1e-15);
    }
}

#[test]
fn single_line_on_perfect_data() {
    let cfg = FitConfig::default();
    let (a, b) = (v(0.1, 0.2, 0.3), v(0.8, 0.5, 0.6));
    let pts = on_segment(a, b, 300);
    let (seg, inl) = fit_single_line(&pts, &cfg, &mut rng(1)).unwrap();
    assert_eq!(inl.len(), pts.len());
    let ends_close = |x: Vec3, y: Vec3| x.distance(y) <= cfg.delete_radius;
    assert!(
        (ends_close(seg.a, a) && ends_close(seg.b, b)) || (ends_close(seg.a, b) && ends_close(seg.b, a)),
        "{seg:?}"
    );
    assert!(fit_single_line(&pts[..1], &cfg, &mut rng(1)).is_err());
    assert!(fit_single_line(&[a; 10], &cfg, &mut rng(1)).is_err());
}

#[test]
fn parallel_segments_give_inliers_of_one_only() {
    let cfg = FitConfig::default();
    let mut pts = on_segment(v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), 400);
    pts.extend(on_segment(v(0.0, 0.1, 0.0), v(1.0, 0.1, 0.0), 400));
    let (_, inl) = fit_single_line(&pts, &cfg, &mut rng(2)).unwrap();
    assert!(!inl.is_empty());
    let first = inl[0] < 400;
    assert!(inl.iter().all(|&i| (i < 400) == first));
}

#[test]
fn line_with_outliers_keeps_inlier_recall() {
    let cfg = FitConfig::default();
    let mut r = rng(11);
    let (a, b) = (v(0.0, 0.5, 0.5), v(1.0, 0.5, 0.5));
    let mut pts: Vec<Vec3> = (0..1000).map(|_| a.lerp(b, r.gen())).collect();
    pts.extend((0..50).map(|_| v(r.gen(), r.gen(), r.gen())));
    // oracle inliers: points within the radius of the generating segment
    let oracle: Vec<usize> = (0..pts.len())
        .filter(|&i| point_segment_distance(pts[i], a, b) <= cfg.delete_radius)
        .collect();
    let (_, inl) = fit_single_line(&pts, &cfg, &mut r).unwrap();
    let hit = oracle.iter().filter(|i| inl.contains(i)).count();
    assert!(hit as f64 / oracle.len() as f64 >= 0.95, "{hit}/{}", oracle.len());
}

#[test]
fn coarse_fit_recovers_the_cube_wireframe() {
    let scene = make_primitive_scene(&PrimitiveScene::default_cube()).unwrap();
    let raw: Vec<Vec3> = scene
        .curves
        .iter()
        .flat_map(|c| on_segment(c.p1, c.p4, 200))
        .collect();
    let cloud = normalize_unit(&PointCloud::new(raw)).unwrap();
    let norm = cloud.normalization.unwrap();
    let cfg = FitConfig::desk();
    let fit = coarse_fit(&cloud.points, &cfg, &mut rng(0)).unwrap();
    assert_eq!(fit.lines.len(), 12);
    assert!(fit.leftover < cfg.stop_remaining);
    assert!(!fit.stalled);
    for line in &fit.lines {
        // Hausdorff distance to the closest ground-truth edge
        let best = scene
            .curves
            .iter()
            .map(|c| {
                let (ga, gb) = (norm.apply(c.p1), norm.apply(c.p4));
                let fwd = on_segment(line.a, line.b, 50)
                    .into_iter()
                    .map(|p| point_segment_distance(p, ga, gb))
                    .fold(0.0, f64::max);
                let bwd = on_segment(ga, gb, 50)
                    .into_iter()
                    .map(|p| line.distance_to(p))
                    .fold(0.0, f64::max);
                fwd.max(bwd)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(best < 0.01, "line {line:?} is {best} from every edge");
    }
}

#[test]
fn coarse_fit_single_segment_and_bounds() {
    let cfg = FitConfig::default();
    let pts = on_segment(v(0.0, 0.0, 0.0), v(1.0, 1.0, 0.0), 100);
    let fit = coarse_fit(&pts, &cfg, &mut rng(5)).unwrap();
    assert_eq!(fit.lines.len(), 1);
    assert!(fit.leftover < cfg.stop_remaining);
    assert!(coarse_fit(&pts[..10], &cfg, &mut rng(5)).is_err());
}

#[test]
fn coarse_fit_stall_returns_recorded_lines() {
    // a dense segment plus sparse scattered points no line can explain
    let cfg = FitConfig::default();
    let mut r = rng(9);
    let mut pts = on_segment(v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), 200);
    pts.extend((0..40).map(|i| {
        let k = i as f64;
        v((k * 0.618).fract(), 0.3 + (k * 0.414).fract() * 0.7, (k * 0.732).fract() + r.gen_range(0.0..1e-3))
    }));
    let fit = coarse_fit(&pts, &cfg, &mut r).unwrap();
    assert!(!fit.lines.is_empty());
    assert!(fit.iterations <= pts.len() / 3 + 1);
    if fit.stalled {
        assert!(fit.leftover >= 3);
    } else {
        assert!(fit.leftover < cfg.stop_remaining);
    }
}

#[test]
fn lines_to_beziers_examples() {
    let l = LineSegment::new(v(0.0, 0.0, 0.0), v(3.0, 0.0, 0.0)).unwrap();
    let c = lines_to_beziers(&[l]).unwrap();
    assert_eq!(c.len(), 1);
    assert_eq!(c[0].control_points().map(|p| p.x), [0.0, 1.0, 2.0, 3.0]);
    assert!(lines_to_beziers(&[]).is_err());
    assert!(LineSegment::new(v(1.0, 1.0, 1.0), v(1.0, 1.0, 1.0 + 1e-7)).is_err());
}

#[test]
fn endpoint_loss_examples() {
    let d = 0.1;
    let far = [
        CubicBezier::line(v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0)),
        CubicBezier::line(v(0.0, 1.0, 0.0), v(1.0, 1.0, 0.0)),
    ];
    assert_eq!(endpoint_loss(&far, d).unwrap().0, 0.0);

    let shared = [
        CubicBezier::line(v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0)),
        CubicBezier::line(v(1.0, 0.0, 0.0), v(1.0, 1.0, 0.0)),
    ];
    assert_eq!(endpoint_pairs(&shared, d), vec![(1, 2)]);
    assert_eq!(endpoint_loss(&shared, d).unwrap().0, 0.0);

    let half = [
        CubicBezier::line(v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0)),
        CubicBezier::line(v(1.0 + d / 2.0, 0.0, 0.0), v(2.0, 1.0, 0.0)),
    ];
    let (loss, _) = endpoint_loss(&half, d).unwrap();
    assert!((loss - d * d / 4.0).abs() < 1e-15);

    // a short curve's own endpoints never attract each other
    let short = [CubicBezier::line(v(0.0, 0.0, 0.0), v(0.01, 0.0, 0.0))];
    assert!(endpoint_pairs(&short, d).is_empty());
    assert!(endpoint_loss(&[], d).is_err());
}

#[test]
fn endpoint_gradient_matches_finite_differences() {
    let curves = [
        CubicBezier::line(v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0)),
        CubicBezier::line(v(1.03, 0.02, -0.01), v(1.0, 1.0, 0.0)),
        CubicBezier::line(v(0.98, -0.04, 0.03), v(1.0, 0.0, 1.0)),
    ];
    let d = 0.1;
    let (_, g) = endpoint_loss(&curves, d).unwrap();
    let h = 1e-6;
    for ci in 0..3 {
        for (end, idx) in [(0, 0usize), (1, 9usize)] {
            for axis in 0..3 {
                let f = |s: f64| {
                    let mut c = curves;
                    let mut arr = c[ci].to_array();
                    arr[idx + axis] += s;
                    c[ci] = CubicBezier::from_array(arr);
                    endpoint_with_pairs(&c, &endpoint_pairs(&curves, d))
                };
                let fd = (f(h) - f(-h)) / (2.0 * h);
                assert!((fd - g[ci][end][axis]).abs() < 1e-6, "curve {ci} end {end} axis {axis}");
            }
        }
    }
}

fn endpoint_with_pairs(c: &[CubicBezier], pairs: &[(usize, usize)]) -> f64 {
    let e = |i: usize| if i.is_multiple_of(2) { c[i / 2].p1 } else { c[i / 2].p4 };
    pairs.iter().map(|&(a, b)| e(a).distance_squared(e(b))).sum()
}

#[test]
fn fine_fit_on_exact_targets_does_not_get_worse() {
    let curves = lines_to_beziers(&[
        LineSegment::new(v(0.1, 0.1, 0.1), v(0.9, 0.1, 0.1)).unwrap(),
        LineSegment::new(v(0.9, 0.1, 0.1), v(0.9, 0.9, 0.1)).unwrap(),
    ])
    .unwrap();
    let targets = sample_curves_total(&curves, 800).unwrap();
    let cfg = FitConfig {
        fine_steps: 100,
        ..FitConfig::default()
    };
    let (out, rep) = fine_fit(&curves, &targets, &cfg, &mut rng(4)).unwrap();
    assert_eq!(out.len(), curves.len());
    assert!(rep.final_chamfer <= rep.initial_chamfer);
    // dilation floor: 2σ² ≈ mean squared offset in the curve-to-target direction
    let floor = 3.0 * cfg.dilation_sigma * cfg.dilation_sigma;
    assert!(rep.initial_chamfer < floor, "{rep:?}");
}

#[test]
fn fine_fit_bends_lines_onto_arcs() {
    let cfg = FitConfig::desk();
    let raw = sample_curves_total(&rounded_profile(), 5000).unwrap();
    let cloud = normalize_unit(&PointCloud::new(raw)).unwrap();
    let mut r = rng(0);
    let coarse = coarse_fit(&cloud.points, &cfg, &mut r).unwrap();
    let init = lines_to_beziers(&coarse.lines).unwrap();
    let sym_cd = |c: &[CubicBezier]| {
        crate::evalmetrics::chamfer_eval(&sample_curves(c, 1.0 / 512.0).unwrap(), &cloud.points).unwrap()
    };
    let (out, rep) = fine_fit(&init, &cloud.points, &cfg, &mut r).unwrap();
    assert!(rep.final_chamfer <= rep.initial_chamfer);
    assert!(out.len() == init.len());
    let (before, after) = (sym_cd(&init), sym_cd(&out));
    assert!(after < 0.5 * before, "{before} -> {after}");

    // endpoint pairs that start within d end no farther apart
    let pairs = endpoint_pairs(&init, cfg.endpoint_d());
    assert!(!pairs.is_empty());
    let e = |c: &[CubicBezier], i: usize| if i.is_multiple_of(2) { c[i / 2].p1 } else { c[i / 2].p4 };
    let shrunk = pairs
        .iter()
        .filter(|&&(a, b)| e(&out, a).distance(e(&out, b)) <= e(&init, a).distance(e(&init, b)) + 1e-3)
        .count();
    assert_eq!(shrunk, pairs.len());
}

#[test]
fn fine_fit_rejects_empty_inputs() {
    let c = [CubicBezier::line(v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0))];
    let cfg = FitConfig::default();
    assert!(fine_fit(&c, &[], &cfg, &mut rng(0)).is_err());
    assert!(fine_fit(&[], &[v(0.0, 0.0, 0.0)], &cfg, &mut rng(0)).is_err());
}

#[test]
fn pipeline_is_deterministic_and_rejects_empty_input() {
    let scene = make_primitive_scene(&PrimitiveScene::default_cube()).unwrap();
    let pts = sample_curves_total(&scene.curves, 1500).unwrap();
    let cfg = FitConfig {
        fine_steps: 100,
        ..FitConfig::desk()
    };
    let a = fit_pipeline(&pts, &cfg).unwrap();
    let b = fit_pipeline(&pts, &cfg).unwrap();
    assert_eq!(curves_string(&a.curves), curves_string(&b.curves));
    assert!(fit_pipeline(&[], &cfg).is_err());
}

#[test]
fn curve_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let curves = rounded_profile();
    let path = dir.path().join("curves.txt");
    write_curves(&path, &curves).unwrap();
    assert_eq!(read_curves(&path).unwrap(), curves);
    let ply = dir.path().join("curves.ply");
    write_curve_samples(&ply, &curves, 0.01).unwrap();
    assert!(crate::extract::read_ply(&ply).unwrap().len() > 12 * 20);
    for bad in ["", "curves 2\n1 2 3 4 5 6 7 8 9 10 11 12\n", "curves 1\n1 2 3\n", "lines 0\n", "curves 1\n1 2 3 4 5 6 7 8 9 10 11 inf\n"] {
        assert!(parse_curves(bad).is_err(), "{bad:?}");
    }
    assert_eq!(parse_curves("# note\ncurves 0\n").unwrap(), vec![]);
}

#[test]
fn sample_counts_are_exact_and_spacing_bounded() {
    let curves = rounded_profile();
    assert_eq!(sample_curves_total(&curves, 5000).unwrap().len(), 5000);
    assert_eq!(sample_curves_total(&curves, 7).unwrap().len(), 7);
    let s = sample_curves(&curves[..1], 0.005).unwrap();
    let max_gap = s.windows(2).map(|w| w[0].distance(w[1])).fold(0.0, f64::max);
    assert!(max_gap <= 0.005, "{max_gap}");
    assert!(sample_curves(&curves, 0.0).is_err());
}

#[test]
fn config_validation() {
    assert!(FitConfig::default().validate().is_ok());
    assert!((FitConfig::default().endpoint_d() - 4.0 / 256.0).abs() < 1e-15);
    for bad in [
        FitConfig { gamma_coarse: 0.5, ..FitConfig::default() },
        FitConfig { delete_radius: 0.0, ..FitConfig::default() },
        FitConfig { dilated_samples: 50, ..FitConfig::default() },
        FitConfig { mask_refresh: 0, ..FitConfig::default() },
        FitConfig { learning_rate: f64::NAN, ..FitConfig::default() },
    ] {
        assert!(bad.validate().is_err());
    }
}

proptest! {
    #[test]
    fn line_beziers_have_linear_precision(
        a in prop::array::uniform3(-10.0f64..10.0),
        b in prop::array::uniform3(-10.0f64..10.0),
        t in 0.0f64..=1.0,
    ) {
        let (a, b) = (Vec3::from_array(a), Vec3::from_array(b));
        prop_assume!(a.distance(b) > 1e-3);
        let c = lines_to_beziers(&[LineSegment::new(a, b).unwrap()]).unwrap()[0];
        let expect = a + (b - a) * t;
        prop_assert!(c.point(t).unwrap().distance(expect) <= 1e-12 * (1.0 + expect.norm()));
    }

    #[test]
    fn chamfer_is_nonnegative_and_gamma_weights_forward_term(
        p in prop::collection::vec(prop::array::uniform3(0.0f64..1.0), 1..30),
        q in prop::collection::vec(prop::array::uniform3(0.0f64..1.0), 1..30),
    ) {
        let p: Vec<Vec3> = p.into_iter().map(Vec3::from_array).collect();
        let q: Vec<Vec3> = q.into_iter().map(Vec3::from_array).collect();
        let l1 = chamfer_loss(&p, &q, 1.0).unwrap().0;
        let l5 = chamfer_loss(&p, &q, 5.0).unwrap().0;
        let back = chamfer_loss(&q, &p, 1.0).unwrap().0;
        prop_assert!(l1 >= 0.0 && l5 >= l1);
        prop_assert!((l1 - back).abs() <= 1e-12);
    }
}
