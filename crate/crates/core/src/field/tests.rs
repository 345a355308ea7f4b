use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geom::Vec3;

// 40-digit decimal evaluations of 1 / (1 + e^-x).
const LOGISTIC_2: f64 = 0.880_797_077_977_882_4;
const LOGISTIC_M8: f64 = 3.353_501_304_664_781e-4;

fn tiny_config() -> FieldConfig {
    FieldConfig {
        backbone_depth: 2,
        backbone_width: 8,
        skip_layer: 1,
        gray_head_depth: 2,
        gray_head_width: 8,
        pe_position_l: 3,
        pe_direction_l: 2,
        ..FieldConfig::default()
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if let Some(u) = v.try_normalize() {
            return u;
        }
    }
}

fn random_point(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))
}

#[test]
fn init_is_seeded_and_finite() {
    let cfg = FieldConfig::desk();
    let a: EdgeFieldParams<f32> = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let b: EdgeFieldParams<f32> = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(a, b);
    assert!(a.is_finite());
    assert!((a.alpha() - 30.0).abs() < 1e-9);
    let c: EdgeFieldParams<f32> = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn invalid_config_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for cfg in [
        FieldConfig { backbone_width: 4, ..tiny_config() },
        FieldConfig { backbone_depth: 0, ..tiny_config() },
        FieldConfig { beta: 1.0, ..tiny_config() },
        FieldConfig { g: 0.0, ..tiny_config() },
    ] {
        assert!(init_params::<f64, _>(&cfg, &mut rng).is_err());
    }
}

#[test]
fn field_eval_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params: EdgeFieldParams<f64> = init_params(&FieldConfig::desk(), &mut rng).unwrap();
    for _ in 0..50 {
        let x = random_point(&mut rng);
        let (d1, d2) = (random_unit(&mut rng), random_unit(&mut rng));
        let a = field_eval(&params, x, d1).unwrap();
        let b = field_eval(&params, x, d1).unwrap();
        assert_eq!(a, b);
        assert!(a.edge_density > 0.0 && a.edge_density < 1.0);
        assert!(a.gray > 0.0 && a.gray < 1.0);
        let c = field_eval(&params, x, d2).unwrap();
        assert_eq!(a.edge_density, c.edge_density);
        assert_eq!(a.feature, c.feature);
    }
    assert!(field_eval(&params, Vec3::ZERO, Vec3::new(0.0, 0.0, 2.0)).is_err());
}

#[test]
fn density_map_anchors() {
    let alpha = 30.0;
    assert_eq!(density_map(0.8, alpha, 0.8, 10.0), alpha / 2.0);
    assert!((density_map(1.0, alpha, 0.8, 10.0) / alpha - LOGISTIC_2).abs() < 1e-12);
    assert!((density_map(0.0, alpha, 0.8, 10.0) / alpha - LOGISTIC_M8).abs() < 1e-12);
}

#[test]
fn density_map_grad_matches_difference() {
    for e in [0.0, 0.3, 0.79, 0.8, 0.95, 1.0] {
        let h = 1e-6;
        let fd = (density_map(e + h, 7.0, 0.8, 10.0) - density_map(e - h, 7.0, 0.8, 10.0)) / (2.0 * h);
        assert!((fd - density_map_grad(e, 7.0, 0.8, 10.0)).abs() < 1e-6);
    }
}

fn random_upstream(n: usize, rng: &mut ChaCha8Rng) -> Upstream {
    let mut v = || (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    Upstream {
        edge: v(),
        gray: v(),
        sigma: v(),
    }
}

fn weighted_sum(params: &EdgeFieldParams<f64>, xs: &[Vec3], ds: &[Vec3], up: &Upstream) -> f64 {
    let (out, _) = field_eval_batch_with_grad(params, xs, ds, up).unwrap();
    out.iter()
        .enumerate()
        .map(|(i, (e, c, s))| up.edge[i] * e + up.gray[i] * c + up.sigma[i] * s)
        .sum()
}

fn gradient_check(cfg: FieldConfig, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params: EdgeFieldParams<f64> = init_params(&cfg, &mut rng).unwrap();
    params.log_alpha = 1.0;
    let n = 6;
    let xs: Vec<Vec3> = (0..n).map(|_| random_point(&mut rng)).collect();
    let ds: Vec<Vec3> = (0..n).map(|_| random_unit(&mut rng)).collect();
    let up = random_upstream(n, &mut rng);
    let (_, grads) = field_eval_batch_with_grad(&params, &xs, &ds, &up).unwrap();
    let total = params.network_len() + 1;
    let mut coords: Vec<usize> = (0..100).map(|_| rng.gen_range(0..total)).collect();
    coords.push(total - 1);
    for i in coords {
        let h = 1e-4;
        let v = params.get_flat(i);
        params.set_flat(i, v + h);
        let plus = weighted_sum(&params, &xs, &ds, &up);
        params.set_flat(i, v - h);
        let minus = weighted_sum(&params, &xs, &ds, &up);
        params.set_flat(i, v);
        let fd = (plus - minus) / (2.0 * h);
        let an = grads.get_flat(i);
        let err = (fd - an).abs();
        assert!(
            err <= 1e-6 || err / fd.abs().max(an.abs()) < 1e-3,
            "seed {seed} coordinate {i}: analytic {an}, numeric {fd}"
        );
    }
}

#[test]
fn gradients_match_finite_differences() {
    gradient_check(tiny_config(), 1);
    gradient_check(FieldConfig { skip_layer: 0, ..tiny_config() }, 2);
    gradient_check(
        FieldConfig {
            backbone_depth: 5,
            skip_layer: 3,
            gray_head_depth: 1,
            ..tiny_config()
        },
        // seed 3 puts a ReLU pre-activation 6e-5 from its kink, inside the
        // finite-difference stencil
        5,
    );
}

#[test]
fn zero_upstream_gives_zero_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params: EdgeFieldParams<f64> = init_params(&tiny_config(), &mut rng).unwrap();
    let xs = [random_point(&mut rng), random_point(&mut rng)];
    let ds = [random_unit(&mut rng), random_unit(&mut rng)];
    let up = Upstream {
        edge: vec![0.0; 2],
        gray: vec![0.0; 2],
        sigma: vec![0.0; 2],
    };
    let (_, g) = field_eval_batch_with_grad(&params, &xs, &ds, &up).unwrap();
    assert_eq!(g, params.zeros_like());
}

#[test]
fn batch_gradient_is_additive() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params: EdgeFieldParams<f64> = init_params(&tiny_config(), &mut rng).unwrap();
    let xs = [random_point(&mut rng), random_point(&mut rng)];
    let ds = [random_unit(&mut rng), random_unit(&mut rng)];
    let up = random_upstream(2, &mut rng);
    let (_, both) = field_eval_batch_with_grad(&params, &xs, &ds, &up).unwrap();
    let mut sum = params.zeros_like();
    for i in 0..2 {
        let single = Upstream {
            edge: vec![up.edge[i]],
            gray: vec![up.gray[i]],
            sigma: vec![up.sigma[i]],
        };
        let (_, g) = field_eval_batch_with_grad(&params, &xs[i..=i], &ds[i..=i], &single).unwrap();
        sum.add_assign(&g);
    }
    let n = params.network_len() + 1;
    for i in 0..n {
        assert!((both.get_flat(i) - sum.get_flat(i)).abs() < 1e-10, "index {i}");
    }
}

#[test]
fn batch_shape_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params: EdgeFieldParams<f64> = init_params(&tiny_config(), &mut rng).unwrap();
    let up = random_upstream(2, &mut rng);
    let x = [Vec3::ZERO];
    let d = [Vec3::new(0.0, 0.0, 1.0)];
    assert!(matches!(
        field_eval_batch_with_grad(&params, &x, &d, &up),
        Err(crate::Error::ShapeMismatch(_))
    ));
    assert!(field_eval_batch_with_grad(&params, &[], &[], &Upstream::default()).is_err());
}

#[test]
fn f32_and_f64_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let p64: EdgeFieldParams<f64> = init_params(&FieldConfig::desk(), &mut rng).unwrap();
    let p32: EdgeFieldParams<f32> = p64.cast();
    let x = random_point(&mut rng);
    let d = random_unit(&mut rng);
    let a = field_eval(&p64, x, d).unwrap();
    let b = field_eval(&p32, x, d).unwrap();
    assert!((a.edge_density - b.edge_density).abs() < 1e-5);
    assert!((a.gray - b.gray).abs() < 1e-5);
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("field.ckpt");
    let params: EdgeFieldParams<f32> =
        init_params(&FieldConfig::desk(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    save_checkpoint(&params, &path).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), params);

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] = b'X';
    std::fs::write(&path, &bytes).unwrap();
    let msg = load_checkpoint(&path).unwrap_err().to_string();
    assert!(msg.contains("magic"), "{msg}");

    let good = checkpoint_bytes(&params);
    assert!(checkpoint_from_bytes(&good[..good.len() - 3]).is_err());
}

proptest! {
    #[test]
    fn density_map_monotone_and_bounded(
        e1 in 0.0f64..=1.0, e2 in 0.0f64..=1.0, a1 in 0.01f64..1e4, a2 in 0.01f64..1e4,
    ) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        prop_assert!(density_map(lo, a1, 0.8, 10.0) <= density_map(hi, a1, 0.8, 10.0));
        let (al, ah) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        prop_assert!(density_map(e1, al, 0.8, 10.0) <= density_map(e1, ah, 0.8, 10.0));
        let s = density_map(e1, a1, 0.8, 10.0);
        prop_assert!(s > 0.0 && s < a1);
    }
}


