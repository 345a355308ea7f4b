use std::f64::consts::FRAC_PI_2;

use super::mesh::TriangleMesh;
use crate::error::{Error, Result};
use crate::geom::{CubicBezier, Vec3};

/// Control-point distance ratio for a quarter-circle cubic Bézier arc,
/// `4/3 (√2 − 1) ≈ 0.5523`.
pub const QUARTER_ARC_KAPPA: f64 = 0.552_284_749_830_793_6;

/// Segments per quarter arc when tessellating the cylinder mantle.
const ARC_TESSELLATION: usize = 128;

/// A procedural scene: ground-truth feature curves plus the occluder surface
/// they live on.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub name: String,
    pub curves: Vec<CubicBezier>,
    pub occluder: TriangleMesh,
}

/// Desk-scale primitive scenes. All lengths are in scene units; every scene
/// is centered at the origin and fits inside the unit cube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrimitiveScene {
    Cube { side: f64 },
    /// Right-triangle prism: legs `side` (x) and `height` (y), depth `side` (z).
    Wedge { side: f64, height: f64 },
    /// L-shaped prism with outer size `side` and arm `thickness`.
    LBracket { side: f64, thickness: f64 },
    /// Vertical (y-axis) cylinder; each rim is four Bézier quarter arcs.
    Cylinder { radius: f64, height: f64 },
    /// Box with a larger zero-thickness plate floating `gap` above it; the
    /// plate hides the box's top edges from high-elevation views.
    PlateOverBox {
        box_side: f64,
        box_height: f64,
        plate_side: f64,
        gap: f64,
    },
}

impl PrimitiveScene {
    pub fn kind_name(&self) -> &'static str {
        match self {
            PrimitiveScene::Cube { .. } => "cube",
            PrimitiveScene::Wedge { .. } => "wedge",
            PrimitiveScene::LBracket { .. } => "l_bracket",
            PrimitiveScene::Cylinder { .. } => "cylinder",
            PrimitiveScene::PlateOverBox { .. } => "plate_over_box",
        }
    }

    pub fn default_cube() -> Self {
        PrimitiveScene::Cube { side: 0.8 }
    }

    pub fn default_plate_over_box() -> Self {
        PrimitiveScene::PlateOverBox {
            box_side: 0.5,
            box_height: 0.4,
            plate_side: 0.9,
            gap: 0.2,
        }
    }
}

fn check_len(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be in (0, 1], got {v}")))
    }
}

/// Builds the curves and occluder mesh of a primitive scene.
pub fn make_primitive_scene(kind: &PrimitiveScene) -> Result<SceneSpec> {
    let (curves, occluder) = match *kind {
        PrimitiveScene::Cube { side } => {
            check_len("side", side)?;
            let h = side / 2.0;
            box_scene(Vec3::splat(-h), Vec3::splat(h))
        }
        PrimitiveScene::Wedge { side, height } => {
            check_len("side", side)?;
            check_len("height", height)?;
            let (s, h) = (side / 2.0, height / 2.0);
            prism(&[(-s, -h), (s, -h), (-s, h)], side)
        }
        PrimitiveScene::LBracket { side, thickness } => {
            check_len("side", side)?;
            if !(thickness > 0.0 && thickness < side) {
                return Err(Error::invalid("l_bracket thickness must be in (0, side)"));
            }
            let s = side / 2.0;
            let i = -s + thickness;
            prism(&[(-s, -s), (s, -s), (s, i), (i, i), (i, s), (-s, s)], side)
        }
        PrimitiveScene::Cylinder { radius, height } => {
            check_len("height", height)?;
            if !(radius > 0.0 && radius <= 0.5) {
                return Err(Error::invalid("cylinder radius must be in (0, 0.5]"));
            }
            cylinder(radius, height)
        }
        PrimitiveScene::PlateOverBox {
            box_side,
            box_height,
            plate_side,
            gap,
        } => {
            check_len("box_side", box_side)?;
            check_len("box_height", box_height)?;
            check_len("plate_side", plate_side)?;
            if !(gap > 0.0) || box_height + gap > 1.0 {
                return Err(Error::invalid("plate_over_box needs gap > 0 and box_height + gap <= 1"));
            }
            if plate_side <= box_side {
                return Err(Error::invalid("plate must be wider than the box"));
            }
            let y0 = -(box_height + gap) / 2.0;
            let b = box_side / 2.0;
            let (mut curves, mut mesh) = box_scene(
                Vec3::new(-b, y0, -b),
                Vec3::new(b, y0 + box_height, b),
            );
            let (plate_curves, plate_mesh) = plate(plate_side / 2.0, y0 + box_height + gap);
            curves.extend(plate_curves);
            mesh.append(&plate_mesh);
            (curves, mesh)
        }
    };
    Ok(SceneSpec {
        name: kind.kind_name().to_string(),
        curves,
        occluder,
    })
}

fn box_scene(lo: Vec3, hi: Vec3) -> (Vec<CubicBezier>, TriangleMesh) {
    let corner = |i: usize| {
        Vec3::new(
            if i & 1 == 0 { lo.x } else { hi.x },
            if i & 2 == 0 { lo.y } else { hi.y },
            if i & 4 == 0 { lo.z } else { hi.z },
        )
    };
    let mut mesh = TriangleMesh::new();
    let v: Vec<u32> = (0..8).map(|i| mesh.add_vertex(corner(i))).collect();
    // outward-facing quads
    for q in [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ] {
        mesh.add_quad(v[q[0]], v[q[1]], v[q[2]], v[q[3]]);
    }
    let mut curves = Vec::with_capacity(12);
    for i in 0..8usize {
        for bit in [1usize, 2, 4] {
            if i & bit == 0 {
                curves.push(CubicBezier::line(corner(i), corner(i | bit)));
            }
        }
    }
    (curves, mesh)
}

/// Extrudes a simple polygon in the xy-plane (listed counter-clockwise and
/// star-shaped with respect to its first vertex) along z by `depth`.
fn prism(profile: &[(f64, f64)], depth: f64) -> (Vec<CubicBezier>, TriangleMesh) {
    let n = profile.len();
    let z = depth / 2.0;
    let mut mesh = TriangleMesh::new();
    let front: Vec<u32> = profile
        .iter()
        .map(|&(x, y)| mesh.add_vertex(Vec3::new(x, y, z)))
        .collect();
    let back: Vec<u32> = profile
        .iter()
        .map(|&(x, y)| mesh.add_vertex(Vec3::new(x, y, -z)))
        .collect();
    for k in 1..n - 1 {
        mesh.add_triangle(front[0], front[k], front[k + 1]);
        mesh.add_triangle(back[0], back[k + 1], back[k]);
    }
    let mut curves = Vec::with_capacity(3 * n);
    for k in 0..n {
        let j = (k + 1) % n;
        mesh.add_quad(back[k], back[j], front[j], front[k]);
        let (f0, f1) = (mesh.vertices[front[k] as usize], mesh.vertices[front[j] as usize]);
        let (b0, b1) = (mesh.vertices[back[k] as usize], mesh.vertices[back[j] as usize]);
        curves.push(CubicBezier::line(f0, f1));
        curves.push(CubicBezier::line(b0, b1));
        curves.push(CubicBezier::line(f0, b0));
    }
    (curves, mesh)
}

/// Quarter arc `k` (0..4) of the horizontal circle of `radius` at height `y`.
pub fn quarter_arc(radius: f64, y: f64, k: usize) -> CubicBezier {
    let (t0, t1) = (k as f64 * FRAC_PI_2, (k + 1) as f64 * FRAC_PI_2);
    let at = |t: f64| Vec3::new(radius * t.cos(), y, radius * t.sin());
    let tangent = |t: f64| Vec3::new(-t.sin(), 0.0, t.cos());
    let h = QUARTER_ARC_KAPPA * radius;
    CubicBezier::new(
        at(t0),
        at(t0) + tangent(t0) * h,
        at(t1) - tangent(t1) * h,
        at(t1),
    )
}

fn cylinder(radius: f64, height: f64) -> (Vec<CubicBezier>, TriangleMesh) {
    let (yb, yt) = (-height / 2.0, height / 2.0);
    let mut curves = Vec::with_capacity(8);
    for y in [yb, yt] {
        curves.extend((0..4).map(|k| quarter_arc(radius, y, k)));
    }
    // Tessellate the rims from the Bézier arcs themselves so every curve
    // vertex lies exactly on the occluder.
    let ring = |y: f64| -> Vec<Vec3> {
        (0..4)
            .flat_map(|k| {
                let arc = quarter_arc(radius, y, k);
                (0..ARC_TESSELLATION).map(move |i| arc.eval(i as f64 / ARC_TESSELLATION as f64))
            })
            .collect()
    };
    let mut mesh = TriangleMesh::new();
    let bottom: Vec<u32> = ring(yb).into_iter().map(|p| mesh.add_vertex(p)).collect();
    let top: Vec<u32> = ring(yt).into_iter().map(|p| mesh.add_vertex(p)).collect();
    let cb = mesh.add_vertex(Vec3::new(0.0, yb, 0.0));
    let ct = mesh.add_vertex(Vec3::new(0.0, yt, 0.0));
    let n = bottom.len();
    for i in 0..n {
        let j = (i + 1) % n;
        mesh.add_quad(bottom[i], top[i], top[j], bottom[j]);
        mesh.add_triangle(cb, bottom[i], bottom[j]);
        mesh.add_triangle(ct, top[j], top[i]);
    }
    (curves, mesh)
}

/// Zero-thickness square plate at height `y`, modelled as two coincident,
/// oppositely oriented faces so the surface is closed.
fn plate(half: f64, y: f64) -> (Vec<CubicBezier>, TriangleMesh) {
    let corners = [
        Vec3::new(-half, y, -half),
        Vec3::new(half, y, -half),
        Vec3::new(half, y, half),
        Vec3::new(-half, y, half),
    ];
    let mut mesh = TriangleMesh::new();
    let v: Vec<u32> = corners.iter().map(|&c| mesh.add_vertex(c)).collect();
    mesh.add_quad(v[0], v[1], v[2], v[3]);
    // reversed winding split along the other diagonal
    mesh.add_quad(v[1], v[0], v[3], v[2]);
    let curves = (0..4)
        .map(|k| CubicBezier::line(corners[k], corners[(k + 1) % 4]))
        .collect();
    (curves, mesh)
}
