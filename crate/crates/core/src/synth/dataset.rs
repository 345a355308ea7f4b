use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::raster::{render_edge_map, EdgeMap};
use super::scenes::SceneSpec;
use crate::error::{Error, Result};
use crate::geom::{fibonacci_sphere, Camera, CubicBezier, Intrinsics, Mat3, Vec3};

/// One calibrated view and its edge map.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub camera: Camera,
    pub edge_map: EdgeMap,
}

/// Training input: calibrated cameras with edge maps, plus the ground-truth
/// curves they were rendered from.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewDataset {
    pub scene_name: String,
    pub gt_curves: Vec<CubicBezier>,
    pub views: Vec<View>,
}

impl ViewDataset {
    pub fn validate(&self) -> Result<()> {
        let first = self
            .views
            .first()
            .ok_or(Error::EmptyInput("dataset has no views"))?;
        let (w, h) = (first.edge_map.width, first.edge_map.height);
        for (i, v) in self.views.iter().enumerate() {
            if v.edge_map.width != w || v.edge_map.height != h {
                return Err(Error::ShapeMismatch(format!("view {i} has a different size")));
            }
            if v.camera.width() != w || v.camera.height() != h {
                return Err(Error::ShapeMismatch(format!(
                    "view {i}: camera and edge map sizes differ"
                )));
            }
        }
        Ok(())
    }

    pub fn image_size(&self) -> (u32, u32) {
        self.views
            .first()
            .map(|v| (v.edge_map.width, v.edge_map.height))
            .unwrap_or((0, 0))
    }

    pub fn pixel_count(&self) -> usize {
        self.views.iter().map(|v| v.edge_map.len()).sum()
    }
}

/// Camera rig for synthetic capture: Fibonacci-distributed cameras facing
/// the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewSetup {
    pub n_views: usize,
    pub width: u32,
    pub height: u32,
    /// Focal length as a multiple of the image width.
    pub focal_scale: f64,
    pub radius: f64,
    pub stroke_px: f64,
}

impl Default for ViewSetup {
    fn default() -> Self {
        Self {
            n_views: 50,
            width: 800,
            height: 800,
            focal_scale: 1.25,
            radius: 2.0,
            stroke_px: 1.0,
        }
    }
}

impl ViewSetup {
    pub fn validate(&self) -> Result<()> {
        if self.n_views == 0 || self.width == 0 || self.height == 0 {
            return Err(Error::invalid("view count and image size must be positive"));
        }
        if !(self.focal_scale > 0.0 && self.focal_scale.is_finite()) {
            return Err(Error::invalid("focal scale must be positive"));
        }
        if !(self.radius > 1.0 && self.radius.is_finite()) {
            return Err(Error::invalid("camera radius must exceed 1 to enclose the scene"));
        }
        if !(self.stroke_px >= 0.5 && self.stroke_px.is_finite()) {
            return Err(Error::invalid(format!("stroke radius {} below 0.5 px", self.stroke_px)));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::centered(self.width, self.height, self.focal_scale * self.width as f64)
    }

    /// Cameras on a sphere of `radius` around the origin, near/far bounds
    /// `radius ∓ 1` enclosing the unit cube.
    pub fn cameras(&self) -> Result<Vec<Camera>> {
        if self.radius <= 1.0 {
            return Err(Error::invalid("camera radius must exceed 1 to enclose the scene"));
        }
        let k = self.intrinsics();
        fibonacci_sphere(self.n_views, self.radius, Vec3::ZERO)?
            .into_iter()
            .map(|p| {
                Camera::look_at(
                    p,
                    Vec3::ZERO,
                    Vec3::new(0.0, 1.0, 0.0),
                    k,
                    self.radius - 1.0,
                    self.radius + 1.0,
                )
            })
            .collect()
    }
}

/// Renders every view of `scene`; views are independent and rendered in
/// parallel.
pub fn generate_dataset(scene: &SceneSpec, setup: &ViewSetup) -> Result<ViewDataset> {
    let cameras = setup.cameras()?;
    let views = cameras
        .into_par_iter()
        .map(|camera| {
            render_edge_map(scene, &camera, setup.stroke_px).map(|edge_map| View { camera, edge_map })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ViewDataset {
        scene_name: scene.name.clone(),
        gt_curves: scene.curves.clone(),
        views,
    })
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    name: String,
    views: usize,
    width: u32,
    height: u32,
    curves: Vec<[f64; 12]>,
}

pub const MANIFEST_FILE: &str = "scene.json";

pub fn view_stem(i: usize) -> String {
    format!("view_{i:03}")
}

/// Writes the manifest, `view_%03d.pgm` edge maps and `view_%03d.cam`
/// cameras into `dir`, creating it if needed.
pub fn write_dataset(ds: &ViewDataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (width, height) = ds.image_size();
    let manifest = Manifest {
        name: ds.scene_name.clone(),
        views: ds.views.len(),
        width,
        height,
        curves: ds.gt_curves.iter().map(|c| c.to_array()).collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&dir.join(MANIFEST_FILE), format!("{text}\n").as_bytes())?;
    for (i, view) in ds.views.iter().enumerate() {
        let stem = view_stem(i);
        write_pgm(&dir.join(format!("{stem}.pgm")), &view.edge_map)?;
        write_file(
            &dir.join(format!("{stem}.cam")),
            format_camera(&view.camera).as_bytes(),
        )?;
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<ViewDataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::parse(&manifest_path, e.to_string()))?;
    if manifest.views == 0 {
        return Err(Error::parse(&manifest_path, "manifest lists zero views"));
    }
    let mut views = Vec::with_capacity(manifest.views);
    for i in 0..manifest.views {
        let stem = view_stem(i);
        let cam_path = dir.join(format!("{stem}.cam"));
        let cam_text = fs::read_to_string(&cam_path).map_err(|e| Error::io(&cam_path, e))?;
        let camera = parse_camera(&cam_text).map_err(|m| Error::parse(&cam_path, m))?;
        let edge_map = read_pgm(&dir.join(format!("{stem}.pgm")))?;
        if (edge_map.width, edge_map.height) != (manifest.width, manifest.height) {
            return Err(Error::parse(
                dir.join(format!("{stem}.pgm")),
                "image size disagrees with manifest",
            ));
        }
        views.push(View { camera, edge_map });
    }
    let ds = ViewDataset {
        scene_name: manifest.name,
        gt_curves: manifest.curves.into_iter().map(CubicBezier::from_array).collect(),
        views,
    };
    ds.validate()?;
    Ok(ds)
}

/// Reads only the ground-truth curves listed in a dataset manifest.
pub fn read_manifest_curves(path: &Path) -> Result<Vec<CubicBezier>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    Ok(manifest.curves.into_iter().map(CubicBezier::from_array).collect())
}

/// Writes through a sibling temporary file and renames it into place, so a
/// failed write never leaves a truncated `path`.
pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    let result = fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(bytes))
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Camera as whitespace-separated decimal text:
/// `width height fx fy cx cy`, 9 row-major rotation entries (world from
/// camera), the 3 camera-center coordinates, then `t_near t_far`.
pub fn format_camera(c: &Camera) -> String {
    let k = &c.intrinsics;
    let r = &c.rotation.rows;
    let mut s = format!("{} {} {} {} {} {}\n", k.width, k.height, k.fx, k.fy, k.cx, k.cy);
    for row in r {
        s.push_str(&format!("{} {} {}\n", row[0], row[1], row[2]));
    }
    s.push_str(&format!("{} {} {}\n", c.center.x, c.center.y, c.center.z));
    s.push_str(&format!("{} {}\n", c.t_near, c.t_far));
    s
}

pub fn parse_camera(text: &str) -> std::result::Result<Camera, String> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() != 20 {
        return Err(format!("expected 20 tokens, found {}", tokens.len()));
    }
    let int = |i: usize| -> std::result::Result<u32, String> {
        tokens[i]
            .parse()
            .map_err(|_| format!("token {i} ({:?}) is not an integer", tokens[i]))
    };
    let real = |i: usize| -> std::result::Result<f64, String> {
        tokens[i]
            .parse()
            .map_err(|_| format!("token {i} ({:?}) is not a number", tokens[i]))
    };
    let intrinsics = Intrinsics {
        width: int(0)?,
        height: int(1)?,
        fx: real(2)?,
        fy: real(3)?,
        cx: real(4)?,
        cy: real(5)?,
    };
    let mut rows = [[0.0; 3]; 3];
    for (i, row) in rows.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = real(6 + 3 * i + j)?;
        }
    }
    let center = Vec3::new(real(15)?, real(16)?, real(17)?);
    Camera::new(intrinsics, Mat3 { rows }, center, real(18)?, real(19)?).map_err(|e| e.to_string())
}

/// Binary PGM (P5, maxval 255); values are rounded to the nearest k/255.
pub fn write_pgm(path: &Path, map: &EdgeMap) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", map.width, map.height).into_bytes();
    bytes.extend(map.values.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    write_file(path, &bytes)
}

pub fn read_pgm(path: &Path) -> Result<EdgeMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|m| Error::parse(path, m))
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<EdgeMap, String> {
    // Header: magic, width, height, maxval, separated by whitespace; a
    // single whitespace byte precedes the raster.
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(format!("unsupported magic {:?}, expected P5", fields[0]));
    }
    let parse = |s: &str| s.parse::<u32>().map_err(|_| format!("bad header field {s:?}"));
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    pos += 1;
    let n = w as usize * h as usize;
    if bytes.len() < pos + n {
        return Err(format!("raster truncated: need {n} bytes"));
    }
    let values = bytes[pos..pos + n].iter().map(|&b| b as f32 / 255.0).collect();
    Ok(EdgeMap {
        width: w,
        height: h,
        values,
    })
}

/// Paths of all files a dataset directory contains for `n` views.
pub fn dataset_files(dir: &Path, n: usize) -> Vec<PathBuf> {
    let mut files = vec![dir.join(MANIFEST_FILE)];
    for i in 0..n {
        let stem = view_stem(i);
        files.push(dir.join(format!("{stem}.pgm")));
        files.push(dir.join(format!("{stem}.cam")));
    }
    files
}
