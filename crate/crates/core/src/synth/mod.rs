//! Procedural ground-truth scenes and multi-view edge maps.
//!
//! Scenes are curve networks lying on a closed occluder mesh. Edge maps are
//! rasterized analytically: each curve is sampled densely in image space,
//! samples hidden behind the occluder are dropped, and the rest are drawn as
//! anti-aliased disks.

mod dataset;
mod mesh;
mod raster;
mod scenes;

pub use dataset::{
    dataset_files, format_camera, generate_dataset, parse_camera, read_dataset,
    read_manifest_curves, read_pgm, view_stem, write_dataset, write_pgm, View, ViewDataset,
    ViewSetup, MANIFEST_FILE,
};
pub(crate) use dataset::write_file;
pub use mesh::{intersect_watertight, point_triangle_distance, TriangleMesh};
pub use raster::{
    degrade_edge_map, is_visible, render_edge_map, sample_curve_projected, EdgeMap,
    ProjectedSample, OCCLUSION_BIAS,
};
pub use scenes::{make_primitive_scene, quarter_arc, PrimitiveScene, SceneSpec, QUARTER_ARC_KAPPA};
