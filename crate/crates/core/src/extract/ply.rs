use std::fmt::Write as _;
use std::path::Path;

use super::{Normalization, PointCloud};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::synth::write_file;

const NORMALIZATION_COMMENT: &str = "nef_normalization";

/// Writes an ASCII PLY with `x y z` double properties. A normalization
/// record, if any, is kept in a header comment.
pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    write_file(path, ply_string(cloud).as_bytes())
}

pub(crate) fn ply_string(cloud: &PointCloud) -> String {
    let mut s = String::with_capacity(64 + cloud.len() * 48);
    s.push_str("ply\nformat ascii 1.0\n");
    if let Some(n) = &cloud.normalization {
        let _ = writeln!(
            s,
            "comment {NORMALIZATION_COMMENT} {} {} {} {}",
            n.scale, n.offset.x, n.offset.y, n.offset.z
        );
    }
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
    for p in &cloud.points {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    s
}

struct Element {
    name: String,
    count: usize,
    props: Vec<String>,
}

/// Reads the vertex positions of an ASCII PLY. Extra vertex properties and
/// other elements are skipped.
pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&text).map_err(|m| Error::parse(path, m))
}

/// Parses ASCII PLY text; see [`read_ply`].
pub fn parse_ply(text: &str) -> std::result::Result<PointCloud, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err("missing 'ply' magic".into());
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut normalization = None;
    let mut format_ok = false;
    loop {
        let line = lines.next().ok_or("header has no end_header")?.trim();
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => format_ok = true,
            ["format", other, ..] => return Err(format!("unsupported PLY format '{other}'")),
            ["comment", NORMALIZATION_COMMENT, rest @ ..] => {
                let v: Vec<f64> = rest
                    .iter()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| format!("bad normalization comment: {e}"))?;
                if v.len() != 4 || !(v[0] > 0.0) {
                    return Err("bad normalization comment".into());
                }
                normalization = Some(Normalization {
                    scale: v[0],
                    offset: Vec3::new(v[1], v[2], v[3]),
                });
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| format!("bad element count '{count}'"))?,
                props: Vec::new(),
            }),
            ["property", "list", ..] => elements
                .last_mut()
                .ok_or("property before element")?
                .props
                .push("list".into()),
            ["property", _ty, name] => elements
                .last_mut()
                .ok_or("property before element")?
                .props
                .push(name.to_string()),
            _ => return Err(format!("unrecognized header line '{line}'")),
        }
    }
    if !format_ok {
        return Err("missing format line".into());
    }
    let mut points = None;
    for el in &elements {
        if el.name != "vertex" {
            for _ in 0..el.count {
                lines.next().ok_or_else(|| format!("truncated '{}' element", el.name))?;
            }
            continue;
        }
        let col = |axis: &str| {
            el.props
                .iter()
                .position(|p| p == axis)
                .ok_or_else(|| format!("vertex element lacks property '{axis}'"))
        };
        let (ix, iy, iz) = (col("x")?, col("y")?, col("z")?);
        let mut pts = Vec::with_capacity(el.count);
        for n in 0..el.count {
            let line = lines.next().ok_or_else(|| format!("expected {} vertices, found {n}", el.count))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| format!("vertex {n}: {e}"))?;
            if vals.len() != el.props.len() {
                return Err(format!("vertex {n}: expected {} values, got {}", el.props.len(), vals.len()));
            }
            let p = Vec3::new(vals[ix], vals[iy], vals[iz]);
            if !p.is_finite() {
                return Err(format!("vertex {n} is not finite"));
            }
            pts.push(p);
        }
        points = Some(pts);
    }
    Ok(PointCloud {
        points: points.ok_or("no vertex element")?,
        normalization,
    })
}
